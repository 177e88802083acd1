//! Dense two-phase tableau simplex for small linear programs.
//!
//! Solves `min cᵀx` subject to `A_eq x = b_eq`, `A_ub x ≤ b_ub`, `x ≥ 0`.
//! Pivoting is deterministic: Dantzig pricing, switching to Bland's rule after a
//! run of degenerate pivots.

use crate::error::{LhvError, Result};

const EPS: f64 = 1e-11;
const DEGENERATE_RUN: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub cost: Vec<f64>,
    pub eq_rows: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
    pub ub_rows: Vec<Vec<f64>>,
    pub ub_rhs: Vec<f64>,
}

impl LinearProgram {
    pub fn new(cost: Vec<f64>) -> Self {
        LinearProgram { cost, ..Default::default() }
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) {
        debug_assert_eq!(row.len(), self.num_vars());
        self.eq_rows.push(row);
        self.eq_rhs.push(rhs);
    }

    pub fn add_le(&mut self, row: Vec<f64>, rhs: f64) {
        debug_assert_eq!(row.len(), self.num_vars());
        self.ub_rows.push(row);
        self.ub_rhs.push(rhs);
    }

    /// Largest constraint violation of `x` (bounds included).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let dot = |row: &[f64]| row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let mut worst = x.iter().fold(0.0_f64, |w, &v| w.max(-v));
        for (row, &rhs) in self.eq_rows.iter().zip(&self.eq_rhs) {
            worst = worst.max((dot(row) - rhs).abs());
        }
        for (row, &rhs) in self.ub_rows.iter().zip(&self.ub_rhs) {
            worst = worst.max(dot(row) - rhs);
        }
        worst
    }

    pub fn solve(&self) -> Result<LpSolution> {
        Tableau::build(self).run(self)
    }
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    n_struct: usize,
    n_total: usize,
    first_artificial: usize,
    pivots: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Tableau {
        let n = lp.num_vars();
        let n_ub = lp.ub_rows.len();
        // slack columns for every ≤ row, artificial columns where no slack can start basic
        let mut needs_art = Vec::new();
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for (row, &b) in lp.eq_rows.iter().zip(&lp.eq_rhs) {
            let sign = if b < 0.0 { -1.0 } else { 1.0 };
            let mut r: Vec<f64> = row.iter().map(|v| v * sign).collect();
            r.resize(n + n_ub, 0.0);
            rows.push(r);
            rhs.push(b * sign);
            needs_art.push(true);
        }
        for (k, (row, &b)) in lp.ub_rows.iter().zip(&lp.ub_rhs).enumerate() {
            let sign = if b < 0.0 { -1.0 } else { 1.0 };
            let mut r: Vec<f64> = row.iter().map(|v| v * sign).collect();
            r.resize(n + n_ub, 0.0);
            r[n + k] = sign;
            rows.push(r);
            rhs.push(b * sign);
            needs_art.push(sign < 0.0);
        }
        let first_artificial = n + n_ub;
        let n_art = needs_art.iter().filter(|&&v| v).count();
        let n_total = first_artificial + n_art;
        let mut basis = Vec::with_capacity(rows.len());
        let mut next_art = first_artificial;
        for (i, r) in rows.iter_mut().enumerate() {
            r.resize(n_total, 0.0);
            if needs_art[i] {
                r[next_art] = 1.0;
                basis.push(next_art);
                next_art += 1;
            } else {
                basis.push(n + (i - lp.eq_rows.len()));
            }
        }
        Tableau { rows, rhs, basis, n_struct: n, n_total, first_artificial, pivots: 0 }
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.rows[row][col];
        let inv = 1.0 / p;
        for v in self.rows[row].iter_mut() {
            *v *= inv;
        }
        self.rhs[row] *= inv;
        self.rows[row][col] = 1.0;
        let pivot_row = self.rows[row].clone();
        let pivot_rhs = self.rhs[row];
        for i in 0..self.rows.len() {
            if i == row {
                continue;
            }
            let f = self.rows[i][col];
            if f == 0.0 {
                continue;
            }
            for (v, &pv) in self.rows[i].iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.rows[i][col] = 0.0;
            self.rhs[i] -= f * pivot_rhs;
            if self.rhs[i].abs() < EPS * 1e-3 {
                self.rhs[i] = 0.0;
            }
        }
        self.basis[row] = col;
        self.pivots += 1;
    }

    /// Minimize `cost` over columns `< active`. Returns false if unbounded.
    fn optimize(&mut self, cost: &[f64], active: usize) -> Result<bool> {
        let mut degenerate = 0usize;
        let limit = 50_000 + 200 * (self.rows.len() + active);
        loop {
            if self.pivots > limit {
                return Err(LhvError::Numerical("simplex iteration limit reached".into()));
            }
            // reduced costs d_j = c_j - c_Bᵀ B⁻¹ A_j, read straight from the tableau
            let mut entering = None;
            let mut best = -EPS;
            let bland = degenerate >= DEGENERATE_RUN;
            for j in 0..active {
                if self.basis.contains(&j) {
                    continue;
                }
                let mut d = cost[j];
                for (i, &bj) in self.basis.iter().enumerate() {
                    let cb = if bj < cost.len() { cost[bj] } else { 0.0 };
                    if cb != 0.0 {
                        d -= cb * self.rows[i][j];
                    }
                }
                if d < best {
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(col) = entering else { return Ok(true) };
            let mut leave = None;
            let mut ratio = f64::INFINITY;
            for i in 0..self.rows.len() {
                let a = self.rows[i][col];
                if a > EPS {
                    let t = self.rhs[i] / a;
                    let better = match leave {
                        None => true,
                        Some(l) => {
                            t < ratio - EPS || (t <= ratio + EPS && self.basis[i] < self.basis[l])
                        }
                    };
                    if better {
                        ratio = t;
                        leave = Some(i);
                    }
                }
            }
            let Some(row) = leave else { return Ok(false) };
            if ratio.abs() <= EPS {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(row, col);
        }
    }

    fn run(mut self, lp: &LinearProgram) -> Result<LpSolution> {
        let n = self.n_struct;
        if self.first_artificial < self.n_total {
            let mut phase1 = vec![0.0; self.n_total];
            for v in phase1.iter_mut().skip(self.first_artificial) {
                *v = 1.0;
            }
            self.optimize(&phase1, self.n_total)?;
            let infeas: f64 = self
                .basis
                .iter()
                .zip(&self.rhs)
                .filter(|(&b, _)| b >= self.first_artificial)
                .map(|(_, &v)| v)
                .sum();
            let scale = 1.0 + lp.eq_rhs.iter().chain(&lp.ub_rhs).fold(0.0_f64, |m, v| m.max(v.abs()));
            if infeas > 1e-9 * scale {
                return Ok(LpSolution {
                    status: LpStatus::Infeasible,
                    x: vec![0.0; n],
                    objective: f64::NAN,
                    pivots: self.pivots,
                });
            }
            // drive remaining artificials out; rows where that is impossible are redundant
            let mut i = 0;
            while i < self.rows.len() {
                if self.basis[i] >= self.first_artificial {
                    let col = (0..self.first_artificial)
                        .filter(|j| !self.basis.contains(j))
                        .max_by(|&p, &q| {
                            self.rows[i][p].abs().total_cmp(&self.rows[i][q].abs()).then(q.cmp(&p))
                        })
                        .filter(|&j| self.rows[i][j].abs() > 1e-9);
                    match col {
                        Some(j) => self.pivot(i, j),
                        None => {
                            self.rows.remove(i);
                            self.rhs.remove(i);
                            self.basis.remove(i);
                            continue;
                        }
                    }
                }
                i += 1;
            }
        }
        let mut cost = lp.cost.clone();
        cost.resize(self.first_artificial, 0.0);
        let bounded = self.optimize(&cost, self.first_artificial)?;
        if !bounded {
            return Ok(LpSolution {
                status: LpStatus::Unbounded,
                x: vec![0.0; n],
                objective: f64::NEG_INFINITY,
                pivots: self.pivots,
            });
        }
        let mut x = vec![0.0; n];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < n {
                x[b] = self.rhs[i].max(0.0);
            }
        }
        let objective = lp.cost.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(LpSolution { status: LpStatus::Optimal, x, objective, pivots: self.pivots })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y s.t. x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), value 36
        let mut lp = LinearProgram::new(vec![-3.0, -5.0]);
        lp.add_le(vec![1.0, 0.0], 4.0);
        lp.add_le(vec![0.0, 2.0], 12.0);
        lp.add_le(vec![3.0, 2.0], 18.0);
        let s = lp.solve().unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective + 36.0).abs() < 1e-12);
        assert!((s.x[0] - 2.0).abs() < 1e-12 && (s.x[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn equalities_and_redundant_rows() {
        // min x + 2y + 3z s.t. x + y + z = 1, 2x + 2y + 2z = 2, y - z = 0
        let mut lp = LinearProgram::new(vec![1.0, 2.0, 3.0]);
        lp.add_eq(vec![1.0, 1.0, 1.0], 1.0);
        lp.add_eq(vec![2.0, 2.0, 2.0], 2.0);
        lp.add_eq(vec![0.0, 1.0, -1.0], 0.0);
        let s = lp.solve().unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 1.0).abs() < 1e-12);
        assert!(lp.max_violation(&s.x) < 1e-12);
    }

    #[test]
    fn negative_rhs_and_ge_rows() {
        // min x + y s.t. x + y ≥ 2 (as -x - y ≤ -2), x - y = 0.5
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.add_le(vec![-1.0, -1.0], -2.0);
        lp.add_eq(vec![1.0, -1.0], 0.5);
        let s = lp.solve().unwrap();
        assert!((s.objective - 2.0).abs() < 1e-12);
        assert!((s.x[0] - 1.25).abs() < 1e-12);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add_eq(vec![1.0], -1.0);
        assert_eq!(lp.solve().unwrap().status, LpStatus::Infeasible);
        let mut lp = LinearProgram::new(vec![-1.0, 0.0]);
        lp.add_le(vec![-1.0, 1.0], 1.0);
        assert_eq!(lp.solve().unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Beale's cycling example under Dantzig pricing
        let mut lp = LinearProgram::new(vec![-0.75, 150.0, -0.02, 6.0]);
        lp.add_le(vec![0.25, -60.0, -0.04, 9.0], 0.0);
        lp.add_le(vec![0.5, -90.0, -0.02, 3.0], 0.0);
        lp.add_le(vec![0.0, 0.0, 1.0, 0.0], 1.0);
        let s = lp.solve().unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective + 0.05).abs() < 1e-9);
    }

    #[test]
    fn deterministic() {
        let mut lp = LinearProgram::new(vec![1.0, 1.0, 1.0, 1.0]);
        lp.add_eq(vec![1.0, 1.0, 0.0, 0.0], 1.0);
        lp.add_eq(vec![0.0, 0.0, 1.0, 1.0], 1.0);
        let a = lp.solve().unwrap();
        let b = lp.solve().unwrap();
        assert_eq!(a.x, b.x);
    }
}
