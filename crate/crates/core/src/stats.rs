//! χ² consistency of detection counts with quantum predictions at efficiency η.
//!
//! ```text
//! χ₁² = Σ_ij,xy (n_ij^xy − η² n P_xy(a_i, b_j))² / σ²     m₁ = 4·na·nb − 1
//! χ₂² = Σ_i,x (n_i^x − η n P_x(a_i))² / σ² + (same for B)  m₂ = 2·na + 2·nb − 1
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{LhvError, Result};
use crate::models::SettingsGrid;
use crate::montecarlo::CountsTable;
use crate::quantum::{self, Channel, EntangledState, Setting, Side};

pub const DEFAULT_ALPHA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", content = "value")]
pub enum SigmaMode {
    /// σ² equal to the expected count of each cell.
    Poisson,
    /// One σ for every cell.
    Constant(f64),
}

/// How the expected number of trials behind each cell is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountBasis {
    /// `n/(na·nb)` trials per setting pair, `n/na` (`n/nb`) per single setting.
    #[default]
    Uniform,
    /// The trial counts actually recorded per setting pair.
    Conditioned,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareOptions {
    pub sigma: SigmaMode,
    pub basis: CountBasis,
}

impl Default for ChiSquareOptions {
    fn default() -> Self {
        ChiSquareOptions { sigma: SigmaMode::Poisson, basis: CountBasis::Uniform }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareReport {
    pub chi1: f64,
    pub m1: usize,
    pub chi2: f64,
    pub m2: usize,
    pub p1: f64,
    pub p2: f64,
    pub sigma_used: SigmaMode,
    pub basis: CountBasis,
    pub eta_used: f64,
    pub n_used: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Accept,
    Reject,
}

impl ChiSquareReport {
    pub fn verdict(&self, alpha: f64) -> Verdict {
        if self.p1 > alpha && self.p2 > alpha {
            Verdict::Accept
        } else {
            Verdict::Reject
        }
    }

    /// `ACCEPT (p1=…, p2=…)` or `REJECT (…)`.
    pub fn verdict_line(&self, alpha: f64) -> String {
        format!("{} (p1={}, p2={})", self.verdict(alpha), fmt_p(self.p1), fmt_p(self.p2))
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Accept => "ACCEPT",
            Verdict::Reject => "REJECT",
        })
    }
}

fn fmt_p(p: f64) -> String {
    if p < 1e-3 {
        format!("{p:.4e}")
    } else {
        format!("{p:.4}")
    }
}

fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, &c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized upper incomplete gamma `Q(a, x)`.
fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let lead = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        // series for P(a, x)
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..100_000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        (1.0 - sum * lead.exp()).clamp(0.0, 1.0)
    } else {
        // Lentz continued fraction for Q(a, x)
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..100_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (lead.exp() * h).clamp(0.0, 1.0)
    }
}

/// Upper-tail probability of the χ² distribution with `dof` degrees of freedom.
pub fn chi_tail(x: f64, dof: usize) -> f64 {
    assert!(dof >= 1, "χ² needs at least one degree of freedom");
    if x.is_nan() {
        return f64::NAN;
    }
    if x == f64::INFINITY {
        return 0.0;
    }
    gamma_q(0.5 * dof as f64, 0.5 * x.max(0.0))
}

fn check_schedule(counts: &CountsTable, schedule: &SettingsGrid) -> Result<()> {
    if counts.na != schedule.na() || counts.nb != schedule.nb() {
        return Err(LhvError::domain(format!(
            "counts table is {}x{} but the schedule is {}x{}",
            counts.na,
            counts.nb,
            schedule.na(),
            schedule.nb()
        )));
    }
    Ok(())
}

struct Accumulator {
    sigma: SigmaMode,
    sum: f64,
}

impl Accumulator {
    fn add(&mut self, observed: u64, expected: f64) {
        let var = match self.sigma {
            SigmaMode::Poisson => expected,
            SigmaMode::Constant(s) => s * s,
        };
        let d = observed as f64 - expected;
        if var > 0.0 {
            self.sum += d * d / var;
        } else if d != 0.0 {
            self.sum = f64::INFINITY;
        }
    }
}

pub fn chi_square(
    counts: &CountsTable,
    state: EntangledState,
    schedule: &SettingsGrid,
    eta: f64,
    options: ChiSquareOptions,
) -> Result<ChiSquareReport> {
    check_schedule(counts, schedule)?;
    if let SigmaMode::Constant(s) = options.sigma {
        if !(s > 0.0 && s.is_finite()) {
            return Err(LhvError::domain(format!("sigma must be positive, got {s}")));
        }
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(LhvError::domain(format!("efficiency must lie in (0, 1], got {eta}")));
    }
    let (na, nb) = (counts.na, counts.nb);
    let n = counts.n as f64;
    let pair_trials = |i: usize, j: usize| match options.basis {
        CountBasis::Uniform => n / (na * nb) as f64,
        CountBasis::Conditioned => counts.trials[i][j] as f64,
    };
    let a_trials = |i: usize| match options.basis {
        CountBasis::Uniform => n / na as f64,
        CountBasis::Conditioned => counts.trials[i].iter().sum::<u64>() as f64,
    };
    let b_trials = |j: usize| match options.basis {
        CountBasis::Uniform => n / nb as f64,
        CountBasis::Conditioned => counts.trials.iter().map(|r| r[j]).sum::<u64>() as f64,
    };

    let mut c1 = Accumulator { sigma: options.sigma, sum: 0.0 };
    for (i, &a) in schedule.a_list.iter().enumerate() {
        for (j, &b) in schedule.b_list.iter().enumerate() {
            for x in Channel::BOTH {
                for y in Channel::BOTH {
                    let p = quantum::jdp(state, Setting(a), Setting(b), x, y);
                    c1.add(counts.joint[i][j][x.index()][y.index()], eta * eta * pair_trials(i, j) * p);
                }
            }
        }
    }
    let mut c2 = Accumulator { sigma: options.sigma, sum: 0.0 };
    for (i, &a) in schedule.a_list.iter().enumerate() {
        for x in Channel::BOTH {
            c2.add(counts.singles_a[i][x.index()], eta * a_trials(i) * quantum::sdp(state, Setting(a), x, Side::A));
        }
    }
    for (j, &b) in schedule.b_list.iter().enumerate() {
        for y in Channel::BOTH {
            c2.add(counts.singles_b[j][y.index()], eta * b_trials(j) * quantum::sdp(state, Setting(b), y, Side::B));
        }
    }
    let m1 = 4 * na * nb - 1;
    let m2 = 2 * na + 2 * nb - 1;
    Ok(ChiSquareReport {
        chi1: c1.sum,
        m1,
        chi2: c2.sum,
        m2,
        p1: chi_tail(c1.sum, m1),
        p2: chi_tail(c2.sum, m2),
        sigma_used: options.sigma,
        basis: options.basis,
        eta_used: eta,
        n_used: counts.n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoSignalingReport {
    pub chi_a: f64,
    pub dof_a: usize,
    pub p_a: f64,
    pub chi_b: f64,
    pub dof_b: usize,
    pub p_b: f64,
}

impl NoSignalingReport {
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_a > alpha && self.p_b > alpha
    }
}

/// Pearson contingency statistic of a strata × outcome table; empty rows and columns are dropped.
fn contingency(rows: &[[u64; 3]]) -> (f64, usize) {
    let rows: Vec<&[u64; 3]> = rows.iter().filter(|r| r.iter().sum::<u64>() > 0).collect();
    let total: u64 = rows.iter().map(|r| r.iter().sum::<u64>()).sum();
    let cols: Vec<usize> = (0..3).filter(|&c| rows.iter().any(|r| r[c] > 0)).collect();
    if rows.len() < 2 || cols.len() < 2 {
        return (0.0, 0);
    }
    let mut chi = 0.0;
    for r in &rows {
        let rs: u64 = r.iter().sum();
        for &c in &cols {
            let cs: u64 = rows.iter().map(|q| q[c]).sum();
            let e = rs as f64 * cs as f64 / total as f64;
            let d = r[c] as f64 - e;
            chi += d * d / e;
        }
    }
    (chi, (rows.len() - 1) * (cols.len() - 1))
}

/// Tests that each side's outcome distribution does not depend on the remote setting.
pub fn no_signaling(counts: &CountsTable) -> NoSignalingReport {
    let outcome_row = |singles: [u64; 2], trials: u64| [singles[0], singles[1], trials - singles[0] - singles[1]];
    let (mut chi_a, mut dof_a) = (0.0, 0);
    for i in 0..counts.na {
        let rows: Vec<[u64; 3]> =
            (0..counts.nb).map(|j| outcome_row(counts.pair_singles_a[i][j], counts.trials[i][j])).collect();
        let (c, d) = contingency(&rows);
        chi_a += c;
        dof_a += d;
    }
    let (mut chi_b, mut dof_b) = (0.0, 0);
    for j in 0..counts.nb {
        let rows: Vec<[u64; 3]> =
            (0..counts.na).map(|i| outcome_row(counts.pair_singles_b[i][j], counts.trials[i][j])).collect();
        let (c, d) = contingency(&rows);
        chi_b += c;
        dof_b += d;
    }
    let tail = |c: f64, d: usize| if d == 0 { 1.0 } else { chi_tail(c, d) };
    NoSignalingReport { chi_a, dof_a, p_a: tail(chi_a, dof_a), chi_b, dof_b, p_b: tail(chi_b, dof_b) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn tail_examples() {
        assert_eq!(chi_tail(0.0, 7), 1.0);
        assert!((chi_tail(100.0, 100) - 0.481_192_3).abs() < 1e-6);
        assert_eq!(chi_tail(f64::INFINITY, 3), 0.0);
        assert!(chi_tail(1e5, 10) < 1e-300 || chi_tail(1e5, 10) == 0.0);
        // dof 2 has the closed form exp(−x/2)
        for x in [0.1, 1.0, 3.0, 10.0, 50.0] {
            assert!((chi_tail(x, 2) - (-0.5 * x).exp()).abs() <= 1e-14 * (-0.5 * x).exp().max(1e-300) + 1e-300);
        }
    }

    proptest! {
        #[test]
        fn tail_matches_reference(x in 0.0f64..400.0, dof in 1usize..300) {
            let q = chi_tail(x, dof);
            let r = 1.0 - ChiSquared::new(dof as f64).unwrap().cdf(x);
            prop_assert!((q - r).abs() < 1e-9, "x={} dof={} ours={} ref={}", x, dof, q, r);
            prop_assert!((0.0..=1.0).contains(&q));
        }

        #[test]
        fn tail_is_monotone(x in 0.0f64..200.0, dx in 0.0f64..20.0, dof in 1usize..100) {
            prop_assert!(chi_tail(x + dx, dof) <= chi_tail(x, dof) + 1e-15);
        }
    }

    fn exact_counts(grid: &SettingsGrid, eta: f64, per_pair: u64) -> CountsTable {
        let (na, nb) = (grid.na(), grid.nb());
        let mut c = CountsTable::new(na, nb);
        c.n = per_pair * (na * nb) as u64;
        let s = EntangledState::Maximal;
        for i in 0..na {
            for j in 0..nb {
                c.trials[i][j] = per_pair;
                for x in Channel::BOTH {
                    for y in Channel::BOTH {
                        let p = quantum::jdp(s, Setting(grid.a_list[i]), Setting(grid.b_list[j]), x, y);
                        c.joint[i][j][x.index()][y.index()] = (eta * eta * per_pair as f64 * p).round() as u64;
                    }
                }
            }
        }
        for i in 0..na {
            for x in Channel::BOTH {
                let p = quantum::sdp(s, Setting(grid.a_list[i]), x, Side::A);
                c.singles_a[i][x.index()] = (eta * per_pair as f64 * nb as f64 * p).round() as u64;
            }
        }
        for j in 0..nb {
            for y in Channel::BOTH {
                let p = quantum::sdp(s, Setting(grid.b_list[j]), y, Side::B);
                c.singles_b[j][y.index()] = (eta * per_pair as f64 * na as f64 * p).round() as u64;
            }
        }
        c
    }

    #[test]
    fn exact_expectations_give_zero() {
        // settings with rational JDPs so that expected counts are integers
        let g = SettingsGrid::new(vec![0.0, std::f64::consts::FRAC_PI_4], vec![0.0, std::f64::consts::FRAC_PI_2]).unwrap();
        let c = exact_counts(&g, 1.0, 1000);
        for opts in [
            ChiSquareOptions::default(),
            ChiSquareOptions { sigma: SigmaMode::Constant(3.0), basis: CountBasis::Conditioned },
        ] {
            let r = chi_square(&c, EntangledState::Maximal, &g, 1.0, opts).unwrap();
            assert!(r.chi1 < 1e-9 && r.chi2 < 1e-9, "{r:?}");
            assert_eq!((r.m1, r.m2), (15, 7));
            assert_eq!(r.verdict(DEFAULT_ALPHA), Verdict::Accept);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = SettingsGrid::chsh();
        let c = CountsTable::new(2, 2);
        let bad = ChiSquareOptions { sigma: SigmaMode::Constant(0.0), ..Default::default() };
        assert!(chi_square(&c, EntangledState::Maximal, &g, 0.8, bad).is_err());
        let g3 = SettingsGrid::new(vec![0.0, 0.1, 0.2], vec![0.0, 0.1]).unwrap();
        assert!(chi_square(&c, EntangledState::Maximal, &g3, 0.8, ChiSquareOptions::default()).is_err());
    }

    #[test]
    fn verdict_formatting() {
        let r = ChiSquareReport {
            chi1: 1.0,
            m1: 15,
            chi2: 50.0,
            m2: 7,
            p1: 0.75,
            p2: 2.5e-8,
            sigma_used: SigmaMode::Poisson,
            basis: CountBasis::Uniform,
            eta_used: 0.8,
            n_used: 10,
        };
        assert_eq!(r.verdict_line(0.01), "REJECT (p1=0.7500, p2=2.5000e-8)");
    }

    #[test]
    fn contingency_of_identical_rows_is_zero() {
        let (c, d) = contingency(&[[10, 20, 30], [20, 40, 60]]);
        assert!(c.abs() < 1e-12);
        assert_eq!(d, 2);
        assert_eq!(contingency(&[[5, 0, 0], [7, 0, 0]]), (0.0, 0));
    }
}
