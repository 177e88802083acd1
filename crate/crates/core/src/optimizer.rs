//! Setting-space searches for the lowest LHV critical efficiency of finite schedules,
//! and r-sweeps of every efficiency curve.
//!
//! The minimal area is invariant under `a → a + π/2` and `b → b + π/2` (channels
//! relabel) and under the reflection `(a, b) → (−a, −b)`, so grids are laid out over
//! `[0, π/2)` and reflected duplicates are skipped.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_8, PI};
use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LhvError, Result};
use crate::inequalities::ch_critical;
use crate::models::{self, minimal_area, SettingsGrid};
use crate::quantum::{circular_distance, wrap, EntangledState};
use crate::refine::{coordinate_descent, golden_min};

/// Unconstrained spot checks may beat the constrained search by at most this much.
pub const GUARD_TOLERANCE: f64 = 0.005;
const REFINE_TOL: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardCheck {
    pub step: f64,
    pub eta: f64,
    pub settings: SettingsGrid,
    /// Constrained optimum minus unconstrained spot-check optimum.
    pub gap: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub r: f64,
    pub settings: SettingsGrid,
    pub eta_lhv: f64,
    #[serde(rename = "S")]
    pub s: f64,
    pub evaluations: usize,
    pub coarse_eta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<GuardCheck>,
    /// For 3x3 searches: whether both lists sit within one coarse step of {0, π/8, 3π/8}.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at_special_angles: Option<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Memoized `η₂ = 2/(S+1)` of the minimal finite model.
struct Objective {
    state: EntangledState,
    memo: Mutex<HashMap<Vec<i64>, f64>>,
    evals: AtomicUsize,
}

impl Objective {
    fn new(r: f64) -> Result<Objective> {
        Ok(Objective {
            state: EntangledState::non_maximal(r)?,
            memo: Mutex::new(HashMap::new()),
            evals: AtomicUsize::new(0),
        })
    }

    fn key(a: &[f64], b: &[f64]) -> Vec<i64> {
        let q = |v: &[f64]| {
            let mut k: Vec<i64> = v.iter().map(|&x| (wrap(x, PI) * 1e7).round() as i64).collect();
            k.sort_unstable();
            k
        };
        let mut k = q(a);
        k.push(i64::MIN);
        k.extend(q(b));
        k
    }

    /// Efficiency, or `+∞` for lists that collapse modulo π.
    fn eta(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        let key = Self::key(a, b);
        if let Some(&v) = self.memo.lock().unwrap().get(&key) {
            return Ok(v);
        }
        self.evals.fetch_add(1, Ordering::Relaxed);
        let grid = match SettingsGrid::new(a.to_vec(), b.to_vec()) {
            Ok(g) => g,
            Err(_) => return Ok(f64::INFINITY),
        };
        let s = minimal_area(self.state, &grid)?;
        let v = 2.0 / (s + 1.0);
        self.memo.lock().unwrap().insert(key, v);
        Ok(v)
    }

    /// Objective for refinement; numerical failures count as infinitely bad.
    fn eta_or_inf(&self, a: &[f64], b: &[f64]) -> f64 {
        self.eta(a, b).unwrap_or(f64::INFINITY)
    }

    fn evaluations(&self) -> usize {
        self.evals.load(Ordering::Relaxed)
    }
}

fn grid_points(step: f64, span: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step < span) {
        return Err(LhvError::domain(format!("search step must lie in (0, {span}), got {step}")));
    }
    let n = (span / step).round() as usize;
    Ok((0..n).map(|k| k as f64 * span / n as f64).collect())
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Index tuple of the reflected settings `−x (mod π/2)` on a uniform grid of `n` points.
fn reflect(c: &[usize], n: usize) -> Vec<usize> {
    let mut r: Vec<usize> = c.iter().map(|&i| (n - i) % n).collect();
    r.sort_unstable();
    r
}

/// Exhaustive search over all `k`-element lists on a uniform grid over `[0, π/2)`.
/// Returns the best value and its index tuples (first in enumeration order among ties).
fn exhaustive(obj: &Objective, points: &[f64], k: usize) -> Result<(f64, Vec<usize>, Vec<usize>)> {
    let n = points.len();
    let combos = combinations(n, k);
    let index: HashMap<&Vec<usize>, usize> = combos.iter().enumerate().map(|(i, c)| (c, i)).collect();
    let pairs: Vec<(usize, usize)> = (0..combos.len())
        .flat_map(|i| (0..combos.len()).map(move |j| (i, j)))
        .filter(|&(i, j)| {
            let (ri, rj) = (index[&reflect(&combos[i], n)], index[&reflect(&combos[j], n)]);
            (i, j) <= (ri, rj)
        })
        .collect();
    let values: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let a: Vec<f64> = combos[i].iter().map(|&q| points[q]).collect();
            let b: Vec<f64> = combos[j].iter().map(|&q| points[q]).collect();
            obj.eta(&a, &b)
        })
        .collect();
    let mut best: Option<(f64, usize)> = None;
    for (idx, v) in values.into_iter().enumerate() {
        let v = v?;
        if best.is_none_or(|(bv, _)| v < bv) {
            best = Some((v, idx));
        }
    }
    let (v, idx) = best.ok_or_else(|| LhvError::Numerical("empty search grid".into()))?;
    let (i, j) = pairs[idx];
    Ok((v, combos[i].clone(), combos[j].clone()))
}

fn result_from(
    obj: &Objective,
    r: f64,
    a: Vec<f64>,
    b: Vec<f64>,
    eta: f64,
    coarse_eta: f64,
) -> Result<SearchResult> {
    let a: Vec<f64> = a.iter().map(|&x| circular_distance(x, 0.0, PI)).collect();
    let b: Vec<f64> = b.iter().map(|&x| circular_distance(x, 0.0, PI)).collect();
    let settings = SettingsGrid::new(a, b)?;
    let s = 2.0 / eta - 1.0;
    Ok(SearchResult {
        r,
        settings,
        eta_lhv: eta,
        s,
        evaluations: obj.evaluations(),
        coarse_eta,
        guard: None,
        at_special_angles: None,
        notes: Vec::new(),
    })
}

/// 2x2 search: `a = {0, π/4}`, `b = {β, −β}` on a grid of β with golden refinement,
/// guarded by an unconstrained grid at four times the step.
pub fn search_2x2(r: f64, coarse_step: f64) -> Result<SearchResult> {
    let obj = Objective::new(r)?;
    let a = [0.0, FRAC_PI_4];
    let betas: Vec<f64> = grid_points(coarse_step, FRAC_PI_2)?.into_iter().skip(1).collect();
    let values: Vec<Result<f64>> = betas.par_iter().map(|&beta| obj.eta(&a, &[beta, -beta])).collect();
    let mut best: Option<(f64, usize)> = None;
    for (k, v) in values.into_iter().enumerate() {
        let v = v?;
        if best.is_none_or(|(bv, _)| v < bv) {
            best = Some((v, k));
        }
    }
    let (coarse_eta, k) = best.ok_or_else(|| LhvError::Numerical("empty β grid".into()))?;
    let beta0 = betas[k];
    let (beta_r, eta_r) = golden_min(
        |beta| obj.eta_or_inf(&a, &[beta, -beta]),
        (beta0 - coarse_step).max(1e-6),
        (beta0 + coarse_step).min(FRAC_PI_2 - 1e-6),
        REFINE_TOL,
    );
    let (beta, eta) = if eta_r < coarse_eta { (beta_r, eta_r) } else { (beta0, coarse_eta) };

    let guard_step = 4.0 * coarse_step;
    let pts = grid_points(guard_step, FRAC_PI_2)?;
    let (geta, ga, gb) = exhaustive(&obj, &pts, 2)?;
    let gsettings = SettingsGrid {
        a_list: ga.iter().map(|&i| pts[i]).collect(),
        b_list: gb.iter().map(|&i| pts[i]).collect(),
    };
    let gap = eta - geta;
    let guard = GuardCheck { step: guard_step, eta: geta, settings: gsettings.clone(), gap, passed: gap <= GUARD_TOLERANCE };
    let mut res = if geta < eta {
        result_from(&obj, r, gsettings.a_list.clone(), gsettings.b_list.clone(), geta, coarse_eta)?
    } else {
        result_from(&obj, r, a.to_vec(), vec![beta, -beta], eta, coarse_eta)?
    };
    if !guard.passed {
        res.notes.push(format!(
            "unconstrained spot check at step {guard_step:.6} beats the constrained optimum by {gap:.6}"
        ));
    }
    res.guard = Some(guard);
    res.evaluations = obj.evaluations();
    Ok(res)
}

fn near_special(list: &[f64], tol: f64) -> bool {
    let special = [0.0, FRAC_PI_8, 3.0 * FRAC_PI_8];
    let mut used = [false; 3];
    for &x in list {
        let hit = (0..3).find(|&i| !used[i] && circular_distance(x, special[i], FRAC_PI_2).abs() <= tol + 1e-12);
        match hit {
            Some(i) => used[i] = true,
            None => return false,
        }
    }
    used.iter().all(|&u| u)
}

/// 3x3 search: exhaustive grid over three-element lists at `coarse_step`, then
/// coordinate-wise golden-section refinement of all six angles.
pub fn search_3x3(r: f64, coarse_step: f64) -> Result<SearchResult> {
    let obj = Objective::new(r)?;
    let pts = grid_points(coarse_step, FRAC_PI_2)?;
    let (coarse_eta, ia, ib) = exhaustive(&obj, &pts, 3)?;
    let x0: Vec<f64> = ia.iter().chain(&ib).map(|&i| pts[i]).collect();
    let (x, eta) = coordinate_descent(|x| obj.eta_or_inf(&x[..3], &x[3..]), &x0, coarse_step, REFINE_TOL);
    let (x, eta) = if eta < coarse_eta { (x, eta) } else { (x0, coarse_eta) };
    let mut res = result_from(&obj, r, x[..3].to_vec(), x[3..].to_vec(), eta, coarse_eta)?;
    let special = near_special(&res.settings.a_list, coarse_step) && near_special(&res.settings.b_list, coarse_step);
    res.at_special_angles = Some(special);
    if coarse_step < PI / 32.0 - 1e-12 {
        res.notes.push("3x3 coarse step finer than π/32 exceeds the intended search budget".into());
    }
    Ok(res)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Nxn,
    Lhv2x2,
    Lhv3x3,
    Ch,
}

impl CurveKind {
    pub fn name(self) -> &'static str {
        match self {
            CurveKind::Nxn => "nxn",
            CurveKind::Lhv2x2 => "lhv2x2",
            CurveKind::Lhv3x3 => "lhv3x3",
            CurveKind::Ch => "ch",
        }
    }

    pub fn parse(s: &str) -> Result<CurveKind> {
        match s {
            "nxn" => Ok(CurveKind::Nxn),
            "lhv2x2" => Ok(CurveKind::Lhv2x2),
            "lhv3x3" => Ok(CurveKind::Lhv3x3),
            "ch" => Ok(CurveKind::Ch),
            _ => Err(LhvError::domain(format!("unknown curve kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub r: f64,
    pub eta: f64,
    /// a-list followed by b-list; empty for the NxN curve.
    pub settings: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub curve_kind: CurveKind,
    pub points: Vec<SweepPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSteps {
    pub ch: f64,
    pub lhv2x2: f64,
    pub lhv3x3: f64,
}

impl Default for SweepSteps {
    fn default() -> Self {
        SweepSteps { ch: PI / 200.0, lhv2x2: PI / 200.0, lhv3x3: PI / 32.0 }
    }
}

pub fn sweep(r_values: &[f64], kinds: &[CurveKind]) -> Result<Vec<SweepCurve>> {
    sweep_with(r_values, kinds, SweepSteps::default())
}

pub fn sweep_with(r_values: &[f64], kinds: &[CurveKind], steps: SweepSteps) -> Result<Vec<SweepCurve>> {
    if r_values.is_empty() {
        return Err(LhvError::domain("sweep needs at least one r value"));
    }
    if r_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LhvError::domain("r values must be strictly increasing"));
    }
    let mut curves = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let mut points = Vec::with_capacity(r_values.len());
        for &r in r_values {
            let point = match kind {
                CurveKind::Nxn => {
                    let m = models::build_nonmaximal_nxn(r)?;
                    SweepPoint { r, eta: m.efficiencies()?.eta_2, settings: Vec::new() }
                }
                CurveKind::Lhv2x2 | CurveKind::Lhv3x3 => {
                    let res = if kind == CurveKind::Lhv2x2 {
                        search_2x2(r, steps.lhv2x2)?
                    } else {
                        search_3x3(r, steps.lhv3x3)?
                    };
                    let settings = res.settings.a_list.iter().chain(&res.settings.b_list).copied().collect();
                    SweepPoint { r, eta: res.eta_lhv, settings }
                }
                CurveKind::Ch => {
                    let c = ch_critical(r, steps.ch)?;
                    let g = &c.threshold.settings;
                    let settings = g.a_list.iter().chain(&g.b_list).copied().collect();
                    SweepPoint { r, eta: c.threshold.eta_star, settings }
                }
            };
            points.push(point);
        }
        curves.push(SweepCurve { curve_kind: kind, points });
    }
    Ok(curves)
}

/// `x` rendered in plain decimal notation with exactly `digits` significant digits.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mant, exp) = sci.split_once('e').unwrap();
    let exp: i64 = exp.parse().unwrap();
    let (neg, mant) = match mant.strip_prefix('-') {
        Some(m) => (true, m),
        None => (false, mant),
    };
    let digits_str: String = mant.chars().filter(|c| c.is_ascii_digit()).collect();
    let n = digits_str.len() as i64;
    let mut out = String::new();
    if neg {
        out.push('-');
    }
    if exp < 0 {
        out.push_str("0.");
        for _ in 0..(-exp - 1) {
            out.push('0');
        }
        out.push_str(&digits_str);
    } else if exp + 1 >= n {
        out.push_str(&digits_str);
        for _ in 0..(exp + 1 - n) {
            out.push('0');
        }
    } else {
        let split = (exp + 1) as usize;
        out.push_str(&digits_str[..split]);
        out.push('.');
        out.push_str(&digits_str[split..]);
    }
    out
}

/// CSV with header `r,eta,kind,settings`, LF line endings.
pub fn curve_csv(curve: &SweepCurve) -> String {
    let mut out = String::from("r,eta,kind,settings\n");
    for p in &curve.points {
        let settings: Vec<String> = p.settings.iter().map(|&x| format_significant(x, 9)).collect();
        let _ = writeln!(
            out,
            "{},{},{},{}",
            format_significant(p.r, 9),
            format_significant(p.eta, 9),
            curve.curve_kind.name(),
            settings.join(";")
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_significant(PI, 9), "3.14159265");
        assert_eq!(format_significant(-FRAC_PI_8, 9), "-0.392699082");
        assert_eq!(format_significant(0.000_123_456_789_123, 9), "0.000123456789");
        assert_eq!(format_significant(12345.678_901_2, 9), "12345.6789");
        assert_eq!(format_significant(1e10, 9), "10000000000");
        assert_eq!(format_significant(0.5, 9), "0.500000000");
        assert_eq!(format_significant(0.0, 9), "0");
        assert_eq!(format_significant(0.999_999_999_9, 9), "1.00000000");
    }

    #[test]
    fn combinations_and_reflection() {
        assert_eq!(combinations(4, 2).len(), 6);
        assert_eq!(combinations(16, 3).len(), 560);
        assert_eq!(reflect(&[0, 1, 3], 16), vec![0, 13, 15]);
    }

    #[test]
    fn special_angle_detection() {
        assert!(near_special(&[0.0, PI / 8.0, 3.0 * PI / 8.0], 1e-9));
        assert!(near_special(&[-PI / 8.0 + 0.05, 0.02, PI / 8.0], PI / 32.0));
        assert!(!near_special(&[0.0, PI / 4.0, 3.0 * PI / 8.0], PI / 32.0));
    }

    #[test]
    fn csv_layout() {
        let c = SweepCurve {
            curve_kind: CurveKind::Lhv2x2,
            points: vec![SweepPoint { r: 0.5, eta: 0.74, settings: vec![0.0, FRAC_PI_4] }],
        };
        assert_eq!(curve_csv(&c), "r,eta,kind,settings\n0.500000000,0.740000000,lhv2x2,0;0.785398163\n");
    }

    #[test]
    fn maximal_2x2_search() {
        let res = search_2x2(1.0, PI / 100.0).unwrap();
        assert!((res.eta_lhv - 0.828_427).abs() < 1e-4);
        assert!(res.guard.as_ref().unwrap().passed);
        assert!(res.eta_lhv <= res.coarse_eta);
    }

    #[test]
    fn sweep_rejects_unsorted() {
        assert!(sweep(&[0.5, 0.4], &[CurveKind::Nxn]).is_err());
        assert!(sweep(&[], &[CurveKind::Nxn]).is_err());
    }
}
