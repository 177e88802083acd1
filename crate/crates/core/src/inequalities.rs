//! Clauser-Horne efficiency thresholds and the fixed maximal-state benchmarks.
//!
//! With detector efficiency η applied as η² on joint terms and η on singles, the CH
//! inequality `P(a1,b1) + P(a1,b2) + P(a2,b1) − P(a2,b2) ≤ P_A(a1) + P_B(b1)` is
//! violated exactly when η exceeds `[P_A(a1) + P_B(b1)] / [joint combination]`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LhvError, Result};
use crate::models::SettingsGrid;
use crate::quantum::{self, circular_distance, Channel, EntangledState, Setting, Side};
use crate::refine::coordinate_descent;

/// Which joint term carries the minus sign and which channels are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChPermutation {
    /// `(i, j)`: the term `P(a_{i+1}, b_{j+1})` is subtracted; singles use the other two settings.
    pub minus: (usize, usize),
    pub channels: (Channel, Channel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChThreshold {
    pub eta_star: f64,
    pub settings: SettingsGrid,
    pub r: f64,
    pub permutation: ChPermutation,
}

fn ch_ratio(
    state: EntangledState,
    a: [f64; 2],
    b: [f64; 2],
    perm: ChPermutation,
) -> Option<f64> {
    let (x, y) = perm.channels;
    let (mi, mj) = perm.minus;
    let mut joint = 0.0;
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            let p = quantum::jdp(state, Setting(ai), Setting(bj), x, y);
            joint += if (i, j) == (mi, mj) { -p } else { p };
        }
    }
    let singles = quantum::sdp(state, Setting(a[1 - mi]), x, Side::A)
        + quantum::sdp(state, Setting(b[1 - mj]), y, Side::B);
    (joint > 0.0).then(|| singles / joint)
}

/// CH threshold at fixed settings, minimized over the 16 sign/channel assignments.
pub fn ch_threshold(r: f64, a1: f64, a2: f64, b1: f64, b2: f64) -> Result<ChThreshold> {
    let state = EntangledState::non_maximal(r)?;
    let mut best: Option<(f64, ChPermutation)> = None;
    for mi in 0..2 {
        for mj in 0..2 {
            for x in Channel::BOTH {
                for y in Channel::BOTH {
                    let perm = ChPermutation { minus: (mi, mj), channels: (x, y) };
                    if let Some(v) = ch_ratio(state, [a1, a2], [b1, b2], perm) {
                        if best.is_none_or(|(bv, _)| v < bv) {
                            best = Some((v, perm));
                        }
                    }
                }
            }
        }
    }
    match best {
        Some((v, perm)) if v < 1.0 => Ok(ChThreshold {
            eta_star: v,
            settings: SettingsGrid { a_list: vec![a1, a2], b_list: vec![b1, b2] },
            r,
            permutation: perm,
        }),
        Some((v, _)) => Err(LhvError::NoViolation { best: v }),
        None => Err(LhvError::NoViolation { best: f64::INFINITY }),
    }
}

/// Outcome of the setting search for the lowest CH threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChCritical {
    pub threshold: ChThreshold,
    /// Best value on the coarse grid before refinement.
    pub coarse_eta: f64,
    /// Best value of the refinement restricted to `a1 = −b1`.
    pub constrained_eta: f64,
    pub evaluations: usize,
}

/// Threshold in the canonical (+,+) layout with the minus sign on `(a2, b2)`.
fn canonical_ratio(state: EntangledState, p: &[f64]) -> f64 {
    let perm = ChPermutation { minus: (1, 1), channels: (Channel::Plus, Channel::Plus) };
    ch_ratio(state, [p[0], p[1]], [p[2], p[3]], perm).unwrap_or(f64::INFINITY)
}

fn centred(x: f64) -> f64 {
    circular_distance(x, 0.0, PI)
}

/// Lowest CH threshold over all settings: grid search at `step`, then golden-section
/// refinement both unconstrained and under `a1 = −b1`.
pub fn ch_critical(r: f64, step: f64) -> Result<ChCritical> {
    let state = EntangledState::non_maximal(r)?;
    if !(step > 0.0 && step < PI) {
        return Err(LhvError::domain(format!("search step must lie in (0, π), got {step}")));
    }
    // with (+,+) channels every assignment is a relabelling of angles over a full period
    let n = (PI / step).round() as usize;
    let angles: Vec<f64> = (0..n).map(|k| k as f64 * PI / n as f64).collect();
    let p: Vec<f64> = angles
        .iter()
        .flat_map(|&a| {
            angles.iter().map(move |&b| quantum::jdp(state, Setting(a), Setting(b), Channel::Plus, Channel::Plus))
        })
        .collect();
    let single: Vec<f64> =
        angles.iter().map(|&a| quantum::sdp(state, Setting(a), Channel::Plus, Side::A)).collect();
    let at = |i: usize, j: usize| p[i * n + j];
    // for fixed a1 the best (a2, b2) separates: D(a2) = max_b2 [P(a1,b2) − P(a2,b2)]
    let per_a1: Vec<Option<(f64, [usize; 4])>> = (0..n)
        .into_par_iter()
        .map(|i1| {
            let mut d = vec![(f64::NEG_INFINITY, 0usize); n];
            for (i2, slot) in d.iter_mut().enumerate() {
                for j2 in 0..n {
                    let v = at(i1, j2) - at(i2, j2);
                    if v > slot.0 {
                        *slot = (v, j2);
                    }
                }
            }
            let mut best: Option<(f64, [usize; 4])> = None;
            for j1 in 0..n {
                let mut top = (f64::NEG_INFINITY, 0usize);
                for (i2, &(dv, _)) in d.iter().enumerate() {
                    let v = dv + at(i2, j1);
                    if v > top.0 {
                        top = (v, i2);
                    }
                }
                let joint = at(i1, j1) + top.0;
                if joint > 0.0 {
                    let eta = (single[i1] + single[j1]) / joint;
                    if best.is_none_or(|(bv, _)| eta < bv) {
                        best = Some((eta, [i1, top.1, j1, d[top.1].1]));
                    }
                }
            }
            best
        })
        .collect();
    let mut coarse: Option<(f64, [usize; 4])> = None;
    for b in per_a1.into_iter().flatten() {
        if coarse.is_none_or(|(bv, _)| b.0 < bv) {
            coarse = Some(b);
        }
    }
    let (coarse_eta, idx) = coarse.ok_or(LhvError::NoViolation { best: f64::INFINITY })?;
    let x0: Vec<f64> = idx.iter().map(|&k| angles[k]).collect();
    let mut evaluations = n * n * n * 2;
    let tol = 1e-5;
    let mut count = 0usize;
    let (free_x, free_v) = coordinate_descent(
        |x| {
            count += 1;
            canonical_ratio(state, x)
        },
        &x0,
        step,
        tol,
    );
    // a1 = −b1: parameters (t, a2, b2); two projections of the coarse point
    let mut constrained: Option<(Vec<f64>, f64)> = None;
    let t0 = 0.5 * (x0[0] - x0[2]);
    for t in [t0, t0 + 0.5 * PI] {
        let (y, v) = coordinate_descent(
            |y| {
                count += 1;
                canonical_ratio(state, &[y[0], y[1], -y[0], y[2]])
            },
            &[t, x0[1], x0[3]],
            step,
            tol,
        );
        if constrained.as_ref().is_none_or(|(_, bv)| v < *bv) {
            constrained = Some((vec![y[0], y[1], -y[0], y[2]], v));
        }
    }
    evaluations += count;
    let (cx, cv) = constrained.unwrap();
    let (best_x, _) = if cv <= free_v { (cx, cv) } else { (free_x, free_v) };
    let s: Vec<f64> = best_x.iter().map(|&v| centred(v)).collect();
    let threshold = ch_threshold(r, s[0], s[1], s[2], s[3])?;
    Ok(ChCritical { threshold, coarse_eta, constrained_eta: cv, evaluations })
}

/// Closed-form critical efficiencies for the maximal state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Benchmarks {
    /// CH / Garg-Mermin bound with independent errors, 2(√2 − 1).
    pub garg_mermin: f64,
    /// Symmetric bound without independent errors, (√2 + 1)/(2√2).
    pub larsson_nonindependent: f64,
    /// Conditional-efficiency bound, 2/(√2 + 1).
    pub larsson_conditional: f64,
}

pub fn fixed_benchmarks() -> Benchmarks {
    let r2 = 2f64.sqrt();
    Benchmarks {
        garg_mermin: 2.0 * (r2 - 1.0),
        larsson_nonindependent: (r2 + 1.0) / (2.0 * r2),
        larsson_conditional: 2.0 / (r2 + 1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_8};

    #[test]
    fn chsh_settings_give_garg_mermin() {
        let t = ch_threshold(1.0, 0.0, FRAC_PI_4, FRAC_PI_8, -FRAC_PI_8).unwrap();
        assert!((t.eta_star - 0.828_427_124_746_19).abs() < 1e-12);
        assert_eq!(t.permutation.minus, (1, 1));
    }

    #[test]
    fn degenerate_settings_do_not_violate() {
        assert!(matches!(ch_threshold(1.0, 0.0, 0.0, 0.0, 0.0), Err(LhvError::NoViolation { .. })));
    }

    #[test]
    fn benchmarks() {
        let b = fixed_benchmarks();
        assert!((b.garg_mermin - 0.828_427_124_746_19).abs() < 1e-12);
        assert!((b.larsson_nonindependent - 0.853_553_390_593_27).abs() < 1e-12);
        assert!((b.larsson_conditional - 0.828_427_124_746_19).abs() < 1e-12);
    }

    #[test]
    fn permutations_cover_relabelled_settings() {
        // swapping the roles of a1 and a2 must not change the optimized threshold
        let t1 = ch_threshold(0.4, 0.3, -0.1, -0.3, 0.1).unwrap();
        let t2 = ch_threshold(0.4, -0.1, 0.3, 0.1, -0.3).unwrap();
        assert!((t1.eta_star - t2.eta_star).abs() < 1e-14);
    }

    #[test]
    fn maximal_state_critical_value() {
        let c = ch_critical(1.0, PI / 50.0).unwrap();
        assert!((c.threshold.eta_star - 0.828_427_124_746_19).abs() < 1e-6);
        assert!(c.threshold.eta_star <= c.coarse_eta);
    }
}
