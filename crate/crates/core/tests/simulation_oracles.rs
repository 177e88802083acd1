use std::sync::Arc;

use lhv_forge_core::models::{self, SettingsGrid};
use lhv_forge_core::montecarlo::{
    quantum_counts, quantum_sampler, sample_trials, simulate_counts, tabulate, uniform_schedule, CountsTable,
    Outcome,
};
use lhv_forge_core::quantum::{self, Channel, EntangledState, Setting};
use lhv_forge_core::sample_space::{pad_independent, symmetrize};
use lhv_forge_core::stats::{chi_square, chi_tail, no_signaling, ChiSquareOptions, SigmaMode, Verdict};
use proptest::prelude::*;

fn within(observed: f64, p: f64, n: f64, sigmas: f64) -> bool {
    (observed - p).abs() <= sigmas * (p * (1.0 - p) / n).sqrt()
}

#[test]
fn padded_2x2_rates() {
    let sm = pad_independent(symmetrize(Arc::new(models::build_maximal_2x2())).unwrap());
    let c = simulate_counts(&sm, &SettingsGrid::chsh(), 1_000_000, 11).unwrap();
    let n = c.n as f64;
    let eta = 2.0 / (2f64.sqrt() + 1.0);
    assert!(within(c.total_singles_a() as f64 / n, eta, n, 4.0));
    assert!(within(c.total_singles_b() as f64 / n, eta, n, 4.0));
    assert!(within(c.total_joint() as f64 / n, eta * eta, n, 4.0));
}

#[test]
fn delayed_choice_always_detects() {
    let sm = symmetrize(Arc::new(models::build_delayed_choice())).unwrap();
    let g = SettingsGrid::new(vec![0.0, 5.0 * std::f64::consts::PI / 16.0], vec![0.3, 5.0 * std::f64::consts::PI / 8.0]).unwrap();
    let t = sample_trials(&sm, &g, 200_000, 5).unwrap();
    assert!(t.iter().all(|r| r.outcome_a != Outcome::NoDetect && r.outcome_b != Outcome::NoDetect));
}

#[test]
fn maximal_nxn_joint_frequencies() {
    let sm = symmetrize(Arc::new(models::build_maximal_nxn())).unwrap();
    let g = uniform_schedule(3).unwrap();
    let c = simulate_counts(&sm, &g, 1_000_000, 2).unwrap();
    let eta_ab = sm.coincidence_efficiency();
    for i in 0..3 {
        for j in 0..3 {
            let nij = c.trials[i][j] as f64;
            for x in Channel::BOTH {
                for y in Channel::BOTH {
                    let p = eta_ab * quantum::jdp(EntangledState::Maximal, Setting(g.a_list[i]), Setting(g.b_list[j]), x, y);
                    let f = c.joint[i][j][x.index()][y.index()] as f64 / nij;
                    assert!(within(f, p, nij, 4.0), "({i},{j},{x},{y}): {f} vs {p}");
                }
            }
        }
    }
}

#[test]
fn convergence_rate_is_binomial() {
    // mean absolute error shrinks by about √100 = 10 between 10⁴ and 10⁶ trials
    let sm = symmetrize(Arc::new(models::build_maximal_nxn())).unwrap();
    let g = SettingsGrid::chsh();
    let target = sm.jdp(Setting(0.0), Setting(std::f64::consts::FRAC_PI_8)).unwrap()[0][0];
    let err = |n: usize| {
        let seeds = 40;
        (0..seeds)
            .map(|s| {
                let c = simulate_counts(&sm, &g, n, 100 + s).unwrap();
                (c.joint[0][0][0][0] as f64 / c.trials[0][0] as f64 - target).abs()
            })
            .sum::<f64>()
            / seeds as f64
    };
    let ratio = err(10_000) / err(1_000_000);
    assert!((5.0..20.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn quantum_sampler_examples() {
    let g = SettingsGrid::chsh();
    let c = quantum_counts(EntangledState::Maximal, &g, 0.75, 1_000_000, 9).unwrap();
    assert!(within(c.total_joint() as f64 / c.n as f64, 0.5625, c.n as f64, 4.0));
    let same = SettingsGrid::new(vec![0.2], vec![0.2]).unwrap();
    let t = quantum_sampler(EntangledState::Maximal, &same, 1.0, 50_000, 1).unwrap();
    assert!(t.iter().all(|r| r.outcome_a == r.outcome_b));
}

#[test]
fn seeds_are_reproducible() {
    let sm = pad_independent(symmetrize(Arc::new(models::build_maximal_2x2())).unwrap());
    let g = SettingsGrid::chsh();
    let run = |threads: usize, seed: u64| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| simulate_counts(&sm, &g, 300_000, seed).unwrap())
    };
    assert_eq!(run(1, 4).to_json(), run(4, 4).to_json());
    assert_ne!(run(1, 4), run(1, 5));
}

#[test]
fn lhv_counts_pass_at_their_own_efficiency() {
    let sm = pad_independent(symmetrize(Arc::new(models::build_maximal_2x2())).unwrap());
    let g = SettingsGrid::chsh();
    let eta = sm.singles_efficiency();
    let mut accepted = 0;
    for seed in 0..30 {
        let c = simulate_counts(&sm, &g, 200_000, seed).unwrap();
        let r = chi_square(&c, EntangledState::Maximal, &g, eta, ChiSquareOptions::default()).unwrap();
        if r.p1 > 0.01 {
            accepted += 1;
        }
        assert!(no_signaling(&c).passes(1e-4));
    }
    assert!(accepted >= 27, "{accepted}/30");
}

#[test]
fn quantum_null_is_chi_square_distributed() {
    // Kolmogorov-Smirnov comparison of χ₁² over 200 seeds against χ²(m₁)
    let g = SettingsGrid::chsh();
    let eta = 0.8;
    let mut u: Vec<f64> = (0..200)
        .map(|seed| {
            let c = quantum_counts(EntangledState::Maximal, &g, eta, 100_000, 5000 + seed).unwrap();
            let r = chi_square(&c, EntangledState::Maximal, &g, eta, ChiSquareOptions::default()).unwrap();
            1.0 - chi_tail(r.chi1, r.m1)
        })
        .collect();
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    let d = u
        .iter()
        .enumerate()
        .map(|(i, &f)| (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs()))
        .fold(0.0, f64::max);
    assert!(d < 1.628 / n.sqrt(), "KS distance {d}");
}

#[test]
fn wrong_efficiency_is_rejected() {
    let g = SettingsGrid::chsh();
    let eta = 2.0 / (2f64.sqrt() + 1.0);
    let c = quantum_counts(EntangledState::Maximal, &g, eta + 0.05, 1_000_000, 77).unwrap();
    let r = chi_square(&c, EntangledState::Maximal, &g, eta, ChiSquareOptions::default()).unwrap();
    assert!(r.p1 < 1e-3 && r.p2 < 1e-3);
    assert_eq!(r.verdict(0.01), Verdict::Reject);
    let k = chi_square(&c, EntangledState::Maximal, &g, eta, ChiSquareOptions { sigma: SigmaMode::Constant(400.0), ..Default::default() }).unwrap();
    assert!(k.chi1 > 0.0 && k.sigma_used == SigmaMode::Constant(400.0));
}

fn outcome() -> impl Strategy<Value = Outcome> {
    prop::sample::select(vec![Outcome::Plus, Outcome::Minus, Outcome::NoDetect])
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn tabulation_is_consistent(records in prop::collection::vec((0usize..3, 0usize..2, outcome(), outcome()), 0..400), split in 0usize..400) {
        let trials: Vec<_> = records
            .iter()
            .map(|&(i, j, a, b)| lhv_forge_core::montecarlo::TrialRecord { a_index: i, b_index: j, outcome_a: a, outcome_b: b })
            .collect();
        let t = tabulate(&trials, 3, 2);
        prop_assert_eq!(t.n as usize, trials.len());
        for i in 0..3 {
            for j in 0..2 {
                for x in 0..2 {
                    let joint_x: u64 = t.joint[i][j][x].iter().sum();
                    prop_assert!(joint_x <= t.pair_singles_a[i][j][x]);
                    prop_assert!(t.pair_singles_a[i][j].iter().sum::<u64>() <= t.trials[i][j]);
                }
            }
        }
        let k = split.min(trials.len());
        let mut merged = tabulate(&trials[..k], 3, 2);
        merged.merge(&tabulate(&trials[k..], 3, 2));
        prop_assert_eq!(&merged, &t);
        prop_assert_eq!(CountsTable::from_json(&t.to_json()).unwrap(), t);
    }
}
