//! Builders for the supported sample-space families.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_8, PI};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::descriptor::{Family, ModelDescriptor, Padding, DEFAULT_GRID_RESOLUTION};
use crate::error::{LhvError, Result};
use crate::lp::{LinearProgram, LpStatus};
use crate::quantum::{self, circular_distance, wrap, Channel, EntangledState, Setting, Side};
use crate::sample_space::{
    self, BSet, Bands, ColumnTable, LhvModel, Partition, SymmetricModel, DEFAULT_ENVELOPE_GRID,
};

/// Analyzer angles for an N×N (or N×M) measurement schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingsGrid {
    pub a_list: Vec<f64>,
    pub b_list: Vec<f64>,
}

fn check_distinct(list: &[f64], side: &str) -> Result<()> {
    if list.is_empty() {
        return Err(LhvError::domain(format!("{side} settings list is empty")));
    }
    for (i, &x) in list.iter().enumerate() {
        if !x.is_finite() {
            return Err(LhvError::domain(format!("{side} setting {x} is not finite")));
        }
        for &y in &list[..i] {
            if circular_distance(x, y, PI).abs() < 1e-9 {
                return Err(LhvError::domain(format!(
                    "{side} settings {y} and {x} coincide modulo π"
                )));
            }
        }
    }
    Ok(())
}

impl SettingsGrid {
    pub fn new(a_list: Vec<f64>, b_list: Vec<f64>) -> Result<SettingsGrid> {
        check_distinct(&a_list, "A")?;
        check_distinct(&b_list, "B")?;
        Ok(SettingsGrid { a_list, b_list })
    }

    /// Settings for the CHSH-optimal maximal-state configuration.
    pub fn chsh() -> SettingsGrid {
        SettingsGrid { a_list: vec![0.0, FRAC_PI_4], b_list: vec![FRAC_PI_8, -FRAC_PI_8] }
    }

    pub fn swapped(&self) -> SettingsGrid {
        SettingsGrid { a_list: self.b_list.clone(), b_list: self.a_list.clone() }
    }

    pub fn na(&self) -> usize {
        self.a_list.len()
    }

    pub fn nb(&self) -> usize {
        self.b_list.len()
    }

    /// `N` for square schedules.
    pub fn n(&self) -> Option<usize> {
        (self.na() == self.nb()).then_some(self.na())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BuildStatus {
    Optimal,
    Infeasible,
}

/// Result of the minimal-area linear program for finite setting lists.
#[derive(Debug, Clone)]
pub struct FiniteModelBuild {
    pub model: LhvModel,
    pub lp_status: BuildStatus,
    pub s: f64,
    pub phi2_area: f64,
}

/// Maximal state, every setting pair: T ≡ ½ and S = π/2.
pub fn build_maximal_nxn() -> LhvModel {
    build_maximal_nxn_with(DEFAULT_GRID_RESOLUTION)
}

pub fn build_maximal_nxn_with(resolution: usize) -> LhvModel {
    let p = Partition::uniform(resolution);
    let masses: Vec<f64> = (0..p.len()).map(|k| 0.5 * p.width(k)).collect();
    let height = ColumnTable::from_masses(p, &masses);
    LhvModel::from_parts(
        ModelDescriptor::new(Family::MaximalNxn).with_resolution(resolution),
        EntangledState::Maximal,
        height,
        Some(FRAC_PI_2),
        Bands::Epr(EntangledState::Maximal),
        None,
        Some(FRAC_PI_4),
        Some(0.0),
    )
}

/// Maximal state at the CHSH-optimal settings `a = {0, π/4}`, `b = {±π/8}`.
pub fn build_maximal_2x2() -> LhvModel {
    build_maximal_2x2_with(DEFAULT_GRID_RESOLUTION)
}

pub fn build_maximal_2x2_with(resolution: usize) -> LhvModel {
    let built = build_finite_state(EntangledState::Maximal, &SettingsGrid::chsh(), resolution)
        .expect("CHSH configuration is always feasible");
    let mut model = built.model;
    let mut d = ModelDescriptor::new(Family::Maximal2x2).with_resolution(resolution);
    d.a_settings = None;
    d.b_settings = None;
    model.set_descriptor(d);
    model
}

/// Non-maximal state, every setting pair.
///
/// The lower half `[0, π/2)` of the height profile is the envelope itself. The upper
/// half is the envelope shifted by π/2 plus the background `c · sin 2λ`, which makes
/// every window integral `∫_a^{a+π/2} T = S₁ + c sin²a` proportional to `P_+(a)`.
pub fn build_nonmaximal_nxn(r: f64) -> Result<LhvModel> {
    build_nonmaximal_nxn_with(r, DEFAULT_GRID_RESOLUTION, DEFAULT_ENVELOPE_GRID)
}

pub fn build_nonmaximal_nxn_with(r: f64, resolution: usize, envelope_grid: usize) -> Result<LhvModel> {
    let state = EntangledState::non_maximal(r)?;
    if resolution < 8 || resolution % 4 != 0 {
        return Err(LhvError::domain("grid resolution must be a multiple of 4 and at least 8"));
    }
    let p = Partition::uniform(resolution);
    let descriptor = ModelDescriptor::new(Family::NonmaximalNxn).with_r(r).with_resolution(resolution);
    // provisional model carrying only the bands, to compute the envelope
    let flat = ColumnTable::from_masses(p.clone(), &vec![0.0; p.len()]);
    let probe = LhvModel::from_parts(
        descriptor.clone(),
        state,
        flat,
        Some(1.0),
        Bands::Epr(state),
        None,
        None,
        None,
    );
    let env = probe.envelope(&BSet::All { grid: envelope_grid })?;
    let half = resolution / 2;
    let e = p.edges();
    let s1: f64 = (0..half).map(|k| env.values[k] * p.width(k)).sum();
    let c = s1 * (1.0 - r * r) / (r * r);
    let mut masses = vec![0.0; resolution];
    let mut deficit = 0.0_f64;
    for k in 0..half {
        masses[k] = env.values[k] * p.width(k);
        let sin_mass = 0.5 * ((2.0 * e[k]).cos() - (2.0 * e[k + 1]).cos());
        let up = env.values[k] * p.width(k + half) + c * sin_mass;
        let need = env.values[k + half] * p.width(k + half);
        deficit = deficit.max(need - up);
        masses[k + half] = up.max(need);
    }
    if deficit > 1e-9 {
        return Err(LhvError::Numerical(format!(
            "upper-half envelope exceeds the column constraint by {deficit:e}"
        )));
    }
    let height = ColumnTable::from_masses(p.clone(), &masses);
    let s = height.total();
    let phi2: f64 = (0..resolution).map(|k| masses[k] - env.values[k] * p.width(k)).sum();
    Ok(LhvModel::from_parts(descriptor, state, height, Some(s), Bands::Epr(state), None, Some(s1), Some(phi2)))
}

/// Minimal-area model for finite setting lists.
pub fn build_finite(r: f64, grid: &SettingsGrid) -> Result<FiniteModelBuild> {
    build_finite_with(r, grid, DEFAULT_GRID_RESOLUTION)
}

pub fn build_finite_with(r: f64, grid: &SettingsGrid, resolution: usize) -> Result<FiniteModelBuild> {
    let state = EntangledState::non_maximal(r)?;
    build_finite_state(state, grid, resolution)
}

/// Arcs of the circle `[0, π)` cut at every `a` and `a + π/2`.
#[derive(Debug, Clone)]
pub(crate) struct Arcs {
    /// Arc start points in increasing order; arc `j` runs to `starts[j+1]` (the last wraps).
    pub starts: Vec<f64>,
}

impl Arcs {
    pub fn from_settings(a_list: &[f64]) -> Arcs {
        let mut u: Vec<f64> = a_list.iter().map(|&a| wrap(a, FRAC_PI_2)).collect();
        u.sort_by(f64::total_cmp);
        u.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
        if u.len() > 1 && (u[u.len() - 1] - FRAC_PI_2 - u[0]).abs() < 1e-12 {
            u.pop();
        }
        let mut starts = u.clone();
        starts.extend(u.iter().map(|x| x + FRAC_PI_2));
        Arcs { starts }
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn width(&self, j: usize) -> f64 {
        let next = if j + 1 < self.len() { self.starts[j + 1] } else { self.starts[0] + PI };
        next - self.starts[j]
    }

    /// Arc containing `x` (mod π).
    pub fn locate(&self, x: f64) -> usize {
        let y = wrap(x - self.starts[0], PI) + self.starts[0];
        self.starts.partition_point(|&s| s <= y).saturating_sub(1)
    }

    /// Arcs inside `[a, a + π/2)` (mod π); `a` must be one of the cut points.
    pub fn window(&self, a: f64) -> Vec<usize> {
        (0..self.len())
            .filter(|&j| wrap(self.starts[j] + 0.5 * self.width(j) - a, PI) < FRAC_PI_2)
            .collect()
    }
}

struct LpLayout {
    arcs: usize,
    nb: usize,
}

impl LpLayout {
    fn t(&self, j: usize) -> usize {
        j
    }

    fn m(&self, b: usize, y: usize, j: usize) -> usize {
        self.arcs + (b * 2 + y) * self.arcs + j
    }

    fn vars(&self) -> usize {
        self.arcs * (1 + 2 * self.nb)
    }
}

/// Minimal area of a finite-setting sample space, without building the column tables.
pub fn minimal_area(state: EntangledState, grid: &SettingsGrid) -> Result<f64> {
    let (_, lay, x) = solve_area_lp(state, grid)?;
    Ok((0..lay.arcs).map(|j| x[lay.t(j)]).sum())
}

fn solve_area_lp(state: EntangledState, grid: &SettingsGrid) -> Result<(Arcs, LpLayout, Vec<f64>)> {
    check_distinct(&grid.a_list, "A")?;
    check_distinct(&grid.b_list, "B")?;
    let arcs = Arcs::from_settings(&grid.a_list);
    let lay = LpLayout { arcs: arcs.len(), nb: grid.nb() };
    let mut lp = LinearProgram::new((0..lay.vars()).map(|i| if i < lay.arcs { 1.0 } else { 0.0 }).collect());
    let windows: Vec<Vec<usize>> = grid.a_list.iter().map(|&a| arcs.window(a)).collect();
    for (ai, &a) in grid.a_list.iter().enumerate() {
        let pa = quantum::sdp(state, Setting(a), Channel::Plus, Side::A);
        let mut row = vec![0.0; lay.vars()];
        for j in 0..lay.arcs {
            row[lay.t(j)] = -pa;
        }
        for &j in &windows[ai] {
            row[lay.t(j)] += 1.0;
        }
        lp.add_eq(row, 0.0);
    }
    for (bi, &b) in grid.b_list.iter().enumerate() {
        for y in Channel::BOTH {
            let mut row = vec![0.0; lay.vars()];
            for j in 0..lay.arcs {
                row[lay.m(bi, y.index(), j)] = 1.0;
            }
            lp.add_eq(row, quantum::band_amplitude(state, Setting(b), y));
            for (ai, &a) in grid.a_list.iter().enumerate() {
                let mut row = vec![0.0; lay.vars()];
                for &j in &windows[ai] {
                    row[lay.m(bi, y.index(), j)] = 1.0;
                }
                lp.add_eq(row, quantum::jdp(state, Setting(a), Setting(b), Channel::Plus, y));
            }
        }
        for j in 0..lay.arcs {
            let mut row = vec![0.0; lay.vars()];
            row[lay.m(bi, 0, j)] = 1.0;
            row[lay.m(bi, 1, j)] = 1.0;
            row[lay.t(j)] = -1.0;
            lp.add_le(row, 0.0);
        }
    }
    let sol = lp.solve()?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Err(LhvError::Infeasible(format!(
                "no sample space reproduces the joint probabilities at a = {:?}, b = {:?}",
                grid.a_list, grid.b_list
            )))
        }
        LpStatus::Unbounded => return Err(LhvError::Numerical("area program is unbounded".into())),
    }
    let violation = lp.max_violation(&sol.x);
    if violation > 1e-9 {
        return Err(LhvError::Numerical(format!("LP solution violates constraints by {violation:e}")));
    }
    Ok((arcs, lay, sol.x))
}

pub(crate) fn build_finite_state(
    state: EntangledState,
    grid: &SettingsGrid,
    resolution: usize,
) -> Result<FiniteModelBuild> {
    if resolution < 8 || resolution % 4 != 0 {
        return Err(LhvError::domain("grid resolution must be a multiple of 4 and at least 8"));
    }
    let (arcs, lay, x) = solve_area_lp(state, grid)?;
    // column grid: uniform grid refined at the arc boundaries, so each column lies in one arc
    let p = Partition::with_breakpoints(resolution, &arcs.starts);
    let col_arc: Vec<usize> = (0..p.len()).map(|k| arcs.locate(p.midpoint(k))).collect();
    let spread = |value: &dyn Fn(usize) -> f64| -> Vec<f64> {
        (0..p.len()).map(|k| value(col_arc[k]) * p.width(k) / arcs.width(col_arc[k])).collect()
    };
    let t_masses = spread(&|j| x[lay.t(j)]);
    let mut tables = Vec::with_capacity(grid.nb());
    let mut env_arc = vec![0.0_f64; lay.arcs];
    for bi in 0..grid.nb() {
        let plus = spread(&|j| x[lay.m(bi, 0, j)]);
        let minus = spread(&|j| x[lay.m(bi, 1, j)]);
        for j in 0..lay.arcs {
            env_arc[j] = env_arc[j].max(x[lay.m(bi, 0, j)] + x[lay.m(bi, 1, j)]);
        }
        tables.push([ColumnTable::from_masses(p.clone(), &plus), ColumnTable::from_masses(p.clone(), &minus)]);
    }
    let s: f64 = (0..lay.arcs).map(|j| x[lay.t(j)]).sum();
    let phi2: f64 = (0..lay.arcs).map(|j| (x[lay.t(j)] - env_arc[j]).max(0.0)).sum();
    let mut descriptor = ModelDescriptor::new(Family::Finite)
        .with_resolution(resolution)
        .with_settings(grid.a_list.clone(), grid.b_list.clone());
    descriptor.r = state.ratio();
    let height = ColumnTable::from_masses(p, &t_masses);
    let model = LhvModel::from_parts(
        descriptor,
        state,
        height,
        Some(s),
        Bands::Tabulated { b_list: grid.b_list.clone(), tables },
        Some(grid.a_list.clone()),
        None,
        Some(phi2),
    );
    Ok(FiniteModelBuild { model, lp_status: BuildStatus::Optimal, s, phi2_area: phi2 })
}

/// Delayed-choice state: two stacked sub-spaces with T = ½|sin 2λ| and S = 1.
pub fn build_delayed_choice() -> LhvModel {
    build_delayed_choice_with(DEFAULT_GRID_RESOLUTION)
}

pub fn build_delayed_choice_with(resolution: usize) -> LhvModel {
    let p = Partition::uniform(resolution);
    let e = p.edges();
    // ∫ ½|sin 2λ| over a column that does not straddle π/2
    let masses: Vec<f64> = (0..p.len())
        .map(|k| (0.25 * ((2.0 * e[k]).cos() - (2.0 * e[k + 1]).cos())).abs())
        .collect();
    let height = ColumnTable::from_masses(p, &masses);
    LhvModel::from_parts(
        ModelDescriptor::new(Family::DelayedChoice).with_resolution(resolution),
        EntangledState::DelayedChoice,
        height,
        Some(1.0),
        Bands::Delayed,
        None,
        None,
        Some(0.0),
    )
}

/// Build the bare model named by a descriptor.
pub fn build(d: &ModelDescriptor) -> Result<LhvModel> {
    d.validate()?;
    let res = d.grid_resolution;
    let model = match d.family {
        Family::MaximalNxn => build_maximal_nxn_with(res),
        Family::Maximal2x2 => build_maximal_2x2_with(res),
        Family::NonmaximalNxn => build_nonmaximal_nxn_with(d.r.unwrap(), res, DEFAULT_ENVELOPE_GRID)?,
        Family::Finite => {
            let grid = SettingsGrid::new(d.a_settings.clone().unwrap(), d.b_settings.clone().unwrap())?;
            build_finite_with(d.r.unwrap(), &grid, res)?.model
        }
        Family::DelayedChoice => build_delayed_choice_with(res),
    };
    let mut model = match d.height_offset {
        Some(h) if h > 0.0 => model.inflated(h),
        _ => model,
    };
    let mut desc = model.descriptor().clone();
    desc.padding = d.padding;
    model.set_descriptor(desc);
    Ok(model)
}

/// Build the model named by a descriptor and apply its padding mode.
pub fn build_symmetric(d: &ModelDescriptor) -> Result<SymmetricModel> {
    let base = Arc::new(build(d)?);
    match d.padding {
        Padding::None => Ok(SymmetricModel { padded_height_area: base.total_area(), base, mirror: None }),
        Padding::Symmetric => sample_space::symmetrize(base),
        Padding::Independent => Ok(sample_space::pad_independent(sample_space::symmetrize(base)?)),
    }
}

/// Mirror half of a finite model: the same state with the two setting lists swapped.
pub(crate) fn mirror_model(m: &LhvModel) -> Result<LhvModel> {
    let (a, b) = match (m.a_settings(), m.b_settings()) {
        (Some(a), Some(b)) => (a.to_vec(), b.to_vec()),
        _ => return Err(LhvError::domain("mirror_model expects a finite-setting model")),
    };
    let grid = SettingsGrid::new(b, a)?;
    Ok(build_finite_state(m.state(), &grid, m.grid_resolution())?.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::jdp;

    fn assert_reproduces(m: &LhvModel, a_list: &[f64], b_list: &[f64], tol: f64) {
        let s = m.total_area();
        for &a in a_list {
            for &b in b_list {
                let got = m.eval_jdp(Setting(a), Setting(b)).unwrap();
                for x in Channel::BOTH {
                    for y in Channel::BOTH {
                        let want = jdp(m.state(), Setting(a), Setting(b), x, y);
                        let d = (s * got[x.index()][y.index()] - want).abs();
                        assert!(d <= tol, "a={a} b={b} {x}{y}: {d:e}");
                    }
                }
            }
        }
    }

    #[test]
    fn settings_grid_rejects_duplicates() {
        assert!(SettingsGrid::new(vec![0.0, PI], vec![0.1]).is_err());
        assert!(SettingsGrid::new(vec![], vec![0.1]).is_err());
        assert!(SettingsGrid::new(vec![0.0, 0.3], vec![0.1, 0.1 + 2.0 * PI]).is_err());
        assert!(SettingsGrid::new(vec![0.0, FRAC_PI_2], vec![0.1]).is_ok());
    }

    #[test]
    fn arcs_cut_at_settings() {
        let arcs = Arcs::from_settings(&[0.0, FRAC_PI_4]);
        assert_eq!(arcs.len(), 4);
        assert!((0..4).all(|j| (arcs.width(j) - FRAC_PI_4).abs() < 1e-15));
        assert_eq!(arcs.window(FRAC_PI_4), vec![1, 2]);
        assert_eq!(arcs.window(0.0), vec![0, 1]);
        let arcs = Arcs::from_settings(&[0.3, 0.3 + FRAC_PI_2]);
        assert_eq!(arcs.len(), 2);
        let total: f64 = (0..arcs.len()).map(|j| arcs.width(j)).sum();
        assert!((total - PI).abs() < 1e-15);
        assert_eq!(arcs.locate(0.2), 1);
        assert_eq!(arcs.locate(0.31), 0);
    }

    #[test]
    fn maximal_nxn_examples() {
        let m = build_maximal_nxn();
        assert!((m.total_area() - FRAC_PI_2).abs() < 1e-15);
        let j = m.eval_jdp(Setting(0.0), Setting(0.0)).unwrap();
        assert!((j[0][0] - 1.0 / PI).abs() < 1e-12);
        assert!(j[0][1].abs() < 1e-15);
        let j = m.eval_jdp(Setting(FRAC_PI_8), Setting(0.0)).unwrap();
        assert!((j[0][0] - 0.271_694_482_611_59).abs() < 1e-12);
        let sa = m.eval_sdp(Setting(1.1), Side::A).unwrap();
        assert!((sa[0] - 0.5).abs() < 1e-12 && (sa[1] - 0.5).abs() < 1e-12);
        let sb = m.eval_sdp(Setting(1.1), Side::B).unwrap();
        assert!((sb[0] - 1.0 / PI).abs() < 1e-12);
        let grid: Vec<f64> = (0..20).map(|i| -1.3 + 0.17 * i as f64).collect();
        assert_reproduces(&m, &grid, &grid, 1e-12);
    }

    #[test]
    fn maximal_2x2_examples() {
        let m = build_maximal_2x2();
        assert!((m.total_area() - 2f64.sqrt()).abs() < 1e-9);
        let want = 0.301_776_695_296_64;
        for (a, b) in [(0.0, FRAC_PI_8), (0.0, -FRAC_PI_8), (FRAC_PI_4, FRAC_PI_8)] {
            let j = m.eval_jdp(Setting(a), Setting(b)).unwrap();
            assert!((j[0][0] - want).abs() < 1e-9);
            assert!((j[1][1] - want).abs() < 1e-9);
        }
        assert!(matches!(
            m.eval_jdp(Setting(0.1), Setting(FRAC_PI_8)),
            Err(LhvError::InadmissibleSetting { side: "A", .. })
        ));
        assert!(matches!(
            m.eval_jdp(Setting(0.0), Setting(0.1)),
            Err(LhvError::InadmissibleSetting { side: "B", .. })
        ));
        // same setting shifted by π is the same analyzer
        assert!(m.eval_jdp(Setting(PI), Setting(FRAC_PI_8 - PI)).is_ok());
        assert_reproduces(&m, &[0.0, FRAC_PI_4], &[FRAC_PI_8, -FRAC_PI_8], 1e-9);
        assert_eq!(m.family(), Family::Maximal2x2);
    }

    #[test]
    fn finite_single_setting_has_unit_area() {
        let b = build_finite(1.0, &SettingsGrid::new(vec![0.0], vec![0.0]).unwrap()).unwrap();
        assert!((b.s - 1.0).abs() < 1e-12);
        assert!(b.phi2_area.abs() < 1e-12);
        assert_eq!(b.lp_status, BuildStatus::Optimal);
    }

    #[test]
    fn finite_model_reproduces_quantum_predictions() {
        let grid = SettingsGrid::new(vec![0.0, FRAC_PI_4], vec![PI / 16.0, -PI / 16.0]).unwrap();
        let built = build_finite(0.26, &grid).unwrap();
        let m = &built.model;
        assert_reproduces(m, &grid.a_list, &grid.b_list, 1e-9);
        for &a in &grid.a_list {
            let s = m.eval_sdp(Setting(a), Side::A).unwrap();
            let q = quantum::sdp(m.state(), Setting(a), Channel::Plus, Side::A);
            assert!((s[0] - q).abs() < 1e-9);
        }
        for &b in &grid.b_list {
            assert!(m.stack_excess(Setting(b)).unwrap() <= 1e-9);
        }
    }

    #[test]
    fn finite_area_is_locally_minimal() {
        // lowering any single arc of T breaks a constraint
        let grid = SettingsGrid::new(vec![0.0, FRAC_PI_4], vec![PI / 16.0, -PI / 16.0]).unwrap();
        let m = build_finite(0.26, &grid).unwrap().model;
        let p = m.partition().clone();
        let heights = m.heights();
        let arcs = Arcs::from_settings(&grid.a_list);
        for j in 0..arcs.len() {
            let masses: Vec<f64> = (0..p.len())
                .map(|k| {
                    let h = heights[k] - if arcs.locate(p.midpoint(k)) == j { 1e-4 } else { 0.0 };
                    h * p.width(k)
                })
                .collect();
            let area: f64 = masses.iter().sum();
            let t = ColumnTable::from_masses(p.clone(), &masses);
            let mut window_err = 0.0_f64;
            for &a in &grid.a_list {
                let w = t.mass_between(a, a + FRAC_PI_2) / area;
                let q = quantum::sdp(m.state(), Setting(a), Channel::Plus, Side::A);
                window_err = window_err.max((w - q).abs());
            }
            let stack_broken = grid.b_list.iter().any(|&b| {
                let [mp, mm] = m.column_band_masses(Setting(b)).unwrap();
                (0..p.len()).any(|k| mp[k] + mm[k] > masses[k] + 1e-12)
            });
            assert!(window_err > 1e-9 || stack_broken, "arc {j} can be lowered");
        }
    }

    #[test]
    fn finite_area_grows_with_nested_settings() {
        for r in [0.26, 0.6, 1.0] {
            let nxn = build_nonmaximal_nxn_with(r, 1024, 512).unwrap().total_area();
            let mut prev = 0.0;
            let all = [0.0, PI / 8.0, PI / 4.0, 3.0 * PI / 8.0, PI / 16.0, 5.0 * PI / 16.0];
            for n in 1..=all.len() {
                let list = all[..n].to_vec();
                let s = build_finite(r, &SettingsGrid::new(list.clone(), list).unwrap()).unwrap().s;
                assert!(s >= prev - 1e-9, "r={r} n={n}: {s} < {prev}");
                assert!(s <= nxn + 1e-6, "r={r} n={n}: {s} > {nxn}");
                prev = s;
            }
        }
    }

    #[test]
    fn nonmaximal_nxn_identity_and_reduction() {
        for r in [0.26, 0.6] {
            let m = build_nonmaximal_nxn_with(r, 1024, 512).unwrap();
            let s1 = m.s1().unwrap();
            let s = m.total_area();
            assert!(((s - s1 * (1.0 + r * r) / (r * r)) / s).abs() < 1e-12);
            assert!(m.phi2_area().unwrap() > 0.0);
        }
        let one = build_nonmaximal_nxn_with(1.0, 1024, 512).unwrap();
        assert!((one.total_area() - FRAC_PI_2).abs() < 1e-5);
        assert!(one.phi2_area().unwrap().abs() < 1e-9);
        assert!(build_nonmaximal_nxn(0.0).is_err());
        assert!(build_nonmaximal_nxn(1.5).is_err());
    }

    #[test]
    fn nonmaximal_nxn_column_rule_masses() {
        let r = 0.5;
        let m = build_nonmaximal_nxn_with(r, 1024, 512).unwrap();
        let s = m.eval_sdp(Setting(0.0), Side::A).unwrap();
        assert!((s[0] - 0.2).abs() < 1e-9 && (s[1] - 0.8).abs() < 1e-9);
        for i in 0..40 {
            let a = -1.5 + 0.077 * i as f64;
            let s = m.eval_sdp(Setting(a), Side::A).unwrap();
            let q = quantum::sdp(m.state(), Setting(a), Channel::Plus, Side::A);
            assert!((s[0] - q).abs() < 1e-5, "a={a}: {} vs {q}", s[0]);
        }
        for i in 0..30 {
            let b = -1.5 + 0.11 * i as f64;
            assert!(m.stack_excess(Setting(b)).unwrap() <= 1e-6);
        }
    }

    #[test]
    fn delayed_choice_examples() {
        let m = build_delayed_choice();
        assert_eq!(m.total_area(), 1.0);
        assert!((m.height_table().total() - 1.0).abs() < 1e-12);
        let e = m.efficiencies().unwrap();
        assert_eq!((e.eta_ab, e.eta_1, e.eta_2), (1.0, 1.0, 1.0));
        let (a, b) = (5.0 * PI / 16.0, 5.0 * PI / 8.0);
        let j = m.eval_jdp(Setting(a), Setting(b)).unwrap();
        for x in Channel::BOTH {
            for y in Channel::BOTH {
                let q = jdp(EntangledState::DelayedChoice, Setting(a), Setting(b), x, y);
                assert!((j[x.index()][y.index()] - q).abs() < 1e-12);
            }
        }
        for i in 0..20 {
            let b = -3.0 + 0.31 * i as f64;
            assert!(m.no_detect_mass(Setting(b)).unwrap().abs() < 1e-12);
            assert!(m.stack_excess(Setting(b)).unwrap() < 1e-12);
        }
    }

    #[test]
    fn descriptor_builds_and_pads() {
        let d = ModelDescriptor::new(Family::Maximal2x2).with_padding(Padding::Independent);
        let sm = build_symmetric(&d).unwrap();
        assert!((sm.padded_height_area - 1.457_106_781_186_547_5).abs() < 1e-9);
        assert!((sm.singles_efficiency() - 0.828_427_124_746_19).abs() < 1e-9);
        let d = ModelDescriptor::new(Family::NonmaximalNxn).with_r(1.5);
        assert!(build(&d).is_err());
        let d = ModelDescriptor::new(Family::DelayedChoice).with_padding(Padding::Independent);
        let sm = build_symmetric(&d).unwrap();
        assert!(sm.mirror.is_none());
        assert_eq!(sm.singles_efficiency(), 1.0);
    }

    #[test]
    fn mirror_of_finite_model_has_equal_area() {
        let m = Arc::new(build_maximal_2x2());
        let sm = sample_space::symmetrize(m).unwrap();
        let mir = sm.mirror.as_ref().unwrap();
        assert_eq!(mir.a_settings().unwrap(), &[FRAC_PI_8, -FRAC_PI_8]);
        assert!((mir.total_area() - 2f64.sqrt()).abs() < 1e-9);
    }
}
