//! Geometric sample spaces: columns over λ ∈ [0, π), band stacks for detector B,
//! column windows for detector A, symmetrization and padding.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::descriptor::{Family, ModelDescriptor};
use crate::error::{LhvError, Result};
use crate::quantum::{self, circular_distance, wrap, Channel, EntangledState, Setting, Side};
use crate::refine::golden_max;

/// Relative tolerance used by [`LhvModel::check_optimal`].
pub const CONTAINMENT_TOL: f64 = 1e-6;
/// Default number of b samples when taking the envelope over a continuum of settings.
pub const DEFAULT_ENVELOPE_GRID: usize = 2048;
/// Two settings closer than this (mod π) are considered equal.
pub const SETTING_MATCH_TOL: f64 = 1e-9;

/// Joint probabilities indexed `[x][y]` with `Channel::index`.
pub type Jdp = [[f64; 2]; 2];

/// Column edges `0 = e_0 < e_1 < … < e_K = π`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    edges: Arc<Vec<f64>>,
}

impl Partition {
    pub fn uniform(n: usize) -> Partition {
        let edges = (0..=n).map(|k| PI * k as f64 / n as f64).collect();
        Partition { edges: Arc::new(edges) }
    }

    /// Uniform grid refined so that every breakpoint (taken mod π) is an edge.
    pub fn with_breakpoints(n: usize, breakpoints: &[f64]) -> Partition {
        let mut pts: Vec<f64> = breakpoints.iter().map(|&b| wrap(b, PI)).collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let mut edges: Vec<f64> = Vec::with_capacity(n + pts.len() + 1);
        for k in 0..n {
            let e = PI * k as f64 / n as f64;
            if pts.iter().all(|&p| (p - e).abs() >= 1e-12 && (p + PI - e).abs() >= 1e-12) {
                edges.push(e);
            }
        }
        for p in pts {
            if p >= PI - 1e-12 {
                continue;
            }
            edges.push(if p < 1e-12 { 0.0 } else { p });
        }
        if !edges.contains(&0.0) {
            edges.push(0.0);
        }
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        edges.push(PI);
        Partition { edges: Arc::new(edges) }
    }

    pub fn len(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn width(&self, k: usize) -> f64 {
        self.edges[k + 1] - self.edges[k]
    }

    pub fn midpoint(&self, k: usize) -> f64 {
        0.5 * (self.edges[k] + self.edges[k + 1])
    }

    /// Column containing `x` (taken mod π).
    pub fn locate(&self, x: f64) -> usize {
        let y = wrap(x, PI);
        let k = self.edges.partition_point(|&e| e <= y);
        k.saturating_sub(1).min(self.len() - 1)
    }
}

/// Piecewise-constant density over a partition, stored as column masses.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnTable {
    partition: Partition,
    cum: Vec<f64>,
}

impl ColumnTable {
    pub fn from_masses(partition: Partition, masses: &[f64]) -> ColumnTable {
        assert_eq!(partition.len(), masses.len());
        let mut cum = Vec::with_capacity(masses.len() + 1);
        let mut acc = 0.0;
        cum.push(0.0);
        for &m in masses {
            acc += m;
            cum.push(acc);
        }
        ColumnTable { partition, cum }
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn total(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    pub fn mass(&self, k: usize) -> f64 {
        self.cum[k + 1] - self.cum[k]
    }

    pub fn masses(&self) -> Vec<f64> {
        (0..self.partition.len()).map(|k| self.mass(k)).collect()
    }

    /// Column height, i.e. mass divided by width.
    pub fn thickness(&self, k: usize) -> f64 {
        self.mass(k) / self.partition.width(k)
    }

    pub fn density(&self, x: f64) -> f64 {
        self.thickness(self.partition.locate(x))
    }

    /// Mass on `[0, x)` of the π-periodic extension, for any real `x`.
    pub fn cumulative(&self, x: f64) -> f64 {
        let k = (x / PI).floor();
        let mut y = x - k * PI;
        if y >= PI {
            y = 0.0;
        }
        let e = self.partition.edges();
        let j = e.partition_point(|&v| v <= y).saturating_sub(1).min(self.partition.len() - 1);
        let frac = (y - e[j]) / (e[j + 1] - e[j]);
        k * self.total() + self.cum[j] + frac * (self.cum[j + 1] - self.cum[j])
    }

    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        self.cumulative(hi) - self.cumulative(lo)
    }
}

/// Density `amp · sin 2(λ − start)` on `[start, start + π/2)`, repeated with period π.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfWave {
    pub start: f64,
    pub amp: f64,
}

impl HalfWave {
    pub fn density(&self, x: f64) -> f64 {
        let u = wrap(x - self.start, PI);
        if u < FRAC_PI_2 {
            self.amp * (2.0 * u).sin()
        } else {
            0.0
        }
    }

    /// Mass on `[start, x)` of the periodic extension (negative left of `start`).
    pub fn cumulative(&self, x: f64) -> f64 {
        let d = x - self.start;
        let k = (d / PI).floor();
        let u = d - k * PI;
        let part = if u < FRAC_PI_2 { 0.5 * (1.0 - (2.0 * u).cos()) } else { 1.0 };
        self.amp * (k + part)
    }

    /// Same as [`cumulative`](Self::cumulative) with `cos 2x`, `sin 2x` supplied by the caller.
    fn cumulative_with(&self, x: f64, c2x: f64, s2x: f64, c2s: f64, s2s: f64) -> f64 {
        let d = x - self.start;
        let k = (d / PI).floor();
        let u = d - k * PI;
        let part = if u < FRAC_PI_2 { 0.5 * (1.0 - (c2x * c2s + s2x * s2s)) } else { 1.0 };
        self.amp * (k + part)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BandShape {
    HalfWaves(Vec<HalfWave>),
    Columns(ColumnTable),
}

/// One detector-B band: the region of Λ registering channel `channel` at a given b.
#[derive(Debug, Clone, PartialEq)]
pub struct BandProfile {
    pub channel: Channel,
    pub shape: BandShape,
}

impl BandProfile {
    pub fn density(&self, x: f64) -> f64 {
        match &self.shape {
            BandShape::HalfWaves(w) => w.iter().map(|h| h.density(x)).sum(),
            BandShape::Columns(t) => t.density(x),
        }
    }

    pub fn cumulative(&self, x: f64) -> f64 {
        match &self.shape {
            BandShape::HalfWaves(w) => w.iter().map(|h| h.cumulative(x)).sum(),
            BandShape::Columns(t) => t.cumulative(x),
        }
    }

    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        self.cumulative(hi) - self.cumulative(lo)
    }

    pub fn total(&self) -> f64 {
        match &self.shape {
            BandShape::HalfWaves(w) => w.iter().map(|h| h.amp).sum(),
            BandShape::Columns(t) => t.total(),
        }
    }

    /// Half-open intervals `(start, end)` outside which the density vanishes.
    /// `end` may exceed π for intervals that wrap.
    pub fn support(&self) -> Vec<(f64, f64)> {
        match &self.shape {
            BandShape::HalfWaves(w) => w
                .iter()
                .filter(|h| h.amp > 0.0)
                .map(|h| {
                    let s = wrap(h.start, PI);
                    (s, s + FRAC_PI_2)
                })
                .collect(),
            BandShape::Columns(t) => {
                let p = t.partition();
                let mut out: Vec<(f64, f64)> = Vec::new();
                for k in 0..p.len() {
                    if t.mass(k) > 0.0 {
                        let (lo, hi) = (p.edges()[k], p.edges()[k + 1]);
                        match out.last_mut() {
                            Some(last) if last.1 == lo => last.1 = hi,
                            _ => out.push((lo, hi)),
                        }
                    }
                }
                out
            }
        }
    }

    /// Exact mass in every column of `p`.
    pub fn column_masses(&self, p: &Partition) -> Vec<f64> {
        let e = p.edges();
        let cum: Vec<f64> = e.iter().map(|&x| self.cumulative(x)).collect();
        cum.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect()
    }
}

/// Detector-A classification: `+` inside `[a, a + π/2)` (mod π), `−` elsewhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnRule {
    pub plus_start: f64,
}

impl ColumnRule {
    pub fn at(a: Setting) -> ColumnRule {
        ColumnRule { plus_start: wrap(a.0, PI) }
    }

    pub fn classify(&self, x: f64) -> Channel {
        if wrap(x - self.plus_start, PI) < FRAC_PI_2 {
            Channel::Plus
        } else {
            Channel::Minus
        }
    }

    /// The channel's region as `[lo, lo + π/2)`.
    pub fn window(&self, ch: Channel) -> (f64, f64) {
        let lo = self.plus_start + ch.shift();
        (lo, lo + FRAC_PI_2)
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Bands {
    /// Half-wave bands anchored at θ_±(b), valid for every b.
    Epr(EntangledState),
    /// Bands with minimum points fixed at 0 and π/2.
    Delayed,
    /// Explicit column tables for a finite list of b settings.
    Tabulated { b_list: Vec<f64>, tables: Vec<[ColumnTable; 2]> },
}

fn epr_bands(state: EntangledState, b: Setting) -> [HalfWave; 2] {
    let tp = quantum::theta(state, b, Channel::Plus).expect("polarization state");
    let tm = quantum::theta(state, b, Channel::Minus).expect("polarization state");
    [
        HalfWave { start: tp.0, amp: quantum::band_amplitude(state, b, Channel::Plus) },
        HalfWave { start: tm.0 + FRAC_PI_2, amp: quantum::band_amplitude(state, b, Channel::Minus) },
    ]
}

fn delayed_bands(b: Setting) -> [Vec<HalfWave>; 2] {
    let (s, c) = (0.5 * b.0).sin_cos();
    [
        vec![HalfWave { start: 0.0, amp: 0.25 }, HalfWave { start: FRAC_PI_2, amp: 0.5 * c * c }],
        vec![HalfWave { start: 0.0, amp: 0.25 }, HalfWave { start: FRAC_PI_2, amp: 0.5 * s * s }],
    ]
}

/// Envelope query: a continuum of settings sampled on a grid, or an explicit list.
#[derive(Debug, Clone, PartialEq)]
pub enum BSet {
    All { grid: usize },
    List(Vec<f64>),
}

impl Default for BSet {
    fn default() -> Self {
        BSet::All { grid: DEFAULT_ENVELOPE_GRID }
    }
}

/// Pointwise supremum of the stacked band height, one value per column.
#[derive(Debug, Clone)]
pub struct Envelope {
    pub values: Vec<f64>,
    pub area: f64,
    /// Area obtained from every other grid point without refinement; `None` for lists.
    pub half_grid_area: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Optimality {
    pub optimal: bool,
    /// `(a, channel)` whose detector-A region lies under the envelope.
    pub witness: Option<(f64, Channel)>,
    /// Smallest over candidate windows of `max (T − E)`, relative to `max T`.
    pub best_gap: f64,
}

/// A sample space with its height profile, band family and admissible settings.
#[derive(Debug, Clone)]
pub struct LhvModel {
    descriptor: ModelDescriptor,
    state: EntangledState,
    height: ColumnTable,
    area: f64,
    bands: Bands,
    a_settings: Option<Vec<f64>>,
    s1: Option<f64>,
    phi2_area: Option<f64>,
}

fn matches_setting(list: &[f64], x: f64) -> Option<usize> {
    list.iter().position(|&v| circular_distance(v, x, PI).abs() < SETTING_MATCH_TOL)
}

impl LhvModel {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        descriptor: ModelDescriptor,
        state: EntangledState,
        height: ColumnTable,
        area: Option<f64>,
        bands: Bands,
        a_settings: Option<Vec<f64>>,
        s1: Option<f64>,
        phi2_area: Option<f64>,
    ) -> LhvModel {
        let area = area.unwrap_or_else(|| height.total());
        LhvModel { descriptor, state, height, area, bands, a_settings, s1, phi2_area }
    }

    pub fn descriptor(&self) -> &ModelDescriptor {
        &self.descriptor
    }

    pub(crate) fn set_descriptor(&mut self, d: ModelDescriptor) {
        self.descriptor = d;
    }

    pub fn family(&self) -> Family {
        self.descriptor.family
    }

    pub fn state(&self) -> EntangledState {
        self.state
    }

    pub fn period(&self) -> f64 {
        PI
    }

    pub fn grid_resolution(&self) -> usize {
        self.descriptor.grid_resolution
    }

    pub fn partition(&self) -> &Partition {
        self.height.partition()
    }

    /// Column heights T_k.
    pub fn heights(&self) -> Vec<f64> {
        (0..self.partition().len()).map(|k| self.height.thickness(k)).collect()
    }

    pub fn height_at(&self, x: f64) -> f64 {
        self.height.density(x)
    }

    pub fn height_table(&self) -> &ColumnTable {
        &self.height
    }

    /// Area S of the sample space.
    pub fn total_area(&self) -> f64 {
        self.area
    }

    /// Envelope area on [0, π/2) used during construction, when there is one.
    pub fn s1(&self) -> Option<f64> {
        self.s1
    }

    pub fn phi2_area(&self) -> Option<f64> {
        self.phi2_area
    }

    pub fn a_settings(&self) -> Option<&[f64]> {
        self.a_settings.as_deref()
    }

    pub fn b_settings(&self) -> Option<&[f64]> {
        match &self.bands {
            Bands::Tabulated { b_list, .. } => Some(b_list),
            _ => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.b_settings().is_some()
    }

    pub fn efficiencies(&self) -> Result<EfficiencyReport> {
        efficiencies(self.area)
    }

    pub fn column_rule_at(&self, a: Setting) -> Result<ColumnRule> {
        if !a.0.is_finite() {
            return Err(LhvError::domain("setting must be finite"));
        }
        if let Some(list) = &self.a_settings {
            if matches_setting(list, a.0).is_none() {
                return Err(LhvError::InadmissibleSetting { angle: a.0, side: "A" });
            }
        }
        Ok(ColumnRule::at(a))
    }

    /// Bottom-up band stack `[B_+, B_−]` for setting `b`.
    pub fn bands_at(&self, b: Setting) -> Result<[BandProfile; 2]> {
        if !b.0.is_finite() {
            return Err(LhvError::domain("setting must be finite"));
        }
        let [p, m] = match &self.bands {
            Bands::Epr(state) => {
                let [p, m] = epr_bands(*state, b);
                [BandShape::HalfWaves(vec![p]), BandShape::HalfWaves(vec![m])]
            }
            Bands::Delayed => {
                let [p, m] = delayed_bands(b);
                [BandShape::HalfWaves(p), BandShape::HalfWaves(m)]
            }
            Bands::Tabulated { b_list, tables } => {
                let j = matches_setting(b_list, b.0)
                    .ok_or(LhvError::InadmissibleSetting { angle: b.0, side: "B" })?;
                [BandShape::Columns(tables[j][0].clone()), BandShape::Columns(tables[j][1].clone())]
            }
        };
        Ok([
            BandProfile { channel: Channel::Plus, shape: p },
            BandProfile { channel: Channel::Minus, shape: m },
        ])
    }

    /// LHV joint probabilities `V(A_x(a) ∩ B_y(b)) / S`.
    pub fn eval_jdp(&self, a: Setting, b: Setting) -> Result<Jdp> {
        let rule = self.column_rule_at(a)?;
        let bands = self.bands_at(b)?;
        let mut out = [[0.0; 2]; 2];
        for x in Channel::BOTH {
            let (lo, hi) = rule.window(x);
            for band in &bands {
                out[x.index()][band.channel.index()] = band.mass_between(lo, hi) / self.area;
            }
        }
        Ok(out)
    }

    /// LHV single probabilities for channels `[+, −]`.
    pub fn eval_sdp(&self, setting: Setting, side: Side) -> Result<[f64; 2]> {
        match side {
            Side::A => {
                let rule = self.column_rule_at(setting)?;
                let mut out = [0.0; 2];
                for x in Channel::BOTH {
                    let (lo, hi) = rule.window(x);
                    out[x.index()] = self.height.mass_between(lo, hi) / self.area;
                }
                Ok(out)
            }
            Side::B => {
                let bands = self.bands_at(setting)?;
                Ok([bands[0].total() / self.area, bands[1].total() / self.area])
            }
        }
    }

    /// Probability that detector B registers nothing at setting `b`.
    pub fn no_detect_mass(&self, b: Setting) -> Result<f64> {
        let s = self.eval_sdp(b, Side::B)?;
        Ok(1.0 - s[0] - s[1])
    }

    /// Exact band masses per column for setting `b`, `[plus, minus]`.
    pub fn column_band_masses(&self, b: Setting) -> Result<[Vec<f64>; 2]> {
        let bands = self.bands_at(b)?;
        let p = self.partition();
        Ok([bands[0].column_masses(p), bands[1].column_masses(p)])
    }

    /// Largest amount by which the band stack at `b` exceeds the column height.
    pub fn stack_excess(&self, b: Setting) -> Result<f64> {
        let [mp, mm] = self.column_band_masses(b)?;
        let p = self.partition();
        Ok((0..p.len())
            .map(|k| (mp[k] + mm[k]) / p.width(k) - self.height.thickness(k))
            .fold(f64::NEG_INFINITY, f64::max))
    }

    /// Stacked band height in column `k` at setting `b`, for the closed-form families.
    fn stack_cell(&self, b: f64, k: usize) -> f64 {
        let e = self.partition().edges();
        let (lo, hi) = (e[k], e[k + 1]);
        let mass = match &self.bands {
            Bands::Epr(state) => epr_bands(*state, Setting(b))
                .iter()
                .map(|h| h.cumulative(hi) - h.cumulative(lo))
                .sum::<f64>(),
            Bands::Delayed => delayed_bands(Setting(b))
                .iter()
                .flatten()
                .map(|h| h.cumulative(hi) - h.cumulative(lo))
                .sum::<f64>(),
            Bands::Tabulated { .. } => unreachable!("tabulated bands use explicit lists"),
        };
        mass / (hi - lo)
    }

    /// Stacked band height for every column at setting `b`, using trig tables of the edges.
    fn stack_columns(&self, b: f64, c2: &[f64], s2: &[f64], out: &mut [f64]) {
        let waves: Vec<HalfWave> = match &self.bands {
            Bands::Epr(state) => epr_bands(*state, Setting(b)).to_vec(),
            Bands::Delayed => delayed_bands(Setting(b)).concat(),
            Bands::Tabulated { .. } => unreachable!("tabulated bands use explicit lists"),
        };
        let e = self.partition().edges();
        for v in out.iter_mut() {
            *v = 0.0;
        }
        for h in &waves {
            let (s2s, c2s) = (2.0 * h.start).sin_cos();
            let mut prev = h.cumulative_with(e[0], c2[0], s2[0], c2s, s2s);
            for k in 0..out.len() {
                let next = h.cumulative_with(e[k + 1], c2[k + 1], s2[k + 1], c2s, s2s);
                out[k] += (next - prev).max(0.0);
                prev = next;
            }
        }
        for (k, v) in out.iter_mut().enumerate() {
            *v /= e[k + 1] - e[k];
        }
    }

    /// Pointwise supremum over `set` of the stacked band height.
    pub fn envelope(&self, set: &BSet) -> Result<Envelope> {
        let p = self.partition();
        let n = p.len();
        let list = match (set, &self.bands) {
            (BSet::List(l), _) => Some(l.clone()),
            (BSet::All { .. }, Bands::Tabulated { b_list, .. }) => Some(b_list.clone()),
            _ => None,
        };
        let area_of = |v: &[f64]| v.iter().enumerate().map(|(k, h)| h * p.width(k)).sum::<f64>();
        if let Some(list) = list {
            let mut values = vec![0.0_f64; n];
            for &b in &list {
                let [mp, mm] = self.column_band_masses(Setting(b))?;
                for k in 0..n {
                    values[k] = values[k].max((mp[k] + mm[k]) / p.width(k));
                }
            }
            let area = area_of(&values);
            return Ok(Envelope { values, area, half_grid_area: None });
        }
        let grid = match set {
            BSet::All { grid } => *grid,
            BSet::List(_) => unreachable!(),
        };
        if grid < 2 {
            return Err(LhvError::domain("envelope grid needs at least two points"));
        }
        // EPR stacks repeat with period π/2 in b; delayed-choice stacks with period 2π
        let span = match self.bands {
            Bands::Delayed => 2.0 * PI,
            _ => FRAC_PI_2,
        };
        let step = span / grid as f64;
        let e = p.edges();
        let c2: Vec<f64> = e.iter().map(|x| (2.0 * x).cos()).collect();
        let s2: Vec<f64> = e.iter().map(|x| (2.0 * x).sin()).collect();
        let mut best = vec![f64::NEG_INFINITY; n];
        let mut best_b = vec![0.0; n];
        let mut half = vec![f64::NEG_INFINITY; n];
        let mut buf = vec![0.0; n];
        for i in 0..grid {
            let b = i as f64 * step;
            self.stack_columns(b, &c2, &s2, &mut buf);
            for k in 0..n {
                if buf[k] > best[k] {
                    best[k] = buf[k];
                    best_b[k] = b;
                }
                if i % 2 == 0 && buf[k] > half[k] {
                    half[k] = buf[k];
                }
            }
        }
        let half_grid_area = area_of(&half);
        for k in 0..n {
            let (_, v) =
                golden_max(|b| self.stack_cell(b, k), best_b[k] - step, best_b[k] + step, 1e-10);
            if v > best[k] {
                best[k] = v;
            }
        }
        let area = area_of(&best);
        Ok(Envelope { values: best, area, half_grid_area: Some(half_grid_area) })
    }

    /// Whether some detector-A region lies under the envelope of the detector-B bands.
    pub fn check_optimal(&self) -> Result<Optimality> {
        let env = self.envelope(&BSet::default())?;
        let p = self.partition();
        let t = self.heights();
        let max_t = t.iter().cloned().fold(0.0, f64::max);
        let gap: Vec<f64> = (0..p.len()).map(|k| t[k] - env.values[k]).collect();
        let window_gap = |lo: f64| {
            let mut worst = f64::NEG_INFINITY;
            for (k, &g) in gap.iter().enumerate() {
                if wrap(p.midpoint(k) - lo, PI) < FRAC_PI_2 {
                    worst = worst.max(g);
                }
            }
            worst
        };
        let mut candidates: Vec<(f64, Channel)> = Vec::new();
        match &self.a_settings {
            Some(list) => {
                for &a in list {
                    for ch in Channel::BOTH {
                        candidates.push((a, ch));
                    }
                }
            }
            None => {
                for &e in &p.edges()[..p.len()] {
                    candidates.push((e, Channel::Plus));
                }
            }
        }
        let mut best: Option<(f64, Channel, f64)> = None;
        for (a, ch) in candidates {
            let g = window_gap(a + ch.shift());
            if best.is_none_or(|(_, _, bg)| g < bg) {
                best = Some((a, ch, g));
            }
        }
        let (a, ch, g) = best.ok_or_else(|| LhvError::Numerical("no candidate windows".into()))?;
        let rel = g / max_t;
        let optimal = g <= CONTAINMENT_TOL * max_t;
        Ok(Optimality { optimal, witness: optimal.then_some((a, ch)), best_gap: rel })
    }

    /// Copy with `extra` added to the height of every column.
    pub fn inflated(&self, extra: f64) -> LhvModel {
        let p = self.partition().clone();
        let masses: Vec<f64> =
            (0..p.len()).map(|k| self.height.mass(k) + extra * p.width(k)).collect();
        let mut m = self.clone();
        m.height = ColumnTable::from_masses(p, &masses);
        m.area = self.area + extra * PI;
        m.descriptor.height_offset = Some(self.descriptor.height_offset.unwrap_or(0.0) + extra);
        m.phi2_area = None;
        m
    }

    /// Replace closed-form bands by their per-column masses at the listed settings.
    pub fn polygonized(&self, b_list: &[f64]) -> Result<LhvModel> {
        let p = self.partition().clone();
        let mut tables = Vec::with_capacity(b_list.len());
        for &b in b_list {
            let [mp, mm] = self.column_band_masses(Setting(b))?;
            tables.push([ColumnTable::from_masses(p.clone(), &mp), ColumnTable::from_masses(p.clone(), &mm)]);
        }
        let mut m = self.clone();
        m.bands = Bands::Tabulated { b_list: b_list.to_vec(), tables };
        Ok(m)
    }
}

/// Efficiencies implied by a sample-space area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    #[serde(rename = "S")]
    pub s: f64,
    pub eta_ab: f64,
    pub eta_1: f64,
    pub eta_2: f64,
    pub eta_cond: f64,
}

/// `η_AB = 1/S`, `η₁ = (S+1)/(2S)`, `η₂ = η_cond = 2/(S+1)`.
pub fn efficiencies(s: f64) -> Result<EfficiencyReport> {
    if !s.is_finite() || s < 1.0 - 1e-12 {
        return Err(LhvError::domain(format!("sample-space area must be at least 1, got {s}")));
    }
    let s = s.max(1.0);
    Ok(EfficiencyReport {
        s,
        eta_ab: 1.0 / s,
        eta_1: (s + 1.0) / (2.0 * s),
        eta_2: 2.0 / (s + 1.0),
        eta_cond: 2.0 / (s + 1.0),
    })
}

/// A sample space joined with its mirror image, optionally padded with background.
#[derive(Debug, Clone)]
pub struct SymmetricModel {
    pub base: Arc<LhvModel>,
    /// Mirror half with detector roles swapped; `None` when the base already has S = 1.
    pub mirror: Option<Arc<LhvModel>>,
    /// Area per side including background, S′ ≥ S.
    pub padded_height_area: f64,
}

fn transpose(j: Jdp) -> Jdp {
    [[j[0][0], j[1][0]], [j[0][1], j[1][1]]]
}

impl SymmetricModel {
    pub fn area(&self) -> f64 {
        self.base.total_area()
    }

    /// Probability that a trial falls in the undetectable background.
    pub fn background_fraction(&self) -> f64 {
        (self.padded_height_area - self.area()) / self.padded_height_area
    }

    pub fn jdp(&self, a: Setting, b: Setting) -> Result<Jdp> {
        let s = self.area();
        let base = self.base.eval_jdp(a, b)?;
        let mut out = [[0.0; 2]; 2];
        match &self.mirror {
            Some(m) => {
                let mir = transpose(m.eval_jdp(b, a)?);
                for x in 0..2 {
                    for y in 0..2 {
                        out[x][y] = 0.5 * s * (base[x][y] + mir[x][y]) / self.padded_height_area;
                    }
                }
            }
            None => {
                for x in 0..2 {
                    for y in 0..2 {
                        out[x][y] = s * base[x][y] / self.padded_height_area;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn sdp(&self, setting: Setting, side: Side) -> Result<[f64; 2]> {
        let s = self.area();
        let base = self.base.eval_sdp(setting, side)?;
        let scale = s / self.padded_height_area;
        match &self.mirror {
            Some(m) => {
                let other = match side {
                    Side::A => Side::B,
                    Side::B => Side::A,
                };
                let mir = m.eval_sdp(setting, other)?;
                Ok([0.5 * scale * (base[0] + mir[0]), 0.5 * scale * (base[1] + mir[1])])
            }
            None => Ok([scale * base[0], scale * base[1]]),
        }
    }

    /// Coincidence efficiency `P_xy / P_xy^QM`.
    pub fn coincidence_efficiency(&self) -> f64 {
        1.0 / self.padded_height_area
    }

    /// Singles efficiency `P_x / P_x^QM`, equal on both sides.
    pub fn singles_efficiency(&self) -> f64 {
        match self.mirror {
            Some(_) => (self.area() + 1.0) / (2.0 * self.padded_height_area),
            None => 1.0 / self.padded_height_area,
        }
    }
}

/// Join a model with its mirror image so both detectors see the same efficiency.
pub fn symmetrize(m: Arc<LhvModel>) -> Result<SymmetricModel> {
    let s = m.total_area();
    if (s - 1.0).abs() <= 1e-12 {
        return Ok(SymmetricModel { base: m, mirror: None, padded_height_area: s });
    }
    if matches!(m.state(), EntangledState::DelayedChoice) {
        return Err(LhvError::domain("mirror construction needs a state symmetric under A ↔ B"));
    }
    let mirror = if m.is_finite() { Arc::new(crate::models::mirror_model(&m)?) } else { Arc::clone(&m) };
    symmetrize_with(m, mirror)
}

/// Join `base` with an explicitly supplied mirror half.
pub fn symmetrize_with(base: Arc<LhvModel>, mirror: Arc<LhvModel>) -> Result<SymmetricModel> {
    let (s, sm) = (base.total_area(), mirror.total_area());
    if ((s - sm) / s).abs() > 1e-9 {
        return Err(LhvError::Numerical(format!("mirror area {sm} differs from base area {s}")));
    }
    Ok(SymmetricModel { base, mirror: Some(mirror), padded_height_area: s })
}

/// Add background so that coincidence efficiency equals the square of singles efficiency.
///
/// A model with S = 1 needs no background and is returned unchanged.
pub fn pad_independent(sm: SymmetricModel) -> SymmetricModel {
    let s = sm.area();
    if (s - 1.0).abs() <= 1e-12 {
        return sm;
    }
    SymmetricModel { padded_height_area: 0.25 * (s + 1.0) * (s + 1.0), ..sm }
}
