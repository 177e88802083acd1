//! Event-level simulation of detection records.
//!
//! Trials are split into chunks of [`CHUNK`] consecutive indices. Chunk `c` draws from
//! `ChaCha8Rng::seed_from_u64(seed)` on stream `c`, so the record stream of a given
//! seed does not depend on how many worker threads process the chunks.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LhvError, Result};
use crate::models::SettingsGrid;
use crate::quantum::{self, Channel, EntangledState, Setting};
use crate::sample_space::{ColumnRule, LhvModel, SymmetricModel};

pub const CHUNK: usize = 65_536;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Plus,
    Minus,
    NoDetect,
}

impl Outcome {
    pub fn symbol(self) -> char {
        match self {
            Outcome::Plus => '+',
            Outcome::Minus => '-',
            Outcome::NoDetect => '0',
        }
    }

    pub fn channel(self) -> Option<Channel> {
        match self {
            Outcome::Plus => Some(Channel::Plus),
            Outcome::Minus => Some(Channel::Minus),
            Outcome::NoDetect => None,
        }
    }
}

impl From<Channel> for Outcome {
    fn from(c: Channel) -> Outcome {
        match c {
            Channel::Plus => Outcome::Plus,
            Channel::Minus => Outcome::Minus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub a_index: usize,
    pub b_index: usize,
    pub outcome_a: Outcome,
    pub outcome_b: Outcome,
}

/// Aggregated counts. Joint and singles arrays are indexed by channel `[+, −]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountsTable {
    pub n: u64,
    pub na: usize,
    pub nb: usize,
    /// Trials per setting pair `[i][j]`.
    pub trials: Vec<Vec<u64>>,
    pub joint: Vec<Vec<[[u64; 2]; 2]>>,
    pub singles_a: Vec<[u64; 2]>,
    pub singles_b: Vec<[u64; 2]>,
    /// Side-A detections split by setting pair, for the no-signaling test.
    pub pair_singles_a: Vec<Vec<[u64; 2]>>,
    pub pair_singles_b: Vec<Vec<[u64; 2]>>,
}

impl CountsTable {
    pub fn new(na: usize, nb: usize) -> CountsTable {
        CountsTable {
            n: 0,
            na,
            nb,
            trials: vec![vec![0; nb]; na],
            joint: vec![vec![[[0; 2]; 2]; nb]; na],
            singles_a: vec![[0; 2]; na],
            singles_b: vec![[0; 2]; nb],
            pair_singles_a: vec![vec![[0; 2]; nb]; na],
            pair_singles_b: vec![vec![[0; 2]; nb]; na],
        }
    }

    pub fn record(&mut self, t: &TrialRecord) {
        let (i, j) = (t.a_index, t.b_index);
        self.n += 1;
        self.trials[i][j] += 1;
        let (x, y) = (t.outcome_a.channel(), t.outcome_b.channel());
        if let Some(x) = x {
            self.singles_a[i][x.index()] += 1;
            self.pair_singles_a[i][j][x.index()] += 1;
        }
        if let Some(y) = y {
            self.singles_b[j][y.index()] += 1;
            self.pair_singles_b[i][j][y.index()] += 1;
        }
        if let (Some(x), Some(y)) = (x, y) {
            self.joint[i][j][x.index()][y.index()] += 1;
        }
    }

    /// Add another table over the same schedule.
    pub fn merge(&mut self, other: &CountsTable) {
        assert_eq!((self.na, self.nb), (other.na, other.nb), "schedule shape mismatch");
        self.n += other.n;
        for i in 0..self.na {
            for j in 0..self.nb {
                self.trials[i][j] += other.trials[i][j];
                for x in 0..2 {
                    self.pair_singles_a[i][j][x] += other.pair_singles_a[i][j][x];
                    self.pair_singles_b[i][j][x] += other.pair_singles_b[i][j][x];
                    for y in 0..2 {
                        self.joint[i][j][x][y] += other.joint[i][j][x][y];
                    }
                }
            }
        }
        for i in 0..self.na {
            for x in 0..2 {
                self.singles_a[i][x] += other.singles_a[i][x];
            }
        }
        for j in 0..self.nb {
            for y in 0..2 {
                self.singles_b[j][y] += other.singles_b[j][y];
            }
        }
    }

    pub fn total_joint(&self) -> u64 {
        self.joint.iter().flatten().flatten().flatten().sum()
    }

    pub fn total_singles_a(&self) -> u64 {
        self.singles_a.iter().flatten().sum()
    }

    pub fn total_singles_b(&self) -> u64 {
        self.singles_b.iter().flatten().sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("counts serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<CountsTable> {
        let t: CountsTable =
            serde_json::from_str(s).map_err(|e| LhvError::domain(format!("invalid counts table: {e}")))?;
        t.check_shape()?;
        Ok(t)
    }

    fn check_shape(&self) -> Result<()> {
        let ok = self.trials.len() == self.na
            && self.joint.len() == self.na
            && self.singles_a.len() == self.na
            && self.singles_b.len() == self.nb
            && self.pair_singles_a.len() == self.na
            && self.pair_singles_b.len() == self.na
            && self.trials.iter().all(|r| r.len() == self.nb)
            && self.joint.iter().all(|r| r.len() == self.nb)
            && self.pair_singles_a.iter().all(|r| r.len() == self.nb)
            && self.pair_singles_b.iter().all(|r| r.len() == self.nb);
        if !ok {
            return Err(LhvError::domain("counts table arrays do not match na × nb"));
        }
        if self.trials.iter().flatten().sum::<u64>() != self.n {
            return Err(LhvError::domain("per-pair trial counts do not sum to n"));
        }
        Ok(())
    }
}

pub fn tabulate<'a>(trials: impl IntoIterator<Item = &'a TrialRecord>, na: usize, nb: usize) -> CountsTable {
    let mut t = CountsTable::new(na, nb);
    for r in trials {
        t.record(r);
    }
    t
}

/// One half of the sample space prepared for sampling: the column table of T and, for
/// each schedule setting, the detector rule acting on it.
struct SidePlan {
    cumulative: Vec<f64>,
    edges: Vec<f64>,
    thickness: Vec<f64>,
    rules: Vec<ColumnRule>,
    /// Per band setting: upper edge of the `+` band and of the whole stack, per column.
    bands: Vec<(Vec<f64>, Vec<f64>)>,
}

impl SidePlan {
    fn new(m: &LhvModel, column_settings: &[f64], band_settings: &[f64]) -> Result<SidePlan> {
        let table = m.height_table();
        let p = m.partition();
        let n = p.len();
        let thickness: Vec<f64> = (0..n).map(|k| table.thickness(k)).collect();
        let mut cumulative = Vec::with_capacity(n);
        let mut acc = 0.0;
        for k in 0..n {
            acc += table.mass(k);
            cumulative.push(acc);
        }
        let rules = column_settings.iter().map(|&a| m.column_rule_at(Setting(a))).collect::<Result<Vec<_>>>()?;
        let mut bands = Vec::with_capacity(band_settings.len());
        for &b in band_settings {
            let [mp, mm] = m.column_band_masses(Setting(b))?;
            let mut plus = Vec::with_capacity(n);
            let mut top = Vec::with_capacity(n);
            for k in 0..n {
                let w = p.width(k);
                let t = thickness[k];
                let mut s = (mp[k] + mm[k]) / w;
                // a band stack filling the column up to rounding fills it exactly
                if (t - s).abs() <= 1e-12 * t.max(1e-300) {
                    s = t;
                }
                plus.push(mp[k] / w);
                top.push(s);
            }
            bands.push((plus, top));
        }
        Ok(SidePlan { cumulative, edges: p.edges().to_vec(), thickness, rules, bands })
    }

    /// `(column outcome, band outcome)` for one point drawn from this half.
    fn draw(&self, rng: &mut ChaCha8Rng, column_setting: usize, band_setting: usize) -> (Outcome, Outcome) {
        let total = *self.cumulative.last().unwrap();
        let u = rng.random::<f64>() * total;
        let k = self.cumulative.partition_point(|&c| c <= u).min(self.cumulative.len() - 1);
        let lambda = self.edges[k] + rng.random::<f64>() * (self.edges[k + 1] - self.edges[k]);
        let h = rng.random::<f64>() * self.thickness[k];
        let col = Outcome::from(self.rules[column_setting].classify(lambda));
        let (plus, top) = &self.bands[band_setting];
        let band = if h < plus[k] {
            Outcome::Plus
        } else if h < top[k] {
            Outcome::Minus
        } else {
            Outcome::NoDetect
        };
        (col, band)
    }
}

/// Sampler over a symmetrized, possibly padded model and a fixed schedule.
pub struct ModelSampler {
    base: SidePlan,
    mirror: Option<SidePlan>,
    background: f64,
    na: usize,
    nb: usize,
}

impl ModelSampler {
    pub fn new(sm: &SymmetricModel, schedule: &SettingsGrid) -> Result<ModelSampler> {
        let base = SidePlan::new(&sm.base, &schedule.a_list, &schedule.b_list)?;
        let mirror = match &sm.mirror {
            Some(m) => Some(SidePlan::new(m, &schedule.b_list, &schedule.a_list)?),
            None => None,
        };
        Ok(ModelSampler { base, mirror, background: sm.background_fraction().max(0.0), na: schedule.na(), nb: schedule.nb() })
    }

    fn trial(&self, rng: &mut ChaCha8Rng) -> TrialRecord {
        let i = rng.random_range(0..self.na);
        let j = rng.random_range(0..self.nb);
        let mirrored = self.mirror.is_some() && rng.random::<bool>();
        let (outcome_a, outcome_b) = if rng.random::<f64>() < self.background {
            (Outcome::NoDetect, Outcome::NoDetect)
        } else if mirrored {
            let (col, band) = self.mirror.as_ref().unwrap().draw(rng, j, i);
            (band, col)
        } else {
            self.base.draw(rng, i, j)
        };
        TrialRecord { a_index: i, b_index: j, outcome_a, outcome_b }
    }
}

/// Independent-error quantum detector: outcomes from the quantum JDP, each side
/// erased independently with probability `1 − η`.
pub struct QuantumSampler {
    /// Cumulative cell probabilities per setting pair, cells ordered `(+,+), (+,−), (−,+), (−,−)`.
    cells: Vec<Vec<[f64; 4]>>,
    eta: f64,
    na: usize,
    nb: usize,
}

impl QuantumSampler {
    pub fn new(state: EntangledState, schedule: &SettingsGrid, eta: f64) -> Result<QuantumSampler> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(LhvError::domain(format!("efficiency must lie in (0, 1], got {eta}")));
        }
        let mut cells = Vec::with_capacity(schedule.na());
        for &a in &schedule.a_list {
            let mut row = Vec::with_capacity(schedule.nb());
            for &b in &schedule.b_list {
                let mut c = [0.0; 4];
                let mut acc = 0.0;
                for (q, (x, y)) in [
                    (Channel::Plus, Channel::Plus),
                    (Channel::Plus, Channel::Minus),
                    (Channel::Minus, Channel::Plus),
                    (Channel::Minus, Channel::Minus),
                ]
                .into_iter()
                .enumerate()
                {
                    acc += quantum::jdp(state, Setting(a), Setting(b), x, y);
                    c[q] = acc;
                }
                row.push(c);
            }
            cells.push(row);
        }
        Ok(QuantumSampler { cells, eta, na: schedule.na(), nb: schedule.nb() })
    }

    fn trial(&self, rng: &mut ChaCha8Rng) -> TrialRecord {
        let i = rng.random_range(0..self.na);
        let j = rng.random_range(0..self.nb);
        let c = &self.cells[i][j];
        let u = rng.random::<f64>() * c[3];
        let q = c.iter().position(|&v| u < v).unwrap_or(3);
        let channels = [Channel::Plus, Channel::Minus];
        let mut outcome_a = Outcome::from(channels[q / 2]);
        let mut outcome_b = Outcome::from(channels[q % 2]);
        if rng.random::<f64>() >= self.eta {
            outcome_a = Outcome::NoDetect;
        }
        if rng.random::<f64>() >= self.eta {
            outcome_b = Outcome::NoDetect;
        }
        TrialRecord { a_index: i, b_index: j, outcome_a, outcome_b }
    }
}

/// A source of trials that can be replayed chunk by chunk.
pub trait TrialSource: Sync {
    fn shape(&self) -> (usize, usize);
    fn draw(&self, rng: &mut ChaCha8Rng) -> TrialRecord;
}

impl TrialSource for ModelSampler {
    fn shape(&self) -> (usize, usize) {
        (self.na, self.nb)
    }
    fn draw(&self, rng: &mut ChaCha8Rng) -> TrialRecord {
        self.trial(rng)
    }
}

impl TrialSource for QuantumSampler {
    fn shape(&self) -> (usize, usize) {
        (self.na, self.nb)
    }
    fn draw(&self, rng: &mut ChaCha8Rng) -> TrialRecord {
        self.trial(rng)
    }
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

fn chunks(n: usize) -> Vec<(usize, usize)> {
    (0..n.div_ceil(CHUNK)).map(|c| (c, CHUNK.min(n - c * CHUNK))).collect()
}

/// All trial records in index order.
pub fn generate<S: TrialSource>(source: &S, n: usize, seed: u64) -> Vec<TrialRecord> {
    let parts: Vec<Vec<TrialRecord>> = chunks(n)
        .into_par_iter()
        .map(|(c, len)| {
            let mut rng = chunk_rng(seed, c);
            (0..len).map(|_| source.draw(&mut rng)).collect()
        })
        .collect();
    parts.into_iter().flatten().collect()
}

/// Counts of `n` trials, without materializing the records.
pub fn count<S: TrialSource>(source: &S, n: usize, seed: u64) -> CountsTable {
    let (na, nb) = source.shape();
    let parts: Vec<CountsTable> = chunks(n)
        .into_par_iter()
        .map(|(c, len)| {
            let mut rng = chunk_rng(seed, c);
            let mut t = CountsTable::new(na, nb);
            for _ in 0..len {
                t.record(&source.draw(&mut rng));
            }
            t
        })
        .collect();
    let mut out = CountsTable::new(na, nb);
    for p in &parts {
        out.merge(p);
    }
    out
}

pub fn sample_trials(sm: &SymmetricModel, schedule: &SettingsGrid, n: usize, seed: u64) -> Result<Vec<TrialRecord>> {
    Ok(generate(&ModelSampler::new(sm, schedule)?, n, seed))
}

pub fn simulate_counts(sm: &SymmetricModel, schedule: &SettingsGrid, n: usize, seed: u64) -> Result<CountsTable> {
    Ok(count(&ModelSampler::new(sm, schedule)?, n, seed))
}

pub fn quantum_sampler(
    state: EntangledState,
    schedule: &SettingsGrid,
    eta: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<TrialRecord>> {
    Ok(generate(&QuantumSampler::new(state, schedule, eta)?, n, seed))
}

pub fn quantum_counts(state: EntangledState, schedule: &SettingsGrid, eta: f64, n: usize, seed: u64) -> Result<CountsTable> {
    Ok(count(&QuantumSampler::new(state, schedule, eta)?, n, seed))
}

/// Trial stream as CSV `trial,a_index,b_index,outA,outB`.
pub fn trials_csv(trials: &[TrialRecord]) -> String {
    let mut out = String::with_capacity(16 * trials.len() + 32);
    out.push_str("trial,a_index,b_index,outA,outB\n");
    for (k, t) in trials.iter().enumerate() {
        let _ = writeln!(out, "{k},{},{},{},{}", t.a_index, t.b_index, t.outcome_a.symbol(), t.outcome_b.symbol());
    }
    out
}

/// Schedule of `n` equally spaced settings on `[0, π)` for both sides.
pub fn uniform_schedule(n: usize) -> Result<SettingsGrid> {
    let v: Vec<f64> = (0..n).map(|k| k as f64 * PI / n as f64).collect();
    SettingsGrid::new(v.clone(), v)
}
