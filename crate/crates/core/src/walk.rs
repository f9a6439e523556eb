//! Local-time fields of the walk parametrized by the local time at `ρ`.
//!
//! Up to `ρ`-local time `t` the walk makes `Poisson(π(ρ) t)` independent excursions.
//! Each enters `V` through a uniformly chosen `ρ`-edge and follows the jump chain
//! (uniform over the four edge slots; a slot to `ρ` ends it). Every visit to `v` adds
//! an independent `Exp(1)/4` to the local time there. Only the jump chain is
//! simulated; the holding times never drive a clock.
//!
//! Excursion `i` always draws from the stream keyed by `(seed, i)`, and excursions
//! are processed in fixed-size chunks whose partial results are merged either with
//! integer addition or in chunk order, so results do not depend on the number of
//! worker threads.

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, Geometric, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LatticeGraph, RHO};
use crate::rng::{stream, Purpose};
use crate::SITE_DEGREE;

/// Excursions per work unit.
const CHUNK: u64 = 256;
/// Sites per holding-time stream in the aggregated path.
const SITE_BLOCK: usize = 4096;

/// How holding times are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HoldingMode {
    /// One `Exp(1)` per visit, drawn inside the excursion.
    PerVisit,
    /// Visits are counted first; each site then receives one `Gamma(visits, 1)`.
    #[default]
    Aggregated,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalTimeField {
    pub t: f64,
    /// `L_t(v)` in vertex order.
    pub local_time: Vec<f64>,
    pub visits: Vec<u64>,
    pub excursion_count: u64,
    pub seed: u64,
    /// Number of extensions applied; keys the per-extension streams.
    pub epoch: u64,
    pub holding: HoldingMode,
}

impl LocalTimeField {
    pub fn len(&self) -> usize {
        self.local_time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.local_time.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.local_time.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.local_time.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Two-bit direction draws from 64-bit words.
struct Steps {
    rng: ChaCha8Rng,
    word: u64,
    left: u32,
}

impl Steps {
    fn new(rng: ChaCha8Rng) -> Self {
        Self { rng, word: 0, left: 0 }
    }

    #[inline]
    fn next_slot(&mut self) -> usize {
        if self.left == 0 {
            self.word = self.rng.next_u64();
            self.left = 32;
        }
        let slot = (self.word & 3) as usize;
        self.word >>= 2;
        self.left -= 1;
        slot
    }
}

/// Runs excursion `index`, calling `visit(v)` at every visit.
#[inline]
fn run_excursion(g: &LatticeGraph, seed: u64, index: u64, mut visit: impl FnMut(usize)) {
    let mut rng = stream(seed, Purpose::Excursion, 0, index);
    let entries = g.boundary_edges();
    let mut v = entries[rng.random_range(0..entries.len())] as usize;
    let table = g.neighbor_table();
    let mut steps = Steps::new(rng);
    loop {
        visit(v);
        let w = table[v][steps.next_slot()];
        if w == RHO {
            return;
        }
        v = w as usize;
    }
}

/// Visit counts of excursions `range`, summed over chunks in parallel.
pub fn count_visits(g: &LatticeGraph, seed: u64, range: std::ops::Range<u64>) -> Vec<u32> {
    let n = g.len();
    let (start, end) = (range.start, range.end);
    if end <= start {
        return vec![0; n];
    }
    let chunks = (end - start).div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .fold(
            || vec![0u32; n],
            |mut acc, c| {
                let lo = start + c * CHUNK;
                for i in lo..(lo + CHUNK).min(end) {
                    run_excursion(g, seed, i, |v| acc[v] += 1);
                }
                acc
            },
        )
        .reduce(
            || vec![0u32; n],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        )
}

/// Visit counts and per-visit holding sums for excursions `range`. Chunk partials are
/// merged in chunk order so the floating-point sums are reproducible.
fn per_visit_fields(g: &LatticeGraph, seed: u64, range: std::ops::Range<u64>) -> (Vec<u32>, Vec<f64>) {
    let n = g.len();
    let (start, end) = (range.start, range.end);
    let mut visits = vec![0u32; n];
    let mut lt = vec![0.0f64; n];
    if end <= start {
        return (visits, lt);
    }
    let chunks = (end - start).div_ceil(CHUNK);
    let wave = rayon::current_num_threads().max(1) as u64;
    let mut c0 = 0;
    while c0 < chunks {
        let c1 = (c0 + wave).min(chunks);
        let partials: Vec<(Vec<u32>, Vec<f64>)> = (c0..c1)
            .into_par_iter()
            .map(|c| {
                let mut pv = vec![0u32; n];
                let mut pl = vec![0.0f64; n];
                let lo = start + c * CHUNK;
                for i in lo..(lo + CHUNK).min(end) {
                    // Holding times use their own stream so paths match the
                    // aggregated mode.
                    let mut hold = stream(seed, Purpose::VisitHolding, 0, i);
                    run_excursion(g, seed, i, |v| {
                        pv[v] += 1;
                        let e: f64 = Exp1.sample(&mut hold);
                        pl[v] += e / SITE_DEGREE;
                    });
                }
                (pv, pl)
            })
            .collect();
        for (pv, pl) in partials {
            for v in 0..n {
                visits[v] += pv[v];
                lt[v] += pl[v];
            }
        }
        c0 = c1;
    }
    (visits, lt)
}

/// `Gamma(visits(v), 1) / 4` per site from streams keyed by `(seed, epoch, block)`.
fn aggregated_holding(visits: &[u32], seed: u64, epoch: u64) -> Vec<f64> {
    let mut out = vec![0.0; visits.len()];
    out.par_chunks_mut(SITE_BLOCK)
        .zip(visits.par_chunks(SITE_BLOCK))
        .enumerate()
        .for_each(|(b, (o, vs))| {
            let mut rng = stream(seed, Purpose::SiteHolding, epoch, b as u64);
            for (slot, &k) in o.iter_mut().zip(vs) {
                *slot = match k {
                    0 => 0.0,
                    1 => {
                        let e: f64 = Exp1.sample(&mut rng);
                        e / SITE_DEGREE
                    }
                    k => Gamma::new(f64::from(k), 1.0).expect("positive shape").sample(&mut rng) / SITE_DEGREE,
                };
            }
        });
    out
}

fn poisson_count(mean: f64, seed: u64, epoch: u64) -> Result<u64> {
    if !(mean >= 0.0) || !mean.is_finite() {
        return Err(Error::InvalidParameter(format!("Poisson mean must be finite and nonnegative, got {mean}")));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    let mut rng = stream(seed, Purpose::ExcursionCount, epoch, 0);
    let k: f64 = Poisson::new(mean)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?
        .sample(&mut rng);
    Ok(k as u64)
}

/// Local-time field at `ρ`-local time `t`, aggregated holding times.
pub fn sample_field(g: &LatticeGraph, t: f64, seed: u64) -> Result<LocalTimeField> {
    sample_field_with(g, t, seed, HoldingMode::Aggregated)
}

pub fn sample_field_with(g: &LatticeGraph, t: f64, seed: u64, holding: HoldingMode) -> Result<LocalTimeField> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("t must be nonnegative, got {t}")));
    }
    let k = poisson_count(g.pi_rho() as f64 * t, seed, 0)?;
    let (visits, local_time) = excursion_fields(g, seed, 0, 0..k, holding);
    Ok(LocalTimeField {
        t,
        local_time,
        visits: visits.into_iter().map(u64::from).collect(),
        excursion_count: k,
        seed,
        epoch: 0,
        holding,
    })
}

fn excursion_fields(
    g: &LatticeGraph,
    seed: u64,
    epoch: u64,
    range: std::ops::Range<u64>,
    holding: HoldingMode,
) -> (Vec<u32>, Vec<f64>) {
    match holding {
        HoldingMode::Aggregated => {
            let visits = count_visits(g, seed, range);
            let lt = aggregated_holding(&visits, seed, epoch);
            (visits, lt)
        }
        HoldingMode::PerVisit => per_visit_fields(g, seed, range),
    }
}

/// Adds `Poisson(π(ρ) dt)` further excursions: the result has the law of the field at
/// `t + dt`.
pub fn extend_field(g: &LatticeGraph, f: &LocalTimeField, dt: f64) -> Result<LocalTimeField> {
    if f.len() != g.len() {
        return Err(Error::ShapeMismatch { expected: g.len(), got: f.len() });
    }
    if !(dt >= 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be nonnegative, got {dt}")));
    }
    if dt == 0.0 {
        return Ok(f.clone());
    }
    let epoch = f.epoch + 1;
    let extra = poisson_count(g.pi_rho() as f64 * dt, f.seed, epoch)?;
    let range = f.excursion_count..f.excursion_count + extra;
    let (visits, lt) = excursion_fields(g, f.seed, epoch, range, f.holding);
    let mut out = f.clone();
    out.t += dt;
    out.epoch = epoch;
    out.excursion_count += extra;
    for v in 0..g.len() {
        out.visits[v] += u64::from(visits[v]);
        out.local_time[v] += lt[v];
    }
    Ok(out)
}

/// Exact sampler for a single site: `(1/4) Σ_{k≤K} Gamma(Z_k, 1)` with
/// `K ~ Poisson(t/G)`, `Z_k ~ Geometric(p)` on `{1, 2, …}` and `1/p = 4 G`.
#[derive(Clone, Debug)]
pub struct CompoundSampler {
    count: Option<Poisson<f64>>,
    geometric: Geometric,
}

impl CompoundSampler {
    pub fn new(gxx: f64, t: f64) -> Result<Self> {
        if !(gxx > 0.0) || !(t >= 0.0) {
            return Err(Error::InvalidParameter(format!("need G > 0 and t >= 0, got G={gxx}, t={t}")));
        }
        let p = 1.0 / (SITE_DEGREE * gxx);
        if p > 1.0 + 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "escape probability p = 1/(4G) = {p} exceeds 1 (G = {gxx} < 1/4)"
            )));
        }
        let geometric = Geometric::new(p.min(1.0)).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let count = if t > 0.0 {
            Some(Poisson::new(t / gxx).map_err(|e| Error::InvalidParameter(e.to_string()))?)
        } else {
            None
        };
        Ok(Self { count, geometric })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let Some(count) = &self.count else { return 0.0 };
        let k = count.sample(rng) as u64;
        let mut total = 0.0;
        for _ in 0..k {
            let z = 1 + self.geometric.sample(rng);
            total += if z == 1 {
                Exp1.sample(rng)
            } else {
                Gamma::new(z as f64, 1.0).expect("positive shape").sample(rng)
            };
        }
        total / SITE_DEGREE
    }
}

pub fn single_site_sample<R: Rng + ?Sized>(gxx: f64, t: f64, rng: &mut R) -> Result<f64> {
    Ok(CompoundSampler::new(gxx, t)?.sample(rng))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverResult {
    /// `ρ`-local time at which the last vertex is first visited.
    pub t: f64,
    pub last_vertex: usize,
    /// Number of excursions started, the covering one included.
    pub excursions: u64,
}

/// Runs excursions one at a time, each preceded by an `Exp(1)/π(ρ)` holding at `ρ`,
/// until every vertex has been visited.
pub fn cover_time(g: &LatticeGraph, seed: u64) -> CoverResult {
    let n = g.len();
    let mut seen = vec![0u64; n.div_ceil(64)];
    let mut remaining = n;
    let mut clock = stream(seed, Purpose::RhoHolding, 0, 0);
    let pi_rho = g.pi_rho() as f64;
    let mut t = 0.0;
    for i in 0.. {
        let hold: f64 = Exp1.sample(&mut clock);
        t += hold / pi_rho;
        let mut last = None;
        run_excursion(g, seed, i, |v| {
            let (word, bit) = (v / 64, 1u64 << (v % 64));
            if seen[word] & bit == 0 {
                seen[word] |= bit;
                remaining -= 1;
                if remaining == 0 {
                    last = Some(v);
                }
            }
        });
        if let Some(v) = last {
            return CoverResult { t, last_vertex: v, excursions: i + 1 };
        }
    }
    unreachable!("excursion index space exhausted")
}
