//! Configuration-driven experiment runs with manifests and checksummed outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gff::{dynkin_lhs, dynkin_rhs, sample_dgff};
use crate::green::{compute_green, green_diagonal};
use crate::io::{fmt17, render_field, render_set, sha256_hex, write_pgm16};
use crate::lattice::{discretize, inner_region, DomainSpec, LatticeGraph};
use crate::measures::{self, Mode, Normalizations, Parameters};
use crate::oracle::{light_bound, lower_tail_bound, upper_tail_bound, LimitConstants, SiteLaw};
use crate::rng::{stream, Purpose};
use crate::stats::{bonferroni, ks_one_sample_values, ks_two_sample, loglog_slope, wilson_interval, Moments, Sample};
use crate::walk::{cover_time, sample_field_with, CompoundSampler, HoldingMode, LocalTimeField};
use crate::G_CONST;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    Thick,
    Thin,
    Light,
    Avoided,
    Isomorphism,
    OracleGrid,
    Cover,
    Scaling,
}

fn default_replicas() -> usize {
    1
}

fn default_radius() -> usize {
    5
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_render() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: RunMode,
    #[serde(default = "DomainSpec::unit_square")]
    pub domain: DomainSpec,
    #[serde(rename = "N")]
    pub n: Vec<u32>,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Light-point level.
    #[serde(default)]
    pub b: Option<f64>,
    /// `ρ`-local time for the isomorphism mode.
    #[serde(default)]
    pub t: Option<f64>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub seed: u64,
    /// Inner-region margin; defaults to a tenth of the domain's ℓ∞ diameter.
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default = "default_radius")]
    pub r: usize,
    #[serde(default)]
    pub holding: HoldingMode,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_render")]
    pub render: bool,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn eps(&self) -> f64 {
        self.eps.unwrap_or(0.1 * self.domain.diam_inf())
    }

    fn theta(&self) -> Result<f64> {
        self.theta.ok_or_else(|| Error::Config(format!("mode {:?} needs `theta`", self.mode)))
    }

    fn lambda(&self) -> Result<f64> {
        self.lambda.ok_or_else(|| Error::Config(format!("mode {:?} needs `lambda`", self.mode)))
    }

    pub fn light_level(&self) -> f64 {
        self.b.unwrap_or(0.5)
    }

    /// Parameters of the level-set modes at scale `n`.
    pub fn parameters(&self, n: u32) -> Result<Parameters> {
        let as_config = |e: Error| Error::Config(e.to_string());
        match self.mode {
            RunMode::Thick | RunMode::Scaling => Parameters::thick(self.theta()?, self.lambda()?, n).map_err(as_config),
            RunMode::Thin => Parameters::thin(self.theta()?, self.lambda()?, n).map_err(as_config),
            RunMode::Light => Parameters::light(self.theta()?, self.light_level(), n).map_err(as_config),
            RunMode::Avoided => Parameters::avoided(self.theta()?, n).map_err(as_config),
            _ => Err(Error::Config(format!("mode {:?} has no level-set parameters", self.mode))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.n.is_empty() {
            return cfg("`N` must list at least one scale".into());
        }
        if let Some(&n) = self.n.iter().find(|&&n| n < 2) {
            return cfg(format!("every N must be at least 2, got {n}"));
        }
        if self.replicas == 0 {
            return cfg("`replicas` must be positive".into());
        }
        if self.r == 0 {
            return cfg("`r` must be positive".into());
        }
        let eps = self.eps();
        if !(eps > 0.0 && eps < 0.5 * self.domain.diam_inf()) {
            return cfg(format!("`eps` must lie in (0, diam/2), got {eps}"));
        }
        match self.mode {
            RunMode::Thick | RunMode::Thin | RunMode::Light | RunMode::Avoided | RunMode::Scaling => {
                for &n in &self.n {
                    self.parameters(n)?;
                }
                if self.mode == RunMode::Scaling && self.n.len() < 2 {
                    return cfg("scaling needs at least two values of N".into());
                }
            }
            RunMode::Isomorphism => {
                if self.n.len() != 1 {
                    return cfg("isomorphism mode takes exactly one N".into());
                }
                if let Some(t) = self.t {
                    if !(t >= 0.0) {
                        return cfg(format!("`t` must be nonnegative, got {t}"));
                    }
                }
            }
            RunMode::OracleGrid | RunMode::Cover => {}
        }
        Ok(())
    }
}

/// Output file with its SHA-256.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleSummary {
    #[serde(rename = "N")]
    pub n: u32,
    pub num_vertices: usize,
    pub pi_rho: u64,
    pub parameters: Option<Parameters>,
    pub normalizations: Option<Normalizations>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub version: String,
    pub seed: u64,
    pub wall_time_s: f64,
    pub scales: Vec<ScaleSummary>,
    pub outputs: Vec<OutputFile>,
    pub assertions: Vec<Assertion>,
}

impl RunManifest {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    /// Combined digest of every output file.
    pub fn output_digest(&self) -> String {
        let joined: String = self.outputs.iter().map(|o| format!("{} {}\n", o.path, o.sha256)).collect();
        sha256_hex(joined.as_bytes())
    }
}

/// Seed of replica `r` at scale `n`.
pub fn replica_seed(seed: u64, n: u32, r: usize) -> u64 {
    stream(seed, Purpose::Replica, u64::from(n), r as u64).next_u64()
}

struct Outputs {
    dir: PathBuf,
    files: Vec<OutputFile>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.files.push(OutputFile { path: name.to_string(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    fn pgm(&mut self, name: &str, (w, h, px): (usize, usize, Vec<u16>)) -> Result<()> {
        let mut buf = Vec::new();
        write_pgm16(w, h, &px, &mut buf)?;
        self.write(name, &buf)
    }
}

/// Executes `config` and writes its outputs and `manifest.json` under `config.out`.
pub fn run(config: &RunConfig) -> Result<RunManifest> {
    config.validate()?;
    let start = Instant::now();
    let mut out = Outputs::new(&config.out)?;
    let mut scales = Vec::new();
    let mut assertions = Vec::new();
    match config.mode {
        RunMode::Thick | RunMode::Thin | RunMode::Light | RunMode::Avoided => {
            level_sets(config, &mut out, &mut scales, &mut assertions)?
        }
        RunMode::Scaling => scaling_study(config, &mut out, &mut scales, &mut assertions)?,
        RunMode::Isomorphism => isomorphism(config, &mut out, &mut scales, &mut assertions)?,
        RunMode::OracleGrid => oracle_grid(config, &mut out, &mut assertions)?,
        RunMode::Cover => cover(config, &mut out, &mut scales)?,
    }
    let manifest = RunManifest {
        config: config.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        wall_time_s: start.elapsed().as_secs_f64(),
        scales,
        outputs: out.files,
        assertions,
    };
    fs::write(config.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

fn scale_summary(g: &LatticeGraph, p: Option<&Parameters>) -> ScaleSummary {
    ScaleSummary {
        n: g.scale(),
        num_vertices: g.len(),
        pi_rho: g.pi_rho(),
        parameters: p.copied(),
        normalizations: p.map(Parameters::normalizations),
    }
}

fn mask(n: usize, members: &[usize]) -> Vec<bool> {
    let mut m = vec![false; n];
    for &v in members {
        m[v] = true;
    }
    m
}

fn exceptional_set(l: &LocalTimeField, p: &Parameters) -> Vec<usize> {
    match p.mode {
        Mode::Thick => measures::thick_set(l, p),
        Mode::Thin => measures::thin_set(l, p),
        Mode::Light { r } => measures::light_set(l, r),
        Mode::Avoided => measures::avoided_set(l),
    }
}

fn level_sets(
    config: &RunConfig,
    out: &mut Outputs,
    scales: &mut Vec<ScaleSummary>,
    assertions: &mut Vec<Assertion>,
) -> Result<()> {
    let mut table = String::from("N,replica,count,count_inner,mass,max_over_log2,min_over_log2\n");
    let mut summary = String::from("N,mean_count,se_count,exact_mean_count\n");
    for &n in &config.n {
        let g = discretize(&config.domain, n)?;
        let p = config.parameters(n)?;
        let inner = mask(g.len(), &inner_region(&g, config.eps()));
        let norm = match p.mode {
            Mode::Thick | Mode::Thin => p.normalizations().w_n.expect("thick/thin normalization"),
            _ => p.normalizations().w_hat_n,
        };
        let ln2 = p.log_n().powi(2);
        let mut counts = Vec::with_capacity(config.replicas);
        for r in 0..config.replicas {
            let f = sample_field_with(&g, p.t_n, replica_seed(config.seed, n, r), config.holding)?;
            let set = exceptional_set(&f, &p);
            let count_inner = set.iter().filter(|&&v| inner[v]).count();
            writeln!(
                table,
                "{n},{r},{},{count_inner},{},{},{}",
                set.len(),
                fmt17(set.len() as f64 / norm),
                fmt17(f.max() / ln2),
                fmt17(f.min() / ln2)
            )
            .expect("string write");
            counts.push(set.len() as f64);
            if r == 0 && config.render {
                out.pgm(&format!("set_N{n}.pgm"), render_set(&g, &set))?;
                out.pgm(&format!("field_N{n}.pgm"), render_field(&g, &f.local_time, 0.0, p.a_n.max(p.t_n) * 1.5))?;
                let ln = p.log_n();
                let atoms = measures::PointMeasure {
                    normalization: norm,
                    atoms: set
                        .iter()
                        .map(|&v| measures::Atom {
                            vertex: v,
                            position: g.position(v),
                            value: match p.mode {
                                Mode::Thick | Mode::Thin => (f.local_time[v] - p.a_n) / ln,
                                _ => f.local_time[v],
                            },
                        })
                        .collect(),
                };
                let mut buf = Vec::new();
                atoms.write_csv(&mut buf)?;
                out.write(&format!("atoms_N{n}.csv"), &buf)?;
            }
        }
        let m = Moments::of(&counts);
        let exact = if p.mode == Mode::Avoided {
            let (diag, _) = green_diagonal(&g)?;
            let e: f64 = diag.iter().map(|gxx| (-p.t_n / gxx).exp()).sum();
            if config.replicas > 1 {
                let z = (m.mean - e) / m.se_mean.max(f64::MIN_POSITIVE);
                assertions.push(Assertion {
                    name: format!("avoided first moment N={n}"),
                    passed: z.abs() < 4.0 || (m.se_mean == 0.0 && m.mean == e),
                    detail: format!("mean {} exact {} z {}", fmt17(m.mean), fmt17(e), fmt17(z)),
                });
            }
            fmt17(e)
        } else {
            String::new()
        };
        writeln!(summary, "{n},{},{},{exact}", fmt17(m.mean), fmt17(m.se_mean)).expect("string write");
        scales.push(scale_summary(&g, Some(&p)));
    }
    out.write("counts.csv", table.as_bytes())?;
    out.write("summary.csv", summary.as_bytes())?;
    Ok(())
}

/// Thick and (for `θ < 1`) avoided counts across `N`, with log-log slopes against
/// their exponents. Slopes within 0.15 of target are recorded as passing.
fn scaling_study(
    config: &RunConfig,
    out: &mut Outputs,
    scales: &mut Vec<ScaleSummary>,
    assertions: &mut Vec<Assertion>,
) -> Result<()> {
    let theta = config.theta()?;
    let lambda = config.lambda()?;
    let consts = LimitConstants::new(theta, lambda)?;
    let mut table = String::from("N,mean_thick,mean_avoided,median_max_over_log2,median_min_over_log2\n");
    let (mut thick, mut avoided) = (Vec::new(), Vec::new());
    for &n in &config.n {
        let g = discretize(&config.domain, n)?;
        let p = config.parameters(n)?;
        let ln2 = p.log_n().powi(2);
        let (mut tc, mut ac, mut mx, mut mn) = (0.0, 0.0, Vec::new(), Vec::new());
        for r in 0..config.replicas {
            let f = sample_field_with(&g, p.t_n, replica_seed(config.seed, n, r), config.holding)?;
            tc += measures::thick_set(&f, &p).len() as f64;
            ac += measures::avoided_set(&f).len() as f64;
            mx.push(f.max() / ln2);
            mn.push(f.min() / ln2);
        }
        let k = config.replicas as f64;
        let (tm, am) = (tc / k, ac / k);
        writeln!(table, "{n},{},{},{},{}", fmt17(tm), fmt17(am), fmt17(median(&mut mx)), fmt17(median(&mut mn)))
            .expect("string write");
        thick.push((f64::from(n), tm));
        avoided.push((f64::from(n), am));
        scales.push(scale_summary(&g, Some(&p)));
    }
    let mut report = String::from("quantity,slope,stderr,target\n");
    let mut check = |name: &str, pts: &[(f64, f64)], target: f64| -> Result<()> {
        if pts.iter().any(|p| p.1 <= 0.0) {
            assertions.push(Assertion {
                name: format!("{name} exponent"),
                passed: false,
                detail: "some mean count is zero".into(),
            });
            return Ok(());
        }
        let fit = loglog_slope(pts)?;
        writeln!(report, "{name},{},{},{}", fmt17(fit.slope), fmt17(fit.stderr), fmt17(target)).expect("string write");
        assertions.push(Assertion {
            name: format!("{name} exponent"),
            passed: (fit.slope - target).abs() <= 0.15,
            detail: format!("slope {} target {}", fmt17(fit.slope), fmt17(target)),
        });
        Ok(())
    };
    check("thick", &thick, consts.thick_exponent)?;
    if theta < 1.0 {
        check("avoided", &avoided, consts.avoided_exponent)?;
    }
    out.write("scaling.csv", table.as_bytes())?;
    out.write("exponents.csv", report.as_bytes())?;
    Ok(())
}

pub fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Dynkin identity on a small graph: per-site two-sample KS and pair product moments.
fn isomorphism(
    config: &RunConfig,
    out: &mut Outputs,
    scales: &mut Vec<ScaleSummary>,
    assertions: &mut Vec<Assertion>,
) -> Result<()> {
    let n = config.n[0];
    let g = discretize(&config.domain, n)?;
    let green = compute_green(&g)?;
    let t = config.t.unwrap_or(2.0);
    let k = g.len();
    let (mut lhs, mut rhs) = (vec![Vec::new(); k], vec![Vec::new(); k]);
    for r in 0..config.replicas {
        let seed = replica_seed(config.seed, n, r);
        let f = sample_field_with(&g, t, seed, config.holding)?;
        let mut rng = stream(seed, Purpose::Gaussian, 0, 0);
        let h = sample_dgff(&green, &mut rng)?;
        let ht = sample_dgff(&green, &mut rng)?;
        for (v, x) in dynkin_lhs(&f, &h)?.into_iter().enumerate() {
            lhs[v].push(x);
        }
        for (v, x) in dynkin_rhs(&ht, t)?.into_iter().enumerate() {
            rhs[v].push(x);
        }
    }
    let mut table = String::from("vertex,x,y,G,mean_lhs,mean_rhs,expected,ks_statistic,p_value,p_bonferroni\n");
    let mut min_p = 1.0f64;
    for v in 0..k {
        let ks = ks_two_sample(&Sample::new(lhs[v].clone())?, &Sample::new(rhs[v].clone())?)?;
        let pb = bonferroni(ks.p_value, k);
        min_p = min_p.min(pb);
        let [x, y] = g.vertex(v);
        writeln!(
            table,
            "{v},{x},{y},{},{},{},{},{},{},{}",
            fmt17(green.get(v, v)),
            fmt17(Moments::of(&lhs[v]).mean),
            fmt17(Moments::of(&rhs[v]).mean),
            fmt17(t + green.get(v, v) / 2.0),
            fmt17(ks.statistic),
            fmt17(ks.p_value),
            fmt17(pb)
        )
        .expect("string write");
    }
    let mut pairs = String::from("u,v,mean_lhs,mean_rhs,z\n");
    let mut max_z = 0.0f64;
    for u in 0..k {
        for v in u + 1..k {
            let a: Vec<f64> = lhs[u].iter().zip(&lhs[v]).map(|(x, y)| x * y).collect();
            let b: Vec<f64> = rhs[u].iter().zip(&rhs[v]).map(|(x, y)| x * y).collect();
            let (ma, mb) = (Moments::of(&a), Moments::of(&b));
            let z = (ma.mean - mb.mean) / (ma.se_mean.powi(2) + mb.se_mean.powi(2)).sqrt();
            max_z = max_z.max(z.abs());
            writeln!(pairs, "{u},{v},{},{},{}", fmt17(ma.mean), fmt17(mb.mean), fmt17(z)).expect("string write");
        }
    }
    assertions.push(Assertion {
        name: "per-site KS".into(),
        passed: min_p > 0.01,
        detail: format!("smallest corrected p {}", fmt17(min_p)),
    });
    assertions.push(Assertion {
        name: "pair product moments".into(),
        passed: max_z < 4.0,
        detail: format!("largest |z| {}", fmt17(max_z)),
    });
    out.write("sites.csv", table.as_bytes())?;
    out.write("pairs.csv", pairs.as_bytes())?;
    scales.push(scale_summary(&g, None));
    Ok(())
}

/// Parameter grid for oracle comparisons.
pub const ORACLE_GRID_G: [f64; 3] = [0.25, 1.0, 2.0];
pub const ORACLE_GRID_T: [f64; 4] = [0.5, 1.0, 5.0, 20.0];

/// Compound sampler against the exact law and the tail bounds, over the grid.
fn oracle_grid(config: &RunConfig, out: &mut Outputs, assertions: &mut Vec<Assertion>) -> Result<()> {
    let mut table = String::from("G,t,check,empirical,oracle,statistic,p_value,passed\n");
    let tests = ORACLE_GRID_G.len() * ORACLE_GRID_T.len();
    let mut all = true;
    for (i, &gxx) in ORACLE_GRID_G.iter().enumerate() {
        for (j, &t) in ORACLE_GRID_T.iter().enumerate() {
            let sampler = CompoundSampler::new(gxx, t)?;
            let mut rng = stream(config.seed, Purpose::Replica, i as u64, j as u64);
            let draws: Vec<f64> = (0..config.replicas).map(|_| sampler.sample(&mut rng)).collect();
            let law = SiteLaw::new(gxx, t)?;
            let s = Sample::new(draws)?;
            let cdf = law.cdf_sorted(s.values());
            let ks = ks_one_sample_values(&s, &cdf, Some(0.0))?;
            let p = bonferroni(ks.p_value, tests);
            let mut row = |check: &str, emp: f64, oracle: f64, stat: f64, pv: f64, ok: bool| {
                all &= ok;
                writeln!(
                    table,
                    "{gxx},{t},{check},{},{},{},{},{ok}",
                    fmt17(emp),
                    fmt17(oracle),
                    fmt17(stat),
                    fmt17(pv)
                )
                .expect("string write");
            };
            row("ks", f64::NAN, f64::NAN, ks.statistic, p, p > 0.01);
            let n = s.len() as u64;
            let frac = |pred: &dyn Fn(f64) -> bool| s.values().iter().filter(|&&x| pred(x)).count() as u64;
            let dominated = |k: u64, bound: f64| wilson_interval(k, n, 4.0).0 <= bound;

            let zeros = frac(&|x| x == 0.0);
            let (lo, hi) = wilson_interval(zeros, n, 4.0);
            row("atom", zeros as f64 / n as f64, law.atom(), f64::NAN, f64::NAN, lo <= law.atom() && law.atom() <= hi);

            let a = t + 2.0 * (2.0 * t * gxx).sqrt();
            let ub = upper_tail_bound(gxx, t, a, 0.0)?;
            let k = frac(&|x| x >= a);
            row("upper", k as f64 / n as f64, ub, f64::NAN, f64::NAN, dominated(k, ub));

            let (a, blo, bhi) = (0.5 * t, -0.25 * t, 0.25 * t);
            let lb = lower_tail_bound(gxx, t, a, blo, bhi)?;
            let k = frac(&|x| x - a >= blo && x - a <= bhi);
            row("lower", k as f64 / n as f64, lb, f64::NAN, f64::NAN, dominated(k, lb));

            let b = 0.5 * gxx;
            let light = light_bound(gxx, t, b)?;
            let k = frac(&|x| x <= b);
            row("light", k as f64 / n as f64, light, f64::NAN, f64::NAN, dominated(k, light));
        }
    }
    assertions.push(Assertion {
        name: "oracle grid".into(),
        passed: all,
        detail: "KS, atom and bound checks over the grid".into(),
    });
    out.write("oracle_grid.csv", table.as_bytes())?;
    Ok(())
}

fn cover(config: &RunConfig, out: &mut Outputs, scales: &mut Vec<ScaleSummary>) -> Result<()> {
    let mut table = String::from("N,replica,cover_time,ratio,last_x,last_y\n");
    for &n in &config.n {
        let g = discretize(&config.domain, n)?;
        let scale = 2.0 * G_CONST * f64::from(n).ln().powi(2);
        for r in 0..config.replicas {
            let c = cover_time(&g, replica_seed(config.seed, n, r));
            let [x, y] = g.vertex(c.last_vertex);
            writeln!(table, "{n},{r},{},{},{x},{y}", fmt17(c.t), fmt17(c.t / scale)).expect("string write");
        }
        scales.push(scale_summary(&g, None));
    }
    out.write("cover.csv", table.as_bytes())?;
    Ok(())
}
