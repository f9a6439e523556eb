//! Exceptional sets and the normalized point measures built on them.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gff::GaussianField;
use crate::io::fmt17;
use crate::lattice::LatticeGraph;
use crate::walk::LocalTimeField;
use crate::G_CONST;

/// Default value window (units of `log N`) for atoms entering local-structure statistics.
pub const DEFAULT_WINDOW: (f64, f64) = (-1.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Mode {
    Thick,
    Thin,
    /// Points with `L ≤ r`.
    Light { r: f64 },
    Avoided,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub mode: Mode,
    pub theta: f64,
    pub lambda: f64,
    #[serde(rename = "N")]
    pub n: u32,
    pub t_n: f64,
    /// Level `a_N`; equals `t_N` for the light and avoided modes.
    pub a_n: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizations {
    /// `W_N`, thick and thin modes only.
    pub w_n: Option<f64>,
    pub w_hat_n: f64,
    /// `K_N` at centering `â_N`, thick and thin modes only.
    pub k_n: Option<f64>,
}

/// `t_N = 2gθ (log N)²`.
pub fn default_t(theta: f64, n: u32) -> f64 {
    2.0 * G_CONST * theta * f64::from(n).ln().powi(2)
}

impl Parameters {
    pub fn thick(theta: f64, lambda: f64, n: u32) -> Result<Self> {
        let a = 2.0 * G_CONST * (theta.sqrt() + lambda).powi(2) * f64::from(n).ln().powi(2);
        Self::with_schedule(Mode::Thick, theta, lambda, n, default_t(theta, n), a)
    }

    pub fn thin(theta: f64, lambda: f64, n: u32) -> Result<Self> {
        let a = 2.0 * G_CONST * (theta.sqrt() - lambda).powi(2) * f64::from(n).ln().powi(2);
        Self::with_schedule(Mode::Thin, theta, lambda, n, default_t(theta, n), a)
    }

    pub fn light(theta: f64, r: f64, n: u32) -> Result<Self> {
        let t = default_t(theta, n);
        Self::with_schedule(Mode::Light { r }, theta, 0.0, n, t, t)
    }

    pub fn avoided(theta: f64, n: u32) -> Result<Self> {
        let t = default_t(theta, n);
        Self::with_schedule(Mode::Avoided, theta, 0.0, n, t, t)
    }

    /// Explicit `t_N`, `a_N`; checks the mode's parameter domain.
    pub fn with_schedule(mode: Mode, theta: f64, lambda: f64, n: u32, t_n: f64, a_n: f64) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if n < 2 {
            return bad(format!("N must be at least 2, got {n}"));
        }
        if !(theta > 0.0) || !theta.is_finite() {
            return bad(format!("θ must be positive, got {theta}"));
        }
        if !(t_n >= 0.0) || !(a_n >= 0.0) {
            return bad(format!("t_N and a_N must be nonnegative, got {t_n}, {a_n}"));
        }
        match mode {
            Mode::Thick if !(lambda > 0.0 && lambda < 1.0) => bad(format!("thick mode needs λ ∈ (0,1), got {lambda}")),
            Mode::Thin if !(lambda > 0.0 && lambda < theta.sqrt().min(1.0)) => {
                bad(format!("thin mode needs λ ∈ (0, min(1, √θ)), got λ={lambda}, θ={theta}"))
            }
            Mode::Light { .. } | Mode::Avoided if theta >= 1.0 => {
                bad(format!("light and avoided modes need θ ∈ (0,1), got {theta}"))
            }
            Mode::Light { r } if !(r >= 0.0) => bad(format!("light level must be nonnegative, got {r}")),
            _ => Ok(Self { mode, theta, lambda, n, t_n, a_n }),
        }
    }

    pub fn log_n(&self) -> f64 {
        f64::from(self.n).ln()
    }

    /// `â_N`: `√(2a_N) − √(2t_N)` when thick, `√(2t_N) − √(2a_N)` when thin.
    pub fn a_hat(&self) -> Option<f64> {
        let (sa, st) = ((2.0 * self.a_n).sqrt(), (2.0 * self.t_n).sqrt());
        match self.mode {
            Mode::Thick => Some(sa - st),
            Mode::Thin => Some(st - sa),
            _ => None,
        }
    }

    pub fn normalizations(&self) -> Normalizations {
        let n2 = f64::from(self.n).powi(2);
        let ln = self.log_n();
        let w_hat_n = n2 * (-self.t_n / (G_CONST * ln)).exp();
        let gap = (2.0 * self.t_n).sqrt() - (2.0 * self.a_n).sqrt();
        let (w_n, k_n) = match self.mode {
            Mode::Thick | Mode::Thin => (
                Some(n2 / ln.sqrt() * (-gap * gap / (2.0 * G_CONST * ln)).exp()),
                self.a_hat().map(|a| dgff_normalization(a, self.n)),
            ),
            _ => (None, None),
        };
        Normalizations { w_n, w_hat_n, k_n }
    }
}

/// `K_N = N² (log N)^{-1/2} exp(-a²/(2g log N))` for centering `a`.
pub fn dgff_normalization(a: f64, n: u32) -> f64 {
    let ln = f64::from(n).ln();
    f64::from(n).powi(2) / ln.sqrt() * (-a * a / (2.0 * G_CONST * ln)).exp()
}

fn select(l: &LocalTimeField, keep: impl Fn(usize, f64) -> bool) -> Vec<usize> {
    l.local_time.iter().enumerate().filter(|&(v, &x)| keep(v, x)).map(|(v, _)| v).collect()
}

/// `{x : L(x) ≥ a_N}`.
pub fn thick_set(l: &LocalTimeField, p: &Parameters) -> Vec<usize> {
    select(l, |_, x| x >= p.a_n)
}

/// `{x : L(x) ≤ a_N}`.
pub fn thin_set(l: &LocalTimeField, p: &Parameters) -> Vec<usize> {
    select(l, |_, x| x <= p.a_n)
}

/// `{x : L(x) ≤ r}`.
pub fn light_set(l: &LocalTimeField, r: f64) -> Vec<usize> {
    select(l, |_, x| x <= r)
}

/// Never-visited vertices.
pub fn avoided_set(l: &LocalTimeField) -> Vec<usize> {
    l.visits.iter().enumerate().filter(|&(_, &k)| k == 0).map(|(v, _)| v).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub vertex: usize,
    /// `x / N`.
    pub position: [f64; 2],
    pub value: f64,
}

/// `sum · weight`, zero for a zero sum even when the weight overflows.
fn scaled(sum: f64, weight: f64) -> f64 {
    if sum == 0.0 {
        0.0
    } else {
        sum * weight
    }
}

/// Atoms of equal weight `1 / normalization`.
#[derive(Clone, Debug, PartialEq)]
pub struct PointMeasure {
    pub normalization: f64,
    pub atoms: Vec<Atom>,
}

impl PointMeasure {
    pub fn weight(&self) -> f64 {
        1.0 / self.normalization
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.len() as f64 * self.weight()
    }

    /// `Σ_atoms weight · f(atom)`.
    pub fn integrate(&self, f: impl Fn(&Atom) -> f64) -> f64 {
        scaled(self.atoms.iter().map(f).sum::<f64>(), self.weight())
    }

    /// Mass of atoms with value in `[lo, hi]`.
    pub fn window_mass(&self, lo: f64, hi: f64) -> f64 {
        self.integrate(|a| f64::from(u8::from(a.value >= lo && a.value <= hi)))
    }

    /// CSV `x,y,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,y,value")?;
        for a in &self.atoms {
            writeln!(w, "{},{},{}", fmt17(a.position[0]), fmt17(a.position[1]), fmt17(a.value))?;
        }
        Ok(())
    }
}

/// A point measure whose atoms carry a local profile over `Λ_r(0)` (row-major).
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileMeasure {
    pub normalization: f64,
    pub radius: usize,
    pub atoms: Vec<Atom>,
    pub profiles: Vec<Vec<f64>>,
}

impl ProfileMeasure {
    pub fn weight(&self) -> f64 {
        1.0 / self.normalization
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.len() as f64 * self.weight()
    }

    pub fn integrate(&self, f: impl Fn(&Atom, &[f64]) -> f64) -> f64 {
        scaled(self.atoms.iter().zip(&self.profiles).map(|(a, p)| f(a, p)).sum::<f64>(), self.weight())
    }

    /// Index of `z` in a profile vector.
    pub fn offset_index(&self, zx: i64, zy: i64) -> Option<usize> {
        let r = self.radius as i64;
        (zx.abs() <= r && zy.abs() <= r).then(|| ((zy + r) * (2 * r + 1) + zx + r) as usize)
    }

    /// Profile values at offset `z` across atoms.
    pub fn column(&self, zx: i64, zy: i64) -> Option<Vec<f64>> {
        let i = self.offset_index(zx, zy)?;
        Some(self.profiles.iter().map(|p| p[i]).collect())
    }

    /// Per-offset average over atoms (unweighted).
    pub fn mean_profile(&self) -> Vec<f64> {
        let side = 2 * self.radius + 1;
        let mut acc = vec![0.0; side * side];
        for p in &self.profiles {
            for (a, v) in acc.iter_mut().zip(p) {
                *a += v;
            }
        }
        let n = self.profiles.len().max(1) as f64;
        acc.iter().map(|a| a / n).collect()
    }

    /// CSV `x,y,value,z_<zx>_<zy>...`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let r = self.radius as i64;
        let offsets: Vec<(i64, i64)> = (-r..=r).flat_map(|y| (-r..=r).map(move |x| (x, y))).collect();
        write!(w, "x,y,value")?;
        for (x, y) in &offsets {
            write!(w, ",z_{x}_{y}")?;
        }
        writeln!(w)?;
        for (a, p) in self.atoms.iter().zip(&self.profiles) {
            write!(w, "{},{},{}", fmt17(a.position[0]), fmt17(a.position[1]), fmt17(a.value))?;
            for v in p {
                write!(w, ",{}", fmt17(*v))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn check_len(g: &LatticeGraph, len: usize) -> Result<()> {
    if g.len() != len {
        return Err(Error::ShapeMismatch { expected: g.len(), got: len });
    }
    Ok(())
}

fn atom(g: &LatticeGraph, v: usize, value: f64) -> Atom {
    Atom { vertex: v, position: g.position(v), value }
}

fn w_n(p: &Parameters) -> Result<f64> {
    p.normalizations()
        .w_n
        .ok_or_else(|| Error::InvalidParameter("this measure needs thick or thin parameters".into()))
}

/// Atoms `(x/N, (L(x) − a_N)/log N)` at every vertex, weight `1/W_N`.
pub fn zeta(l: &LocalTimeField, g: &LatticeGraph, p: &Parameters) -> Result<PointMeasure> {
    check_len(g, l.len())?;
    let normalization = w_n(p)?;
    let ln = p.log_n();
    let atoms = (0..g.len()).map(|v| atom(g, v, (l.local_time[v] - p.a_n) / ln)).collect();
    Ok(PointMeasure { normalization, atoms })
}

/// Atoms `(x/N, L(x))` at every vertex, weight `1/Ŵ_N`.
pub fn vartheta(l: &LocalTimeField, g: &LatticeGraph, p: &Parameters) -> Result<PointMeasure> {
    check_len(g, l.len())?;
    let atoms = (0..g.len()).map(|v| atom(g, v, l.local_time[v])).collect();
    Ok(PointMeasure { normalization: p.normalizations().w_hat_n, atoms })
}

/// Atoms at avoided vertices, weight `1/Ŵ_N`.
pub fn kappa(l: &LocalTimeField, g: &LatticeGraph, p: &Parameters) -> Result<PointMeasure> {
    check_len(g, l.len())?;
    let atoms = avoided_set(l).into_iter().map(|v| atom(g, v, 0.0)).collect();
    Ok(PointMeasure { normalization: p.normalizations().w_hat_n, atoms })
}

/// `L` at lattice point `(x, y)`, zero off `V`.
fn read(g: &LatticeGraph, l: &LocalTimeField, x: i64, y: i64) -> f64 {
    g.vertex_id(x, y).map_or(0.0, |w| l.local_time[w])
}

fn profile(g: &LatticeGraph, l: &LocalTimeField, v: usize, r: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let [x, y] = g.vertex(v);
    let r = r as i64;
    (-r..=r)
        .flat_map(|zy| (-r..=r).map(move |zx| (zx, zy)))
        .map(|(zx, zy)| f(read(g, l, x + zx, y + zy)))
        .collect()
}

/// Thick or thin atoms with value in [`DEFAULT_WINDOW`] and profiles
/// `z ↦ (L(x) − L(x+z))/log N`.
pub fn zeta_local(l: &LocalTimeField, g: &LatticeGraph, p: &Parameters, r: usize) -> Result<ProfileMeasure> {
    let (lo, hi) = DEFAULT_WINDOW;
    zeta_local_in(l, g, p, r, |_, value| value >= lo && value <= hi)
}

/// As [`zeta_local`], keeping atoms for which `keep(vertex, value)` holds.
pub fn zeta_local_in(
    l: &LocalTimeField,
    g: &LatticeGraph,
    p: &Parameters,
    r: usize,
    keep: impl Fn(usize, f64) -> bool,
) -> Result<ProfileMeasure> {
    check_len(g, l.len())?;
    if r < 1 {
        return Err(Error::InvalidParameter("profile radius must be at least 1".into()));
    }
    let normalization = w_n(p)?;
    let ln = p.log_n();
    let (mut atoms, mut profiles) = (Vec::new(), Vec::new());
    for v in 0..g.len() {
        let value = (l.local_time[v] - p.a_n) / ln;
        if !keep(v, value) {
            continue;
        }
        let here = l.local_time[v];
        profiles.push(profile(g, l, v, r, |there| (here - there) / ln));
        atoms.push(atom(g, v, value));
    }
    Ok(ProfileMeasure { normalization, radius: r, atoms, profiles })
}

/// Avoided atoms with raw profiles `z ↦ L(x+z)`.
pub fn kappa_local(l: &LocalTimeField, g: &LatticeGraph, p: &Parameters, r: usize) -> Result<ProfileMeasure> {
    kappa_local_in(l, g, p, r, |_| true)
}

/// As [`kappa_local`], keeping avoided vertices for which `keep(vertex)` holds.
pub fn kappa_local_in(
    l: &LocalTimeField,
    g: &LatticeGraph,
    p: &Parameters,
    r: usize,
    keep: impl Fn(usize) -> bool,
) -> Result<ProfileMeasure> {
    check_len(g, l.len())?;
    if r < 1 {
        return Err(Error::InvalidParameter("profile radius must be at least 1".into()));
    }
    if !(p.theta < 1.0) {
        return Err(Error::InvalidParameter(format!("avoided profiles need θ < 1, got {}", p.theta)));
    }
    let (mut atoms, mut profiles) = (Vec::new(), Vec::new());
    for v in avoided_set(l).into_iter().filter(|&v| keep(v)) {
        profiles.push(profile(g, l, v, r, |there| there));
        atoms.push(atom(g, v, 0.0));
    }
    Ok(ProfileMeasure { normalization: p.normalizations().w_hat_n, radius: r, atoms, profiles })
}

/// Atoms `(x/N, h(x) − a)` at every vertex, weight `1/K_N`.
pub fn eta_dgff(h: &GaussianField, g: &LatticeGraph, a: f64) -> Result<PointMeasure> {
    check_len(g, h.len())?;
    let atoms = (0..g.len()).map(|v| atom(g, v, h.values[v] - a)).collect();
    Ok(PointMeasure { normalization: dgff_normalization(a, g.scale()), atoms })
}

/// Summary written next to measure CSVs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureManifest {
    pub parameters: Parameters,
    pub normalizations: Normalizations,
    pub atoms: usize,
    pub total_mass: f64,
}

impl MeasureManifest {
    pub fn new(p: &Parameters, m: &PointMeasure) -> Self {
        Self { parameters: *p, normalizations: p.normalizations(), atoms: m.atoms.len(), total_mass: m.total_mass() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk::{sample_field, HoldingMode};

    fn close(a: f64, b: f64) -> bool {
        ((a - b) / b).abs() < 1e-12
    }

    #[test]
    fn parameter_domains() {
        assert!(Parameters::thick(1.0, 1.0, 64).is_err());
        assert!(Parameters::thick(1.0, 0.0, 64).is_err());
        assert!(Parameters::thin(0.25, 0.5, 64).is_err());
        assert!(Parameters::thin(0.25, 0.4, 64).is_ok());
        assert!(Parameters::avoided(1.0, 64).is_err());
        assert!(Parameters::light(0.5, -1.0, 64).is_err());
        assert!(Parameters::avoided(0.5, 1).is_err());
    }

    #[test]
    fn normalizations_under_default_schedules() {
        for n in [64u32, 256, 1000] {
            let nf = f64::from(n);
            let p = Parameters::avoided(0.5, n).unwrap();
            assert!(close(p.normalizations().w_hat_n, nf));
            let p = Parameters::thick(1.0, 0.3, n).unwrap();
            let w = p.normalizations().w_n.unwrap();
            assert!(close(w, nf.powf(2.0 - 2.0 * 0.09) / nf.ln().sqrt()));
            let a = p.a_hat().unwrap();
            assert!(close(a, 2.0 * 0.3 * G_CONST.sqrt() * nf.ln()));
            let p = Parameters::thin(1.0, 0.3, n).unwrap();
            assert!(close(p.normalizations().w_n.unwrap(), w));
            let same = Parameters::with_schedule(Mode::Thick, 1.0, 0.3, n, 5.0, 5.0).unwrap();
            assert!(close(same.normalizations().w_n.unwrap(), nf * nf / nf.ln().sqrt()));
        }
    }

    #[test]
    fn set_nesting() {
        let g = LatticeGraph::block(32, 0, 0, 32, 32).unwrap();
        let f = sample_field(&g, 2.0, 9).unwrap();
        let th = |lam| thick_set(&f, &Parameters::with_schedule(Mode::Thick, 1.0, lam, 32, 2.0, 2.0 + 4.0 * lam).unwrap());
        let (a, b) = (th(0.1), th(0.3));
        assert!(b.iter().all(|v| a.contains(v)));
        let avoided = avoided_set(&f);
        let light = light_set(&f, 0.2);
        assert!(avoided.iter().all(|v| light.contains(v)));
        let thin = thin_set(&f, &Parameters::with_schedule(Mode::Thin, 1.0, 0.5, 32, 2.0, 0.5).unwrap());
        assert!(light.iter().all(|v| thin.contains(v)));
        assert!(!avoided.is_empty() || f.min() > 0.0);
    }

    #[test]
    fn zero_field_measures() {
        let g = LatticeGraph::block(16, 0, 0, 10, 10).unwrap();
        let f = sample_field(&g, 0.0, 1).unwrap();
        let p = Parameters::thick(1.0, 0.3, 16).unwrap();
        assert!(thick_set(&f, &p).is_empty());
        let z = zeta(&f, &g, &p).unwrap();
        assert_eq!(z.window_mass(-1.0, f64::INFINITY), 0.0);
        let pa = Parameters::avoided(0.2, 16).unwrap();
        let k = kappa(&f, &g, &pa).unwrap();
        assert!(close(k.total_mass(), 100.0 / pa.normalizations().w_hat_n));
    }

    #[test]
    fn integrate_linearity_and_total_mass() {
        let g = LatticeGraph::block(16, 0, 0, 8, 8).unwrap();
        let f = sample_field(&g, 1.0, 2).unwrap();
        let p = Parameters::thick(1.0, 0.3, 16).unwrap();
        let m = zeta(&f, &g, &p).unwrap();
        assert!(close(m.integrate(|_| 1.0), m.total_mass()));
        let f1 = |a: &Atom| a.value.sin();
        let f2 = |a: &Atom| a.position[0];
        let lhs = m.integrate(|a| f1(a) + f2(a));
        assert!((lhs - m.integrate(f1) - m.integrate(f2)).abs() < 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn profiles_vanish_at_origin() {
        let g = LatticeGraph::block(24, 0, 0, 24, 24).unwrap();
        let f = crate::walk::sample_field_with(&g, 1.0, 3, HoldingMode::PerVisit).unwrap();
        let p = Parameters::with_schedule(Mode::Thick, 1.0, 0.3, 24, 1.0, 1.0).unwrap();
        let z = zeta_local_in(&f, &g, &p, 2, |_, _| true).unwrap();
        assert_eq!(z.atoms.len(), g.len());
        let c = z.offset_index(0, 0).unwrap();
        assert!(z.profiles.iter().all(|pr| pr[c] == 0.0));
        let pa = Parameters::avoided(0.2, 24).unwrap();
        let k = kappa_local(&f, &g, &pa, 2).unwrap();
        assert!(k.profiles.iter().all(|pr| pr[c] == 0.0));
        // Corner vertex: offsets outside V read as zero.
        let corner = g.vertex_id(0, 0).unwrap();
        let i = z.atoms.iter().position(|a| a.vertex == corner).unwrap();
        let ln = p.log_n();
        assert_eq!(z.profiles[i][z.offset_index(-1, 0).unwrap()], f.local_time[corner] / ln);
    }

    #[test]
    fn eta_window_mass_vanishes_for_huge_centering() {
        let g = LatticeGraph::block(8, 0, 0, 4, 4).unwrap();
        let h = GaussianField { values: vec![0.1; 16], seed: None, covariance_id: "green".into() };
        let m = eta_dgff(&h, &g, 1e3).unwrap();
        assert_eq!(m.window_mass(0.0, f64::INFINITY), 0.0);
    }

    #[test]
    fn csv_shapes() {
        let g = LatticeGraph::block(8, 0, 0, 3, 3).unwrap();
        let f = sample_field(&g, 0.5, 4).unwrap();
        let p = Parameters::with_schedule(Mode::Thick, 1.0, 0.3, 8, 0.5, 0.5).unwrap();
        let z = zeta_local_in(&f, &g, &p, 1, |_, _| true).unwrap();
        let mut buf = Vec::new();
        z.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(header.split(',').count(), 3 + 9);
        assert_eq!(text.lines().count(), 10);
    }
}
