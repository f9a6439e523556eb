//! Closed-form single-site laws, tail bounds and limit constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::G_CONST;

/// `e^{-x} I₁(x)` for `x ≥ 0`.
pub fn bessel_i1e(x: f64) -> f64 {
    if x < 0.0 {
        return -bessel_i1e(-x);
    }
    if x == 0.0 {
        return 0.0;
    }
    if x <= 25.0 {
        // Power series; all terms positive.
        let h = 0.5 * x;
        let q = h * h;
        let mut term = h;
        let mut sum = term;
        let mut k = 0.0;
        loop {
            k += 1.0;
            term *= q / (k * (k + 1.0));
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
        }
        return sum * (-x).exp();
    }
    // Hankel expansion: I₁(x) ~ e^x/√(2πx) Σ (-1)^k Π_{j≤k}(4 - (2j-1)²) / (k! (8x)^k).
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        let kf = k as f64;
        let next = -term * (4.0 - (2.0 * kf - 1.0).powi(2)) / (kf * 8.0 * x);
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum / (2.0 * std::f64::consts::PI * x).sqrt()
}

const GK_X: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GK_WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One 15-point Kronrod rule with its embedded 7-point Gauss error estimate.
fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * GK_WK[7];
    let mut g = fc * GK_WG[3];
    for i in 0..7 {
        let dx = h * GK_X[i];
        let s = f(c - dx) + f(c + dx);
        k += GK_WK[i] * s;
        if i % 2 == 1 {
            g += GK_WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss–Kronrod quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (v, err) = gk15(f, a, b);
        if err <= tol || depth >= 48 || (b - a) <= 1e-15 * a.abs().max(b.abs()) {
            return v;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth + 1) + rec(f, m, b, 0.5 * tol, depth + 1)
    }
    if b <= a {
        return 0.0;
    }
    rec(&f, a, b, tol, 0)
}

/// Quadrature tolerance for CDF values.
pub const CDF_TOL: f64 = 1e-9;

/// Law of `L_t(x)` at a site with `G(x,x) = gxx`: an atom `e^{-t/G}` at 0 plus
/// `f(ℓ) = (1/G) √(t/ℓ) I₁(2√(tℓ)/G) e^{-(t+ℓ)/G}` on `(0, ∞)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteLaw {
    pub gxx: f64,
    pub t: f64,
}

impl SiteLaw {
    pub fn new(gxx: f64, t: f64) -> Result<Self> {
        if !(gxx >= 0.25 - 1e-12) || !gxx.is_finite() {
            return Err(Error::InvalidParameter(format!("site law needs G(x,x) >= 1/4, got {gxx}")));
        }
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::InvalidParameter(format!("site law needs t >= 0, got {t}")));
        }
        Ok(Self { gxx, t })
    }

    pub fn atom(&self) -> f64 {
        (-self.t / self.gxx).exp()
    }

    pub fn density(&self, l: f64) -> f64 {
        let (g, t) = (self.gxx, self.t);
        if l < 0.0 || t == 0.0 {
            return 0.0;
        }
        if l == 0.0 {
            return t / (g * g) * (-t / g).exp();
        }
        let z = 2.0 * (t * l).sqrt() / g;
        let gap = t.sqrt() - l.sqrt();
        if z < 1e-8 {
            // I₁(z) ≈ z/2, so √(t/ℓ) I₁(z) ≈ t/G.
            return t / (g * g) * (-(t + l) / g).exp();
        }
        (t / l).sqrt() * bessel_i1e(z) * (-gap * gap / g).exp() / g
    }

    /// Point beyond which the density is below `e^{-60}` relative to its bulk.
    pub fn upper_cutoff(&self) -> f64 {
        (self.t.sqrt() + (60.0 * self.gxx).sqrt()).powi(2) + 60.0 * self.gxx
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let top = x.min(self.upper_cutoff());
        (self.atom() + integrate(|l| self.density(l), 0.0, top, CDF_TOL)).min(1.0)
    }

    /// `F(x-)`.
    pub fn cdf_left(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            self.cdf(x)
        }
    }

    /// CDF at each point of an ascending slice, integrating between consecutive
    /// points.
    pub fn cdf_sorted(&self, xs: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(xs.len());
        let cut = self.upper_cutoff();
        let mut acc = self.atom();
        let mut comp = 0.0;
        let mut prev = 0.0f64;
        for &x in xs {
            if x < 0.0 {
                out.push(0.0);
                continue;
            }
            let top = x.min(cut);
            if top > prev {
                let piece = integrate(|l| self.density(l), prev, top, 1e-13) - comp;
                let next = acc + piece;
                comp = (next - acc) - piece;
                acc = next;
                prev = top;
            }
            out.push(acc.min(1.0));
        }
        out
    }

    /// `(atom + ∫ f, ∫ ℓ f, ∫ ℓ² f - mean²)` by quadrature.
    pub fn moments(&self) -> (f64, f64, f64) {
        let top = self.upper_cutoff();
        let mass = self.atom() + integrate(|l| self.density(l), 0.0, top, 1e-12);
        let mean = integrate(|l| l * self.density(l), 0.0, top, 1e-12);
        let second = integrate(|l| l * l * self.density(l), 0.0, top, 1e-12);
        (mass, mean, second - mean * mean)
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}

/// Upper bound on `P(L_t(x) ≥ a + b)`, clamped to `[0, 1]`.
pub fn upper_tail_bound(gxx: f64, t: f64, a: f64, b: f64) -> Result<f64> {
    check(gxx > 0.0 && a > 0.0 && t > 0.0 && a + b > t, || {
        format!("upper tail bound needs G, a, t > 0 and a + b > t (G={gxx}, t={t}, a={a}, b={b})")
    })?;
    let (s2a, s2t) = ((2.0 * a).sqrt(), (2.0 * t).sqrt());
    let gap = s2a - s2t;
    let v = gxx.sqrt() / ((2.0 * (a + b)).sqrt() - s2t)
        * (-gap * gap / (2.0 * gxx)).exp()
        * (-b * gap / (gxx * s2a)).exp();
    Ok(v.clamp(0.0, 1.0))
}

/// Upper bound on `P(L_t(x) - a ∈ [b_lo, b_hi])`, clamped to `[0, 1]`.
pub fn lower_tail_bound(gxx: f64, t: f64, a: f64, b_lo: f64, b_hi: f64) -> Result<f64> {
    check(gxx > 0.0 && a > 0.0 && t > 0.0 && b_lo <= b_hi && a + b_lo > 0.0 && a + b_hi < t, || {
        format!(
            "lower tail bound needs G, a, t > 0, b_lo <= b_hi, a + b_lo > 0 and a + b_hi < t \
             (G={gxx}, t={t}, a={a}, b_lo={b_lo}, b_hi={b_hi})"
        )
    })?;
    let (s2a, s2t) = ((2.0 * a).sqrt(), (2.0 * t).sqrt());
    let gap = s2t - s2a;
    let v = (t / (a + b_lo)).powf(0.25) * gxx.sqrt() / (s2t - (2.0 * (a + b_hi)).sqrt())
        * (-gap * gap / (2.0 * gxx)).exp()
        * (b_hi * gap / (gxx * s2a)).exp();
    Ok(v.clamp(0.0, 1.0))
}

/// Upper bound on `P(L_t(x) ≤ b)`; exact at `b = 0`.
pub fn light_bound(gxx: f64, t: f64, b: f64) -> Result<f64> {
    check(gxx > 0.0 && t >= 0.0 && b >= 0.0, || {
        format!("light bound needs G > 0, t >= 0, b >= 0 (G={gxx}, t={t}, b={b})")
    })?;
    let r = t / gxx;
    let first = (-r * (-b / gxx).exp()).exp();
    let second = (-r + b * t / (gxx * gxx)).exp();
    Ok(first.min(second).clamp(0.0, 1.0))
}

fn mu_rate(theta: f64) -> f64 {
    let alpha = 2.0 / G_CONST.sqrt();
    alpha * alpha * theta / 2.0
}

fn check_theta(theta: f64) -> Result<()> {
    check(theta > 0.0 && theta < 1.0, || format!("θ must lie in (0,1), got {theta}"))
}

/// `μ([0, b])` for the light-point intensity: the unit atom at 0 plus the integral of
/// the density.
pub fn mu_measure(theta: f64, b: f64) -> Result<f64> {
    check_theta(theta)?;
    check(b >= 0.0, || format!("b must be nonnegative, got {b}"))?;
    let c = mu_rate(theta);
    // term_n = (cb)^{n+1} / ((n+1) n! (n+1)!)
    let mut sum = 1.0;
    let mut pow_fact = c * b; // (cb)^{n+1} / (n! (n+1)!)
    for n in 0..10_000u32 {
        let nf = f64::from(n);
        let term = pow_fact / (nf + 1.0);
        sum += term;
        if term < 1e-14 * sum && nf > c * b {
            break;
        }
        pow_fact *= c * b / ((nf + 1.0) * (nf + 2.0));
    }
    Ok(sum)
}

/// Density of `μ` on `(0, ∞)`: `Σ c^{n+1} h^n / (n! (n+1)!)` with `c = α²θ/2`.
pub fn mu_density(theta: f64, h: f64) -> Result<f64> {
    check_theta(theta)?;
    check(h >= 0.0, || format!("h must be nonnegative, got {h}"))?;
    let c = mu_rate(theta);
    let mut term = c;
    let mut sum = term;
    for n in 1..10_000u32 {
        let nf = f64::from(n);
        term *= c * h / (nf * (nf + 1.0));
        sum += term;
        if term < 1e-14 * sum && nf > c * h {
            break;
        }
    }
    Ok(sum)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupationMoments {
    pub mean: f64,
    pub variance: f64,
}

/// Mean `4u a²` and variance `16u a³` of the occupation field at level `u = πθ`
/// at a point with kernel value `a_z`.
pub fn interlacement_moments(theta: f64, a_z: f64) -> Result<OccupationMoments> {
    check_theta(theta)?;
    check(a_z >= 0.0, || format!("kernel value must be nonnegative, got {a_z}"))?;
    let u = std::f64::consts::PI * theta;
    Ok(OccupationMoments { mean: 4.0 * u * a_z * a_z, variance: 16.0 * u * a_z.powi(3) })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitConstants {
    pub theta: f64,
    pub lambda: f64,
    pub g: f64,
    /// `α = 2/√g`.
    pub alpha: f64,
    /// `(1/g) λ/(√θ + λ)`.
    pub alpha_thick: f64,
    /// `(1/g) λ/(√θ - λ)`, defined for `λ < √θ`.
    pub alpha_thin: Option<f64>,
    pub thick_exponent: f64,
    pub avoided_exponent: f64,
    /// Limit of `max L / (log N)²`.
    pub max_limit: f64,
    /// Limit of `min L / (log N)²`.
    pub min_limit: f64,
}

impl LimitConstants {
    pub fn new(theta: f64, lambda: f64) -> Result<Self> {
        check(theta > 0.0 && lambda >= 0.0, || format!("need θ > 0 and λ >= 0, got θ={theta}, λ={lambda}"))?;
        let g = G_CONST;
        let st = theta.sqrt();
        Ok(Self {
            theta,
            lambda,
            g,
            alpha: 2.0 / g.sqrt(),
            alpha_thick: lambda / (g * (st + lambda)),
            alpha_thin: (lambda < st).then(|| lambda / (g * (st - lambda))),
            thick_exponent: 2.0 * (1.0 - lambda * lambda),
            avoided_exponent: 2.0 * (1.0 - theta),
            max_limit: 2.0 * g * (st + 1.0).powi(2),
            min_limit: 2.0 * g * (st - 1.0).max(0.0).powi(2),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn i1e_matches_reference_values() {
        // Reference values from an independent special-function library.
        let cases = [
            (1e-3, 0.0004995003123542213),
            (0.5, 0.15642080318487173),
            (1.0, 0.2079104153497085),
            (5.0, 0.16397226694454234),
            (24.9, 0.07872879488210313),
            (25.1, 0.07842431517836843),
            (30.0, 0.07191633059864755),
            (100.0, 0.03974415302513025),
            (1000.0, 0.01261093025692863),
            (1e5, 0.001261561530121817),
        ];
        for (x, want) in cases {
            let got = bessel_i1e(x);
            assert!(((got - want) / want).abs() < 1e-13, "x={x}: {got} vs {want}");
        }
    }

    #[test]
    fn quadrature_basics() {
        let v = integrate(|x| x.sin(), 0.0, std::f64::consts::PI, 1e-12);
        assert!((v - 2.0).abs() < 1e-12);
        let v = integrate(|x| (-x).exp(), 0.0, 50.0, 1e-12);
        assert!((v - (1.0 - (-50.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn site_law_normalization_and_moments() {
        for gxx in [0.25, 1.0, 2.0] {
            for t in [0.5, 1.0, 5.0, 20.0] {
                let law = SiteLaw::new(gxx, t).unwrap();
                let (mass, mean, var) = law.moments();
                assert!((mass - 1.0).abs() < 1e-6, "G={gxx} t={t} mass={mass}");
                assert!((mean - t).abs() < 1e-6 * t.max(1.0), "mean {mean}");
                assert!((var - 2.0 * t * gxx).abs() < 1e-6 * var.max(1.0), "var {var}");
            }
        }
    }

    #[test]
    fn site_law_edge_cases() {
        let law = SiteLaw::new(0.25, 0.0).unwrap();
        assert_eq!(law.atom(), 1.0);
        assert_eq!(law.cdf(0.0), 1.0);
        assert_eq!(law.density(1.0), 0.0);
        assert!((SiteLaw::new(0.25, 1.0).unwrap().atom() - (-4.0f64).exp()).abs() < 1e-16);
        assert!(SiteLaw::new(0.2, 1.0).is_err());
        assert!(SiteLaw::new(0.25, -1.0).is_err());
    }

    #[test]
    fn cdf_sorted_agrees_with_direct() {
        let law = SiteLaw::new(0.7, 3.0).unwrap();
        let xs: Vec<f64> = (0..200).map(|i| i as f64 * 0.05).collect();
        let inc = law.cdf_sorted(&xs);
        for (x, c) in xs.iter().zip(&inc) {
            assert!((law.cdf(*x) - c).abs() < 1e-8);
        }
        assert!((law.cdf(1e6) - 1.0).abs() < 1e-8);
        assert!(law.cdf(-1.0) == 0.0 && law.cdf_left(0.0) == 0.0);
    }

    #[test]
    fn large_time_density_is_finite() {
        let law = SiteLaw::new(1.0, 1e3).unwrap();
        let d = law.density(1e3);
        assert!(d.is_finite() && d > 0.0);
        // Near the mean the law is close to Normal(t, 2tG).
        let normal = 1.0 / (2.0 * std::f64::consts::PI * 2e3).sqrt();
        assert!((d / normal - 1.0).abs() < 0.01);
    }

    #[test]
    fn bounds_shape() {
        let b0 = upper_tail_bound(0.25, 1.0, 3.0, 0.0).unwrap();
        let s2a = 6.0f64.sqrt();
        let s2t = 2.0f64.sqrt();
        let want = 0.5 / (s2a - s2t) * (-(s2a - s2t).powi(2) / 0.5).exp();
        assert!((b0 - want).abs() < 1e-15);
        let mut prev = b0;
        for i in 1..20 {
            let v = upper_tail_bound(0.25, 1.0, 3.0, i as f64 * 0.1).unwrap();
            assert!(v <= prev);
            prev = v;
        }
        assert!(upper_tail_bound(0.25, 1.0, 0.5, 0.1).is_err());

        let mut prev = 0.0;
        for i in 0..10 {
            let v = lower_tail_bound(0.25, 4.0, 1.0, -0.5, -0.4 + 0.1 * i as f64).unwrap();
            assert!(v >= prev);
            prev = v;
        }
        assert!(lower_tail_bound(0.25, 4.0, 1.0, 0.5, 0.2).is_err());
        assert!(lower_tail_bound(0.25, 4.0, 1.0, 0.0, 0.0).unwrap() >= 0.0);

        assert_eq!(light_bound(0.5, 2.0, 0.0).unwrap(), (-4.0f64).exp());
        let mut prev = 0.0;
        for i in 0..50 {
            let v = light_bound(0.5, 2.0, i as f64 * 0.05).unwrap();
            assert!(v >= prev && v <= 1.0);
            prev = v;
        }
    }

    #[test]
    fn mu_series() {
        assert_eq!(mu_measure(0.2, 0.0).unwrap(), 1.0);
        let c = 4.0 * std::f64::consts::PI * 0.2;
        assert!((mu_density(0.2, 0.0).unwrap() - c).abs() < 1e-14);
        // Σ c^{n+1} b^{n+1}/((n+1) n! (n+1)!) at θ = 0.2, b = 0.5 by direct summation.
        let mut direct = 0.0;
        let mut fact = 1.0;
        for n in 0..30 {
            let nf = n as f64;
            if n > 0 {
                fact *= nf;
            }
            direct += (c * 0.5f64).powi(n + 1) / ((nf + 1.0) * fact * fact * (nf + 1.0));
        }
        assert!((mu_measure(0.2, 0.5).unwrap() - 1.0 - direct).abs() < 1e-12);
        assert!((direct - 1.7111).abs() < 1e-4, "{direct}");
        // The series integrates the density.
        let integral = integrate(|h| mu_density(0.2, h).unwrap(), 0.0, 0.5, 1e-13);
        assert!((integral - direct).abs() < 1e-10);
        let mut prev = mu_density(0.2, 1.0).unwrap();
        for i in 1..20 {
            let d = mu_density(0.2, 1.0 + i as f64).unwrap();
            assert!(d > prev);
            prev = d;
        }
        assert!(mu_measure(1.0, 0.5).is_err());
    }

    #[test]
    fn occupation_moments() {
        let m = interlacement_moments(0.2, 0.25).unwrap();
        assert!((m.mean - std::f64::consts::PI / 20.0).abs() < 1e-15);
        assert_eq!(interlacement_moments(0.2, 0.0).unwrap(), OccupationMoments { mean: 0.0, variance: 0.0 });
        let m2 = interlacement_moments(0.4, 0.25).unwrap();
        assert!((m2.mean - 2.0 * m.mean).abs() < 1e-15);
    }

    #[test]
    fn constants_algebra() {
        let c = LimitConstants::new(1.0, 0.3).unwrap();
        assert!((c.alpha * c.alpha * c.g - 4.0).abs() < 1e-12);
        let sum = c.alpha_thick + c.alpha_thin.unwrap();
        assert!((sum - 2.0 * 0.3 / (c.g * (1.0 - 0.09))).abs() < 1e-12);
        let d = LimitConstants::new(0.09, 0.3).unwrap();
        assert!((d.thick_exponent - d.avoided_exponent).abs() < 1e-15);
        assert!(d.alpha_thin.is_none());
        assert_eq!(LimitConstants::new(0.5, 0.1).unwrap().min_limit, 0.0);
        assert!((c.max_limit - 8.0 * c.g).abs() < 1e-15);
    }
}
