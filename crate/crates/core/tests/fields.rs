//! Green-function decay and expectations of the point measures on the unit square.

use loctime::gff::GaussianField;
use loctime::green::{green_column, green_diagonal, CG_TOL};
use loctime::lattice::{discretize, DomainSpec, LatticeGraph};
use loctime::measures::{self, Parameters};
use loctime::rng::{stream, Purpose};
use loctime::stats::{loglog_slope, Moments};
use loctime::walk::sample_field;
use loctime::G_CONST;
use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

fn square(n: u32) -> LatticeGraph {
    discretize(&DomainSpec::unit_square(), n).unwrap()
}

fn centre(g: &LatticeGraph) -> usize {
    let n = i64::from(g.scale());
    g.vertex_id(n / 2, n / 2).unwrap()
}

#[test]
fn hitting_probability_of_a_far_point_decays_like_inverse_log() {
    let mut scaled = Vec::new();
    for n in [32u32, 64, 128, 256] {
        let g = square(n);
        let x = centre(&g);
        let col = green_column(&g, x, CG_TOL).unwrap();
        let half = i64::from(n) / 2;
        let y = g.vertex_id(half + i64::from(n) / 4, half).unwrap();
        let b = col[y] / col[x];
        scaled.push(b * f64::from(n).ln());
    }
    // `𝔟 · log N` stays bounded and settles: the spread shrinks along the sweep.
    let max = scaled.iter().copied().fold(0.0, f64::max);
    assert!(max < 1.0, "{scaled:?}");
    let steps: Vec<f64> = scaled.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    assert!(steps.windows(2).all(|s| s[1] < s[0]), "{scaled:?}");
}

#[test]
fn avoided_mass_has_the_exact_expectation() {
    let n = 64;
    let g = square(n);
    let p = Parameters::avoided(0.4, n).unwrap();
    let (diag, _) = green_diagonal(&g).unwrap();
    let w_hat = p.normalizations().w_hat_n;
    let exact = diag.iter().map(|gxx| (-p.t_n / gxx).exp()).sum::<f64>() / w_hat;
    let masses: Vec<f64> = (0..400)
        .map(|s| measures::kappa(&sample_field(&g, p.t_n, s).unwrap(), &g, &p).unwrap().total_mass())
        .collect();
    let m = Moments::of(&masses);
    assert!((m.mean - exact).abs() < 4.0 * m.se_mean, "{} ± {} vs {exact}", m.mean, m.se_mean);
}

#[test]
fn thick_mass_decreases_in_lambda() {
    let n = 128;
    let g = square(n);
    let lambdas = [0.2, 0.3, 0.4, 0.5];
    let params: Vec<Parameters> = lambdas.iter().map(|&l| Parameters::thick(1.0, l, n).unwrap()).collect();
    let mut mean = vec![0.0; lambdas.len()];
    let runs = 20;
    for s in 0..runs {
        let f = sample_field(&g, params[0].t_n, s).unwrap();
        for (acc, p) in mean.iter_mut().zip(&params) {
            *acc += measures::zeta(&f, &g, p).unwrap().window_mass(0.0, f64::INFINITY) / f64::from(runs as u32);
        }
    }
    assert!(mean.windows(2).all(|w| w[1] < w[0]), "{mean:?}");
}

/// Exact DGFF sample on an `m × m` block from its sine eigenbasis.
fn spectral_dgff(m: usize, seed: u64) -> GaussianField {
    let c = (2.0 / (m + 1) as f64).sqrt();
    let k = std::f64::consts::PI / (m + 1) as f64;
    let s = DMatrix::from_fn(m, m, |i, j| c * (k * ((i + 1) * (j + 1)) as f64).sin());
    let ev: Vec<f64> = (1..=m).map(|j| 2.0 - 2.0 * (k * j as f64).cos()).collect();
    let mut rng = stream(seed, Purpose::Gaussian, 0, 0);
    let z = DMatrix::from_fn(m, m, |i, j| {
        let xi: f64 = StandardNormal.sample(&mut rng);
        xi / (ev[i] + ev[j]).sqrt()
    });
    let h = &s * z * &s;
    // Row-major vertex order: `y` major, `x` minor.
    let values = (0..m * m).map(|v| h[(v / m, v % m)]).collect();
    GaussianField { values, seed: Some(seed), covariance_id: format!("square-{m}") }
}

const WINDOWS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// `E η([b, ∞))` for each window from the exact Gaussian marginals.
fn exact_window_masses(diag: &[f64], a: f64, n: u32) -> Vec<f64> {
    use statrs::distribution::{ContinuousCDF, Normal};
    let normal = Normal::new(0.0, 1.0).unwrap();
    let k_n = measures::dgff_normalization(a, n);
    WINDOWS.iter().map(|&b| diag.iter().map(|gxx| normal.sf((a + b) / gxx.sqrt())).sum::<f64>() / k_n).collect()
}

/// Least-squares slope of `log mass` against the window's left end.
fn decay_rate(masses: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = WINDOWS.iter().zip(masses).map(|(&b, &m)| (b.exp(), m)).collect();
    loglog_slope(&pts).unwrap().slope
}

fn thick_level(lambda: f64, n: u32) -> f64 {
    2.0 * G_CONST.sqrt() * lambda * f64::from(n).ln()
}

#[test]
fn dgff_window_masses_match_exact_marginals() {
    let n = 512u32;
    let g = square(n);
    let m = (n - 3) as usize;
    assert_eq!(g.len(), m * m);
    let a = thick_level(0.3, n);
    let (diag, _) = green_diagonal(&g).unwrap();
    let exact = exact_window_masses(&diag, a, n);
    let mut per_window = vec![Vec::new(); WINDOWS.len()];
    for s in 0..16 {
        let eta = measures::eta_dgff(&spectral_dgff(m, s), &g, a).unwrap();
        for (acc, &b) in per_window.iter_mut().zip(&WINDOWS) {
            acc.push(eta.window_mass(b, f64::INFINITY));
        }
    }
    let mut means = Vec::new();
    for (w, (masses, want)) in per_window.iter().zip(&exact).enumerate() {
        let mm = Moments::of(masses);
        assert!((mm.mean - want).abs() < 4.0 * mm.se_mean, "window {w}: {} ± {} vs {want}", mm.mean, mm.se_mean);
        means.push(mm.mean);
    }
    let (mc, ex) = (decay_rate(&means), decay_rate(&exact));
    assert!((mc - ex).abs() < 0.1, "Monte Carlo rate {mc} vs exact {ex}");
}

#[test]
fn dgff_decay_rate_approaches_its_limit() {
    // The limiting rate is `αλ`; the exact finite-N rate carries a Gaussian hazard
    // correction that fades only like an inverse power of log N.
    let lambda = 0.3;
    let limit = -2.0 / G_CONST.sqrt() * lambda;
    let rates: Vec<f64> = [128u32, 512, 2048]
        .iter()
        .map(|&n| {
            let (diag, _) = green_diagonal(&square(n)).unwrap();
            decay_rate(&exact_window_masses(&diag, thick_level(lambda, n), n))
        })
        .collect();
    assert!(rates.iter().all(|&r| r < limit), "{rates:?} vs {limit}");
    assert!(rates.windows(2).all(|w| w[1] > w[0]), "{rates:?} vs {limit}");
}
