//! Monte Carlo checks of the walk against the exact single-site law.

use loctime::green::compute_green;
use loctime::lattice::{discretize, DomainSpec, LatticeGraph};
use loctime::rng::{stream, Purpose};
use loctime::run::median;
use loctime::stats::{ks_one_sample, ks_two_sample, wilson_interval, Moments, Sample};
use loctime::walk::{cover_time, extend_field, sample_field, sample_field_with, CompoundSampler, HoldingMode};
use loctime::G_CONST;
use statrs::distribution::{ContinuousCDF, Normal};

fn single_vertex() -> LatticeGraph {
    LatticeGraph::block(1, 0, 0, 1, 1).unwrap()
}

#[test]
fn single_vertex_moments_over_replicas() {
    let g = single_vertex();
    let t = 1.5;
    let values: Vec<f64> = (0..100_000).map(|s| sample_field(&g, t, s).unwrap().local_time[0]).collect();
    let m = Moments::of(&values);
    assert!((m.mean - t).abs() < 3.0 * m.se_mean, "mean {} ± {}", m.mean, m.se_mean);
    let var = 2.0 * t * 0.25;
    assert!((m.variance - var).abs() < 3.0 * m.se_variance, "var {} ± {}", m.variance, m.se_variance);
}

#[test]
fn vanishing_probability_matches_exponential() {
    let g = LatticeGraph::block(4, 0, 0, 4, 4).unwrap();
    let green = compute_green(&g).unwrap();
    let t = 1.0;
    let reps = 20_000u64;
    let mut zeros = vec![0u64; g.len()];
    for s in 0..reps {
        let f = sample_field(&g, t, s).unwrap();
        for (z, &k) in zeros.iter_mut().zip(&f.visits) {
            *z += u64::from(k == 0);
        }
    }
    for (v, &z) in zeros.iter().enumerate() {
        let want = (-t / green.get(v, v)).exp();
        let (lo, hi) = wilson_interval(z, reps, 4.0);
        assert!(lo <= want && want <= hi, "site {v}: {want} outside [{lo}, {hi}]");
    }
}

#[test]
fn holding_modes_agree_in_law() {
    let g = LatticeGraph::block(4, 0, 0, 3, 3).unwrap();
    let site = 4;
    let draw = |mode, offset: u64| -> Sample {
        Sample::new((0..5_000).map(|s| sample_field_with(&g, 2.0, offset + s, mode).unwrap().local_time[site]).collect())
            .unwrap()
    };
    let r = ks_two_sample(&draw(HoldingMode::Aggregated, 0), &draw(HoldingMode::PerVisit, 1_000_000)).unwrap();
    assert!(r.p_value > 0.01, "p = {}", r.p_value);
}

#[test]
fn extension_matches_direct_sampling() {
    let g = LatticeGraph::block(4, 0, 0, 3, 3).unwrap();
    let (t1, t2, site, reps) = (0.7, 2.0, 0, 5_000u64);
    let mut extended = Vec::new();
    let mut counts = Vec::new();
    for s in 0..reps {
        let f = extend_field(&g, &sample_field(&g, t1, s).unwrap(), t2 - t1).unwrap();
        assert_eq!(f.t, t2);
        extended.push(f.local_time[site]);
        counts.push(f.excursion_count as f64);
    }
    let direct: Vec<f64> = (0..reps).map(|s| sample_field(&g, t2, reps + s).unwrap().local_time[site]).collect();
    let r = ks_two_sample(&Sample::new(extended).unwrap(), &Sample::new(direct).unwrap()).unwrap();
    assert!(r.p_value > 0.01, "p = {}", r.p_value);

    let lambda = g.pi_rho() as f64 * t2;
    let m = Moments::of(&counts);
    assert!((m.mean - lambda).abs() < 4.0 * m.se_mean, "count mean {} vs {lambda}", m.mean);
    assert!((m.variance - lambda).abs() < 4.0 * m.se_variance, "count variance {} vs {lambda}", m.variance);
}

#[test]
fn compound_sampler_moments() {
    for (gxx, t) in [(0.25, 1.0), (1.0, 3.0), (2.5, 0.4)] {
        let sampler = CompoundSampler::new(gxx, t).unwrap();
        let mut rng = stream(17, Purpose::Replica, 0, 0);
        let values: Vec<f64> = (0..1_000_000).map(|_| sampler.sample(&mut rng)).collect();
        let m = Moments::of(&values);
        assert!((m.mean - t).abs() < 3.0 * m.se_mean, "G={gxx}, t={t}: mean {}", m.mean);
        let var = 2.0 * t * gxx;
        assert!((m.variance - var).abs() < 3.0 * m.se_variance, "G={gxx}, t={t}: variance {}", m.variance);
        let zeros = values.iter().filter(|&&x| x == 0.0).count() as u64;
        let (lo, hi) = wilson_interval(zeros, values.len() as u64, 4.0);
        let atom = (-t / gxx).exp();
        assert!(lo <= atom && atom <= hi);
    }
}

#[test]
fn large_time_fluctuations_are_gaussian() {
    let (gxx, t) = (1.0, 1e3);
    let sampler = CompoundSampler::new(gxx, t).unwrap();
    let mut rng = stream(5, Purpose::Replica, 0, 0);
    let scaled: Vec<f64> = (0..10_000).map(|_| (sampler.sample(&mut rng) - t) / (2.0 * t).sqrt()).collect();
    let normal = Normal::new(0.0, gxx.sqrt()).unwrap();
    let r = ks_one_sample(&Sample::new(scaled).unwrap(), |x| normal.cdf(x)).unwrap();
    assert!(r.p_value > 0.01, "p = {}", r.p_value);
}

#[test]
fn cover_time_scaling_on_the_square() {
    let mut medians = Vec::new();
    let mut se = Vec::new();
    for n in [64u32, 128, 256] {
        let g = discretize(&DomainSpec::unit_square(), n).unwrap();
        let scale = 2.0 * G_CONST * f64::from(n).ln().powi(2);
        let mut ratios: Vec<f64> = (0..401).map(|s| cover_time(&g, 1000 * u64::from(n) + s).t / scale).collect();
        let m = Moments::of(&ratios);
        se.push((std::f64::consts::FRAC_PI_2 * m.variance / m.n as f64).sqrt());
        medians.push(median(&mut ratios));
    }
    // Single runs fluctuate on the scale of the ratio itself, so the band applies to the median.
    assert!(medians.iter().all(|m| (0.5..=1.6).contains(m)), "medians {medians:?}");
    // The upward drift over 64..256 is far below the sampling error of the median; only a
    // significant decrease would contradict it.
    for i in 1..medians.len() {
        let tol = 3.0 * (se[i].powi(2) + se[i - 1].powi(2)).sqrt();
        assert!(medians[i] > medians[i - 1] - tol, "medians {medians:?}, standard errors {se:?}");
    }
}
