//! Zero-boundary DGFF, the pinned field, and both sides of the Dynkin identity.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::green::{GreenOperator, PotentialKernel};
use crate::walk::LocalTimeField;

/// Most negative eigenvalue tolerated (and clamped to zero) in the pinned covariance.
pub const EIGEN_CLAMP: f64 = -1e-10;

/// A Gaussian field on `V`, implicitly zero at `ρ` and off `V`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianField {
    pub values: Vec<f64>,
    pub seed: Option<u64>,
    pub covariance_id: String,
}

impl GaussianField {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `h = chol · ξ` with `ξ` i.i.d. standard normal, so `Cov h = G`.
pub fn sample_dgff<R: Rng + ?Sized>(green: &GreenOperator, rng: &mut R) -> Result<GaussianField> {
    let n = green.len();
    let chol = green.cholesky()?;
    let xi: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let values = (0..n)
        .map(|i| {
            let row = &chol[i * n..i * n + i + 1];
            row.iter().zip(&xi).map(|(a, b)| a * b).sum()
        })
        .collect();
    Ok(GaussianField { values, seed: None, covariance_id: "green".into() })
}

/// Sampler for `φ` on `Λ_r(0)` with `φ_0 = 0` and
/// `Cov(φ_x, φ_y) = 𝔞(x) + 𝔞(y) - 𝔞(x - y)`.
#[derive(Clone, Debug)]
pub struct PinnedSampler {
    radius: usize,
    /// Sites of `Λ_r(0) ∖ {0}` in row-major order.
    sites: Vec<[i64; 2]>,
    covariance: DMatrix<f64>,
    /// `F` with `F Fᵀ = covariance`.
    factor: DMatrix<f64>,
}

impl PinnedSampler {
    /// Needs the kernel on `Λ_{2r}(0)` since `x - y` ranges over it.
    pub fn new(kernel: &PotentialKernel, r: usize) -> Result<Self> {
        if r < 1 {
            return Err(Error::InvalidParameter("pinned field radius must be at least 1".into()));
        }
        if kernel.radius() < 2 * r {
            return Err(Error::InvalidParameter(format!(
                "pinned field of radius {r} needs a kernel of radius {} (have {})",
                2 * r,
                kernel.radius()
            )));
        }
        let ri = r as i64;
        let sites: Vec<[i64; 2]> = (-ri..=ri)
            .flat_map(|y| (-ri..=ri).map(move |x| [x, y]))
            .filter(|&z| z != [0, 0])
            .collect();
        let n = sites.len();
        let covariance = DMatrix::from_fn(n, n, |i, j| {
            let (x, y) = (sites[i], sites[j]);
            kernel.at(x[0], x[1]) + kernel.at(y[0], y[1]) - kernel.at(x[0] - y[0], x[1] - y[1])
        });
        let eig = SymmetricEigen::new(covariance.clone());
        let min = eig.eigenvalues.min();
        if min < EIGEN_CLAMP {
            return Err(Error::Numerical(format!("pinned covariance has eigenvalue {min:e}")));
        }
        let scales = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let mut factor = eig.eigenvectors;
        for (j, s) in scales.iter().enumerate() {
            factor.column_mut(j).scale_mut(*s);
        }
        Ok(Self { radius: r, sites, covariance, factor })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn sites(&self) -> &[[i64; 2]] {
        &self.sites
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PinnedField {
        let n = self.sites.len();
        let xi: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let side = 2 * self.radius + 1;
        let mut values = vec![0.0; side * side];
        let r = self.radius as i64;
        for (i, z) in self.sites.iter().enumerate() {
            let v: f64 = (0..n).map(|j| self.factor[(i, j)] * xi[j]).sum();
            values[(z[1] + r) as usize * side + (z[0] + r) as usize] = v;
        }
        PinnedField { radius: self.radius, values }
    }
}

/// One draw of `φ` on `Λ_r(0)`.
pub fn sample_pinned<R: Rng + ?Sized>(kernel: &PotentialKernel, r: usize, rng: &mut R) -> Result<PinnedField> {
    Ok(PinnedSampler::new(kernel, r)?.sample(rng))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PinnedField {
    radius: usize,
    /// Row-major over `[-r, r]²`.
    values: Vec<f64>,
}

impl PinnedField {
    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn get(&self, zx: i64, zy: i64) -> Option<f64> {
        let r = self.radius as i64;
        if zx.abs() > r || zy.abs() > r {
            return None;
        }
        Some(self.values[((zy + r) * (2 * r + 1) + zx + r) as usize])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `v ↦ L(v) + h(v)²/2`.
pub fn dynkin_lhs(l: &LocalTimeField, h: &GaussianField) -> Result<Vec<f64>> {
    if l.len() != h.len() {
        return Err(Error::ShapeMismatch { expected: l.len(), got: h.len() });
    }
    Ok(l.local_time.iter().zip(&h.values).map(|(a, b)| a + 0.5 * b * b).collect())
}

/// `v ↦ (h̃(v) + √(2t))²/2`.
pub fn dynkin_rhs(htilde: &GaussianField, t: f64) -> Result<Vec<f64>> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("t must be nonnegative, got {t}")));
    }
    let s = (2.0 * t).sqrt();
    Ok(htilde.values.iter().map(|h| 0.5 * (h + s).powi(2)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::green::{compute_green, potential_kernel};
    use crate::lattice::LatticeGraph;
    use crate::rng::{stream, Purpose};
    use crate::stats::Moments;
    use crate::walk::HoldingMode;

    #[test]
    fn single_vertex_variance() {
        let g = LatticeGraph::from_points(2, [[0, 0]]).unwrap();
        let green = compute_green(&g).unwrap();
        let mut rng = stream(3, Purpose::Gaussian, 0, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| sample_dgff(&green, &mut rng).unwrap().values[0]).collect();
        let m = Moments::of(&xs);
        assert!(m.mean.abs() < 4.0 * m.se_mean);
        assert!((m.variance - 0.25).abs() < 4.0 * m.se_variance);
    }

    #[test]
    fn empirical_covariance_matches_green() {
        let g = LatticeGraph::block(3, 0, 0, 3, 3).unwrap();
        let green = compute_green(&g).unwrap();
        let mut rng = stream(4, Purpose::Gaussian, 0, 0);
        let samples: Vec<Vec<f64>> = (0..100_000).map(|_| sample_dgff(&green, &mut rng).unwrap().values).collect();
        for u in 0..9 {
            for v in u..9 {
                let prods: Vec<f64> = samples.iter().map(|s| s[u] * s[v]).collect();
                let m = Moments::of(&prods);
                assert!((m.mean - green.get(u, v)).abs() < 4.0 * m.se_mean, "({u},{v})");
            }
        }
    }

    #[test]
    fn pinned_covariance_entries() {
        let kernel = potential_kernel(10).unwrap();
        let s = PinnedSampler::new(&kernel, 5).unwrap();
        let idx = |z: [i64; 2]| s.sites().iter().position(|&w| w == z).unwrap();
        let (e1, m1) = (idx([1, 0]), idx([-1, 0]));
        let c = s.covariance();
        assert!((c[(e1, e1)] - 0.5).abs() < 1e-6);
        let want = 2.0 * kernel.at(1, 0) - kernel.at(2, 0);
        assert!((c[(e1, m1)] - want).abs() < 1e-12);
        let rebuilt = &s.factor * s.factor.transpose();
        assert!((rebuilt - c).amax() < 1e-10);
        assert!(PinnedSampler::new(&kernel, 6).is_err());
    }

    #[test]
    fn pinned_samples_vanish_at_origin_and_match_moments() {
        let kernel = potential_kernel(4).unwrap();
        let s = PinnedSampler::new(&kernel, 2).unwrap();
        let mut rng = stream(6, Purpose::Gaussian, 0, 0);
        let u = std::f64::consts::PI * 0.2;
        let a = kernel.at(1, 0);
        let shift = 2.0 * (2.0 * u).sqrt() * a;
        let (mut plain, mut shifted) = (Vec::new(), Vec::new());
        for _ in 0..100_000 {
            let f = s.sample(&mut rng);
            assert_eq!(f.get(0, 0), Some(0.0));
            let phi = f.get(1, 0).unwrap();
            plain.push(0.5 * phi * phi);
            shifted.push(0.5 * (phi + shift).powi(2));
        }
        let diff: Vec<f64> = shifted.iter().zip(&plain).map(|(a, b)| a - b).collect();
        let m = Moments::of(&diff);
        assert!((m.mean - 4.0 * u * a * a).abs() < 4.0 * m.se_mean);
        let p = Moments::of(&plain);
        assert!((2.0 * p.mean - 2.0 * a).abs() < 4.0 * 2.0 * p.se_mean);
    }

    #[test]
    fn dynkin_pointwise() {
        let g = LatticeGraph::block(2, 0, 0, 2, 1).unwrap();
        let mut l = crate::walk::sample_field_with(&g, 0.0, 1, HoldingMode::Aggregated).unwrap();
        let h = GaussianField { values: vec![0.0, 2.0], seed: None, covariance_id: "test".into() };
        assert_eq!(dynkin_lhs(&l, &h).unwrap(), vec![0.0, 2.0]);
        l.local_time[1] = 1.0;
        assert_eq!(dynkin_lhs(&l, &h).unwrap(), vec![0.0, 3.0]);
        let zero = GaussianField { values: vec![0.0; 2], seed: None, covariance_id: "test".into() };
        assert_eq!(dynkin_rhs(&zero, 2.0).unwrap(), vec![2.0, 2.0]);
        let short = GaussianField { values: vec![0.0], seed: None, covariance_id: "test".into() };
        assert!(dynkin_lhs(&l, &short).is_err());
    }
}
