//! Green function of the wired Laplacian, the lattice potential kernel, and the
//! factorizations used by the Gaussian samplers.
//!
//! Units: `G(u, v)` is the expected local time (time normalized by the degree 4) at
//! `v` before hitting `ρ`, started from `u`. With that normalization `G = L⁻¹` for
//! `L(u,u) = 4`, `L(u,w) = -1` on lattice neighbors inside `V`.

use std::io::Write;
use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::fmt17;
use crate::lattice::{LatticeGraph, RHO};
use crate::G_CONST;

/// Default cap on `|V|` for dense factorizations.
pub const DENSE_CAP: usize = 20_000;

/// Above this size, diagonals of non-rectangular graphs come from a banded
/// factorization rather than a dense inverse.
const DENSE_DIAGONAL_LIMIT: usize = 2_500;

/// Memory budget for the two band arrays of [`banded_green_diagonal`]; larger
/// graphs fall back to one conjugate-gradient solve per vertex.
const BAND_BUDGET_BYTES: usize = 1 << 31;

/// Relative residual target for conjugate-gradient Green solves.
pub const CG_TOL: f64 = 1e-8;

/// Euler–Mascheroni constant.
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Dense `G = L⁻¹` on a small graph, with a lazily computed Cholesky factor.
#[derive(Debug)]
pub struct GreenOperator {
    n: usize,
    values: Vec<f64>,
    chol: OnceLock<std::result::Result<Vec<f64>, String>>,
}

impl Clone for GreenOperator {
    fn clone(&self) -> Self {
        Self { n: self.n, values: self.values.clone(), chol: OnceLock::new() }
    }
}

/// Dense wired Laplacian.
pub fn laplacian(g: &LatticeGraph) -> DMatrix<f64> {
    let n = g.len();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for u in 0..n {
        l[(u, u)] = f64::from(g.degree(u));
        for &w in g.neighbors(u) {
            if w != RHO {
                l[(u, w as usize)] = -1.0;
            }
        }
    }
    l
}

pub fn compute_green(g: &LatticeGraph) -> Result<GreenOperator> {
    compute_green_capped(g, DENSE_CAP)
}

pub fn compute_green_capped(g: &LatticeGraph, cap: usize) -> Result<GreenOperator> {
    let n = g.len();
    if n > cap {
        return Err(Error::SizeCapExceeded { n, cap });
    }
    let chol = Cholesky::new(laplacian(g))
        .ok_or_else(|| Error::Numerical("wired Laplacian is not positive definite".into()))?;
    let inv = chol.inverse();
    let mut values = vec![0.0; n * n];
    for u in 0..n {
        for v in 0..n {
            // stored exactly symmetric
            values[u * n + v] = 0.5 * (inv[(u, v)] + inv[(v, u)]);
        }
    }
    Ok(GreenOperator { n, values, chol: OnceLock::new() })
}

impl GreenOperator {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.values[u * self.n + v]
    }

    /// Row-major `n × n` table.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|v| self.get(v, v)).collect()
    }

    /// Row-major lower-triangular `C` with `G = C Cᵀ`.
    pub fn cholesky(&self) -> Result<&[f64]> {
        let n = self.n;
        let res = self.chol.get_or_init(|| {
            let m = DMatrix::from_row_slice(n, n, &self.values);
            let c = Cholesky::new(m).ok_or_else(|| "Green matrix is not positive definite".to_string())?;
            let l = c.l();
            let mut out = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..=i {
                    out[i * n + j] = l[(i, j)];
                }
            }
            Ok(out)
        });
        res.as_deref().map_err(|e| Error::Numerical(e.clone()))
    }

    /// Binary export: row-major little-endian `f64`, plus a sidecar carrying the
    /// dimension and a SHA-256 of the bytes.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<MatrixSidecar> {
        let mut hasher = Sha256::new();
        for x in &self.values {
            let b = x.to_le_bytes();
            hasher.update(b);
            w.write_all(&b)?;
        }
        Ok(MatrixSidecar { n: self.n, checksum: hex::encode(hasher.finalize()) })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixSidecar {
    pub n: usize,
    pub checksum: String,
}

/// `𝔟(y) = G(x, y) / G(x, x)`: probability that the walk from `y` hits `x` before `ρ`.
pub fn harmonic_coefficient(green: &GreenOperator, x: usize, y: usize) -> f64 {
    green.get(x, y) / green.get(x, x)
}

/// `y ← L x` for the wired Laplacian.
pub fn apply_laplacian(g: &LatticeGraph, x: &[f64], y: &mut [f64]) {
    for (v, (out, nb)) in y.iter_mut().zip(g.neighbor_table()).enumerate() {
        let mut acc = 4.0 * x[v];
        for &w in nb {
            if w != RHO {
                acc -= x[w as usize];
            }
        }
        *out = acc;
    }
}

/// Conjugate gradients for a symmetric positive definite operator. Stops when
/// `‖r‖ ≤ tol ‖b‖`.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut rr = dot(&r, &r);
    for _ in 0..max_iter {
        if rr.sqrt() <= tol * bnorm {
            return Ok(x);
        }
        apply(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    if rr.sqrt() <= tol * bnorm {
        Ok(x)
    } else {
        Err(Error::Numerical(format!(
            "conjugate gradient did not reach {tol:e} in {max_iter} iterations"
        )))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Column `G(·, x)` by a sparse solve.
pub fn green_column(g: &LatticeGraph, x: usize, tol: f64) -> Result<Vec<f64>> {
    let mut e = vec![0.0; g.len()];
    e[x] = 1.0;
    conjugate_gradient(|p, out| apply_laplacian(g, p, out), &e, tol, 20 * g.len() + 100)
}

/// How [`green_diagonal`] obtained its values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagonalMethod {
    Spectral,
    Dense,
    Banded,
    ConjugateGradient,
}

/// `G(v, v)` for every vertex, at any size.
///
/// A vertex set filling a rectangle is diagonalized exactly by discrete sine modes;
/// small graphs use the dense inverse; other graphs use a banded factorization, or
/// one CG solve per vertex when the band does not fit in memory.
pub fn green_diagonal(g: &LatticeGraph) -> Result<(Vec<f64>, DiagonalMethod)> {
    if let Some((w, h)) = g.full_rectangle() {
        return Ok((rectangle_green_diagonal(w, h), DiagonalMethod::Spectral));
    }
    if g.len() <= DENSE_DIAGONAL_LIMIT {
        return Ok((compute_green(g)?.diagonal(), DiagonalMethod::Dense));
    }
    let b = bandwidth(g);
    if 2 * g.len() * (b + 1) * std::mem::size_of::<f64>() <= BAND_BUDGET_BYTES {
        return Ok((banded_green_diagonal(g), DiagonalMethod::Banded));
    }
    let diag = (0..g.len())
        .into_par_iter()
        .map(|v| green_column(g, v, CG_TOL).map(|col| col[v]))
        .collect::<Result<Vec<f64>>>()?;
    Ok((diag, DiagonalMethod::ConjugateGradient))
}

/// Largest `|u - v|` over lattice edges inside `V`.
pub fn bandwidth(g: &LatticeGraph) -> usize {
    g.neighbor_table()
        .iter()
        .enumerate()
        .flat_map(|(u, ns)| ns.iter().filter(|&&w| w != RHO).map(move |&w| (w as usize).abs_diff(u)))
        .max()
        .unwrap_or(0)
}

/// Exact `G(v, v)` from `L = U D Uᵀ` in band storage followed by the selected-inverse
/// recursion restricted to the band.
///
/// With `Z = L⁻¹` and unit lower factor `U`, `Z = D⁻¹ U⁻¹ + (I − Uᵀ) Z`; entries of `Z`
/// inside the band only ever reference other in-band entries.
pub fn banded_green_diagonal(g: &LatticeGraph) -> Vec<f64> {
    let n = g.len();
    let b = bandwidth(g);
    let w = b + 1;
    // `l[i * w + (j + b - i)]` holds `U[i][j]` for `i - b <= j < i`.
    let mut l = vec![0.0; n * w];
    let mut d = vec![0.0; n];
    let a = |i: usize, j: usize| -> f64 {
        if i == j {
            4.0
        } else if g.neighbors(i).contains(&(j as u32)) {
            -1.0
        } else {
            0.0
        }
    };
    for i in 0..n {
        let lo = i.saturating_sub(b);
        for j in lo..i {
            let mut s = a(i, j);
            let jlo = j.saturating_sub(b).max(lo);
            for k in jlo..j {
                s -= l[i * w + k + b - i] * l[j * w + k + b - j] * d[k];
            }
            l[i * w + j + b - i] = s / d[j];
        }
        let mut s = 4.0;
        for k in lo..i {
            let u = l[i * w + k + b - i];
            s -= u * u * d[k];
        }
        d[i] = s;
    }
    // `z[i * w + (j - i)]` holds `Z[i][j]` for `i <= j <= i + b`.
    let mut z = vec![0.0; n * w];
    for i in (0..n).rev() {
        let hi = (i + b).min(n - 1);
        for j in (i + 1..=hi).rev() {
            let mut s = 0.0;
            for k in i + 1..=hi {
                let zkj = if k <= j { z[k * w + j - k] } else { z[j * w + k - j] };
                s -= l[k * w + i + b - k] * zkj;
            }
            z[i * w + j - i] = s;
        }
        let mut s = 1.0 / d[i];
        for k in i + 1..=hi {
            s -= l[k * w + i + b - k] * z[i * w + k - i];
        }
        z[i * w] = s;
    }
    (0..n).map(|i| z[i * w]).collect()
}

/// Exact diagonal of the Green function of a `w × h` block, row-major.
///
/// Sine modes in `x` reduce `L` to tridiagonal blocks `T_j = (2 + λ_j) I - A_path` in
/// `y`; their inverse diagonals come from forward/backward pivot recursions.
pub fn rectangle_green_diagonal(w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    let mut fwd = vec![0.0; h];
    let mut bwd = vec![0.0; h];
    let mut inv_diag = vec![0.0; h];
    let mut sin2 = vec![0.0; w];
    let wp1 = (w + 1) as f64;
    for j in 1..=w {
        let theta = std::f64::consts::PI * j as f64 / wp1;
        let d = 4.0 - 2.0 * theta.cos();
        fwd[0] = d;
        for i in 1..h {
            fwd[i] = d - 1.0 / fwd[i - 1];
        }
        bwd[h - 1] = d;
        for i in (0..h - 1).rev() {
            bwd[i] = d - 1.0 / bwd[i + 1];
        }
        for i in 0..h {
            inv_diag[i] = 1.0 / (fwd[i] + bwd[i] - d);
        }
        for (x, s) in sin2.iter_mut().enumerate() {
            let v = (theta * (x + 1) as f64).sin();
            *s = 2.0 / wp1 * v * v;
        }
        for (row, &dy) in out.chunks_exact_mut(w).zip(&inv_diag) {
            for (o, &s) in row.iter_mut().zip(&sin2) {
                *o += s * dy;
            }
        }
    }
    out
}

/// Three-term expansion of the standard simple-random-walk potential kernel
/// (normalization `a(±e₁) = 1`).
pub fn standard_kernel_asymptotic(x: f64, y: f64) -> f64 {
    let r2 = x * x + y * y;
    let phi = y.atan2(x);
    let pi = std::f64::consts::PI;
    (2.0 / pi) * 0.5 * r2.ln() + (2.0 * EULER_GAMMA + 8f64.ln()) / pi
        - (4.0 * phi).cos() / (6.0 * pi * r2)
}

/// `κ̄ = lim (𝔞(z) − g log|z|)` implied by the expansion above, in the `a_std/4`
/// normalization.
pub fn kernel_constant_asymptotic() -> f64 {
    (2.0 * EULER_GAMMA + 8f64.ln()) / std::f64::consts::PI / 4.0
}

/// Potential kernel `𝔞 = a_std / 4` tabulated on `Λ_r(0) = [-r, r]²`.
#[derive(Clone, Debug)]
pub struct PotentialKernel {
    radius: usize,
    table: Vec<f64>,
    residual: f64,
}

impl PotentialKernel {
    pub fn radius(&self) -> usize {
        self.radius
    }

    /// `𝔞(z)`; `None` outside the table.
    pub fn get(&self, zx: i64, zy: i64) -> Option<f64> {
        let r = self.radius as i64;
        if zx.abs() > r || zy.abs() > r {
            return None;
        }
        let side = 2 * self.radius + 1;
        Some(self.table[(zy + r) as usize * side + (zx + r) as usize])
    }

    pub fn at(&self, zx: i64, zy: i64) -> f64 {
        self.get(zx, zy).unwrap_or_else(|| panic!("({zx},{zy}) outside kernel radius {}", self.radius))
    }

    /// Largest `|mean of neighbors − 𝔞(z)|` over table points `z ≠ 0` whose neighbors
    /// are also in the table.
    pub fn harmonic_residual(&self) -> f64 {
        self.residual
    }

    /// Least-squares estimate of `κ̄` from table points with `rmin ≤ |z| ≤ radius`.
    pub fn kappa_bar(&self, rmin: f64) -> Option<f64> {
        let r = self.radius as i64;
        let (mut sum, mut count) = (0.0, 0usize);
        for zy in -r..=r {
            for zx in -r..=r {
                let norm = ((zx * zx + zy * zy) as f64).sqrt();
                if norm >= rmin && norm <= self.radius as f64 {
                    sum += self.at(zx, zy) - G_CONST * norm.ln();
                    count += 1;
                }
            }
        }
        (count > 0).then(|| sum / count as f64)
    }

    /// CSV `zx,zy,a`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "zx,zy,a")?;
        let r = self.radius as i64;
        for zy in -r..=r {
            for zx in -r..=r {
                writeln!(w, "{zx},{zy},{}", fmt17(self.at(zx, zy)))?;
            }
        }
        Ok(())
    }
}

/// Solve for the potential kernel on a box of half-width `max(4r, 32)` with Dirichlet
/// data from the asymptotic expansion, then scale by `1/4`.
pub fn potential_kernel(r: usize) -> Result<PotentialKernel> {
    if r < 1 {
        return Err(Error::InvalidParameter("kernel radius must be at least 1".into()));
    }
    let m = (4 * r).max(32) as i64;
    let side = (2 * m + 1) as usize;
    let idx = |x: i64, y: i64| (y + m) as usize * side + (x + m) as usize;
    let is_unknown = |x: i64, y: i64| x.abs() < m && y.abs() < m && (x, y) != (0, 0);

    // Known values: boundary from the expansion, origin 0.
    let mut known = vec![0.0; side * side];
    for y in -m..=m {
        for x in -m..=m {
            if x.abs() == m || y.abs() == m {
                known[idx(x, y)] = standard_kernel_asymptotic(x as f64, y as f64);
            }
        }
    }
    let mut rhs = vec![0.0; side * side];
    for y in -m..=m {
        for x in -m..=m {
            if !is_unknown(x, y) {
                continue;
            }
            let mut acc = 0.0;
            for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                if !is_unknown(x + dx, y + dy) {
                    acc += known[idx(x + dx, y + dy)];
                }
            }
            rhs[idx(x, y)] = acc;
        }
    }
    let apply = |p: &[f64], out: &mut [f64]| {
        for y in -m..=m {
            for x in -m..=m {
                let i = idx(x, y);
                if !is_unknown(x, y) {
                    out[i] = 0.0;
                    continue;
                }
                let mut acc = 4.0 * p[i];
                for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                    if is_unknown(x + dx, y + dy) {
                        acc -= p[idx(x + dx, y + dy)];
                    }
                }
                out[i] = acc;
            }
        }
    };
    let sol = conjugate_gradient(apply, &rhs, 1e-15, 50 * side * side)
        .or_else(|_| conjugate_gradient(apply, &rhs, 1e-13, 100 * side * side))?;
    let full: Vec<f64> = (0..side * side)
        .map(|i| {
            let (x, y) = ((i % side) as i64 - m, (i / side) as i64 - m);
            if is_unknown(x, y) { sol[i] } else { known[i] }
        })
        .collect();

    let rr = r as i64;
    let tside = 2 * r + 1;
    let mut table = vec![0.0; tside * tside];
    let mut residual: f64 = 0.0;
    for zy in -rr..=rr {
        for zx in -rr..=rr {
            let v = full[idx(zx, zy)];
            table[(zy + rr) as usize * tside + (zx + rr) as usize] = 0.25 * v;
            if (zx, zy) != (0, 0) {
                let mean = 0.25
                    * [(1, 0), (-1, 0), (0, 1), (0, -1)]
                        .iter()
                        .map(|(dx, dy)| full[idx(zx + dx, zy + dy)])
                        .sum::<f64>();
                residual = residual.max(0.25 * (mean - v).abs());
            }
        }
    }
    Ok(PotentialKernel { radius: r, table, residual })
}

/// CSV `id,x,y,G` of the Green diagonal.
pub fn write_diagonal_csv<W: Write>(g: &LatticeGraph, diag: &[f64], mut w: W) -> Result<()> {
    writeln!(w, "id,x,y,G")?;
    for (id, d) in diag.iter().enumerate() {
        let [x, y] = g.vertex(id);
        writeln!(w, "{id},{x},{y},{}", fmt17(*d))?;
    }
    Ok(())
}
