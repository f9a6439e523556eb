//! Python bindings for `loctime`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use loctime::error::Error;
use loctime::rng::{stream, Purpose};
use loctime::{green, lattice, measures, oracle, stats, walk};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_)
        | Error::InvalidParameter(_)
        | Error::InvalidDomain(_)
        | Error::DomainTooSmall { .. }
        | Error::ShapeMismatch { .. }
        | Error::InsufficientData(_)
        | Error::SizeCapExceeded { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Wired lattice approximation of a union of open rectangles.
#[pyclass(name = "Lattice", frozen)]
struct PyLattice {
    inner: lattice::LatticeGraph,
}

#[pymethods]
impl PyLattice {
    /// `rects` lists `(x0, y0, x1, y1)`; the default is the unit square.
    #[new]
    #[pyo3(signature = (n, rects=None))]
    fn new(n: u32, rects: Option<Vec<(f64, f64, f64, f64)>>) -> PyResult<Self> {
        let spec = match rects {
            None => lattice::DomainSpec::unit_square(),
            Some(r) => lattice::DomainSpec::new(r.into_iter().map(|(a, b, c, d)| lattice::Rect::new(a, b, c, d)).collect())
                .map_err(py_err)?,
        };
        Ok(Self { inner: lattice::discretize(&spec, n).map_err(py_err)? })
    }

    /// A `w × h` block of lattice points with lower-left corner `(x0, y0)`.
    #[staticmethod]
    fn block(scale: u32, x0: i64, y0: i64, w: usize, h: usize) -> PyResult<Self> {
        Ok(Self { inner: lattice::LatticeGraph::block(scale, x0, y0, w, h).map_err(py_err)? })
    }

    #[getter]
    fn n(&self) -> u32 {
        self.inner.scale()
    }

    #[getter]
    fn num_vertices(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn pi_rho(&self) -> u64 {
        self.inner.pi_rho()
    }

    fn vertices(&self) -> Vec<(i64, i64)> {
        self.inner.vertices().iter().map(|p| (p[0], p[1])).collect()
    }

    fn rho_edges(&self) -> Vec<u8> {
        (0..self.inner.len()).map(|v| self.inner.rho_edges(v)).collect()
    }

    fn inner_region(&self, eps: f64) -> Vec<usize> {
        lattice::inner_region(&self.inner, eps)
    }

    fn green_diagonal(&self) -> PyResult<Vec<f64>> {
        Ok(green::green_diagonal(&self.inner).map_err(py_err)?.0)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Exact Green function of a small lattice.
#[pyclass(name = "GreenOperator", frozen)]
struct PyGreen {
    inner: green::GreenOperator,
}

#[pymethods]
impl PyGreen {
    #[new]
    fn new(lattice: &PyLattice) -> PyResult<Self> {
        Ok(Self { inner: green::compute_green(&lattice.inner).map_err(py_err)? })
    }

    fn get(&self, u: usize, v: usize) -> PyResult<f64> {
        check_index(u, self.inner.len())?;
        check_index(v, self.inner.len())?;
        Ok(self.inner.get(u, v))
    }

    fn diagonal(&self) -> Vec<f64> {
        self.inner.diagonal()
    }

    fn harmonic_coefficient(&self, x: usize, y: usize) -> PyResult<f64> {
        check_index(x, self.inner.len())?;
        check_index(y, self.inner.len())?;
        Ok(green::harmonic_coefficient(&self.inner, x, y))
    }

    /// One DGFF sample drawn from stream `seed`.
    fn sample_dgff(&self, seed: u64) -> PyResult<Vec<f64>> {
        let mut rng = stream(seed, Purpose::Gaussian, 0, 0);
        Ok(loctime::gff::sample_dgff(&self.inner, &mut rng).map_err(py_err)?.values)
    }
}

fn check_index(i: usize, n: usize) -> PyResult<()> {
    if i < n {
        Ok(())
    } else {
        Err(PyValueError::new_err(format!("vertex {i} out of range for {n} vertices")))
    }
}

/// Potential kernel tabulated on `[-r, r]²`.
#[pyclass(name = "PotentialKernel", frozen)]
struct PyKernel {
    inner: green::PotentialKernel,
}

#[pymethods]
impl PyKernel {
    #[new]
    fn new(r: usize) -> PyResult<Self> {
        Ok(Self { inner: green::potential_kernel(r).map_err(py_err)? })
    }

    fn at(&self, zx: i64, zy: i64) -> PyResult<f64> {
        self.inner
            .get(zx, zy)
            .ok_or_else(|| PyValueError::new_err(format!("({zx}, {zy}) outside the kernel table")))
    }

    #[pyo3(signature = (rmin=None))]
    fn kappa_bar(&self, rmin: Option<f64>) -> Option<f64> {
        self.inner.kappa_bar(rmin.unwrap_or(0.5 * self.inner.radius() as f64))
    }
}

/// Local-time field at `ρ`-local time `t`.
#[pyclass(name = "LocalTimeField", frozen)]
struct PyField {
    inner: walk::LocalTimeField,
}

#[pymethods]
impl PyField {
    #[getter]
    fn t(&self) -> f64 {
        self.inner.t
    }

    #[getter]
    fn excursion_count(&self) -> u64 {
        self.inner.excursion_count
    }

    #[getter]
    fn local_time(&self) -> Vec<f64> {
        self.inner.local_time.clone()
    }

    #[getter]
    fn visits(&self) -> Vec<u64> {
        self.inner.visits.clone()
    }

    fn extend(&self, lattice: &PyLattice, dt: f64) -> PyResult<PyField> {
        Ok(PyField { inner: walk::extend_field(&lattice.inner, &self.inner, dt).map_err(py_err)? })
    }
}

#[pyfunction]
#[pyo3(signature = (lattice, t, seed, per_visit=false))]
fn sample_field(lattice: &PyLattice, t: f64, seed: u64, per_visit: bool) -> PyResult<PyField> {
    let mode = if per_visit { walk::HoldingMode::PerVisit } else { walk::HoldingMode::Aggregated };
    Ok(PyField { inner: walk::sample_field_with(&lattice.inner, t, seed, mode).map_err(py_err)? })
}

/// `(t, last_vertex, excursions)`.
#[pyfunction]
fn cover_time(lattice: &PyLattice, seed: u64) -> (f64, usize, u64) {
    let c = walk::cover_time(&lattice.inner, seed);
    (c.t, c.last_vertex, c.excursions)
}

/// `n` independent draws of the exact single-site law.
#[pyfunction]
fn single_site_samples(gxx: f64, t: f64, n: usize, seed: u64) -> PyResult<Vec<f64>> {
    let sampler = walk::CompoundSampler::new(gxx, t).map_err(py_err)?;
    let mut rng = stream(seed, Purpose::Replica, 0, 0);
    Ok((0..n).map(|_| sampler.sample(&mut rng)).collect())
}

/// Exact law of the local time at a site.
#[pyclass(name = "SiteLaw", frozen)]
struct PySiteLaw {
    inner: oracle::SiteLaw,
}

#[pymethods]
impl PySiteLaw {
    #[new]
    fn new(gxx: f64, t: f64) -> PyResult<Self> {
        Ok(Self { inner: oracle::SiteLaw::new(gxx, t).map_err(py_err)? })
    }

    fn atom(&self) -> f64 {
        self.inner.atom()
    }

    fn density(&self, l: f64) -> f64 {
        self.inner.density(l)
    }

    fn cdf(&self, x: f64) -> f64 {
        self.inner.cdf(x)
    }

    /// `(total mass, mean, variance)` by quadrature.
    fn moments(&self) -> (f64, f64, f64) {
        self.inner.moments()
    }
}

#[pyfunction]
fn upper_tail_bound(gxx: f64, t: f64, a: f64, b: f64) -> PyResult<f64> {
    oracle::upper_tail_bound(gxx, t, a, b).map_err(py_err)
}

#[pyfunction]
fn lower_tail_bound(gxx: f64, t: f64, a: f64, b_lo: f64, b_hi: f64) -> PyResult<f64> {
    oracle::lower_tail_bound(gxx, t, a, b_lo, b_hi).map_err(py_err)
}

#[pyfunction]
fn light_bound(gxx: f64, t: f64, b: f64) -> PyResult<f64> {
    oracle::light_bound(gxx, t, b).map_err(py_err)
}

#[pyfunction]
fn mu_measure(theta: f64, b: f64) -> PyResult<f64> {
    oracle::mu_measure(theta, b).map_err(py_err)
}

/// `(mean, variance)`.
#[pyfunction]
fn interlacement_moments(theta: f64, a_z: f64) -> PyResult<(f64, f64)> {
    let m = oracle::interlacement_moments(theta, a_z).map_err(py_err)?;
    Ok((m.mean, m.variance))
}

/// Level-set parameters under the default schedules.
#[pyclass(name = "Parameters", frozen)]
struct PyParameters {
    inner: measures::Parameters,
}

#[pymethods]
impl PyParameters {
    /// `mode` is one of `thick`, `thin`, `light`, `avoided`; `level` is `λ` for thick
    /// and thin, the light level `r` for light, and ignored for avoided.
    #[new]
    #[pyo3(signature = (mode, theta, n, level=0.0))]
    fn new(mode: &str, theta: f64, n: u32, level: f64) -> PyResult<Self> {
        let inner = match mode {
            "thick" => measures::Parameters::thick(theta, level, n),
            "thin" => measures::Parameters::thin(theta, level, n),
            "light" => measures::Parameters::light(theta, level, n),
            "avoided" => measures::Parameters::avoided(theta, n),
            other => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
        }
        .map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn t_n(&self) -> f64 {
        self.inner.t_n
    }

    #[getter]
    fn a_n(&self) -> f64 {
        self.inner.a_n
    }

    /// `(W_N, Ŵ_N, K_N)`; `W_N` and `K_N` are `None` outside thick and thin modes.
    fn normalizations(&self) -> (Option<f64>, f64, Option<f64>) {
        let n = self.inner.normalizations();
        (n.w_n, n.w_hat_n, n.k_n)
    }

    /// Vertices of the exceptional set selected by the mode.
    fn exceptional_set(&self, field: &PyField) -> Vec<usize> {
        let f = &field.inner;
        match self.inner.mode {
            measures::Mode::Thick => measures::thick_set(f, &self.inner),
            measures::Mode::Thin => measures::thin_set(f, &self.inner),
            measures::Mode::Light { r } => measures::light_set(f, r),
            measures::Mode::Avoided => measures::avoided_set(f),
        }
    }
}

/// `(statistic, p_value)` of the two-sample Kolmogorov–Smirnov test.
#[pyfunction]
fn ks_two_sample(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64)> {
    let r = stats::ks_two_sample(&stats::Sample::new(a).map_err(py_err)?, &stats::Sample::new(b).map_err(py_err)?)
        .map_err(py_err)?;
    Ok((r.statistic, r.p_value))
}

/// `(slope, stderr)` of log count against log N.
#[pyfunction]
fn loglog_slope(pairs: Vec<(f64, f64)>) -> PyResult<(f64, f64)> {
    let f = stats::loglog_slope(&pairs).map_err(py_err)?;
    Ok((f.slope, f.stderr))
}

/// Runs a JSON configuration and returns the manifest as JSON.
#[pyfunction]
fn run_config(config_json: &str) -> PyResult<String> {
    let cfg = loctime::run::RunConfig::from_json(config_json).map_err(py_err)?;
    let manifest = loctime::run::run(&cfg).map_err(py_err)?;
    serde_json::to_string(&manifest).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn loctime_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("G", loctime::G_CONST)?;
    m.add_class::<PyLattice>()?;
    m.add_class::<PyGreen>()?;
    m.add_class::<PyKernel>()?;
    m.add_class::<PyField>()?;
    m.add_class::<PySiteLaw>()?;
    m.add_class::<PyParameters>()?;
    m.add_function(wrap_pyfunction!(sample_field, m)?)?;
    m.add_function(wrap_pyfunction!(cover_time, m)?)?;
    m.add_function(wrap_pyfunction!(single_site_samples, m)?)?;
    m.add_function(wrap_pyfunction!(upper_tail_bound, m)?)?;
    m.add_function(wrap_pyfunction!(lower_tail_bound, m)?)?;
    m.add_function(wrap_pyfunction!(light_bound, m)?)?;
    m.add_function(wrap_pyfunction!(mu_measure, m)?)?;
    m.add_function(wrap_pyfunction!(interlacement_moments, m)?)?;
    m.add_function(wrap_pyfunction!(ks_two_sample, m)?)?;
    m.add_function(wrap_pyfunction!(loglog_slope, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
