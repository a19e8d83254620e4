//! Python bindings: kernels, runs, invariant checks and the stochastic
//! oracle, driven in-process.
//!
//! ```python
//! import rbk
//! k = rbk.Kernel.constant(1.0)
//! ic = rbk.Initial.exponential(theta=1.0, c=1.0)
//! traj = rbk.run(k, ic, n=10.0, dx=0.1, dt=1e-2, t_end=1.0)
//! for check in traj.check_all():
//!     assert check["pass"], check
//! ```

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use rbk_core::grid::{init_density, InitialFamily, SizeGrid};
use rbk_core::invariants::{run_all_checks, BoundReport, CheckParams};
use rbk_core::kernel::{subquadratic_modulus, validate_admissibility, KernelSpec};
use rbk_core::mc::{compare, run_ensemble, McInit, McSettings};
use rbk_core::residual::{mild_residual, weak_residual, TestFunction};
use rbk_core::solver::{run as solve, PositivityPolicy, Scheme, SolverConfig};
use rbk_core::RbkError;

fn err(e: RbkError) -> PyErr {
    match e {
        RbkError::Domain(_) | RbkError::Config(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// A coagulation rate kernel.
#[pyclass(frozen)]
struct Kernel {
    spec: KernelSpec,
}

#[pymethods]
impl Kernel {
    /// K = c.
    #[staticmethod]
    fn constant(c: f64) -> PyResult<Self> {
        Ok(Self { spec: KernelSpec::constant(c).map_err(err)? })
    }

    /// K = c²·(s·p)^beta with beta in [0, 1).
    #[staticmethod]
    fn power_product(beta: f64, c: f64) -> PyResult<Self> {
        Ok(Self { spec: KernelSpec::power_product(beta, c).map_err(err)? })
    }

    /// K = (s·p)^beta + e^{-s}e^{-p}.
    #[staticmethod]
    fn exp_remainder(beta: f64) -> PyResult<Self> {
        Ok(Self { spec: KernelSpec::exp_remainder(beta).map_err(err)? })
    }

    fn eval(&self, s: f64, p: f64) -> PyResult<f64> {
        self.spec.eval(s, p).map_err(err)
    }

    /// Subquadraticity modulus omega_R at the given sizes.
    fn omega(&self, r_bound: f64, p_samples: Vec<f64>) -> PyResult<Vec<(f64, f64)>> {
        subquadratic_modulus(&self.spec, r_bound, &p_samples).map_err(err)
    }

    /// Sampled admissibility hypotheses over the box [lo, hi]².
    fn validate<'py>(&self, py: Python<'py>, lo: f64, hi: f64) -> PyResult<Bound<'py, PyList>> {
        let rep = validate_admissibility(&self.spec, lo, hi, 1e-9).map_err(err)?;
        let out = PyList::empty(py);
        for c in &rep.checks {
            let d = PyDict::new(py);
            d.set_item("name", &c.name)?;
            d.set_item("pass", c.pass)?;
            d.set_item("witness", c.witness)?;
            d.set_item("worst", c.worst)?;
            d.set_item("detail", &c.detail)?;
            out.append(d)?;
        }
        Ok(out)
    }

    fn __repr__(&self) -> String {
        format!("Kernel({:?})", self.spec.family())
    }
}

/// An initial number-density family.
#[pyclass(frozen)]
struct Initial {
    family: InitialFamily,
}

#[pymethods]
impl Initial {
    /// f0(s) = c·e^{-s/theta}.
    #[staticmethod]
    #[pyo3(signature = (theta = 1.0, c = 1.0))]
    fn exponential(theta: f64, c: f64) -> Self {
        Self { family: InitialFamily::Exponential { theta, c } }
    }

    #[staticmethod]
    #[pyo3(signature = (k, theta = 1.0, c = 1.0))]
    fn gamma(k: f64, theta: f64, c: f64) -> Self {
        Self { family: InitialFamily::Gamma { k, theta, c } }
    }

    #[staticmethod]
    fn bump(center: f64, width: f64, height: f64) -> Self {
        Self { family: InitialFamily::Bump { center, width, height } }
    }
}

fn bound_report_dict<'py>(py: Python<'py>, r: &BoundReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("check", &r.check)?;
    d.set_item("pass", r.pass)?;
    d.set_item("lhs", r.lhs)?;
    d.set_item("rhs", r.rhs)?;
    d.set_item("margin", r.margin)?;
    d.set_item("witness", &r.witness)?;
    Ok(d)
}

fn parse_phi(phi: &str, m: f64, lo: f64, hi: f64) -> PyResult<TestFunction> {
    match phi {
        "one" => Ok(TestFunction::Constant(1.0)),
        "min" => Ok(TestFunction::MinWith(m)),
        "indicator" => Ok(TestFunction::Indicator { lo, hi }),
        other => Err(PyValueError::new_err(format!(
            "unknown test function `{other}` (expected one | min | indicator)"
        ))),
    }
}

/// A completed deterministic run.
#[pyclass]
struct Trajectory {
    inner: rbk_core::Trajectory,
}

#[pymethods]
impl Trajectory {
    /// Snapshot times.
    fn times(&self) -> Vec<f64> {
        self.inner.snapshots.iter().map(|s| s.tau).collect()
    }

    /// Per-snapshot moments as dicts.
    fn moments<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyList>> {
        let out = PyList::empty(py);
        for s in &self.inner.snapshots {
            let d = PyDict::new(py);
            d.set_item("tau", s.tau)?;
            d.set_item("m0", s.moments.m0)?;
            d.set_item("m1", s.moments.m1)?;
            d.set_item("norm01", s.moments.norm01)?;
            d.set_item("collision_integral", s.collision_integral)?;
            out.append(d)?;
        }
        Ok(out)
    }

    /// `(sizes, densities)` of snapshot `idx`.
    fn density(&self, idx: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let snap = self
            .inner
            .snapshots
            .get(idx)
            .ok_or_else(|| PyValueError::new_err(format!("snapshot {idx} out of range")))?;
        Ok((self.inner.grid().sizes().collect(), snap.f.clone()))
    }

    /// Weak-form residual series for a test function
    /// ("one", "min" with `m`, or "indicator" with `lo`/`hi`).
    #[pyo3(signature = (phi = "one", m = 5.0, lo = 1.0, hi = 2.0))]
    fn weak_residual(&self, phi: &str, m: f64, lo: f64, hi: f64) -> PyResult<Vec<(f64, f64)>> {
        weak_residual(&self.inner, &parse_phi(phi, m, lo, hi)?).map_err(err)
    }

    /// Integrated-equation residual series at one node.
    fn mild_residual(&self, node: usize) -> PyResult<Vec<(f64, f64)>> {
        mild_residual(&self.inner, node).map_err(err)
    }

    /// Run the full bound battery; returns one dict per check.
    #[pyo3(signature = (m_split = 5.0, tail = vec![5.0], ui = vec![(5.0, 0.5)], equicontinuity_a = 5.0))]
    fn check_all<'py>(
        &self,
        py: Python<'py>,
        m_split: f64,
        tail: Vec<f64>,
        ui: Vec<(f64, f64)>,
        equicontinuity_a: f64,
    ) -> PyResult<Bound<'py, PyList>> {
        let params = CheckParams { m_split, tail_thresholds: tail, ui, equicontinuity_a };
        let reports = run_all_checks(&self.inner, &params).map_err(err)?;
        let out = PyList::empty(py);
        for r in &reports {
            out.append(bound_report_dict(py, r)?)?;
        }
        Ok(out)
    }

    /// Cross-validate against the grid-matched stochastic oracle; returns
    /// z-score dicts per checkpoint and moment.
    #[pyo3(signature = (checkpoints, particles = 50_000, replicas = 8, seed = 42))]
    fn mc_validate<'py>(
        &self,
        py: Python<'py>,
        checkpoints: Vec<f64>,
        particles: usize,
        replicas: u64,
        seed: u64,
    ) -> PyResult<Bound<'py, PyList>> {
        let f0 = self.inner.state(0);
        let m0 = self.inner.initial().moments.m0;
        #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must be rejected too
        if !(m0 > 0.0) {
            return Err(PyValueError::new_err("cannot sample particles from a zero state"));
        }
        let settings = McSettings {
            count: particles,
            replicas,
            seed,
            v: particles as f64 / m0,
            t_end: self.inner.solver.t_end,
            checkpoints,
        };
        let ensemble =
            run_ensemble(self.inner.kernel().spec(), McInit::GridDensity(&f0), &settings)
                .map_err(err)?;
        let scores = compare(&self.inner, &ensemble).map_err(err)?;
        let out = PyList::empty(py);
        for s in &scores {
            let d = PyDict::new(py);
            d.set_item("checkpoint", s.checkpoint)?;
            d.set_item("moment", &s.moment)?;
            d.set_item("pde", s.pde)?;
            d.set_item("mc_mean", s.mc_mean)?;
            d.set_item("stderr", s.stderr)?;
            d.set_item("z", s.z)?;
            out.append(d)?;
        }
        Ok(out)
    }
}

/// Integrate a scenario and return the trajectory.
#[pyfunction]
#[pyo3(signature = (kernel, initial, n, dx, dt, t_end, scheme = "rk4", output_every = 1, tail = vec![]))]
#[allow(clippy::too_many_arguments)]
fn run(
    kernel: &Kernel,
    initial: &Initial,
    n: f64,
    dx: f64,
    dt: f64,
    t_end: f64,
    scheme: &str,
    output_every: usize,
    tail: Vec<f64>,
) -> PyResult<Trajectory> {
    let scheme = match scheme {
        "rk4" => Scheme::Rk4,
        "euler" => Scheme::Euler,
        other => return Err(PyValueError::new_err(format!("unknown scheme `{other}`"))),
    };
    let grid = SizeGrid::new(n, dx).map_err(err)?;
    let f0 = init_density(&initial.family, &grid).map_err(err)?;
    let cfg = SolverConfig {
        scheme,
        dt,
        t_end,
        output_every,
        positivity: PositivityPolicy::RejectAndHalve,
    };
    let traj = solve(&kernel.spec, &f0, &cfg, &tail).map_err(err)?;
    Ok(Trajectory { inner: traj })
}

#[pymodule]
fn rbk(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Kernel>()?;
    m.add_class::<Initial>()?;
    m.add_class::<Trajectory>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
