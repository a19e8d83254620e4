//! Truncation-level sweeps and resolution self-convergence studies.
//!
//! A truncation sweep runs the same scenario at increasing cutoff levels and
//! measures weak distances `D(n, m, psi) = max_tau |∫ (f^n - f^m) psi ds|`
//! over a bank of bounded test functions; the distances should shrink as the
//! cutoff grows, at the rate of the initial tail mass above the lower level.
//!
//! A resolution sweep halves dx (and dt) and reports observed convergence
//! orders from Richardson triples of self-differences.

use rayon::prelude::*;

use crate::error::{RbkError, Result};
use crate::grid::{init_density, InitialFamily, SizeGrid};
use crate::kernel::KernelSpec;
use crate::residual::TestFunction;
use crate::solver::{run, SolverConfig, Trajectory};

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub n_low: f64,
    pub n_high: f64,
    pub psi: String,
    pub distance: f64,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Per test function: whether `D(levels[i], levels[i+1])` never increased.
    pub monotone: Vec<(String, bool)>,
    /// Initial weighted norm at the finest level (tail-bound scale).
    pub norm01_finest: f64,
}

impl SweepReport {
    pub fn distance(&self, n_low: f64, n_high: f64, psi: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.n_low == n_low && r.n_high == n_high && r.psi == psi)
            .map(|r| r.distance)
    }
}

/// Run consecutive truncation levels and compare them weakly.
///
/// All levels share `dx`, the solver settings and the initial family (each
/// level truncates it at its own cutoff). Sign patterns are grid-specific and
/// rejected here.
pub fn truncation_sweep(
    spec: &KernelSpec,
    family: &InitialFamily,
    dx: f64,
    cfg: &SolverConfig,
    levels: &[f64],
    psis: &[TestFunction],
) -> Result<SweepReport> {
    if levels.len() < 2 {
        return Err(RbkError::Config("truncation sweep needs at least two levels".into()));
    }
    if !levels.windows(2).all(|w| w[1] > w[0]) {
        return Err(RbkError::Config("truncation levels must be strictly increasing".into()));
    }
    if psis.iter().any(|p| matches!(p, TestFunction::SignPattern(_))) {
        return Err(RbkError::Domain(
            "sign patterns are per-grid and cannot be compared across levels".into(),
        ));
    }

    let trajs: Vec<Trajectory> = levels
        .par_iter()
        .map(|&level| -> Result<Trajectory> {
            let grid = SizeGrid::new(level, dx)?;
            let f0 = init_density(family, &grid)?;
            run(spec, &f0, cfg, &[])
        })
        .collect::<Result<Vec<_>>>()?;

    let snaps = trajs[0].snapshots.len();
    for t in &trajs {
        if t.snapshots.len() != snaps {
            return Err(RbkError::Config("snapshot misalignment across sweep levels".into()));
        }
    }

    let mut rows = Vec::new();
    let mut monotone = Vec::new();
    for psi in psis {
        let series: Vec<Vec<f64>> = trajs
            .iter()
            .map(|t| -> Result<Vec<f64>> {
                let vals = psi.values_on(t.grid())?;
                Ok(t.snapshots
                    .iter()
                    .map(|s| {
                        t.grid().dx()
                            * vals.iter().zip(&s.f).map(|(p, v)| p * v).sum::<f64>()
                    })
                    .collect())
            })
            .collect::<Result<Vec<_>>>()?;
        let mut prev = f64::INFINITY;
        let mut mono = true;
        for w in 0..levels.len() - 1 {
            let d = series[w]
                .iter()
                .zip(&series[w + 1])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if d > prev {
                mono = false;
            }
            prev = d;
            rows.push(SweepRow {
                n_low: levels[w],
                n_high: levels[w + 1],
                psi: psi.label(),
                distance: d,
            });
        }
        monotone.push((psi.label(), mono));
    }

    Ok(SweepReport {
        rows,
        monotone,
        norm01_finest: trajs.last().unwrap().initial().moments.norm01,
    })
}

/// Observed convergence order for one quantity.
#[derive(Debug, Clone)]
pub struct OrderRow {
    pub quantity: String,
    /// Self-difference magnitudes between consecutive refinement levels.
    pub errors: Vec<f64>,
    /// `log2` ratio of the last error pair; `None` when undefined.
    pub p_hat: Option<f64>,
    pub note: String,
}

#[derive(Debug, Clone)]
pub struct OrderReport {
    pub rows: Vec<OrderRow>,
}

fn order_row(quantity: &str, errors: Vec<f64>) -> OrderRow {
    let tiny = errors.iter().all(|e| *e < 1e-14);
    if tiny {
        return OrderRow {
            quantity: quantity.into(),
            errors,
            p_hat: None,
            note: "exact".into(),
        };
    }
    let monotone = errors.windows(2).all(|w| w[1] <= w[0]);
    let m = errors.len();
    let p = if m >= 2 && errors[m - 1] > 0.0 {
        Some((errors[m - 2] / errors[m - 1]).log2())
    } else {
        None
    };
    OrderRow {
        quantity: quantity.into(),
        errors,
        p_hat: p,
        note: if monotone { "ok".into() } else { "inconclusive".into() },
    }
}

/// Probe window for pointwise self-comparison of densities.
const PROBE_LO: f64 = 1.0;
const PROBE_HI: f64 = 5.0;

/// Self-convergence under dx and dt halvings.
///
/// `dx_halvings` and `dt_halvings` count refinement levels (3 or more each).
/// Reported quantities: final `M0` and a probe-window density under dx
/// refinement; final `M0`, the final state and the accumulated collision
/// integral under dt refinement.
pub fn resolution_sweep(
    spec: &KernelSpec,
    family: &InitialFamily,
    level: f64,
    dx0: f64,
    cfg: &SolverConfig,
    dx_halvings: usize,
    dt_halvings: usize,
) -> Result<OrderReport> {
    if dx_halvings < 3 || dt_halvings < 3 {
        return Err(RbkError::Config("resolution sweep needs at least 3 levels each".into()));
    }

    // dx study at fixed dt
    let dx_runs: Vec<Trajectory> = (0..dx_halvings)
        .into_par_iter()
        .map(|k| -> Result<Trajectory> {
            let dx = dx0 / 2f64.powi(k as i32);
            let grid = SizeGrid::new(level, dx)?;
            let f0 = init_density(family, &grid)?;
            run(spec, &f0, cfg, &[])
        })
        .collect::<Result<Vec<_>>>()?;

    let m0_dx: Vec<f64> = dx_runs.iter().map(|t| t.last().moments.m0).collect();
    let m0_dx_errors: Vec<f64> = m0_dx.windows(2).map(|w| (w[0] - w[1]).abs()).collect();

    let mut probe_errors = Vec::new();
    for w in dx_runs.windows(2) {
        let coarse = &w[0];
        let fine = &w[1];
        let mut err = 0.0f64;
        for i in 0..coarse.grid().len() {
            let s = coarse.grid().size(i);
            if !(PROBE_LO..=PROBE_HI).contains(&s) {
                continue;
            }
            // coarse node i (0-based) sits at fine index 2i + 1
            let fi = 2 * i + 1;
            err = err.max((coarse.last().f[i] - fine.last().f[fi]).abs());
        }
        probe_errors.push(err);
    }

    // dt study at fixed dx
    let dt_runs: Vec<Trajectory> = (0..dt_halvings)
        .into_par_iter()
        .map(|k| -> Result<Trajectory> {
            let grid = SizeGrid::new(level, dx0)?;
            let f0 = init_density(family, &grid)?;
            let mut c = *cfg;
            c.dt = cfg.dt / 2f64.powi(k as i32);
            c.output_every = cfg.output_every * 2usize.pow(k as u32);
            run(spec, &f0, &c, &[])
        })
        .collect::<Result<Vec<_>>>()?;

    let m0_dt: Vec<f64> = dt_runs.iter().map(|t| t.last().moments.m0).collect();
    let m0_dt_errors: Vec<f64> = m0_dt.windows(2).map(|w| (w[0] - w[1]).abs()).collect();
    let state_dt_errors: Vec<f64> = dt_runs
        .windows(2)
        .map(|w| {
            w[0].last()
                .f
                .iter()
                .zip(&w[1].last().f)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let coll_dt_errors: Vec<f64> = dt_runs
        .windows(2)
        .map(|w| (w[0].last().collision_integral - w[1].last().collision_integral).abs())
        .collect();

    Ok(OrderReport {
        rows: vec![
            order_row("m0_final_dx", m0_dx_errors),
            order_row("f_probe_window_dx", probe_errors),
            order_row("m0_final_dt", m0_dt_errors),
            order_row("state_max_abs_dt", state_dt_errors),
            order_row("collision_integral_dt", coll_dt_errors),
        ],
    })
}
