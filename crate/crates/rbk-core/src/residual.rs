//! Weak-form and integrated-form residuals of a trajectory.
//!
//! Pairing the system with a bounded test function `phi` gives the identity
//!
//! ```text
//! dx·Σ_i phi(s_i)(f_i(tau) - f_i(0))
//!   = ∫_0^tau dx²·[ Σ_{i>j} phi~(s_i, s_j) K_n f_i f_j - Σ_i phi(s_i) K_n(s_i,s_i) f_i² ] ds
//! ```
//!
//! with the pair weight `phi~(s, p) = phi(s - p) - phi(s) - phi(p)`; the
//! diagonal carries `-2·phi(s_i)` at half pair intensity because an
//! equal-size collision removes both particles and produces nothing. The
//! identity is exact in space, so the residual of a computed trajectory
//! measures pure time-integration error and shrinks at the trapezoid's
//! `O(dt²)` when dt is refined.

use rayon::prelude::*;

use crate::error::{RbkError, Result};
use crate::grid::SizeGrid;
use crate::solver::{RatePlan, Trajectory};

/// Bounded test functions evaluated on grid nodes.
#[derive(Debug, Clone)]
pub enum TestFunction {
    Constant(f64),
    /// `phi(s) = min(s, m)`.
    MinWith(f64),
    /// Indicator of `[lo, hi]`.
    Indicator { lo: f64, hi: f64 },
    /// Arbitrary ±1 value per node.
    SignPattern(Vec<f64>),
}

impl TestFunction {
    /// Human-readable tag used in report files.
    pub fn label(&self) -> String {
        match self {
            TestFunction::Constant(c) => format!("const_{c}"),
            TestFunction::MinWith(m) => format!("min_s_{m}"),
            TestFunction::Indicator { lo, hi } => format!("ind_{lo}_{hi}"),
            TestFunction::SignPattern(_) => "sign_pattern".into(),
        }
    }

    /// Node values; errors when the function is unbounded or malformed.
    pub fn values_on(&self, grid: &SizeGrid) -> Result<Vec<f64>> {
        match self {
            TestFunction::Constant(c) => {
                if !c.is_finite() {
                    return Err(RbkError::Domain(format!("test function must be bounded, got {c}")));
                }
                Ok(vec![*c; grid.len()])
            }
            TestFunction::MinWith(m) => {
                if !m.is_finite() || *m <= 0.0 {
                    return Err(RbkError::Domain(format!("min(s, m) needs finite m > 0, got {m}")));
                }
                Ok(grid.sizes().map(|s| s.min(*m)).collect())
            }
            TestFunction::Indicator { lo, hi } => {
                if !(lo <= hi) {
                    return Err(RbkError::Domain(format!("indicator needs lo <= hi, got [{lo}, {hi}]")));
                }
                Ok(grid
                    .sizes()
                    .map(|s| if *lo <= s && s <= *hi { 1.0 } else { 0.0 })
                    .collect())
            }
            TestFunction::SignPattern(v) => {
                if v.len() != grid.len() {
                    return Err(RbkError::Domain(format!(
                        "sign pattern has {} entries for a {}-node grid",
                        v.len(),
                        grid.len()
                    )));
                }
                if v.iter().any(|x| *x != 1.0 && *x != -1.0) {
                    return Err(RbkError::Domain("sign pattern entries must be ±1".into()));
                }
                Ok(v.clone())
            }
        }
    }
}

/// Pair-sum side of the weak identity for one state.
pub(crate) fn weak_rate(plan: &RatePlan, phi: &[f64], f: &[f64], dx: f64) -> f64 {
    let n = f.len();
    let row = |i: usize| -> f64 {
        let mut acc = 0.0;
        for j in 0..i {
            // node numbers are i+1 and j+1; their difference is node i-j
            let weight = phi[i - j - 1] - phi[i] - phi[j];
            acc += weight * plan.pair(i, j) * f[i] * f[j];
        }
        acc - phi[i] * plan.pair(i, i) * f[i] * f[i]
    };
    let total: f64 = if n >= 512 {
        (0..n).into_par_iter().map(row).sum()
    } else {
        (0..n).map(row).sum()
    };
    dx * dx * total
}

/// Residual series `R(tau)` of the weak identity along a trajectory.
///
/// Returns `(tau, R)` per snapshot; `R` should vanish to integrator order.
pub fn weak_residual(traj: &Trajectory, phi: &TestFunction) -> Result<Vec<(f64, f64)>> {
    let grid = traj.grid();
    let phi_vals = phi.values_on(grid)?;
    let plan = RatePlan::build(traj.kernel(), grid)?;
    let dx = grid.dx();

    let rates: Vec<f64> = traj
        .snapshots
        .par_iter()
        .map(|s| weak_rate(&plan, &phi_vals, &s.f, dx))
        .collect();

    let paired_initial: f64 = dx
        * phi_vals
            .iter()
            .zip(&traj.snapshots[0].f)
            .map(|(p, v)| p * v)
            .sum::<f64>();

    let mut out = Vec::with_capacity(traj.snapshots.len());
    let mut q = 0.0;
    for (k, snap) in traj.snapshots.iter().enumerate() {
        if k > 0 {
            let dt = snap.tau - traj.snapshots[k - 1].tau;
            q += 0.5 * dt * (rates[k - 1] + rates[k]);
        }
        let paired: f64 = dx
            * phi_vals
                .iter()
                .zip(&snap.f)
                .map(|(p, v)| p * v)
                .sum::<f64>();
        out.push((snap.tau, paired - paired_initial - q));
    }
    Ok(out)
}

/// Residual of the time-integrated equation at a single node (0-based index):
/// `f_i(tau) - f_i(0) - ∫_0^tau (gain_i - loss_i) ds`, trapezoid in time.
pub fn mild_residual(traj: &Trajectory, node: usize) -> Result<Vec<(f64, f64)>> {
    let grid = traj.grid();
    let n = grid.len();
    if node >= n {
        return Err(RbkError::Domain(format!("node {node} out of range for {n}-node grid")));
    }
    let plan = RatePlan::build(traj.kernel(), grid)?;
    let dx = grid.dx();

    let node_rate = |f: &[f64]| -> f64 {
        let off = node + 1;
        let mut gain = 0.0;
        for j in 0..n - off {
            gain += plan.pair(off + j, j) * f[off + j] * f[j];
        }
        let mut loss = 0.0;
        for j in 0..n {
            loss += plan.pair(node, j) * f[j];
        }
        dx * (gain - f[node] * loss)
    };

    let rates: Vec<f64> = traj.snapshots.iter().map(|s| node_rate(&s.f)).collect();
    let f0 = traj.snapshots[0].f[node];
    let mut out = Vec::with_capacity(traj.snapshots.len());
    let mut q = 0.0;
    for (k, snap) in traj.snapshots.iter().enumerate() {
        if k > 0 {
            let dt = snap.tau - traj.snapshots[k - 1].tau;
            q += 0.5 * dt * (rates[k - 1] + rates[k]);
        }
        out.push((snap.tau, snap.f[node] - f0 - q));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{init_density, DensityState, InitialFamily, SizeGrid};
    use crate::kernel::KernelSpec;
    use crate::solver::{run, PositivityPolicy, Scheme, SolverConfig};

    fn base_cfg(dt: f64, t_end: f64) -> SolverConfig {
        SolverConfig {
            scheme: Scheme::Rk4,
            dt,
            t_end,
            output_every: 1,
            positivity: PositivityPolicy::RejectAndHalve,
        }
    }

    fn small_run(dt: f64) -> Trajectory {
        let g = SizeGrid::new(10.0, 0.1).unwrap();
        let f0 = init_density(&InitialFamily::Exponential { theta: 1.0, c: 1.0 }, &g).unwrap();
        run(&KernelSpec::constant(1.0).unwrap(), &f0, &base_cfg(dt, 1.0), &[]).unwrap()
    }

    #[test]
    fn zero_test_function_gives_zero_residual() {
        let traj = small_run(1e-2);
        let r = weak_residual(&traj, &TestFunction::Constant(0.0)).unwrap();
        assert!(r.iter().all(|(_, v)| *v == 0.0));
    }

    #[test]
    fn weak_residual_is_integrator_small() {
        let traj = small_run(1e-2);
        for phi in [
            TestFunction::Constant(1.0),
            TestFunction::MinWith(5.0),
            TestFunction::Indicator { lo: 1.0, hi: 2.0 },
        ] {
            let r = weak_residual(&traj, &phi).unwrap();
            let worst = r.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max);
            assert!(worst < 1e-5, "{}: residual {worst}", phi.label());
        }
    }

    #[test]
    fn weak_residual_halving_dt_divides_by_about_four() {
        let coarse = {
            let traj = small_run(4e-2);
            weak_residual(&traj, &TestFunction::Constant(1.0))
                .unwrap()
                .iter()
                .map(|(_, v)| v.abs())
                .fold(0.0, f64::max)
        };
        let fine = {
            let traj = small_run(2e-2);
            weak_residual(&traj, &TestFunction::Constant(1.0))
                .unwrap()
                .iter()
                .map(|(_, v)| v.abs())
                .fold(0.0, f64::max)
        };
        let ratio = coarse / fine;
        assert!(ratio > 3.5, "observed refinement ratio {ratio}");
    }

    #[test]
    fn pair_weight_of_min_function_is_nonpositive() {
        // For phi = min(s, M): phi~(s, p) <= 0 always and <= -M when both
        // sizes exceed M. Checked directly on node values.
        let g = SizeGrid::new(12.0, 0.25).unwrap();
        let m = 5.0;
        let phi = TestFunction::MinWith(m).values_on(&g).unwrap();
        for i in 1..g.len() {
            for j in 0..i {
                let weight = phi[i - j - 1] - phi[i] - phi[j];
                assert!(weight <= 1e-14, "phi~ positive at ({i}, {j}): {weight}");
                if g.size(i) > m && g.size(j) > m {
                    assert!(weight <= -m + 1e-12, "phi~ = {weight} above -M");
                }
            }
        }
    }

    #[test]
    fn mild_residual_zero_data() {
        let g = SizeGrid::new(3.0, 1.0).unwrap();
        let st = DensityState::new(g, vec![0.0; 3], 0.0).unwrap();
        let traj = run(&KernelSpec::constant(1.0).unwrap(), &st, &base_cfg(0.1, 1.0), &[]).unwrap();
        let r = mild_residual(&traj, 0).unwrap();
        assert!(r.iter().all(|(_, v)| *v == 0.0));
    }

    #[test]
    fn mild_residual_monodisperse_euler_one_step() {
        // One Euler step: f1(dt) = 1 - dt, so the trapezoid defect is exactly
        // -dt/2·(f1(0)² - f1(dt)²) = -0.0095 at dt = 0.1 — visible O(dt²).
        let g = SizeGrid::new(5.0, 1.0).unwrap();
        let mut f = vec![0.0; 5];
        f[0] = 1.0;
        let st = DensityState::new(g, f, 0.0).unwrap();
        let mut cfg = base_cfg(0.1, 0.1);
        cfg.scheme = Scheme::Euler;
        let traj = run(&KernelSpec::constant(1.0).unwrap(), &st, &cfg, &[]).unwrap();
        let r = mild_residual(&traj, 0).unwrap();
        let last = r.last().unwrap().1;
        let hand = -0.1 / 2.0 * (1.0f64.powi(2) - 0.9f64.powi(2));
        assert!((last - hand).abs() < 1e-12, "residual {last} vs hand {hand}");
    }

    #[test]
    fn mild_residual_micro_case_second_order() {
        // Worst node residual measures the trapezoid defect: 1.22e-6 at
        // dt = 1e-3, 1.22e-8 at dt = 1e-4.
        let worst_at = |dt: f64| -> f64 {
            let g = SizeGrid::new(3.0, 1.0).unwrap();
            let st = DensityState::new(g, vec![1.0, 1.0, 1.0], 0.0).unwrap();
            let traj = run(&KernelSpec::constant(1.0).unwrap(), &st, &base_cfg(dt, 1.0), &[]).unwrap();
            (0..3)
                .map(|node| {
                    mild_residual(&traj, node)
                        .unwrap()
                        .iter()
                        .map(|(_, v)| v.abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max)
        };
        let coarse = worst_at(1e-3);
        assert!(coarse <= 2e-6, "residual {coarse}");
        let fine = worst_at(1e-4);
        assert!(fine <= 2e-8, "residual {fine}");
    }

    #[test]
    fn sign_pattern_residual_is_integrator_small() {
        // The identity is exact in space for any bounded phi, sign patterns
        // included, so the residual stays at trapezoid scale.
        let traj = small_run(1e-2);
        let pattern: Vec<f64> = (0..traj.grid().len())
            .map(|i| if i % 3 == 0 { -1.0 } else { 1.0 })
            .collect();
        let r = weak_residual(&traj, &TestFunction::SignPattern(pattern)).unwrap();
        let worst = r.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max);
        assert!(worst < 1e-5, "residual {worst}");
    }

    #[test]
    fn sign_pattern_validation() {
        let g = SizeGrid::new(2.0, 1.0).unwrap();
        assert!(TestFunction::SignPattern(vec![1.0, -1.0]).values_on(&g).is_ok());
        assert!(TestFunction::SignPattern(vec![1.0]).values_on(&g).is_err());
        assert!(TestFunction::SignPattern(vec![0.5, 1.0]).values_on(&g).is_err());
        assert!(TestFunction::Constant(f64::INFINITY).values_on(&g).is_err());
    }
}
