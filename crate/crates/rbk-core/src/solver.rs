//! Time integration of the truncated collision system.
//!
//! On the node grid the semi-discrete system reads, per node `i` (1-based):
//!
//! ```text
//! df_i/dt = gain_i - loss_i
//! gain_i  = dx · Σ_{j=1..N-i} K_n(s_{i+j}, s_j) f_{i+j} f_j
//! loss_i  = f_i · dx · Σ_{j=1..N} K_n(s_i, s_j) f_j
//! ```
//!
//! A collision of nodes `i > j` produces node `i - j`; the diagonal pair
//! `(i, i)` carries unordered intensity `½·K_n(s_i,s_i)·f_i²·dx²`, removes two
//! particles and produces nothing (size 0 is outside the state space). With
//! this convention the pair bookkeeping of the right-hand side, the weak-form
//! identity and the stochastic oracle agree exactly.
//!
//! Mass dissipates: `dM1/dt = -dx²·[2·Σ_{j<i} s_j K_n f_i f_j + Σ_i s_i K_n f_i²] ≤ 0`,
//! and for a constant kernel `dM0/dt = -(c/2)·M0² - (c/2)·dx²·Σ f_i²`, whose
//! second term is the `O(dx)` diagonal contribution.
//!
//! Kernel evaluation is compiled once per run into a [`RatePlan`]: product
//! kernels reduce the loss sum to `O(N)` and the gain sum to a correlation
//! with a one-multiply inner loop; tabulated kernels fall back to a dense
//! matrix. Node reductions run ascending in `j`, so results do not depend on
//! the rayon thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{RbkError, Result};
use crate::grid::{moments, DensityState, MomentReport, SizeGrid};
use crate::kernel::{KernelFamily, KernelSpec, TruncatedKernel};

/// Grid size below which parallel dispatch is not worth the overhead.
const PAR_THRESHOLD: usize = 192;

/// Maximum number of dt halvings before a positivity rejection is fatal.
pub const MAX_HALVINGS: u32 = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Euler,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositivityPolicy {
    /// Reject a step that would go negative and retry with dt/2.
    RejectAndHalve,
    /// Clamp negative components to zero and record what was removed.
    ClipWithReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub t_end: f64,
    /// Snapshot cadence in nominal steps.
    pub output_every: usize,
    pub positivity: PositivityPolicy,
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(RbkError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(RbkError::Config(format!("t_end must be positive, got {}", self.t_end)));
        }
        if self.output_every == 0 {
            return Err(RbkError::Config("output_every must be at least 1".into()));
        }
        let ratio = self.t_end / self.dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(RbkError::Config(format!(
                "t_end = {} is not an integer number of steps of dt = {}",
                self.t_end, self.dt
            )));
        }
        Ok(())
    }

    fn step_count(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// Kernel evaluation strategy compiled for one grid.
#[derive(Debug, Clone)]
pub struct RatePlan {
    dx: f64,
    kind: PlanKind,
}

#[derive(Debug, Clone)]
enum PlanKind {
    /// `K(s_i, s_j) = r_i · r_j`.
    Separable { r: Vec<f64> },
    /// `K(s_i, s_j) = r_i·r_j + e_i·e_j`.
    SeparableTwo { r: Vec<f64>, e: Vec<f64> },
    /// Arbitrary symmetric table of node values, row-major `N x N`.
    Dense { n: usize, k: Vec<f64> },
}

impl RatePlan {
    /// Tabulate the truncated kernel on the grid nodes.
    pub fn build(tk: &TruncatedKernel, grid: &SizeGrid) -> Result<Self> {
        let n = grid.len();
        let cut = |s: f64| s <= tk.level();
        let kind = match tk.spec().family() {
            KernelFamily::Constant { .. } | KernelFamily::PowerProduct { .. } => PlanKind::Separable {
                r: grid
                    .sizes()
                    .map(|s| if cut(s) { tk.spec().r(s) } else { 0.0 })
                    .collect(),
            },
            KernelFamily::ExpRemainder { .. } => PlanKind::SeparableTwo {
                r: grid
                    .sizes()
                    .map(|s| if cut(s) { tk.spec().r(s) } else { 0.0 })
                    .collect(),
                e: grid
                    .sizes()
                    .map(|s| if cut(s) { (-s).exp() } else { 0.0 })
                    .collect(),
            },
            KernelFamily::CustomTabulated { .. } => {
                let sizes: Vec<f64> = grid.sizes().collect();
                let mut k = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..=i {
                        let v = tk.eval(sizes[i], sizes[j])?;
                        k[i * n + j] = v;
                        k[j * n + i] = v;
                    }
                }
                PlanKind::Dense { n, k }
            }
        };
        Ok(Self { dx: grid.dx(), kind })
    }

    /// Kernel value at node pair `(i, j)`, 0-based.
    #[inline]
    pub fn pair(&self, i: usize, j: usize) -> f64 {
        match &self.kind {
            PlanKind::Separable { r } => r[i] * r[j],
            PlanKind::SeparableTwo { r, e } => r[i] * r[j] + e[i] * e[j],
            PlanKind::Dense { n, k } => k[i * n + j],
        }
    }

    /// `gain - loss` for every node; `out` must have the grid length.
    pub fn rhs_into(&self, f: &[f64], out: &mut [f64]) {
        let n = f.len();
        let dx = self.dx;
        match &self.kind {
            PlanKind::Separable { r } => {
                let g: Vec<f64> = r.iter().zip(f).map(|(a, b)| a * b).collect();
                let total: f64 = g.iter().sum();
                let body = |i: usize, out_i: &mut f64| {
                    let off = i + 1;
                    let mut gain = 0.0;
                    for j in 0..n - off {
                        gain += g[off + j] * g[j];
                    }
                    *out_i = dx * (gain - f[i] * r[i] * total);
                };
                if n >= PAR_THRESHOLD {
                    out.par_iter_mut().enumerate().for_each(|(i, o)| body(i, o));
                } else {
                    out.iter_mut().enumerate().for_each(|(i, o)| body(i, o));
                }
            }
            PlanKind::SeparableTwo { r, e } => {
                let g: Vec<f64> = r.iter().zip(f).map(|(a, b)| a * b).collect();
                let h: Vec<f64> = e.iter().zip(f).map(|(a, b)| a * b).collect();
                let tg: f64 = g.iter().sum();
                let th: f64 = h.iter().sum();
                let body = |i: usize, out_i: &mut f64| {
                    let off = i + 1;
                    let mut gain = 0.0;
                    for j in 0..n - off {
                        gain += g[off + j] * g[j] + h[off + j] * h[j];
                    }
                    *out_i = dx * (gain - f[i] * (r[i] * tg + e[i] * th));
                };
                if n >= PAR_THRESHOLD {
                    out.par_iter_mut().enumerate().for_each(|(i, o)| body(i, o));
                } else {
                    out.iter_mut().enumerate().for_each(|(i, o)| body(i, o));
                }
            }
            PlanKind::Dense { n: nn, k } => {
                debug_assert_eq!(*nn, n);
                let body = |i: usize, out_i: &mut f64| {
                    let mut gain = 0.0;
                    for j in 0..n - (i + 1) {
                        gain += k[(i + 1 + j) * n + j] * f[i + 1 + j] * f[j];
                    }
                    let mut loss = 0.0;
                    for j in 0..n {
                        loss += k[i * n + j] * f[j];
                    }
                    *out_i = dx * (gain - f[i] * loss);
                };
                if n >= PAR_THRESHOLD {
                    out.par_iter_mut().enumerate().for_each(|(i, o)| body(i, o));
                } else {
                    out.iter_mut().enumerate().for_each(|(i, o)| body(i, o));
                }
            }
        }
    }

    /// `(full, number)` collision rates of a state:
    /// `full = dx²·Σ_{i,j} K f_i f_j` (all ordered pairs) and
    /// `number = dx²·[Σ_{i>j} K f_i f_j + Σ_i K_ii f_i²]`, the rate at which
    /// particles leave the system under the diagonal convention.
    pub fn collision_rates(&self, f: &[f64]) -> (f64, f64) {
        let dx = self.dx;
        let (full, diag) = match &self.kind {
            PlanKind::Separable { r } => {
                let s: f64 = r.iter().zip(f).map(|(a, b)| a * b).sum();
                let d: f64 = r.iter().zip(f).map(|(a, b)| (a * b) * (a * b)).sum();
                ((dx * s) * (dx * s), dx * dx * d)
            }
            PlanKind::SeparableTwo { r, e } => {
                let s1: f64 = r.iter().zip(f).map(|(a, b)| a * b).sum();
                let s2: f64 = e.iter().zip(f).map(|(a, b)| a * b).sum();
                let d: f64 = r
                    .iter()
                    .zip(e)
                    .zip(f)
                    .map(|((a, b), c)| ((a * c) * (a * c)) + ((b * c) * (b * c)))
                    .sum();
                ((dx * s1) * (dx * s1) + (dx * s2) * (dx * s2), dx * dx * d)
            }
            PlanKind::Dense { n, k } => {
                let mut full = 0.0;
                let mut diag = 0.0;
                for i in 0..*n {
                    for j in 0..*n {
                        full += k[i * n + j] * f[i] * f[j];
                    }
                    diag += k[i * n + i] * f[i] * f[i];
                }
                (dx * dx * full, dx * dx * diag)
            }
        };
        (full, 0.5 * (full + diag))
    }
}

/// Collision right-hand side of a state under a truncated kernel.
///
/// Errors when the state's grid level does not match the truncation level.
pub fn rhs(state: &DensityState, tk: &TruncatedKernel) -> Result<Vec<f64>> {
    let level = state.grid().level();
    if (level - tk.level()).abs() > 1e-9 * level.max(1.0) {
        return Err(RbkError::Domain(format!(
            "state grid level {level} does not match truncation level {}",
            tk.level()
        )));
    }
    let plan = RatePlan::build(tk, state.grid())?;
    let mut out = vec![0.0; state.values().len()];
    plan.rhs_into(state.values(), &mut out);
    Ok(out)
}

/// What one accepted step did.
#[derive(Debug, Clone, Copy)]
pub struct StepOutcome {
    pub effective_dt: f64,
    pub halvings: u32,
    /// Number and mass removed by clipping (zero under reject-and-halve).
    pub clamped_number: f64,
    pub clamped_mass: f64,
}

struct Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    stage: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            stage: vec![0.0; n],
        }
    }
}

fn scheme_step(plan: &RatePlan, scheme: Scheme, f: &[f64], dt: f64, ws: &mut Workspace, out: &mut [f64]) {
    match scheme {
        Scheme::Euler => {
            plan.rhs_into(f, &mut ws.k1);
            for i in 0..f.len() {
                out[i] = f[i] + dt * ws.k1[i];
            }
        }
        Scheme::Rk4 => {
            plan.rhs_into(f, &mut ws.k1);
            for i in 0..f.len() {
                ws.stage[i] = f[i] + 0.5 * dt * ws.k1[i];
            }
            plan.rhs_into(&ws.stage, &mut ws.k2);
            for i in 0..f.len() {
                ws.stage[i] = f[i] + 0.5 * dt * ws.k2[i];
            }
            plan.rhs_into(&ws.stage, &mut ws.k3);
            for i in 0..f.len() {
                ws.stage[i] = f[i] + dt * ws.k3[i];
            }
            plan.rhs_into(&ws.stage, &mut ws.k4);
            for i in 0..f.len() {
                out[i] = f[i] + dt / 6.0 * (ws.k1[i] + 2.0 * ws.k2[i] + 2.0 * ws.k3[i] + ws.k4[i]);
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn substep(
    plan: &RatePlan,
    cfg: &SolverConfig,
    grid: &SizeGrid,
    f: &[f64],
    dt: f64,
    tau: f64,
    ws: &mut Workspace,
    out: &mut [f64],
) -> Result<StepOutcome> {
    match cfg.positivity {
        PositivityPolicy::RejectAndHalve => {
            let mut dt_eff = dt;
            for halvings in 0..=MAX_HALVINGS {
                scheme_step(plan, cfg.scheme, f, dt_eff, ws, out);
                if out.iter().all(|v| *v >= 0.0) {
                    return Ok(StepOutcome {
                        effective_dt: dt_eff,
                        halvings,
                        clamped_number: 0.0,
                        clamped_mass: 0.0,
                    });
                }
                dt_eff *= 0.5;
            }
            let worst = out.iter().cloned().fold(f64::INFINITY, f64::min);
            Err(RbkError::Numeric(format!(
                "positivity not restored after {MAX_HALVINGS} dt halvings at tau = {tau:.6e} \
                 (most negative component {worst:.3e}); the system is too stiff for dt = {dt:.3e}"
            )))
        }
        PositivityPolicy::ClipWithReport => {
            scheme_step(plan, cfg.scheme, f, dt, ws, out);
            let mut number = 0.0;
            let mut mass = 0.0;
            for (i, v) in out.iter_mut().enumerate() {
                if *v < 0.0 {
                    number += -*v;
                    mass += grid.size(i) * -*v;
                    *v = 0.0;
                }
            }
            Ok(StepOutcome {
                effective_dt: dt,
                halvings: 0,
                clamped_number: grid.dx() * number,
                clamped_mass: grid.dx() * mass,
            })
        }
    }
}

/// One scheme step from a state, honoring the positivity policy.
pub fn step(state: &DensityState, tk: &TruncatedKernel, cfg: &SolverConfig) -> Result<(DensityState, StepOutcome)> {
    cfg.validate()?;
    let level = state.grid().level();
    if (level - tk.level()).abs() > 1e-9 * level.max(1.0) {
        return Err(RbkError::Domain(format!(
            "state grid level {level} does not match truncation level {}",
            tk.level()
        )));
    }
    let plan = RatePlan::build(tk, state.grid())?;
    let mut ws = Workspace::new(state.values().len());
    let mut out = vec![0.0; state.values().len()];
    let outcome = substep(&plan, cfg, state.grid(), state.values(), cfg.dt, state.tau(), &mut ws, &mut out)?;
    let next = DensityState::from_parts(state.grid().clone(), out, state.tau() + outcome.effective_dt);
    Ok((next, outcome))
}

/// State, moments and running time integrals at one output time.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub tau: f64,
    pub f: Vec<f64>,
    pub moments: MomentReport,
    /// Trapezoid accumulation of `dx²·ΣΣ K_n f f` (all ordered pairs).
    pub collision_integral: f64,
    /// Trapezoid accumulation of the number-loss rate; `M0(tau) + this`
    /// stays equal to `M0(0)` up to integrator order.
    pub number_loss_integral: f64,
}

/// Per-substep log line.
#[derive(Debug, Clone, Copy)]
pub struct StepRecord {
    pub tau: f64,
    pub m1: f64,
    pub effective_dt: f64,
    pub halvings: u32,
    pub clamped_mass: f64,
}

/// A completed run: snapshots at the output cadence plus a per-step log.
#[derive(Debug, Clone)]
pub struct Trajectory {
    grid: SizeGrid,
    kernel: TruncatedKernel,
    pub solver: SolverConfig,
    pub tail_thresholds: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub steps: Vec<StepRecord>,
}

impl Trajectory {
    pub fn grid(&self) -> &SizeGrid {
        &self.grid
    }

    pub fn kernel(&self) -> &TruncatedKernel {
        &self.kernel
    }

    pub fn initial(&self) -> &Snapshot {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("trajectory has at least the initial snapshot")
    }

    /// Density state view of snapshot `idx`.
    pub fn state(&self, idx: usize) -> DensityState {
        let snap = &self.snapshots[idx];
        DensityState::from_parts(self.grid.clone(), snap.f.clone(), snap.tau)
    }

    /// Snapshot index whose time matches `tau` within `1e-9·max(1, tau)`.
    pub fn snapshot_at(&self, tau: f64) -> Option<usize> {
        self.snapshots
            .iter()
            .position(|s| (s.tau - tau).abs() <= 1e-9 * tau.abs().max(1.0))
    }

    /// Rebuild the moment reports after states were edited (test fixtures).
    pub fn refresh_moments(&mut self) {
        for snap in &mut self.snapshots {
            let st = DensityState::from_parts(self.grid.clone(), snap.f.clone(), snap.tau);
            snap.moments = moments(&st, &self.tail_thresholds);
        }
    }
}

/// Integrate the truncated system from `f0` to `t_end`.
///
/// The truncation level is the grid level of `f0`. Snapshots are taken at
/// `output_every`-step cadence (the initial and final states are always
/// included); time integrals accumulate by the trapezoid rule on every
/// accepted substep.
pub fn run(
    spec: &KernelSpec,
    f0: &DensityState,
    cfg: &SolverConfig,
    tail_thresholds: &[f64],
) -> Result<Trajectory> {
    cfg.validate()?;
    let grid = f0.grid().clone();
    let tk = TruncatedKernel::new(spec.clone(), grid.level())?;
    let plan = RatePlan::build(&tk, &grid)?;
    let n_steps = cfg.step_count();

    let mut f = f0.values().to_vec();
    let mut ws = Workspace::new(f.len());
    let mut out = vec![0.0; f.len()];
    let mut collision_acc = 0.0;
    let mut number_acc = 0.0;
    let (mut rate_full, mut rate_number) = plan.collision_rates(&f);

    let snap = |tau: f64, f: &[f64], coll: f64, num: f64| -> Snapshot {
        let st = DensityState::from_parts(grid.clone(), f.to_vec(), tau);
        Snapshot {
            tau,
            f: f.to_vec(),
            moments: moments(&st, tail_thresholds),
            collision_integral: coll,
            number_loss_integral: num,
        }
    };

    let mut snapshots = vec![snap(0.0, &f, 0.0, 0.0)];
    let mut steps = Vec::with_capacity(n_steps);

    for k in 1..=n_steps {
        let target = k as f64 * cfg.dt;
        let mut tau = (k - 1) as f64 * cfg.dt;
        // Sub-steps cover exactly one nominal dt so the cadence stays exact
        // even when positivity halves a step.
        while target - tau > 1e-12 * cfg.dt {
            let dt_sub = (target - tau).min(cfg.dt);
            let outcome = substep(&plan, cfg, &grid, &f, dt_sub, tau, &mut ws, &mut out)?;
            std::mem::swap(&mut f, &mut out);
            tau += outcome.effective_dt;
            if target - tau <= 1e-12 * cfg.dt {
                tau = target;
            }
            let (nf, nn) = plan.collision_rates(&f);
            collision_acc += 0.5 * outcome.effective_dt * (rate_full + nf);
            number_acc += 0.5 * outcome.effective_dt * (rate_number + nn);
            rate_full = nf;
            rate_number = nn;
            let m1 = grid.dx()
                * f.iter()
                    .enumerate()
                    .map(|(i, v)| grid.size(i) * v)
                    .sum::<f64>();
            steps.push(StepRecord {
                tau,
                m1,
                effective_dt: outcome.effective_dt,
                halvings: outcome.halvings,
                clamped_mass: outcome.clamped_mass,
            });
        }
        if k % cfg.output_every == 0 || k == n_steps {
            snapshots.push(snap(target, &f, collision_acc, number_acc));
        }
    }

    Ok(Trajectory {
        grid,
        kernel: tk,
        solver: *cfg,
        tail_thresholds: tail_thresholds.to_vec(),
        snapshots,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{init_density, InitialFamily};
    use crate::kernel::truncate;

    fn grid(n: f64, dx: f64) -> SizeGrid {
        SizeGrid::new(n, dx).unwrap()
    }

    fn constant_tk(n: f64) -> TruncatedKernel {
        truncate(KernelSpec::constant(1.0).unwrap(), n).unwrap()
    }

    fn cfg(scheme: Scheme, dt: f64, t_end: f64) -> SolverConfig {
        SolverConfig {
            scheme,
            dt,
            t_end,
            output_every: 1,
            positivity: PositivityPolicy::RejectAndHalve,
        }
    }

    /// Brute-force right-hand side straight from the pair picture: every
    /// unordered pair (i > j) fires at rate K f_i f_j dx², moving one particle
    /// to node i - j and removing the pair; diagonal pairs fire at half
    /// intensity and remove two particles.
    fn rhs_brute(f: &[f64], g: &SizeGrid, tk: &TruncatedKernel) -> Vec<f64> {
        let n = f.len();
        let dx = g.dx();
        let mut out = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                let k = tk.eval(g.size(i), g.size(j)).unwrap();
                if i == j {
                    // event intensity (1/2) K f² dx², removes 2 from node i
                    out[i] -= k * f[i] * f[i] * dx;
                } else if i > j {
                    let rate = k * f[i] * f[j] * dx; // density rate, dx from quadrature
                    out[i] -= rate;
                    out[j] -= rate;
                    out[i - j - 1] += rate;
                }
            }
        }
        out
    }

    #[test]
    fn rhs_zero_state() {
        let g = grid(3.0, 1.0);
        let st = DensityState::new(g, vec![0.0; 3], 0.0).unwrap();
        let v = rhs(&st, &constant_tk(3.0)).unwrap();
        assert!(v.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn rhs_monodisperse() {
        let g = grid(5.0, 1.0);
        let mut f = vec![0.0; 5];
        f[0] = 3.0;
        let st = DensityState::new(g, f, 0.0).unwrap();
        let v = rhs(&st, &constant_tk(5.0)).unwrap();
        assert!((v[0] - (-9.0)).abs() < 1e-12, "rhs_1 = {}", v[0]);
        assert!(v[1..].iter().all(|x| *x == 0.0));
    }

    #[test]
    fn rhs_two_nodes_hand_values() {
        let g = grid(2.0, 1.0);
        let st = DensityState::new(g, vec![1.0, 1.0], 0.0).unwrap();
        let v = rhs(&st, &constant_tk(2.0)).unwrap();
        assert!((v[0] - (-1.0)).abs() < 1e-12, "rhs_1 = {}", v[0]);
        assert!((v[1] - (-2.0)).abs() < 1e-12, "rhs_2 = {}", v[1]);
    }

    #[test]
    fn rhs_matches_pair_enumeration() {
        let g = grid(4.0, 0.5);
        let f: Vec<f64> = (0..8).map(|i| ((i * 37 % 11) as f64) / 7.0).collect();
        for spec in [
            KernelSpec::constant(0.7).unwrap(),
            KernelSpec::power_product(0.5, 1.0).unwrap(),
            KernelSpec::exp_remainder(0.25).unwrap(),
        ] {
            let tk = truncate(spec, 4.0).unwrap();
            let st = DensityState::new(g.clone(), f.clone(), 0.0).unwrap();
            let got = rhs(&st, &tk).unwrap();
            let want = rhs_brute(&f, &g, &tk);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn rhs_level_mismatch() {
        let g = grid(3.0, 1.0);
        let st = DensityState::new(g, vec![1.0; 3], 0.0).unwrap();
        assert!(rhs(&st, &constant_tk(5.0)).is_err());
    }

    #[test]
    fn gain_loss_pair_symmetry() {
        // total gain number equals dx² Σ_{i>j} K f_i f_j exactly
        let g = grid(4.0, 0.5);
        let f: Vec<f64> = (0..8).map(|i| 0.2 + (i as f64) * 0.13).collect();
        let tk = truncate(KernelSpec::power_product(0.3, 1.2).unwrap(), 4.0).unwrap();
        let plan = RatePlan::build(&tk, &g).unwrap();
        let dx = g.dx();
        let mut gain_total = 0.0;
        for i in 0..8 {
            let mut gain = 0.0;
            for j in 0..8 - (i + 1) {
                gain += plan.pair(i + 1 + j, j) * f[i + 1 + j] * f[j];
            }
            gain_total += dx * dx * gain;
        }
        let mut brute = 0.0;
        for i in 0..8 {
            for j in 0..i {
                brute += tk.eval(g.size(i), g.size(j)).unwrap() * f[i] * f[j];
            }
        }
        brute *= dx * dx;
        assert!((gain_total - brute).abs() < 1e-13, "{gain_total} vs {brute}");
    }

    #[test]
    fn step_zero_state_stays_zero() {
        let g = grid(3.0, 1.0);
        let st = DensityState::new(g, vec![0.0; 3], 0.0).unwrap();
        let (next, info) = step(&st, &constant_tk(3.0), &cfg(Scheme::Rk4, 0.5, 1.0)).unwrap();
        assert!(next.values().iter().all(|v| *v == 0.0));
        assert_eq!(info.effective_dt, 0.5);
    }

    #[test]
    fn step_monodisperse_euler() {
        let g = grid(5.0, 1.0);
        let mut f = vec![0.0; 5];
        f[0] = 1.0;
        let st = DensityState::new(g, f, 0.0).unwrap();
        let (next, _) = step(&st, &constant_tk(5.0), &cfg(Scheme::Euler, 0.1, 1.0)).unwrap();
        assert!((next.values()[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn step_halves_to_stay_nonnegative() {
        let g = grid(5.0, 1.0);
        let mut f = vec![0.0; 5];
        f[0] = 1.0;
        let st = DensityState::new(g, f, 0.0).unwrap();
        let (next, info) = step(&st, &constant_tk(5.0), &cfg(Scheme::Euler, 2.0, 2.0)).unwrap();
        assert!(next.values()[0] >= 0.0);
        assert!(info.effective_dt <= 1.0);
        assert!(info.halvings >= 1);
    }

    #[test]
    fn step_clip_policy_reports_removed_mass() {
        let g = grid(5.0, 1.0);
        let mut f = vec![0.0; 5];
        f[0] = 1.0;
        let st = DensityState::new(g, f, 0.0).unwrap();
        let mut c = cfg(Scheme::Euler, 2.0, 2.0);
        c.positivity = PositivityPolicy::ClipWithReport;
        let (next, info) = step(&st, &constant_tk(5.0), &c).unwrap();
        assert_eq!(next.values()[0], 0.0);
        assert!(info.clamped_number > 0.0);
        assert!(info.clamped_mass > 0.0);
    }

    /// Independent reference for the 3-node micro system with K = 1, dx = 1:
    /// hand-derived equations integrated by a locally coded RK4 at dt = 1e-5.
    fn micro_oracle(f0: [f64; 3], t_end: f64) -> [f64; 3] {
        let deriv = |f: [f64; 3]| -> [f64; 3] {
            let total = f[0] + f[1] + f[2];
            [
                f[1] * f[0] + f[2] * f[1] - f[0] * total,
                f[2] * f[0] - f[1] * total,
                -f[2] * total,
            ]
        };
        let mut f = f0;
        let dt = 1e-5;
        let n = (t_end / dt).round() as usize;
        for _ in 0..n {
            let k1 = deriv(f);
            let k2 = deriv([f[0] + 0.5 * dt * k1[0], f[1] + 0.5 * dt * k1[1], f[2] + 0.5 * dt * k1[2]]);
            let k3 = deriv([f[0] + 0.5 * dt * k2[0], f[1] + 0.5 * dt * k2[1], f[2] + 0.5 * dt * k2[2]]);
            let k4 = deriv([f[0] + dt * k3[0], f[1] + dt * k3[1], f[2] + dt * k3[2]]);
            for i in 0..3 {
                f[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        f
    }

    #[test]
    fn run_micro_case_matches_ode_reference() {
        let g = grid(3.0, 1.0);
        let st = DensityState::new(g, vec![1.0, 1.0, 1.0], 0.0).unwrap();
        let spec = KernelSpec::constant(1.0).unwrap();
        let traj = run(&spec, &st, &cfg(Scheme::Rk4, 1e-3, 1.0), &[]).unwrap();
        for tau in [0.5, 1.0] {
            let idx = traj.snapshot_at(tau).unwrap();
            let want = micro_oracle([1.0, 1.0, 1.0], tau);
            for (a, b) in traj.snapshots[idx].f.iter().zip(want) {
                assert!((a - b).abs() <= 1e-6, "tau {tau}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn run_zero_initial_data() {
        let g = grid(3.0, 1.0);
        let st = DensityState::new(g, vec![0.0; 3], 0.0).unwrap();
        let spec = KernelSpec::constant(1.0).unwrap();
        let traj = run(&spec, &st, &cfg(Scheme::Rk4, 0.1, 1.0), &[1.0]).unwrap();
        assert!(traj
            .snapshots
            .iter()
            .all(|s| s.f.iter().all(|v| *v == 0.0) && s.collision_integral == 0.0));
    }

    #[test]
    fn run_mass_never_increases_stepwise() {
        let g = grid(10.0, 0.1);
        let f0 = init_density(&InitialFamily::Exponential { theta: 1.0, c: 1.0 }, &g).unwrap();
        let spec = KernelSpec::constant(1.0).unwrap();
        let traj = run(&spec, &f0, &cfg(Scheme::Rk4, 1e-2, 1.0), &[]).unwrap();
        let m1_0 = traj.initial().moments.m1;
        let mut prev = m1_0;
        for s in &traj.steps {
            assert!(s.m1 <= prev + 1e-12 * m1_0, "mass rose at tau = {}", s.tau);
            prev = s.m1;
        }
        assert!(prev < m1_0, "mass should strictly decrease on this run");
    }

    #[test]
    fn run_number_identity_accumulator() {
        let g = grid(10.0, 0.1);
        let f0 = init_density(&InitialFamily::Exponential { theta: 1.0, c: 1.0 }, &g).unwrap();
        let spec = KernelSpec::constant(1.0).unwrap();
        let traj = run(&spec, &f0, &cfg(Scheme::Rk4, 1e-3, 1.0), &[]).unwrap();
        let m0_0 = traj.initial().moments.m0;
        for s in &traj.snapshots {
            let drift = (s.moments.m0 + s.number_loss_integral - m0_0).abs();
            assert!(drift < 5e-8, "identity drift {drift} at tau = {}", s.tau);
        }
    }

    #[test]
    fn run_snapshot_cadence_and_times() {
        let g = grid(5.0, 0.5);
        let f0 = init_density(&InitialFamily::Exponential { theta: 1.0, c: 1.0 }, &g).unwrap();
        let spec = KernelSpec::constant(1.0).unwrap();
        let mut c = cfg(Scheme::Rk4, 0.1, 1.0);
        c.output_every = 3;
        let traj = run(&spec, &f0, &c, &[]).unwrap();
        let taus: Vec<f64> = traj.snapshots.iter().map(|s| s.tau).collect();
        assert_eq!(taus.len(), 5); // 0, 0.3, 0.6, 0.9, 1.0
        assert!(taus.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(*taus.last().unwrap(), 1.0);
        assert!(traj.snapshot_at(0.6).is_some());
    }

    #[test]
    fn run_rejects_misaligned_horizon() {
        let g = grid(3.0, 1.0);
        let st = DensityState::new(g, vec![0.0; 3], 0.0).unwrap();
        let spec = KernelSpec::constant(1.0).unwrap();
        let bad = cfg(Scheme::Rk4, 0.3, 1.0);
        assert!(run(&spec, &st, &bad, &[]).is_err());
    }
}
