//! Run configuration: a single TOML file describing kernel, grid, initial
//! data, solver settings, check parameters, sweeps and the stochastic oracle.
//!
//! Parsing validates everything it can and reports *all* violations, not just
//! the first. Builders turn the validated sections into domain objects,
//! loading any referenced CSV files relative to the config file's directory.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{RbkError, Result};
use crate::grid::{density_from_csv_str, InitialFamily, SizeGrid};
use crate::invariants::{CheckParams, Corruption};
use crate::kernel::{KernelSpec, KernelTable};
use crate::solver::{PositivityPolicy, Scheme, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kernel: KernelSection,
    pub grid: GridSection,
    pub initial: InitialSection,
    pub solver: SolverSection,
    #[serde(default)]
    pub checks: CheckSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McSection>,
    /// Test-fixture knob: damage the trajectory before checking it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrupt: Option<CorruptSection>,
    /// Worker threads; 0 means all available cores.
    #[serde(default)]
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Domination constant for custom tables.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: f64,
    pub dx: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub scheme: Scheme,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_output_every")]
    pub output_every: usize,
    #[serde(default = "default_positivity")]
    pub positivity: PositivityPolicy,
}

fn default_output_every() -> usize {
    1
}

fn default_positivity() -> PositivityPolicy {
    PositivityPolicy::RejectAndHalve
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSection {
    /// Split size for the interaction moment bounds.
    #[serde(default = "default_m_split")]
    pub m_split: f64,
    #[serde(default = "default_tail_r")]
    pub tail_r: Vec<f64>,
    /// `(a, delta)` pairs for the uniform-integrability gauge.
    #[serde(default = "default_ui")]
    pub ui: Vec<UiPair>,
    #[serde(default = "default_equi_a")]
    pub equicontinuity_a: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UiPair {
    pub a: f64,
    pub delta: f64,
}

fn default_m_split() -> f64 {
    5.0
}

fn default_tail_r() -> Vec<f64> {
    vec![5.0, 10.0, 20.0]
}

fn default_ui() -> Vec<UiPair> {
    vec![UiPair { a: 5.0, delta: 0.5 }]
}

fn default_equi_a() -> f64 {
    5.0
}

impl Default for CheckSection {
    fn default() -> Self {
        Self {
            m_split: default_m_split(),
            tail_r: default_tail_r(),
            ui: default_ui(),
            equicontinuity_a: default_equi_a(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub levels: Vec<f64>,
    #[serde(default = "default_three")]
    pub dx_halvings: usize,
    #[serde(default = "default_three")]
    pub dt_halvings: usize,
    /// Upper argument of the `min(s, M)` test function in the bank.
    #[serde(default = "default_m_split")]
    pub psi_min_cap: f64,
}

fn default_three() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub particles: usize,
    pub replicas: u64,
    pub seed: u64,
    pub checkpoints: Vec<f64>,
    /// Draw sizes on the grid so annihilation is active and the ensemble
    /// mean follows the discrete system (the mode used for comparison runs).
    #[serde(default = "default_true")]
    pub grid_matched: bool,
    /// Volume factor: "particle_count" or "match_initial_m0".
    #[serde(default = "default_v_mode")]
    pub v_mode: String,
    /// Extra multiplier on V (negative controls mis-scale on purpose).
    #[serde(default = "default_one")]
    pub v_scale: f64,
    /// |z| threshold for the comparison verdict.
    #[serde(default = "default_z_max")]
    pub z_max: f64,
}

fn default_true() -> bool {
    true
}

fn default_one() -> f64 {
    1.0
}

fn default_z_max() -> f64 {
    3.0
}

fn default_v_mode() -> String {
    "match_initial_m0".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptSection {
    /// "scale" or "tail_spike".
    pub kind: String,
    pub from_snapshot: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<f64>,
}

/// Parse and validate a config file, collecting every violation.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| RbkError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

/// Parse and validate config text.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| RbkError::Config(e.to_string()))?;
    let violations = cfg.violations();
    if violations.is_empty() {
        Ok(cfg)
    } else {
        Err(RbkError::Config(format!(
            "{} violation(s):\n  - {}",
            violations.len(),
            violations.join("\n  - ")
        )))
    }
}

impl RunConfig {
    /// All semantic violations, in document order.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();

        match self.kernel.family.as_str() {
            "constant" => {
                if !self.kernel.c.map(|c| c > 0.0).unwrap_or(false) {
                    v.push("kernel.c must be present and positive for the constant family".into());
                }
            }
            "power_product" => {
                match self.kernel.beta {
                    Some(b) if (0.0..1.0).contains(&b) => {}
                    Some(b) => v.push(format!(
                        "kernel.beta = {b} violates the subquadraticity hypothesis (beta must lie in [0, 1))"
                    )),
                    None => v.push("kernel.beta is required for the power_product family".into()),
                }
                if !self.kernel.c.map(|c| c > 0.0).unwrap_or(false) {
                    v.push("kernel.c must be present and positive for the power_product family".into());
                }
            }
            "exp_remainder" => match self.kernel.beta {
                Some(b) if (0.0..1.0).contains(&b) => {}
                Some(b) => v.push(format!(
                    "kernel.beta = {b} violates the subquadraticity hypothesis (beta must lie in [0, 1))"
                )),
                None => v.push("kernel.beta is required for the exp_remainder family".into()),
            },
            "custom_tabulated" => {
                if self.kernel.path.is_none() {
                    v.push("kernel.path is required for custom_tabulated".into());
                }
                if !self.kernel.a.map(|a| a > 0.0).unwrap_or(false) {
                    v.push("kernel.a (domination constant) must be present and positive for custom_tabulated".into());
                }
            }
            other => v.push(format!(
                "unknown kernel.family `{other}` (expected constant | power_product | exp_remainder | custom_tabulated)"
            )),
        }

        if !(self.grid.dx > 0.0) {
            v.push(format!("grid.dx must be positive, got {}", self.grid.dx));
        }
        if !(self.grid.n >= 1.0) {
            v.push(format!("grid.n must be at least 1, got {}", self.grid.n));
        }
        if self.grid.dx > 0.0 && self.grid.n >= 1.0 {
            let ratio = self.grid.n / self.grid.dx;
            if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
                v.push(format!(
                    "grid.n = {} is not an integer multiple of grid.dx = {}",
                    self.grid.n, self.grid.dx
                ));
            }
        }

        match self.initial.family.as_str() {
            "exponential" => {
                if !self.initial.theta.map(|t| t > 0.0).unwrap_or(false) {
                    v.push("initial.theta must be present and positive for exponential".into());
                }
            }
            "gamma" => {
                if !self.initial.k.map(|k| k > 0.0).unwrap_or(false) {
                    v.push("initial.k must be present and positive for gamma".into());
                }
                if !self.initial.theta.map(|t| t > 0.0).unwrap_or(false) {
                    v.push("initial.theta must be present and positive for gamma".into());
                }
            }
            "bump" => {
                for (name, field) in [
                    ("center", self.initial.center),
                    ("width", self.initial.width),
                    ("height", self.initial.height),
                ] {
                    if !field.map(|x| x > 0.0).unwrap_or(false) {
                        v.push(format!("initial.{name} must be present and positive for bump"));
                    }
                }
            }
            "tabulated" => {
                if self.initial.path.is_none() {
                    v.push("initial.path is required for tabulated".into());
                }
            }
            other => v.push(format!(
                "unknown initial.family `{other}` (expected exponential | gamma | bump | tabulated)"
            )),
        }

        if !(self.solver.dt > 0.0) {
            v.push(format!("solver.dt must be positive, got {}", self.solver.dt));
        }
        if !(self.solver.t_end > 0.0) {
            v.push(format!("solver.t_end must be positive, got {}", self.solver.t_end));
        }
        if self.solver.dt > 0.0 && self.solver.t_end > 0.0 {
            let ratio = self.solver.t_end / self.solver.dt;
            if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
                v.push(format!(
                    "solver.t_end = {} is not an integer number of steps of solver.dt = {}",
                    self.solver.t_end, self.solver.dt
                ));
            }
        }
        if self.solver.output_every == 0 {
            v.push("solver.output_every must be at least 1".into());
        }

        if !(self.checks.m_split > 0.0) || self.checks.m_split > self.grid.n {
            v.push(format!(
                "checks.m_split must lie in (0, n = {}], got {}",
                self.grid.n, self.checks.m_split
            ));
        }
        for r in &self.checks.tail_r {
            if !(*r >= 1.0) {
                v.push(format!("checks.tail_r entries must be at least 1, got {r}"));
            }
        }
        for p in &self.checks.ui {
            if !(p.a > 1.0) || p.a > self.grid.n {
                v.push(format!("checks.ui a must lie in (1, n = {}], got {}", self.grid.n, p.a));
            }
            if !(p.delta > 0.0) {
                v.push(format!("checks.ui delta must be positive, got {}", p.delta));
            }
        }
        if !(self.checks.equicontinuity_a > 1.0) || self.checks.equicontinuity_a > self.grid.n {
            v.push(format!(
                "checks.equicontinuity_a must lie in (1, n = {}], got {}",
                self.grid.n, self.checks.equicontinuity_a
            ));
        }

        if let Some(sweep) = &self.sweep {
            if sweep.levels.len() == 1 {
                v.push("sweep.levels needs at least two levels".into());
            }
            if !sweep.levels.windows(2).all(|w| w[1] > w[0]) {
                v.push("sweep.levels must be strictly increasing".into());
            }
            for level in &sweep.levels {
                if self.grid.dx > 0.0 {
                    let ratio = level / self.grid.dx;
                    if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
                        v.push(format!(
                            "sweep level {level} is not an integer multiple of grid.dx = {}",
                            self.grid.dx
                        ));
                    }
                }
            }
        }

        if let Some(mc) = &self.mc {
            if mc.particles < 2 {
                v.push(format!("mc.particles must be at least 2, got {}", mc.particles));
            }
            if mc.replicas < 2 {
                v.push(format!("mc.replicas must be at least 2, got {}", mc.replicas));
            }
            if mc.checkpoints.is_empty()
                || !mc.checkpoints.windows(2).all(|w| w[1] > w[0])
                || mc.checkpoints.first().map(|c| *c <= 0.0).unwrap_or(true)
                || mc.checkpoints.last().map(|c| *c > self.solver.t_end).unwrap_or(true)
            {
                v.push("mc.checkpoints must be ascending, positive and within t_end".into());
            }
            if !(mc.v_scale > 0.0) {
                v.push(format!("mc.v_scale must be positive, got {}", mc.v_scale));
            }
            match mc.v_mode.as_str() {
                "particle_count" | "match_initial_m0" => {}
                other => v.push(format!(
                    "unknown mc.v_mode `{other}` (expected particle_count | match_initial_m0)"
                )),
            }
            if self.solver.dt > 0.0 {
                for cp in &mc.checkpoints {
                    let steps = cp / (self.solver.dt * self.solver.output_every as f64);
                    if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
                        v.push(format!(
                            "mc checkpoint {cp} does not land on the snapshot cadence (dt x output_every)"
                        ));
                    }
                }
            }
        }

        if let Some(c) = &self.corrupt {
            match c.kind.as_str() {
                "scale" => {
                    if !c.factor.map(|f| f > 0.0).unwrap_or(false) {
                        v.push("corrupt.factor must be present and positive for kind = scale".into());
                    }
                }
                "tail_spike" => {
                    if c.size.is_none() || !c.density.map(|d| d > 0.0).unwrap_or(false) {
                        v.push("corrupt.size and corrupt.density (positive) are required for kind = tail_spike".into());
                    }
                }
                other => v.push(format!("unknown corrupt.kind `{other}` (expected scale | tail_spike)")),
            }
        }

        v
    }

    /// FNV-style hash of the canonical serialized form, for provenance lines.
    pub fn config_hash(&self) -> String {
        let canonical = toml::to_string(self).unwrap_or_default();
        let mut h = DefaultHasher::new();
        canonical.hash(&mut h);
        format!("{:016x}", h.finish())
    }

    pub fn build_kernel(&self, base_dir: &Path) -> Result<KernelSpec> {
        match self.kernel.family.as_str() {
            "constant" => KernelSpec::constant(self.kernel.c.unwrap_or(1.0)),
            "power_product" => {
                KernelSpec::power_product(self.kernel.beta.unwrap_or(0.0), self.kernel.c.unwrap_or(1.0))
            }
            "exp_remainder" => KernelSpec::exp_remainder(self.kernel.beta.unwrap_or(0.0)),
            "custom_tabulated" => {
                let rel = self.kernel.path.as_ref().ok_or_else(|| {
                    RbkError::Config("kernel.path is required for custom_tabulated".into())
                })?;
                let path = resolve(base_dir, rel);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| RbkError::Config(format!("cannot read {}: {e}", path.display())))?;
                KernelSpec::custom_tabulated(KernelTable::from_csv_str(&text)?, self.kernel.a.unwrap_or(1.0))
            }
            other => Err(RbkError::Config(format!("unknown kernel family {other}"))),
        }
    }

    pub fn build_grid(&self) -> Result<SizeGrid> {
        SizeGrid::new(self.grid.n, self.grid.dx)
    }

    pub fn build_initial(&self, base_dir: &Path) -> Result<InitialFamily> {
        match self.initial.family.as_str() {
            "exponential" => Ok(InitialFamily::Exponential {
                theta: self.initial.theta.unwrap_or(1.0),
                c: self.initial.c.unwrap_or(1.0),
            }),
            "gamma" => Ok(InitialFamily::Gamma {
                k: self.initial.k.unwrap_or(1.0),
                theta: self.initial.theta.unwrap_or(1.0),
                c: self.initial.c.unwrap_or(1.0),
            }),
            "bump" => Ok(InitialFamily::Bump {
                center: self.initial.center.unwrap_or(1.0),
                width: self.initial.width.unwrap_or(1.0),
                height: self.initial.height.unwrap_or(1.0),
            }),
            "tabulated" => {
                let rel = self.initial.path.as_ref().ok_or_else(|| {
                    RbkError::Config("initial.path is required for tabulated".into())
                })?;
                let path = resolve(base_dir, rel);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| RbkError::Config(format!("cannot read {}: {e}", path.display())))?;
                Ok(InitialFamily::Tabulated { rows: density_from_csv_str(&text)? })
            }
            other => Err(RbkError::Config(format!("unknown initial family {other}"))),
        }
    }

    pub fn build_solver(&self) -> SolverConfig {
        SolverConfig {
            scheme: self.solver.scheme,
            dt: self.solver.dt,
            t_end: self.solver.t_end,
            output_every: self.solver.output_every,
            positivity: self.solver.positivity,
        }
    }

    pub fn build_check_params(&self) -> CheckParams {
        CheckParams {
            m_split: self.checks.m_split,
            tail_thresholds: self.checks.tail_r.clone(),
            ui: self.checks.ui.iter().map(|p| (p.a, p.delta)).collect(),
            equicontinuity_a: self.checks.equicontinuity_a,
        }
    }

    pub fn build_corruption(&self) -> Option<Corruption> {
        self.corrupt.as_ref().map(|c| match c.kind.as_str() {
            "scale" => Corruption::ScaleFrom {
                from: c.from_snapshot,
                factor: c.factor.unwrap_or(1.0),
            },
            _ => Corruption::TailSpikeFrom {
                from: c.from_snapshot,
                size: c.size.unwrap_or(self.grid.n),
                density: c.density.unwrap_or(1.0),
            },
        })
    }
}

fn resolve(base_dir: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    }
}
