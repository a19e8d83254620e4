//! Size discretization and density states.
//!
//! Nodes sit at `s_i = i·dx` for `i = 1..N`, so the grid is closed under the
//! collision arithmetic of the model: `s_i + s_j` and `|s_i - s_j|` land on
//! nodes exactly, which keeps the discrete balance identities exact. The
//! truncation level is `n = N·dx` and the state lives on `(0, n]`.
//!
//! Quadrature is the plain node sum with weight `dx` throughout; anything
//! fancier would break the exactness of the discrete weak identity.

use crate::error::{RbkError, Result};

/// Uniform node grid `s_i = i·dx`, `i = 1..N`, with truncation level `n = N·dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeGrid {
    dx: f64,
    count: usize,
}

impl SizeGrid {
    /// Build a grid for truncation level `n` and spacing `dx`.
    ///
    /// `n/dx` must be an integer (within 1e-9 relative) and `n >= 1`.
    pub fn new(level: f64, dx: f64) -> Result<Self> {
        if !(dx > 0.0) || !dx.is_finite() {
            return Err(RbkError::Config(format!("grid spacing must be positive, got {dx}")));
        }
        if !(level >= 1.0) || !level.is_finite() {
            return Err(RbkError::Config(format!(
                "truncation level must satisfy n >= 1, got {level}"
            )));
        }
        let ratio = level / dx;
        let count = ratio.round();
        if (ratio - count).abs() > 1e-9 * ratio.max(1.0) || count < 1.0 {
            return Err(RbkError::Config(format!(
                "truncation level {level} is not an integer multiple of dx = {dx}"
            )));
        }
        Ok(Self { dx, count: count as usize })
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Number of nodes `N`.
    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Truncation level `n = N·dx`.
    pub fn level(&self) -> f64 {
        self.count as f64 * self.dx
    }

    /// Size of node `idx` (0-based): `(idx + 1)·dx`.
    #[inline]
    pub fn size(&self, idx: usize) -> f64 {
        (idx + 1) as f64 * self.dx
    }

    /// Iterator over node sizes in ascending order.
    pub fn sizes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(|i| self.size(i))
    }
}

/// Built-in initial density families.
#[derive(Debug, Clone)]
pub enum InitialFamily {
    /// `f0(s) = c·e^{-s/theta}`.
    Exponential { theta: f64, c: f64 },
    /// `f0(s) = c·s^{k-1} e^{-s/theta} / (Gamma(k)·theta^k)` (unit integral times `c`).
    Gamma { k: f64, theta: f64, c: f64 },
    /// Rectangular pulse of the given height on `[center - width/2, center + width/2]`.
    Bump { center: f64, width: f64, height: f64 },
    /// Values at grid nodes, loaded from CSV (`s,f` with `s` matching nodes).
    Tabulated { rows: Vec<(f64, f64)> },
}

impl InitialFamily {
    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(RbkError::Domain(msg));
        match self {
            InitialFamily::Exponential { theta, c } => {
                if !(*theta > 0.0) || !(*c >= 0.0) {
                    return bad(format!("exponential family needs theta > 0, c >= 0, got ({theta}, {c})"));
                }
            }
            InitialFamily::Gamma { k, theta, c } => {
                if !(*k > 0.0) || !(*theta > 0.0) || !(*c >= 0.0) {
                    return bad(format!("gamma family needs k, theta > 0, c >= 0, got ({k}, {theta}, {c})"));
                }
            }
            InitialFamily::Bump { center, width, height } => {
                if !(*center > 0.0) || !(*width > 0.0) || !(*height >= 0.0) {
                    return bad(format!(
                        "bump family needs center, width > 0, height >= 0, got ({center}, {width}, {height})"
                    ));
                }
            }
            InitialFamily::Tabulated { rows } => {
                if rows.iter().any(|(_, f)| !(*f >= 0.0) || !f.is_finite()) {
                    return bad("tabulated density contains negative or non-finite values".into());
                }
            }
        }
        Ok(())
    }

    /// Pointwise density value; not meaningful for `Tabulated`.
    pub fn density(&self, s: f64) -> f64 {
        match self {
            InitialFamily::Exponential { theta, c } => c * (-s / theta).exp(),
            InitialFamily::Gamma { k, theta, c } => {
                let norm = libm::tgamma(*k) * theta.powf(*k);
                c * s.powf(k - 1.0) * (-s / theta).exp() / norm
            }
            InitialFamily::Bump { center, width, height } => {
                if (s - center).abs() <= width / 2.0 {
                    *height
                } else {
                    0.0
                }
            }
            InitialFamily::Tabulated { .. } => 0.0,
        }
    }
}

/// Parse a density CSV with header `s,f`.
pub fn density_from_csv_str(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| RbkError::Config("empty density CSV".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != ["s", "f"] {
        return Err(RbkError::Config(format!("density CSV header must be `s,f`, got `{header}`")));
    }
    let mut rows = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for (k, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(RbkError::Config(format!("density CSV row {}: expected 2 fields", k + 2)));
        }
        let s: f64 = fields[0]
            .parse()
            .map_err(|_| RbkError::Config(format!("density CSV row {}: bad size", k + 2)))?;
        let f: f64 = fields[1]
            .parse()
            .map_err(|_| RbkError::Config(format!("density CSV row {}: bad value", k + 2)))?;
        if s <= prev {
            return Err(RbkError::Config(format!(
                "density CSV sizes must be strictly increasing at row {}",
                k + 2
            )));
        }
        prev = s;
        rows.push((s, f));
    }
    Ok(rows)
}

/// Nonnegative density vector on a grid at a fixed time.
#[derive(Debug, Clone)]
pub struct DensityState {
    grid: SizeGrid,
    f: Vec<f64>,
    tau: f64,
}

impl DensityState {
    pub fn new(grid: SizeGrid, f: Vec<f64>, tau: f64) -> Result<Self> {
        if f.len() != grid.len() {
            return Err(RbkError::Domain(format!(
                "density has {} entries for a {}-node grid",
                f.len(),
                grid.len()
            )));
        }
        if f.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(RbkError::Domain("density values must be finite and nonnegative".into()));
        }
        Ok(Self { grid, f, tau })
    }

    pub fn grid(&self) -> &SizeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.f
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub(crate) fn from_parts(grid: SizeGrid, f: Vec<f64>, tau: f64) -> Self {
        Self { grid, f, tau }
    }
}

/// Sample an initial family pointwise at the grid nodes (the truncation is
/// implicit: the grid ends at `n`).
pub fn init_density(family: &InitialFamily, grid: &SizeGrid) -> Result<DensityState> {
    family.validate()?;
    let f = match family {
        InitialFamily::Tabulated { rows } => {
            if rows.len() != grid.len() {
                return Err(RbkError::Config(format!(
                    "tabulated density has {} rows for a {}-node grid",
                    rows.len(),
                    grid.len()
                )));
            }
            let mut f = Vec::with_capacity(grid.len());
            for (i, (s, v)) in rows.iter().enumerate() {
                let node = grid.size(i);
                if (s - node).abs() > 1e-9 * grid.dx() {
                    return Err(RbkError::Config(format!(
                        "tabulated density size {s} does not match grid node {node}"
                    )));
                }
                f.push(*v);
            }
            f
        }
        _ => grid.sizes().map(|s| family.density(s)).collect(),
    };
    DensityState::new(grid.clone(), f, 0.0)
}

/// Number/mass concentrations, the weighted norm and tail masses of a state.
#[derive(Debug, Clone)]
pub struct MomentReport {
    pub tau: f64,
    /// Number concentration `M0 = dx·Σ f_i`.
    pub m0: f64,
    /// Mass concentration `M1 = dx·Σ s_i f_i`.
    pub m1: f64,
    /// `‖f‖ = M0 + M1` (weight `1 + s`).
    pub norm01: f64,
    /// Tail masses `(R, dx·Σ_{s_i > R} f_i)`.
    pub tail: Vec<(f64, f64)>,
}

/// Compute moments and tail masses for the given thresholds.
pub fn moments(state: &DensityState, tail_thresholds: &[f64]) -> MomentReport {
    let dx = state.grid().dx();
    let mut m0 = 0.0;
    let mut m1 = 0.0;
    for (i, &v) in state.values().iter().enumerate() {
        m0 += v;
        m1 += state.grid().size(i) * v;
    }
    m0 *= dx;
    m1 *= dx;
    let tail = tail_thresholds
        .iter()
        .map(|&r| {
            let t: f64 = state
                .values()
                .iter()
                .enumerate()
                .filter(|(i, _)| state.grid().size(*i) > r)
                .map(|(_, &v)| v)
                .sum();
            (r, dx * t)
        })
        .collect();
    MomentReport { tau: state.tau(), m0, m1, norm01: m0 + m1, tail }
}

/// Largest mass a measurable subset of `[0, a]` with measure at most `delta`
/// can carry: sort cell masses descending, take `floor(delta/dx)` whole cells
/// plus the matching fraction of the next one. Exact over grid-resolvable sets.
pub fn ui_functional(state: &DensityState, a: f64, delta: f64) -> Result<f64> {
    let grid = state.grid();
    if !(a > 1.0) || a > grid.level() + 1e-12 * grid.level() {
        return Err(RbkError::Domain(format!(
            "concentration gauge needs a in (1, n = {}], got {a}",
            grid.level()
        )));
    }
    if !(delta > 0.0) {
        return Err(RbkError::Domain(format!("measure budget must be positive, got {delta}")));
    }
    let dx = grid.dx();
    let mut dens: Vec<f64> = state
        .values()
        .iter()
        .enumerate()
        .filter(|(i, _)| grid.size(*i) <= a)
        .map(|(_, &v)| v)
        .collect();
    dens.sort_by(|x, y| y.total_cmp(x));
    let whole = ((delta / dx).floor() as usize).min(dens.len());
    let mut mass = dx * dens[..whole].iter().sum::<f64>();
    if whole < dens.len() {
        let frac = (delta - whole as f64 * dx).max(0.0);
        mass += frac.min(dx) * dens[whole];
    }
    Ok(mass)
}
