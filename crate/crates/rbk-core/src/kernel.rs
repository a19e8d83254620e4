//! Coagulation kernels of product-plus-remainder form.
//!
//! A kernel is a symmetric nonnegative rate `K(s, p) = r(s)·r(p) + alpha(s, p)`
//! with the remainder dominated on `[1, ∞)²` by `alpha ≤ A·r·r` for a declared
//! constant `A`, and strictly subquadratic: for every `R ≥ 1` the modulus
//! `omega_R(p) = sup_{s ≤ R} K(s, p)/p` vanishes as `p → ∞`.
//!
//! Symmetry is enforced by construction: every evaluation first orders its
//! arguments, so `eval(s, p)` and `eval(p, s)` are the same floating-point
//! computation, bit for bit.
//!
//! [`TruncatedKernel`] applies the sharp cutoff indicator of `[0, n]` in both
//! arguments; [`kernel_bounds`] computes the box supremum `kbar`, the
//! large-size coupling bound `theta(a)` and a sampled subquadraticity table,
//! by discrete maximization over grid nodes (cross-checked analytically for
//! the monotone built-in families).

use crate::error::{RbkError, Result};
use crate::grid::SizeGrid;

/// Number of sample points used when maximizing over a size interval.
const SCAN_SAMPLES: usize = 2048;

/// Built-in kernel families plus tabulated custom kernels.
#[derive(Debug, Clone)]
pub enum KernelFamily {
    /// `K ≡ c`, realized as `r = √c`, `alpha = 0`.
    Constant { c: f64 },
    /// `r(s) = c·s^beta`, `alpha = 0`, with `beta ∈ [0, 1)` so the kernel
    /// stays strictly subquadratic.
    PowerProduct { beta: f64, c: f64 },
    /// `r(s) = s^beta`, `alpha(s, p) = e^{-s}·e^{-p}`, dominated with
    /// `A = e^{-2}` on `[1, ∞)²`.
    ExpRemainder { beta: f64 },
    /// Tabulated values with bilinear interpolation; `r ≡ 0`, `alpha` is the
    /// table. The domination constant is user-supplied and only verified.
    CustomTabulated { table: KernelTable },
}

/// A coagulation kernel together with its declared domination constant `A`.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    family: KernelFamily,
    a_const: f64,
}

impl KernelSpec {
    /// Constant kernel `K ≡ c`.
    pub fn constant(c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(RbkError::Domain(format!(
                "constant kernel requires c > 0, got {c}"
            )));
        }
        Ok(Self {
            family: KernelFamily::Constant { c },
            a_const: 1.0,
        })
    }

    /// Product kernel `K = c²·(s·p)^beta` with `beta ∈ [0, 1)`.
    pub fn power_product(beta: f64, c: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(RbkError::Domain(format!(
                "power_product requires beta in [0, 1) for strict subquadraticity, got {beta}"
            )));
        }
        if !(c > 0.0) || !c.is_finite() {
            return Err(RbkError::Domain(format!(
                "power_product requires c > 0, got {c}"
            )));
        }
        Ok(Self {
            family: KernelFamily::PowerProduct { beta, c },
            a_const: 1.0,
        })
    }

    /// Product kernel with an exponentially decaying remainder.
    pub fn exp_remainder(beta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(RbkError::Domain(format!(
                "exp_remainder requires beta in [0, 1), got {beta}"
            )));
        }
        Ok(Self {
            family: KernelFamily::ExpRemainder { beta },
            a_const: (-2.0f64).exp(),
        })
    }

    /// Tabulated kernel with a user-declared domination constant.
    pub fn custom_tabulated(table: KernelTable, a_const: f64) -> Result<Self> {
        if !(a_const > 0.0) {
            return Err(RbkError::Domain(format!(
                "domination constant A must be positive, got {a_const}"
            )));
        }
        Ok(Self {
            family: KernelFamily::CustomTabulated { table },
            a_const,
        })
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    /// Declared domination constant `A` in `alpha ≤ A·r·r`.
    pub fn a_const(&self) -> f64 {
        self.a_const
    }

    /// Product factor `r(s)`.
    pub fn r(&self, s: f64) -> f64 {
        match &self.family {
            KernelFamily::Constant { c } => c.sqrt(),
            KernelFamily::PowerProduct { beta, c } => c * s.powf(*beta),
            KernelFamily::ExpRemainder { beta } => s.powf(*beta),
            KernelFamily::CustomTabulated { .. } => 0.0,
        }
    }

    /// Remainder `alpha(s, p)`, evaluated on the ordered pair.
    pub fn alpha(&self, s: f64, p: f64) -> f64 {
        let (lo, hi) = ordered(s, p);
        match &self.family {
            KernelFamily::Constant { .. } | KernelFamily::PowerProduct { .. } => 0.0,
            KernelFamily::ExpRemainder { .. } => (-lo).exp() * (-hi).exp(),
            KernelFamily::CustomTabulated { table } => table.lookup_clamped(lo, hi),
        }
    }

    /// Kernel rate `K(s, p) = r(s)·r(p) + alpha(s, p)`.
    ///
    /// Symmetric by construction; nonpositive or non-finite sizes are domain
    /// errors.
    pub fn eval(&self, s: f64, p: f64) -> Result<f64> {
        if !(s > 0.0) || !s.is_finite() || !(p > 0.0) || !p.is_finite() {
            return Err(RbkError::Domain(format!(
                "kernel arguments must be positive finite sizes, got ({s}, {p})"
            )));
        }
        if let KernelFamily::CustomTabulated { table } = &self.family {
            let (lo, hi) = ordered(s, p);
            if !table.covers(lo, hi) {
                return Err(RbkError::Domain(format!(
                    "tabulated kernel does not cover ({lo}, {hi})"
                )));
            }
        }
        Ok(self.eval_unchecked(s, p))
    }

    /// Hot-path evaluation; assumes positive sizes inside the tabulated range.
    #[inline]
    pub(crate) fn eval_unchecked(&self, s: f64, p: f64) -> f64 {
        let (lo, hi) = ordered(s, p);
        self.r(lo) * self.r(hi) + self.alpha(lo, hi)
    }
}

#[inline]
fn ordered(s: f64, p: f64) -> (f64, f64) {
    if s <= p {
        (s, p)
    } else {
        (p, s)
    }
}

/// Rectangular table of kernel values on strictly increasing coordinates.
#[derive(Debug, Clone)]
pub struct KernelTable {
    s_axis: Vec<f64>,
    p_axis: Vec<f64>,
    /// Row-major `values[i_s * p_axis.len() + i_p]`.
    values: Vec<f64>,
}

impl KernelTable {
    pub fn new(s_axis: Vec<f64>, p_axis: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        for axis in [&s_axis, &p_axis] {
            if axis.len() < 2 {
                return Err(RbkError::Config(
                    "kernel table needs at least 2 nodes per axis".into(),
                ));
            }
            if !axis.windows(2).all(|w| w[1] > w[0]) || !(axis[0] > 0.0) {
                return Err(RbkError::Config(
                    "kernel table coordinates must be positive and strictly increasing".into(),
                ));
            }
        }
        if values.len() != s_axis.len() * p_axis.len() {
            return Err(RbkError::Config(format!(
                "kernel table has {} values, expected {}x{}",
                values.len(),
                s_axis.len(),
                p_axis.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RbkError::Config("kernel table contains non-finite values".into()));
        }
        Ok(Self { s_axis, p_axis, values })
    }

    /// Parse CSV text with header `s,rho,K` covering a full rectangular grid.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| RbkError::Config("empty kernel CSV".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols != ["s", "rho", "K"] {
            return Err(RbkError::Config(format!(
                "kernel CSV header must be `s,rho,K`, got `{header}`"
            )));
        }
        let mut triples = Vec::new();
        for (k, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(RbkError::Config(format!(
                    "kernel CSV row {}: expected 3 fields, got {}",
                    k + 2,
                    fields.len()
                )));
            }
            let parse = |f: &str| -> Result<f64> {
                f.parse::<f64>().map_err(|_| {
                    RbkError::Config(format!("kernel CSV row {}: bad number `{f}`", k + 2))
                })
            };
            triples.push((parse(fields[0])?, parse(fields[1])?, parse(fields[2])?));
        }
        let mut s_axis: Vec<f64> = triples.iter().map(|t| t.0).collect();
        let mut p_axis: Vec<f64> = triples.iter().map(|t| t.1).collect();
        s_axis.sort_by(f64::total_cmp);
        s_axis.dedup();
        p_axis.sort_by(f64::total_cmp);
        p_axis.dedup();
        let mut values = vec![f64::NAN; s_axis.len() * p_axis.len()];
        for (s, p, v) in &triples {
            let i = s_axis.partition_point(|x| x < s) % s_axis.len();
            let j = p_axis.partition_point(|x| x < p) % p_axis.len();
            values[i * p_axis.len() + j] = *v;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(RbkError::Config(
                "kernel CSV does not cover the full s x rho grid".into(),
            ));
        }
        Self::new(s_axis, p_axis, values)
    }

    fn covers(&self, s: f64, p: f64) -> bool {
        s >= self.s_axis[0]
            && s <= *self.s_axis.last().unwrap()
            && p >= self.p_axis[0]
            && p <= *self.p_axis.last().unwrap()
    }

    pub fn s_range(&self) -> (f64, f64) {
        (self.s_axis[0], *self.s_axis.last().unwrap())
    }

    pub fn p_range(&self) -> (f64, f64) {
        (self.p_axis[0], *self.p_axis.last().unwrap())
    }

    /// Bilinear interpolation, clamped to the table box.
    fn lookup_clamped(&self, s: f64, p: f64) -> f64 {
        let sv = s.clamp(self.s_axis[0], *self.s_axis.last().unwrap());
        let pv = p.clamp(self.p_axis[0], *self.p_axis.last().unwrap());
        let (i, ws) = bracket(&self.s_axis, sv);
        let (j, wp) = bracket(&self.p_axis, pv);
        let np = self.p_axis.len();
        let v00 = self.values[i * np + j];
        let v01 = self.values[i * np + (j + 1).min(np - 1)];
        let v10 = self.values[(i + 1).min(self.s_axis.len() - 1) * np + j];
        let v11 = self.values[(i + 1).min(self.s_axis.len() - 1) * np + (j + 1).min(np - 1)];
        let a = v00 + (v10 - v00) * ws;
        let b = v01 + (v11 - v01) * ws;
        a + (b - a) * wp
    }
}

/// Index of the left bracket node and the interpolation weight in `[0, 1]`.
fn bracket(axis: &[f64], x: f64) -> (usize, f64) {
    let hi = axis.partition_point(|v| *v <= x);
    if hi == 0 {
        return (0, 0.0);
    }
    if hi >= axis.len() {
        return (axis.len() - 1, 0.0);
    }
    let i = hi - 1;
    (i, (x - axis[i]) / (axis[hi] - axis[i]))
}

/// Kernel with the sharp cutoff `Xi_n` applied in both arguments:
/// `K_n(s, p) = K(s, p)` when both sizes lie in `[0, n]`, and `0` otherwise.
#[derive(Debug, Clone)]
pub struct TruncatedKernel {
    spec: KernelSpec,
    level: f64,
}

impl TruncatedKernel {
    pub fn new(spec: KernelSpec, level: f64) -> Result<Self> {
        if !(level >= 1.0) || !level.is_finite() {
            return Err(RbkError::Domain(format!(
                "truncation level must satisfy n >= 1, got {level}"
            )));
        }
        Ok(Self { spec, level })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    /// Truncation level `n`.
    pub fn level(&self) -> f64 {
        self.level
    }

    /// Cutoff indicator `Xi_n`.
    #[inline]
    pub fn cutoff(&self, s: f64) -> f64 {
        if s <= self.level {
            1.0
        } else {
            0.0
        }
    }

    /// Truncated product factor `r_n(s) = r(s)·Xi_n(s)`.
    pub fn r_n(&self, s: f64) -> f64 {
        self.spec.r(s) * self.cutoff(s)
    }

    pub fn eval(&self, s: f64, p: f64) -> Result<f64> {
        if s > self.level || p > self.level {
            // Outside the cutoff the value is zero regardless of table range,
            // but the size-domain check still applies.
            if !(s > 0.0) || !(p > 0.0) || !s.is_finite() || !p.is_finite() {
                return Err(RbkError::Domain(format!(
                    "kernel arguments must be positive finite sizes, got ({s}, {p})"
                )));
            }
            return Ok(0.0);
        }
        self.spec.eval(s, p)
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, s: f64, p: f64) -> f64 {
        if s > self.level || p > self.level {
            0.0
        } else {
            self.spec.eval_unchecked(s, p)
        }
    }
}

/// Truncate a kernel at level `n`.
pub fn truncate(spec: KernelSpec, n: f64) -> Result<TruncatedKernel> {
    TruncatedKernel::new(spec, n)
}

/// Discrete suprema controlling the kernel on and off the box `(0, a)²`.
#[derive(Debug, Clone)]
pub struct KernelBounds {
    /// Split point `a`.
    pub a: f64,
    /// `max K_n` over grid node pairs with both sizes `<= a`.
    pub kbar: f64,
    /// `max K_n(p, s)/s` over grid nodes `p <= a`, `s >= a`.
    pub theta: f64,
    /// Closed-form values for the monotone built-in families (constant and
    /// power product), used as a cross-check on the grid maximization.
    pub kbar_analytic: Option<f64>,
    pub theta_analytic: Option<f64>,
    /// Sampled subquadraticity moduli `(p, omega_a(p))` on a geometric ladder.
    pub omega_table: Vec<(f64, f64)>,
}

/// Compute `kbar` and `theta(a)` by maximization over grid nodes.
///
/// Requires `1 < a <= n` and a grid covering `(0, n]`. Exact for tabulated
/// kernels on their own grid; tight upper bounds for the monotone built-ins
/// whenever `a` lies on a node.
pub fn kernel_bounds(tk: &TruncatedKernel, a: f64, grid: &SizeGrid) -> Result<KernelBounds> {
    if !(a > 1.0) || a > tk.level() {
        return Err(RbkError::Domain(format!(
            "kernel bound split requires 1 < a <= n = {}, got {a}",
            tk.level()
        )));
    }
    let mut kbar = 0.0f64;
    let mut theta = 0.0f64;
    let sizes: Vec<f64> = grid.sizes().collect();
    for (i, &si) in sizes.iter().enumerate() {
        if si <= a {
            for &sj in &sizes[..=i] {
                kbar = kbar.max(tk.eval_unchecked(si, sj));
            }
        }
        if si >= a {
            for &sj in sizes.iter().take_while(|&&s| s <= a) {
                theta = theta.max(tk.eval_unchecked(sj, si) / si);
            }
        }
    }

    let (kbar_analytic, theta_analytic) = match tk.spec().family() {
        KernelFamily::Constant { c } => (Some(*c), Some(c / a)),
        KernelFamily::PowerProduct { beta, c } => (
            Some((c * a.powf(*beta)).powi(2)),
            Some(c * c * a.powf(2.0 * beta - 1.0)),
        ),
        _ => (None, None),
    };

    let base = a.max(1.0);
    let mut ladder = Vec::new();
    for k in 0..=8 {
        let p = base * 10f64.powf(k as f64 / 2.0);
        if let KernelFamily::CustomTabulated { table } = tk.spec().family() {
            if p > table.p_range().1 {
                break;
            }
        }
        if p > tk.level() {
            break;
        }
        ladder.push(p);
    }
    let omega_table = subquadratic_modulus(tk.spec(), a, &ladder).unwrap_or_default();

    Ok(KernelBounds {
        a,
        kbar,
        theta,
        kbar_analytic,
        theta_analytic,
        omega_table,
    })
}

/// Subquadraticity modulus `omega_R(p) = max_{s in (0, R]} K(s, p)/p`,
/// maximized over a dense sample of the interval.
pub fn subquadratic_modulus(
    spec: &KernelSpec,
    r_bound: f64,
    p_samples: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if !(r_bound >= 1.0) {
        return Err(RbkError::Domain(format!(
            "subquadraticity modulus requires R >= 1, got {r_bound}"
        )));
    }
    if p_samples.iter().any(|p| !(*p > 0.0)) {
        return Err(RbkError::Domain("omega samples must be positive".into()));
    }
    let (s_lo, s_hi) = match spec.family() {
        KernelFamily::CustomTabulated { table } => {
            let (lo, hi) = table.s_range();
            (lo, r_bound.min(hi))
        }
        _ => (r_bound / SCAN_SAMPLES as f64, r_bound),
    };
    let mut out = Vec::with_capacity(p_samples.len());
    for &p in p_samples {
        let mut w = 0.0f64;
        for k in 0..=SCAN_SAMPLES {
            let s = s_lo + (s_hi - s_lo) * k as f64 / SCAN_SAMPLES as f64;
            if s <= 0.0 {
                continue;
            }
            w = w.max(spec.eval_unchecked(s, p) / p);
        }
        out.push((p, w));
    }
    Ok(out)
}

/// Outcome of a single admissibility hypothesis.
#[derive(Debug, Clone)]
pub struct HypothesisCheck {
    pub name: String,
    pub pass: bool,
    /// Worst-case sample point.
    pub witness: (f64, f64),
    /// Worst observed value of the violation metric.
    pub worst: f64,
    pub detail: String,
}

/// Per-hypothesis admissibility verdicts for a kernel.
#[derive(Debug, Clone)]
pub struct AdmissibilityReport {
    pub checks: Vec<HypothesisCheck>,
}

impl AdmissibilityReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Sample the admissibility hypotheses on a geometric grid of the box
/// `[lo, hi]²`: nonnegativity, symmetry, `alpha <= A·r·r` on `[1, ∞)²`,
/// and empirical decay of the subquadraticity modulus.
pub fn validate_admissibility(
    spec: &KernelSpec,
    sample_lo: f64,
    sample_hi: f64,
    tol: f64,
) -> Result<AdmissibilityReport> {
    if !(sample_lo > 0.0) || !(sample_hi > sample_lo) {
        return Err(RbkError::Domain(format!(
            "sample box must satisfy 0 < lo < hi, got [{sample_lo}, {sample_hi}]"
        )));
    }
    const SIDE: usize = 100;
    let geo = |lo: f64, hi: f64, k: usize| lo * (hi / lo).powf(k as f64 / (SIDE - 1) as f64);
    let mut checks = Vec::new();

    // Nonnegativity of K over the box.
    let mut worst = f64::INFINITY;
    let mut witness = (sample_lo, sample_lo);
    for i in 0..SIDE {
        for j in 0..=i {
            let (s, p) = (geo(sample_lo, sample_hi, i), geo(sample_lo, sample_hi, j));
            let v = spec.eval_unchecked(s, p);
            if v < worst {
                worst = v;
                witness = (s, p);
            }
        }
    }
    checks.push(HypothesisCheck {
        name: "nonnegativity".into(),
        pass: worst >= -tol,
        witness,
        worst,
        detail: format!("min K over box = {worst:.6e}"),
    });

    // Symmetry: evaluations are canonicalized, so the difference is exact zero;
    // measured anyway.
    let mut worst = 0.0f64;
    let mut witness = (sample_lo, sample_lo);
    for i in 0..SIDE {
        for j in 0..i {
            let (s, p) = (geo(sample_lo, sample_hi, i), geo(sample_lo, sample_hi, j));
            let d = (spec.eval_unchecked(s, p) - spec.eval_unchecked(p, s)).abs();
            if d > worst {
                worst = d;
                witness = (s, p);
            }
        }
    }
    checks.push(HypothesisCheck {
        name: "symmetry".into(),
        pass: worst == 0.0,
        witness,
        worst,
        detail: "max |K(s,p) - K(p,s)| over sampled pairs".into(),
    });

    // Domination alpha <= A r r on [1, inf)^2 within the box.
    let dom_lo = sample_lo.max(1.0);
    if dom_lo <= sample_hi {
        let a_const = spec.a_const();
        let mut worst = f64::NEG_INFINITY;
        let mut witness = (dom_lo, dom_lo);
        for i in 0..SIDE {
            for j in 0..=i {
                let (s, p) = (geo(dom_lo, sample_hi, i), geo(dom_lo, sample_hi, j));
                let excess = spec.alpha(s, p) - a_const * spec.r(s) * spec.r(p);
                if excess > worst {
                    worst = excess;
                    witness = (p, s);
                }
            }
        }
        checks.push(HypothesisCheck {
            name: "alpha_domination".into(),
            pass: worst <= tol,
            witness,
            worst,
            detail: format!("max (alpha - A·r·r) on [1,∞)² samples, A = {a_const:.6e}"),
        });
    } else {
        checks.push(HypothesisCheck {
            name: "alpha_domination".into(),
            pass: true,
            witness: (dom_lo, dom_lo),
            worst: 0.0,
            detail: "sample box below [1, ∞)²; nothing to check".into(),
        });
    }

    // Empirical subquadratic decay: omega on a geometric ladder must be
    // non-increasing with last-decade log-log slope <= -0.005.
    let r_bound = sample_lo.max(1.0);
    let base = r_bound;
    let mut ladder = Vec::new();
    for k in 0..=8 {
        let p = base * 10f64.powf(k as f64 / 2.0);
        if let KernelFamily::CustomTabulated { table } = spec.family() {
            if p > table.p_range().1 {
                break;
            }
        }
        ladder.push(p);
    }
    let omega = subquadratic_modulus(spec, r_bound, &ladder)?;
    let (pass, worst, witness, detail) = judge_omega_decay(&omega);
    checks.push(HypothesisCheck {
        name: "omega_decay".into(),
        pass,
        witness,
        worst,
        detail,
    });

    Ok(AdmissibilityReport { checks })
}

/// Empirical decay rule: pass iff omega is non-increasing along the ladder and
/// the last-decade log-log slope is at most -0.005.
fn judge_omega_decay(omega: &[(f64, f64)]) -> (bool, f64, (f64, f64), String) {
    if omega.len() < 3 {
        return (
            true,
            0.0,
            (0.0, 0.0),
            "insufficient range for a decay trend; domination check governs".into(),
        );
    }
    if omega[0].1 == 0.0 {
        return (true, 0.0, (omega[0].0, 0.0), "kernel vanishes on the ladder".into());
    }
    let mut nonincreasing = true;
    let mut witness = (omega[0].0, 0.0);
    for w in omega.windows(2) {
        if w[1].1 > w[0].1 * (1.0 + 1e-12) {
            nonincreasing = false;
            witness = (w[1].0, 0.0);
        }
    }
    let k = omega.len() - 1;
    let (p0, w0) = omega[k - 2];
    let (p1, w1) = omega[k];
    let slope = if w1 == 0.0 {
        f64::NEG_INFINITY
    } else {
        (w1 / w0).ln() / (p1 / p0).ln()
    };
    let pass = nonincreasing && slope <= -0.005;
    (
        pass,
        slope,
        witness,
        format!(
            "last-decade log-log slope = {slope:.4} (empirical rule: non-increasing and <= -0.005)"
        ),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SizeGrid;

    fn k_const() -> KernelSpec {
        KernelSpec::constant(1.0).unwrap()
    }

    fn k_power(beta: f64) -> KernelSpec {
        KernelSpec::power_product(beta, 1.0).unwrap()
    }

    #[test]
    fn eval_constant_family() {
        assert_eq!(k_const().eval(2.0, 3.0).unwrap(), 1.0);
    }

    #[test]
    fn eval_power_product_sqrt() {
        // sqrt(4 * 9) = 6 analytically
        let v = k_power(0.5).eval(4.0, 9.0).unwrap();
        assert!((v - 6.0).abs() < 1e-12, "got {v}");
    }

    #[test]
    fn eval_rejects_nonpositive_sizes() {
        assert!(k_const().eval(0.0, 1.0).is_err());
        assert!(k_const().eval(1.0, -2.0).is_err());
    }

    #[test]
    fn eval_symmetric_bitwise() {
        let specs = [k_const(), k_power(0.5), KernelSpec::exp_remainder(0.3).unwrap()];
        let mut x = 0.7f64;
        for spec in &specs {
            for k in 0..100 {
                // cheap deterministic pair stream
                x = (x * 997.0 + k as f64).rem_euclid(53.0) + 0.01;
                let y = (x * 31.0).rem_euclid(47.0) + 0.02;
                let a = spec.eval(x, y).unwrap();
                let b = spec.eval(y, x).unwrap();
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn truncation_cutoff() {
        let tk = truncate(k_const(), 10.0).unwrap();
        assert_eq!(tk.eval(5.0, 11.0).unwrap(), 0.0);
        assert_eq!(tk.eval(5.0, 7.0).unwrap(), 1.0);

        let tk = truncate(k_power(0.5), 2.0).unwrap();
        assert_eq!(tk.eval(1.0, 4.0).unwrap(), 0.0);
        let v = tk.eval(1.0, 2.0).unwrap();
        assert!((v - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn truncation_level_below_one_rejected() {
        assert!(truncate(k_const(), 0.5).is_err());
    }

    #[test]
    fn bounds_constant_kernel() {
        let grid = SizeGrid::new(16.0, 0.5).unwrap();
        let tk = truncate(k_const(), 16.0).unwrap();
        let b = kernel_bounds(&tk, 4.0, &grid).unwrap();
        assert_eq!(b.kbar, 1.0);
        // sup of 1/s over s >= 4 is at s = a = 4
        assert!((b.theta - 0.25).abs() < 1e-15, "theta = {}", b.theta);
        assert_eq!(b.kbar_analytic, Some(1.0));
        assert!((b.theta_analytic.unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn bounds_power_kernel_brute_scan() {
        // Independent oracle: brute maximization of K(p,s)/s over node pairs.
        let grid = SizeGrid::new(16.0, 0.25).unwrap();
        let tk = truncate(k_power(0.5), 16.0).unwrap();
        let a = 4.0;
        let mut brute = 0.0f64;
        for s in grid.sizes().filter(|&s| s >= a) {
            for p in grid.sizes().filter(|&p| p <= a) {
                brute = brute.max((p * s).sqrt() / s);
            }
        }
        let b = kernel_bounds(&tk, a, &grid).unwrap();
        assert!((b.theta - brute).abs() < 1e-15);
        // maximizer is (p, s) = (4, 4): 2 * 4^{-1/2} = 1
        assert!((b.theta - 1.0).abs() < 1e-12, "theta = {}", b.theta);
        assert!((b.kbar - b.kbar_analytic.unwrap()).abs() < 1e-12);
        assert!((b.theta - b.theta_analytic.unwrap()).abs() < 1e-12);
    }

    #[test]
    fn bounds_theta_monotone_in_a() {
        let grid = SizeGrid::new(32.0, 0.5).unwrap();
        for spec in [k_const(), k_power(0.5)] {
            let tk = truncate(spec, 32.0).unwrap();
            let mut prev = f64::INFINITY;
            for a in [2.0, 4.0, 8.0, 16.0] {
                let b = kernel_bounds(&tk, a, &grid).unwrap();
                assert!(
                    b.theta <= prev + 1e-15,
                    "theta not monotone at a = {a}: {} > {prev}",
                    b.theta
                );
                prev = b.theta;
            }
        }
    }

    #[test]
    fn bounds_split_out_of_range() {
        let grid = SizeGrid::new(8.0, 0.5).unwrap();
        let tk = truncate(k_const(), 8.0).unwrap();
        assert!(kernel_bounds(&tk, 1.0, &grid).is_err());
        assert!(kernel_bounds(&tk, 9.0, &grid).is_err());
    }

    #[test]
    fn omega_constant_kernel() {
        let w = subquadratic_modulus(&k_const(), 2.0, &[1.0, 10.0, 100.0]).unwrap();
        let expect = [1.0, 0.1, 0.01];
        for ((_, got), want) in w.iter().zip(expect) {
            assert!((got - want).abs() < 1e-12, "omega {got} vs {want}");
        }
    }

    #[test]
    fn omega_power_kernel() {
        // R = 4, p = 100: max_s sqrt(s*p)/p at s = 4 -> 2 * 100^{-1/2} = 0.2
        let w = subquadratic_modulus(&k_power(0.5), 4.0, &[100.0]).unwrap();
        assert!((w[0].1 - 0.2).abs() < 1e-9, "omega = {}", w[0].1);

        // Slow decay case: beta = 0.99, R = 1, p = 1e6 -> p^{beta-1} ~ 0.8710
        let w = subquadratic_modulus(&k_power(0.99), 1.0, &[1e6]).unwrap();
        let analytic = 1e6f64.powf(-0.01);
        assert!((w[0].1 - analytic).abs() < 1e-9, "omega = {}", w[0].1);
        assert!((w[0].1 - 0.871).abs() < 1e-3);
    }

    #[test]
    fn omega_rejects_small_r() {
        assert!(subquadratic_modulus(&k_const(), 0.5, &[1.0]).is_err());
    }

    #[test]
    fn admissibility_builtins_pass() {
        for spec in [k_const(), k_power(0.5), KernelSpec::exp_remainder(0.5).unwrap()] {
            let rep = validate_admissibility(&spec, 0.1, 50.0, 1e-12).unwrap();
            assert!(rep.all_pass(), "{:?}", rep.checks);
        }
    }

    #[test]
    fn admissibility_flags_multiplicative_table() {
        // alpha(s, p) = s * p with r = 0: domination fails; witness at (1, 1)
        // when the box ends there.
        let axis: Vec<f64> = (1..=40).map(|k| 0.05 * k as f64).collect();
        let mut values = Vec::new();
        for s in &axis {
            for p in &axis {
                values.push(s * p);
            }
        }
        let table = KernelTable::new(axis.clone(), axis, values).unwrap();
        let spec = KernelSpec::custom_tabulated(table, 1.0).unwrap();
        let rep = validate_admissibility(&spec, 0.5, 1.0, 1e-12).unwrap();
        let dom = rep.checks.iter().find(|c| c.name == "alpha_domination").unwrap();
        assert!(!dom.pass);
        assert_eq!(dom.witness, (1.0, 1.0));
        assert!((dom.worst - 1.0).abs() < 1e-12, "excess = {}", dom.worst);
    }

    #[test]
    fn admissibility_omega_rule_separates_families() {
        // multiplicative kernel over a wide box: omega is flat -> flagged
        let axis: Vec<f64> = (0..60).map(|k| 0.5 * 1.25f64.powi(k)).collect();
        let mut values = Vec::new();
        for s in &axis {
            for p in &axis {
                values.push(s * p);
            }
        }
        let table = KernelTable::new(axis.clone(), axis.clone(), values).unwrap();
        let spec = KernelSpec::custom_tabulated(table, 1.0).unwrap();
        let rep = validate_admissibility(&spec, 0.5, 100.0, 1e-12).unwrap();
        let omega = rep.checks.iter().find(|c| c.name == "omega_decay").unwrap();
        assert!(!omega.pass, "multiplicative kernel must fail omega decay");

        // slowly decaying admissible family passes
        let rep = validate_admissibility(&k_power(0.99), 0.5, 100.0, 1e-12).unwrap();
        let omega = rep.checks.iter().find(|c| c.name == "omega_decay").unwrap();
        assert!(omega.pass, "{}", omega.detail);
    }

    #[test]
    fn kernel_csv_roundtrip_and_errors() {
        let csv = "s,rho,K\n1,1,2\n1,2,3\n2,1,3\n2,2,5\n";
        let t = KernelTable::from_csv_str(csv).unwrap();
        let spec = KernelSpec::custom_tabulated(t, 1.0).unwrap();
        assert_eq!(spec.eval(1.0, 2.0).unwrap(), 3.0);
        assert_eq!(spec.eval(2.0, 1.0).unwrap(), 3.0);
        // between nodes: bilinear
        let mid = spec.eval(1.5, 1.5).unwrap();
        assert!((mid - 3.25).abs() < 1e-12);
        // outside the table: domain error
        assert!(spec.eval(0.5, 1.0).is_err());

        assert!(KernelTable::from_csv_str("s,rho,K\n1,1,2\n").is_err());
        assert!(KernelTable::from_csv_str("a,b,c\n1,1,2\n").is_err());
        assert!(KernelTable::from_csv_str("s,rho,K\n1,1,2\n1,2,3\n2,1,3\n").is_err());
    }

    #[test]
    fn family_parameter_validation() {
        assert!(KernelSpec::power_product(1.2, 1.0).is_err());
        assert!(KernelSpec::power_product(-0.1, 1.0).is_err());
        assert!(KernelSpec::constant(0.0).is_err());
        assert!(KernelSpec::exp_remainder(1.0).is_err());
    }
}
