//! One-dimensional optimal profiles and the double-profile construction.
//!
//! A profile is stored through its cell slopes `v_i = ψ'` on a uniform grid. The slope is
//! taken piecewise linear between cell midpoints, so the bulk integral `∫ W̃(ψ')` is
//! evaluated exactly on each dual cell and `∫ |ψ''|²` equals `Σ (Δv)² / h`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{Density, DensityVariant, TwoWellDensity};
use crate::error::{Error, Result};
use crate::grid::{GridField, GridGeometry};
use crate::linalg::{pairwise_sum, SqMat};
use crate::minimize::{lbfgs, MinimizeOptions};

const GAUSS_X: [f64; 3] = [0.112_701_665_379_258_3, 0.5, 0.887_298_334_620_741_7];
const GAUSS_W: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];

/// `W̃(t) = W(Id + (t − 1) e_d⊗e_d)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedDensity {
    pub base: TwoWellDensity,
}

impl ReducedDensity {
    pub fn new(base: TwoWellDensity) -> Self {
        ReducedDensity { base }
    }

    pub fn kappa(&self) -> f64 {
        self.base.kappa
    }

    fn matrix(&self, t: f64) -> SqMat {
        let mut f = SqMat::identity(self.base.d);
        f.set(self.base.d - 1, self.base.d - 1, t);
        f
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t < 0.0 {
            return self.base.eval(&self.matrix(t));
        }
        let b0 = &self.base;
        let a = (t - 1.0) * (t - 1.0);
        let b = (t - 1.0 - b0.kappa) * (t - 1.0 - b0.kappa);
        match b0.variant {
            DensityVariant::HardMin => b0.c * a.min(b),
            DensityVariant::SmoothHarmonic => {
                if a == 0.0 || b == 0.0 {
                    0.0
                } else {
                    b0.c * a * b / (a + b)
                }
            }
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        if t < 0.0 {
            let s = 1e-6;
            return (self.eval(t + s) - self.eval(t - s)) / (2.0 * s);
        }
        let b0 = &self.base;
        let (p, q) = (t - 1.0, t - 1.0 - b0.kappa);
        let (a, b) = (p * p, q * q);
        match b0.variant {
            DensityVariant::HardMin => {
                if a <= b {
                    2.0 * b0.c * p
                } else {
                    2.0 * b0.c * q
                }
            }
            DensityVariant::SmoothHarmonic => {
                if a == 0.0 || b == 0.0 {
                    0.0
                } else {
                    let s = a + b;
                    b0.c * (b * b * 2.0 * p + a * a * 2.0 * q) / (s * s)
                }
            }
        }
    }

    /// Points where `W̃` or `√W̃` fails to be smooth.
    fn breakpoints(&self) -> Vec<f64> {
        let k = self.base.kappa;
        match self.base.variant {
            DensityVariant::HardMin => vec![0.0, 1.0, 1.0 + k / 2.0, 1.0 + k],
            DensityVariant::SmoothHarmonic => vec![0.0, 1.0, 1.0 + k],
        }
    }

    /// `∫₀¹ W̃(a + s(b − a)) ds` and its partial derivatives in `a` and `b`.
    fn segment(&self, a: f64, b: f64) -> (f64, f64, f64) {
        if a == b {
            return (self.eval(a), 0.5 * self.derivative(a), 0.5 * self.derivative(a));
        }
        let mut cuts = vec![0.0];
        for bp in self.breakpoints() {
            let s = (bp - a) / (b - a);
            if s > 0.0 && s < 1.0 {
                cuts.push(s);
            }
        }
        cuts.push(1.0);
        cuts.sort_by(f64::total_cmp);
        let (mut val, mut da, mut db) = (0.0, 0.0, 0.0);
        for win in cuts.windows(2) {
            let len = win[1] - win[0];
            for q in 0..3 {
                let s = win[0] + len * GAUSS_X[q];
                let t = a + s * (b - a);
                let wq = GAUSS_W[q] * len;
                val += wq * self.eval(t);
                let dw = self.derivative(t);
                da += wq * dw * (1.0 - s);
                db += wq * dw * s;
            }
        }
        (val, da, db)
    }

    /// `∫_a^b √W̃`.
    fn sqrt_integral(&self, a: f64, b: f64) -> f64 {
        if a == b {
            return 0.0;
        }
        let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
        let mut cuts = vec![lo];
        cuts.extend(self.breakpoints().into_iter().filter(|&p| p > lo && p < hi));
        cuts.push(hi);
        let mut s = 0.0;
        for win in cuts.windows(2) {
            let len = win[1] - win[0];
            for q in 0..3 {
                s += GAUSS_W[q] * len * self.eval(win[0] + len * GAUSS_X[q]).sqrt();
            }
        }
        sign * s
    }
}

pub fn reduced_density_eval(rd: &ReducedDensity, t: f64) -> Result<f64> {
    if !t.is_finite() {
        return Err(Error::InvalidInput(format!("t must be finite, got {t}")));
    }
    Ok(rd.eval(t))
}

/// `2 ∫₁^{1+κ} √W̃` by composite Simpson; the interval count is rounded up to a multiple of four.
pub fn analytic_k(rd: &ReducedDensity, quad_points: usize) -> Result<f64> {
    if quad_points < 1000 {
        return Err(Error::Domain(format!("need at least 1000 quadrature points, got {quad_points}")));
    }
    let n = quad_points.div_ceil(4) * 4;
    let k = rd.kappa();
    let h = k / n as f64;
    let mut s = 0.0;
    for i in 0..=n {
        let v = rd.eval(1.0 + i as f64 * h);
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidInput(format!("reduced density not finite at {}", 1.0 + i as f64 * h)));
        }
        let wgt = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        s += wgt * v.sqrt();
    }
    Ok(2.0 * s * h / 3.0)
}

/// Discrete profile energy of slopes `v` on cells of width `h`.
pub fn slope_energy(rd: &ReducedDensity, v: &[f64], h: f64, eps: f64) -> f64 {
    slope_energy_parts(rd, v, h, eps).iter().map(|(b, g)| b + g).sum::<f64>()
}

/// Per-cell `(bulk, gradient)` contributions; cell `i` owns the dual segment and the
/// slope jump to its left neighbour, the first and last cells also own their outer half-cells.
fn slope_energy_parts(rd: &ReducedDensity, v: &[f64], h: f64, eps: f64) -> Vec<(f64, f64)> {
    let n = v.len();
    let e2 = eps * eps;
    (0..n)
        .map(|i| {
            let mut bulk = 0.0;
            let mut grad = 0.0;
            if i == 0 {
                bulk += 0.5 * h * rd.eval(v[0]);
            }
            if i == n - 1 {
                bulk += 0.5 * h * rd.eval(v[n - 1]);
            }
            if i > 0 {
                bulk += h * rd.segment(v[i - 1], v[i]).0;
                let dv = v[i] - v[i - 1];
                grad += e2 * dv * dv / h;
            }
            (bulk / e2, grad)
        })
        .collect()
}

fn slope_energy_total(rd: &ReducedDensity, v: &[f64], h: f64, eps: f64) -> f64 {
    let parts: Vec<f64> = slope_energy_parts(rd, v, h, eps).into_iter().map(|(b, g)| b + g).collect();
    pairwise_sum(&parts)
}

fn slope_energy_gradient(rd: &ReducedDensity, v: &[f64], h: f64, eps: f64, g: &mut [f64]) {
    let n = v.len();
    let e2 = eps * eps;
    let segs: Vec<(f64, f64)> = (1..n)
        .map(|i| {
            let (_, da, db) = rd.segment(v[i - 1], v[i]);
            (da, db)
        })
        .collect();
    g.iter_mut().for_each(|x| *x = 0.0);
    g[0] += 0.5 * h * rd.derivative(v[0]) / e2;
    g[n - 1] += 0.5 * h * rd.derivative(v[n - 1]) / e2;
    for i in 1..n {
        let (da, db) = segs[i - 1];
        g[i - 1] += h * da / e2;
        g[i] += h * db / e2;
        let dv = 2.0 * e2 * (v[i] - v[i - 1]) / h;
        g[i] += dv;
        g[i - 1] -= dv;
    }
}

/// `2 Σ |∫_{v_i}^{v_{i+1}} √W̃|`, a lower bound for the discrete profile energy.
pub fn modica_mortola_bound(rd: &ReducedDensity, v: &[f64]) -> f64 {
    2.0 * v.windows(2).map(|w| rd.sqrt_integral(w[0], w[1]).abs()).sum::<f64>()
}

/// `2 Σ √W̃(v_i) |v_{i+1} − v_i|`.
pub fn am_gm_riemann_bound(rd: &ReducedDensity, v: &[f64]) -> f64 {
    2.0 * v.windows(2).map(|w| rd.eval(w[0]).sqrt() * (w[1] - w[0]).abs()).sum::<f64>()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialGuess {
    /// Step of width `ε²` centred at 0.
    #[default]
    Tanh,
    /// Linear slope ramp between the clamp zones.
    Ramp,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileOptions {
    pub init: InitialGuess,
    pub minimizer: MinimizeOptions,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        ProfileOptions {
            init: InitialGuess::Tanh,
            minimizer: MinimizeOptions { max_iter: 200_000, grad_tol: 1e-9, ..Default::default() },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileSolution {
    pub eps: f64,
    /// Nodes at `−1/2 + k h`.
    pub nodes: Vec<f64>,
    pub psi: Vec<f64>,
    /// Cell slopes `ψ'`.
    pub slopes: Vec<f64>,
    pub h: f64,
    pub clamp_cells: usize,
    pub energy: f64,
    pub initial_energy: f64,
    pub iterations: usize,
    pub trace: Vec<f64>,
    pub bc_ok: bool,
}

fn integrate_slopes(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    let mut psi = vec![0.0; n + 1];
    for i in 0..n {
        psi[i + 1] = psi[i] + h * v[i];
    }
    let zero = if n.is_multiple_of(2) { psi[n / 2] } else { psi[n / 2] + 0.5 * h * v[n / 2] };
    psi.iter_mut().for_each(|p| *p -= zero);
    psi
}

/// Minimises the discrete `∫ W̃(ψ')/ε² + ε²|ψ''|²` on `(−1/2, 1/2)` with `ψ' = 1+κ` on the
/// left and `ψ' = 1` on the right `clamp_fraction` of the cells.
pub fn solve_single_profile(rd: &ReducedDensity, eps: f64, n: usize, clamp_fraction: f64) -> Result<ProfileSolution> {
    solve_single_profile_with(rd, eps, n, clamp_fraction, &ProfileOptions::default())
}

pub fn solve_single_profile_with(
    rd: &ReducedDensity,
    eps: f64,
    n: usize,
    clamp_fraction: f64,
    opts: &ProfileOptions,
) -> Result<ProfileSolution> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    if n < 64 {
        return Err(Error::Domain(format!("need N >= 64 cells, got {n}")));
    }
    if !(clamp_fraction > 0.0 && clamp_fraction <= 0.1) {
        return Err(Error::Domain(format!("clamp fraction must lie in (0, 0.1], got {clamp_fraction}")));
    }
    let k = rd.kappa();
    let h = 1.0 / n as f64;
    let nc = ((clamp_fraction * n as f64).round() as usize).max(1);
    let free: Vec<bool> = (0..n).map(|i| i >= nc && i < n - nc).collect();
    let first = nc as f64 * h - 0.5;
    let last = 0.5 - nc as f64 * h;
    let v0: Vec<f64> = (0..n)
        .map(|i| {
            let t = -0.5 + (i as f64 + 0.5) * h;
            if i < nc {
                1.0 + k
            } else if i >= n - nc {
                1.0
            } else {
                match opts.init {
                    InitialGuess::Tanh => 1.0 + 0.5 * k * (1.0 - (t / (eps * eps)).tanh()),
                    InitialGuess::Ramp => 1.0 + k * (last - t) / (last - first),
                }
            }
        })
        .collect();
    let initial_energy = slope_energy_total(rd, &v0, h, eps);
    let out = lbfgs(
        |x, g| {
            slope_energy_gradient(rd, x, h, eps, g);
            slope_energy_total(rd, x, h, eps)
        },
        &v0,
        &free,
        &opts.minimizer,
    )?;
    if !out.converged {
        return Err(Error::Stagnation {
            iterations: out.iterations,
            energy: out.energy,
            trace: out.trace,
            last: out.x,
        });
    }
    let slopes = out.x;
    let bc_ok = slopes[..nc].iter().all(|&s| s == 1.0 + k) && slopes[n - nc..].iter().all(|&s| s == 1.0);
    Ok(ProfileSolution {
        eps,
        nodes: (0..=n).map(|i| -0.5 + i as f64 * h).collect(),
        psi: integrate_slopes(&slopes, h),
        slopes,
        h,
        clamp_cells: nc,
        energy: out.energy,
        initial_energy,
        iterations: out.iterations,
        trace: out.trace,
        bc_ok,
    })
}

/// `w_ε = a ε^p`; the rule belongs to the admissible class iff `0 < p ≤ 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WRule {
    pub a: f64,
    pub p: f64,
}

impl WRule {
    pub fn width(&self, eps: f64) -> f64 {
        self.a * eps.powf(self.p)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(Error::InvalidInput(format!("width prefactor must be positive, got {}", self.a)));
        }
        if !(self.p > 0.0) {
            return Err(Error::InvalidInput(format!("w = {}·ε^{} does not vanish as ε → 0", self.a, self.p)));
        }
        if self.p > 1.0 {
            return Err(Error::InvalidInput(format!("w = {}·ε^{} violates liminf w/ε > 0", self.a, self.p)));
        }
        Ok(())
    }

    /// Parses `eps`, `2eps`, `2*eps`, `sqrt`, `eps^2`, `0.5*eps^1.5`, ...
    pub fn parse(s: &str) -> Result<Self> {
        let t = s.trim().replace(' ', "");
        let bad = || Error::InvalidInput(format!("cannot parse width rule `{s}`"));
        if t == "sqrt" || t == "sqrt(eps)" {
            return Ok(WRule { a: 1.0, p: 0.5 });
        }
        if t == "sqrt*eps" || t == "sqrt(eps)*eps" || t == "eps*sqrt(eps)" {
            return Ok(WRule { a: 1.0, p: 1.5 });
        }
        let (pre, rest) = match t.find("eps") {
            Some(i) => (&t[..i], &t[i + 3..]),
            None => return Err(bad()),
        };
        let pre = pre.trim_end_matches('*');
        let a = if pre.is_empty() { 1.0 } else { pre.parse::<f64>().map_err(|_| bad())? };
        let p = if rest.is_empty() {
            1.0
        } else if let Some(e) = rest.strip_prefix('^') {
            crate::textfmt::parse_f64(e).map_err(|_| bad())?
        } else {
            return Err(bad());
        };
        Ok(WRule { a, p })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoubleProfileSpec {
    pub w_eps: f64,
    pub eps0: f64,
    /// Half-height of the domain `(−h, h)`.
    pub h: f64,
}

impl DoubleProfileSpec {
    /// Checks the width rule before evaluating it at `eps`.
    pub fn from_rule(rule: &WRule, eps: f64, eps0: f64, h: f64) -> Result<Self> {
        rule.check()?;
        Ok(DoubleProfileSpec { w_eps: rule.width(eps), eps0, h })
    }
}

/// Which well occupies the thin middle layer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerWell {
    /// Outer slope 1, layer slope `1+κ`.
    #[default]
    A,
    /// Outer slope `1+κ`, layer slope 1.
    B,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoubleProfile {
    pub z: GridField,
    pub slopes: Vec<f64>,
    pub eps: f64,
    pub eps0: f64,
    /// Layer width actually realised on the grid.
    pub w_eff: f64,
    /// Cell counts of the five pieces from bottom to top.
    pub pieces: [usize; 5],
    pub layer: LayerWell,
}

impl DoubleProfile {
    pub fn cell_size(&self) -> f64 {
        self.z.geom.spacing[0]
    }

    /// Cell-midpoint positions.
    pub fn midpoints(&self) -> Vec<f64> {
        let h = self.cell_size();
        (0..self.slopes.len()).map(|i| self.z.geom.origin[0] + (i as f64 + 0.5) * h).collect()
    }
}

pub fn build_double_profile(
    psi: &ProfileSolution,
    eps: f64,
    spec: &DoubleProfileSpec,
    kappa: f64,
) -> Result<DoubleProfile> {
    build_double_profile_well(psi, eps, spec, kappa, LayerWell::A)
}

/// Glues a reversed and a forward copy of `ψ'`, rescaled by `(ε/ε₀)²`, around a flat layer.
pub fn build_double_profile_well(
    psi: &ProfileSolution,
    eps: f64,
    spec: &DoubleProfileSpec,
    kappa: f64,
    layer: LayerWell,
) -> Result<DoubleProfile> {
    let v = &psi.slopes;
    let n = v.len();
    if !(spec.w_eps.is_finite() && spec.w_eps > 0.0) {
        return Err(Error::InvalidInput(format!("layer width must be positive, got {}", spec.w_eps)));
    }
    if !(eps > 0.0 && eps <= spec.eps0) {
        return Err(Error::Domain(format!("need 0 < eps <= eps0, got eps = {eps}, eps0 = {}", spec.eps0)));
    }
    if v[0] != 1.0 + kappa || v[n - 1] != 1.0 {
        return Err(Error::InvalidInput("profile must be clamped to 1+κ on the left and 1 on the right".into()));
    }
    let scale = (eps / spec.eps0).powi(2);
    let wk = spec.w_eps / kappa;
    if wk + 2.0 * scale >= 2.0 * spec.h {
        return Err(Error::Overlap(format!(
            "layer {wk} plus transitions {} do not fit in (−{h}, {h})",
            2.0 * scale,
            h = spec.h
        )));
    }
    let hz = scale * psi.h;
    let m = ((wk / hz).round() as usize).max(1);
    let left = ((spec.h - scale) / hz).round() as usize;
    let right = ((spec.h - wk - scale) / hz).round().max(0.0) as usize;
    let (outer, inner) = match layer {
        LayerWell::A => (1.0, 1.0 + kappa),
        LayerWell::B => (1.0 + kappa, 1.0),
    };
    let mut slopes = Vec::with_capacity(left + 2 * n + m + right);
    slopes.extend(std::iter::repeat_n(outer, left));
    match layer {
        LayerWell::A => {
            slopes.extend(v.iter().rev());
            slopes.extend(std::iter::repeat_n(inner, m));
            slopes.extend(v.iter());
        }
        LayerWell::B => {
            slopes.extend(v.iter());
            slopes.extend(std::iter::repeat_n(inner, m));
            slopes.extend(v.iter().rev());
        }
    }
    slopes.extend(std::iter::repeat_n(outer, right));
    let origin = -(scale + left as f64 * hz);
    let cells = slopes.len();
    let geom = GridGeometry::new(vec![cells], vec![hz], vec![origin])?;
    let mut z = vec![0.0; cells + 1];
    for i in 0..cells {
        z[i + 1] = z[i] + hz * slopes[i];
    }
    let zero = z[left + n];
    z.iter_mut().for_each(|x| *x -= zero);
    Ok(DoubleProfile {
        z: GridField::new(geom, 1, z)?,
        slopes,
        eps,
        eps0: spec.eps0,
        w_eff: kappa * m as f64 * hz,
        pieces: [left, n, m, n, right],
        layer,
    })
}

fn field_slopes(z: &GridField) -> Result<(Vec<f64>, f64)> {
    if z.dim() != 1 || z.ncomp != 1 {
        return Err(Error::InvalidInput("expected a scalar 1-d field".into()));
    }
    let h = z.geom.spacing[0];
    Ok((z.values.windows(2).map(|w| (w[1] - w[0]) / h).collect(), h))
}

/// `∫ W̃(z')/ε² + ε²|z''|²` on a 1-d grid.
pub fn double_profile_energy(z: &GridField, eps: f64, rd: &ReducedDensity) -> Result<f64> {
    let (v, h) = field_slopes(z)?;
    if v.len() < 2 {
        return Err(Error::GridTooSmall("need at least two cells".into()));
    }
    Ok(slope_energy_total(rd, &v, h, eps))
}

/// The energy split over the five pieces of the construction.
pub fn double_profile_pieces(dp: &DoubleProfile, rd: &ReducedDensity) -> [f64; 5] {
    let parts = slope_energy_parts(rd, &dp.slopes, dp.cell_size(), dp.eps);
    let mut out = [0.0; 5];
    let mut start = 0;
    for (k, &len) in dp.pieces.iter().enumerate() {
        let piece: Vec<f64> = parts[start..start + len].iter().map(|(b, g)| b + g).collect();
        out[k] = pairwise_sum(&piece);
        start += len;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdpRow {
    pub eps: f64,
    pub k_eps: f64,
    pub analytic_k: f64,
    /// `None` for `ε > ε₀`.
    pub e_dp: Option<f64>,
}

impl KdpRow {
    pub fn ratio(&self) -> f64 {
        self.k_eps / self.analytic_k
    }

    pub fn dp_ratio(&self) -> Option<f64> {
        self.e_dp.map(|e| e / (2.0 * self.k_eps))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdpReport {
    pub eps0: f64,
    pub rule: WRule,
    pub rows: Vec<KdpRow>,
}

/// Single-profile constants along a sweep; `ε₀` is the largest sweep value within 5% of the
/// quadrature value.
pub fn kdp_equals_2k_report(
    rd: &ReducedDensity,
    eps_sweep: &[f64],
    rule: &WRule,
    n: usize,
    clamp_fraction: f64,
) -> Result<KdpReport> {
    rule.check()?;
    if eps_sweep.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput("eps sweep must be strictly decreasing".into()));
    }
    let k = analytic_k(rd, 4000)?;
    let sols: Vec<ProfileSolution> =
        eps_sweep.par_iter().map(|&e| solve_single_profile(rd, e, n, clamp_fraction)).collect::<Result<_>>()?;
    let i0 = sols
        .iter()
        .position(|s| (s.energy / k - 1.0).abs() <= 0.05)
        .ok_or_else(|| Error::InvalidInput("no sweep value has a profile energy within 5% of K".into()))?;
    let eps0 = eps_sweep[i0];
    let psi0 = &sols[i0];
    let rows = eps_sweep
        .iter()
        .zip(&sols)
        .map(|(&e, s)| {
            let e_dp = if e <= eps0 {
                let spec = DoubleProfileSpec::from_rule(rule, e, eps0, 1.0 + rule.width(e) / rd.kappa())?;
                let dp = build_double_profile(psi0, e, &spec, rd.kappa())?;
                Some(double_profile_energy(&dp.z, e, rd)?)
            } else {
                None
            };
            Ok(KdpRow { eps: e, k_eps: s.energy, analytic_k: k, e_dp })
        })
        .collect::<Result<_>>()?;
    Ok(KdpReport { eps0, rule: *rule, rows })
}
