//! Global rotation and per-cell phase indicator of a deformation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::density::{TwoWellDensity, WellLabel};
use crate::error::{Error, Result};
use crate::grid::{strides, GridField};
use crate::linalg::{pairwise_sum, procrustes, SqMat};

/// Per-cell well labels on a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseField {
    pub dims: Vec<usize>,
    pub spacing: Vec<f64>,
    pub labels: Vec<WellLabel>,
}

impl PhaseField {
    pub fn new(dims: Vec<usize>, spacing: Vec<f64>, labels: Vec<WellLabel>) -> Result<Self> {
        if dims.len() != spacing.len() || dims.is_empty() || dims.len() > 3 {
            return Err(Error::InvalidInput("dims and spacing must have equal length 1..=3".into()));
        }
        if labels.len() != dims.iter().product::<usize>() {
            return Err(Error::InvalidInput("label count differs from cell count".into()));
        }
        Ok(PhaseField { dims, spacing, labels })
    }

    /// Labels from a predicate on cell centres of the box `[0, dims·h]`.
    pub fn from_fn(dims: Vec<usize>, spacing: Vec<f64>, f: impl Fn(&[f64]) -> WellLabel) -> Self {
        let n: usize = dims.iter().product();
        let labels = (0..n)
            .map(|c| {
                let m = crate::grid::unravel(&dims, c);
                let x: Vec<f64> = m.iter().zip(&spacing).map(|(&i, h)| (i as f64 + 0.5) * h).collect();
                f(&x)
            })
            .collect();
        PhaseField { dims, spacing, labels }
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Number of cell rows along the last axis.
    pub fn rows(&self) -> usize {
        *self.dims.last().expect("non-empty dims")
    }

    /// Cells per row along the last axis.
    pub fn row_len(&self) -> usize {
        self.dims[..self.dim() - 1].iter().product()
    }

    /// Run-length encoding in linear cell order.
    pub fn run_lengths(&self) -> Vec<(WellLabel, usize)> {
        let mut out: Vec<(WellLabel, usize)> = Vec::new();
        for &l in &self.labels {
            match out.last_mut() {
                Some((p, n)) if *p == l => *n += 1,
                _ => out.push((l, 1)),
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Window {
    /// All cells but the outermost ring.
    #[default]
    Interior,
    Full,
}

impl std::str::FromStr for Window {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interior" => Ok(Window::Interior),
            "full" => Ok(Window::Full),
            o => Err(Error::InvalidInput(format!("unknown window `{o}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecomposeOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub window: Window,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        DecomposeOptions { max_iter: 50, tol: 1e-12, window: Window::Interior }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundaryMeasures {
    pub perimeter: f64,
    /// Interface measure with normal `e_i` for each axis except the last.
    pub aniso: Vec<f64>,
    pub slice_integral: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseDecomposition {
    pub r: SqMat,
    pub phi: PhaseField,
    pub residual_l2: f64,
    /// Objective after every half-step, starting from `R = Id`.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub window: Window,
    pub measures: BoundaryMeasures,
}

impl PhaseDecomposition {
    pub fn perimeter(&self) -> f64 {
        self.measures.perimeter
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "rotation": self.r.to_row_vec(),
            "residual_l2": self.residual_l2,
            "iterations": self.iterations,
            "converged": self.converged,
            "window": self.window,
            "perimeter": self.measures.perimeter,
            "aniso": self.measures.aniso,
            "slice_integral": self.measures.slice_integral,
            "dims": self.phi.dims,
            "phi_rle": self.phi.run_lengths().iter().map(|(l, n)| format!("{n}{l}")).collect::<Vec<_>>().join(""),
        })
    }
}

/// The well `M` minimising `|F − R M|`; ties go to A.
pub fn nearest_phase(w: &TwoWellDensity, f: &SqMat, r: &SqMat) -> WellLabel {
    let da = (*f - *r * w.well(WellLabel::A)).norm_sq();
    let db = (*f - *r * w.well(WellLabel::B)).norm_sq();
    if da <= db {
        WellLabel::A
    } else {
        WellLabel::B
    }
}

/// Procrustes rotation minimising `Σ |∇y − R Φ|²`.
pub fn fit_rotation(w: &TwoWellDensity, grads: &[SqMat], phi: &[WellLabel]) -> Result<SqMat> {
    if grads.is_empty() || grads.len() != phi.len() {
        return Err(Error::InvalidInput("need matching non-empty gradient and label lists".into()));
    }
    let d = w.d;
    let wells = [w.well(WellLabel::A).transpose(), w.well(WellLabel::B).transpose()];
    let prods: Vec<SqMat> =
        grads.par_iter().zip(phi.par_iter()).map(|(g, &l)| *g * wells[(l == WellLabel::B) as usize]).collect();
    let mut acc = SqMat::zeros(d);
    let mut col = Vec::with_capacity(prods.len());
    for i in 0..d {
        for j in 0..d {
            col.clear();
            col.extend(prods.iter().map(|p| p.get(i, j)));
            acc.set(i, j, pairwise_sum(&col));
        }
    }
    Ok(procrustes(&acc)?.0)
}

fn window_cells(dims: &[usize], window: Window) -> Vec<usize> {
    let n: usize = dims.iter().product();
    (0..n)
        .filter(|&c| match window {
            Window::Full => true,
            Window::Interior => {
                let m = crate::grid::unravel(dims, c);
                m.iter().zip(dims).all(|(&i, &nk)| i >= 1 && i + 1 < nk)
            }
        })
        .collect()
}

fn objective(w: &TwoWellDensity, grads: &[SqMat], phi: &[WellLabel], r: &SqMat, vol: f64) -> f64 {
    let wells = [*r * w.well(WellLabel::A), *r * w.well(WellLabel::B)];
    let v: Vec<f64> = grads
        .par_iter()
        .zip(phi.par_iter())
        .map(|(g, &l)| (*g - wells[(l == WellLabel::B) as usize]).norm_sq() * vol)
        .collect();
    pairwise_sum(&v)
}

fn label_all(w: &TwoWellDensity, grads: &[SqMat], r: &SqMat) -> Vec<WellLabel> {
    grads.par_iter().map(|g| nearest_phase(w, g, r)).collect()
}

/// Alternates phase labelling and rotation fitting from `R = Id`.
pub fn decompose_phases(y: &GridField, w: &TwoWellDensity, opts: &DecomposeOptions) -> Result<PhaseDecomposition> {
    if y.dim() != w.d || y.ncomp != w.d {
        return Err(Error::InvalidInput("field and density dimensions differ".into()));
    }
    if !y.is_finite() {
        return Err(Error::InvalidInput("field has non-finite values".into()));
    }
    let g = &y.geom;
    let cells = window_cells(&g.dims, opts.window);
    if cells.is_empty() {
        return Err(Error::GridTooSmall("evaluation window is empty".into()));
    }
    let all = y.cell_gradients();
    let grads: Vec<SqMat> = cells.iter().map(|&c| all[c]).collect();
    let vol = g.cell_volume();

    let mut r = SqMat::identity(w.d);
    let mut phi = label_all(w, &grads, &r);
    let mut obj = objective(w, &grads, &phi, &r, vol);
    let mut trace = vec![obj];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let r_new = fit_rotation(w, &grads, &phi)?;
        let obj_r = objective(w, &grads, &phi, &r_new, vol);
        let phi_new = label_all(w, &grads, &r_new);
        let obj_new = objective(w, &grads, &phi_new, &r_new, vol);
        trace.push(obj_r);
        trace.push(obj_new);
        let decrease = obj - obj_new;
        r = r_new;
        phi = phi_new;
        obj = obj_new;
        if decrease < opts.tol * (1.0 + obj) {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("phase decomposition stopped after {iterations} iterations without settling");
    }
    let labels = label_all(w, &all, &r);
    let phi_field = PhaseField::new(g.dims.clone(), g.spacing.clone(), labels)?;
    let measures = phase_boundary_measures(&phi_field);
    Ok(PhaseDecomposition {
        r,
        phi: phi_field,
        residual_l2: obj.sqrt(),
        objective_trace: trace,
        iterations,
        converged,
        window: opts.window,
        measures,
    })
}

/// Face counts between A and B cells, total and per normal direction.
pub fn phase_boundary_measures(phi: &PhaseField) -> BoundaryMeasures {
    let d = phi.dim();
    let st = strides(&phi.dims);
    let mut counts = vec![0usize; d];
    for c in 0..phi.labels.len() {
        let m = crate::grid::unravel(&phi.dims, c);
        for k in 0..d {
            if m[k] + 1 < phi.dims[k] && phi.labels[c] != phi.labels[c + st[k]] {
                counts[k] += 1;
            }
        }
    }
    let face_area = |k: usize| -> f64 { (0..d).filter(|&j| j != k).map(|j| phi.spacing[j]).product() };
    let perimeter = (0..d).map(|k| counts[k] as f64 * face_area(k)).sum();
    let aniso: Vec<f64> = (0..d - 1).map(|k| counts[k] as f64 * face_area(k)).collect();
    let slice_integral = aniso.iter().sum();
    BoundaryMeasures { perimeter, aniso, slice_integral }
}

/// Brute-force joint minimisation over SO(2): `10⁴` angles then golden-section refinement.
pub fn angle_scan_oracle(w: &TwoWellDensity, grads: &[SqMat]) -> Result<(SqMat, f64)> {
    if w.d != 2 {
        return Err(Error::InvalidInput("the angle scan works in two dimensions only".into()));
    }
    let wa = w.well(WellLabel::A);
    let wb = w.well(WellLabel::B);
    let f = |theta: f64| -> f64 {
        let r = SqMat::plane_rotation(2, 0, 1, theta);
        let (ra, rb) = (r * wa, r * wb);
        let v: Vec<f64> = grads.iter().map(|g| (*g - ra).norm_sq().min((*g - rb).norm_sq())).collect();
        pairwise_sum(&v)
    };
    let n = 10_000;
    let step = 2.0 * std::f64::consts::PI / n as f64;
    let (mut best, mut best_val) = (0.0, f64::INFINITY);
    for k in 0..n {
        let t = -std::f64::consts::PI + k as f64 * step;
        let v = f(t);
        if v < best_val {
            best = t;
            best_val = v;
        }
    }
    let (mut a, mut b) = (best - step, best + step);
    let gr = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - gr * (b - a);
    let mut d = a + gr * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-14 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = f(d);
        }
    }
    let theta = 0.5 * (a + b);
    Ok((SqMat::plane_rotation(2, 0, 1, theta), f(theta)))
}
