//! Discrete energies `E_{ε,η}` on uniform grids and their exact gradients.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::Density;
use crate::error::{Error, Result};
use crate::grid::{cell_gradient_from_corners, corner_weight, GridField, GridGeometry};
use crate::linalg::{pairwise_sum, SqMat};

/// `ε^{-1 + 1/(2d)}`
pub fn eta_bar(eps: f64, d: usize) -> Result<f64> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    if d == 0 {
        return Err(Error::Domain("dimension must be at least 1".into()));
    }
    Ok(eps.powf(-1.0 + alpha(d)))
}

/// `α(d) = 1/(2d)`
pub fn alpha(d: usize) -> f64 {
    1.0 / (2.0 * d as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    pub eps: f64,
    pub eta: f64,
    pub alpha_d: f64,
}

impl EnergyParams {
    /// Parameters with the default penalisation `η = η̄(ε, d)`.
    pub fn new(eps: f64, d: usize) -> Result<Self> {
        Ok(EnergyParams { eps, eta: eta_bar(eps, d)?, alpha_d: alpha(d) })
    }

    pub fn with_eta(eps: f64, eta: f64, d: usize) -> Result<Self> {
        eta_bar(eps, d)?;
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(Error::Domain(format!("eta must be non-negative, got {eta}")));
        }
        Ok(EnergyParams { eps, eta, alpha_d: alpha(d) })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub bulk: f64,
    pub second_gradient: f64,
    pub anisotropic: f64,
    pub total: f64,
}

/// Second-difference stencil for `∂_j ∂_k` at a node.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Stencil {
    pub idx: [usize; 9],
    pub w: [f64; 9],
    pub len: usize,
}

fn first_diff(n: usize, i: usize, h: f64) -> ([(isize, f64); 2], usize) {
    if i == 0 {
        ([(0, -1.0 / h), (1, 1.0 / h)], 2)
    } else if i == n {
        ([(-1, -1.0 / h), (0, 1.0 / h)], 2)
    } else {
        ([(-1, -0.5 / h), (1, 0.5 / h)], 2)
    }
}

fn second_diff(n: usize, i: usize, h: f64) -> [(isize, f64); 3] {
    let h2 = h * h;
    let base: isize = if i == 0 {
        1
    } else if i == n {
        -1
    } else {
        0
    };
    [(base - 1, 1.0 / h2), (base, -2.0 / h2), (base + 1, 1.0 / h2)]
}

pub(crate) fn hessian_stencil(geom: &GridGeometry, strides: &[usize], multi: &[usize], j: usize, k: usize) -> Stencil {
    let base: usize = multi.iter().zip(strides).map(|(m, s)| m * s).sum();
    let mut st = Stencil { idx: [0; 9], w: [0.0; 9], len: 0 };
    let shift = |b: usize, off: isize, s: usize| -> usize { (b as isize + off * s as isize) as usize };
    if j == k {
        for (off, w) in second_diff(geom.dims[j], multi[j], geom.spacing[j]) {
            st.idx[st.len] = shift(base, off, strides[j]);
            st.w[st.len] = w;
            st.len += 1;
        }
    } else {
        let (dj, nj) = first_diff(geom.dims[j], multi[j], geom.spacing[j]);
        let (dk, nk) = first_diff(geom.dims[k], multi[k], geom.spacing[k]);
        for &(oj, wj) in &dj[..nj] {
            for &(ok, wk) in &dk[..nk] {
                st.idx[st.len] = shift(shift(base, oj, strides[j]), ok, strides[k]);
                st.w[st.len] = wj * wk;
                st.len += 1;
            }
        }
    }
    st
}

fn apply_stencil(st: &Stencil, values: &[f64], ncomp: usize, i: usize) -> f64 {
    let mut s = 0.0;
    for t in 0..st.len {
        s += st.w[t] * values[st.idx[t] * ncomp + i];
    }
    s
}

fn axis_pairs(d: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for j in 0..d {
        for k in j..d {
            v.push((j, k));
        }
    }
    v
}

fn check_field(y: &GridField, w: &dyn Density) -> Result<()> {
    if y.ncomp != y.dim() || w.dim() != y.dim() {
        return Err(Error::InvalidInput(format!(
            "field with {} components on a {}-d grid does not match a {}-d density",
            y.ncomp,
            y.dim(),
            w.dim()
        )));
    }
    y.geom.ensure_min_nodes(3)?;
    if !y.is_finite() {
        return Err(Error::InvalidInput("field has non-finite values".into()));
    }
    Ok(())
}

/// Per-cell bulk density values `W(∇y)`.
pub fn cell_densities(y: &GridField, w: &dyn Density) -> Vec<f64> {
    let g = &y.geom;
    (0..g.cell_count())
        .into_par_iter()
        .map(|c| {
            let corners = g.cell_corners(&g.cell_multi(c));
            w.eval(&cell_gradient_from_corners(g, y.ncomp, &corners, &y.values))
        })
        .collect()
}

/// Per-node `(|∇²y|², |∂²_dd y|²)` without quadrature weights.
pub fn nodal_hessian_norms(y: &GridField) -> Vec<(f64, f64)> {
    let g = &y.geom;
    let d = g.dim();
    let strides = g.node_strides();
    let pairs = axis_pairs(d);
    (0..g.node_count())
        .into_par_iter()
        .map(|n| {
            let m = g.node_multi(n);
            let mut full = 0.0;
            let mut dd = 0.0;
            for &(j, k) in &pairs {
                let st = hessian_stencil(g, &strides, &m, j, k);
                let mult = if j == k { 1.0 } else { 2.0 };
                for i in 0..d {
                    let h = apply_stencil(&st, &y.values, y.ncomp, i);
                    full += mult * h * h;
                    if j == d - 1 && k == d - 1 {
                        dd += h * h;
                    }
                }
            }
            (full, dd)
        })
        .collect()
}

pub fn energy_eval(y: &GridField, w: &dyn Density, p: &EnergyParams) -> Result<EnergyBreakdown> {
    check_field(y, w)?;
    let g = &y.geom;
    let vol = g.cell_volume();
    let bulk_cells: Vec<f64> = cell_densities(y, w).into_iter().map(|v| v * vol).collect();
    let bulk = pairwise_sum(&bulk_cells) / (p.eps * p.eps);

    let norms = nodal_hessian_norms(y);
    let weights: Vec<f64> = (0..g.node_count()).into_par_iter().map(|n| g.node_weight(&g.node_multi(n))).collect();
    let full: Vec<f64> = norms.iter().zip(&weights).map(|((f, _), w)| f * w).collect();
    let off: Vec<f64> = norms.iter().zip(&weights).map(|((f, dd), w)| (f - dd) * w).collect();
    let second_gradient = p.eps * p.eps * pairwise_sum(&full);
    let anisotropic = if g.dim() == 1 { 0.0 } else { p.eta * p.eta * pairwise_sum(&off) };
    Ok(EnergyBreakdown { bulk, second_gradient, anisotropic, total: bulk + second_gradient + anisotropic })
}

/// Energy restricted to cells whose centre and nodes whose position satisfy `keep`.
pub fn energy_eval_where(
    y: &GridField,
    w: &dyn Density,
    p: &EnergyParams,
    keep: impl Fn(&[f64]) -> bool + Sync,
) -> Result<EnergyBreakdown> {
    check_field(y, w)?;
    let g = &y.geom;
    let vol = g.cell_volume();
    let dens = cell_densities(y, w);
    let bulk_cells: Vec<f64> = (0..g.cell_count())
        .into_par_iter()
        .map(|c| if keep(&g.cell_center(&g.cell_multi(c))) { dens[c] * vol } else { 0.0 })
        .collect();
    let bulk = pairwise_sum(&bulk_cells) / (p.eps * p.eps);
    let norms = nodal_hessian_norms(y);
    let weights: Vec<f64> = (0..g.node_count())
        .into_par_iter()
        .map(|n| {
            let m = g.node_multi(n);
            if keep(&g.node_position(&m)) {
                g.node_weight(&m)
            } else {
                0.0
            }
        })
        .collect();
    let full: Vec<f64> = norms.iter().zip(&weights).map(|((f, _), w)| f * w).collect();
    let off: Vec<f64> = norms.iter().zip(&weights).map(|((f, dd), w)| (f - dd) * w).collect();
    let second_gradient = p.eps * p.eps * pairwise_sum(&full);
    let anisotropic = if g.dim() == 1 { 0.0 } else { p.eta * p.eta * pairwise_sum(&off) };
    Ok(EnergyBreakdown { bulk, second_gradient, anisotropic, total: bulk + second_gradient + anisotropic })
}

/// Exact gradient of [`energy_eval`] with respect to the nodal values.
pub fn energy_gradient(y: &GridField, w: &dyn Density, p: &EnergyParams) -> Result<GridField> {
    check_field(y, w)?;
    let g = &y.geom;
    let d = g.dim();
    let nc = y.ncomp;
    let mut grad = vec![0.0; y.values.len()];

    let bulk_scale = g.cell_volume() / (p.eps * p.eps);
    let stresses: Vec<SqMat> = (0..g.cell_count())
        .into_par_iter()
        .map(|c| {
            let corners = g.cell_corners(&g.cell_multi(c));
            w.gradient(&cell_gradient_from_corners(g, nc, &corners, &y.values)).scale(bulk_scale)
        })
        .collect();
    for (c, s) in stresses.iter().enumerate() {
        let corners = g.cell_corners(&g.cell_multi(c));
        for (ci, &node) in corners.iter().enumerate() {
            for j in 0..d {
                let cw = corner_weight(g, ci, j);
                for i in 0..d {
                    grad[node * nc + i] += s.get(i, j) * cw;
                }
            }
        }
    }

    let strides = g.node_strides();
    let pairs = axis_pairs(d);
    let eps2 = p.eps * p.eps;
    let eta2 = if d == 1 { 0.0 } else { p.eta * p.eta };
    let coeffs: Vec<Vec<(Stencil, [f64; 3])>> = (0..g.node_count())
        .into_par_iter()
        .map(|n| {
            let m = g.node_multi(n);
            let wn = g.node_weight(&m);
            pairs
                .iter()
                .map(|&(j, k)| {
                    let st = hessian_stencil(g, &strides, &m, j, k);
                    let mult = if j == k { 1.0 } else { 2.0 };
                    let pen = if j == d - 1 && k == d - 1 { eps2 } else { eps2 + eta2 };
                    let mut c = [0.0; 3];
                    for (i, ci) in c.iter_mut().enumerate().take(d) {
                        *ci = 2.0 * mult * pen * wn * apply_stencil(&st, &y.values, nc, i);
                    }
                    (st, c)
                })
                .collect()
        })
        .collect();
    for node in &coeffs {
        for (st, c) in node {
            for t in 0..st.len {
                for i in 0..d {
                    grad[st.idx[t] * nc + i] += c[i] * st.w[t];
                }
            }
        }
    }
    GridField::new(g.clone(), nc, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{DensityVariant, TwoWellDensity, WellLabel};
    use crate::linalg::random_rotation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hm(d: usize) -> TwoWellDensity {
        TwoWellDensity::new(d, 1.0, 1.0, DensityVariant::HardMin).unwrap()
    }

    #[test]
    fn eta_bar_examples() {
        assert_eq!(eta_bar(1.0, 2).unwrap(), 1.0);
        assert!((eta_bar(0.01, 2).unwrap() - 31.6227766).abs() < 1e-6);
        assert!((eta_bar(0.1, 3).unwrap() - 6.8129207).abs() < 1e-6);
        assert!(eta_bar(0.0, 2).is_err());
        assert!(eta_bar(-1.0, 2).is_err());
        let p = EnergyParams::new(0.01, 2).unwrap();
        assert_eq!(p.eta, 0.01f64.powf(-1.0 + 0.25));
    }

    #[test]
    fn affine_wells_have_zero_energy() {
        let w = hm(2);
        let g = GridGeometry::on_box(&[8, 6], &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let p = EnergyParams::new(0.1, 2).unwrap();
        let y = GridField::affine(g.clone(), &SqMat::identity(2), &[0.3, -0.1]);
        assert!(energy_eval(&y, &w, &p).unwrap().total.abs() < 1e-20);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = random_rotation(2, &mut rng);
        let y = GridField::affine(g, &(r * w.well(WellLabel::B)), &[0.0, 0.0]);
        assert!(energy_eval(&y, &w, &p).unwrap().total.abs() < 1e-12);
    }

    #[test]
    fn one_dimensional_constant_slope() {
        let w = hm(1);
        let g = GridGeometry::on_box(&[50], &[0.0], &[1.0]).unwrap();
        let p = EnergyParams::with_eta(0.1, 0.0, 1).unwrap();
        let y = GridField::affine(g, &SqMat::diag(&[1.5]), &[0.0]);
        let e = energy_eval(&y, &w, &p).unwrap();
        assert!((e.total - 25.0).abs() < 1e-9, "{e:?}");
        assert_eq!(e.anisotropic, 0.0);
    }

    #[test]
    fn grid_too_small() {
        let g = GridGeometry::on_box(&[1, 4], &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let y = GridField::affine(g, &SqMat::identity(2), &[0.0, 0.0]);
        let p = EnergyParams::new(0.1, 2).unwrap();
        assert!(matches!(energy_eval(&y, &hm(2), &p), Err(Error::GridTooSmall(_))));
    }

    #[test]
    fn gradient_vanishes_on_affine_well() {
        let g = GridGeometry::on_box(&[7, 9], &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let y = GridField::affine(g, &SqMat::identity(2), &[0.0, 0.0]);
        let p = EnergyParams::new(0.1, 2).unwrap();
        let gr = energy_gradient(&y, &hm(2), &p).unwrap();
        assert!(gr.values.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn midpoint_gradient_symmetry() {
        for v in [DensityVariant::SmoothHarmonic, DensityVariant::HardMin] {
            let w = TwoWellDensity::new(2, 1.0, 1.0, v).unwrap();
            let g = GridGeometry::on_box(&[6, 6], &[0.0, 0.0], &[1.0, 1.0]).unwrap();
            let f = SqMat::diag(&[1.0, 1.5]);
            let y = GridField::affine(g.clone(), &f, &[0.0, 0.0]);
            let p = EnergyParams::new(0.1, 2).unwrap();
            let gr = energy_gradient(&y, &w, &p).unwrap();
            for n in 0..g.node_count() {
                let m = g.node_multi(n);
                if m.iter().zip(&g.dims).all(|(&i, &nn)| i > 0 && i < nn) {
                    assert!(gr.node(n)[0].abs() < 1e-10);
                }
            }
        }
    }

    fn random_field(rng: &mut ChaCha8Rng, dims: &[usize], amp: f64) -> GridField {
        let d = dims.len();
        let g = GridGeometry::on_box(dims, &vec![0.0; d], &vec![1.0; d]).unwrap();
        let mut y = GridField::affine(g, &SqMat::identity(d), &vec![0.0; d]);
        for v in y.values.iter_mut() {
            *v += rng.random_range(-amp..amp);
        }
        y
    }

    #[test]
    fn rescaling_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for dims in [vec![6, 7], vec![4, 3, 5]] {
            let d = dims.len();
            let w = TwoWellDensity::new(d, 1.0, 1.0, DensityVariant::SmoothHarmonic).unwrap();
            let eps = 0.2;
            for a in [0.25, 0.5, 1.0] {
                let ybar = random_field(&mut rng, &dims, 0.05);
                let big = GridGeometry::on_box(&dims, &vec![0.0; d], &vec![a; d]).unwrap();
                let y = GridField::new(big, d, ybar.values.iter().map(|v| a * v).collect()).unwrap();
                let small = energy_eval(&ybar, &w, &EnergyParams::new(eps, d).unwrap()).unwrap();
                let pa = EnergyParams::new(a.sqrt() * eps, d).unwrap();
                let large = energy_eval(&y, &w, &pa).unwrap();
                let f = a.powi(d as i32 - 1);
                let tol = 1e-12 * small.total.max(1.0);
                assert!((large.bulk - f * small.bulk).abs() < tol);
                assert!((large.second_gradient - f * small.second_gradient).abs() < tol);
                let eta = eta_bar(eps, d).unwrap();
                let ratio = pa.eta * pa.eta / (a * eta * eta);
                assert!((large.anisotropic - f * ratio * small.anisotropic).abs() < tol);
                assert!(large.total >= f * small.total - tol);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for (dims, variant) in [
            (vec![6, 5], DensityVariant::SmoothHarmonic),
            (vec![5, 6], DensityVariant::HardMin),
            (vec![12], DensityVariant::SmoothHarmonic),
            (vec![3, 3, 4], DensityVariant::SmoothHarmonic),
        ] {
            let d = dims.len();
            let w = TwoWellDensity::new(d, 1.0, 1.0, variant).unwrap();
            let p = EnergyParams::new(0.3, d).unwrap();
            for _ in 0..20 {
                let y = random_field(&mut rng, &dims, 0.05);
                let dir: Vec<f64> = (0..y.values.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let gr = energy_gradient(&y, &w, &p).unwrap();
                let analytic: f64 = gr.values.iter().zip(&dir).map(|(a, b)| a * b).sum();
                let t = 1e-5;
                let mut yp = y.clone();
                let mut ym = y.clone();
                for ((a, b), dv) in yp.values.iter_mut().zip(ym.values.iter_mut()).zip(&dir) {
                    *a += t * dv;
                    *b -= t * dv;
                }
                let fd =
                    (energy_eval(&yp, &w, &p).unwrap().total - energy_eval(&ym, &w, &p).unwrap().total) / (2.0 * t);
                assert!((analytic - fd).abs() <= 1e-4 * fd.abs().max(1e-8), "{analytic} vs {fd}");
            }
        }
    }
}
