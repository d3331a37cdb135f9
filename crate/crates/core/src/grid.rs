//! Uniform paraxial grids with vector-valued nodal samples.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::SqMat;

/// Cell/node bookkeeping for a uniform grid with `dims[k]` cells along axis `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub dims: Vec<usize>,
    pub spacing: Vec<f64>,
    pub origin: Vec<f64>,
}

impl GridGeometry {
    pub fn new(dims: Vec<usize>, spacing: Vec<f64>, origin: Vec<f64>) -> Result<Self> {
        let d = dims.len();
        if !(1..=3).contains(&d) {
            return invalid(format!("grid dimension {d} not in 1..=3"));
        }
        if spacing.len() != d || origin.len() != d {
            return invalid("dims, spacing and origin must have equal length");
        }
        if dims.contains(&0) {
            return invalid("every axis needs at least one cell");
        }
        if spacing.iter().any(|&h| !(h.is_finite() && h > 0.0)) {
            return invalid("spacing must be positive on every axis");
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return invalid("origin must be finite");
        }
        Ok(GridGeometry { dims, spacing, origin })
    }

    /// Grid covering the box `lo..hi` with `dims` cells per axis.
    pub fn on_box(dims: &[usize], lo: &[f64], hi: &[f64]) -> Result<Self> {
        let spacing = dims.iter().zip(lo.iter().zip(hi)).map(|(&n, (a, b))| (b - a) / n as f64).collect();
        Self::new(dims.to_vec(), spacing, lo.to_vec())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn node_dims(&self) -> Vec<usize> {
        self.dims.iter().map(|n| n + 1).collect()
    }

    pub fn node_count(&self) -> usize {
        self.dims.iter().map(|n| n + 1).product()
    }

    pub fn cell_count(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn volume(&self) -> f64 {
        self.cell_volume() * self.cell_count() as f64
    }

    /// Strides of the node array, last axis fastest.
    pub fn node_strides(&self) -> Vec<usize> {
        strides(&self.node_dims())
    }

    pub fn cell_strides(&self) -> Vec<usize> {
        strides(&self.dims)
    }

    pub fn node_index(&self, multi: &[usize]) -> usize {
        linear(&self.node_dims(), multi)
    }

    pub fn node_multi(&self, idx: usize) -> Vec<usize> {
        unravel(&self.node_dims(), idx)
    }

    pub fn cell_index(&self, multi: &[usize]) -> usize {
        linear(&self.dims, multi)
    }

    pub fn cell_multi(&self, idx: usize) -> Vec<usize> {
        unravel(&self.dims, idx)
    }

    pub fn node_position(&self, multi: &[usize]) -> Vec<f64> {
        (0..self.dim()).map(|k| self.origin[k] + multi[k] as f64 * self.spacing[k]).collect()
    }

    pub fn cell_center(&self, multi: &[usize]) -> Vec<f64> {
        (0..self.dim()).map(|k| self.origin[k] + (multi[k] as f64 + 0.5) * self.spacing[k]).collect()
    }

    /// Trapezoid quadrature weight of a node.
    pub fn node_weight(&self, multi: &[usize]) -> f64 {
        let mut w = 1.0;
        for k in 0..self.dim() {
            w *= self.spacing[k];
            if multi[k] == 0 || multi[k] == self.dims[k] {
                w *= 0.5;
            }
        }
        w
    }

    /// Linear indices of the `2^d` corner nodes of a cell; bit `k` of the corner
    /// number selects the upper node along axis `k`.
    pub fn cell_corners(&self, cell_multi: &[usize]) -> Vec<usize> {
        let d = self.dim();
        let st = self.node_strides();
        let base: usize = (0..d).map(|k| cell_multi[k] * st[k]).sum();
        (0..1usize << d).map(|c| base + (0..d).filter(|k| c >> k & 1 == 1).map(|k| st[k]).sum::<usize>()).collect()
    }

    pub fn same_shape(&self, o: &GridGeometry) -> bool {
        self.dims == o.dims && self.spacing == o.spacing && self.origin == o.origin
    }

    pub fn ensure_min_nodes(&self, min_nodes: usize) -> Result<()> {
        if self.dims.iter().any(|&n| n + 1 < min_nodes) {
            return Err(crate::Error::GridTooSmall(format!(
                "need at least {min_nodes} nodes per axis, grid has cells {:?}",
                self.dims
            )));
        }
        Ok(())
    }
}

pub(crate) fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

pub(crate) fn linear(dims: &[usize], multi: &[usize]) -> usize {
    let mut idx = 0;
    for k in 0..dims.len() {
        debug_assert!(multi[k] < dims[k]);
        idx = idx * dims[k] + multi[k];
    }
    idx
}

pub(crate) fn unravel(dims: &[usize], mut idx: usize) -> Vec<usize> {
    let mut m = vec![0; dims.len()];
    for k in (0..dims.len()).rev() {
        m[k] = idx % dims[k];
        idx /= dims[k];
    }
    m
}

/// Vector field with `ncomp` components per node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub geom: GridGeometry,
    pub ncomp: usize,
    /// Node-major, component fastest.
    pub values: Vec<f64>,
}

impl GridField {
    pub fn new(geom: GridGeometry, ncomp: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != geom.node_count() * ncomp {
            return invalid(format!("expected {} values, got {}", geom.node_count() * ncomp, values.len()));
        }
        Ok(GridField { geom, ncomp, values })
    }

    pub fn zeros(geom: GridGeometry) -> Self {
        let n = geom.node_count() * geom.dim();
        let ncomp = geom.dim();
        GridField { geom, ncomp, values: vec![0.0; n] }
    }

    /// Samples `f(x)` at every node.
    pub fn from_fn(geom: GridGeometry, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let d = geom.dim();
        let mut values = Vec::with_capacity(geom.node_count() * d);
        for i in 0..geom.node_count() {
            let x = geom.node_position(&geom.node_multi(i));
            let v = f(&x);
            debug_assert_eq!(v.len(), d);
            values.extend_from_slice(&v);
        }
        GridField { geom, ncomp: d, values }
    }

    /// The affine map `x ↦ F x + b`.
    pub fn affine(geom: GridGeometry, f: &SqMat, b: &[f64]) -> Self {
        let f = *f;
        let b = b.to_vec();
        Self::from_fn(geom, move |x| {
            let mut v = f.mul_vec(x);
            for (vi, bi) in v.iter_mut().zip(&b) {
                *vi += bi;
            }
            v
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.geom.dim()
    }

    #[inline]
    pub fn node(&self, idx: usize) -> &[f64] {
        &self.values[idx * self.ncomp..(idx + 1) * self.ncomp]
    }

    #[inline]
    pub fn node_mut(&mut self, idx: usize) -> &mut [f64] {
        &mut self.values[idx * self.ncomp..(idx + 1) * self.ncomp]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, o: &GridField) -> f64 {
        self.values.iter().zip(&o.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Applies `R` to every nodal vector.
    pub fn rotated(&self, r: &SqMat) -> Self {
        let mut out = self.clone();
        for i in 0..self.geom.node_count() {
            let v = r.mul_vec(self.node(i));
            out.node_mut(i).copy_from_slice(&v);
        }
        out
    }

    pub fn translated(&self, c: &[f64]) -> Self {
        let mut out = self.clone();
        for i in 0..self.geom.node_count() {
            for (v, ci) in out.node_mut(i).iter_mut().zip(c) {
                *v += ci;
            }
        }
        out
    }

    /// Gradient at the centre of a cell: averaged forward differences.
    pub fn cell_gradient(&self, cell_multi: &[usize]) -> SqMat {
        let corners = self.geom.cell_corners(cell_multi);
        cell_gradient_from_corners(&self.geom, self.ncomp, &corners, &self.values)
    }

    pub fn cell_gradients(&self) -> Vec<SqMat> {
        use rayon::prelude::*;
        (0..self.geom.cell_count()).into_par_iter().map(|c| self.cell_gradient(&self.geom.cell_multi(c))).collect()
    }

    /// Mean of the field over a cell's corners.
    pub fn cell_value(&self, cell_multi: &[usize]) -> Vec<f64> {
        let corners = self.geom.cell_corners(cell_multi);
        let mut v = vec![0.0; self.ncomp];
        for &c in &corners {
            for (vi, x) in v.iter_mut().zip(self.node(c)) {
                *vi += x;
            }
        }
        let n = corners.len() as f64;
        v.iter_mut().for_each(|x| *x /= n);
        v
    }

    /// Mask of nodes within `width` nodes of the boundary.
    pub fn boundary_mask(&self, width: usize) -> Vec<bool> {
        let g = &self.geom;
        (0..g.node_count())
            .map(|i| {
                let m = g.node_multi(i);
                (0..g.dim()).any(|k| m[k] < width || m[k] + width > g.dims[k])
            })
            .collect()
    }
}

/// Weight of corner `c` in the derivative along axis `j`.
#[inline]
pub(crate) fn corner_weight(geom: &GridGeometry, c: usize, j: usize) -> f64 {
    let d = geom.dim();
    let sign = if c >> j & 1 == 1 { 1.0 } else { -1.0 };
    sign / (geom.spacing[j] * (1usize << (d - 1)) as f64)
}

pub(crate) fn cell_gradient_from_corners(
    geom: &GridGeometry,
    ncomp: usize,
    corners: &[usize],
    values: &[f64],
) -> SqMat {
    let d = geom.dim();
    let mut g = SqMat::zeros(d);
    for (c, &node) in corners.iter().enumerate() {
        let v = &values[node * ncomp..node * ncomp + ncomp];
        for j in 0..d {
            let w = corner_weight(geom, c, j);
            for i in 0..d.min(ncomp) {
                g.add_to(i, j, w * v[i]);
            }
        }
    }
    g
}
