//! Slab partitions of a phase indicator, component translations, coarsening and rescaled
//! displacements.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::VecDeque;

use crate::density::{TwoWellDensity, WellLabel};
use crate::error::{Error, Result};
use crate::grid::{strides, unravel, GridField};
use crate::linalg::{pairwise_sum, SqMat};
use crate::rigidity::PhaseField;

/// `p(d) = 1 + 3 / (2d(2d − 3))`
pub fn p_exponent(d: usize) -> Result<f64> {
    if d < 2 {
        return Err(Error::Domain(format!("the partition exponent needs d >= 2, got {d}")));
    }
    let d = d as f64;
    Ok(1.0 + 3.0 / (2.0 * d * (2.0 * d - 3.0)))
}

/// Area of `phase` cells in each row along the last axis.
pub fn slice_area_function(phi: &PhaseField, phase: WellLabel) -> Vec<f64> {
    let row = phi.row_len();
    let face: f64 = phi.spacing[..phi.dim() - 1].iter().product();
    let nrows = phi.rows();
    let d = phi.dim();
    let st = strides(&phi.dims);
    (0..nrows)
        .into_par_iter()
        .map(|t| {
            let mut count = 0usize;
            for k in 0..row {
                let mut c = t * st[d - 1];
                let lower = unravel(&phi.dims[..d - 1], k);
                for (a, &m) in lower.iter().enumerate() {
                    c += m * st[a];
                }
                if phi.labels[c] == phase {
                    count += 1;
                }
            }
            count as f64 * face
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComponentClass {
    Layer,
    SmallVolume,
    Unclassified,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    /// Sorted linear cell indices.
    pub cells: Vec<usize>,
    pub phase: WellLabel,
    pub volume: f64,
    pub class: ComponentClass,
    /// Rows `lo..hi` along the last axis spanned by the component's slab(s).
    pub interval: (usize, usize),
    pub translation: Vec<f64>,
    /// False until translations are computed, or when the component is empty.
    pub has_translation: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaccioppoliPartition {
    pub dims: Vec<usize>,
    pub spacing: Vec<f64>,
    pub eps: f64,
    pub sigma_eps: f64,
    pub p_exponent: f64,
    /// Row indices where slabs start, beginning with 0.
    pub cuts: Vec<usize>,
    pub components: Vec<Component>,
}

impl CaccioppoliPartition {
    pub fn cell_count(&self) -> usize {
        self.dims.iter().product()
    }

    /// Component index of every cell.
    pub fn cell_owner(&self) -> Vec<usize> {
        let mut owner = vec![usize::MAX; self.cell_count()];
        for (j, comp) in self.components.iter().enumerate() {
            for &c in &comp.cells {
                owner[c] = j;
            }
        }
        owner
    }

    /// Disjoint, covering, and each component inside its row interval.
    pub fn is_exact(&self) -> bool {
        let mut seen = vec![false; self.cell_count()];
        let d = self.dims.len();
        for comp in &self.components {
            for &c in &comp.cells {
                if c >= seen.len() || seen[c] {
                    return false;
                }
                seen[c] = true;
                let row = unravel(&self.dims, c)[d - 1];
                if row < comp.interval.0 || row >= comp.interval.1 {
                    return false;
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn count_phase(&self, phase: WellLabel) -> usize {
        self.components.iter().filter(|c| c.phase == phase).count()
    }

    pub fn small_volume_total(&self) -> f64 {
        self.components.iter().filter(|c| c.class == ComponentClass::SmallVolume).map(|c| c.volume).sum()
    }

    /// Smallest `|t_i − t_j| / ε` over same-phase pairs; infinite with fewer than two per phase.
    pub fn min_same_phase_gap(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.components.len() {
            for j in i + 1..self.components.len() {
                let (a, b) = (&self.components[i], &self.components[j]);
                if a.phase == b.phase {
                    best = best.min(dist(&a.translation, &b.translation) / self.eps);
                }
            }
        }
        best
    }

    pub fn to_json(&self, origin_last: f64) -> serde_json::Value {
        let h = *self.spacing.last().expect("non-empty spacing");
        json!({
            "eps": self.eps,
            "sigma_eps": self.sigma_eps,
            "p_exponent": self.p_exponent,
            "cuts": self.cuts,
            "components": self.components.iter().map(|c| json!({
                "phase": c.phase.to_string(),
                "volume": c.volume,
                "cells": c.cells.len(),
                "class": c.class,
                "rows": [c.interval.0, c.interval.1],
                "interval": [origin_last + c.interval.0 as f64 * h, origin_last + c.interval.1 as f64 * h],
                "translation": c.translation,
                "has_translation": c.has_translation,
            })).collect::<Vec<_>>(),
        })
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn membership_changes(fa: &[f64], fb: &[f64], sigma: f64) -> Vec<usize> {
    let m = |t: usize| (fa[t] <= sigma, fb[t] <= sigma);
    (1..fa.len()).filter(|&t| m(t) != m(t - 1)).collect()
}

fn jump_count(fa: &[f64], fb: &[f64], sigma: f64) -> usize {
    let count = |f: &[f64]| (1..f.len()).filter(|&t| (f[t] <= sigma) != (f[t - 1] <= sigma)).count();
    count(fa) + count(fb)
}

fn sort_components(comps: &mut [Component]) {
    comps.sort_by(|a, b| {
        b.volume.total_cmp(&a.volume).then(a.interval.0.cmp(&b.interval.0)).then(a.cells.first().cmp(&b.cells.first()))
    });
}

/// Cuts the rows where either phase's slice area crosses `σ_ε`, then splits every slab into
/// face-connected single-phase components.
pub fn build_partition(phi: &PhaseField, eps: f64) -> Result<CaccioppoliPartition> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    let d = phi.dim();
    let p = p_exponent(d)?;
    let fa = slice_area_function(phi, WellLabel::A);
    let fb = slice_area_function(phi, WellLabel::B);
    let ep = eps.powf(p);
    let mut sigma = 0.0;
    let mut best = usize::MAX;
    for k in 0..16 {
        let s = 0.5 * ep + (k + 1) as f64 * 0.5 * ep / 17.0;
        let jc = jump_count(&fa, &fb, s);
        if jc < best {
            best = jc;
            sigma = s;
        }
    }
    let mut cuts = vec![0];
    cuts.extend(membership_changes(&fa, &fb, sigma));
    let nrows = phi.rows();
    let cross: f64 = phi.spacing[..d - 1].iter().product::<f64>() * phi.row_len() as f64;
    let height = nrows as f64 * phi.spacing[d - 1];
    let vol = phi.cell_volume();
    let st = strides(&phi.dims);
    let row_of = |c: usize| c / st[d - 1] % phi.dims[d - 1];

    let mut slab_of_row = vec![0; nrows];
    for (s, &lo) in cuts.iter().enumerate() {
        let hi = cuts.get(s + 1).copied().unwrap_or(nrows);
        slab_of_row[lo..hi].fill(s);
    }

    let mut comps = Vec::new();
    let mut visited = vec![false; phi.labels.len()];
    for start in 0..phi.labels.len() {
        if visited[start] {
            continue;
        }
        let slab = slab_of_row[row_of(start)];
        let lo = cuts[slab];
        let hi = cuts.get(slab + 1).copied().unwrap_or(nrows);
        let slab_volume = cross * (hi - lo) as f64 * phi.spacing[d - 1];
        {
            let lab = phi.labels[start];
            let mut cells = Vec::new();
            let mut queue = VecDeque::from([start]);
            visited[start] = true;
            while let Some(c) = queue.pop_front() {
                cells.push(c);
                let m = unravel(&phi.dims, c);
                for k in 0..d {
                    let mut nbrs = [None, None];
                    if m[k] > 0 {
                        nbrs[0] = Some(c - st[k]);
                    }
                    if m[k] + 1 < phi.dims[k] {
                        nbrs[1] = Some(c + st[k]);
                    }
                    for nb in nbrs.into_iter().flatten() {
                        if !visited[nb] && phi.labels[nb] == lab && slab_of_row[row_of(nb)] == slab {
                            visited[nb] = true;
                            queue.push_back(nb);
                        }
                    }
                }
            }
            cells.sort_unstable();
            let volume = cells.len() as f64 * vol;
            let class = if volume / slab_volume >= 1.0 - sigma / cross {
                ComponentClass::Layer
            } else if volume <= sigma * height {
                ComponentClass::SmallVolume
            } else {
                ComponentClass::Unclassified
            };
            comps.push(Component {
                cells,
                phase: lab,
                volume,
                class,
                interval: (lo, hi),
                translation: vec![0.0; d],
                has_translation: false,
            });
        }
    }
    sort_components(&mut comps);
    Ok(CaccioppoliPartition {
        dims: phi.dims.clone(),
        spacing: phi.spacing.clone(),
        eps,
        sigma_eps: sigma,
        p_exponent: p,
        cuts,
        components: comps,
    })
}

fn check_grid(y: &GridField, part: &CaccioppoliPartition, w: &TwoWellDensity) -> Result<()> {
    if y.geom.dims != part.dims || y.ncomp != w.d || y.dim() != w.d {
        return Err(Error::InvalidInput("field, partition and density do not match".into()));
    }
    Ok(())
}

/// `t_j` = mean over the cells of `P_j` of `y − R M_j x`, using cell-centre values.
pub fn component_translations(
    y: &GridField,
    r: &SqMat,
    part: &CaccioppoliPartition,
    w: &TwoWellDensity,
) -> Result<CaccioppoliPartition> {
    check_grid(y, part, w)?;
    let d = w.d;
    let g = &y.geom;
    let mut out = part.clone();
    out.components.par_iter_mut().for_each(|comp| {
        if comp.cells.is_empty() {
            comp.translation = vec![0.0; d];
            comp.has_translation = false;
            return;
        }
        let rm = *r * w.well(comp.phase);
        let resid: Vec<Vec<f64>> = comp
            .cells
            .iter()
            .map(|&c| {
                let m = g.cell_multi(c);
                let yc = y.cell_value(&m);
                let x = g.cell_center(&m);
                let mx = rm.mul_vec(&x);
                (0..d).map(|i| yc[i] - mx[i]).collect()
            })
            .collect();
        let n = resid.len() as f64;
        comp.translation = (0..d)
            .map(|i| {
                let col: Vec<f64> = resid.iter().map(|v| v[i]).collect();
                pairwise_sum(&col) / n
            })
            .collect();
        comp.has_translation = true;
    });
    Ok(out)
}

/// Merges same-phase pairs whose translations differ by less than `threshold · ε`, closest
/// pair first; the larger component's translation survives.
pub fn coarsen_partition(part: &CaccioppoliPartition, eps: f64, threshold: f64) -> Result<CaccioppoliPartition> {
    if !(eps > 0.0 && threshold >= 0.0) {
        return Err(Error::Domain("eps must be positive and threshold non-negative".into()));
    }
    let mut comps = part.components.clone();
    loop {
        let mut pick: Option<(usize, usize, f64)> = None;
        for i in 0..comps.len() {
            for j in i + 1..comps.len() {
                if comps[i].phase != comps[j].phase {
                    continue;
                }
                let gap = dist(&comps[i].translation, &comps[j].translation) / eps;
                if gap < threshold && pick.is_none_or(|(_, _, g)| gap < g) {
                    pick = Some((i, j, gap));
                }
            }
        }
        let Some((i, j, _)) = pick else { break };
        let small = comps.remove(j);
        let keep = &mut comps[i];
        keep.cells.extend(small.cells);
        keep.cells.sort_unstable();
        keep.volume += small.volume;
        keep.interval = (keep.interval.0.min(small.interval.0), keep.interval.1.max(small.interval.1));
        if small.class == ComponentClass::Layer {
            keep.class = ComponentClass::Layer;
        }
        sort_components(&mut comps);
    }
    let mut out = part.clone();
    out.components = comps;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RescaledDisplacement {
    pub u: GridField,
    pub eps: f64,
    /// Owning component of every node.
    pub node_owner: Vec<usize>,
}

/// Node owner by majority vote of the adjacent cells, ties to the lower component index.
pub fn node_owners(part: &CaccioppoliPartition) -> Vec<usize> {
    let cell_owner = part.cell_owner();
    let d = part.dims.len();
    let ndims: Vec<usize> = part.dims.iter().map(|n| n + 1).collect();
    let nn: usize = ndims.iter().product();
    (0..nn)
        .into_par_iter()
        .map(|n| {
            let m = unravel(&ndims, n);
            let mut votes: Vec<(usize, usize)> = Vec::with_capacity(1 << d);
            for corner in 0..1usize << d {
                let mut cm = Vec::with_capacity(d);
                let mut ok = true;
                for k in 0..d {
                    let off = corner >> k & 1;
                    if m[k] < off || m[k] - off >= part.dims[k] {
                        ok = false;
                        break;
                    }
                    cm.push(m[k] - off);
                }
                if ok {
                    let owner = cell_owner[crate::grid::linear(&part.dims, &cm)];
                    match votes.iter_mut().find(|(o, _)| *o == owner) {
                        Some((_, c)) => *c += 1,
                        None => votes.push((owner, 1)),
                    }
                }
            }
            votes.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            votes[0].0
        })
        .collect()
}

/// `u = (y − R M_j x − t_j) / ε` with the owning component `j` of each node.
pub fn rescaled_displacement(
    y: &GridField,
    r: &SqMat,
    part: &CaccioppoliPartition,
    w: &TwoWellDensity,
) -> Result<RescaledDisplacement> {
    check_grid(y, part, w)?;
    let eps = part.eps;
    let d = w.d;
    let g = &y.geom;
    let owners = node_owners(part);
    let maps: Vec<SqMat> = part.components.iter().map(|c| *r * w.well(c.phase)).collect();
    let vals: Vec<f64> = (0..g.node_count())
        .into_par_iter()
        .flat_map_iter(|n| {
            let j = owners[n];
            let x = g.node_position(&g.node_multi(n));
            let mx = maps[j].mul_vec(&x);
            let t = &part.components[j].translation;
            let yn = y.node(n);
            (0..d).map(move |i| (yn[i] - mx[i] - t[i]) / eps).collect::<Vec<_>>()
        })
        .collect();
    Ok(RescaledDisplacement { u: GridField::new(g.clone(), d, vals)?, eps, node_owner: owners })
}

/// Node rows `lo..=hi` along the last axis containing an interface.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterfaceZone {
    pub lo: usize,
    pub hi: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpReport {
    pub jump: Vec<f64>,
    /// Largest deviation of a single column's jump from the mean.
    pub max_deviation: f64,
    pub below_row: usize,
    pub above_row: usize,
}

/// Mean of `u(row hi + offset) − u(row lo − offset)` over all node columns.
pub fn jump_height_extract(u: &GridField, zone: InterfaceZone, offset: usize) -> Result<JumpReport> {
    let g = &u.geom;
    let d = g.dim();
    let nrows = g.dims[d - 1];
    if offset < 3 {
        return Err(Error::InvalidInput(format!("evaluation offset must be at least 3, got {offset}")));
    }
    if zone.lo > zone.hi || zone.lo < offset || zone.hi + offset > nrows {
        return Err(Error::InvalidInput(format!(
            "interface rows {}..={} with offset {offset} touch the boundary (0..={nrows})",
            zone.lo, zone.hi
        )));
    }
    let below = zone.lo - offset;
    let above = zone.hi + offset;
    let nd = g.node_dims();
    let st = g.node_strides();
    let cols: usize = nd[..d - 1].iter().product();
    let mut diffs = Vec::with_capacity(cols);
    for k in 0..cols {
        let lower = unravel(&nd[..d - 1], k);
        let base: usize = lower.iter().zip(&st).map(|(m, s)| m * s).sum();
        let a = u.node(base + above * st[d - 1]);
        let b = u.node(base + below * st[d - 1]);
        diffs.push((0..u.ncomp).map(|i| a[i] - b[i]).collect::<Vec<_>>());
    }
    let jump: Vec<f64> = (0..u.ncomp)
        .map(|i| {
            let col: Vec<f64> = diffs.iter().map(|v| v[i]).collect();
            pairwise_sum(&col) / cols as f64
        })
        .collect();
    let max_deviation = diffs.iter().map(|v| dist(v, &jump)).fold(0.0, f64::max);
    Ok(JumpReport { jump, max_deviation, below_row: below, above_row: above })
}
