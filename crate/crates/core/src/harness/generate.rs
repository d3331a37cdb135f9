//! Deformation families on uniform grids: the three-exponent example sequence and
//! mollified laminates.

use serde::{Deserialize, Serialize};

use crate::density::WellLabel;
use crate::error::{invalid, Error, Result};
use crate::gamma::LimitingTriple;
use crate::grid::{GridField, GridGeometry};
use crate::linalg::SqMat;

/// Cells per axis `clamp(⌈cells_per_band / ε²⌉, min_cells, max_cells)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolutionRule {
    pub cells_per_band: usize,
    pub min_cells: usize,
    pub max_cells: usize,
}

impl Default for ResolutionRule {
    fn default() -> Self {
        ResolutionRule { cells_per_band: 8, min_cells: 128, max_cells: 1024 }
    }
}

impl ResolutionRule {
    pub fn required(&self, eps: f64) -> usize {
        (self.cells_per_band as f64 / (eps * eps)).ceil() as usize
    }

    pub fn cells(&self, eps: f64) -> usize {
        self.required(eps).clamp(self.min_cells, self.max_cells)
    }

    /// False when the cap leaves fewer than `cells_per_band` cells across an `ε²` layer.
    pub fn resolves(&self, eps: f64) -> bool {
        self.required(eps) <= self.max_cells
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells_per_band < 8 {
            return invalid(format!("at least 8 cells per band are required, got {}", self.cells_per_band));
        }
        if self.min_cells < 2 || self.min_cells > self.max_cells {
            return invalid(format!("bad cell bounds {}..={}", self.min_cells, self.max_cells));
        }
        Ok(())
    }
}

/// The cuboid `(0,1) × (0,2)` with the rule's cell count along both axes.
pub fn example_grid(eps: f64, rule: &ResolutionRule) -> Result<GridGeometry> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    let n = rule.cells(eps);
    GridGeometry::on_box(&[n, n], &[0.0, 0.0], &[1.0, 2.0])
}

/// Discrete weights of the radial bump `(1 − |x|²/s²)⁴` integrated over the first `d − 1`
/// axes, sampled at multiples of `h` and normalised to unit sum.
pub fn mollifier_weights(scale: f64, h: f64, d: usize) -> Vec<(isize, f64)> {
    if !(scale > 0.0) {
        return vec![(0, 1.0)];
    }
    let power = 4.0 + 0.5 * (d as f64 - 1.0);
    let reach = (scale / h).ceil() as isize;
    let mut w: Vec<(isize, f64)> = (-reach..=reach)
        .map(|j| {
            let r = j as f64 * h / scale;
            (j, if r.abs() < 1.0 { (1.0 - r * r).powf(power) } else { 0.0 })
        })
        .filter(|&(_, v)| v > 0.0)
        .collect();
    let total: f64 = w.iter().map(|(_, v)| v).sum();
    for (_, v) in w.iter_mut() {
        *v /= total;
    }
    w
}

/// Fills `y = R (x', g(x_d))` with `g` convolved along `x_d` by the discrete mollifier.
fn fill_layered(geom: GridGeometry, r: &SqMat, scale: f64, g: impl Fn(f64) -> f64) -> GridField {
    let d = geom.dim();
    let h = geom.spacing[d - 1];
    let weights = mollifier_weights(scale, h, d);
    GridField::from_fn(geom, |x| {
        let z = x[d - 1];
        let mut local = x.to_vec();
        local[d - 1] = weights.iter().map(|&(j, w)| w * g(z - j as f64 * h)).sum();
        r.mul_vec(&local)
    })
}

/// Sequence exponents `l ∈ {1/2, 1, 2}` of the intermediate-layer example.
pub fn check_exponent(l: f64) -> Result<()> {
    if [0.5, 1.0, 2.0].contains(&l) {
        Ok(())
    } else {
        invalid(format!("layer exponent must be one of 1/2, 1, 2; got {l}"))
    }
}

/// Last-coordinate profile of the unmollified example map: identity below the layer
/// `|x₂ − 1| < ε^l`, slope `1 + κ` inside it and a shift of `2κε^l` above it.
pub fn example_profile(eps: f64, l: f64, kappa: f64) -> impl Fn(f64) -> f64 {
    let b = eps.powf(l);
    move |z| {
        if z <= 1.0 - b {
            z
        } else if z < 1.0 + b {
            (1.0 + kappa) * z - kappa * (1.0 - b)
        } else {
            z + 2.0 * kappa * b
        }
    }
}

/// The example map for exponent `l`, mollified at scale `ε²`.
pub fn generate_example_sequence(eps: f64, l: f64, kappa: f64, geom: &GridGeometry) -> Result<GridField> {
    check_exponent(l)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("eps must lie in (0, 1), got {eps}")));
    }
    if !(kappa > 0.0) {
        return invalid(format!("kappa must be positive, got {kappa}"));
    }
    let on_cuboid = geom.dim() == 2
        && geom.origin.iter().all(|&o| o.abs() < 1e-12)
        && (geom.dims[0] as f64 * geom.spacing[0] - 1.0).abs() < 1e-9
        && (geom.dims[1] as f64 * geom.spacing[1] - 2.0).abs() < 1e-9;
    if !on_cuboid {
        return invalid("the example lives on the grid of (0,1) × (0,2)");
    }
    let h = geom.spacing[1];
    let width = 2.0 * eps.powf(l) + 2.0 * eps * eps;
    if width < h {
        let need = (2.0 / width).ceil() as usize;
        return Err(Error::UnderResolved(format!(
            "transition of width {width:.3e} is thinner than one cell ({h:.3e}); use at least {need} cells along x2"
        )));
    }
    let g = example_profile(eps, l, kappa);
    Ok(fill_layered(geom.clone(), &SqMat::identity(2), eps * eps, g))
}

/// Phases stacked along the last axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaminateSpec {
    pub kappa: f64,
    pub bands: Vec<(WellLabel, f64, f64)>,
}

impl LaminateSpec {
    pub fn from_triple(t: &LimitingTriple, kappa: f64) -> Self {
        LaminateSpec { kappa, bands: t.bands.iter().map(|b| (b.phase, b.z0, b.z1)).collect() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) {
            return invalid(format!("kappa must be positive, got {}", self.kappa));
        }
        if self.bands.is_empty() {
            return invalid("laminate needs at least one band");
        }
        for (k, &(_, z0, z1)) in self.bands.iter().enumerate() {
            if !(z1 > z0) {
                return invalid(format!("band {k} has non-positive height"));
            }
            if k > 0 && (self.bands[k - 1].2 - z0).abs() > 1e-12 {
                return invalid(format!("bands {} and {k} do not meet", k - 1));
            }
        }
        Ok(())
    }

    fn slope(&self, phase: WellLabel) -> f64 {
        match phase {
            WellLabel::A => 1.0,
            WellLabel::B => 1.0 + self.kappa,
        }
    }

    /// Continuous profile with `g(z) = z` at the bottom of the first band; the outer bands
    /// extend beyond the stack.
    pub fn profile(&self) -> impl Fn(f64) -> f64 + '_ {
        move |z| {
            let (first, z_start, _) = self.bands[0];
            if z <= z_start {
                return z_start + self.slope(first) * (z - z_start);
            }
            let mut g = z_start;
            for (k, &(phase, z0, z1)) in self.bands.iter().enumerate() {
                if z <= z1 || k + 1 == self.bands.len() {
                    return g + self.slope(phase) * (z - z0);
                }
                g += self.slope(phase) * (z1 - z0);
            }
            unreachable!()
        }
    }
}

/// `y = R (x', g(x_d))` with `∂_d g` equal to the band's well entry, mollified at `scale`.
pub fn generate_laminate(spec: &LaminateSpec, r: &SqMat, scale: f64, geom: &GridGeometry) -> Result<GridField> {
    spec.validate()?;
    if r.dim() != geom.dim() || !r.is_rotation(1e-9) {
        return invalid("expected a rotation of the grid dimension");
    }
    if !(scale >= 0.0 && scale.is_finite()) {
        return invalid(format!("mollification scale must be non-negative, got {scale}"));
    }
    Ok(fill_layered(geom.clone(), r, scale, spec.profile()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{DensityVariant, TwoWellDensity};
    use crate::energy::{energy_eval, energy_eval_where, EnergyParams};

    #[test]
    fn resolution_rule() {
        let r = ResolutionRule::default();
        assert_eq!(r.cells(0.1), 800);
        assert_eq!(r.cells(0.05), 1024);
        assert_eq!(r.cells(0.5), 128);
        assert!(r.resolves(0.1) && !r.resolves(0.05));
        assert!(ResolutionRule { cells_per_band: 4, ..r }.validate().is_err());
    }

    #[test]
    fn mollifier_is_normalised_and_symmetric() {
        let w = mollifier_weights(0.01, 0.0025, 2);
        assert_eq!(w.len(), 7);
        assert!((w.iter().map(|p| p.1).sum::<f64>() - 1.0).abs() < 1e-15);
        for k in 0..w.len() {
            assert_eq!(w[k].1, w[w.len() - 1 - k].1);
        }
        assert_eq!(mollifier_weights(0.001, 0.01, 2), vec![(0, 1.0)]);
    }

    #[test]
    fn example_far_field() {
        let eps = 0.1;
        let kappa = 1.0;
        let g = example_grid(eps, &ResolutionRule { min_cells: 16, max_cells: 200, ..Default::default() }).unwrap();
        for l in [0.5, 1.0, 2.0] {
            let y = generate_example_sequence(eps, l, kappa, &g).unwrap();
            let band = eps.powf(l) + eps * eps;
            for n in 0..g.node_count() {
                let x = g.node_position(&g.node_multi(n));
                let v = y.node(n);
                assert!((v[0] - x[0]).abs() < 1e-13);
                if x[1] < 1.0 - band - g.spacing[1] {
                    assert!((v[1] - x[1]).abs() < 1e-12, "l={l} x={x:?}");
                } else if x[1] > 1.0 + band + g.spacing[1] {
                    assert!((v[1] - x[1] - 2.0 * kappa * eps.powf(l)).abs() < 1e-12);
                }
            }
        }
        assert!(generate_example_sequence(eps, 1.5, kappa, &g).is_err());
        let coarse = example_grid(0.1, &ResolutionRule { min_cells: 16, max_cells: 16, ..Default::default() }).unwrap();
        assert!(matches!(generate_example_sequence(0.1, 2.0, kappa, &coarse), Err(Error::UnderResolved(_))));
    }

    #[test]
    fn example_energy_bounded() {
        let w = TwoWellDensity::new(2, 1.0, 1.0, DensityVariant::HardMin).unwrap();
        let rule = ResolutionRule { min_cells: 32, max_cells: 1024, ..Default::default() };
        let energies: Vec<f64> = [0.2, 0.14, 0.1]
            .iter()
            .map(|&e| {
                let g = example_grid(e, &rule).unwrap();
                let y = generate_example_sequence(e, 1.0, 1.0, &g).unwrap();
                energy_eval(&y, &w, &EnergyParams::new(e, 2).unwrap()).unwrap().total
            })
            .collect();
        for &e in &energies {
            assert!(e.is_finite() && e > 0.0 && e <= 2.0 * energies[0], "{energies:?}");
        }
    }

    #[test]
    fn laminate_examples() {
        let g = GridGeometry::on_box(&[8, 40], &[0.0, -1.0], &[1.0, 1.0]).unwrap();
        let single = LaminateSpec { kappa: 1.0, bands: vec![(WellLabel::A, -1.0, 1.0)] };
        let y = generate_laminate(&single, &SqMat::identity(2), 0.1, &g).unwrap();
        assert!(y.max_abs_diff(&GridField::affine(g.clone(), &SqMat::identity(2), &[0.0, 0.0])) < 1e-12);

        let split = LaminateSpec { kappa: 0.5, bands: vec![(WellLabel::B, -1.0, 0.0), (WellLabel::A, 0.0, 1.0)] };
        let y = generate_laminate(&split, &SqMat::identity(2), 0.0, &g).unwrap();
        for n in 0..g.node_count() {
            let x = g.node_position(&g.node_multi(n));
            let plus = if x[1] > 0.0 { x[1] } else { 1.5 * x[1] };
            assert!((y.node(n)[1] - plus - 0.5).abs() < 1e-12);
        }
        let p = split.profile();
        assert!((p(0.0 - 1e-15) - p(0.0 + 1e-15)).abs() < 1e-12);
        let bad = LaminateSpec { kappa: 1.0, bands: vec![(WellLabel::A, 0.0, 1.0), (WellLabel::B, 1.5, 2.0)] };
        assert!(generate_laminate(&bad, &SqMat::identity(2), 0.0, &g).is_err());
    }

    #[test]
    fn laminate_energy_concentrates() {
        let w = TwoWellDensity::new(2, 1.0, 1.0, DensityVariant::HardMin).unwrap();
        for eps in [0.2, 0.15] {
            let g = example_grid(eps, &ResolutionRule::default()).unwrap();
            let spec = LaminateSpec { kappa: 1.0, bands: vec![(WellLabel::A, 0.0, 1.0), (WellLabel::B, 1.0, 2.0)] };
            let y = generate_laminate(&spec, &SqMat::plane_rotation(2, 0, 1, 0.3), eps * eps, &g).unwrap();
            let p = EnergyParams::new(eps, 2).unwrap();
            let total = energy_eval(&y, &w, &p).unwrap().total;
            let near = energy_eval_where(&y, &w, &p, |x| (x[1] - 1.0).abs() <= 2.0 * eps * eps).unwrap().total;
            assert!(near >= 0.95 * total, "eps={eps}: {near} of {total}");
        }
    }
}
