//! Fixtures shared by the benchmarks.

use twowell::harness::{generate_laminate, LaminateSpec};
use twowell::linalg::SqMat;
use twowell::profile::ReducedDensity;
use twowell::{DensityVariant, GridField, GridGeometry, TwoWellDensity, WellLabel};

pub fn hard_min(d: usize) -> TwoWellDensity {
    TwoWellDensity::new(d, 1.0, 1.0, DensityVariant::HardMin).expect("valid density")
}

pub fn reduced_hard_min() -> ReducedDensity {
    ReducedDensity::new(hard_min(2))
}

/// Rotated A|B|A laminate on `(0,1) × (0,2)` with `n × n` cells, mollified at `scale`.
pub fn laminate(n: usize, scale: f64) -> GridField {
    let g = GridGeometry::on_box(&[n, n], &[0.0, 0.0], &[1.0, 2.0]).expect("valid grid");
    let spec = LaminateSpec {
        kappa: 1.0,
        bands: vec![(WellLabel::A, 0.0, 0.8), (WellLabel::B, 0.8, 1.2), (WellLabel::A, 1.2, 2.0)],
    };
    generate_laminate(&spec, &SqMat::plane_rotation(2, 0, 1, 0.3), scale, &g).expect("valid laminate")
}
