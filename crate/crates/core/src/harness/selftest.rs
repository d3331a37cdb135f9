//! Quick checks of exactly known values across the pipeline.

use serde::{Deserialize, Serialize};

use super::generate::{generate_laminate, LaminateSpec};
use crate::density::{Density, DensityVariant, TwoWellDensity, WellLabel};
use crate::energy::{energy_eval, eta_bar, EnergyParams};
use crate::gamma::{check_admissible, limiting_energy, LimitingTriple};
use crate::grid::{GridField, GridGeometry};
use crate::linalg::SqMat;
use crate::partition::{build_partition, p_exponent};
use crate::profile::{reduced_density_eval, ReducedDensity};
use crate::rigidity::{decompose_phases, phase_boundary_measures, DecomposeOptions, PhaseField};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelftestCase {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn case(name: &'static str, check: impl FnOnce() -> crate::Result<(bool, String)>) -> SelftestCase {
    match check() {
        Ok((passed, detail)) => SelftestCase { name, passed, detail },
        Err(e) => SelftestCase { name, passed: false, detail: format!("error: {e}") },
    }
}

pub fn run_selftest() -> Vec<SelftestCase> {
    let hm = || TwoWellDensity::new(2, 1.0, 1.0, DensityVariant::HardMin);
    vec![
        case("density vanishes on both wells", || {
            let w = hm()?;
            let r = SqMat::plane_rotation(2, 0, 1, 0.7);
            let a = w.eval(&r);
            let b = w.eval(&(r * w.well(WellLabel::B)));
            Ok((a.abs() < 1e-14 && b.abs() < 1e-14, format!("W(RA) = {a:e}, W(RB) = {b:e}")))
        }),
        case("reduced density midpoint", || {
            let v = reduced_density_eval(&ReducedDensity::new(hm()?), 1.5)?;
            Ok(((v - 0.25).abs() < 1e-14, format!("{v}")))
        }),
        case("penalisation exponent", || {
            let v = eta_bar(0.01, 2)?;
            Ok(((v - 0.01f64.powf(-0.75)).abs() < 1e-12 * v, format!("{v}")))
        }),
        case("affine well field has zero energy", || {
            let w = hm()?;
            let g = GridGeometry::on_box(&[8, 8], &[0.0, 0.0], &[1.0, 1.0])?;
            let y = GridField::affine(g, &SqMat::plane_rotation(2, 0, 1, 0.3), &[0.1, -0.2]);
            let e = energy_eval(&y, &w, &EnergyParams::new(0.1, 2)?)?.total;
            Ok((e.abs() < 1e-20, format!("{e:e}")))
        }),
        case("partition exponent in 2D", || {
            let p = p_exponent(2)?;
            Ok((p == 1.75, format!("{p}")))
        }),
        case("uniform phase gives one component", || {
            let phi = PhaseField::from_fn(vec![16, 16], vec![1.0 / 16.0; 2], |_| WellLabel::A);
            let part = build_partition(&phi, 0.1)?;
            Ok((part.components.len() == 1 && part.is_exact(), format!("{} components", part.components.len())))
        }),
        case("checkerboard perimeter", || {
            let phi = PhaseField::from_fn(vec![2, 2], vec![0.5, 0.5], |x| {
                if (x[0] < 0.5) == (x[1] < 0.5) {
                    WellLabel::A
                } else {
                    WellLabel::B
                }
            });
            let m = phase_boundary_measures(&phi);
            Ok(((m.perimeter - 2.0).abs() < 1e-14, format!("{}", m.perimeter)))
        }),
        case("decomposition recovers a rotated laminate", || {
            let w = hm()?;
            let g = GridGeometry::on_box(&[16, 32], &[0.0, 0.0], &[1.0, 2.0])?;
            let r0 = SqMat::plane_rotation(2, 0, 1, 0.4);
            let spec = LaminateSpec { kappa: 1.0, bands: vec![(WellLabel::A, 0.0, 1.0), (WellLabel::B, 1.0, 2.0)] };
            let y = generate_laminate(&spec, &r0, 0.0, &g)?;
            let dec = decompose_phases(&y, &w, &DecomposeOptions::default())?;
            let err = (dec.r - r0).max_abs();
            Ok((err < 1e-10, format!("rotation error {err:e}")))
        }),
        case("trivial triple has zero limiting energy", || {
            let t = LimitingTriple::parse("[triple] d=2\n[band] phase=A z0=0 z1=1\n")?;
            let ok = check_admissible(&t)?.ok;
            let e = limiting_energy(&t, 0.5, &hm()?)?.total;
            Ok((ok && e == 0.0, format!("admissible={ok} E0={e}")))
        }),
    ]
}

#[cfg(test)]
mod tests {
    #[test]
    fn selftest_passes() {
        for c in super::run_selftest() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
