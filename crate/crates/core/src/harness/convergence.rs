//! ε sweeps through the full pipeline with CSV and JSON reports.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Scenario};
use super::generate::{example_grid, generate_example_sequence, generate_laminate, LaminateSpec};
use crate::density::{TwoWellDensity, WellLabel};
use crate::energy::{energy_eval, EnergyParams};
use crate::error::{Error, Result};
use crate::gamma::{gamma_gap, Band, Interface, InterfaceKind, LimitingTriple};
use crate::grid::{GridField, GridGeometry};
use crate::io::load_field;
use crate::linalg::SqMat;
use crate::partition::{
    build_partition, coarsen_partition, component_translations, jump_height_extract, rescaled_displacement,
    InterfaceZone,
};
use crate::profile::{analytic_k, ReducedDensity};
use crate::rigidity::{decompose_phases, DecomposeOptions, Window};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub cells: Vec<usize>,
    /// The resolution cap left fewer cells than requested across an `ε²` layer.
    pub under_resolved: bool,
    pub e_eps: f64,
    pub e_limit: f64,
    pub gap: f64,
    /// Component of the extracted jump along `R e_d`.
    pub jump_height: Option<f64>,
    pub jump: Option<Vec<f64>>,
    pub nominal_jump: f64,
    pub n_components: usize,
    pub n_components_a: usize,
    pub n_components_b: usize,
    pub n_components_before_coarsening: usize,
    /// Smallest same-phase translation gap over `ε` before coarsening.
    pub min_gap_before_coarsening: Option<f64>,
    pub residual: f64,
    pub perimeter: f64,
    pub rotation: Vec<f64>,
    pub max_gradient_jump: f64,
    pub h2_unresolved: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub scenario: String,
    pub config: ExperimentConfig,
    pub analytic_k: f64,
    /// Ordered as the configured sweep.
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `log gap` against `log ε` over rows with positive gap.
    pub gap_rate: Option<f64>,
    pub jump_rate: Option<f64>,
}

const CSV_HEADER: &str = "eps,cells,under_resolved,E_eps,E_limit,gap,jump_height,nominal_jump,n_components,\
n_components_A,n_components_B,n_components_raw,min_gap_raw,residual,perimeter,max_gradient_jump,h2_unresolved";

impl ConvergenceReport {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let cells = r.cells.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("x");
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.eps,
                cells,
                r.under_resolved,
                r.e_eps,
                r.e_limit,
                r.gap,
                opt(r.jump_height),
                r.nominal_jump,
                r.n_components,
                r.n_components_a,
                r.n_components_b,
                r.n_components_before_coarsening,
                opt(r.min_gap_before_coarsening),
                r.residual,
                r.perimeter,
                r.max_gradient_jump,
                r.h2_unresolved
            );
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes the configured outputs below `workdir` and returns their paths.
    pub fn write(&self, workdir: &Path) -> Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        if let Some(p) = &self.config.csv {
            let path = workdir.join(p);
            std::fs::write(&path, self.to_csv())?;
            out.push(path);
        }
        if let Some(p) = &self.config.json {
            let path = workdir.join(p);
            std::fs::write(&path, self.to_json()?)?;
            out.push(path);
        }
        Ok(out)
    }
}

fn log_slope(points: impl Iterator<Item = (f64, f64)>) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        points.filter(|&(_, v)| v > 0.0 && v.is_finite()).map(|(e, v)| (e.ln(), v.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn two_d_triple(bands: Vec<Band>, interfaces: Vec<Interface>) -> LimitingTriple {
    LimitingTriple { d: 2, cross_section: vec![1.0], rotation: SqMat::identity(2), bands, interfaces }
}

fn band(phase: WellLabel, z0: f64, z1: f64) -> Band {
    Band { phase, z0, z1, grad_u: SqMat::zeros(2) }
}

/// The limiting triple a scenario's sequence is expected to represent at `ε`.
pub fn nominal_triple(scenario: &Scenario, eps: f64, kappa: f64) -> Result<LimitingTriple> {
    use InterfaceKind::*;
    use WellLabel::{A, B};
    Ok(match scenario {
        Scenario::ExampleEx { l } if *l == 2.0 => two_d_triple(vec![band(A, 0.0, 2.0)], vec![]),
        Scenario::ExampleEx { l } if *l == 1.0 => two_d_triple(
            vec![band(A, 0.0, 1.0), band(A, 1.0, 2.0)],
            vec![Interface { z: 1.0, jump: vec![0.0, 2.0 * kappa], kinds: vec![Disp] }],
        ),
        Scenario::ExampleEx { .. } => two_d_triple(
            vec![band(A, 0.0, 1.0), band(A, 1.0, 2.0)],
            vec![Interface { z: 1.0, jump: vec![0.0, 0.0], kinds: vec![Partition] }],
        ),
        Scenario::SingleInterface => two_d_triple(
            vec![band(A, 0.0, 1.0), band(B, 1.0, 2.0)],
            vec![Interface { z: 1.0, jump: vec![0.0, 0.0], kinds: vec![Grad, Partition] }],
        ),
        Scenario::DoubleInterface { w_rule } => two_d_triple(
            vec![band(A, 0.0, 1.0), band(A, 1.0, 2.0)],
            vec![Interface { z: 1.0, jump: vec![0.0, kappa * w_rule.width(eps) / eps], kinds: vec![Disp] }],
        ),
        Scenario::CustomField { .. } => return Err(Error::InvalidInput("custom triples are read from file".into())),
    })
}

/// Field and interface zone `[z_lo, z_hi]` for one sweep point.
fn scenario_field(
    cfg: &ExperimentConfig,
    eps: f64,
    custom: Option<&(GridField, LimitingTriple)>,
) -> Result<(GridField, LimitingTriple, Option<(f64, f64)>)> {
    let e2 = eps * eps;
    let lam = |bands: Vec<(WellLabel, f64, f64)>| -> Result<GridField> {
        let spec = LaminateSpec { kappa: cfg.kappa, bands };
        generate_laminate(&spec, &SqMat::identity(2), e2, &example_grid(eps, &cfg.resolution)?)
    };
    Ok(match &cfg.scenario {
        Scenario::ExampleEx { l } => {
            let y = generate_example_sequence(eps, *l, cfg.kappa, &example_grid(eps, &cfg.resolution)?)?;
            let half = eps.powf(*l) + e2;
            (y, nominal_triple(&cfg.scenario, eps, cfg.kappa)?, Some((1.0 - half, 1.0 + half)))
        }
        Scenario::SingleInterface => {
            let y = lam(vec![(WellLabel::A, 0.0, 1.0), (WellLabel::B, 1.0, 2.0)])?;
            (y, nominal_triple(&cfg.scenario, eps, cfg.kappa)?, Some((1.0 - e2, 1.0 + e2)))
        }
        Scenario::DoubleInterface { w_rule } => {
            let half = 0.5 * w_rule.width(eps);
            let y = lam(vec![
                (WellLabel::A, 0.0, 1.0 - half),
                (WellLabel::B, 1.0 - half, 1.0 + half),
                (WellLabel::A, 1.0 + half, 2.0),
            ])?;
            (y, nominal_triple(&cfg.scenario, eps, cfg.kappa)?, Some((1.0 - half - e2, 1.0 + half + e2)))
        }
        Scenario::CustomField { .. } => {
            let (y, t) = custom.expect("custom inputs are loaded before the sweep");
            let zone = t.interfaces.first().map(|f| (f.z - e2, f.z + e2));
            (y.clone(), t.clone(), zone)
        }
    })
}

fn zone_rows(geom: &GridGeometry, lo: f64, hi: f64) -> InterfaceZone {
    let d = geom.dim();
    let h = geom.spacing[d - 1];
    let o = geom.origin[d - 1];
    let n = geom.dims[d - 1];
    InterfaceZone {
        lo: (((lo - o) / h).floor().max(0.0) as usize).min(n),
        hi: (((hi - o) / h).ceil().max(0.0) as usize).min(n),
    }
}

fn run_row(
    cfg: &ExperimentConfig,
    w: &TwoWellDensity,
    k: f64,
    eps: f64,
    custom: Option<&(GridField, LimitingTriple)>,
) -> Result<ConvergenceRow> {
    let (y, triple, zone) = scenario_field(cfg, eps, custom).map_err(|e| e.at_stage("generate"))?;
    let d = y.dim();
    let params = EnergyParams::new(eps, d).map_err(|e| e.at_stage("energy"))?;
    let e_eps = energy_eval(&y, w, &params).map_err(|e| e.at_stage("energy"))?.total;

    let opts = DecomposeOptions { window: Window::Full, ..Default::default() };
    let dec = decompose_phases(&y, w, &opts).map_err(|e| e.at_stage("decompose"))?;
    let raw = build_partition(&dec.phi, eps).map_err(|e| e.at_stage("partition"))?;
    let raw = component_translations(&y, &dec.r, &raw, w).map_err(|e| e.at_stage("translations"))?;
    let part = coarsen_partition(&raw, eps, cfg.threshold).map_err(|e| e.at_stage("coarsen"))?;
    let disp = rescaled_displacement(&y, &dec.r, &part, w).map_err(|e| e.at_stage("displacement"))?;

    let red = dec.r.col(d - 1);
    let (jump, jump_height) = match zone {
        Some((lo, hi)) => {
            let rep =
                jump_height_extract(&disp.u, zone_rows(&y.geom, lo, hi), cfg.offset).map_err(|e| e.at_stage("jump"))?;
            let along = rep.jump.iter().zip(&red).map(|(a, b)| a * b).sum();
            (Some(rep.jump), Some(along))
        }
        None => (None, None),
    };
    let nominal_jump = triple
        .interfaces
        .first()
        .map_or(0.0, |f| f.jump.iter().zip(&triple.rotation.col(d - 1)).map(|(a, b)| a * b).sum());

    let gg = gamma_gap(&y, eps, k, &triple, w).map_err(|e| e.at_stage("gamma"))?;
    let min_gap = raw.min_same_phase_gap();
    let row = ConvergenceRow {
        eps,
        cells: y.geom.dims.clone(),
        under_resolved: !matches!(cfg.scenario, Scenario::CustomField { .. }) && !cfg.resolution.resolves(eps),
        e_eps,
        e_limit: gg.e_limit,
        gap: gg.gap,
        jump_height,
        jump,
        nominal_jump,
        n_components: part.components.len(),
        n_components_a: part.count_phase(WellLabel::A),
        n_components_b: part.count_phase(WellLabel::B),
        n_components_before_coarsening: raw.components.len(),
        min_gap_before_coarsening: min_gap.is_finite().then_some(min_gap),
        residual: dec.residual_l2,
        perimeter: dec.perimeter(),
        rotation: dec.r.to_row_vec(),
        max_gradient_jump: gg.max_gradient_jump,
        h2_unresolved: gg.h2_unresolved,
    };
    log::info!("eps={eps}: E={e_eps:.6} gap={:.6} components={}", row.gap, row.n_components);
    Ok(row)
}

/// Runs every sweep point; custom inputs are resolved against `workdir`.
pub fn run_convergence(cfg: &ExperimentConfig, workdir: &Path) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let w = cfg.density()?;
    let k = analytic_k(&ReducedDensity::new(w), 20_000)?;
    let custom = match &cfg.scenario {
        Scenario::CustomField { field, triple } => {
            let y = load_field(&workdir.join(field)).map_err(|e| e.at_stage("generate"))?;
            let text =
                std::fs::read_to_string(workdir.join(triple)).map_err(|e| Error::from(e).at_stage("generate"))?;
            let t = LimitingTriple::parse(&text).map_err(|e| e.at_stage("generate"))?;
            Some((y, t))
        }
        _ => None,
    };
    let rows: Vec<ConvergenceRow> =
        cfg.eps.par_iter().map(|&eps| run_row(cfg, &w, k, eps, custom.as_ref())).collect::<Result<_>>()?;
    let gap_rate = log_slope(rows.iter().map(|r| (r.eps, r.gap)));
    let jump_rate = log_slope(rows.iter().filter_map(|r| r.jump_height.map(|j| (r.eps, j.abs()))));
    Ok(ConvergenceReport {
        scenario: cfg.scenario.name(),
        config: cfg.clone(),
        analytic_k: k,
        rows,
        gap_rate,
        jump_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::generate::ResolutionRule;

    fn small(scenario: Scenario, eps: Vec<f64>) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(scenario, eps);
        cfg.resolution = ResolutionRule { cells_per_band: 8, min_cells: 64, max_cells: 256 };
        cfg
    }

    #[test]
    fn slope_fit() {
        let s = log_slope([(0.1, 0.02), (0.05, 0.005), (0.025, 0.00125)].into_iter()).unwrap();
        assert!((s - 2.0).abs() < 1e-12);
        assert!(log_slope([(0.1, -1.0), (0.05, 1.0)].into_iter()).is_none());
    }

    #[test]
    fn nominal_triples_are_admissible() {
        for sc in [
            Scenario::ExampleEx { l: 0.5 },
            Scenario::ExampleEx { l: 1.0 },
            Scenario::ExampleEx { l: 2.0 },
            Scenario::SingleInterface,
            Scenario::DoubleInterface { w_rule: crate::profile::WRule { a: 1.0, p: 1.0 } },
        ] {
            let t = nominal_triple(&sc, 0.1, 1.0).unwrap();
            assert!(crate::gamma::check_admissible(&t).unwrap().ok, "{sc:?}");
        }
    }

    #[test]
    fn example_l1_report() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(Scenario::ExampleEx { l: 1.0 }, vec![0.3, 0.2]);
        cfg.csv = Some("r.csv".into());
        cfg.json = Some("r.json".into());
        let rep = run_convergence(&cfg, dir.path()).unwrap();
        assert_eq!(rep.rows.len(), 2);
        assert_eq!(rep.rows[0].eps, 0.3);
        for r in &rep.rows {
            assert!(r.gap >= -1e-9);
            assert_eq!(r.n_components_a, 1);
            let j = r.jump_height.unwrap();
            assert!((j - 2.0).abs() < 0.2, "{r:?}");
        }
        let files = rep.write(dir.path()).unwrap();
        assert_eq!(files.len(), 2);
        let csv = std::fs::read_to_string(&files[0]).unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("eps,cells"));
        let again = run_convergence(&cfg, dir.path()).unwrap();
        assert_eq!(again.to_csv(), csv);
        assert_eq!(again.to_json().unwrap(), std::fs::read_to_string(&files[1]).unwrap());
    }

    #[test]
    fn custom_field_scenario() {
        let dir = tempfile::tempdir().unwrap();
        let g = GridGeometry::on_box(&[32, 64], &[0.0, 0.0], &[1.0, 2.0]).unwrap();
        let spec = LaminateSpec { kappa: 1.0, bands: vec![(WellLabel::A, 0.0, 1.0), (WellLabel::B, 1.0, 2.0)] };
        let y = generate_laminate(&spec, &SqMat::identity(2), 0.04, &g).unwrap();
        crate::io::save_field(&y, &dir.path().join("y.twg")).unwrap();
        let t = nominal_triple(&Scenario::SingleInterface, 0.2, 1.0).unwrap();
        std::fs::write(dir.path().join("t.cfg"), t.to_text()).unwrap();
        let cfg = small(Scenario::CustomField { field: "y.twg".into(), triple: "t.cfg".into() }, vec![0.2]);
        let rep = run_convergence(&cfg, dir.path()).unwrap();
        assert_eq!(rep.rows.len(), 1);
        assert!(rep.rows[0].gap > 0.0);
        let missing = small(Scenario::CustomField { field: "nope.twg".into(), triple: "t.cfg".into() }, vec![0.2]);
        match run_convergence(&missing, dir.path()) {
            Err(Error::Stage { stage, .. }) => assert_eq!(stage, "generate"),
            o => panic!("{o:?}"),
        }
    }
}
