//! Experiment configuration in the sectioned text format.
//!
//! ```text
//! [density]  kappa=1 c=1 variant=hard-min
//! [sweep]    eps=0.1,0.05,0.025 cells_per_band=8 min_cells=128 max_cells=1024
//! [scenario] kind=example-ex l=1 threshold=10 offset=3
//! [output]   csv=report.csv json=report.json
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::generate::{check_exponent, ResolutionRule};
use crate::density::{DensityVariant, TwoWellDensity};
use crate::error::{invalid, Error, Result};
use crate::profile::WRule;
use crate::textfmt;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Scenario {
    /// Intermediate layer of half-width `ε^l`.
    ExampleEx { l: f64 },
    /// A below, B above `x₂ = 1`.
    SingleInterface,
    /// B layer of width `w(ε)` centred at `x₂ = 1` inside A.
    DoubleInterface { w_rule: WRule },
    /// A stored field evaluated against a stored limiting triple.
    CustomField { field: PathBuf, triple: PathBuf },
}

impl Scenario {
    pub fn name(&self) -> String {
        match self {
            Scenario::ExampleEx { l } => format!("example-ex(l={l})"),
            Scenario::SingleInterface => "single-interface".into(),
            Scenario::DoubleInterface { w_rule } => format!("double-interface(w={}*eps^{})", w_rule.a, w_rule.p),
            Scenario::CustomField { .. } => "custom-field".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kappa: f64,
    pub c: f64,
    pub variant: DensityVariant,
    /// Strictly decreasing.
    pub eps: Vec<f64>,
    pub resolution: ResolutionRule,
    pub scenario: Scenario,
    /// Coarsening threshold on `|t_i − t_j| / ε`.
    pub threshold: f64,
    /// Rows between an interface zone and the jump evaluation rows.
    pub offset: usize,
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(scenario: Scenario, eps: Vec<f64>) -> Self {
        ExperimentConfig {
            kappa: 1.0,
            c: 1.0,
            variant: DensityVariant::HardMin,
            eps,
            resolution: ResolutionRule::default(),
            scenario,
            threshold: 10.0,
            offset: 3,
            csv: None,
            json: None,
        }
    }

    pub fn density(&self) -> Result<TwoWellDensity> {
        TwoWellDensity::new(2, self.kappa, self.c, self.variant)
    }

    pub fn validate(&self) -> Result<()> {
        self.density()?;
        if self.eps.is_empty() {
            return invalid("eps list is empty");
        }
        if self.eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return invalid(format!("eps values must lie in (0, 1): {:?}", self.eps));
        }
        if self.eps.windows(2).any(|w| w[1] >= w[0]) {
            return invalid(format!("eps list must be strictly decreasing: {:?}", self.eps));
        }
        self.resolution.validate()?;
        if !(self.threshold >= 0.0 && self.threshold.is_finite()) {
            return invalid(format!("threshold must be non-negative, got {}", self.threshold));
        }
        if self.offset < 3 {
            return invalid(format!("jump offset must be at least 3, got {}", self.offset));
        }
        match &self.scenario {
            Scenario::ExampleEx { l } => check_exponent(*l)?,
            Scenario::DoubleInterface { w_rule } => w_rule.check()?,
            _ => {}
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::new(Scenario::SingleInterface, vec![0.1, 0.05, 0.025]);
        let mut kind = None;
        let mut l = None;
        let mut w_rule = None;
        let mut field = None;
        let mut triple = None;
        for s in textfmt::parse(text)? {
            match s.name.as_str() {
                "density" => {
                    s.only_keys(&["kappa", "c", "variant"])?;
                    cfg.kappa = s.f64("kappa")?.unwrap_or(cfg.kappa);
                    cfg.c = s.f64("c")?.unwrap_or(cfg.c);
                    if let Some(v) = s.get("variant") {
                        cfg.variant = v.parse().or_else(|e: Error| s.err(e.to_string()))?;
                    }
                }
                "sweep" => {
                    s.only_keys(&["eps", "cells_per_band", "min_cells", "max_cells"])?;
                    cfg.eps = s.f64_list("eps")?.unwrap_or(cfg.eps);
                    let r = &mut cfg.resolution;
                    r.cells_per_band = s.usize("cells_per_band")?.unwrap_or(r.cells_per_band);
                    r.min_cells = s.usize("min_cells")?.unwrap_or(r.min_cells);
                    r.max_cells = s.usize("max_cells")?.unwrap_or(r.max_cells);
                }
                "scenario" => {
                    s.only_keys(&["kind", "l", "w_rule", "field", "triple", "threshold", "offset"])?;
                    kind = s.get("kind").map(str::to_string).or(kind);
                    l = s.f64("l")?.or(l);
                    if let Some(r) = s.get("w_rule") {
                        w_rule = Some(WRule::parse(r).or_else(|e| s.err(e.to_string()))?);
                    }
                    field = s.get("field").map(PathBuf::from).or(field);
                    triple = s.get("triple").map(PathBuf::from).or(triple);
                    cfg.threshold = s.f64("threshold")?.unwrap_or(cfg.threshold);
                    cfg.offset = s.usize("offset")?.unwrap_or(cfg.offset);
                }
                "output" => {
                    s.only_keys(&["csv", "json"])?;
                    cfg.csv = s.get("csv").map(PathBuf::from).or(cfg.csv);
                    cfg.json = s.get("json").map(PathBuf::from).or(cfg.json);
                }
                o => return s.err(format!("unknown section `{o}`")),
            }
        }
        cfg.scenario = match kind.as_deref().unwrap_or("single-interface") {
            "example-ex" => Scenario::ExampleEx { l: l.unwrap_or(1.0) },
            "single-interface" => Scenario::SingleInterface,
            "double-interface" => Scenario::DoubleInterface { w_rule: w_rule.unwrap_or(WRule { a: 1.0, p: 1.0 }) },
            "custom-field" => match (field, triple) {
                (Some(field), Some(triple)) => Scenario::CustomField { field, triple },
                _ => return invalid("custom-field needs `field` and `triple`"),
            },
            o => return invalid(format!("unknown scenario `{o}`")),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_full_config() {
        let cfg = ExperimentConfig::parse(
            "[density] kappa=0.5 c=2 variant=smooth-harmonic\n[sweep] eps=0.1,0.05\n max_cells=512\n\
             [scenario] kind=double-interface w_rule=2eps threshold=8\n[output] csv=out.csv\n",
        )
        .unwrap();
        assert_eq!(cfg.kappa, 0.5);
        assert_eq!(cfg.variant, DensityVariant::SmoothHarmonic);
        assert_eq!(cfg.eps, vec![0.1, 0.05]);
        assert_eq!(cfg.resolution.max_cells, 512);
        assert_eq!(cfg.scenario, Scenario::DoubleInterface { w_rule: WRule { a: 2.0, p: 1.0 } });
        assert_eq!(cfg.threshold, 8.0);
        assert_eq!(cfg.csv, Some(PathBuf::from("out.csv")));
        let ex = ExperimentConfig::parse("[scenario] kind=example-ex l=1/2").unwrap();
        assert_eq!(ex.scenario, Scenario::ExampleEx { l: 0.5 });
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            "[sweep] eps=0.05,0.1",
            "[sweep] eps=0.1,0.1",
            "[scenario] kind=example-ex l=3",
            "[scenario] kind=double-interface w_rule=eps^2",
            "[scenario] kind=custom-field field=a.twg",
            "[scenario] kind=nope",
            "[density] kappa=-1",
            "[sweep] cells_per_band=4",
            "[plot] x=1",
            "[density] colour=red",
        ] {
            assert!(ExperimentConfig::parse(text).is_err(), "{text}");
        }
    }
}
