//! Sampled checks of the local expansion bounds for the density.

use serde::{Deserialize, Serialize};

use crate::density::{Density, TwoWellDensity};
use crate::error::{Error, Result};
use crate::linalg::SqMat;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaylorRegion {
    /// `dist(F, wells) < δ`
    NearWells,
    FarFromWells,
}

/// Constants a single sample `(F, G)` requires.
///
/// Near the wells the inequality is
/// `W(F+G) ≤ W(F) + C√W(F)|G| + ½D²W(F)G:G + ρ|G|²`;
/// away from them it is `W(F+G) ≤ W(F) + C_δ√W(F)|G|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaylorReport {
    pub region: TaylorRegion,
    pub w_f: f64,
    pub w_fg: f64,
    /// `W(F+G) − W(F) − ½D²W(F)G:G` near the wells, `W(F+G) − W(F)` otherwise.
    pub remainder: f64,
    /// `C` needed with `ρ = 0` (near) or `C_δ` needed (far).
    pub c_required: f64,
    /// `ρ` needed with `C = 0`; zero away from the wells.
    pub rho_required: f64,
}

impl TaylorReport {
    /// Whether the inequality holds with the given constants.
    pub fn holds_with(&self, c: f64, rho: f64, g_norm: f64) -> bool {
        let slack = 1e-14 * (1.0 + self.w_fg);
        match self.region {
            TaylorRegion::NearWells => self.remainder <= c * self.w_f.sqrt() * g_norm + rho * g_norm * g_norm + slack,
            TaylorRegion::FarFromWells => self.remainder <= c * self.w_f.sqrt() * g_norm + slack,
        }
    }
}

pub fn taylor_bounds_check(w: &TwoWellDensity, f: &SqMat, g: &SqMat, delta: f64) -> Result<TaylorReport> {
    if !(delta > 0.0 && delta <= w.delta_w() / 2.0) {
        return Err(Error::Domain(format!("delta must lie in (0, {}]", w.delta_w() / 2.0)));
    }
    let gn = g.norm();
    if gn >= delta {
        return Err(Error::Domain(format!("|G| = {gn} must be below delta = {delta}")));
    }
    if !f.is_finite() || !g.is_finite() || f.dim() != w.d || g.dim() != w.d {
        return Err(Error::InvalidInput("F and G must be finite d×d matrices".into()));
    }
    let w_f = w.eval(f);
    let w_fg = w.eval(&(*f + *g));
    let ratio = |num: f64, den: f64| {
        if num <= 0.0 {
            0.0
        } else if den > 0.0 {
            num / den
        } else {
            f64::INFINITY
        }
    };
    if w.dist_to_wells(f) < delta {
        let n = w.d * w.d;
        let hess = w.hessian(f);
        let gv = g.to_row_vec();
        let mut quad = 0.0;
        for a in 0..n {
            for b in 0..n {
                quad += hess[a * n + b] * gv[a] * gv[b];
            }
        }
        let remainder = w_fg - w_f - 0.5 * quad;
        Ok(TaylorReport {
            region: TaylorRegion::NearWells,
            w_f,
            w_fg,
            remainder,
            c_required: ratio(remainder, w_f.sqrt() * gn),
            rho_required: ratio(remainder, gn * gn),
        })
    } else {
        let remainder = w_fg - w_f;
        Ok(TaylorReport {
            region: TaylorRegion::FarFromWells,
            w_f,
            w_fg,
            remainder,
            c_required: ratio(remainder, w_f.sqrt() * gn),
            rho_required: 0.0,
        })
    }
}

/// Smallest constants making both inequalities hold on a sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TaylorFit {
    pub near_samples: usize,
    pub far_samples: usize,
    pub c: f64,
    pub rho: f64,
    pub c_delta: f64,
}

/// Fits `ρ` on samples sitting exactly on a well, then `C` on the remaining near samples
/// with that `ρ`, and `C_δ` on the far samples.
pub fn taylor_bounds_fit(w: &TwoWellDensity, samples: &[(SqMat, SqMat)], delta: f64) -> Result<TaylorFit> {
    let mut reports = Vec::with_capacity(samples.len());
    for (f, g) in samples {
        reports.push((taylor_bounds_check(w, f, g, delta)?, g.norm()));
    }
    let mut fit = TaylorFit::default();
    for (r, _) in &reports {
        match r.region {
            TaylorRegion::NearWells => {
                fit.near_samples += 1;
                if r.w_f <= 1e-300 {
                    fit.rho = fit.rho.max(r.rho_required);
                }
            }
            TaylorRegion::FarFromWells => {
                fit.far_samples += 1;
                fit.c_delta = fit.c_delta.max(r.c_required);
            }
        }
    }
    for (r, gn) in &reports {
        if r.region == TaylorRegion::NearWells && r.w_f > 1e-300 {
            let excess = r.remainder - fit.rho * gn * gn;
            if excess > 0.0 {
                fit.c = fit.c.max(excess / (r.w_f.sqrt() * gn));
            }
        }
    }
    Ok(fit)
}
