//! Limited-memory BFGS with Armijo backtracking and frozen coordinates.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::density::Density;
use crate::energy::{energy_eval, energy_gradient, EnergyParams};
use crate::error::{Error, Result};
use crate::grid::GridField;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub memory: usize,
    pub armijo: f64,
    pub shrink: f64,
    pub max_halvings: usize,
    /// Stop once `stall_iters` consecutive steps each lower the objective by at most
    /// `f_tol · max(|f|, 1)`.
    #[serde(default = "default_f_tol")]
    pub f_tol: f64,
    #[serde(default = "default_stall_iters")]
    pub stall_iters: usize,
}

fn default_f_tol() -> f64 {
    1e-14
}

fn default_stall_iters() -> usize {
    10
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            max_iter: 5000,
            grad_tol: 1e-8,
            memory: 10,
            armijo: 1e-4,
            shrink: 0.5,
            max_halvings: 60,
            f_tol: default_f_tol(),
            stall_iters: default_stall_iters(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOutcome {
    pub x: Vec<f64>,
    pub energy: f64,
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn project(g: &mut [f64], free: &[bool]) {
    for (gi, &f) in g.iter_mut().zip(free) {
        if !f {
            *gi = 0.0;
        }
    }
}

fn max_norm(g: &[f64]) -> f64 {
    g.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Minimises `f` over the coordinates flagged in `free`.
///
/// `f(x, g)` returns the objective and writes its gradient into `g`.
/// Returns `Error::Stagnation` when no step along either the quasi-Newton or
/// the steepest-descent direction decreases the objective.
pub fn lbfgs<F>(mut f: F, x0: &[f64], free: &[bool], opts: &MinimizeOptions) -> Result<MinimizeOutcome>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    assert_eq!(free.len(), n);
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    project(&mut g, free);
    let mut trace = vec![fx];
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut xn = vec![0.0; n];
    let mut gn = vec![0.0; n];

    let mut iter = 0;
    let mut stall = 0;
    loop {
        let gnorm = max_norm(&g);
        if !fx.is_finite() {
            return Err(Error::InvalidInput("objective is not finite".into()));
        }
        if gnorm <= opts.grad_tol || (opts.stall_iters > 0 && stall >= opts.stall_iters) {
            return Ok(MinimizeOutcome { x, energy: fx, trace, iterations: iter, converged: true, grad_norm: gnorm });
        }
        if iter >= opts.max_iter {
            return Ok(MinimizeOutcome { x, energy: fx, trace, iterations: iter, converged: false, grad_norm: gnorm });
        }

        let mut accepted = false;
        for attempt in 0..2 {
            let mut dir: Vec<f64> = g.iter().map(|v| -v).collect();
            if attempt == 0 && !hist.is_empty() {
                two_loop(&mut dir, &hist);
                project(&mut dir, free);
            }
            let mut slope = dot(&g, &dir);
            if slope >= 0.0 {
                dir = g.iter().map(|v| -v).collect();
                slope = dot(&g, &dir);
            }
            let mut step = if attempt == 0 && !hist.is_empty() { 1.0 } else { (1.0 / max_norm(&dir)).min(1.0) };
            for _ in 0..=opts.max_halvings {
                for i in 0..n {
                    xn[i] = x[i] + step * dir[i];
                }
                let fnew = f(&xn, &mut gn);
                if fnew.is_finite() && fnew <= fx + opts.armijo * step * slope && fnew <= fx {
                    project(&mut gn, free);
                    let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
                    let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
                    let sy = dot(&s, &yv);
                    if sy > 1e-300 {
                        if hist.len() == opts.memory {
                            hist.pop_front();
                        }
                        hist.push_back((s, yv, 1.0 / sy));
                    }
                    if fx - fnew <= opts.f_tol * fx.abs().max(1.0) {
                        stall += 1;
                    } else {
                        stall = 0;
                    }
                    std::mem::swap(&mut x, &mut xn);
                    std::mem::swap(&mut g, &mut gn);
                    fx = fnew;
                    accepted = true;
                    break;
                }
                step *= opts.shrink;
            }
            if accepted {
                break;
            }
            hist.clear();
        }
        if !accepted {
            return Err(Error::Stagnation { iterations: iter, energy: fx, trace, last: x });
        }
        iter += 1;
        trace.push(fx);
    }
}

fn two_loop(q: &mut [f64], hist: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) {
    let mut alphas = vec![0.0; hist.len()];
    for (k, (s, y, rho)) in hist.iter().enumerate().rev() {
        let a = rho * dot(s, q);
        alphas[k] = a;
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
    }
    let (s, y, _) = hist.back().expect("non-empty history");
    let gamma = dot(s, y) / dot(y, y);
    for qi in q.iter_mut() {
        *qi *= gamma;
    }
    for (k, (s, y, rho)) in hist.iter().enumerate() {
        let b = rho * dot(y, q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (alphas[k] - b) * si;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldMinimum {
    pub y: GridField,
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
}

/// Minimises the discrete energy with nodes flagged in `frozen` held fixed.
pub fn minimize(
    y0: &GridField,
    w: &dyn Density,
    p: &EnergyParams,
    frozen: &[bool],
    opts: &MinimizeOptions,
) -> Result<FieldMinimum> {
    if frozen.len() != y0.geom.node_count() {
        return Err(Error::InvalidInput("frozen mask length differs from node count".into()));
    }
    energy_eval(y0, w, p)?;
    let nc = y0.ncomp;
    let free: Vec<bool> = frozen.iter().flat_map(|&f| std::iter::repeat_n(!f, nc)).collect();
    let mut work = y0.clone();
    let out = lbfgs(
        |x, g| {
            work.values.copy_from_slice(x);
            let e = energy_eval(&work, w, p).map(|e| e.total).unwrap_or(f64::NAN);
            match energy_gradient(&work, w, p) {
                Ok(gr) => g.copy_from_slice(&gr.values),
                Err(_) => g.iter_mut().for_each(|v| *v = f64::NAN),
            }
            e
        },
        &y0.values,
        &free,
        opts,
    )?;
    let y = GridField::new(y0.geom.clone(), nc, out.x)?;
    Ok(FieldMinimum {
        y,
        trace: out.trace,
        iterations: out.iterations,
        converged: out.converged,
        grad_norm: out.grad_norm,
    })
}
