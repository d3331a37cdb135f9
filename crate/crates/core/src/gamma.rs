//! Symbolic limiting triples `(y, u, P)` and the sharp-interface limiting energy.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::density::{density_hessian_at_well, TwoWellDensity, WellLabel};
use crate::energy::{energy_eval, EnergyParams};
use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::linalg::SqMat;
use crate::textfmt;

const Z_TOL: f64 = 1e-12;
const DIR_TOL: f64 = 1e-9;
const JUMP_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterfaceKind {
    Grad,
    Disp,
    Partition,
}

impl fmt::Display for InterfaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InterfaceKind::Grad => "grad",
            InterfaceKind::Disp => "disp",
            InterfaceKind::Partition => "partition",
        })
    }
}

impl std::str::FromStr for InterfaceKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "grad" => Ok(InterfaceKind::Grad),
            "disp" => Ok(InterfaceKind::Disp),
            "partition" => Ok(InterfaceKind::Partition),
            o => Err(Error::InvalidInput(format!("unknown interface kind `{o}`"))),
        }
    }
}

/// A horizontal band `z0 < x_d < z1` where `∇y = R M` and `∇u = grad_u`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub phase: WellLabel,
    pub z0: f64,
    pub z1: f64,
    pub grad_u: SqMat,
}

/// A band boundary at height `z` with the jump of `u` measured at the cross-section origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interface {
    pub z: f64,
    pub jump: Vec<f64>,
    pub kinds: Vec<InterfaceKind>,
}

impl Interface {
    pub fn has(&self, k: InterfaceKind) -> bool {
        self.kinds.contains(&k)
    }
}

/// Piecewise-affine laminate `y`, band-wise affine `u` and a band-aligned partition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitingTriple {
    pub d: usize,
    /// Domain lengths along the first `d − 1` axes; the domain starts at the origin.
    pub cross_section: Vec<f64>,
    pub rotation: SqMat,
    pub bands: Vec<Band>,
    pub interfaces: Vec<Interface>,
}

/// Facts derived at each internal band boundary.
#[derive(Clone, Debug, PartialEq)]
struct Boundary {
    z: f64,
    lower: usize,
    jump: Vec<f64>,
    grad: bool,
    disp: bool,
    partition: bool,
    declared: Option<usize>,
}

impl LimitingTriple {
    pub fn area(&self) -> f64 {
        self.cross_section.iter().product()
    }

    pub fn height(&self) -> (f64, f64) {
        (self.bands.first().map_or(0.0, |b| b.z0), self.bands.last().map_or(0.0, |b| b.z1))
    }

    /// Checks the band tiling and interface placement.
    pub fn validate(&self) -> Result<()> {
        let d = self.d;
        let structural = |m: String| Err(Error::InvalidInput(format!("malformed triple: {m}")));
        if !(2..=3).contains(&d) {
            return structural(format!("dimension {d} not in 2..=3"));
        }
        if self.cross_section.len() != d - 1 || self.cross_section.iter().any(|&l| !(l > 0.0)) {
            return structural("cross-section needs d − 1 positive lengths".into());
        }
        if self.rotation.dim() != d || !self.rotation.is_rotation(1e-9) {
            return structural("rotation is not in SO(d)".into());
        }
        if self.bands.is_empty() {
            return structural("no bands".into());
        }
        for (k, b) in self.bands.iter().enumerate() {
            if !(b.z1 > b.z0) {
                return structural(format!("band {k} has non-positive height"));
            }
            if b.grad_u.dim() != d || !b.grad_u.is_finite() {
                return structural(format!("band {k} has a bad displacement gradient"));
            }
            if k > 0 && (self.bands[k - 1].z1 - b.z0).abs() > Z_TOL {
                return structural(format!("bands {} and {k} do not meet", k - 1));
            }
        }
        for (i, f) in self.interfaces.iter().enumerate() {
            if f.jump.len() != d || f.jump.iter().any(|v| !v.is_finite()) {
                return structural(format!("interface {i} needs a finite jump with {d} entries"));
            }
            let hits = self.bands[..self.bands.len() - 1].iter().filter(|b| (b.z1 - f.z).abs() <= Z_TOL).count();
            if hits != 1 {
                return structural(format!("interface {i} at z = {} is not an internal band boundary", f.z));
            }
            if self.interfaces[..i].iter().any(|g| (g.z - f.z).abs() <= Z_TOL) {
                return structural(format!("interface {i} duplicates an earlier one"));
            }
        }
        for b in self.boundaries() {
            if !b.grad && !b.disp && !b.partition {
                return structural(format!(
                    "equal-phase bands meet at z = {} without a displacement jump or partition boundary",
                    b.z
                ));
            }
        }
        Ok(())
    }

    fn boundaries(&self) -> Vec<Boundary> {
        (0..self.bands.len().saturating_sub(1))
            .map(|k| {
                let z = self.bands[k].z1;
                let declared = self.interfaces.iter().position(|f| (f.z - z).abs() <= Z_TOL);
                let jump = declared.map_or_else(|| vec![0.0; self.d], |i| self.interfaces[i].jump.clone());
                let norm = jump.iter().map(|v| v * v).sum::<f64>().sqrt();
                Boundary {
                    z,
                    lower: k,
                    grad: self.bands[k].phase != self.bands[k + 1].phase,
                    disp: norm > JUMP_TOL,
                    partition: declared.is_some_and(|i| self.interfaces[i].has(InterfaceKind::Partition)),
                    jump,
                    declared,
                }
            })
            .collect()
    }

    /// Partition component of every band.
    pub fn band_components(&self) -> Vec<usize> {
        let mut out = vec![0; self.bands.len()];
        let mut j = 0;
        for b in self.boundaries() {
            if b.partition {
                j += 1;
            }
            out[b.lower + 1] = j;
        }
        out
    }

    /// Offsets `b_k` of the continuous laminate `y = R M_k x + b_k`.
    fn y_offsets(&self, w: &TwoWellDensity) -> Vec<Vec<f64>> {
        let d = self.d;
        let mut out = vec![vec![0.0; d]];
        for k in 1..self.bands.len() {
            let z = self.bands[k].z0;
            let diff = self.rotation * (w.well(self.bands[k - 1].phase) - w.well(self.bands[k].phase));
            let prev = out[k - 1].clone();
            out.push((0..d).map(|i| prev[i] + diff.get(i, d - 1) * z).collect());
        }
        out
    }

    /// Offsets `c_k` of `u = G_k x + c_k` from the declared jumps.
    fn u_offsets(&self) -> Vec<Vec<f64>> {
        let d = self.d;
        let bounds = self.boundaries();
        let mut out = vec![vec![0.0; d]];
        for b in &bounds {
            let k = b.lower;
            let dg = self.bands[k + 1].grad_u - self.bands[k].grad_u;
            let prev = out[k].clone();
            out.push((0..d).map(|i| prev[i] + b.jump[i] - dg.get(i, d - 1) * b.z).collect());
        }
        out
    }

    /// The same triple with every nodal quantity rotated by `q`.
    pub fn rotated(&self, q: &SqMat) -> Self {
        let mut t = self.clone();
        t.rotation = *q * self.rotation;
        for b in t.bands.iter_mut() {
            b.grad_u = *q * b.grad_u;
        }
        for f in t.interfaces.iter_mut() {
            f.jump = q.mul_vec(&f.jump);
        }
        t
    }

    pub fn parse(text: &str) -> Result<Self> {
        let sections = textfmt::parse(text)?;
        let head = sections
            .iter()
            .find(|s| s.name == "triple")
            .ok_or(Error::Parse { line: 1, msg: "missing [triple] section".into() })?;
        head.only_keys(&["d", "cross_section", "rotation"])?;
        let d = head.usize("d")?.ok_or(Error::Parse { line: head.line, msg: "[triple] is missing `d`".into() })?;
        if !(2..=3).contains(&d) {
            return head.err(format!("dimension {d} not in 2..=3"));
        }
        let cross_section = head.f64_list("cross_section")?.unwrap_or_else(|| vec![1.0; d - 1]);
        let rotation = match head.f64_list("rotation")? {
            Some(v) if v.len() == d * d => SqMat::from_row_slice(d, &v),
            Some(_) => return head.err(format!("rotation needs {} entries", d * d)),
            None => SqMat::identity(d),
        };
        let mut bands = Vec::new();
        let mut interfaces = Vec::new();
        for s in &sections {
            match s.name.as_str() {
                "triple" => {}
                "band" => {
                    s.only_keys(&["phase", "z0", "z1", "grad_u"])?;
                    let phase: WellLabel = s.require("phase")?.parse().or_else(|e: Error| s.err(e.to_string()))?;
                    let grad_u = match s.f64_list("grad_u")? {
                        Some(v) if v.len() == d * d => SqMat::from_row_slice(d, &v),
                        Some(_) => return s.err(format!("grad_u needs {} entries", d * d)),
                        None => SqMat::zeros(d),
                    };
                    bands.push(Band { phase, z0: s.req_f64("z0")?, z1: s.req_f64("z1")?, grad_u });
                }
                "interface" => {
                    s.only_keys(&["z", "jump", "kind"])?;
                    let jump = s.f64_list("jump")?.unwrap_or_else(|| vec![0.0; d]);
                    let mut kinds = Vec::new();
                    for k in s.get("kind").unwrap_or("").split([',', '+', '|']).filter(|k| !k.trim().is_empty()) {
                        let k: InterfaceKind = k.parse().or_else(|e: Error| s.err(e.to_string()))?;
                        if !kinds.contains(&k) {
                            kinds.push(k);
                        }
                    }
                    kinds.sort();
                    interfaces.push(Interface { z: s.req_f64("z")?, jump, kinds });
                }
                o => return s.err(format!("unknown section `{o}`")),
            }
        }
        bands.sort_by(|a, b| a.z0.total_cmp(&b.z0));
        interfaces.sort_by(|a, b| a.z.total_cmp(&b.z));
        let t = LimitingTriple { d, cross_section, rotation, bands, interfaces };
        t.validate()?;
        Ok(t)
    }

    pub fn to_text(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut s = format!(
            "[triple] d={} cross_section={} rotation={}\n",
            self.d,
            list(&self.cross_section),
            list(&self.rotation.to_row_vec())
        );
        for b in &self.bands {
            s += &format!("[band] phase={} z0={} z1={} grad_u={}\n", b.phase, b.z0, b.z1, list(&b.grad_u.to_row_vec()));
        }
        for f in &self.interfaces {
            let kinds = f.kinds.iter().map(|k| k.to_string()).collect::<Vec<_>>().join("+");
            s += &format!("[interface] z={} jump={}", f.z, list(&f.jump));
            if !kinds.is_empty() {
                s += &format!(" kind={kinds}");
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// `a` constant jump, `b` jump direction, `c` gradient jump outside the partition boundary,
    /// `tag` declared kind contradicting the bands.
    pub rule: String,
    pub interface: usize,
    pub z: f64,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

/// Checks constant jumps, jump directions and `J_∇y ⊆ ∂P`.
pub fn check_admissible(t: &LimitingTriple) -> Result<AdmissibilityReport> {
    t.validate()?;
    let d = t.d;
    let red = t.rotation.col(d - 1);
    let mut violations = Vec::new();
    for (idx, b) in t.boundaries().iter().enumerate() {
        let mut push = |rule: &str, message: String| {
            violations.push(Violation { rule: rule.into(), interface: b.declared.unwrap_or(idx), z: b.z, message })
        };
        let lower = &t.bands[b.lower];
        let upper = &t.bands[b.lower + 1];
        if let Some(i) = b.declared {
            if t.interfaces[i].has(InterfaceKind::Grad) && !b.grad {
                push("tag", "declared gradient jump between bands of equal phase".into());
            }
        }
        if b.partition {
            continue;
        }
        let dg = upper.grad_u - lower.grad_u;
        let tangential = (0..d - 1).map(|j| dg.col(j).iter().map(|v| v.abs()).fold(0.0, f64::max)).fold(0.0, f64::max);
        if tangential > DIR_TOL {
            push("a", format!("jump of u varies along the interface (tangential gradient mismatch {tangential:e})"));
        }
        if b.grad {
            push("c", "gradient jump is not part of the partition boundary".into());
            continue;
        }
        let along: f64 = b.jump.iter().zip(&red).map(|(a, e)| a * e).sum();
        let orth = b.jump.iter().zip(&red).map(|(a, e)| (a - along * e).powi(2)).sum::<f64>().sqrt();
        let sign = if lower.phase == WellLabel::A { 1.0 } else { -1.0 };
        if orth > DIR_TOL || sign * along < -DIR_TOL {
            let want = if sign > 0.0 { "[0,∞)·R e_d" } else { "(−∞,0]·R e_d" };
            push("b", format!("jump {:?} in {} bands is not in {want}", b.jump, lower.phase));
        }
    }
    Ok(AdmissibilityReport { ok: violations.is_empty(), violations })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaEnergyReport {
    pub elastic: f64,
    pub single_surface: f64,
    pub double_surface: f64,
    pub total: f64,
}

/// Linearised elastic energy plus `K` per single and `2K` per double interface area.
pub fn limiting_energy(t: &LimitingTriple, k: f64, w: &TwoWellDensity) -> Result<GammaEnergyReport> {
    let rep = check_admissible(t)?;
    if !rep.ok {
        return Err(Error::NotAdmissible(
            rep.violations
                .iter()
                .map(|v| format!("({}) z = {}: {}", v.rule, v.z, v.message))
                .collect::<Vec<_>>()
                .join("; "),
        ));
    }
    if w.d != t.d {
        return Err(Error::InvalidInput("density and triple dimensions differ".into()));
    }
    if !(k.is_finite() && k >= 0.0) {
        return Err(Error::InvalidInput(format!("surface constant must be non-negative, got {k}")));
    }
    let area = t.area();
    let mut forms = Vec::new();
    for m in [WellLabel::A, WellLabel::B] {
        forms.push(density_hessian_at_well(w, m, &t.rotation)?);
    }
    let mut elastic = 0.0;
    for b in &t.bands {
        let q = forms[(b.phase == WellLabel::B) as usize].q_lin(&b.grad_u);
        elastic += q.max(0.0) * area * (b.z1 - b.z0);
    }
    let bounds = t.boundaries();
    let single = bounds.iter().filter(|b| b.grad).count() as f64;
    let double = bounds.iter().filter(|b| !b.grad && (b.disp || b.partition)).count() as f64;
    let single_surface = k * area * single;
    let double_surface = 2.0 * k * area * double;
    Ok(GammaEnergyReport { elastic, single_surface, double_surface, total: elastic + single_surface + double_surface })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripleDistance {
    /// L² norm of `u₁ − u₂ − (S y + Σ t_j χ_j)` at the optimum; infinite if `(y, P)` differ.
    pub residual: f64,
    pub equivalent: bool,
    pub skew: Option<SqMat>,
    pub translations: Vec<Vec<f64>>,
}

fn same_structure(a: &LimitingTriple, b: &LimitingTriple) -> bool {
    a.d == b.d
        && a.cross_section == b.cross_section
        && (a.rotation - b.rotation).max_abs() <= 1e-12
        && a.bands.len() == b.bands.len()
        && a.bands
            .iter()
            .zip(&b.bands)
            .all(|(x, y)| x.phase == y.phase && (x.z0 - y.z0).abs() <= Z_TOL && (x.z1 - y.z1).abs() <= Z_TOL)
        && a.band_components() == b.band_components()
}

/// `∫ φ φᵀ` over a box for `φ = (1, x₁, …, x_d)`.
fn box_moments(lo: &[f64], hi: &[f64]) -> DMatrix<f64> {
    let d = lo.len();
    let vol: f64 = lo.iter().zip(hi).map(|(a, b)| b - a).product();
    let mean: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let var: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| (b - a) * (b - a) / 12.0).collect();
    DMatrix::from_fn(d + 1, d + 1, |i, j| match (i, j) {
        (0, 0) => vol,
        (0, j) => vol * mean[j - 1],
        (i, 0) => vol * mean[i - 1],
        (i, j) if i == j => vol * (mean[i - 1] * mean[i - 1] + var[i - 1]),
        (i, j) => vol * mean[i - 1] * mean[j - 1],
    })
}

/// Least-squares distance of `u₁ − u₂` from `{S y + Σ_j t_j χ_{P_j}}`, `S` skew.
pub fn triple_distance(t1: &LimitingTriple, t2: &LimitingTriple, w: &TwoWellDensity) -> Result<TripleDistance> {
    t1.validate()?;
    t2.validate()?;
    if !same_structure(t1, t2) {
        return Ok(TripleDistance { residual: f64::INFINITY, equivalent: false, skew: None, translations: Vec::new() });
    }
    let d = t1.d;
    let comps = t1.band_components();
    let ncomp = comps.iter().max().map_or(0, |m| m + 1);
    let skews: Vec<SqMat> = (0..d)
        .flat_map(|i| (i + 1..d).map(move |j| (i, j)))
        .map(|(i, j)| {
            let mut s = SqMat::zeros(d);
            s.set(i, j, 1.0);
            s.set(j, i, -1.0);
            s
        })
        .collect();
    let ns = skews.len();
    let nunk = ns + d * ncomp;
    let yb = t1.y_offsets(w);
    let c1 = t1.u_offsets();
    let c2 = t2.u_offsets();
    // per band and component: moment matrix, data coefficients, basis coefficients
    let mut blocks: Vec<(DMatrix<f64>, DVector<f64>, Vec<DVector<f64>>)> = Vec::new();
    for (k, (b1, b2)) in t1.bands.iter().zip(&t2.bands).enumerate() {
        let mut lo = vec![0.0; d];
        let mut hi = t1.cross_section.clone();
        lo[d - 1] = b1.z0;
        hi.push(b1.z1);
        let mom = box_moments(&lo, &hi);
        let ymap = t1.rotation * w.well(b1.phase);
        let g = b1.grad_u - b2.grad_u;
        for i in 0..d {
            let f = DVector::from_fn(d + 1, |a, _| if a == 0 { c1[k][i] - c2[k][i] } else { g.get(i, a - 1) });
            let phis = (0..nunk)
                .map(|u| {
                    if u < ns {
                        let sm = skews[u] * ymap;
                        let sb = skews[u].mul_vec(&yb[k]);
                        DVector::from_fn(d + 1, |a, _| if a == 0 { sb[i] } else { sm.get(i, a - 1) })
                    } else {
                        let (j, comp) = ((u - ns) % d, (u - ns) / d);
                        DVector::from_fn(d + 1, |a, _| if a == 0 && j == i && comp == comps[k] { 1.0 } else { 0.0 })
                    }
                })
                .collect();
            blocks.push((mom.clone(), f, phis));
        }
    }
    let mut normal = DMatrix::<f64>::zeros(nunk, nunk);
    let mut rhs = DVector::<f64>::zeros(nunk);
    for (mom, f, phis) in &blocks {
        for a in 0..nunk {
            let mp = mom * &phis[a];
            rhs[a] += f.dot(&mp);
            for b in 0..nunk {
                normal[(a, b)] += phis[b].dot(&mp);
            }
        }
    }
    let svd = normal.svd(true, true);
    let cutoff = 1e-13 * svd.singular_values.max();
    let theta = svd.solve(&rhs, cutoff).map_err(|e| Error::Degenerate(e.to_string()))?;
    let mut resid2 = 0.0;
    for (mom, f, phis) in &blocks {
        let mut r = f.clone();
        for (a, phi) in phis.iter().enumerate() {
            r -= phi * theta[a];
        }
        resid2 += r.dot(&(mom * &r));
    }
    let residual = resid2.max(0.0).sqrt();
    let mut skew = SqMat::zeros(d);
    for (u, s) in skews.iter().enumerate() {
        skew += s.scale(theta[u]);
    }
    let translations = (0..ncomp).map(|c| (0..d).map(|j| theta[ns + c * d + j]).collect()).collect();
    Ok(TripleDistance { residual, equivalent: residual <= 1e-8, skew: Some(skew), translations })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaGap {
    pub e_eps: f64,
    pub e_limit: f64,
    pub gap: f64,
    /// Largest change of `∇y` between face-adjacent cells.
    pub max_gradient_jump: f64,
    /// Set when neighbouring gradients differ by at least `κ/2`, i.e. the field is not resolved in H².
    pub h2_unresolved: bool,
}

/// `E_ε(y_ε) − E₀(triple)`.
pub fn gamma_gap(y: &GridField, eps: f64, k: f64, triple: &LimitingTriple, w: &TwoWellDensity) -> Result<GammaGap> {
    let p = EnergyParams::new(eps, y.dim())?;
    let e_eps = energy_eval(y, w, &p)?.total;
    let e_limit = limiting_energy(triple, k, w)?.total;
    let grads = y.cell_gradients();
    let g = &y.geom;
    let st = g.cell_strides();
    let mut jump: f64 = 0.0;
    for c in 0..g.cell_count() {
        let m = g.cell_multi(c);
        for a in 0..g.dim() {
            if m[a] + 1 < g.dims[a] {
                jump = jump.max((grads[c + st[a]] - grads[c]).norm());
            }
        }
    }
    Ok(GammaGap { e_eps, e_limit, gap: e_eps - e_limit, max_gradient_jump: jump, h2_unresolved: jump >= 0.5 * w.kappa })
}
