//! The two-well stored-energy density and its derivatives.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::linalg::{procrustes_unchecked, SqMat};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WellLabel {
    A,
    B,
}

impl WellLabel {
    pub fn other(self) -> Self {
        match self {
            WellLabel::A => WellLabel::B,
            WellLabel::B => WellLabel::A,
        }
    }
}

impl fmt::Display for WellLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WellLabel::A => "A",
            WellLabel::B => "B",
        })
    }
}

impl FromStr for WellLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(WellLabel::A),
            "B" | "b" => Ok(WellLabel::B),
            o => invalid(format!("unknown well label `{o}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensityVariant {
    /// `c dA² dB² / (dA² + dB²)`
    #[default]
    SmoothHarmonic,
    /// `c min(dA, dB)²`
    HardMin,
}

impl fmt::Display for DensityVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DensityVariant::SmoothHarmonic => "smooth-harmonic",
            DensityVariant::HardMin => "hard-min",
        })
    }
}

impl FromStr for DensityVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "smooth-harmonic" | "smooth" => Ok(DensityVariant::SmoothHarmonic),
            "hard-min" | "hardmin" => Ok(DensityVariant::HardMin),
            o => invalid(format!("unknown density variant `{o}`")),
        }
    }
}

/// A stored-energy density on d×d matrices.
///
/// The default derivative methods use central finite differences.
pub trait Density: Sync {
    fn dim(&self) -> usize;

    fn eval(&self, f: &SqMat) -> f64;

    fn gradient(&self, f: &SqMat) -> SqMat {
        fd_gradient(|m| self.eval(m), f, 1e-6)
    }

    /// Second derivative as a `d² × d²` row-major matrix over row-major matrix entries.
    fn hessian(&self, f: &SqMat) -> Vec<f64> {
        fd_hessian(|m| self.eval(m), f, 1e-5)
    }
}

pub fn fd_gradient(w: impl Fn(&SqMat) -> f64, f: &SqMat, step: f64) -> SqMat {
    let d = f.dim();
    let mut g = SqMat::zeros(d);
    for i in 0..d {
        for j in 0..d {
            let mut p = *f;
            let mut m = *f;
            p.add_to(i, j, step);
            m.add_to(i, j, -step);
            g.set(i, j, (w(&p) - w(&m)) / (2.0 * step));
        }
    }
    g
}

pub fn fd_hessian(w: impl Fn(&SqMat) -> f64, f: &SqMat, step: f64) -> Vec<f64> {
    let d = f.dim();
    let n = d * d;
    let mut h = vec![0.0; n * n];
    let shifted = |a: usize, sa: f64, b: usize, sb: f64| {
        let mut m = *f;
        m.add_to(a / d, a % d, sa);
        m.add_to(b / d, b % d, sb);
        w(&m)
    };
    for a in 0..n {
        for b in a..n {
            let v = (shifted(a, step, b, step) - shifted(a, step, b, -step) - shifted(a, -step, b, step)
                + shifted(a, -step, b, -step))
                / (4.0 * step * step);
            h[a * n + b] = v;
            h[b * n + a] = v;
        }
    }
    h
}

/// Two-well density vanishing on `SO(d)A ∪ SO(d)B`, `A = Id`, `B = Id + κ e_d⊗e_d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoWellDensity {
    pub d: usize,
    pub kappa: f64,
    pub c: f64,
    pub variant: DensityVariant,
}

impl TwoWellDensity {
    pub fn new(d: usize, kappa: f64, c: f64, variant: DensityVariant) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return invalid(format!("dimension {d} not in 1..=3"));
        }
        if !(kappa.is_finite() && kappa > 0.0) {
            return invalid(format!("kappa must be positive, got {kappa}"));
        }
        if !(c.is_finite() && c > 0.0) {
            return invalid(format!("c must be positive, got {c}"));
        }
        Ok(TwoWellDensity { d, kappa, c, variant })
    }

    pub fn well(&self, m: WellLabel) -> SqMat {
        let mut w = SqMat::identity(self.d);
        if m == WellLabel::B {
            w.set(self.d - 1, self.d - 1, 1.0 + self.kappa);
        }
        w
    }

    /// Lower growth constant `c₁` with `c₁ dist² ≤ W`.
    pub fn c1(&self) -> f64 {
        match self.variant {
            DensityVariant::SmoothHarmonic => self.c / 2.0,
            DensityVariant::HardMin => self.c,
        }
    }

    /// Upper growth constant `c₂` with `W ≤ c₂ dist²`.
    pub fn c2(&self) -> f64 {
        self.c
    }

    /// Radius around each well set on which the density is C².
    pub fn delta_w(&self) -> f64 {
        self.kappa / 4.0
    }

    /// Squared distances to both wells with the optimal rotations.
    fn well_data(&self, f: &SqMat) -> ([f64; 2], [SqMat; 2]) {
        let mut dist = [0.0; 2];
        let mut res = [SqMat::zeros(self.d); 2];
        for (k, m) in [WellLabel::A, WellLabel::B].into_iter().enumerate() {
            let mm = self.well(m);
            let (r, _) = procrustes_unchecked(&(*f * mm.transpose()));
            let e = *f - r * mm;
            dist[k] = e.norm_sq();
            res[k] = e;
        }
        (dist, res)
    }

    /// Distance of `f` to `SO(d)A ∪ SO(d)B`.
    pub fn dist_to_wells(&self, f: &SqMat) -> f64 {
        let (d2, _) = self.well_data(f);
        d2[0].min(d2[1]).sqrt()
    }

    fn check_dim(&self, f: &SqMat) -> Result<()> {
        if f.dim() != self.d {
            return invalid(format!("matrix dimension {} != density dimension {}", f.dim(), self.d));
        }
        if !f.is_finite() {
            return invalid("non-finite matrix entry");
        }
        Ok(())
    }

    pub fn try_eval(&self, f: &SqMat) -> Result<f64> {
        self.check_dim(f)?;
        Ok(self.eval(f))
    }
}

impl Density for TwoWellDensity {
    fn dim(&self) -> usize {
        self.d
    }

    fn eval(&self, f: &SqMat) -> f64 {
        let (d2, _) = self.well_data(f);
        let (a, b) = (d2[0], d2[1]);
        match self.variant {
            DensityVariant::SmoothHarmonic => {
                if a == 0.0 || b == 0.0 {
                    0.0
                } else {
                    self.c * a * b / (a + b)
                }
            }
            DensityVariant::HardMin => self.c * a.min(b),
        }
    }

    fn gradient(&self, f: &SqMat) -> SqMat {
        let (d2, res) = self.well_data(f);
        let (a, b) = (d2[0], d2[1]);
        match self.variant {
            DensityVariant::SmoothHarmonic => {
                if a == 0.0 || b == 0.0 {
                    return SqMat::zeros(self.d);
                }
                let s = a + b;
                let wa = self.c * b * b / (s * s);
                let wb = self.c * a * a / (s * s);
                res[0].scale(2.0 * wa) + res[1].scale(2.0 * wb)
            }
            DensityVariant::HardMin => {
                if a <= b {
                    res[0].scale(2.0 * self.c)
                } else {
                    res[1].scale(2.0 * self.c)
                }
            }
        }
    }
}

/// Distance from `f` to `SO(d)·(R_pre M)`.
pub fn distance_to_well(w: &TwoWellDensity, f: &SqMat, m: WellLabel, r_pre: Option<&SqMat>) -> Result<f64> {
    w.check_dim(f)?;
    let mut mm = w.well(m);
    if let Some(r) = r_pre {
        mm = *r * mm;
    }
    let (r, _) = procrustes_unchecked(&(*f * mm.transpose()));
    Ok((*f - r * mm).norm())
}

pub fn density_eval(w: &TwoWellDensity, f: &SqMat) -> Result<f64> {
    w.try_eval(f)
}

/// Symmetric bilinear form `D²W(R M)` on d×d matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HessianForm {
    pub d: usize,
    /// `d² × d²` row-major over row-major matrix entries.
    pub entries: Vec<f64>,
}

impl HessianForm {
    pub fn apply(&self, g: &SqMat, h: &SqMat) -> f64 {
        let gv = g.to_row_vec();
        let hv = h.to_row_vec();
        let n = self.d * self.d;
        let mut s = 0.0;
        for a in 0..n {
            for b in 0..n {
                s += self.entries[a * n + b] * gv[a] * hv[b];
            }
        }
        s
    }

    /// `½ D²W(RM) G:G`
    pub fn q_lin(&self, g: &SqMat) -> f64 {
        0.5 * self.apply(g, g)
    }

    /// Smallest eigenvalue of the form restricted to symmetric matrices.
    pub fn min_eig_on_symmetric(&self) -> f64 {
        let d = self.d;
        let mut basis = Vec::new();
        for i in 0..d {
            for j in i..d {
                let mut m = SqMat::zeros(d);
                if i == j {
                    m.set(i, i, 1.0);
                } else {
                    let s = std::f64::consts::FRAC_1_SQRT_2;
                    m.set(i, j, s);
                    m.set(j, i, s);
                }
                basis.push(m);
            }
        }
        let k = basis.len();
        let mut gram = nalgebra::DMatrix::<f64>::zeros(k, k);
        for a in 0..k {
            for b in 0..k {
                gram[(a, b)] = self.apply(&basis[a], &basis[b]);
            }
        }
        let sym = (&gram + gram.transpose()) * 0.5;
        sym.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Orthogonal projection of `g` onto the normal space of `SO(d)·F` at `F`.
fn normal_part(f: &SqMat, g: &SqMat) -> SqMat {
    let d = f.dim();
    let mut tangents = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            let mut s = SqMat::zeros(d);
            s.set(i, j, 1.0);
            s.set(j, i, -1.0);
            tangents.push(s * *f);
        }
    }
    let k = tangents.len();
    if k == 0 {
        return *g;
    }
    let gram = nalgebra::DMatrix::from_fn(k, k, |a, b| tangents[a].dot(&tangents[b]));
    let rhs = nalgebra::DVector::from_fn(k, |a, _| tangents[a].dot(g));
    let coef = gram.lu().solve(&rhs).unwrap_or_else(|| nalgebra::DVector::zeros(k));
    let mut out = *g;
    for a in 0..k {
        out -= tangents[a].scale(coef[a]);
    }
    out
}

/// `D²W(R M)` from the closed form `2c |G − Π_T G|²`, `T` the tangent space of `SO(d)M` at `RM`.
pub fn density_hessian_at_well(w: &TwoWellDensity, m: WellLabel, r: &SqMat) -> Result<HessianForm> {
    if r.dim() != w.d || !r.is_rotation(1e-9) {
        return invalid("expected a rotation of matching dimension");
    }
    let f = *r * w.well(m);
    let d = w.d;
    let n = d * d;
    let basis: Vec<SqMat> = (0..n)
        .map(|a| {
            let mut e = SqMat::zeros(d);
            e.set(a / d, a % d, 1.0);
            normal_part(&f, &e)
        })
        .collect();
    let mut entries = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            entries[a * n + b] = 2.0 * w.c * basis[a].dot(&basis[b]);
        }
    }
    Ok(HessianForm { d, entries })
}

/// `D²W(R M)` by central differences with step `1e-5`.
pub fn density_hessian_at_well_fd(w: &TwoWellDensity, m: WellLabel, r: &SqMat) -> Result<HessianForm> {
    if r.dim() != w.d || !r.is_rotation(1e-9) {
        return invalid("expected a rotation of matching dimension");
    }
    let f = *r * w.well(m);
    Ok(HessianForm { d: w.d, entries: fd_hessian(|x| w.eval(x), &f, 1e-5) })
}

/// `Q_lin(RM, G) = ½ D²W(RM) G:G`.
pub fn q_lin(w: &TwoWellDensity, m: WellLabel, r: &SqMat, g: &SqMat) -> Result<f64> {
    Ok(density_hessian_at_well(w, m, r)?.q_lin(g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_rotation;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hm(d: usize) -> TwoWellDensity {
        TwoWellDensity::new(d, 1.0, 1.0, DensityVariant::HardMin).unwrap()
    }

    fn sh(d: usize) -> TwoWellDensity {
        TwoWellDensity::new(d, 1.0, 1.0, DensityVariant::SmoothHarmonic).unwrap()
    }

    fn random_mat(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> SqMat {
        let v: Vec<f64> = (0..d * d).map(|_| rng.random_range(-scale..scale)).collect();
        SqMat::from_row_slice(d, &v)
    }

    #[test]
    fn distance_examples() {
        let w = hm(2);
        let a = w.well(WellLabel::A);
        assert_eq!(distance_to_well(&w, &a, WellLabel::A, None).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let r = random_rotation(2, &mut rng);
        let rb = r * w.well(WellLabel::B);
        assert!(distance_to_well(&w, &rb, WellLabel::B, None).unwrap() < 1e-13);
        let b = w.well(WellLabel::B);
        assert!((distance_to_well(&w, &b, WellLabel::A, None).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn distance_matches_angle_sampling() {
        let w = hm(2);
        let b = w.well(WellLabel::B);
        let mut best = f64::INFINITY;
        for k in 0..100_000 {
            let t = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * k as f64 / 100_000.0;
            best = best.min((b - SqMat::plane_rotation(2, 0, 1, t)).norm());
        }
        assert!((best - 1.0).abs() < 1e-8);
    }

    #[test]
    fn non_finite_rejected() {
        let w = hm(2);
        let f = SqMat::diag(&[f64::NAN, 1.0]);
        assert!(distance_to_well(&w, &f, WellLabel::A, None).is_err());
        assert!(density_eval(&w, &f).is_err());
    }

    #[test]
    fn density_examples() {
        let f = SqMat::diag(&[1.0, 1.5]);
        assert!((density_eval(&hm(2), &f).unwrap() - 0.25).abs() < 1e-14);
        assert!((density_eval(&sh(2), &f).unwrap() - 0.125).abs() < 1e-14);
        assert_eq!(density_eval(&sh(2), &SqMat::identity(2)).unwrap(), 0.0);
    }

    #[test]
    fn wells_are_zeros() {
        for w in [hm(2), sh(2), hm(3), sh(3), hm(1)] {
            for m in [WellLabel::A, WellLabel::B] {
                assert!(w.eval(&w.well(m)) <= 1e-14 * w.c);
            }
        }
    }

    #[test]
    fn skew_directions_are_flat() {
        for w in [hm(2), sh(2)] {
            let h = density_hessian_at_well(&w, WellLabel::A, &SqMat::identity(2)).unwrap();
            let s = SqMat::from_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]);
            assert!(h.q_lin(&s).abs() < 1e-8);
        }
        let w = hm(3);
        let h = density_hessian_at_well(&w, WellLabel::B, &SqMat::identity(3)).unwrap();
        let s = SqMat::from_rows(&[&[0.0, 0.3, -0.2], &[-0.3, 0.0, 0.7], &[0.2, -0.7, 0.0]]);
        assert!(h.q_lin(&(s * w.well(WellLabel::B))).abs() < 1e-8);
    }

    #[test]
    fn closed_form_hessian_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for w in [hm(2), sh(2), hm(3), sh(3)] {
            for m in [WellLabel::A, WellLabel::B] {
                let r = random_rotation(w.d, &mut rng);
                let exact = density_hessian_at_well(&w, m, &r).unwrap();
                let fd = density_hessian_at_well_fd(&w, m, &r).unwrap();
                for (a, b) in exact.entries.iter().zip(&fd.entries) {
                    assert!((a - b).abs() < 1e-5, "{a} {b}");
                }
            }
        }
    }

    #[test]
    fn fd_skew_directions_are_flat() {
        let w = sh(2);
        let h = density_hessian_at_well_fd(&w, WellLabel::A, &SqMat::identity(2)).unwrap();
        let s = SqMat::from_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        assert!(h.q_lin(&s).abs() < 1e-8);
        let e11 = SqMat::diag(&[1.0, 0.0]);
        assert!((h.q_lin(&e11) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn q_lin_e11() {
        let w = hm(2);
        let e11 = SqMat::diag(&[1.0, 0.0]);
        let q = q_lin(&w, WellLabel::A, &SqMat::identity(2), &e11).unwrap();
        assert!((q - 1.0).abs() < 1e-6, "{q}");
    }

    #[test]
    fn q_lin_frame_indifferent() {
        let w = sh(2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let r = random_rotation(2, &mut rng);
            let g = random_mat(&mut rng, 2, 1.0);
            let q0 = q_lin(&w, WellLabel::A, &SqMat::identity(2), &g).unwrap();
            let q1 = q_lin(&w, WellLabel::A, &r, &(r * g)).unwrap();
            assert!((q0 - q1).abs() < 1e-8);
        }
    }

    #[test]
    fn analytic_gradient_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for w in [sh(2), hm(2), sh(3), hm(3)] {
            for _ in 0..50 {
                let f = SqMat::identity(w.d) + random_mat(&mut rng, w.d, 0.8);
                let g = w.gradient(&f);
                let gf = fd_gradient(|m| w.eval(m), &f, 1e-6);
                assert!((g - gf).max_abs() <= 1e-5 * (1.0 + g.max_abs()), "{:?} {:?}", g, gf);
            }
        }
    }

    #[test]
    fn min_eig_positive_on_symmetric() {
        for w in [hm(2), sh(2)] {
            let h = density_hessian_at_well(&w, WellLabel::A, &SqMat::identity(2)).unwrap();
            let l = h.min_eig_on_symmetric();
            assert!(l > 0.0, "{l}");
        }
    }

    fn mat_strategy(d: usize) -> impl Strategy<Value = SqMat> {
        proptest::collection::vec(-2.0f64..2.0, d * d).prop_map(move |v| SqMat::from_row_slice(d, &v))
    }

    fn variant_strategy() -> impl Strategy<Value = DensityVariant> {
        prop_oneof![Just(DensityVariant::SmoothHarmonic), Just(DensityVariant::HardMin)]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn frame_indifference(f in mat_strategy(2), theta in -3.2f64..3.2, v in variant_strategy(), kappa in 0.2f64..2.0) {
            let w = TwoWellDensity::new(2, kappa, 1.3, v).unwrap();
            let r = SqMat::plane_rotation(2, 0, 1, theta);
            let w0 = w.eval(&f);
            prop_assert!((w.eval(&(r * f)) - w0).abs() <= 1e-12 * (1.0 + w0));
        }

        #[test]
        fn frame_indifference_3d(f in mat_strategy(3), seed in any::<u64>(), v in variant_strategy()) {
            let w = TwoWellDensity::new(3, 0.7, 1.0, v).unwrap();
            let r = random_rotation(3, &mut ChaCha8Rng::seed_from_u64(seed));
            let w0 = w.eval(&f);
            prop_assert!((w.eval(&(r * f)) - w0).abs() <= 1e-12 * (1.0 + w0));
        }

        #[test]
        fn two_sided_coercivity(f in mat_strategy(2), v in variant_strategy(), kappa in 0.2f64..2.0) {
            let w = TwoWellDensity::new(2, kappa, 2.0, v).unwrap();
            let dist2 = w.dist_to_wells(&f).powi(2);
            let val = w.eval(&f);
            prop_assert!(w.c1() * dist2 <= val * (1.0 + 1e-12) + 1e-15);
            prop_assert!(val <= w.c2() * dist2 * (1.0 + 1e-12) + 1e-15);
        }

        #[test]
        fn isotropy_inequality(f in mat_strategy(2), v in variant_strategy(), kappa in 0.2f64..2.0) {
            let w = TwoWellDensity::new(2, kappa, 1.0, v).unwrap();
            let col = f.col(1);
            let t = (col[0] * col[0] + col[1] * col[1]).sqrt();
            let reduced = w.eval(&SqMat::diag(&[1.0, t]));
            prop_assert!(w.eval(&f) >= reduced - 1e-12);
        }

        #[test]
        fn isotropy_inequality_3d(f in mat_strategy(3), v in variant_strategy()) {
            let w = TwoWellDensity::new(3, 1.0, 1.0, v).unwrap();
            let col = f.col(2);
            let t = col.iter().map(|x| x * x).sum::<f64>().sqrt();
            let reduced = w.eval(&SqMat::diag(&[1.0, 1.0, t]));
            prop_assert!(w.eval(&f) >= reduced - 1e-12);
        }

        #[test]
        fn zero_set(f in mat_strategy(2), near in 0usize..3, theta in -3.2f64..3.2, v in variant_strategy()) {
            let w = TwoWellDensity::new(2, 1.0, 1.0, v).unwrap();
            let f = match near {
                0 => f,
                1 => SqMat::plane_rotation(2, 0, 1, theta) * w.well(WellLabel::A),
                _ => SqMat::plane_rotation(2, 0, 1, theta) * w.well(WellLabel::B),
            };
            let prod = distance_to_well(&w, &f, WellLabel::A, None).unwrap()
                * distance_to_well(&w, &f, WellLabel::B, None).unwrap();
            prop_assert_eq!(w.eval(&f) <= 1e-14, prod <= 1e-7);
        }
    }
}
