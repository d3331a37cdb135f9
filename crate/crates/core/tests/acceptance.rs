//! Acceptance suite: one PASS/FAIL line per criterion.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use twowell::density::fd_gradient;
use twowell::energy::{energy_eval, energy_gradient, eta_bar, EnergyParams};
use twowell::gamma::{limiting_energy, triple_distance, Band, Interface, InterfaceKind, LimitingTriple};
use twowell::harness::{generate_laminate, run_convergence, ConvergenceRow, ExperimentConfig, LaminateSpec, Scenario};
use twowell::linalg::{random_rotation, SqMat};
use twowell::partition::{build_partition, coarsen_partition};
use twowell::profile::{
    am_gm_riemann_bound, analytic_k, kdp_equals_2k_report, modica_mortola_bound, slope_energy, solve_single_profile,
    ReducedDensity, WRule,
};
use twowell::rigidity::{angle_scan_oracle, decompose_phases, DecomposeOptions, PhaseField, Window};
use twowell::{Density, DensityVariant, GridField, GridGeometry, TwoWellDensity, WellLabel};

type Outcome = Result<(bool, String), String>;
type Criterion = (&'static str, fn() -> Outcome);

fn hard_min() -> TwoWellDensity {
    TwoWellDensity::new(2, 1.0, 1.0, DensityVariant::HardMin).expect("valid density")
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn criterion_1() -> Outcome {
    let rd = ReducedDensity::new(hard_min());
    let k = analytic_k(&rd, 20_000).map_err(err)?;
    if (k - 0.5).abs() > 1e-9 {
        return Ok((false, format!("analytic K = {k}, expected 0.5")));
    }
    let t = Instant::now();
    let sol = solve_single_profile(&rd, 0.02, 4096, 0.05).map_err(err)?;
    let elapsed = t.elapsed();
    let rel = (sol.energy / k - 1.0).abs();
    let ok = rel <= 0.02 && elapsed <= Duration::from_secs(10) && sol.bc_ok;
    Ok((ok, format!("K_eps = {:.6}, K = {k}, rel. error {:.3e}, runtime {:.2?}", sol.energy, rel, elapsed)))
}

fn criterion_2() -> Outcome {
    let rd = ReducedDensity::new(hard_min());
    let sweep = [0.08, 0.04, 0.02];
    let mut ratios = Vec::new();
    let mut energies = Vec::new();
    for a in [1.0, 2.0] {
        let rep = kdp_equals_2k_report(&rd, &sweep, &WRule { a, p: 1.0 }, 1024, 0.05).map_err(err)?;
        let r: Vec<f64> = rep.rows.iter().filter_map(|r| r.dp_ratio()).collect();
        let e: Vec<f64> = rep.rows.iter().filter_map(|r| r.e_dp).collect();
        if r.len() != sweep.len() {
            return Ok((false, format!("eps0 = {} leaves rows without a double profile", rep.eps0)));
        }
        ratios.push(r);
        energies.push(e);
    }
    let decreasing = ratios.iter().all(|r| r.windows(2).all(|w| w[1] < w[0]));
    let finest = ratios.iter().map(|r| *r.last().unwrap()).fold(0.0, f64::max);
    let spread =
        energies[0].iter().zip(&energies[1]).map(|(a, b)| (a - b).abs() / a.abs().max(b.abs())).fold(0.0, f64::max);
    let ok = decreasing && finest <= 1.05 && spread <= 1e-9;
    Ok((ok, format!("ratios w=eps {:.6?}, w=2eps {:.6?}, width spread {spread:.2e}", ratios[0], ratios[1])))
}

fn sweep(scenario: Scenario) -> Result<Vec<ConvergenceRow>, String> {
    let cfg = ExperimentConfig::new(scenario, vec![0.1, 0.05, 0.025]);
    let dir = tempfile::tempdir().map_err(err)?;
    Ok(run_convergence(&cfg, dir.path()).map_err(err)?.rows)
}

fn criterion_3() -> Outcome {
    let kappa = 1.0;
    let mut ok = true;
    let mut detail = Vec::new();

    let rows = sweep(Scenario::ExampleEx { l: 2.0 })?;
    let last = rows.last().unwrap();
    let jump = last.jump_height.map(f64::abs).unwrap_or(f64::INFINITY);
    let pass = last.n_components_a == 1 && last.n_components_b <= 1 && jump <= 0.2 * kappa;
    ok &= pass;
    detail.push(format!(
        "l=2 {}: components A/B {}/{}, jump {jump:.4}",
        verdict(pass),
        last.n_components_a,
        last.n_components_b
    ));

    let rows = sweep(Scenario::ExampleEx { l: 1.0 })?;
    let jumps: Vec<f64> = rows.iter().map(|r| r.jump_height.unwrap_or(f64::NAN)).collect();
    let pass = jumps.iter().all(|j| (j - 2.0 * kappa).abs() <= 0.2 * kappa);
    ok &= pass;
    detail.push(format!("l=1 {}: jumps {jumps:.4?}", verdict(pass)));

    let rows = sweep(Scenario::ExampleEx { l: 0.5 })?;
    let counts: Vec<usize> = rows.iter().map(|r| r.n_components_a).collect();
    let gaps: Vec<f64> = rows.iter().map(|r| r.min_gap_before_coarsening.unwrap_or(f64::NAN)).collect();
    let pass = counts.iter().all(|&c| c >= 2);
    ok &= pass;
    detail.push(format!("l=1/2 {}: A components {counts:?}, gap/eps before coarsening {gaps:.2?}", verdict(pass)));

    Ok((ok, detail.join("; ")))
}

fn verdict(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "fails"
    }
}

fn criterion_4() -> Outcome {
    let w = hard_min();
    let n = 32;
    let geom = GridGeometry::on_box(&[n, n], &[0.0, 0.0], &[1.0, 1.0]).map_err(err)?;
    let spec = LaminateSpec {
        kappa: 1.0,
        bands: vec![
            (WellLabel::A, 0.0, 0.25),
            (WellLabel::B, 0.25, 0.5),
            (WellLabel::A, 0.5, 0.75),
            (WellLabel::B, 0.75, 1.0),
        ],
    };
    let opts = DecomposeOptions { window: Window::Full, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut ok = true;
    let mut detail = Vec::new();
    for (delta, tol) in [(0.0, 1e-10), (1e-3, 1e-2), (1e-2, 1e-1)] {
        let (mut worst, mut worst_oracle) = (0.0f64, 0.0f64);
        let mut monotone = true;
        for _ in 0..5 {
            let r0 = random_rotation(2, &mut rng);
            let mut y = generate_laminate(&spec, &r0, 0.0, &geom).map_err(err)?;
            if delta > 0.0 {
                y.values.iter_mut().for_each(|v| *v += rng.random_range(-delta..delta));
            }
            let dec = decompose_phases(&y, &w, &opts).map_err(err)?;
            worst = worst.max((dec.r - r0).max_abs());
            monotone &= dec.objective_trace.windows(2).all(|t| t[1] <= t[0] * (1.0 + 1e-12) + 1e-15);
            let (ro, _) = angle_scan_oracle(&w, &y.cell_gradients()).map_err(err)?;
            worst_oracle = worst_oracle.max((dec.r - ro).max_abs());
        }
        let pass = worst <= tol && monotone && worst_oracle <= 1e-6;
        ok &= pass;
        detail.push(format!(
            "delta={delta:e} {}: |R-R0| {worst:.2e}, |R-oracle| {worst_oracle:.2e}, monotone {monotone}",
            verdict(pass)
        ));
    }
    Ok((ok, detail.join("; ")))
}

fn gap_trend(rows: &[ConvergenceRow]) -> (bool, Vec<f64>) {
    let gaps: Vec<f64> = rows.iter().map(|r| r.gap).collect();
    let ok = gaps.iter().all(|&g| g > 0.0) && gaps.windows(2).all(|w| w[1] < w[0]);
    (ok, gaps)
}

fn criterion_5() -> Outcome {
    let single = sweep(Scenario::SingleInterface)?;
    let double = sweep(Scenario::DoubleInterface { w_rule: WRule { a: 1.0, p: 1.0 } })?;
    let (ok_s, gs) = gap_trend(&single);
    let (ok_d, gd) = gap_trend(&double);
    let flags: Vec<bool> = single.iter().chain(&double).map(|r| r.under_resolved).collect();
    Ok((
        ok_s && ok_d,
        format!(
            "single {}: gaps {gs:.5?}; double {}: gaps {gd:.5?}; under-resolved {flags:?}",
            verdict(ok_s),
            verdict(ok_d)
        ),
    ))
}

fn random_matrix(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> SqMat {
    SqMat::from_row_slice(d, &(0..d * d).map(|_| rng.random_range(-scale..scale)).collect::<Vec<_>>())
}

fn random_field(rng: &mut ChaCha8Rng, dims: &[usize], hi: &[f64], amp: f64) -> GridField {
    let d = dims.len();
    let g = GridGeometry::on_box(dims, &vec![0.0; d], hi).expect("valid grid");
    let mut y = GridField::affine(g, &SqMat::identity(d), &vec![0.0; d]);
    y.values.iter_mut().for_each(|v| *v += rng.random_range(-amp..amp));
    y
}

fn abab_triple() -> LimitingTriple {
    use InterfaceKind::{Disp, Grad, Partition};
    let band = |phase, z0, z1| Band { phase, z0, z1, grad_u: SqMat::zeros(2) };
    let iface =
        |z, jump: [f64; 2], kinds: &[InterfaceKind]| Interface { z, jump: jump.to_vec(), kinds: kinds.to_vec() };
    let mut bands = vec![
        band(WellLabel::A, 0.0, 0.5),
        band(WellLabel::B, 0.5, 0.8),
        band(WellLabel::A, 0.8, 1.4),
        band(WellLabel::A, 1.4, 2.0),
    ];
    bands[0].grad_u = SqMat::from_rows(&[&[0.1, 0.0], &[0.2, 0.3]]);
    bands[1].grad_u = SqMat::from_rows(&[&[-0.1, 0.4], &[0.0, 0.05]]);
    bands[2].grad_u = SqMat::from_rows(&[&[0.2, 0.1], &[-0.1, 0.1]]);
    bands[3].grad_u = SqMat::from_rows(&[&[0.2, 0.3], &[-0.1, -0.2]]);
    LimitingTriple {
        d: 2,
        cross_section: vec![1.0],
        rotation: SqMat::identity(2),
        bands,
        interfaces: vec![
            iface(0.5, [0.0, 0.0], &[Grad, Partition]),
            iface(0.8, [0.3, -0.2], &[Grad, Partition]),
            iface(1.4, [0.0, 0.25], &[Disp]),
        ],
    }
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut failed = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failed.push(name.to_string());
        }
    };

    let variants = [DensityVariant::HardMin, DensityVariant::SmoothHarmonic];
    let (mut frame, mut coercive, mut iso) = (true, true, true);
    for d in [2, 3] {
        for v in variants {
            let w = TwoWellDensity::new(d, 0.8, 1.3, v).map_err(err)?;
            for _ in 0..2000 {
                let f = random_matrix(&mut rng, d, 2.0);
                let w0 = w.eval(&f);
                let r = random_rotation(d, &mut rng);
                frame &= (w.eval(&(r * f)) - w0).abs() <= 1e-12 * (1.0 + w0);
                let dist2 = w.dist_to_wells(&f).powi(2);
                coercive &= w.c1() * dist2 <= w0 * (1.0 + 1e-12) + 1e-15;
                coercive &= w0 <= w.c2() * dist2 * (1.0 + 1e-12) + 1e-15;
                let t = f.col(d - 1).iter().map(|x| x * x).sum::<f64>().sqrt();
                let mut diag = vec![1.0; d];
                diag[d - 1] = t;
                iso &= w0 >= w.eval(&SqMat::diag(&diag)) - 1e-12;
            }
        }
    }
    check("frame indifference", frame);
    check("two-sided coercivity", coercive);
    check("isotropy inequality", iso);

    let rd = ReducedDensity::new(hard_min());
    let mut am_gm = true;
    for _ in 0..32 {
        let n = rng.random_range(1024..1400);
        let eps = rng.random_range(0.05..0.3);
        let shift = rng.random_range(-0.2..0.2);
        let width = rng.random_range(0.5..3.0);
        let h = 1.0 / n as f64;
        let v: Vec<f64> = (0..n)
            .map(|i| {
                let t = -0.5 + (i as f64 + 0.5) * h;
                1.0 + 0.5 * (1.0 - ((t - shift) / (width * eps * eps)).tanh())
            })
            .collect();
        let e = slope_energy(&rd, &v, h, eps);
        am_gm &= e >= modica_mortola_bound(&rd, &v) - 1e-9 && e >= 0.98 * am_gm_riemann_bound(&rd, &v);
    }
    check("AM-GM lower bound", am_gm);

    let mut fd_ok = true;
    for (dims, v) in [
        (vec![6, 5], DensityVariant::SmoothHarmonic),
        (vec![5, 6], DensityVariant::HardMin),
        (vec![3, 3, 4], DensityVariant::SmoothHarmonic),
    ] {
        let d = dims.len();
        let w = TwoWellDensity::new(d, 1.0, 1.0, v).map_err(err)?;
        let p = EnergyParams::new(0.3, d).map_err(err)?;
        for _ in 0..10 {
            let y = random_field(&mut rng, &dims, &vec![1.0; d], 0.05);
            let dir: Vec<f64> = (0..y.values.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let gr = energy_gradient(&y, &w, &p).map_err(err)?;
            let analytic: f64 = gr.values.iter().zip(&dir).map(|(a, b)| a * b).sum();
            let t = 1e-5;
            let (mut yp, mut ym) = (y.clone(), y.clone());
            for ((a, b), dv) in yp.values.iter_mut().zip(ym.values.iter_mut()).zip(&dir) {
                *a += t * dv;
                *b -= t * dv;
            }
            let ep = energy_eval(&yp, &w, &p).map_err(err)?.total;
            let em = energy_eval(&ym, &w, &p).map_err(err)?.total;
            let fd = (ep - em) / (2.0 * t);
            fd_ok &= (analytic - fd).abs() <= 1e-4 * fd.abs().max(1e-8);
        }
        let f = random_matrix(&mut rng, d, 1.5);
        let g = w.gradient(&f);
        fd_ok &= (g - fd_gradient(|m| w.eval(m), &f, 1e-6)).max_abs() <= 1e-4 * g.max_abs().max(1.0);
    }
    check("gradient vs finite differences", fd_ok);

    let mut rescale = true;
    for dims in [vec![6, 7], vec![4, 3, 5]] {
        let d = dims.len();
        let w = TwoWellDensity::new(d, 1.0, 1.0, DensityVariant::SmoothHarmonic).map_err(err)?;
        let eps = 0.2;
        for a in [0.25, 0.5, 1.0] {
            let ybar = random_field(&mut rng, &dims, &vec![1.0; d], 0.05);
            let big = GridGeometry::on_box(&dims, &vec![0.0; d], &vec![a; d]).map_err(err)?;
            let y = GridField::new(big, d, ybar.values.iter().map(|v| a * v).collect()).map_err(err)?;
            let small = energy_eval(&ybar, &w, &EnergyParams::new(eps, d).map_err(err)?).map_err(err)?;
            let pa = EnergyParams::new(a.sqrt() * eps, d).map_err(err)?;
            let large = energy_eval(&y, &w, &pa).map_err(err)?;
            let f = a.powi(d as i32 - 1);
            let eta = eta_bar(eps, d).map_err(err)?;
            let ratio = pa.eta * pa.eta / (a * eta * eta);
            let rel = |x: f64, y: f64| (x - y).abs() <= 1e-10 * x.abs().max(y.abs()).max(1e-300);
            rescale &= rel(large.bulk, f * small.bulk);
            rescale &= rel(large.second_gradient, f * small.second_gradient);
            rescale &= rel(large.anisotropic, f * ratio * small.anisotropic);
            rescale &= large.total >= f * small.total * (1.0 - 1e-10);
        }
    }
    check("rescaling identity", rescale);

    let (mut exact, mut idem) = (true, true);
    for _ in 0..200 {
        let (nx, ny) = (rng.random_range(4..20), rng.random_range(4..20));
        let eps = rng.random_range(0.02..0.4);
        let labels = (0..nx * ny).map(|_| if rng.random_bool(0.5) { WellLabel::A } else { WellLabel::B }).collect();
        let phi = PhaseField::new(vec![nx, ny], vec![1.0 / nx as f64, 2.0 / ny as f64], labels).map_err(err)?;
        let mut part = build_partition(&phi, eps).map_err(err)?;
        exact &= part.is_exact();
        for c in part.components.iter_mut() {
            c.translation = vec![rng.random_range(-20.0..20.0) * eps, rng.random_range(-20.0..20.0) * eps];
            c.has_translation = true;
        }
        let thr = rng.random_range(0.1..20.0);
        let once = coarsen_partition(&part, eps, thr).map_err(err)?;
        let twice = coarsen_partition(&once, eps, thr).map_err(err)?;
        exact &= once.is_exact();
        idem &= once == twice;
    }
    check("partition exactness", exact);
    check("coarsening idempotence", idem);

    let w = hard_min();
    let base = abab_triple();
    let (mut additive, mut representative) = (true, true);
    for i in 0..100 {
        let t = if i % 2 == 0 { base.clone() } else { base.rotated(&SqMat::plane_rotation(2, 0, 1, 0.3)) };
        let k = rng.random_range(0.0..3.0);
        let e1 = limiting_energy(&t, k, &w).map_err(err)?;
        additive &= e1.elastic >= 0.0 && e1.single_surface >= 0.0 && e1.double_surface >= 0.0;
        additive &= e1.total == e1.elastic + e1.single_surface + e1.double_surface;
        let s01 = rng.random_range(-1.0..1.0);
        let skew = SqMat::from_rows(&[&[0.0, s01], &[-s01, 0.0]]);
        let shifts: Vec<[f64; 2]> =
            (0..3).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let t2 = with_representative(&t, &skew, &shifts, &w);
        representative &= triple_distance(&t, &t2, &w).map_err(err)?.equivalent;
        let e2 = limiting_energy(&t2, k, &w).map_err(err)?;
        representative &= (e1.total - e2.total).abs() <= 1e-10;
    }
    check("energy report additivity", additive);
    check("representative invariance", representative);

    let ok = failed.is_empty();
    let detail = if ok {
        "frame indifference, coercivity, isotropy, AM-GM, finite differences, rescaling, partition, coarsening, \
         additivity, representative invariance"
            .to_string()
    } else {
        format!("failed: {}", failed.join(", "))
    };
    Ok((ok, detail))
}

/// Another representative of the same limit: skew part added to every band and a rigid shift per component.
fn with_representative(t: &LimitingTriple, skew: &SqMat, shifts: &[[f64; 2]], w: &TwoWellDensity) -> LimitingTriple {
    let mut t2 = t.clone();
    let comps = t.band_components();
    for b in t2.bands.iter_mut() {
        b.grad_u += *skew * t.rotation * w.well(b.phase);
    }
    for f in t2.interfaces.iter_mut() {
        let lower = t.bands.iter().position(|b| (b.z1 - f.z).abs() < 1e-12).expect("interface between bands");
        let (cl, cu) = (comps[lower], comps[lower + 1]);
        for (j, (u, l)) in f.jump.iter_mut().zip(shifts[cu].iter().zip(&shifts[cl])) {
            *j += u - l;
        }
    }
    t2
}

fn main() {
    let criteria: [Criterion; 6] = [
        ("optimal-profile constant", criterion_1),
        ("double profile equals twice the single", criterion_2),
        ("example regime separation", criterion_3),
        ("rigidity recovery", criterion_4),
        ("gamma-gap trend", criterion_5),
        ("invariant suites", criterion_6),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (ok, detail) = match run() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failures += 1;
        }
        println!("criterion {} {name}: {} ({detail}) [{:.1?}]", i + 1, if ok { "PASS" } else { "FAIL" }, t.elapsed());
    }
    println!("{} of {} criteria pass", criteria.len() - failures, criteria.len());
}
