use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use twowell::energy::{energy_eval, EnergyParams};
use twowell::gamma::{check_admissible, limiting_energy, LimitingTriple};
use twowell::harness::{run_convergence, run_selftest, ExperimentConfig, Scenario};
use twowell::io::{load_field, save_field};
use twowell::minimize::{minimize, MinimizeOptions};
use twowell::partition::{build_partition, coarsen_partition, component_translations, rescaled_displacement};
use twowell::profile::{analytic_k, kdp_equals_2k_report, solve_single_profile, ReducedDensity, WRule};
use twowell::rigidity::{decompose_phases, DecomposeOptions, Window};
use twowell::{DensityVariant, Error, Result, TwoWellDensity};

#[derive(Parser)]
#[command(name = "twowell", version, about = "Two-well elastic energies: profiles, rigidity, partitions and limits")]
struct Cli {
    /// Structured-text experiment config; its `[density]` section supplies density defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory against which all input and output paths are resolved.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct DensityArgs {
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    /// `hard-min` or `smooth-harmonic`.
    #[arg(long)]
    variant: Option<DensityVariant>,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal one-dimensional profiles and the double-profile construction.
    Profile {
        #[command(flatten)]
        density: DensityArgs,
        /// Comma-separated, strictly decreasing for `--double`.
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 4096)]
        n: usize,
        #[arg(long, default_value_t = 0.05)]
        clamp: f64,
        #[arg(long)]
        double: bool,
        /// Layer width rule such as `eps`, `2*eps` or `0.5*eps^0.5`.
        #[arg(long, default_value = "eps")]
        w_rule: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Minimise the grid energy with the boundary ring held fixed.
    Minimize {
        #[command(flatten)]
        density: DensityArgs,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        eps: f64,
        /// Defaults to `ε^{-1+1/(2d)}`.
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long, default_value_t = 1)]
        freeze: usize,
        #[arg(long, default_value_t = 5000)]
        max_iter: usize,
        #[arg(long, default_value_t = 1e-8)]
        grad_tol: f64,
        #[arg(long)]
        out: PathBuf,
        /// CSV file receiving the energy after every iteration.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Rotation and phase indicator of a stored field.
    Decompose {
        #[command(flatten)]
        density: DensityArgs,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "interior")]
        window: Window,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Slab partition, translations and rescaled displacement of a stored field.
    Partition {
        #[command(flatten)]
        density: DensityArgs,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 10.0)]
        threshold: f64,
        #[arg(long, default_value = "full")]
        window: Window,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Writes the rescaled displacement as TWG.
        #[arg(long)]
        u: Option<PathBuf>,
    },
    /// Limiting energy of a triple file.
    Gamma {
        #[command(flatten)]
        density: DensityArgs,
        #[arg(long)]
        triple: PathBuf,
        /// Surface constant; computed from the reduced density when omitted.
        #[arg(long = "K")]
        k: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// ε sweep through the full pipeline.
    Convergence {
        #[command(flatten)]
        density: DensityArgs,
        /// `example-ex`, `single-interface` or `double-interface`.
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        l: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
        #[arg(long)]
        w_rule: Option<String>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Built-in examples with known answers.
    Selftest,
}

struct Ctx {
    workdir: PathBuf,
    config: Option<ExperimentConfig>,
}

impl Ctx {
    fn path(&self, p: &Path) -> PathBuf {
        self.workdir.join(p)
    }

    fn density(&self, a: &DensityArgs, d: usize) -> Result<TwoWellDensity> {
        let (mut kappa, mut c, mut variant) = (1.0, 1.0, DensityVariant::HardMin);
        if let Some(cfg) = &self.config {
            (kappa, c, variant) = (cfg.kappa, cfg.c, cfg.variant);
        }
        TwoWellDensity::new(d, a.kappa.unwrap_or(kappa), a.c.unwrap_or(c), a.variant.unwrap_or(variant))
    }

    fn emit(&self, out: &Option<PathBuf>, text: &str) -> Result<()> {
        match out {
            Some(p) => std::fs::write(self.path(p), text)?,
            None => print!("{text}"),
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn profile_cmd(
    ctx: &Ctx,
    density: &DensityArgs,
    eps: &[f64],
    n: usize,
    clamp: f64,
    double: bool,
    w_rule: &str,
    out: &Option<PathBuf>,
) -> Result<()> {
    let rd = ReducedDensity::new(ctx.density(density, 2)?);
    let mut csv = String::new();
    if double {
        let rule = WRule::parse(w_rule)?;
        let rep = kdp_equals_2k_report(&rd, eps, &rule, n, clamp)?;
        csv.push_str("eps,K_eps,analytic_K,ratio,E_dp,E_dp_over_2K\n");
        for r in &rep.rows {
            let (e, q) = match (r.e_dp, r.dp_ratio()) {
                (Some(e), Some(q)) => (e.to_string(), q.to_string()),
                _ => (String::new(), String::new()),
            };
            let _ = writeln!(csv, "{},{},{},{},{e},{q}", r.eps, r.k_eps, r.analytic_k, r.ratio());
        }
        log::info!("double profiles glued from eps0 = {}", rep.eps0);
    } else {
        let k = analytic_k(&rd, 20_000)?;
        csv.push_str("eps,K_eps,analytic_K,ratio\n");
        for &e in eps {
            let s = solve_single_profile(&rd, e, n, clamp)?;
            let _ = writeln!(csv, "{e},{},{k},{}", s.energy, s.energy / k);
        }
    }
    ctx.emit(out, &csv)
}

#[allow(clippy::too_many_arguments)]
fn minimize_cmd(
    ctx: &Ctx,
    density: &DensityArgs,
    input: &Path,
    eps: f64,
    eta: Option<f64>,
    freeze: usize,
    opts: MinimizeOptions,
    out: &Path,
    trace: &Option<PathBuf>,
) -> Result<bool> {
    let y0 = load_field(&ctx.path(input))?;
    let d = y0.dim();
    let w = ctx.density(density, d)?;
    let p = match eta {
        Some(eta) => EnergyParams::with_eta(eps, eta, d)?,
        None => EnergyParams::new(eps, d)?,
    };
    let frozen = y0.boundary_mask(freeze);
    let res = minimize(&y0, &w, &p, &frozen, &opts)?;
    save_field(&res.y, &ctx.path(out))?;
    if let Some(t) = trace {
        let mut csv = String::from("iteration,energy\n");
        for (i, e) in res.trace.iter().enumerate() {
            let _ = writeln!(csv, "{i},{e}");
        }
        std::fs::write(ctx.path(t), csv)?;
    }
    let e = energy_eval(&res.y, &w, &p)?;
    println!(
        "{}",
        json!({
            "iterations": res.iterations,
            "converged": res.converged,
            "grad_norm": res.grad_norm,
            "energy": e,
        })
    );
    Ok(res.converged)
}

fn decompose_cmd(ctx: &Ctx, density: &DensityArgs, input: &Path, window: Window, out: &Option<PathBuf>) -> Result<()> {
    let y = load_field(&ctx.path(input))?;
    let w = ctx.density(density, y.dim())?;
    let dec = decompose_phases(&y, &w, &DecomposeOptions { window, ..Default::default() })?;
    ctx.emit(out, &format!("{}\n", serde_json::to_string_pretty(&dec.to_json())?))
}

#[allow(clippy::too_many_arguments)]
fn partition_cmd(
    ctx: &Ctx,
    density: &DensityArgs,
    input: &Path,
    eps: f64,
    threshold: f64,
    window: Window,
    out: &Option<PathBuf>,
    u: &Option<PathBuf>,
) -> Result<()> {
    let y = load_field(&ctx.path(input))?;
    let w = ctx.density(density, y.dim())?;
    let dec = decompose_phases(&y, &w, &DecomposeOptions { window, ..Default::default() })?;
    let raw = build_partition(&dec.phi, eps)?;
    let raw = component_translations(&y, &dec.r, &raw, &w)?;
    let part = coarsen_partition(&raw, eps, threshold)?;
    if let Some(p) = u {
        let disp = rescaled_displacement(&y, &dec.r, &part, &w)?;
        save_field(&disp.u, &ctx.path(p))?;
    }
    let origin = *y.geom.origin.last().expect("non-empty grid");
    let report = json!({
        "rotation": dec.r.to_row_vec(),
        "threshold": threshold,
        "components_before_coarsening": raw.components.len(),
        "partition": part.to_json(origin),
    });
    ctx.emit(out, &format!("{}\n", serde_json::to_string_pretty(&report)?))
}

fn gamma_cmd(ctx: &Ctx, density: &DensityArgs, triple: &Path, k: Option<f64>, out: &Option<PathBuf>) -> Result<()> {
    let t = LimitingTriple::parse(&std::fs::read_to_string(ctx.path(triple))?)?;
    let w = ctx.density(density, t.d)?;
    let k = match k {
        Some(k) => k,
        None => analytic_k(&ReducedDensity::new(w), 20_000)?,
    };
    let adm = check_admissible(&t)?;
    let energy = if adm.ok { Some(limiting_energy(&t, k, &w)?) } else { None };
    let report = json!({ "K": k, "admissibility": adm, "energy": energy });
    ctx.emit(out, &format!("{}\n", serde_json::to_string_pretty(&report)?))?;
    if adm.ok {
        Ok(())
    } else {
        let msgs: Vec<String> = adm.violations.iter().map(|v| v.message.clone()).collect();
        Err(Error::NotAdmissible(msgs.join("; ")))
    }
}

#[allow(clippy::too_many_arguments)]
fn convergence_cmd(
    ctx: &Ctx,
    density: &DensityArgs,
    scenario: &Option<String>,
    l: Option<f64>,
    eps: &Option<Vec<f64>>,
    w_rule: &Option<String>,
    threshold: Option<f64>,
    csv: &Option<PathBuf>,
    json_out: &Option<PathBuf>,
) -> Result<()> {
    let mut cfg =
        ctx.config.clone().unwrap_or_else(|| ExperimentConfig::new(Scenario::SingleInterface, vec![0.1, 0.05, 0.025]));
    let w = ctx.density(density, 2)?;
    (cfg.kappa, cfg.c, cfg.variant) = (w.kappa, w.c, w.variant);
    if let Some(e) = eps {
        cfg.eps = e.clone();
    }
    if let Some(t) = threshold {
        cfg.threshold = t;
    }
    if let Some(name) = scenario {
        cfg.scenario = match name.as_str() {
            "example-ex" => Scenario::ExampleEx { l: l.unwrap_or(1.0) },
            "single-interface" => Scenario::SingleInterface,
            "double-interface" => {
                Scenario::DoubleInterface { w_rule: WRule::parse(w_rule.as_deref().unwrap_or("eps"))? }
            }
            o => return Err(Error::InvalidInput(format!("unknown scenario `{o}`"))),
        };
    } else {
        match &mut cfg.scenario {
            Scenario::ExampleEx { l: cl } => *cl = l.unwrap_or(*cl),
            Scenario::DoubleInterface { w_rule: r } => {
                if let Some(s) = w_rule {
                    *r = WRule::parse(s)?;
                }
            }
            _ => {}
        }
    }
    if csv.is_some() {
        cfg.csv = csv.clone();
    }
    if json_out.is_some() {
        cfg.json = json_out.clone();
    }
    cfg.validate()?;
    let report = run_convergence(&cfg, &ctx.workdir)?;
    let written = report.write(&ctx.workdir)?;
    if written.is_empty() {
        print!("{}", report.to_csv());
    }
    Ok(())
}

fn selftest_cmd() -> bool {
    let cases = run_selftest();
    for c in &cases {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    cases.iter().all(|c| c.passed)
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Stagnation { .. } => 3,
        Error::Io(_) => 1,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<u8> {
    let config = match &cli.config {
        Some(p) => Some(ExperimentConfig::load(&cli.workdir.join(p))?),
        None => None,
    };
    let ctx = Ctx { workdir: cli.workdir, config };
    match &cli.command {
        Command::Profile { density, eps, n, clamp, double, w_rule, out } => {
            profile_cmd(&ctx, density, eps, *n, *clamp, *double, w_rule, out)?;
        }
        Command::Minimize { density, input, eps, eta, freeze, max_iter, grad_tol, out, trace } => {
            let opts = MinimizeOptions { max_iter: *max_iter, grad_tol: *grad_tol, ..Default::default() };
            if !minimize_cmd(&ctx, density, input, *eps, *eta, *freeze, opts, out, trace)? {
                eprintln!("error: iteration limit reached before convergence");
                return Ok(3);
            }
        }
        Command::Decompose { density, input, window, out } => decompose_cmd(&ctx, density, input, *window, out)?,
        Command::Partition { density, input, eps, threshold, window, out, u } => {
            partition_cmd(&ctx, density, input, *eps, *threshold, *window, out, u)?;
        }
        Command::Gamma { density, triple, k, out } => gamma_cmd(&ctx, density, triple, *k, out)?,
        Command::Convergence { density, scenario, l, eps, w_rule, threshold, csv, json } => {
            convergence_cmd(&ctx, density, scenario, *l, eps, w_rule, *threshold, csv, json)?;
        }
        Command::Selftest => {
            if !selftest_cmd() {
                return Ok(1);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
