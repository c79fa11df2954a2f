use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bnls_core::boussinesq::{init_from_plane_waves, linear_energy, Observer, Stepper};
use bnls_core::composer::{build_envelopes, compose_fas, fas_residual, second_correction_denominators};
use bnls_core::config::Config;
use bnls_core::dispersion::{branch, nls_coefficients};
use bnls_core::error::Error;
use bnls_core::harness::{
    fas_residual_experiment, norms_experiment, residual_step, run_reduction_experiment, schedule, setup_for_eps,
    NamedFit,
};
use bnls_core::io::{report_paths, save_checkpoint, write_atomic, write_json, write_reduction_report, write_residual_report};
use bnls_core::wave::{solve_wave, wave_energy};

#[derive(Parser)]
#[command(name = "bnls", version, about = "Boussinesq to NLS reduction: solvers and validation pipelines")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Override a config value, e.g. `--set dispersion.nu=2`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Print the effective config and exit.
    #[arg(long, global = true)]
    print_config: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the full equation for one amplitude.
    SimulateBoussinesq(Single),
    /// Integrate both carrier envelopes and log their invariants.
    SimulateNls(Single),
    /// Evolve the zero harmonic.
    SimulateWave(Single),
    /// Evaluate the composed approximation on the fast grid.
    Compose {
        #[command(flatten)]
        single: Single,
        /// Time; defaults to T/ε².
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        terms: Option<usize>,
    },
    /// ε-sweep of full solution against the composed approximation.
    ValidateReduction,
    /// ε-sweep of the equation residual of the composed approximation.
    FasResidual {
        #[arg(long)]
        terms: Option<usize>,
    },
    /// Weighted-norm constants and band diagnostics.
    Norms,
    /// Print dispersion and envelope coefficients.
    DeriveCoefficients,
}

#[derive(Args)]
struct Single {
    /// Amplitude; defaults to the first entry of `experiment.eps_list`.
    #[arg(long)]
    eps: Option<f64>,
}

enum Failure {
    Input(String),
    Runtime { message: String, record: Option<PathBuf> },
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Runtime { message: e.to_string(), record: None }
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime { message, record }) => {
            eprintln!("runtime failure: {message}");
            if let Some(p) = record {
                eprintln!("failure record: {}", p.display());
            }
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    let c = &cli.common;
    if let Some(p) = &c.config {
        if !p.exists() {
            return Err(Failure::Input(format!("config file {} does not exist", p.display())));
        }
    }
    let cfg = Config::load_with_overrides(c.config.as_deref(), &c.overrides)?;
    if c.print_config {
        print!("{}", cfg.to_toml_string()?);
        return Ok(());
    }
    let out = c.out.as_path();
    let result = match &cli.command {
        Command::SimulateBoussinesq(s) => simulate_boussinesq(&cfg, out, pick_eps(&cfg, s.eps)),
        Command::SimulateNls(s) => simulate_nls(&cfg, out, pick_eps(&cfg, s.eps)),
        Command::SimulateWave(s) => simulate_wave(&cfg, out, pick_eps(&cfg, s.eps)),
        Command::Compose { single, t, terms } => {
            compose(&cfg, out, pick_eps(&cfg, single.eps), *t, terms.unwrap_or(cfg.composer.terms))
        }
        Command::ValidateReduction => return validate_reduction(&cfg, out),
        Command::FasResidual { terms } => return residual(&cfg, out, terms.unwrap_or(cfg.composer.terms)),
        Command::Norms => norms(&cfg, out),
        Command::DeriveCoefficients => derive_coefficients(&cfg),
    };
    result.map_err(|e| record_failure(&cfg, out, e))
}

/// Runtime errors leave a JSON record next to the outputs.
fn record_failure(cfg: &Config, out: &Path, e: Error) -> Failure {
    match Failure::from(e) {
        Failure::Runtime { message, .. } => {
            let path = out.join(format!("failure-{}.json", cfg.short_hash()));
            let body = serde_json::json!({ "config_hash": cfg.hash(), "error": message });
            let record = write_json(&path, &body).ok().map(|_| path);
            Failure::Runtime { message, record }
        }
        f => f,
    }
}

fn pick_eps(cfg: &Config, eps: Option<f64>) -> f64 {
    eps.unwrap_or(cfg.experiment.eps_list[0])
}

fn csv_line(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(",") + "\n"
}

fn simulate_boussinesq(cfg: &Config, out: &Path, eps: f64) -> Result<(), Error> {
    let setup = setup_for_eps(cfg, eps)?;
    let params = &setup.carrier.params;
    let state = init_from_plane_waves(&setup.carrier, &setup.fast)?;
    let mut stepper = Stepper::new(&state, setup.dt, &params.nonlinearity, params)?;
    let tag = cfg.short_hash();
    let stride = cfg.boussinesq_solver.checkpoint_stride;
    let mut written = 0usize;
    let mut checkpoint_error = None;
    let mut csv = String::from("t,sup_u,linear_energy\n");
    for t in schedule(setup.t_end, cfg.harness.schedule_points, cfg.harness.schedule_start) {
        {
            let mut observers = Vec::new();
            if stride > 0 {
                observers.push(Observer {
                    stride,
                    callback: Box::new(|s: &bnls_core::boussinesq::BoussinesqState| {
                        let p = out.join(format!("boussinesq-{tag}-checkpoint-{written:05}.json"));
                        written += 1;
                        if let Err(e) = save_checkpoint(&p, s) {
                            checkpoint_error.get_or_insert(e);
                        }
                    }),
                });
            }
            stepper.advance_to(t, &mut observers)?;
        }
        if let Some(e) = checkpoint_error.take() {
            return Err(e);
        }
        let snap = stepper.snapshot()?;
        csv += &csv_line(&[t, snap.u.max_abs(), linear_energy(&snap, params)]);
    }
    let final_path = out.join(format!("boussinesq-{tag}-final.json"));
    save_checkpoint(&final_path, &stepper.snapshot()?)?;
    write_atomic(&out.join(format!("boussinesq-{tag}.csv")), csv.as_bytes())?;
    println!("t_end = {}, steps = {}, checkpoint {}", setup.t_end, stepper.steps(), final_path.display());
    Ok(())
}

fn simulate_nls(cfg: &Config, out: &Path, eps: f64) -> Result<(), Error> {
    let setup = setup_for_eps(cfg, eps)?;
    let set = build_envelopes(&setup.carrier, &setup.slow, &cfg.envelope_options())?;
    let mut csv = String::from("branch,theta,mass,hamiltonian\n");
    for b in 0..2 {
        let log = set.conservation_log(b);
        for s in &log {
            csv += &format!("{},{:e},{:e},{:e}\n", if b == 0 { "+" } else { "-" }, s.theta, s.mass, s.hamiltonian);
        }
        if let (Some(first), Some(last)) = (log.first(), log.last()) {
            println!(
                "branch {}: relative mass drift {:.3e}, hamiltonian drift {:.3e}",
                if b == 0 { "+" } else { "-" },
                (last.mass - first.mass).abs() / first.mass.abs().max(f64::MIN_POSITIVE),
                (last.hamiltonian - first.hamiltonian).abs() / first.hamiltonian.abs().max(f64::MIN_POSITIVE)
            );
        }
    }
    let path = out.join(format!("nls-{}.csv", cfg.short_hash()));
    write_atomic(&path, csv.as_bytes())?;
    println!("wrote {}", path.display());
    Ok(())
}

fn simulate_wave(cfg: &Config, out: &Path, eps: f64) -> Result<(), Error> {
    let setup = setup_for_eps(cfg, eps)?;
    let phi0 = bnls_core::spectral::RealField::new(
        setup.slow.clone(),
        cfg.envelopes.phi0.sample(&setup.slow).iter().map(|c| c.re).collect(),
    )?;
    let tau_end = cfg.experiment.horizon / eps;
    let mut csv = String::from("tau,energy,sup_v0,mean_v0\n");
    for tau in schedule(tau_end, cfg.harness.schedule_points, cfg.harness.schedule_start) {
        let s = solve_wave(&phi0, tau)?;
        csv += &csv_line(&[tau, wave_energy(&s), s.v0.max_abs(), s.v0.mean()]);
    }
    let path = out.join(format!("wave-{}.csv", cfg.short_hash()));
    write_atomic(&path, csv.as_bytes())?;
    println!("wrote {}", path.display());
    Ok(())
}

fn compose(cfg: &Config, out: &Path, eps: f64, t: Option<f64>, terms: usize) -> Result<(), Error> {
    let setup = setup_for_eps(cfg, eps)?;
    let set = build_envelopes(&setup.carrier, &setup.slow, &cfg.envelope_options())?;
    let t = t.unwrap_or(setup.t_end);
    let u = compose_fas(&set, t, &setup.fast, terms)?;
    let h = residual_step(cfg, &set.params)?;
    let r = fas_residual(&set, t, &setup.fast, terms, &set.params.nonlinearity, h)?;
    let grid = &setup.fast;
    let coords: Vec<Vec<f64>> = (0..grid.dims()).map(|a| grid.coordinates(a)).collect();
    let mut header: Vec<String> = (0..grid.dims()).map(|a| format!("x{a}")).collect();
    header.extend(["u".to_string(), "residual".to_string()]);
    let mut csv = header.join(",") + "\n";
    let points = grid.points();
    for flat in 0..grid.len() {
        let mut rem = flat;
        let mut row = vec![0.0; grid.dims() + 2];
        for a in (0..grid.dims()).rev() {
            row[a] = coords[a][rem % points[a]];
            rem /= points[a];
        }
        row[grid.dims()] = u.values[flat];
        row[grid.dims() + 1] = r.values[flat];
        csv += &csv_line(&row);
    }
    let path = out.join(format!("compose-{}-terms{terms}.csv", cfg.short_hash()));
    write_atomic(&path, csv.as_bytes())?;
    println!("t = {t}, terms = {terms}: sup|u| = {:.6e}, sup residual = {:.6e}", u.max_abs(), r.max_abs());
    println!("wrote {}", path.display());
    Ok(())
}

fn print_fit(f: &NamedFit) {
    let verdict = match f.passed {
        Some(true) => "PASS",
        Some(false) => "FAIL",
        None if f.window.is_some() => "UNDECIDED",
        None => "-",
    };
    match &f.fit {
        Some(fit) => println!(
            "{:<26} slope {:>7.3} [{:.3}, {:.3}]  r2 {:.4}  {:?}  window {:?}  {verdict}",
            f.quantity, fit.slope, fit.slope_ci[0], fit.slope_ci[1], fit.r2, fit.status, f.window
        ),
        None => println!("{:<26} skipped: {}", f.quantity, f.note.as_deref().unwrap_or("")),
    }
}

fn validate_reduction(cfg: &Config, out: &Path) -> Outcome {
    let report = run_reduction_experiment(cfg)?;
    let (json, csv) = write_reduction_report(out, &report).map_err(Failure::from)?;
    for f in &report.fits {
        print_fit(f);
    }
    println!("wrote {} and {}", json.display(), csv.display());
    let failures = report.failures();
    if !failures.is_empty() {
        let message = failures.iter().map(|(e, m)| format!("eps = {e}: {m}")).collect::<Vec<_>>().join("; ");
        return Err(Failure::Runtime { message, record: Some(json) });
    }
    Ok(())
}

fn residual(cfg: &Config, out: &Path, terms: usize) -> Outcome {
    let report = fas_residual_experiment(cfg, terms)?;
    let (json, csv) = write_residual_report(out, &report).map_err(Failure::from)?;
    print_fit(&report.residual_fit);
    print_fit(&report.mismatch_fit);
    println!("wrote {} and {}", json.display(), csv.display());
    let failed: Vec<String> =
        report.records.iter().filter_map(|r| r.failure.as_ref().map(|m| format!("eps = {}: {m}", r.eps))).collect();
    if !failed.is_empty() {
        return Err(Failure::Runtime { message: failed.join("; "), record: Some(json) });
    }
    Ok(())
}

fn norms(cfg: &Config, out: &Path) -> Result<(), Error> {
    let report = norms_experiment(cfg)?;
    for r in &report.runs {
        println!(
            "half width {:>3}: M0 = {:.6}, worst power ratio {:.4}, worst Lipschitz ratio {:.4}",
            r.half_width,
            r.convolution.m0,
            r.powers.iter().map(|p| p.worst_ratio).fold(0.0, f64::max),
            r.lipschitz.worst_ratio
        );
    }
    println!("M0 variation {:.3e}, violations {}", report.m0_variation, report.violations());
    println!("transport ratios {:?}, max/min {:.3}", report.transport.ratios, report.transport.max_over_min);
    let (json, _) = report_paths(out, "norms", &report.provenance.config_hash);
    write_json(&json, &report)?;
    println!("wrote {}", json.display());
    Ok(())
}

fn derive_coefficients(cfg: &Config) -> Result<(), Error> {
    let params = cfg.physical_params()?;
    println!("branch,k,omega,omega_prime,omega_second,alpha,delta,gamma");
    for sign in [1, -1] {
        let b = branch(1, sign, &params)?;
        let c = nls_coefficients(&b, &params);
        println!(
            "{},{},{:.10},{:.10},{:.10},{:.10},{:.10},{:.10}",
            if sign > 0 { "+" } else { "-" },
            b.k,
            b.omega,
            b.vg,
            b.curvature,
            c.alpha,
            c.delta,
            c.gamma
        );
    }
    println!();
    println!("k,Omega,denominator");
    for (k, omega, d) in second_correction_denominators(&params)? {
        println!("{k},{omega:.10},{d:.10}");
    }
    Ok(())
}
