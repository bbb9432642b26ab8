use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use sdiq::certify::{build_dual, build_primal, hoeffding_delta, hmin, OverlapConstraint};
use sdiq::extract::{toeplitz_hash, ExtractorParams};
use sdiq::phase_space::prob_heterodyne;

use crate::commands::{cmd_certify, cmd_extract, cmd_simulate, cmd_track};
use crate::config::{parse_count, PipelineConfig};
use crate::error::{CliError, ExitKind};
use crate::sweep::cmd_sweep;

#[derive(Debug, Parser)]
#[command(name = "sdiq", version, about = "Heterodyne semi-device-independent QRNG: simulate, track, certify, extract")]
pub struct Cli {
    /// JSON configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_count)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a trial stream.
    Simulate(SimulateArgs),
    /// Track the phase, classify outcomes and count events.
    Track(TrackArgs),
    /// Bound the guessing probability of counted events.
    Certify(CertifyArgs),
    /// Hash classified outcomes into output bits.
    Extract(ExtractArgs),
    /// Min-entropy curves over mu (ideal, inefficient, homodyne angles).
    Sweep(SweepArgs),
    /// Quick numerical checks of the installation.
    Selftest,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, value_parser = parse_count)]
    pub rounds: Option<u64>,
    #[arg(long)]
    pub rep_rate: Option<f64>,
    #[arg(long)]
    pub drift_deg_s: Option<f64>,
    #[arg(long)]
    pub diffusion_deg_sqrt_s: Option<f64>,
    #[arg(long)]
    pub phi0_deg: Option<f64>,
    /// Also write a CSV copy of the trials.
    #[arg(long)]
    pub csv: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_parser = parse_count)]
    pub chunk_size: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[arg(long)]
    pub counts: Option<PathBuf>,
    /// Declared energy bound.
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub epsilon_re: Option<f64>,
    #[arg(long)]
    pub finite_size: bool,
    #[arg(long)]
    pub mu_inflation: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub certificate: Option<PathBuf>,
    #[arg(long)]
    pub seed_file: Option<PathBuf>,
    #[arg(long, value_parser = parse_count)]
    pub block_bits: Option<u64>,
    #[arg(long)]
    pub epsilon_re: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Comma-separated mu grid.
    #[arg(long, value_delimiter = ',')]
    pub mu: Option<Vec<f64>>,
    #[arg(long)]
    pub eta: Option<f64>,
    /// Comma-separated homodyne angles in degrees.
    #[arg(long, value_delimiter = ',')]
    pub theta_deg: Option<Vec<f64>>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

/// Configuration file (or defaults) overridden by the flags.
pub fn resolve(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    set(&mut cfg.seed, cli.seed);
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    set(&mut cfg.output_dir, cli.output_dir.clone());
    match &cli.command {
        Command::Simulate(a) => {
            set(&mut cfg.mu, a.mu);
            set(&mut cfg.eta, a.eta);
            set(&mut cfg.rounds, a.rounds);
            set(&mut cfg.rep_rate, a.rep_rate);
            set(&mut cfg.drift_deg_s, a.drift_deg_s);
            set(&mut cfg.diffusion_deg_sqrt_s, a.diffusion_deg_sqrt_s);
            set(&mut cfg.phi0_deg, a.phi0_deg);
            cfg.trials_csv |= a.csv;
            if a.out.is_some() {
                cfg.paths.trials = a.out.clone();
            }
        }
        Command::Track(a) => {
            if a.input.is_some() {
                cfg.paths.trials = a.input.clone();
            }
            set(&mut cfg.chunk_size, a.chunk_size.map(|c| c as usize));
        }
        Command::Certify(a) => {
            if a.counts.is_some() {
                cfg.paths.counts = a.counts.clone();
            }
            set(&mut cfg.mu, a.mu);
            set(&mut cfg.epsilon, a.epsilon);
            set(&mut cfg.epsilon_re, a.epsilon_re);
            cfg.finite_size |= a.finite_size;
            set(&mut cfg.mu_inflation, a.mu_inflation);
        }
        Command::Extract(a) => {
            if a.input.is_some() {
                cfg.paths.classified = a.input.clone();
            }
            if a.certificate.is_some() {
                cfg.paths.certificate = a.certificate.clone();
            }
            if a.seed_file.is_some() {
                cfg.paths.seed_file = a.seed_file.clone();
            }
            set(&mut cfg.block_bits, a.block_bits.map(|b| b as usize));
            set(&mut cfg.epsilon_re, a.epsilon_re);
        }
        Command::Sweep(a) => {
            set(&mut cfg.sweep_mu, a.mu.clone());
            set(&mut cfg.sweep_eta, a.eta);
            set(&mut cfg.sweep_theta_deg, a.theta_deg.clone());
        }
        Command::Selftest => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

/// `(name, passed, detail)` for each built-in check.
pub fn selftest() -> Vec<(&'static str, bool, String)> {
    let mut out = Vec::new();

    let e = erf_check();
    out.push(("erf(1)", e < 1e-12, format!("abs error {e:.2e}")));

    let d = hoeffding_delta(1e-10, 1_000_000).map(|d| (d - 4.0755e-3).abs()).unwrap_or(f64::INFINITY);
    out.push(("hoeffding width", d < 1e-7, format!("deviation {d:.2e}")));

    let mu: f64 = 0.1;
    let sdp = OverlapConstraint::from_energy(mu).and_then(|oc| {
        let pt = prob_heterodyne(mu.sqrt());
        let dual = build_dual(&pt, &oc)?.problem.solve()?;
        let primal = build_primal(&pt, &oc)?.problem.solve()?;
        Ok((dual.objective, dual.objective - primal.objective))
    });
    match sdp {
        Ok((pg, gap)) => out.push((
            "guessing probability at mu=0.1",
            (pg - 0.884907).abs() < 2e-6 && gap.abs() < 1e-6,
            format!("Pg {pg:.7}, primal-dual gap {gap:.1e}"),
        )),
        Err(e) => out.push(("guessing probability at mu=0.1", false, e.to_string())),
    }

    let infeasible = matches!(hmin(&prob_heterodyne(10.0), 0.01), Err(sdiq::Error::Infeasible(_)));
    out.push(("infeasible data detected", infeasible, String::new()));

    let p = ExtractorParams {
        n_in: 3,
        n_out: 2,
        epsilon_re: 1e-10,
    };
    let h = toeplitz_hash(&[1, 1, 0], &[1, 0, 1, 1], &p);
    out.push(("toeplitz 3x2 example", matches!(&h, Ok(v) if v == &[1, 0]), format!("{h:?}")));
    out
}

fn erf_check() -> f64 {
    // erf(1) from p00 = ½(1 + erf(1)).
    let p00 = prob_heterodyne(1.0).p(0, 0);
    (2.0 * p00 - 1.0 - 0.842_700_792_949_714_9).abs()
}

fn execute(cli: &Cli, cfg: &PipelineConfig) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate(_) => {
            let m = cmd_simulate(cfg)?;
            println!("wrote {} records to {} (sha256 {})", m.n_records, cfg.trials_path().display(), m.trials_sha256);
        }
        Command::Track(_) => {
            let d = cmd_track(cfg)?;
            let t = d.table;
            println!(
                "p(0|0)={:.6} p(0|1)={:.6} p(1|0)={:.6} p(1|1)={:.6}  chunks used {} excluded {} ({} records)",
                t.p(0, 0),
                t.p(0, 1),
                t.p(1, 0),
                t.p(1, 1),
                d.usable_chunks,
                d.unusable_chunks.len(),
                d.excluded_records
            );
        }
        Command::Certify(_) => {
            let c = cmd_certify(cfg)?;
            println!(
                "Pg <= {:.9}  Hmin = {:.6} bits/round  ({}, gap {:.1e})",
                c.pg_upper,
                c.hmin_rate,
                if c.finite_size { "finite-size" } else { "asymptotic" },
                c.duality_gap
            );
        }
        Command::Extract(_) => {
            let r = cmd_extract(cfg)?;
            let m = &r.manifest;
            println!("extracted {} bits ({} blocks of {} -> {})", m.total_out, m.n_blocks, m.n_in, m.n_out);
            if let Some(s) = r.sanity {
                println!(
                    "monobit p={:.4} [{}]  runs p={:.4} [{}]",
                    s.monobit_p,
                    if s.monobit_pass() { "pass" } else { "FAIL" },
                    s.runs_p,
                    if s.runs_pass() { "pass" } else { "FAIL" }
                );
            }
        }
        Command::Sweep(_) => {
            let t = cmd_sweep(cfg)?;
            let (h, mu) = t.ideal_max();
            let (he, mue) = t.inefficient_max();
            println!("ideal max Hmin {h:.5} at mu={mu}; eta={} max {he:.5} at mu={mue}", t.eta);
        }
        Command::Selftest => {
            let results = selftest();
            for (name, ok, detail) in &results {
                println!("{} {name} {detail}", if *ok { "pass" } else { "FAIL" });
            }
            if results.iter().any(|r| !r.1) {
                return Err(CliError {
                    kind: ExitKind::Solver,
                    message: "selftest failed".into(),
                });
            }
        }
    }
    Ok(())
}

/// Parses `args`, runs the subcommand and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitKind::Usage as i32 } else { 0 };
        }
    };
    let result = resolve(&cli).and_then(|cfg| {
        let job = || execute(&cli, &cfg);
        match cfg.workers {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::usage(format!("worker pool: {e}")))?
                .install(job),
            None => job(),
        }
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}
