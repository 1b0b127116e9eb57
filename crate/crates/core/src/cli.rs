//! The `aggdiff` command line.
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors, 2 for
//! numerical failures (instability, non-convergence, no steady state) and
//! for a verification suite with failing checks.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evolution::{self, SimConfig};
use crate::kernels::{KernelSpec, KernelType};
use crate::steady::{self, HalfSupportProblem};
use crate::verify::{self, Suite};

#[derive(Debug, Parser)]
#[command(name = "aggdiff", version, about = "Steady states of the 1-d aggregation equation with quadratic diffusion")]
pub struct Cli {
    /// Seed for randomized checks.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "AGGDIFF_THREADS")]
    pub threads: Option<usize>,
    /// Suppress progress and summary messages.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the explicit finite-difference evolution from a JSON config.
    Simulate(SimulateArgs),
    /// Steady state for a given diffusivity.
    Steady(SteadyArgs),
    /// Largest eigenvalue eps(L) over log-spaced half-support lengths.
    Eigencurve(CurveArgs),
    /// Leading eigenfunctions and profiles for several L.
    Eigenfunctions(EigenfunctionArgs),
    /// Property suite; writes a JSON array of check reports.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Diagnostics CSV `t,mass,com,energy,l2`.
    #[arg(long)]
    pub out: PathBuf,
    /// Final density CSV `x,rho`.
    #[arg(long = "final")]
    pub final_state: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Gaussian,
    Laplace,
    Custom,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct KernelArgs {
    #[arg(long, value_enum, default_value_t = KernelKind::Gaussian)]
    pub kernel: KernelKind,
    /// Gaussian standard deviation.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Laplace length scale.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// `r,g` samples of a custom radial profile.
    #[arg(long)]
    pub samples: Option<PathBuf>,
}

impl KernelArgs {
    fn spec(&self) -> KernelSpec {
        let mut spec = match self.kernel {
            KernelKind::Gaussian => KernelSpec::gaussian(self.sigma),
            KernelKind::Laplace => KernelSpec::laplace(self.scale),
            KernelKind::Custom => KernelSpec {
                kind: KernelType::Custom,
                sigma: None,
                scale: None,
                samples_path: None,
                amplitude: None,
                normalize: true,
            },
        };
        spec.samples_path = self.samples.clone();
        spec
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SteadyArgs {
    #[arg(long)]
    pub epsilon: f64,
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Intervals on [0, L].
    #[arg(long, default_value_t = 400)]
    pub m: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CurveArgs {
    #[arg(long = "Lmin", default_value_t = 0.01)]
    pub l_min: f64,
    #[arg(long = "Lmax", default_value_t = 20.0)]
    pub l_max: f64,
    #[arg(long, default_value_t = 50)]
    pub points: usize,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[arg(long, default_value_t = 400)]
    pub m: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EigenfunctionArgs {
    /// Comma-separated half-support lengths.
    #[arg(long = "L", value_delimiter = ',', required = true)]
    pub lengths: Vec<f64>,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[arg(long, default_value_t = 400)]
    pub m: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    #[arg(long, default_value = "full", value_parser = ["full", "quick"])]
    pub suite: String,
    #[arg(long)]
    pub out: PathBuf,
}

/// Written next to the outputs of every successful run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_hash: String,
    pub tool_version: String,
    pub outputs: Vec<PathBuf>,
    pub wall_time: f64,
}

/// SHA-256 of the compact JSON serialization of a parsed configuration.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// `<out>.manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("warning: could not configure {threads} threads: {e}");
        }
    }
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let start = Instant::now();
    let log = |msg: String| {
        if !cli.quiet {
            eprintln!("{msg}");
        }
    };
    let (name, hash, outputs, manifest_file, code) = match &cli.command {
        Command::Simulate(args) => {
            let cfg = SimConfig::from_json_file(&args.config)?;
            for w in cfg.validate()? {
                log(format!("warning: {w}"));
            }
            let base = args.config.parent().filter(|p| !p.as_os_str().is_empty());
            let trace = evolution::run(&cfg, base)?;
            trace.save_csv(&args.out)?;
            let mut outputs = vec![args.out.clone()];
            if let Some(path) = &args.final_state {
                trace.final_state.save_csv(path)?;
                outputs.push(path.clone());
            }
            log(format!("simulate: {trace}"));
            ("simulate", config_hash(&cfg)?, outputs, manifest_path(&args.out), 0)
        }
        Command::Steady(args) => {
            let (kernel, eps) = args.kernel.spec().build_with_epsilon(args.epsilon, None)?;
            let result = steady::solve_for_epsilon(&kernel, eps, args.m)?;
            result.rho.save_csv(&args.out)?;
            log(format!(
                "steady: eps = {}, L = {:.10}, max rho = {:.10}, {} power iterations, residual {:.2e}",
                result.epsilon,
                result.length,
                result.rho.max(),
                result.iterations,
                result.residual
            ));
            ("steady", config_hash(args)?, vec![args.out.clone()], manifest_path(&args.out), 0)
        }
        Command::Eigencurve(args) => {
            if !(args.l_min > 0.0 && args.l_max > args.l_min && args.points >= 2) {
                return Err(Error::InvalidInput("need 0 < Lmin < Lmax and at least 2 points".into()));
            }
            let kernel = args.kernel.spec().build_with_epsilon(0.0, None)?.0;
            let ls = steady::log_spaced(args.l_min, args.l_max, args.points);
            let curve = steady::epsilon_of_l_curve(&kernel, &ls, args.m)?;
            let mut w = csv::Writer::from_path(&args.out)?;
            w.write_record(["L", "epsilon", "lambda2"])?;
            for p in &curve {
                w.write_record([fmt(p.length), fmt(p.epsilon), fmt(p.lambda2)])?;
            }
            w.flush()?;
            log(format!(
                "eigencurve: {} points, eps from {:.3e} to {:.10}",
                curve.len(),
                curve[0].epsilon,
                curve[curve.len() - 1].epsilon
            ));
            ("eigencurve", config_hash(args)?, vec![args.out.clone()], manifest_path(&args.out), 0)
        }
        Command::Eigenfunctions(args) => {
            let kernel = args.kernel.spec().build_with_epsilon(0.0, None)?.0;
            std::fs::create_dir_all(&args.out_dir)?;
            let mut outputs = Vec::new();
            for &l in &args.lengths {
                let p = HalfSupportProblem::new(&kernel, l, args.m)?;
                let r = p.leading_eigenpair()?;
                let path = args.out_dir.join(format!("eigenfunction_L{l}.csv"));
                let mut w = csv::Writer::from_path(&path)?;
                w.write_record(["x", "u", "rho"])?;
                for ((x, u), rho) in p.nodes().iter().zip(&r.u).zip(r.rho_half()) {
                    w.write_record([fmt(*x), fmt(*u), fmt(*rho)])?;
                }
                w.flush()?;
                log(format!("eigenfunctions: L = {l}, eps(L) = {:.10}", r.epsilon));
                outputs.push(path);
            }
            (
                "eigenfunctions",
                config_hash(args)?,
                outputs,
                args.out_dir.join("manifest.json"),
                0,
            )
        }
        Command::Verify(args) => {
            let suite: Suite = args.suite.parse().map_err(Error::InvalidInput)?;
            let reports = verify::run_suite(suite, cli.seed);
            std::fs::write(&args.out, serde_json::to_string_pretty(&reports)? + "\n")?;
            let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.check_id.as_str()).collect();
            log(format!("verify: {} checks, {} failed", reports.len(), failed.len()));
            for id in &failed {
                log(format!("  FAILED {id}"));
            }
            #[derive(Serialize)]
            struct VerifyConfig<'a> {
                suite: &'a str,
                seed: u64,
            }
            let hash = config_hash(&VerifyConfig {
                suite: &args.suite,
                seed: cli.seed,
            })?;
            let code = if failed.is_empty() { 0 } else { 2 };
            ("verify", hash, vec![args.out.clone()], manifest_path(&args.out), code)
        }
    };
    let manifest = RunManifest {
        subcommand: name.to_string(),
        config_hash: hash,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        outputs,
        wall_time: start.elapsed().as_secs_f64(),
    };
    std::fs::write(manifest_file, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(code)
}

fn fmt(v: f64) -> String {
    crate::grid::fmt17(v)
}
