//! Command-line driver: subcommands, configuration loading and exit codes.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{convergence_study, rate_study, window_grid, ConvergenceStudy, RateStudy, Verdict};
use crate::biotsavart::{ExteriorDiskVelocity, ExteriorObstacleVelocity, PlaneVelocity, VelocityField};
use crate::config::RunConfig;
use crate::conformal::ObstacleMap;
use crate::corrector::{corrector_report, Corrector, ErrorTermField};
use crate::exterior_solver::{leray_check, solve_exterior, static_error};
use crate::output::{self, OutputDir};
use crate::transport::{evolve, Backend, BackendKind, EvolveOptions, VortexState};
use crate::{Error, Point, Result};

/// Exit code of a configuration error.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code of a failed verdict, a flagged solve or a runtime error.
pub const EXIT_FAIL: i32 = 1;

/// Environment variable that fixes the worker thread count.
pub const THREADS_ENV: &str = "EULER_SIEVE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "euler-sieve", version, about = "Incompressible flow through a sieve of small obstacles")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Override a configuration key, e.g. `--set domain.eps=0.05`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,

    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,

    /// Worker threads (overrides the environment variable).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the inclusion centers.
    GenDomain,
    /// Sample a velocity field on the study window grid.
    EvalField {
        /// plane, plane_masked, exterior_disk, exterior_obstacle, corrector, w1..w4, mfs
        #[arg(long)]
        field: Option<String>,
    },
    /// Norms of the corrector error terms and a closure check.
    CorrectorNorms,
    /// Solve the exterior problem and audit the solution.
    SolveExterior,
    /// Transport the vorticity with vortex blobs.
    Evolve {
        #[arg(long)]
        t_end: Option<f64>,
        /// Fixed step; 0 selects the CFL step.
        #[arg(long)]
        dt: Option<f64>,
        /// Particle spacing.
        #[arg(long)]
        h: Option<f64>,
        /// plane, corrector or mfs
        #[arg(long)]
        backend: Option<String>,
    },
    /// Corrector norms across `eps` and the fitted decay rate.
    RateStudy,
    /// Corrected transport against the plane reference across `eps`.
    ConvergenceStudy,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenDomain => "gen-domain",
            Command::EvalField { .. } => "eval-field",
            Command::CorrectorNorms => "corrector-norms",
            Command::SolveExterior => "solve-exterior",
            Command::Evolve { .. } => "evolve",
            Command::RateStudy => "rate-study",
            Command::ConvergenceStudy => "convergence-study",
        }
    }

    fn overrides(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Command::Evolve { t_end, dt, h, backend } = self {
            if let Some(v) = t_end {
                out.push(format!("transport.t_end={v:?}"));
            }
            if let Some(v) = dt {
                out.push(format!("transport.dt={v:?}"));
            }
            if let Some(v) = h {
                out.push(format!("transport.h={v:?}"));
            }
            if let Some(v) = backend {
                out.push(format!("transport.backend={v:?}"));
            }
        }
        if let Command::EvalField { field: Some(f) } = self {
            out.push(format!("study.field={f:?}"));
        }
        out
    }
}

/// Resolve the configuration of an invocation.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut overrides = cli.set.clone();
    overrides.extend(cli.command.overrides());
    if let Some(dir) = &cli.output_dir {
        overrides.push(format!("output_dir={:?}", dir.display().to_string()));
    }
    RunConfig::load(cli.config.as_deref(), &overrides)
}

fn init_threads(cli: &Cli) -> Result<()> {
    let n = match cli.threads {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("{THREADS_ENV} `{v}` is not a thread count")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        // a pool installed earlier in the process is kept
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Run one invocation; `Ok(false)` marks a failed verdict or flagged result.
pub fn run(cli: &Cli) -> Result<bool> {
    init_threads(cli)?;
    let cfg = resolve_config(cli)?;
    let out = OutputDir::create(&cfg.output_dir)?;
    out.manifest(cli.command.name(), &cfg.to_toml())?;
    match &cli.command {
        Command::GenDomain => gen_domain(&cfg, &out),
        Command::EvalField { .. } => eval_field(&cfg, &out),
        Command::CorrectorNorms => corrector_norms(&cfg, &out),
        Command::SolveExterior => solve(&cfg, &out),
        Command::Evolve { .. } => run_evolve(&cfg, &out),
        Command::RateStudy => run_rate_study(&cfg, &out),
        Command::ConvergenceStudy => run_convergence_study(&cfg, &out),
    }
}

/// Parse arguments, run, and map the outcome to a process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(true) => 0,
        Ok(false) => EXIT_FAIL,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAIL
        }
    }
}

fn gen_domain(cfg: &RunConfig, out: &OutputDir) -> Result<bool> {
    let d = cfg.build_domain()?;
    d.write_centers_csv(BufWriter::new(File::create(out.path("centers.csv"))?))?;
    println!(
        "eps = {}, alpha = {}, mu = {}: {} x {} = {} inclusions ({})",
        d.eps(),
        cfg.domain.alpha,
        cfg.domain.mu,
        d.params.n1(),
        d.params.n2(),
        d.len(),
        d.shape
    );
    Ok(true)
}

/// Velocities at `xs`, zero inside obstacles.
fn sample(u: &dyn VelocityField, xs: &[Point]) -> Result<Vec<Point>> {
    use rayon::prelude::*;
    xs.par_iter()
        .map(|&x| match u.velocity(x) {
            Err(Error::InsideObstacle(_)) => Ok(Point::new(0.0, 0.0)),
            r => r,
        })
        .collect()
}

fn eval_field(cfg: &RunConfig, out: &OutputDir) -> Result<bool> {
    let c = cfg.study.window_cells;
    let (xs, _) = window_grid(&cfg.window(), (c[0], c[1]));
    let f = cfg.vorticity()?;
    let quad = cfg.quad()?;
    let d = cfg.build_domain()?;
    let name = cfg.study.field.as_str();
    let (values, provenance) = match name {
        "plane" => {
            let u = PlaneVelocity::new(&f, None, quad);
            (sample(&u, &xs)?, u.provenance().to_string())
        }
        "plane_masked" => {
            let u = PlaneVelocity::new(&f, Some(&d), quad);
            (sample(&u, &xs)?, "plane_masked".to_string())
        }
        "exterior_disk" => {
            let u = ExteriorDiskVelocity::new(&f, quad)?;
            (sample(&u, &xs)?, u.provenance().to_string())
        }
        "exterior_obstacle" => {
            let [i, j] = cfg.study.inclusion;
            let u = ExteriorObstacleVelocity::new(&d, ObstacleMap::new(d.shape)?, i, j, &f, quad)?;
            (sample(&u, &xs)?, u.provenance().to_string())
        }
        "corrector" | "w1" | "w2" | "w3" | "w4" => {
            let c = Corrector::new(&d, &f, quad, cfg.profile()?)?;
            if name == "corrector" {
                (sample(&c, &xs)?, c.provenance().to_string())
            } else {
                let k = name[1..].parse::<usize>().unwrap_or(1);
                let u = ErrorTermField { corrector: &c, k };
                (sample(&u, &xs)?, u.provenance().to_string())
            }
        }
        "mfs" => {
            let u = solve_exterior(&d, &f, quad, cfg.mfs_params())?;
            (sample(&u, &xs)?, u.provenance().to_string())
        }
        other => return Err(Error::Config(format!("study.field `{other}` is not a known field"))),
    };
    out.table("field.csv", &output::field_table(&xs, &values, &provenance))?;
    println!("{} samples of {provenance}", xs.len());
    Ok(true)
}

fn corrector_norms(cfg: &RunConfig, out: &OutputDir) -> Result<bool> {
    let d = cfg.build_domain()?;
    let f = cfg.vorticity()?;
    let c = Corrector::new(&d, &f, cfg.quad()?, cfg.profile()?)?;
    let rep = corrector_report(&c)?;
    out.table("corrector_norms.csv", &output::corrector_table(std::slice::from_ref(&rep)))?;

    let block = d.lattice_block();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst: f64 = 0.0;
    let mut taken = 0;
    while taken < cfg.study.closure_points {
        let x = Point::new(rng.gen_range(block.x0..block.x1), rng.gen_range(block.y0..block.y1));
        if d.obstacle_at(x).is_some() {
            continue;
        }
        let t = c.terms(x);
        let v = c.corrector_velocity(x);
        worst = worst.max((t.total() - (t.plane - v)).norm() / t.plane.norm().max(1e-3));
        taken += 1;
    }
    println!(
        "||w1..w4|| = {:e} {:e} {:e} {:e}, ||w|| = {:e}, inclusions {:e}",
        rep.w[0], rep.w[1], rep.w[2], rep.w[3], rep.total, rep.inclusions
    );
    println!("closure: max relative gap {worst:e} over {taken} points");
    Ok(true)
}

fn solve(cfg: &RunConfig, out: &OutputDir) -> Result<bool> {
    let d = cfg.build_domain()?;
    let f = cfg.vorticity()?;
    let quad = cfg.quad()?;
    let sol = solve_exterior(&d, &f, quad, cfg.mfs_params())?;
    sol.write_report(BufWriter::new(File::create(out.path("mfs_report.csv"))?))?;
    let (normal, circ) = sol.boundary_audit(cfg.transport.circulation_samples)?;
    println!(
        "rank {} / condition {:e}, max residual {:e}{}",
        sol.rank,
        sol.condition,
        sol.residual,
        if sol.flagged { " (flagged)" } else { "" }
    );
    println!("boundary: max |u.n| = {normal:e}, max |circulation| = {circ:e}");
    let c = Corrector::new(&d, &f, quad, cfg.profile()?)?;
    let leray = leray_check(&c, &sol, 0.02)?;
    println!(
        "||u - v|| = {:e}, ||w|| = {:e} ({})",
        leray.r_norm,
        leray.w_norm,
        if leray.holds { "holds" } else { "violated" }
    );
    println!("||u - K[f 1_Omega]||_L2 = {:e}", static_error(&sol, quad.target_order.max(2))?);
    Ok(!sol.flagged)
}

fn run_evolve(cfg: &RunConfig, out: &OutputDir) -> Result<bool> {
    let kind = cfg.backend()?;
    let params = cfg.transport_params()?;
    let d = cfg.build_domain()?;
    let backend = match kind {
        BackendKind::Plane => Backend::plane(params)?,
        _ => Backend::new(kind, Some(&d), params)?,
    };
    let f = cfg.vorticity()?;
    let state = VortexState::initialize(&f, &backend)?;
    let t = &cfg.transport;
    let opts = EvolveOptions {
        t_end: t.t_end,
        dt: (t.dt > 0.0).then_some(t.dt),
        diag_stride: t.diag_stride,
        traj_stride: t.traj_stride,
    };
    let n = state.len();
    let run = evolve(state, &backend, opts)?;
    out.table("diagnostics.csv", &output::diagnostics_table(&run.diagnostics))?;
    out.table("trajectory.csv", &output::trajectory_table(&run))?;
    println!("{} particles, {} steps of {:e} with the {} backend", n, run.steps, run.dt, kind.name());
    if let Some(last) = run.diagnostics.last() {
        println!(
            "t = {}: L1 {:e}, L2 {:e}, Linf {:e}, mass {:e}, max |circulation| {:e}",
            last.t,
            last.l1,
            last.l2,
            last.linf,
            last.mass,
            last.max_circulation()
        );
    }
    match &run.failure {
        Some(e) => {
            eprintln!("run aborted: {e}");
            Ok(false)
        }
        None => Ok(true),
    }
}

fn run_rate_study(cfg: &RunConfig, out: &OutputDir) -> Result<bool> {
    let study = RateStudy {
        alpha: cfg.domain.alpha,
        mu: cfg.domain.mu,
        shape: cfg.shape()?,
        eps_list: cfg.study.eps_list.clone(),
        f: cfg.vorticity()?,
        quad: cfg.quad()?,
        profile: cfg.profile()?,
        slack: cfg.study.slack,
    };
    let rep = rate_study(study)?;
    out.table("rates.csv", &output::rates_table(&rep))?;
    out.text("rates.gp", &rep.plot_script("rates.csv"))?;
    println!("{}", rep.summary());
    Ok(rep.verdict == Verdict::Pass)
}

fn run_convergence_study(cfg: &RunConfig, out: &OutputDir) -> Result<bool> {
    let c = cfg.study.window_cells;
    let study = ConvergenceStudy {
        eps_list: cfg.study.eps_list.clone(),
        alpha: cfg.domain.alpha,
        mu: cfg.domain.mu,
        shape: cfg.shape()?,
        omega0: cfg.vorticity()?,
        t_end: cfg.study.t_end,
        window: cfg.window(),
        window_cells: (c[0], c[1]),
        transport: cfg.transport_params()?,
        dt: (cfg.transport.dt > 0.0).then_some(cfg.transport.dt),
    };
    let tab = convergence_study(&study)?;
    out.table("convergence.csv", &output::convergence_table(&tab))?;
    println!("{}", tab.summary());
    Ok(tab.verdict() == Verdict::Pass)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_become_overrides() {
        let cli = Cli::try_parse_from(["euler-sieve", "evolve", "--t-end", "0.25", "--backend", "mfs"]).unwrap();
        let cfg = resolve_config(&cli).unwrap();
        assert_eq!(cfg.transport.t_end, 0.25);
        assert_eq!(cfg.transport.backend, "mfs");
    }

    #[test]
    fn bad_override_is_config_error() {
        let cli = Cli::try_parse_from(["euler-sieve", "--set", "domain.epss=0.1", "gen-domain"]).unwrap();
        assert!(matches!(resolve_config(&cli), Err(Error::Config(_))));
    }
}
