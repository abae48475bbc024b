//! Sweeps over `eps`: decay-rate fits of the corrector error, static
//! convergence of the exterior solution and dynamic convergence of the
//! transported flow.

use rayon::prelude::*;

use crate::corrector::{corrector_report, Corrector, CorrectorReport, Profile};
use crate::exterior_solver::{solve_exterior, static_error, MfsParams};
use crate::field::{Density, VorticitySpec};
use crate::geometry::{LatticeParams, ObstacleShape, PerforatedDomain, Rect};
use crate::quadrature::{pairwise_sum, QuadSpec};
use crate::transport::{cfl_step, evolve, Backend, BackendKind, EvolveOptions, TransportParams, VortexState};
use crate::{Error, Point, Result};

/// Default slack on fitted slopes.
pub const SLOPE_SLACK: f64 = 0.15;
/// Largest slope change tolerated when the largest `eps` is dropped.
pub const FIT_STABILITY: f64 = 0.05;
/// Slope gap above which the log-corrected fit decides the verdict.
pub const LOG_FIT_GAP: f64 = 0.05;
/// Largest admissible ratio of quadrature error to measured norm.
pub const QUAD_BUDGET: f64 = 0.1;

/// Fraction of the initial CFL step used by the convergence runs, leaving
/// room for speed growth.
pub const DT_SAFETY: f64 = 0.5;

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Outcome of a one-sided test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// Rate-study inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RateStudy {
    pub alpha: f64,
    pub mu: f64,
    pub shape: ObstacleShape,
    /// Strictly decreasing, at least 4 values.
    pub eps_list: Vec<f64>,
    pub f: VorticitySpec,
    pub quad: QuadSpec,
    pub profile: Profile,
    pub slack: f64,
}

/// One row of a rate study.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub report: CorrectorReport,
    /// `||w^eps||_{L^2(R^2)}`: fluid part and inclusion part combined.
    pub norm: f64,
    pub quad_err: f64,
    /// Quadrature error above [`QUAD_BUDGET`] of the norm.
    pub flagged: bool,
    /// `||w^3|| / profile` and `||w^4|| / profile` with
    /// `profile = eps^{1/2} + |ln eps|^{1/2} eps^{1 - alpha}`.
    pub profile_ratios: [f64; 2],
}

/// Fitted decay of `||w^eps||`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub study: RateStudy,
    pub rows: Vec<RateRow>,
    /// Slope of `ln ||w||` against `ln eps`.
    pub fitted_slope: f64,
    /// Slope of `ln ||w|| - ln |ln eps|` against `ln eps`.
    pub log_corrected_slope: f64,
    /// `(2 - alpha - mu) / 2`.
    pub predicted_slope: f64,
    /// The slope the verdict is based on.
    pub verdict_slope: f64,
    /// Fitted slope without the largest `eps`.
    pub trimmed_slope: f64,
    pub stable: bool,
    pub any_flagged: bool,
    pub verdict: Verdict,
}

impl RateReport {
    pub const CSV_HEADER: &'static str = "eps,w_l2,w1_l2,w2_l2,w3_l2,w4_l2,w_l2_fluid,w_l2_inclusions,quad_err,flagged,w3_profile_ratio,w4_profile_ratio";

    /// `fitted_slope >= predicted - slack`, the one-sided slope test.
    pub fn slope_holds(&self) -> bool {
        self.fitted_slope >= self.predicted_slope - self.study.slack
    }

    /// Human-readable verdict block.
    pub fn summary(&self) -> String {
        let s = &self.study;
        let mut out = format!(
            "rate study: shape {} alpha {} mu {}\n",
            s.shape, s.alpha, s.mu
        );
        for r in &self.rows {
            out += &format!(
                "  eps {:<8} ||w|| {:.6e}  w1..w4 {:.3e} {:.3e} {:.3e} {:.3e}  quad err {:.1e}{}\n",
                r.report.eps,
                r.norm,
                r.report.w[0],
                r.report.w[1],
                r.report.w[2],
                r.report.w[3],
                r.quad_err,
                if r.flagged { "  FLAGGED" } else { "" }
            );
        }
        out += &format!(
            "  fitted slope {:.4}  log-corrected {:.4}  without largest eps {:.4}\n",
            self.fitted_slope, self.log_corrected_slope, self.trimmed_slope
        );
        out += &format!(
            "  predicted {:.4}  threshold {:.4}  verdict slope {:.4}\n  verdict: {}\n",
            self.predicted_slope,
            self.predicted_slope - s.slack,
            self.verdict_slope,
            self.verdict.name().to_uppercase()
        );
        out
    }

    /// Plot script for gnuplot reading `rates.csv`.
    pub fn plot_script(&self, csv_name: &str) -> String {
        let r0 = &self.rows[0];
        let c = r0.norm / r0.report.eps.powf(self.predicted_slope);
        format!(
            "set datafile separator ','\n\
             set logscale xy\n\
             set xlabel 'eps'\n\
             set ylabel 'L2 norm'\n\
             set key left top\n\
             set title 'shape {} alpha {} mu {}: fitted slope {:.3}'\n\
             plot '{csv_name}' skip 1 using 1:2 with linespoints title '||w||', \\\n\
             \x20    '' skip 1 using 1:3 with linespoints title '||w1||', \\\n\
             \x20    '' skip 1 using 1:4 with linespoints title '||w2||', \\\n\
             \x20    '' skip 1 using 1:5 with linespoints title '||w3||', \\\n\
             \x20    '' skip 1 using 1:6 with linespoints title '||w4||', \\\n\
             \x20    {c:e} * x**{:.6} with lines dashtype 2 title 'predicted rate'\n",
            self.study.shape, self.study.alpha, self.study.mu, self.fitted_slope, self.predicted_slope
        )
    }
}

fn check_eps_list(eps: &[f64], min_len: usize) -> Result<()> {
    if eps.len() < min_len {
        return Err(Error::InvalidParams(format!("eps list needs at least {min_len} values, got {}", eps.len())));
    }
    if eps.windows(2).any(|w| !(w[1] < w[0])) || eps.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidParams("eps list must be positive and strictly decreasing".into()));
    }
    Ok(())
}

fn lattice(eps: f64, alpha: f64, mu: f64, shape: ObstacleShape) -> Result<PerforatedDomain> {
    PerforatedDomain::build(LatticeParams::new(eps, alpha, mu)?, shape)
}

/// Corrector report at one `eps`.
pub fn rate_row(study: &RateStudy, eps: f64) -> Result<RateRow> {
    let domain = lattice(eps, study.alpha, study.mu, study.shape)?;
    let c = Corrector::new(&domain, &study.f, study.quad, study.profile)?;
    let report = corrector_report(&c)?;
    let norm = report.total.hypot(report.inclusions);
    let quad_err = report.total_err + report.inclusions_err;
    let profile = eps.sqrt() + eps.ln().abs().sqrt() * eps.powf(1.0 - study.alpha);
    Ok(RateRow {
        flagged: !(quad_err <= QUAD_BUDGET * norm),
        profile_ratios: [report.w[2] / profile, report.w[3] / profile],
        norm,
        quad_err,
        report,
    })
}

/// Slope fits and verdict from measured rows.
pub fn fit_rates(study: RateStudy, rows: Vec<RateRow>) -> RateReport {
    let lx: Vec<f64> = rows.iter().map(|r| r.report.eps.ln()).collect();
    let ly: Vec<f64> = rows.iter().map(|r| r.norm.ln()).collect();
    let lc: Vec<f64> = rows.iter().map(|r| r.norm.ln() - r.report.eps.ln().abs().ln()).collect();
    let fitted = ls_slope(&lx, &ly);
    let corrected = ls_slope(&lx, &lc);
    let trimmed = ls_slope(&lx[1..], &ly[1..]);
    let predicted = (2.0 - study.alpha - study.mu) / 2.0;
    let verdict_slope = if (corrected - fitted).abs() > LOG_FIT_GAP { corrected } else { fitted };
    let stable = (trimmed - fitted).abs() <= FIT_STABILITY;
    let any_flagged = rows.iter().any(|r| r.flagged);
    let verdict = if any_flagged || !stable || !fitted.is_finite() {
        Verdict::Inconclusive
    } else if verdict_slope >= predicted - study.slack {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    RateReport {
        study,
        rows,
        fitted_slope: fitted,
        log_corrected_slope: corrected,
        predicted_slope: predicted,
        verdict_slope,
        trimmed_slope: trimmed,
        stable,
        any_flagged,
        verdict,
    }
}

/// Measure `||w^eps||` over the sweep and fit its decay exponent.
pub fn rate_study(study: RateStudy) -> Result<RateReport> {
    check_eps_list(&study.eps_list, 4)?;
    let rows = study
        .eps_list
        .par_iter()
        .map(|&eps| rate_row(&study, eps))
        .collect::<Result<Vec<_>>>()?;
    Ok(fit_rates(study, rows))
}

/// `||u^eps - K_{R^2}[f 1_{Omega^eps}]||_{L^2(R^2)}` across `eps` with the
/// exterior solve.
pub fn static_convergence(
    eps_list: &[f64],
    alpha: f64,
    mu: f64,
    shape: ObstacleShape,
    f: &dyn Density,
    quad: QuadSpec,
    mfs: MfsParams,
) -> Result<Vec<(f64, f64)>> {
    check_eps_list(eps_list, 2)?;
    eps_list
        .iter()
        .map(|&eps| {
            let domain = lattice(eps, alpha, mu, shape)?;
            let sol = solve_exterior(&domain, f, quad, mfs)?;
            Ok((eps, static_error(&sol, quad.target_order.max(2))?))
        })
        .collect()
}

/// Dynamic-convergence inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    pub eps_list: Vec<f64>,
    pub alpha: f64,
    pub mu: f64,
    pub shape: ObstacleShape,
    pub omega0: VorticitySpec,
    pub t_end: f64,
    pub window: Rect,
    /// Midpoint cells of the window grid.
    pub window_cells: (usize, usize),
    pub transport: TransportParams,
    /// Fixed step; when absent each run uses half its CFL step at `t = 0`.
    pub dt: Option<f64>,
}

/// `||u^eps(t) - u(t)||_{L^2(window)}` at `t in {0, T/2, T}` for one `eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub times: [f64; 3],
    pub errors: [f64; 3],
    pub particles: usize,
    pub dt: f64,
    /// Abort message of the corrector run, if any.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Step of the plane reference run.
    pub dt: f64,
    /// Errors at `T` strictly decreasing in the order of `eps_list`.
    pub decreasing: bool,
    /// Errors at `t = 0` strictly decreasing.
    pub decreasing_initial: bool,
}

impl ConvergenceTable {
    pub const CSV_HEADER: &'static str = "eps,t,l2_error,particles";

    pub fn verdict(&self) -> Verdict {
        if self.rows.iter().any(|r| r.failure.is_some()) {
            Verdict::Inconclusive
        } else if self.decreasing {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn summary(&self) -> String {
        let mut out = String::from("convergence study: ||u^eps(t) - u(t)||_L2(window)\n");
        for r in &self.rows {
            out += &format!(
                "  eps {:<8} t = {:.3}: {:.6e}  t = {:.3}: {:.6e}  t = {:.3}: {:.6e}{}\n",
                r.eps,
                r.times[0],
                r.errors[0],
                r.times[1],
                r.errors[1],
                r.times[2],
                r.errors[2],
                r.failure.as_ref().map(|m| format!("  ABORTED: {m}")).unwrap_or_default()
            );
        }
        out += &format!("  decreasing at T: {}\n  verdict: {}\n", self.decreasing, self.verdict().name().to_uppercase());
        out
    }
}

/// Midpoint grid of a rectangle: points and the common cell area.
pub fn window_grid(window: &Rect, cells: (usize, usize)) -> (Vec<Point>, f64) {
    let (nx, ny) = cells;
    let dx = window.width() / nx as f64;
    let dy = window.height() / ny as f64;
    let pts = (0..ny)
        .flat_map(|j| {
            (0..nx).map(move |i| Point::new(window.x0 + dx * (i as f64 + 0.5), window.y0 + dy * (j as f64 + 0.5)))
        })
        .collect();
    (pts, dx * dy)
}

fn l2_gap(a: &[Point], b: &[Point], area: f64) -> f64 {
    let v: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr() * area).collect();
    pairwise_sum(&v).sqrt()
}

/// Velocity samples on the window at `t in {0, T/2, T}`; stops early on
/// a transport failure.
fn sampled_run(
    backend: &Backend,
    state: VortexState,
    times: [f64; 3],
    dt: f64,
    grid: &[Point],
) -> Result<(Vec<Vec<Point>>, Option<String>)> {
    let mut samples = vec![state.field(backend)?.eval_batch(grid)];
    let mut state = state;
    for &t in &times[1..] {
        let run = evolve(state, backend, EvolveOptions { t_end: t, dt: Some(dt), diag_stride: 0, traj_stride: 0 })?;
        if let Some(e) = run.failure {
            return Ok((samples, Some(e.to_string())));
        }
        state = run.state;
        samples.push(state.field(backend)?.eval_batch(grid));
    }
    Ok((samples, None))
}

/// Evolve `omega0` with the corrector backend on each lattice and with the
/// plane backend, and compare the velocities on the window.
pub fn convergence_study(study: &ConvergenceStudy) -> Result<ConvergenceTable> {
    check_eps_list(&study.eps_list, 2)?;
    if !(study.t_end > 0.0) {
        return Err(Error::InvalidParams(format!("final time T = {} must be positive", study.t_end)));
    }
    let times = [0.0, 0.5 * study.t_end, study.t_end];
    let (grid, area) = window_grid(&study.window, study.window_cells);
    let plane = Backend::plane(study.transport)?;
    let plane_state = VortexState::initialize(&study.omega0, &plane)?;
    let step_for = |state: &VortexState, backend: &Backend| -> Result<f64> {
        Ok(match study.dt {
            Some(dt) => dt,
            None => (DT_SAFETY * cfl_step(state, backend)?).min(study.t_end),
        })
    };
    let dt = step_for(&plane_state, &plane)?;
    let (reference, failure) = sampled_run(&plane, plane_state, times, dt, &grid)?;
    if let Some(m) = failure {
        return Err(Error::Solver(format!("plane reference run aborted: {m}")));
    }
    let mut rows = Vec::new();
    for &eps in &study.eps_list {
        let domain = lattice(eps, study.alpha, study.mu, study.shape)?;
        let backend = Backend::new(BackendKind::Corrector, Some(&domain), study.transport)?;
        let state = VortexState::initialize(&study.omega0, &backend)?;
        let particles = state.len();
        let dt = step_for(&state, &backend)?;
        let (samples, failure) = sampled_run(&backend, state, times, dt, &grid)?;
        let mut errors = [f64::NAN; 3];
        for (k, s) in samples.iter().enumerate() {
            errors[k] = l2_gap(s, &reference[k], area);
        }
        rows.push(ConvergenceRow { eps, times, errors, particles, dt, failure });
    }
    let decreasing = rows.windows(2).all(|w| w[1].errors[2] < w[0].errors[2]);
    let decreasing_initial = rows.windows(2).all(|w| w[1].errors[0] < w[0].errors[0]);
    Ok(ConvergenceTable { rows, dt, decreasing, decreasing_initial })
}
