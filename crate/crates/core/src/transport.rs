//! Vortex-blob transport of the vorticity under the plane, corrected or
//! solved velocity, and the quantities conserved by the flow.
//!
//! Particles carry a vorticity value and a fixed area weight; only their
//! positions move. The self-induced velocity uses Gaussian blobs of radius
//! `delta`. Near an inclusion the corrected backend mollifies the mapped
//! kernel pair `ln|zeta - eta| - ln(|eta| |zeta - eta*|)` with the same
//! profile, so the mollified pair still vanishes on the unit circle and the
//! field stays tangent to every inclusion.

use std::f64::consts::TAU;
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::biotsavart::{grad_log, image, Provenance, VelocityField};
use crate::conformal::ObstacleMap;
use crate::corrector::{CutoffFamily, Profile};
use crate::exterior_solver::{boundary_profile, source_velocity, MfsFit, MfsParams, MfsSystem};
use crate::field::Density;
use crate::geometry::PerforatedDomain;
use crate::treecode::{blob_kernel, blob_stream, e1_tail, Tree, TreeParams};
use crate::{Error, Point, Result};

/// Velocity law advecting the particles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    /// Full-plane Biot-Savart law, no inclusions.
    Plane,
    /// Cut-off corrected field `v^eps`.
    Corrector,
    /// Exterior solve `u^eps` by fundamental solutions.
    Mfs,
}

impl BackendKind {
    pub fn name(&self) -> &'static str {
        match self {
            BackendKind::Plane => "plane",
            BackendKind::Corrector => "corrector",
            BackendKind::Mfs => "mfs",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "plane" => Some(BackendKind::Plane),
            "corrector" => Some(BackendKind::Corrector),
            "mfs" => Some(BackendKind::Mfs),
            _ => None,
        }
    }
}

/// Resolution and integrator parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportParams {
    /// Seeding grid spacing.
    pub h: f64,
    /// Blob radius in units of `h`.
    pub blob_factor: f64,
    /// Admissible `dt max|u| / h`.
    pub cfl: f64,
    pub profile: Profile,
    pub mfs: MfsParams,
    pub tree: TreeParams,
    /// Particle count from which plane sums go through the tree.
    pub tree_threshold: usize,
    /// Boundary samples per inclusion for the circulation.
    pub circulation_samples: usize,
}

impl Default for TransportParams {
    fn default() -> Self {
        Self {
            h: 0.01,
            blob_factor: 2.0,
            cfl: 0.5,
            profile: Profile::default(),
            mfs: MfsParams::default(),
            tree: TreeParams::default(),
            tree_threshold: 5000,
            circulation_samples: 360,
        }
    }
}

impl TransportParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::InvalidParams(format!("grid spacing h = {} must be positive", self.h)));
        }
        if !(self.blob_factor > 0.0) || !(self.cfl > 0.0) {
            return Err(Error::InvalidParams("blob factor and cfl must be positive".into()));
        }
        if self.circulation_samples < 4 {
            return Err(Error::InvalidParams("at least 4 circulation samples are needed".into()));
        }
        self.mfs.validate()
    }

    pub fn delta(&self) -> f64 {
        self.blob_factor * self.h
    }
}

/// A velocity backend bound to its domain.
pub struct Backend<'a> {
    pub kind: BackendKind,
    pub domain: Option<&'a PerforatedDomain>,
    pub params: TransportParams,
    map: Option<ObstacleMap>,
    cutoffs: Option<CutoffFamily<'a>>,
    mfs: Option<MfsSystem>,
}

impl<'a> Backend<'a> {
    pub fn new(kind: BackendKind, domain: Option<&'a PerforatedDomain>, params: TransportParams) -> Result<Self> {
        params.validate()?;
        let need = |d: Option<&'a PerforatedDomain>| {
            d.ok_or_else(|| Error::InvalidParams(format!("the {} backend needs a domain", kind.name())))
        };
        let (domain, map, cutoffs, mfs) = match kind {
            BackendKind::Plane => (None, None, None, None),
            BackendKind::Corrector => {
                let d = need(domain)?;
                (Some(d), Some(ObstacleMap::new(d.shape)?), Some(CutoffFamily::new(d, params.profile)), None)
            }
            BackendKind::Mfs => {
                let d = need(domain)?;
                let sys = MfsSystem::new(d, params.mfs)?;
                (Some(d), Some(sys.map), None, Some(sys))
            }
        };
        Ok(Self { kind, domain, params, map, cutoffs, mfs })
    }

    pub fn plane(params: TransportParams) -> Result<Self> {
        Self::new(BackendKind::Plane, None, params)
    }

    /// The velocity induced by blobs of strengths `strengths` at `positions`.
    pub fn field<'b>(&'b self, positions: &[Point], strengths: &[f64], delta: f64) -> Result<ParticleField<'b, 'a>> {
        let tree = (positions.len() >= self.params.tree_threshold)
            .then(|| Tree::new(positions, strengths, self.params.tree));
        let fit = match (&self.mfs, self.domain) {
            (Some(sys), Some(_)) => {
                let rhs: Vec<f64> = sys
                    .colloc
                    .par_iter()
                    .map(|&(_, x)| {
                        -positions.iter().zip(strengths).map(|(&y, &w)| w * blob_stream(x - y, delta)).sum::<f64>()
                    })
                    .collect();
                Some(sys.fit(rhs)?)
            }
            _ => None,
        };
        let n_inc = self.domain.map_or(0, |d| d.len());
        Ok(ParticleField {
            backend: self,
            positions: positions.to_vec(),
            strengths: strengths.to_vec(),
            delta,
            tree,
            fit,
            mapped: (0..n_inc).map(|_| OnceLock::new()).collect(),
        })
    }
}

/// Velocity field of one particle configuration.
pub struct ParticleField<'b, 'a> {
    backend: &'b Backend<'a>,
    positions: Vec<Point>,
    strengths: Vec<f64>,
    delta: f64,
    tree: Option<Tree>,
    pub fit: Option<MfsFit>,
    /// Per inclusion: tails `h(Y)` and images `T(Y)` of the particles.
    mapped: Vec<OnceLock<Vec<(Point, Point)>>>,
}

impl ParticleField<'_, '_> {
    /// `sum w K_delta(x - y)`.
    pub fn plane_velocity(&self, x: Point) -> Point {
        match &self.tree {
            Some(t) => t.velocity(x, self.delta),
            None => self
                .positions
                .iter()
                .zip(&self.strengths)
                .map(|(&y, &w)| w * blob_kernel(x - y, self.delta))
                .sum(),
        }
    }

    fn corrected(&self, x: Point) -> Point {
        let b = self.backend;
        let (Some(domain), Some(map), Some(cutoffs)) = (b.domain, b.map.as_ref(), b.cutoffs.as_ref()) else {
            return self.plane_velocity(x);
        };
        if domain.interior_obstacle_at(x).is_some() {
            return Point::new(0.0, 0.0);
        }
        let Some((k, phi, gphi)) = cutoffs.active(x) else {
            return self.plane_velocity(x);
        };
        let eps = domain.eps();
        let beta = map.beta;
        let mapped = self.mapped[k].get_or_init(|| {
            self.positions
                .iter()
                .map(|&y| {
                    let yl = domain.local(k, y);
                    let hy = map.tail_unchecked(yl);
                    (hy, beta * yl + hy)
                })
                .collect()
        });
        let sx = map.split_unchecked(domain.local(k, x));
        let dz2 = (beta * self.delta / eps).powi(2);
        let d2 = self.delta * self.delta;
        let zero = Point::new(0.0, 0.0);
        let (mut plane, mut kern) = (zero, zero);
        let (mut a, mut bsum, mut mass) = (0.0, 0.0, 0.0);
        for ((&y, &w), &(hy, ty)) in self.positions.iter().zip(&self.strengths).zip(mapped) {
            let d = x - y;
            plane += w * blob_kernel(d, self.delta);
            mass += w;
            let diff = sx.t - image(ty);
            let zd = sx.t - ty;
            let a2 = ty.norm_sqr() * diff.norm_sqr() / dz2;
            bsum += 0.5 * w * ((sx.t.norm_sqr() / diff.norm_sqr()).ln() - e1_tail(a2));
            if d != zero {
                let dh = eps * (sx.h - hy);
                if dh != zero {
                    let del = dh / (beta * d);
                    a -= 0.5 * w * (2.0 * del.re + del.norm_sqr()).ln_1p();
                }
                a += 0.5 * w * (e1_tail(d.norm_sqr() / d2) - e1_tail(zd.norm_sqr() / dz2));
            }
            if zd != zero {
                let q1 = -(-zd.norm_sqr() / dz2).exp_m1();
                kern += w * q1 * grad_log(zd);
            }
            kern -= w * -(-a2).exp_m1() * grad_log(diff);
        }
        kern += mass * grad_log(sx.t);
        let i = Point::new(0.0, 1.0);
        let mapped_v = i * (sx.dt / eps).conj() * kern / TAU;
        (1.0 - phi) * plane + i * gphi * (bsum - a) / TAU + phi * mapped_v
    }

    pub fn eval(&self, x: Point) -> Point {
        match self.backend.kind {
            BackendKind::Plane => self.plane_velocity(x),
            BackendKind::Corrector => self.corrected(x),
            BackendKind::Mfs => {
                let (Some(domain), Some(sys), Some(fit)) = (self.backend.domain, &self.backend.mfs, &self.fit) else {
                    return self.plane_velocity(x);
                };
                if domain.interior_obstacle_at(x).is_some() {
                    return Point::new(0.0, 0.0);
                }
                self.plane_velocity(x) + source_velocity(domain, sys.params.m, &sys.points, &fit.strengths, x)
            }
        }
    }

    pub fn eval_batch(&self, xs: &[Point]) -> Vec<Point> {
        xs.par_iter().map(|&x| self.eval(x)).collect()
    }
}

impl VelocityField for ParticleField<'_, '_> {
    fn provenance(&self) -> Provenance {
        match self.backend.kind {
            BackendKind::Plane => Provenance::Plane,
            BackendKind::Corrector => Provenance::Corrector,
            BackendKind::Mfs => Provenance::MfsSolution,
        }
    }

    fn velocity(&self, x: Point) -> Result<Point> {
        Ok(self.eval(x))
    }
}

/// A vortex blob: position, carried vorticity and area weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub pos: Point,
    pub value: f64,
    pub weight: f64,
}

/// Particle representation of `omega^eps(t, .)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VortexState {
    pub particles: Vec<Particle>,
    pub delta: f64,
    pub h: f64,
    pub t: f64,
}

impl VortexState {
    /// Particles on the grid `c + h Z^2` over the support of `f`, dropping
    /// zero values and points of the inclusions of `domain`.
    pub fn seed(f: &dyn Density, h: f64, blob_factor: f64, domain: Option<&PerforatedDomain>) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParams(format!("grid spacing h = {h} must be positive")));
        }
        let (c, r) = f.support();
        let n = (r / h).ceil() as i64;
        let mut particles = Vec::new();
        for j in -n..=n {
            for i in -n..=n {
                let pos = c + Point::new(h * i as f64, h * j as f64);
                let value = f.value(pos);
                if value == 0.0 || domain.is_some_and(|d| d.obstacle_at(pos).is_some()) {
                    continue;
                }
                particles.push(Particle { pos, value, weight: h * h });
            }
        }
        if particles.is_empty() {
            return Err(Error::EmptyParticles("the vorticity vanishes on every grid point of the fluid".into()));
        }
        Ok(Self { particles, delta: blob_factor * h, h, t: 0.0 })
    }

    /// Seed for a backend, with its domain and blob radius.
    pub fn initialize(f: &dyn Density, backend: &Backend) -> Result<Self> {
        Self::seed(f, backend.params.h, backend.params.blob_factor, backend.domain)
    }

    pub fn positions(&self) -> Vec<Point> {
        self.particles.iter().map(|p| p.pos).collect()
    }

    /// Circulations `value * weight`.
    pub fn strengths(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.value * p.weight).collect()
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Velocity field of the current configuration.
    pub fn field<'b, 'a>(&self, backend: &'b Backend<'a>) -> Result<ParticleField<'b, 'a>> {
        backend.field(&self.positions(), &self.strengths(), self.delta)
    }

    /// `sum w omega`.
    pub fn mass(&self) -> f64 {
        self.particles.iter().map(|p| p.value * p.weight).sum()
    }
}

fn velocities(backend: &Backend, pos: &[Point], strengths: &[f64], delta: f64) -> Result<Vec<Point>> {
    Ok(backend.field(pos, strengths, delta)?.eval_batch(pos))
}

fn max_speed(v: &[Point]) -> f64 {
    v.iter().map(|u| u.norm()).fold(0.0, f64::max)
}

/// Advance by one RK4 step of length `dt` (negative `dt` runs backwards).
pub fn step(state: &mut VortexState, backend: &Backend, dt: f64) -> Result<()> {
    let s = state.strengths();
    let x0 = state.positions();
    let k1 = velocities(backend, &x0, &s, state.delta)?;
    let vmax = max_speed(&k1);
    if vmax * dt.abs() > backend.params.cfl * state.h * (1.0 + 1e-12) {
        return Err(Error::InvalidParams(format!(
            "dt = {dt} exceeds the CFL bound {} (max speed {vmax})",
            backend.params.cfl * state.h / vmax
        )));
    }
    let shift = |k: &[Point], c: f64| -> Vec<Point> { x0.iter().zip(k).map(|(&x, &v)| x + c * v).collect() };
    let k2 = velocities(backend, &shift(&k1, 0.5 * dt), &s, state.delta)?;
    let k3 = velocities(backend, &shift(&k2, 0.5 * dt), &s, state.delta)?;
    let k4 = velocities(backend, &shift(&k3, dt), &s, state.delta)?;
    for (n, p) in state.particles.iter_mut().enumerate() {
        p.pos += dt / 6.0 * (k1[n] + 2.0 * k2[n] + 2.0 * k3[n] + k4[n]);
    }
    state.t += dt;
    if let Some(domain) = backend.domain {
        for (id, p) in state.particles.iter().enumerate() {
            if let Some(k) = domain.obstacle_at(p.pos) {
                let (i, j) = domain.pair(k);
                return Err(Error::Penetration { id, i, j, t: state.t });
            }
        }
    }
    Ok(())
}

/// Conserved quantities of a particle state.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub t: f64,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
    pub mass: f64,
    /// `oint u.tau` around each inclusion, row-major.
    pub circulations: Vec<f64>,
    /// Largest particle distance to the initial support center.
    pub radius: f64,
    /// Smallest particle distance to an inclusion.
    pub clearance: Option<f64>,
}

impl Diagnostics {
    pub const CSV_HEADER: &'static str = "t,l1,l2,linf,mass,max_abs_circulation,radius,clearance";

    pub fn max_circulation(&self) -> f64 {
        self.circulations.iter().fold(0.0, |m: f64, c| if m.is_nan() || c.is_nan() { f64::NAN } else { m.max(c.abs()) })
    }
}

/// Norms, mass, circulations and extent of `state`.
pub fn diagnostics(state: &VortexState, backend: &Backend, origin: Point) -> Result<Diagnostics> {
    let p = &state.particles;
    let l1 = p.iter().map(|q| q.value.abs() * q.weight).sum();
    let l2 = p.iter().map(|q| q.value * q.value * q.weight).sum::<f64>().sqrt();
    let linf = p.iter().fold(0.0f64, |m, q| m.max(q.value.abs()));
    let radius = p.iter().fold(0.0f64, |m, q| m.max((q.pos - origin).norm()));
    let (circulations, clearance) = match (backend.domain, backend.map.as_ref()) {
        (Some(domain), Some(map)) => {
            let field = state.field(backend)?;
            let prof = boundary_profile(&field, domain, map, backend.params.circulation_samples)?;
            let gap = p.iter().map(|q| domain.distance_to_obstacles(q.pos)).fold(f64::INFINITY, f64::min);
            (prof.into_iter().map(|(_, c)| c).collect(), Some(gap))
        }
        _ => (Vec::new(), None),
    };
    Ok(Diagnostics { t: state.t, l1, l2, linf, mass: state.mass(), circulations, radius, clearance })
}

/// Run options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    pub t_end: f64,
    /// Fixed step; derived from the CFL rule at the start when absent.
    pub dt: Option<f64>,
    /// Diagnostics every this many steps (and at the end).
    pub diag_stride: usize,
    /// Positions recorded every this many steps (and at the end); 0 disables.
    pub traj_stride: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { t_end: 1.0, dt: None, diag_stride: 1, traj_stride: 0 }
    }
}

/// Outcome of [`evolve`].
#[derive(Debug)]
pub struct Evolution {
    pub state: VortexState,
    pub dt: f64,
    pub steps: usize,
    pub diagnostics: Vec<Diagnostics>,
    /// `(t, positions)` records.
    pub snapshots: Vec<(f64, Vec<Point>)>,
    /// Error that aborted the run, with the diagnostics gathered so far.
    pub failure: Option<Error>,
}

/// Step count and step length covering `span` with steps no longer than
/// `dt` in magnitude.
pub fn step_plan(span: f64, dt: f64) -> (usize, f64) {
    if span == 0.0 {
        return (0, 0.0);
    }
    let n = ((span / dt).abs() * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    (n, span / n as f64)
}

/// The CFL step of the configuration `state` under `backend`.
pub fn cfl_step(state: &VortexState, backend: &Backend) -> Result<f64> {
    let v = velocities(backend, &state.positions(), &state.strengths(), state.delta)?;
    let vmax = max_speed(&v);
    Ok(if vmax > 0.0 { backend.params.cfl * state.h / vmax } else { f64::INFINITY })
}

/// Advance `state` to `opts.t_end` with fixed RK4 steps.
pub fn evolve(mut state: VortexState, backend: &Backend, opts: EvolveOptions) -> Result<Evolution> {
    let t0 = state.t;
    let span = opts.t_end - t0;
    let dt_max = match opts.dt {
        Some(dt) if dt > 0.0 && dt.is_finite() => dt,
        Some(dt) => return Err(Error::InvalidParams(format!("time step dt = {dt} must be positive"))),
        None => cfl_step(&state, backend)?.min(span.abs().max(f64::MIN_POSITIVE)),
    };
    let (steps, dt) = step_plan(span, dt_max);
    let origin = state.particles.iter().map(|p| p.pos).sum::<Point>() / state.len() as f64;
    let mut out = Evolution {
        state: state.clone(),
        dt,
        steps,
        diagnostics: vec![diagnostics(&state, backend, origin)?],
        snapshots: Vec::new(),
        failure: None,
    };
    if opts.traj_stride > 0 {
        out.snapshots.push((state.t, state.positions()));
    }
    for n in 1..=steps {
        if let Err(e) = step(&mut state, backend, dt) {
            out.failure = Some(e);
            break;
        }
        state.t = t0 + dt * n as f64;
        let last = n == steps;
        if last || (opts.diag_stride > 0 && n % opts.diag_stride == 0) {
            out.diagnostics.push(diagnostics(&state, backend, origin)?);
        }
        if opts.traj_stride > 0 && (last || n % opts.traj_stride == 0) {
            out.snapshots.push((state.t, state.positions()));
        }
    }
    out.state = state;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{VorticityKind, VorticitySpec};
    use crate::geometry::{LatticeParams, ObstacleShape};

    fn bump(c: Point, r: f64) -> VorticitySpec {
        VorticitySpec::new(VorticityKind::RadialBump, c, r, 1.0).unwrap()
    }

    fn params(h: f64) -> TransportParams {
        TransportParams { h, ..Default::default() }
    }

    #[test]
    fn seeding_reproduces_mass() {
        let f = bump(Point::new(0.1, 0.2), 0.3);
        let state = VortexState::seed(&f, 0.3 / 32.0, 2.0, None).unwrap();
        let rel = (state.mass() - f.total_mass()).abs() / f.total_mass();
        assert!(rel <= 1e-3, "{rel}");
    }

    #[test]
    fn zero_vorticity_is_rejected() {
        let f = VorticitySpec::new(VorticityKind::RadialBump, Point::new(0.0, 0.0), 0.3, 0.0).unwrap();
        assert!(matches!(VortexState::seed(&f, 0.01, 2.0, None), Err(Error::EmptyParticles(_))));
    }

    #[test]
    fn particles_avoid_inclusions() {
        let d = PerforatedDomain::build(LatticeParams::new(0.1, 1.0, 0.0).unwrap(), ObstacleShape::Disk).unwrap();
        let f = bump(Point::new(0.45, 0.1), 0.4);
        let state = VortexState::seed(&f, 0.01, 2.0, Some(&d)).unwrap();
        assert!(state.particles.iter().all(|p| d.contains(p.pos)));
        let full = VortexState::seed(&f, 0.01, 2.0, None).unwrap();
        assert!(full.len() > state.len());
    }

    #[test]
    fn radial_patch_rotates_rigidly() {
        let f = bump(Point::new(0.0, 0.0), 0.25);
        let backend = Backend::plane(params(0.25 / 16.0)).unwrap();
        let state = VortexState::initialize(&f, &backend).unwrap();
        let r0: Vec<f64> = state.particles.iter().map(|p| p.pos.norm()).collect();
        let run = evolve(state, &backend, EvolveOptions { t_end: 1.0, dt: Some(0.1), ..Default::default() }).unwrap();
        assert!(run.failure.is_none());
        let drift = run.state.particles.iter().zip(&r0).map(|(p, r)| (p.pos.norm() - r).abs()).fold(0.0, f64::max);
        assert!(drift <= 1e-4, "{drift}");
        let swept = run.state.particles.iter().zip(&r0).any(|(p, &r)| r > 0.05 && (p.pos.arg()).abs() > 1e-3);
        assert!(swept);
    }

    #[test]
    fn backward_run_returns_to_start() {
        let f = crate::field::Combination {
            terms: vec![(1.0, bump(Point::new(-0.1, 0.0), 0.15)), (0.7, bump(Point::new(0.12, 0.03), 0.12))],
        };
        let backend = Backend::plane(params(0.15 / 10.0)).unwrap();
        let state = VortexState::initialize(&f, &backend).unwrap();
        let start = state.positions();
        let fwd = evolve(state, &backend, EvolveOptions { t_end: 1.0, dt: Some(0.05), ..Default::default() }).unwrap();
        let back = evolve(fwd.state, &backend, EvolveOptions { t_end: 0.0, dt: Some(0.05), ..Default::default() }).unwrap();
        let err = back.state.positions().iter().zip(&start).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err <= 1e-5, "{err}");
    }

    #[test]
    fn corrector_backend_without_active_cutoffs_is_plane() {
        let d = PerforatedDomain::build(LatticeParams::new(0.1, 1.0, 0.0).unwrap(), ObstacleShape::Disk).unwrap();
        let f = bump(Point::new(0.5, 2.0), 0.2);
        let plane = Backend::plane(params(0.02)).unwrap();
        let corr = Backend::new(BackendKind::Corrector, Some(&d), params(0.02)).unwrap();
        let state = VortexState::initialize(&f, &corr).unwrap();
        let a = state.field(&plane).unwrap().eval_batch(&state.positions());
        let b = state.field(&corr).unwrap().eval_batch(&state.positions());
        let gap = a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(gap <= 1e-12, "{gap}");
    }

    #[test]
    fn corrected_blob_field_is_tangent() {
        for shape in [ObstacleShape::Disk, ObstacleShape::Ellipse { p: 1.0, q: 0.5 }] {
            let d = PerforatedDomain::build(LatticeParams::new(0.1, 1.0, 0.0).unwrap(), shape).unwrap();
            let f = bump(Point::new(0.45, 0.12), 0.3);
            let b = Backend::new(BackendKind::Corrector, Some(&d), params(0.02)).unwrap();
            let state = VortexState::initialize(&f, &b).unwrap();
            let field = state.field(&b).unwrap();
            let prof = boundary_profile(&field, &d, b.map.as_ref().unwrap(), 360).unwrap();
            for (normal, _) in prof {
                assert!(normal <= 1e-10, "{shape}: {normal}");
            }
        }
    }

    #[test]
    fn mfs_backend_is_tangent_with_zero_circulation() {
        let d = PerforatedDomain::build(LatticeParams::new(0.1, 1.0, 0.0).unwrap(), ObstacleShape::Disk).unwrap();
        let f = bump(Point::new(0.5, 0.6), 0.2);
        let b = Backend::new(BackendKind::Mfs, Some(&d), params(0.02)).unwrap();
        let state = VortexState::initialize(&f, &b).unwrap();
        let field = state.field(&b).unwrap();
        let prof = boundary_profile(&field, &d, b.map.as_ref().unwrap(), 360).unwrap();
        for (normal, circ) in prof {
            assert!(normal <= 1e-10 && circ.abs() <= 1e-10, "{normal} {circ}");
        }
    }

    #[test]
    fn oversized_step_is_rejected() {
        let f = bump(Point::new(0.0, 0.0), 0.25);
        let backend = Backend::plane(params(0.25 / 8.0)).unwrap();
        let mut state = VortexState::initialize(&f, &backend).unwrap();
        assert!(matches!(step(&mut state, &backend, 100.0), Err(Error::InvalidParams(_))));
    }
}
