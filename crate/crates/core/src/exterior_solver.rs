//! The true velocity `u^eps[f]` of the perforated domain by the method of
//! fundamental solutions, and the Leray-projection audit of `u^eps - v^eps`.
//!
//! `psi = psi_part + psi_corr`, where `psi_part` is the log potential of
//! `f 1_{Omega^eps}` and `psi_corr` is a combination of zero-net-strength
//! log sources placed inside every inclusion, with one free constant per
//! boundary. Every basis function carries zero circulation around every
//! inclusion, so the Kelvin conditions hold by construction.

use std::f64::consts::TAU;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::biotsavart::{perp_grad_log, PlaneVelocity, Provenance, VelocityField};
use crate::conformal::{local_inverse, ObstacleMap};
use crate::corrector::{cutoff_support_rule, Corrector};
use crate::field::{hole_of, Density};
use crate::geometry::PerforatedDomain;
use crate::quadrature::{hole_interior_rule, pairwise_sum, QuadSpec};
use crate::{Error, Point, Result};

/// Solver parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MfsParams {
    /// Sources per inclusion; collocation uses `2 m` points.
    pub m: usize,
    /// Source placement: sources sit at `T^-1(r e^{i t})` with
    /// `r = r_c + rho (1 - r_c)`, `r_c` the critical radius of the map
    /// (0 for the disk, where this is the `rho`-scaled boundary).
    pub rho: f64,
    pub tol_bc: f64,
    /// Relative singular value cutoff of the least-squares solve.
    pub svd_cutoff: f64,
    pub max_unknowns: usize,
}

impl Default for MfsParams {
    fn default() -> Self {
        Self { m: 64, rho: 0.5, tol_bc: 1e-8, svd_cutoff: 1e-12, max_unknowns: 40_000 }
    }
}

impl MfsParams {
    pub fn validate(&self) -> Result<()> {
        if self.m < 4 {
            return Err(Error::InvalidParams(format!("mfs m = {} must be at least 4", self.m)));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::InvalidParams(format!("mfs rho = {} must lie in (0, 1)", self.rho)));
        }
        if !(self.tol_bc > 0.0) || !(self.svd_cutoff > 0.0 && self.svd_cutoff < 1.0) {
            return Err(Error::InvalidParams("mfs tol_bc and svd_cutoff must be positive".into()));
        }
        Ok(())
    }
}

/// Solved system: `u^eps = K_{R^2}[f 1_{Omega^eps}] + grad^perp psi_corr`.
pub struct MfsSolution<'a> {
    pub domain: &'a PerforatedDomain,
    pub map: ObstacleMap,
    pub params: MfsParams,
    pub plane: PlaneVelocity<'a>,
    /// Source points, `m` per inclusion in row-major inclusion order.
    pub points: Vec<Point>,
    pub strengths: Vec<f64>,
    /// Boundary values `c_{i,j}` of the total stream function.
    pub constants: Vec<f64>,
    /// `max |psi - c_{i,j}|` over the collocation points of each inclusion.
    pub residuals: Vec<f64>,
    pub residual: f64,
    /// Ratio of the extreme singular values kept.
    pub condition: f64,
    pub rank: usize,
    /// Residual above `tol_bc`.
    pub flagged: bool,
}

fn boundary_points(domain: &PerforatedDomain, map: &ObstacleMap, k: usize, n: usize, radius: f64) -> Vec<Point> {
    (0..n)
        .map(|j| local_inverse(map, domain, k, Point::from_polar(radius, TAU * j as f64 / n as f64)))
        .collect()
}

/// Collocation system shared by every right-hand side on one lattice: the
/// source points, the collocation points and the truncated SVD of the
/// boundary matrix.
pub struct MfsSystem {
    pub map: ObstacleMap,
    pub params: MfsParams,
    /// Source points, `m` per inclusion in row-major inclusion order.
    pub points: Vec<Point>,
    /// Collocation points with their inclusion index.
    pub colloc: Vec<(usize, Point)>,
    matrix: DMatrix<f64>,
    svd: nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>,
    cut: f64,
    pub rank: usize,
    /// Ratio of the extreme singular values kept.
    pub condition: f64,
    smax: f64,
    smin: f64,
}

/// Boundary fit of one right-hand side.
#[derive(Debug, Clone)]
pub struct MfsFit {
    pub strengths: Vec<f64>,
    pub constants: Vec<f64>,
    pub residuals: Vec<f64>,
    pub residual: f64,
}

impl MfsSystem {
    pub fn new(domain: &PerforatedDomain, params: MfsParams) -> Result<Self> {
        params.validate()?;
        let n_inc = domain.len();
        let m = params.m;
        let n_unknowns = n_inc * (m + 1);
        if n_unknowns > params.max_unknowns {
            return Err(Error::InvalidParams(format!(
                "{n_unknowns} unknowns exceed the solver cap {}",
                params.max_unknowns
            )));
        }
        let map = ObstacleMap::new(domain.shape)?;
        let rc = map.critical_radius();
        let r_src = rc + params.rho * (1.0 - rc);
        let points: Vec<Point> = (0..n_inc).flat_map(|k| boundary_points(domain, &map, k, m, r_src)).collect();
        let colloc: Vec<(usize, Point)> = (0..n_inc)
            .flat_map(|k| boundary_points(domain, &map, k, 2 * m, 1.0).into_iter().map(move |x| (k, x)))
            .collect();
        let mut a = DMatrix::<f64>::zeros(colloc.len(), n_unknowns);
        for (r, &(k, x)) in colloc.iter().enumerate() {
            for (c, &s) in points.iter().enumerate() {
                let z = domain.centers[c / m];
                a[(r, c)] = ((x - s).norm() / (x - z).norm()).ln() / TAU;
            }
            a[(r, n_inc * m + k)] = -1.0;
        }
        let svd = a.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let cut = params.svd_cutoff * smax;
        let rank = svd.singular_values.iter().filter(|&&s| s > cut).count();
        let smin = svd.singular_values.iter().filter(|&&s| s > cut).cloned().fold(f64::INFINITY, f64::min);
        Ok(Self { map, params, points, colloc, matrix: a, svd, cut, rank, condition: smax / smin, smax, smin })
    }

    pub fn unknowns(&self) -> usize {
        self.matrix.ncols()
    }

    /// Least-squares fit of `psi_corr - c_k = rhs` on the collocation points.
    pub fn fit(&self, rhs: Vec<f64>) -> Result<MfsFit> {
        let n_inc = self.matrix.ncols() / (self.params.m + 1);
        let split = n_inc * self.params.m;
        let b = DVector::from_vec(rhs);
        let sol = self.svd.solve(&b, self.cut).map_err(|e| Error::Solver(e.to_string()))?;
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver("non-finite least-squares solution".into()));
        }
        let res = &self.matrix * &sol - &b;
        let mut residuals = vec![0.0f64; n_inc];
        for (r, &(k, _)) in self.colloc.iter().enumerate() {
            residuals[k] = residuals[k].max(res[r].abs());
        }
        let residual = residuals.iter().cloned().fold(0.0, f64::max);
        if self.rank < self.unknowns() && residual > self.params.tol_bc {
            return Err(Error::Solver(format!(
                "rank {} of {} (singular values {:e} .. {:e}) with boundary residual {residual:e}",
                self.rank,
                self.unknowns(),
                self.smax,
                self.smin
            )));
        }
        Ok(MfsFit {
            strengths: sol.as_slice()[..split].to_vec(),
            constants: sol.as_slice()[split..].to_vec(),
            residuals,
            residual,
        })
    }
}

/// `grad^perp` of the zero-net source combination of every inclusion.
pub fn source_velocity(domain: &PerforatedDomain, m: usize, points: &[Point], strengths: &[f64], x: Point) -> Point {
    let mut acc = Vec::with_capacity(domain.len());
    for (k, z) in domain.centers.iter().enumerate() {
        let mut q_sum = 0.0;
        let mut v = Point::new(0.0, 0.0);
        for (s, &q) in points[k * m..(k + 1) * m].iter().zip(&strengths[k * m..(k + 1) * m]) {
            v += q * perp_grad_log(x - s);
            q_sum += q;
        }
        acc.push(v - q_sum * perp_grad_log(x - z));
    }
    pairwise_sum(&acc) / TAU
}

/// Solve for `u^eps[f]`.
pub fn solve_exterior<'a>(
    domain: &'a PerforatedDomain,
    f: &'a dyn Density,
    quad: QuadSpec,
    params: MfsParams,
) -> Result<MfsSolution<'a>> {
    let system = MfsSystem::new(domain, params)?;
    let plane = PlaneVelocity::new(f, Some(domain), quad);
    let rhs: Vec<f64> = system.colloc.par_iter().map(|&(_, x)| -plane.stream(x)).collect();
    let fit = system.fit(rhs)?;
    Ok(MfsSolution {
        domain,
        map: system.map,
        params,
        plane,
        points: system.points,
        strengths: fit.strengths,
        constants: fit.constants,
        residuals: fit.residuals,
        residual: fit.residual,
        condition: system.condition,
        rank: system.rank,
        flagged: fit.residual > params.tol_bc,
    })
}

impl MfsSolution<'_> {
    /// `grad^perp psi_corr(x)`.
    pub fn correction_velocity(&self, x: Point) -> Point {
        source_velocity(self.domain, self.params.m, &self.points, &self.strengths, x)
    }

    /// `psi_corr(x)`.
    pub fn correction_stream(&self, x: Point) -> f64 {
        let m = self.params.m;
        let terms: Vec<f64> = self
            .points
            .iter()
            .zip(&self.strengths)
            .enumerate()
            .map(|(c, (s, &q))| q * ((x - s).norm() / (x - self.domain.centers[c / m]).norm()).ln())
            .collect();
        pairwise_sum(&terms) / TAU
    }

    /// Total stream function `psi_part + psi_corr`.
    pub fn stream(&self, x: Point) -> f64 {
        self.plane.stream(x) + self.correction_stream(x)
    }

    /// `||grad psi_corr||^2_{L^2(Omega^eps)} = -sum_k oint psi_corr d_nu psi_corr`,
    /// `nu` the normal pointing into the fluid, by the trapezoid rule in the
    /// conformal angle with `n` points per boundary.
    pub fn correction_energy(&self, n: usize) -> f64 {
        let eps = self.domain.eps();
        let terms: Vec<f64> = (0..self.domain.len())
            .into_par_iter()
            .flat_map_iter(|k| {
                (0..n).map(move |j| {
                    let zeta = Point::from_polar(1.0, TAU * j as f64 / n as f64);
                    let x = local_inverse(&self.map, self.domain, k, zeta);
                    let dx = eps * self.map.inverse_derivative_unchecked(zeta) * Point::new(0.0, 1.0) * zeta;
                    // outward normal of K times ds
                    let nu = Point::new(dx.im, -dx.re);
                    let grad = Point::new(0.0, -1.0) * self.correction_velocity(x);
                    let dnu = grad.re * nu.re + grad.im * nu.im;
                    -self.correction_stream(x) * dnu * TAU / n as f64
                })
            })
            .collect();
        pairwise_sum(&terms)
    }

    /// Boundary audit: `(max |u.n|, max |oint u.tau|)` over `n` samples per
    /// inclusion.
    pub fn boundary_audit(&self, n: usize) -> Result<(f64, f64)> {
        boundary_audit(self, self.domain, &self.map, n)
    }

    /// CSV diagnostics, one row per inclusion.
    pub fn write_report<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "i,j,residual,constant,rank,condition,flagged")?;
        for k in 0..self.domain.len() {
            let (i, j) = self.domain.pair(k);
            writeln!(
                w,
                "{i},{j},{},{},{},{},{}",
                self.residuals[k], self.constants[k], self.rank, self.condition, self.flagged
            )?;
        }
        Ok(())
    }
}

impl VelocityField for MfsSolution<'_> {
    fn provenance(&self) -> Provenance {
        Provenance::MfsSolution
    }

    /// `u^eps(x)`, extended by zero inside the inclusions.
    fn velocity(&self, x: Point) -> Result<Point> {
        if self.domain.interior_obstacle_at(x).is_some() {
            return Ok(Point::new(0.0, 0.0));
        }
        Ok(self.plane.velocity(x)? + self.correction_velocity(x))
    }
}

/// Per inclusion, `(max |u.n|, oint u.tau)` of a velocity field sampled at
/// `n` points equally spaced in the conformal angle (trapezoid rule for the
/// circulation).
pub fn boundary_profile(
    u: &(dyn VelocityField + '_),
    domain: &PerforatedDomain,
    map: &ObstacleMap,
    n: usize,
) -> Result<Vec<(f64, f64)>> {
    let eps = domain.eps();
    (0..domain.len())
        .into_par_iter()
        .map(|k| {
            let mut normal: f64 = 0.0;
            let mut circ = Vec::with_capacity(n);
            for j in 0..n {
                let zeta = Point::from_polar(1.0, TAU * j as f64 / n as f64);
                let x = local_inverse(map, domain, k, zeta);
                let dx = eps * map.inverse_derivative_unchecked(zeta) * Point::new(0.0, 1.0) * zeta;
                let v = u.velocity(x)?;
                let nu = Point::new(dx.im, -dx.re) / dx.norm();
                normal = normal.max((v.re * nu.re + v.im * nu.im).abs());
                circ.push((v.re * dx.re + v.im * dx.im) * TAU / n as f64);
            }
            Ok((normal, pairwise_sum(&circ)))
        })
        .collect()
}

/// `(max |u.n|, max |oint u.tau|)` over all inclusions, see [`boundary_profile`].
pub fn boundary_audit(
    u: &(dyn VelocityField + '_),
    domain: &PerforatedDomain,
    map: &ObstacleMap,
    n: usize,
) -> Result<(f64, f64)> {
    let per = boundary_profile(u, domain, map, n)?;
    // NaN samples must surface, which `f64::max` would drop
    let worst = |a: f64, b: f64| if a.is_nan() || b > a { b } else { a };
    Ok(per.iter().fold((0.0f64, 0.0f64), |(a, b), &(x, y)| (worst(a, x), worst(b, y.abs()))))
}

/// Norms behind the Leray inequality `||u^eps - v^eps|| <= ||w^eps||`.
#[derive(Debug, Clone, PartialEq)]
pub struct LerayReport {
    /// `||r^eps||_{L^2(Omega^eps)}`, `r = u - v = w + grad^perp psi_corr`.
    pub r_norm: f64,
    /// `||w^eps||_{L^2(Omega^eps)}`.
    pub w_norm: f64,
    /// `<w^eps, grad^perp psi_corr>_{L^2(Omega^eps)}`.
    pub cross: f64,
    /// `||grad^perp psi_corr||_{L^2(Omega^eps)}`.
    pub corr_norm: f64,
    /// `max |curl r - curl w|` on the sample grid (`curl grad^perp psi_corr`).
    pub curl_gap: f64,
    /// `r_norm <= (1 + slack) w_norm`.
    pub holds: bool,
    pub slack: f64,
}

/// Leray audit of a solved configuration against its corrector.
pub fn leray_check(corrector: &Corrector, sol: &MfsSolution, slack: f64) -> Result<LerayReport> {
    let order = corrector.sources.spec.target_order.max(2);
    let nodes = cutoff_support_rule(corrector.domain, order);
    let xs: Vec<Point> = nodes.iter().map(|n| n.y).collect();
    let terms = corrector.terms_batch(&xs);
    let corr: Vec<Point> = xs.par_iter().map(|&x| sol.correction_velocity(x)).collect();
    let ww: Vec<f64> = nodes.iter().zip(&terms).map(|(n, t)| n.w * t.total().norm_sqr()).collect();
    let wc: Vec<f64> = nodes
        .iter()
        .zip(&terms)
        .zip(&corr)
        .map(|((n, t), c)| {
            let w = t.total();
            n.w * (w.re * c.re + w.im * c.im)
        })
        .collect();
    let w2 = pairwise_sum(&ww);
    let cross = pairwise_sum(&wc);
    let c2 = sol.correction_energy(8 * sol.params.m);
    let r2 = w2 + 2.0 * cross + c2;
    if !(r2 > -1e-12 * w2.max(1e-300)) || !r2.is_finite() {
        return Err(Error::QuadratureNotConverged { value: r2, error: w2 });
    }
    let curl_gap = correction_curl_gap(sol, corrector.domain);
    let r_norm = r2.max(0.0).sqrt();
    let w_norm = w2.sqrt();
    Ok(LerayReport {
        r_norm,
        w_norm,
        cross,
        corr_norm: c2.max(0.0).sqrt(),
        curl_gap,
        holds: r_norm <= (1.0 + slack) * w_norm,
        slack,
    })
}

/// `max |curl grad^perp psi_corr|` by centered differences on a grid over
/// the lattice block, at points at least `eps` away from the inclusions.
fn correction_curl_gap(sol: &MfsSolution, domain: &PerforatedDomain) -> f64 {
    let block = domain.lattice_block();
    let eps = domain.eps();
    let h = 1e-4 * eps;
    let n = 24;
    let pts: Vec<Point> = (0..n * n)
        .map(|k| {
            let (a, b) = (k % n, k / n);
            Point::new(
                block.x0 + block.width() * (a as f64 + 0.5) / n as f64,
                block.y0 + block.height() * (b as f64 + 0.5) / n as f64,
            )
        })
        .filter(|&x| domain.distance_to_obstacles(x) > eps)
        .collect();
    pts.par_iter()
        .map(|&x| {
            let ex = Point::new(h, 0.0);
            let ey = Point::new(0.0, h);
            let dvdx = (sol.correction_velocity(x + ex) - sol.correction_velocity(x - ex)) / (2.0 * h);
            let dudy = (sol.correction_velocity(x + ey) - sol.correction_velocity(x - ey)) / (2.0 * h);
            (dvdx.im - dudy.re).abs()
        })
        .reduce(|| 0.0, f64::max)
}

/// `||u^eps - K_{R^2}[f 1_{Omega^eps}]||_{L^2(R^2)}` with `u^eps` extended by
/// zero inside the inclusions: the correction energy on the fluid plus the
/// plane field on the inclusions.
pub fn static_error(sol: &MfsSolution, order: usize) -> Result<f64> {
    let c2 = sol.correction_energy(8 * sol.params.m);
    let inc: Vec<_> = (0..sol.domain.len())
        .flat_map(|k| hole_interior_rule(&hole_of(sol.domain, k), 2 * order, order))
        .collect();
    let vals: Vec<f64> = inc
        .par_iter()
        .map(|n| sol.plane.velocity(n.y).map(|u| n.w * u.norm_sqr()))
        .collect::<Result<_>>()?;
    Ok((c2.max(0.0) + pairwise_sum(&vals)).sqrt())
}
