//! Biot-Savart laws: the full plane, the exterior of the unit disk and the
//! exterior of one inclusion of the lattice.
//!
//! Vectors are complex numbers; `v^perp` is `i v` and `grad ln|d|` is
//! `d / |d|^2`.

use std::f64::consts::TAU;
use std::fmt;

use rayon::prelude::*;

use crate::conformal::{local_forward_with_derivative, ObstacleMap};
use crate::field::Density;
use crate::geometry::PerforatedDomain;
use crate::quadrature::{Cascade, QuadSpec, SourceSet};
use crate::{Error, Point, Result};

/// Which velocity law produced a field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Plane,
    ExteriorDisk,
    ExteriorObstacle { i: usize, j: usize },
    Corrector,
    ErrorTerm(u8),
    MfsSolution,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Plane => write!(f, "plane"),
            Provenance::ExteriorDisk => write!(f, "exterior_disk"),
            Provenance::ExteriorObstacle { i, j } => write!(f, "exterior_obstacle_{i}_{j}"),
            Provenance::Corrector => write!(f, "corrector"),
            Provenance::ErrorTerm(k) => write!(f, "error_term_{k}"),
            Provenance::MfsSolution => write!(f, "mfs_solution"),
        }
    }
}

/// A pure velocity field `x -> u(x)`.
pub trait VelocityField: Sync {
    fn provenance(&self) -> Provenance;

    fn velocity(&self, x: Point) -> Result<Point>;

    /// Data-parallel batch evaluation; output order follows `xs`.
    fn velocities(&self, xs: &[Point]) -> Result<Vec<Point>> {
        xs.par_iter().map(|&x| self.velocity(x)).collect()
    }
}

/// Source nodes closer to the target than this, relative to the obstacle
/// size, are dropped: their weight is below the rounding of the kernel sums.
pub const COINCIDENCE: f64 = 1e-12;

/// `grad^perp ln|d| = i d / |d|^2`.
#[inline]
pub fn perp_grad_log(d: Point) -> Point {
    Point::new(-d.im, d.re) / d.norm_sqr()
}

/// `grad ln|d| = d / |d|^2` (the complex conjugate of `1/d`).
#[inline]
pub fn grad_log(d: Point) -> Point {
    d / d.norm_sqr()
}

/// Reflection across the unit circle, `y* = y / |y|^2`.
#[inline]
pub fn image(y: Point) -> Point {
    y / y.norm_sqr()
}

#[inline]
fn i_times(v: Point) -> Point {
    Point::new(-v.im, v.re)
}

/// `K_{R^2}[f](x) = (1/2pi) int (x - y)^perp / |x - y|^2 f(y) dy`, optionally
/// restricted to the fluid domain (`f 1_{Omega^eps}`).
pub struct PlaneVelocity<'a> {
    pub sources: SourceSet<'a>,
}

impl<'a> PlaneVelocity<'a> {
    pub fn new(f: &'a dyn Density, domain: Option<&'a PerforatedDomain>, quad: QuadSpec) -> Self {
        Self { sources: SourceSet::build(f, domain, quad) }
    }

    /// `(1/2pi) int ln|x - y| f(y) dy`.
    pub fn stream(&self, x: Point) -> f64 {
        let mut acc = Cascade::new();
        self.sources.for_each_at(x, |y, w| {
            let d2 = (x - y).norm_sqr();
            if d2 > 0.0 {
                acc.add(0.5 * w * d2.ln());
            }
        });
        acc.total() / TAU
    }
}

impl VelocityField for PlaneVelocity<'_> {
    fn provenance(&self) -> Provenance {
        Provenance::Plane
    }

    fn velocity(&self, x: Point) -> Result<Point> {
        let mut acc = Cascade::new();
        self.sources.for_each_at(x, |y, w| {
            let d = x - y;
            if d.norm_sqr() > 0.0 {
                acc.add(w * perp_grad_log(d));
            }
        });
        Ok(acc.total() / TAU)
    }
}

/// Biot-Savart law outside the closed unit disk with zero circulation.
pub struct ExteriorDiskVelocity<'a> {
    pub sources: SourceSet<'a>,
}

impl<'a> ExteriorDiskVelocity<'a> {
    pub fn new(f: &'a dyn Density, quad: QuadSpec) -> Result<Self> {
        if !f.vanishes_on_disk(Point::new(0.0, 0.0), 1.0) {
            return Err(Error::InvalidParams("vorticity support intersects the unit disk".into()));
        }
        Ok(Self { sources: SourceSet::build(f, None, quad) })
    }

    fn check(x: Point) -> Result<()> {
        if x.norm() < 1.0 - 1e-12 {
            return Err(Error::InsideObstacle(x));
        }
        Ok(())
    }

    /// `(1/2pi) int ln(|x - y| |x| / |x - y*|) f(y) dy`.
    pub fn stream(&self, x: Point) -> Result<f64> {
        Self::check(x)?;
        let mut acc = Cascade::new();
        self.sources.for_each_at(x, |y, w| {
            if (x - y).norm() <= COINCIDENCE {
                return;
            }
            let r = (x - y).norm_sqr() * x.norm_sqr() / (x - image(y)).norm_sqr();
            acc.add(0.5 * w * r.ln());
        });
        Ok(acc.total() / TAU)
    }
}

impl VelocityField for ExteriorDiskVelocity<'_> {
    fn provenance(&self) -> Provenance {
        Provenance::ExteriorDisk
    }

    fn velocity(&self, x: Point) -> Result<Point> {
        Self::check(x)?;
        let gx = grad_log(x);
        let mut acc = Cascade::new();
        self.sources.for_each_at(x, |y, w| {
            if (x - y).norm() <= COINCIDENCE {
                return;
            }
            acc.add(w * (grad_log(x - y) - grad_log(x - image(y)) + gx));
        });
        Ok(i_times(acc.total()) / TAU)
    }
}

/// Biot-Savart law outside the single inclusion `K^eps_{i,j}`, written with
/// the rescaled Riemann map `T^eps_{i,j}`.
pub struct ExteriorObstacleVelocity<'a> {
    pub domain: &'a PerforatedDomain,
    pub map: ObstacleMap,
    pub k: usize,
    pub sources: SourceSet<'a>,
}

impl<'a> ExteriorObstacleVelocity<'a> {
    /// Sources cover `f 1_{(K^eps_{i,j})^c}`.
    pub fn new(
        domain: &'a PerforatedDomain,
        map: ObstacleMap,
        i: usize,
        j: usize,
        f: &'a dyn Density,
        quad: QuadSpec,
    ) -> Result<Self> {
        let k = domain.index(i, j)?;
        let sources = SourceSet::build_with_holes(f, Some(domain), quad, |m| m == k);
        Ok(Self { domain, map, k, sources })
    }

    fn check(&self, x: Point) -> Result<()> {
        if self.domain.shape.level(self.domain.local(self.k, x)) < 1.0 - 1e-12 {
            return Err(Error::InsideObstacle(x));
        }
        Ok(())
    }

    /// Stream function, with (`normalized = true`) or without the constant
    /// `ln(eps / beta)` inside the logarithm.
    pub fn stream(&self, x: Point, normalized: bool) -> Result<f64> {
        self.check(x)?;
        let (tx, _) = local_forward_with_derivative(&self.map, self.domain, self.k, x);
        let c = if normalized { 2.0 * (self.domain.eps() / self.map.beta).ln() } else { 0.0 };
        let mut acc = Cascade::new();
        self.sources.for_each_at(x, |y, w| {
            let ty = self.map.forward_unchecked(self.domain.local(self.k, y));
            if (tx - ty).norm() <= COINCIDENCE {
                return;
            }
            let r = (tx - ty).norm_sqr() * tx.norm_sqr() / (tx - image(ty)).norm_sqr();
            acc.add(0.5 * w * (r.ln() + c));
        });
        Ok(acc.total() / TAU)
    }
}

impl VelocityField for ExteriorObstacleVelocity<'_> {
    fn provenance(&self) -> Provenance {
        let (i, j) = self.domain.pair(self.k);
        Provenance::ExteriorObstacle { i, j }
    }

    fn velocity(&self, x: Point) -> Result<Point> {
        self.check(x)?;
        let (tx, dtx) = local_forward_with_derivative(&self.map, self.domain, self.k, x);
        let gx = grad_log(tx);
        let mut acc = Cascade::new();
        self.sources.for_each_at(x, |y, w| {
            let ty = self.map.forward_unchecked(self.domain.local(self.k, y));
            if (tx - ty).norm() <= COINCIDENCE {
                return;
            }
            acc.add(w * (grad_log(tx - ty) - grad_log(tx - image(ty)) + gx));
        });
        Ok(i_times(dtx.conj() * acc.total()) / TAU)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{VorticityKind, VorticitySpec};
    use crate::geometry::{LatticeParams, ObstacleShape};

    fn quad() -> QuadSpec {
        QuadSpec::default()
    }

    #[test]
    fn plane_matches_radial_oracle() {
        let f = VorticitySpec::new(VorticityKind::RadialBump, Point::new(0.2, -0.1), 0.8, 1.3).unwrap();
        let u = PlaneVelocity::new(&f, None, quad());
        for &x in &[Point::new(0.25, 0.0), Point::new(1.5, 0.4), Point::new(0.2, -0.1), Point::new(0.9, -0.1)] {
            let got = u.velocity(x).unwrap();
            let want = f.radial_velocity(x);
            assert!((got - want).norm() < 1e-9, "{x}: {got} vs {want}");
        }
    }

    #[test]
    fn zero_amplitude_gives_zero() {
        let f = VorticitySpec::new(VorticityKind::RadialBump, Point::new(0.0, 0.0), 1.0, 0.0).unwrap();
        let u = PlaneVelocity::new(&f, None, quad());
        assert_eq!(u.velocity(Point::new(0.3, 0.1)).unwrap(), Point::new(0.0, 0.0));
    }

    #[test]
    fn exterior_disk_rejects_overlap() {
        let f = VorticitySpec::new(VorticityKind::RadialBump, Point::new(1.5, 0.0), 0.6, 1.0).unwrap();
        assert!(ExteriorDiskVelocity::new(&f, quad()).is_err());
    }

    #[test]
    fn obstacle_disk_matches_rescaled_exterior_disk() {
        let d = PerforatedDomain::build(LatticeParams::new(0.1, 1.0, 0.0).unwrap(), ObstacleShape::Disk).unwrap();
        let map = ObstacleMap::new(ObstacleShape::Disk).unwrap();
        let z = d.center(2, 1).unwrap();
        let f = VorticitySpec::new(VorticityKind::RadialBump, z + Point::new(0.0, 0.35), 0.2, 1.0).unwrap();
        let obst = ExteriorObstacleVelocity::new(&d, map, 2, 1, &f, quad()).unwrap();
        // unit-disk picture: y = z + eps Y, density g(Y) = f(z + eps Y)
        let g = VorticitySpec::new(VorticityKind::RadialBump, Point::new(0.0, 3.5), 2.0, 1.0).unwrap();
        let disk = ExteriorDiskVelocity::new(&g, quad()).unwrap();
        for &x in &[z + Point::new(0.1, 0.0), z + Point::new(-0.07, 0.15), z + Point::new(0.3, 0.3)] {
            let a = obst.velocity(x).unwrap();
            // u^eps(x) = eps u_disk((x - z) / eps) for the rescaled density
            let b = disk.velocity((x - z) / 0.1).unwrap() * 0.1;
            assert!((a - b).norm() < 1e-10 * b.norm().max(1.0), "{x}: {a} vs {b}");
        }
    }

    #[test]
    fn ellipse_obstacle_is_tangent_with_zero_circulation() {
        let shape = ObstacleShape::Ellipse { p: 1.0, q: 0.5 };
        let d = PerforatedDomain::build(LatticeParams::new(0.1, 1.0, 0.3).unwrap(), shape).unwrap();
        let map = ObstacleMap::new(shape).unwrap();
        let z = d.center(1, 1).unwrap();
        let f = VorticitySpec::new(VorticityKind::RadialBump, z + Point::new(0.3, 0.1), 0.15, 2.0).unwrap();
        let u = ExteriorObstacleVelocity::new(&d, map, 1, 1, &f, quad()).unwrap();
        let n = 360;
        let mut circ = 0.0;
        for m in 0..n {
            let t = TAU * m as f64 / n as f64;
            let w = shape.boundary_point(t);
            let x = z + w * d.eps();
            let tangent = Point::new(-t.sin(), 0.5 * t.cos());
            let normal = Point::new(0.5 * t.cos(), t.sin());
            let v = u.velocity(x).unwrap();
            let un = (v.re * normal.re + v.im * normal.im) / normal.norm();
            assert!(un.abs() < 1e-9, "normal component {un} at {t}");
            circ += (v.re * tangent.re + v.im * tangent.im) * d.eps() * TAU / n as f64;
        }
        assert!(circ.abs() < 1e-9, "circulation {circ}");
    }

    #[test]
    fn stream_forms_differ_by_mass_constant() {
        let shape = ObstacleShape::Ellipse { p: 1.0, q: 0.6 };
        let d = PerforatedDomain::build(LatticeParams::new(0.1, 1.0, 0.0).unwrap(), shape).unwrap();
        let map = ObstacleMap::new(shape).unwrap();
        let z = d.center(2, 1).unwrap();
        let f = VorticitySpec::new(VorticityKind::RadialBump, z + Point::new(-0.25, 0.0), 0.1, 1.0).unwrap();
        let u = ExteriorObstacleVelocity::new(&d, map, 2, 1, &f, quad()).unwrap();
        let c = (d.eps() / u.map.beta).ln() * u.sources.mass() / TAU;
        for &x in &[z + Point::new(0.15, 0.0), z + Point::new(0.0, 0.2)] {
            let a = u.stream(x, false).unwrap();
            let b = u.stream(x, true).unwrap();
            assert!((b - a - c).abs() < 1e-12);
            // velocity is the perpendicular gradient of the stream function
            let h = 1e-5;
            let dx = (u.stream(x + h, false).unwrap() - u.stream(x - h, false).unwrap()) / (2.0 * h);
            let ih = Point::new(0.0, h);
            let dy = (u.stream(x + ih, false).unwrap() - u.stream(x - ih, false).unwrap()) / (2.0 * h);
            let v = u.velocity(x).unwrap();
            assert!((v - Point::new(-dy, dx)).norm() < 1e-7 * v.norm().max(1e-3), "{v} vs {dx} {dy}");
        }
    }

    #[test]
    fn points_inside_inclusion_are_rejected() {
        let d = PerforatedDomain::build(LatticeParams::new(0.1, 1.0, 0.0).unwrap(), ObstacleShape::Disk).unwrap();
        let map = ObstacleMap::new(ObstacleShape::Disk).unwrap();
        let z = d.center(1, 1).unwrap();
        let f = VorticitySpec::new(VorticityKind::RadialBump, z + Point::new(0.3, 0.0), 0.1, 1.0).unwrap();
        let u = ExteriorObstacleVelocity::new(&d, map, 1, 1, &f, quad()).unwrap();
        assert!(matches!(u.velocity(z + Point::new(0.05, 0.0)), Err(Error::InsideObstacle(_))));
        assert!(ExteriorObstacleVelocity::new(&d, map, 99, 0, &f, quad()).is_err());
    }
}
