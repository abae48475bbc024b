//! Exterior Riemann maps `T: K^c -> {|zeta| > 1}` and their lattice rescalings.

use std::f64::consts::TAU;

use crate::geometry::{ObstacleShape, PerforatedDomain};
use crate::{Error, Point, Result};

/// Tolerance used when deciding that a point lies strictly inside `K` or
/// strictly inside the unit disk.
const INSIDE_TOL: f64 = 1e-12;

/// `T`, `T'` and the tail `h = T - beta Id` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapSplit {
    pub h: Point,
    pub dh: Point,
    pub t: Point,
    pub dt: Point,
}

/// Riemann map of an obstacle together with sampled Laurent-tail data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleMap {
    pub shape: ObstacleShape,
    /// Leading Laurent coefficient: `T(z) ~ beta z` at infinity.
    pub beta: f64,
    /// Sampled bound on `|T(z) - beta z|`.
    pub h_sup: f64,
    /// Sampled Lipschitz constant of `T` on `K^c`.
    pub lip_t: f64,
    /// Sampled Lipschitz constant of `T^-1` on `|zeta| >= 1`.
    pub lip_tinv: f64,
}

impl ObstacleMap {
    pub fn new(shape: ObstacleShape) -> Result<Self> {
        shape.validate()?;
        let beta = match shape {
            ObstacleShape::Disk => 1.0,
            ObstacleShape::Ellipse { p, q } => 2.0 / (p + q),
        };
        let mut map = Self { shape, beta, h_sup: 0.0, lip_t: 1.0, lip_tinv: 1.0 };
        map.h_sup = map.sample_h_sup(1000);
        let (lt, li) = map.estimate_lipschitz(400);
        map.lip_t = lt;
        map.lip_tinv = li;
        Ok(map)
    }

    fn focal(&self) -> Option<(f64, f64, f64)> {
        match self.shape {
            ObstacleShape::Disk => None,
            ObstacleShape::Ellipse { p, q } => Some((p, q, (p * p - q * q).sqrt())),
        }
    }

    /// `sqrt(z^2 - c^2)` as a product of principal roots, analytic off `[-c, c]`.
    fn focal_root(z: Point, c: f64) -> Point {
        (z - c).sqrt() * (z + c).sqrt()
    }

    /// `T(z)` without the domain check.
    #[inline]
    pub fn forward_unchecked(&self, z: Point) -> Point {
        match self.focal() {
            None => z,
            Some((p, q, c)) => (z + Self::focal_root(z, c)) / (p + q),
        }
    }

    /// `T'(z)` without the domain check.
    #[inline]
    pub fn derivative_unchecked(&self, z: Point) -> Point {
        match self.focal() {
            None => Point::new(1.0, 0.0),
            Some((p, q, c)) => (1.0 + z / Self::focal_root(z, c)) / (p + q),
        }
    }

    /// `T(z)` and `T'(z)` sharing the square root.
    #[inline]
    pub fn forward_with_derivative(&self, z: Point) -> (Point, Point) {
        match self.focal() {
            None => (z, Point::new(1.0, 0.0)),
            Some((p, q, c)) => {
                let s = Self::focal_root(z, c);
                ((z + s) / (p + q), (1.0 + z / s) / (p + q))
            }
        }
    }

    /// `T(z) = beta z + h(z)`, with the tail `h` and its derivative evaluated
    /// in a cancellation-free form. Returns `(h(z), h'(z), T(z), T'(z))`.
    #[inline]
    pub fn split_unchecked(&self, z: Point) -> MapSplit {
        match self.focal() {
            None => MapSplit { h: Point::new(0.0, 0.0), dh: Point::new(0.0, 0.0), t: z, dt: Point::new(1.0, 0.0) },
            Some((p, q, c)) => {
                let s = Self::focal_root(z, c);
                let zs = z + s;
                let h = -c * c / ((p + q) * zs);
                let dh = c * c / ((p + q) * s * zs);
                MapSplit { h, dh, t: zs / (p + q), dt: self.beta + dh }
            }
        }
    }

    /// Tail `h(z) = T(z) - beta z` only.
    #[inline]
    pub fn tail_unchecked(&self, z: Point) -> Point {
        match self.focal() {
            None => Point::new(0.0, 0.0),
            Some((p, q, c)) => -c * c / ((p + q) * (z + Self::focal_root(z, c))),
        }
    }

    fn check_outside(&self, z: Point) -> Result<()> {
        if self.shape.level(z) < 1.0 - INSIDE_TOL {
            return Err(Error::InsideObstacle(z));
        }
        Ok(())
    }

    /// `T(z)` for `z` outside the open obstacle.
    pub fn forward(&self, z: Point) -> Result<Point> {
        self.check_outside(z)?;
        Ok(self.forward_unchecked(z))
    }

    /// `T'(z)` for `z` outside the open obstacle.
    pub fn derivative(&self, z: Point) -> Result<Point> {
        self.check_outside(z)?;
        Ok(self.derivative_unchecked(z))
    }

    /// `T^-1(zeta)` without the domain check.
    #[inline]
    pub fn inverse_unchecked(&self, zeta: Point) -> Point {
        match self.shape {
            ObstacleShape::Disk => zeta,
            ObstacleShape::Ellipse { p, q } => 0.5 * ((p + q) * zeta + (p - q) / zeta),
        }
    }

    /// `(T^-1)'(zeta)` without the domain check.
    #[inline]
    pub fn inverse_derivative_unchecked(&self, zeta: Point) -> Point {
        match self.shape {
            ObstacleShape::Disk => Point::new(1.0, 0.0),
            ObstacleShape::Ellipse { p, q } => 0.5 * ((p + q) - (p - q) / (zeta * zeta)),
        }
    }

    /// Radius below which `T^-1` stops being univalent: the branch points of
    /// its continuation inside `K` sit on `|zeta| = sqrt((p - q) / (p + q))`.
    pub fn critical_radius(&self) -> f64 {
        match self.shape {
            ObstacleShape::Disk => 0.0,
            ObstacleShape::Ellipse { p, q } => ((p - q) / (p + q)).sqrt(),
        }
    }

    /// `T^-1(zeta)` for `|zeta| >= 1`.
    pub fn inverse(&self, zeta: Point) -> Result<Point> {
        if zeta.norm() < 1.0 - INSIDE_TOL {
            return Err(Error::InvalidParams(format!(
                "|zeta| = {} lies inside the unit disk",
                zeta.norm()
            )));
        }
        Ok(self.inverse_unchecked(zeta))
    }

    /// `sup |T(z) - beta z|` over boundary points and far-field points.
    fn sample_h_sup(&self, n: usize) -> f64 {
        let mut sup: f64 = 0.0;
        for k in 0..n {
            let theta = TAU * (k as f64 + 0.5) / n as f64;
            let unit = Point::from_polar(1.0, theta);
            let zb = self.inverse_unchecked(unit);
            sup = sup.max((self.forward_unchecked(zb) - self.beta * zb).norm());
            let zf = self.inverse_unchecked(unit * 1.0e3 * (1.0 + k as f64 / n as f64));
            sup = sup.max((self.forward_unchecked(zf) - self.beta * zf).norm());
        }
        sup
    }

    /// Sample points of `K^c` clustered at the boundary: images under
    /// `T^-1` of a polar grid of `|zeta| in [1, 4]`.
    fn exterior_samples(&self, n_samples: usize) -> Vec<(Point, Point)> {
        let n_r = ((n_samples as f64).sqrt() / 2.0).ceil().max(2.0) as usize;
        let n_t = n_samples.div_ceil(n_r);
        let mut out = Vec::with_capacity(n_r * n_t);
        for a in 0..n_r {
            let rho = 4f64.powf((a as f64 / (n_r - 1) as f64).powi(2));
            for b in 0..n_t {
                let theta = TAU * (b as f64 + 0.5 * (a % 2) as f64) / n_t as f64;
                let zeta = Point::from_polar(rho, theta);
                out.push((self.inverse_unchecked(zeta), zeta));
            }
        }
        out
    }

    /// Sampled Lipschitz constants of `T` and `T^-1` over all pairs of
    /// roughly `n_samples` points.
    pub fn estimate_lipschitz(&self, n_samples: usize) -> (f64, f64) {
        let pts = self.exterior_samples(n_samples.max(100));
        let mut lt: f64 = 0.0;
        let mut li: f64 = 0.0;
        for a in 0..pts.len() {
            for b in a + 1..pts.len() {
                let (za, wa) = pts[a];
                let (zb, wb) = pts[b];
                let dz = (za - zb).norm();
                let dw = (wa - wb).norm();
                if dz > 0.0 && dw > 0.0 {
                    lt = lt.max(dw / dz);
                    li = li.max(dz / dw);
                }
            }
        }
        (lt, li)
    }

    /// Constants `(C1, C2)` with `C2 s <= |T(w)| <= C1 s` for all `w` with
    /// `|w| = s` outside `K`, sampled over the radii `s`.
    pub fn annulus_constants(&self, radii: &[f64], n_theta: usize) -> (f64, f64) {
        let mut c1: f64 = 0.0;
        let mut c2 = f64::INFINITY;
        for &s in radii {
            for k in 0..n_theta {
                let w = Point::from_polar(s, TAU * k as f64 / n_theta as f64);
                if self.shape.level(w) < 1.0 {
                    continue;
                }
                let ratio = self.forward_unchecked(w).norm() / s;
                c1 = c1.max(ratio);
                c2 = c2.min(ratio);
            }
        }
        (c1, c2)
    }
}

/// `T^eps_k(x) = T((x - z_k) / eps)` for inclusion `k` (row-major index).
#[inline]
pub fn local_forward(map: &ObstacleMap, domain: &PerforatedDomain, k: usize, x: Point) -> Point {
    map.forward_unchecked(domain.local(k, x))
}

/// `T^eps_k(x)` and its complex derivative `T'((x - z_k)/eps) / eps`.
#[inline]
pub fn local_forward_with_derivative(
    map: &ObstacleMap,
    domain: &PerforatedDomain,
    k: usize,
    x: Point,
) -> (Point, Point) {
    let (t, dt) = map.forward_with_derivative(domain.local(k, x));
    (t, dt / domain.eps())
}

/// `(T^eps_k)^-1(zeta) = eps T^-1(zeta) + z_k`.
#[inline]
pub fn local_inverse(map: &ObstacleMap, domain: &PerforatedDomain, k: usize, zeta: Point) -> Point {
    domain.eps() * map.inverse_unchecked(zeta) + domain.centers[k]
}

/// Checked `T^eps_{i,j}(x)` with 1-based indices.
pub fn local_map(map: &ObstacleMap, domain: &PerforatedDomain, i: usize, j: usize, x: Point) -> Result<Point> {
    let k = domain.index(i, j)?;
    map.forward(domain.local(k, x)).map_err(|_| Error::InsideObstacle(x))
}

/// Checked `(T^eps_{i,j})^-1(zeta)` with 1-based indices.
pub fn local_map_inverse(
    map: &ObstacleMap,
    domain: &PerforatedDomain,
    i: usize,
    j: usize,
    zeta: Point,
) -> Result<Point> {
    let k = domain.index(i, j)?;
    Ok(domain.eps() * map.inverse(zeta)? + domain.centers[k])
}
