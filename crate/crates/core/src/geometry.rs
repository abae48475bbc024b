//! Perforated domains: a lattice of scaled obstacles `z_{i,j} + eps K`.

use std::fmt;
use std::io::Write;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::{Error, Point, Result};

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub fn centered(c: Point, half: f64) -> Self {
        Self::new(c.re - half, c.re + half, c.im - half, c.im + half)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point {
        Point::new(0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }

    pub fn contains(&self, x: Point) -> bool {
        x.re >= self.x0 && x.re <= self.x1 && x.im >= self.y0 && x.im <= self.y1
    }

    /// Euclidean distance from `x` to the closed rectangle (0 inside).
    pub fn distance(&self, x: Point) -> f64 {
        let dx = (self.x0 - x.re).max(0.0).max(x.re - self.x1);
        let dy = (self.y0 - x.im).max(0.0).max(x.im - self.y1);
        dx.hypot(dy)
    }

    pub fn corners(&self) -> [Point; 4] {
        [
            Point::new(self.x0, self.y0),
            Point::new(self.x1, self.y0),
            Point::new(self.x1, self.y1),
            Point::new(self.x0, self.y1),
        ]
    }

    pub fn intersect(&self, other: &Rect) -> Option<Rect> {
        let r = Rect::new(
            self.x0.max(other.x0),
            self.x1.min(other.x1),
            self.y0.max(other.y0),
            self.y1.min(other.y1),
        );
        (r.x1 > r.x0 && r.y1 > r.y0).then_some(r)
    }

    pub fn expand(&self, margin: f64) -> Rect {
        Rect::new(self.x0 - margin, self.x1 + margin, self.y0 - margin, self.y1 + margin)
    }
}

/// Reference obstacle `K`, a closed set with `0` in its interior and
/// contained in `[-1, 1]^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObstacleShape {
    /// Closed unit disk.
    Disk,
    /// Axis-aligned ellipse with semi-axes `p >= q > 0` along x and y.
    Ellipse { p: f64, q: f64 },
}

impl ObstacleShape {
    pub fn validate(&self) -> Result<()> {
        if let ObstacleShape::Ellipse { p, q } = *self {
            if !(q > 0.0) || !p.is_finite() || !q.is_finite() {
                return Err(Error::InvalidParams(format!("ellipse semi-axis q = {q} must be positive")));
            }
            if q > p {
                return Err(Error::InvalidParams(format!("ellipse requires q <= p, got p = {p}, q = {q}")));
            }
            if p > 1.0 {
                return Err(Error::InvalidParams(format!(
                    "ellipse semi-axis p = {p} leaves the square [-1, 1]^2"
                )));
            }
        }
        Ok(())
    }

    /// Semi-axes `(p, q)`; `(1, 1)` for the disk.
    pub fn semi_axes(&self) -> (f64, f64) {
        match *self {
            ObstacleShape::Disk => (1.0, 1.0),
            ObstacleShape::Ellipse { p, q } => (p, q),
        }
    }

    pub fn area(&self) -> f64 {
        let (p, q) = self.semi_axes();
        std::f64::consts::PI * p * q
    }

    /// Implicit level `(x/p)^2 + (y/q)^2`; `<= 1` on the closed obstacle.
    pub fn level(&self, w: Point) -> f64 {
        let (p, q) = self.semi_axes();
        (w.re / p).powi(2) + (w.im / q).powi(2)
    }

    pub fn contains_local(&self, w: Point) -> bool {
        self.level(w) <= 1.0
    }

    /// Boundary point with parametric angle `theta`.
    pub fn boundary_point(&self, theta: f64) -> Point {
        let (p, q) = self.semi_axes();
        Point::new(p * theta.cos(), q * theta.sin())
    }

    /// Euclidean distance from a local point to the obstacle boundary.
    pub fn boundary_distance(&self, w: Point) -> f64 {
        match *self {
            ObstacleShape::Disk => (w.norm() - 1.0).abs(),
            ObstacleShape::Ellipse { p, q } => ellipse_distance(p, q, w.re.abs(), w.im.abs()),
        }
    }

    /// Distance from a local point to the closed obstacle (0 inside).
    pub fn distance(&self, w: Point) -> f64 {
        if self.contains_local(w) {
            0.0
        } else {
            self.boundary_distance(w)
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ObstacleShape::Disk => "disk",
            ObstacleShape::Ellipse { .. } => "ellipse",
        }
    }
}

impl fmt::Display for ObstacleShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObstacleShape::Disk => write!(f, "disk"),
            ObstacleShape::Ellipse { p, q } => write!(f, "ellipse({p},{q})"),
        }
    }
}

/// Distance from `(y0, y1)` in the first quadrant to the ellipse with
/// semi-axes `e0 >= e1`, by bisection on the closest-point equation.
fn ellipse_distance(e0: f64, e1: f64, y0: f64, y1: f64) -> f64 {
    if y1 > 0.0 {
        if y0 > 0.0 {
            let z0 = y0 / e0;
            let z1 = y1 / e1;
            let g = z0 * z0 + z1 * z1 - 1.0;
            if g == 0.0 {
                return 0.0;
            }
            let r0 = (e0 / e1).powi(2);
            let s = ellipse_root(r0, z0, z1, g);
            let x0 = r0 * y0 / (s + r0);
            let x1 = y1 / (s + 1.0);
            (x0 - y0).hypot(x1 - y1)
        } else {
            (y1 - e1).abs()
        }
    } else {
        let numer0 = e0 * y0;
        let denom0 = e0 * e0 - e1 * e1;
        if numer0 < denom0 {
            let xde0 = numer0 / denom0;
            let x0 = e0 * xde0;
            let x1 = e1 * (1.0 - xde0 * xde0).max(0.0).sqrt();
            (x0 - y0).hypot(x1)
        } else {
            (y0 - e0).abs()
        }
    }
}

fn ellipse_root(r0: f64, z0: f64, z1: f64, g: f64) -> f64 {
    let n0 = r0 * z0;
    let mut s0 = z1 - 1.0;
    let mut s1 = if g < 0.0 { 0.0 } else { n0.hypot(z1) - 1.0 };
    let mut s = 0.0;
    for _ in 0..1100 {
        s = 0.5 * (s0 + s1);
        if s == s0 || s == s1 {
            break;
        }
        let ratio0 = n0 / (s + r0);
        let ratio1 = z1 / (s + 1.0);
        let gs = ratio0 * ratio0 + ratio1 * ratio1 - 1.0;
        if gs > 0.0 {
            s0 = s;
        } else if gs < 0.0 {
            s1 = s;
        } else {
            break;
        }
    }
    s
}

/// Scale, separation and fill exponents of the lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeParams {
    pub eps: f64,
    pub alpha: f64,
    pub mu: f64,
}

impl LatticeParams {
    pub fn new(eps: f64, alpha: f64, mu: f64) -> Result<Self> {
        let p = Self { eps, alpha, mu };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::InvalidParams(format!("eps = {} must lie in (0, 1)", self.eps)));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidParams(format!("alpha = {} must be positive", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(Error::InvalidParams(format!("mu = {} must lie in [0, 1]", self.mu)));
        }
        Ok(())
    }

    /// Gap half-width `eps^alpha`.
    pub fn gap(&self) -> f64 {
        self.eps.powf(self.alpha)
    }

    /// Half lattice pitch `eps + eps^alpha`, also the infinity-radius of
    /// every cut-off support.
    pub fn half_pitch(&self) -> f64 {
        self.eps + self.gap()
    }

    /// Number of inclusions along the unit segment.
    pub fn n1(&self) -> usize {
        if let Some(n) = self.n1_exact() {
            return n;
        }
        let q = (1.0 + 2.0 * self.gap()) / (2.0 * self.half_pitch());
        snap_floor(q)
    }

    /// Exact `floor((1 + 2 eps^alpha) / (2 (eps + eps^alpha)))` when eps has a
    /// short decimal expansion and alpha is a small integer.
    fn n1_exact(&self) -> Option<usize> {
        if self.alpha.fract() != 0.0 || self.alpha > 16.0 {
            return None;
        }
        let eps = decimal_rational(self.eps)?;
        let gap = num_traits::pow(eps.clone(), self.alpha as usize);
        let two = BigRational::from_integer(BigInt::from(2));
        let q = (BigRational::one() + &two * &gap) / (&two * (eps + gap));
        q.floor().to_integer().to_usize()
    }

    pub fn n2(&self) -> usize {
        let n1 = self.n1();
        if self.mu == 0.0 {
            1
        } else if self.mu == 1.0 {
            n1
        } else {
            snap_floor((n1 as f64).powf(self.mu))
        }
    }
}

/// Floor of `q`, snapping to the nearest integer when `q` sits within
/// relative 1e-12 of it.
fn snap_floor(q: f64) -> usize {
    let r = q.round();
    if (q - r).abs() <= 1e-12 * q.abs().max(1.0) {
        r as usize
    } else {
        q.floor() as usize
    }
}

/// Parse the shortest round-trip decimal representation of `x` as an exact
/// rational. Returns `None` for values with long expansions.
fn decimal_rational(x: f64) -> Option<BigRational> {
    let s = format!("{x}");
    if s.contains('e') || s.contains('E') {
        return None;
    }
    let (int_part, frac_part) = s.split_once('.').unwrap_or((&s, ""));
    if frac_part.len() > 15 {
        return None;
    }
    let digits: BigInt = format!("{int_part}{frac_part}").parse().ok()?;
    let denom = num_traits::pow(BigInt::from(10), frac_part.len());
    let r = BigRational::new(digits, denom);
    (!r.is_zero()).then_some(r)
}

/// Level-set slack under which a point counts as lying on an obstacle boundary.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// Lattice of scaled obstacles and the rectangle enclosing it.
#[derive(Debug, Clone)]
pub struct PerforatedDomain {
    pub params: LatticeParams,
    pub shape: ObstacleShape,
    pub n1: usize,
    pub n2: usize,
    /// Centers `z_{i,j}`, row-major: index `(j - 1) * n1 + (i - 1)`.
    pub centers: Vec<Point>,
    pub rect: Rect,
}

impl PerforatedDomain {
    pub fn build(params: LatticeParams, shape: ObstacleShape) -> Result<Self> {
        params.validate()?;
        shape.validate()?;
        let n1 = params.n1();
        let n2 = params.n2();
        if n1 == 0 || n2 == 0 {
            return Err(Error::InvalidParams(format!(
                "eps = {} is too large: no inclusion fits in the unit segment",
                params.eps
            )));
        }
        let eps = params.eps;
        let pitch = 2.0 * params.half_pitch();
        let mut centers = Vec::with_capacity(n1 * n2);
        for j in 0..n2 {
            for i in 0..n1 {
                centers.push(Point::new(eps + pitch * i as f64, eps + pitch * j as f64));
            }
        }
        let gap2 = 2.0 * params.gap();
        let rect = Rect::new(0.0, pitch * n1 as f64 - gap2, 0.0, pitch * n2 as f64 - gap2);
        Ok(Self { params, shape, n1, n2, centers, rect })
    }

    pub fn eps(&self) -> f64 {
        self.params.eps
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Row-major index of the 1-based pair `(i, j)`.
    pub fn index(&self, i: usize, j: usize) -> Result<usize> {
        if i == 0 || j == 0 || i > self.n1 || j > self.n2 {
            return Err(Error::IndexOutOfRange { i, j, n1: self.n1, n2: self.n2 });
        }
        Ok((j - 1) * self.n1 + (i - 1))
    }

    /// 1-based pair of a row-major index.
    pub fn pair(&self, k: usize) -> (usize, usize) {
        (k % self.n1 + 1, k / self.n1 + 1)
    }

    pub fn center(&self, i: usize, j: usize) -> Result<Point> {
        Ok(self.centers[self.index(i, j)?])
    }

    /// Obstacle-local coordinates `(x - z_k) / eps`.
    pub fn local(&self, k: usize, x: Point) -> Point {
        (x - self.centers[k]) / self.params.eps
    }

    /// `true` iff `x` belongs to the fluid domain.
    pub fn contains(&self, x: Point) -> bool {
        self.obstacle_at(x).is_none()
    }

    /// Row-major index of the obstacle containing `x`, if any.
    pub fn obstacle_at(&self, x: Point) -> Option<usize> {
        let k = self.cell_at(x)?;
        self.shape.contains_local(self.local(k, x)).then_some(k)
    }

    /// Row-major index of the obstacle whose interior contains `x`, with
    /// boundary points (up to relative level `1e-9`) counted as fluid.
    pub fn interior_obstacle_at(&self, x: Point) -> Option<usize> {
        let k = self.cell_at(x)?;
        (self.shape.level(self.local(k, x)) < 1.0 - BOUNDARY_TOL).then_some(k)
    }

    /// Index of the lattice cell `{|x - z_k|_inf < eps + eps^alpha}` containing
    /// `x`. These cells are the cut-off supports and tile the lattice block.
    pub fn cell_at(&self, x: Point) -> Option<usize> {
        let h = self.params.half_pitch();
        let eps = self.params.eps;
        let fi = ((x.re - eps) / (2.0 * h)).round();
        let fj = ((x.im - eps) / (2.0 * h)).round();
        if fi < 0.0 || fj < 0.0 || fi >= self.n1 as f64 || fj >= self.n2 as f64 {
            return None;
        }
        let k = fj as usize * self.n1 + fi as usize;
        let d = x - self.centers[k];
        (d.re.abs().max(d.im.abs()) < h).then_some(k)
    }

    /// Rectangle tiled by the cut-off supports.
    pub fn lattice_block(&self) -> Rect {
        self.rect.expand(self.params.gap())
    }

    /// Square cell of inclusion `k` (the closed support of its cut-off).
    pub fn cell_rect(&self, k: usize) -> Rect {
        Rect::centered(self.centers[k], self.params.half_pitch())
    }

    /// Total obstacle area `n1 n2 eps^2 |K|`.
    pub fn inclusions_measure(&self) -> f64 {
        self.len() as f64 * self.params.eps.powi(2) * self.shape.area()
    }

    /// Whether `n1 n2 <= (eps + eps^alpha)^-(1 + mu)` holds at this eps.
    pub fn count_bound_holds(&self) -> bool {
        let p = &self.params;
        (self.len() as f64) <= p.half_pitch().powf(-(1.0 + p.mu))
    }

    /// Distance from `x` to the union of the obstacles.
    pub fn distance_to_obstacles(&self, x: Point) -> f64 {
        let h = self.params.half_pitch();
        let eps = self.params.eps;
        let fi = ((x.re - eps) / (2.0 * h)).round() as i64;
        let fj = ((x.im - eps) / (2.0 * h)).round() as i64;
        let mut best = f64::INFINITY;
        let ci = fi.clamp(0, self.n1 as i64 - 1);
        let cj = fj.clamp(0, self.n2 as i64 - 1);
        for dj in -1..=1 {
            for di in -1..=1 {
                let (i, j) = (ci + di, cj + dj);
                if i < 0 || j < 0 || i >= self.n1 as i64 || j >= self.n2 as i64 {
                    continue;
                }
                let k = j as usize * self.n1 + i as usize;
                best = best.min(eps * self.shape.distance(self.local(k, x)));
            }
        }
        best
    }

    /// Sampled Hausdorff distance between the union of obstacles and the
    /// enclosing rectangle, on a grid of spacing `min(eps, eps^alpha) / resolution`.
    pub fn hausdorff_gap(&self, resolution: usize) -> f64 {
        let p = &self.params;
        let mut step = p.eps.min(p.gap()) / resolution.max(1) as f64;
        let max_samples = 4.0e6;
        let count = (self.rect.width() / step + 1.0) * (self.rect.height() / step + 1.0);
        if count > max_samples {
            step *= (count / max_samples).sqrt();
        }
        let nx = (self.rect.width() / step).ceil() as usize + 1;
        let ny = (self.rect.height() / step).ceil() as usize + 1;
        let mut rect_to_set: f64 = 0.0;
        for a in 0..nx {
            let x = self.rect.x0 + self.rect.width() * a as f64 / (nx - 1).max(1) as f64;
            for b in 0..ny {
                let y = self.rect.y0 + self.rect.height() * b as f64 / (ny - 1).max(1) as f64;
                rect_to_set = rect_to_set.max(self.distance_to_obstacles(Point::new(x, y)));
            }
        }
        // obstacles lie inside the rectangle, so the other half is sampled
        // on the obstacle boundaries only
        let mut set_to_rect: f64 = 0.0;
        for (k, z) in self.centers.iter().enumerate() {
            let _ = k;
            for m in 0..64 {
                let theta = std::f64::consts::TAU * m as f64 / 64.0;
                let x = z + p.eps * self.shape.boundary_point(theta);
                set_to_rect = set_to_rect.max(self.rect.distance(x));
            }
        }
        rect_to_set.max(set_to_rect)
    }

    /// Write `centers.csv` (columns `i,j,x,y`).
    pub fn write_centers_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "i,j,x,y")?;
        for (k, z) in self.centers.iter().enumerate() {
            let (i, j) = self.pair(k);
            writeln!(w, "{i},{j},{},{}", z.re, z.im)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk(eps: f64, alpha: f64, mu: f64) -> PerforatedDomain {
        PerforatedDomain::build(LatticeParams::new(eps, alpha, mu).unwrap(), ObstacleShape::Disk).unwrap()
    }

    #[test]
    fn three_disks_on_the_segment() {
        let d = disk(0.1, 1.0, 0.0);
        assert_eq!((d.n1, d.n2), (3, 1));
        let expected = [Point::new(0.1, 0.1), Point::new(0.5, 0.1), Point::new(0.9, 0.1)];
        for (z, e) in d.centers.iter().zip(expected) {
            assert!((z - e).norm() < 1e-15, "{z} vs {e}");
        }
        assert!((d.rect.x1 - 1.0).abs() < 1e-15);
        assert!((d.rect.y1 - 0.2).abs() < 1e-15);
        assert_eq!((d.rect.x0, d.rect.y0), (0.0, 0.0));
    }

    #[test]
    fn counts_for_square_lattices() {
        let d = disk(0.01, 2.0, 1.0);
        assert_eq!((d.n1, d.n2), (49, 49));
        let d = disk(0.01, 2.0, 0.5);
        assert_eq!((d.n1, d.n2), (49, 7));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(LatticeParams::new(1.0, 1.0, 0.0).is_err());
        assert!(LatticeParams::new(0.1, 1.0, 1.5).is_err());
        let p = LatticeParams::new(0.1, 1.0, 0.0).unwrap();
        assert!(PerforatedDomain::build(p, ObstacleShape::Ellipse { p: 0.5, q: 1.0 }).is_err());
        assert!(PerforatedDomain::build(p, ObstacleShape::Ellipse { p: 0.5, q: 0.0 }).is_err());
    }

    #[test]
    fn membership() {
        let d = disk(0.1, 1.0, 0.0);
        let z = d.center(1, 1).unwrap();
        assert!(!d.contains(z));
        assert!(d.contains(z + Point::new(0.1 + 0.1, 0.0)));
        assert!(d.contains(Point::new(-5.0, -5.0)));
        let e = PerforatedDomain::build(d.params, ObstacleShape::Ellipse { p: 1.0, q: 0.5 }).unwrap();
        assert!(!e.contains(z + Point::new(0.09, 0.0)));
        assert!(e.contains(z + Point::new(0.0, 0.06)));
    }

    #[test]
    fn cell_lookup_matches_centers() {
        let d = disk(0.05, 1.5, 1.0);
        for (k, z) in d.centers.iter().enumerate() {
            assert_eq!(d.cell_at(*z), Some(k));
            assert_eq!(d.cell_at(z + Point::new(0.99 * d.params.half_pitch(), 0.0)), Some(k));
        }
        assert_eq!(d.cell_at(Point::new(-1.0, 0.0)), None);
    }

    #[test]
    fn ellipse_distance_matches_sampling() {
        let shape = ObstacleShape::Ellipse { p: 1.0, q: 0.4 };
        for &w in &[Point::new(2.0, 0.3), Point::new(0.1, 1.5), Point::new(0.3, 0.1), Point::new(-1.2, -0.7)] {
            let brute = (0..20000)
                .map(|m| (shape.boundary_point(std::f64::consts::TAU * m as f64 / 20000.0) - w).norm())
                .fold(f64::INFINITY, f64::min);
            assert!((shape.boundary_distance(w) - brute).abs() < 1e-6, "{w}");
        }
    }

    #[test]
    fn hausdorff_bound() {
        let d = disk(0.1, 1.0, 0.0);
        let g = d.hausdorff_gap(8);
        assert!(g <= 2f64.sqrt() * 0.2 + 1e-12, "{g}");
        assert!(g > 0.0);
    }

    #[test]
    fn centers_csv() {
        let d = disk(0.1, 1.0, 0.0);
        let mut buf = Vec::new();
        d.write_centers_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 4);
        assert!(s.starts_with("i,j,x,y\n1,1,0.1,0.1\n"));
    }
}
