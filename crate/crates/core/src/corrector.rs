//! Cut-off functions, the corrected field `v^eps = grad^perp psi^eps` and
//! the four error terms `w^eps_1..4` of `K_{R^2}[f 1_{Omega^eps}] - v^eps`.

use std::f64::consts::TAU;
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::biotsavart::{grad_log, image, Provenance, VelocityField, COINCIDENCE};
use crate::conformal::{MapSplit, ObstacleMap};
use crate::field::{hole_of, Density};
use crate::geometry::{ObstacleShape, PerforatedDomain};
use crate::quadrature::{holed_cell_rule, hole_interior_rule, pairwise_sum, CellPart, Node, QuadSpec, SourceSet};
use crate::{Error, Point, Result};

/// Transition profile `phi(s) = 1 - S(2 s - 1)` on `[1/2, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Profile {
    /// `S(t) = 3 t^2 - 2 t^3` (C^1).
    Cubic,
    /// `S(t) = 6 t^5 - 15 t^4 + 10 t^3` (C^2).
    #[default]
    Quintic,
    /// `S(t) = 35 t^4 - 84 t^5 + 70 t^6 - 20 t^7` (C^3).
    Septic,
}

impl Profile {
    pub fn name(&self) -> &'static str {
        match self {
            Profile::Cubic => "cubic",
            Profile::Quintic => "quintic",
            Profile::Septic => "septic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cubic" => Some(Profile::Cubic),
            "quintic" | "smoothstep" => Some(Profile::Quintic),
            "septic" => Some(Profile::Septic),
            _ => None,
        }
    }

    /// `(S(t), S'(t))` for `t in [0, 1]`.
    fn step(&self, t: f64) -> (f64, f64) {
        let t2 = t * t;
        let u = 1.0 - t;
        match self {
            Profile::Cubic => (t2 * (3.0 - 2.0 * t), 6.0 * t * u),
            Profile::Quintic => (t2 * t * (t * (6.0 * t - 15.0) + 10.0), 30.0 * t2 * u * u),
            Profile::Septic => (t2 * t2 * (35.0 + t * (-84.0 + t * (70.0 - 20.0 * t))), 140.0 * t2 * t * u * u * u),
        }
    }

    /// `(phi(s), phi'(s))`.
    pub fn eval(&self, s: f64) -> (f64, f64) {
        if s <= 0.5 {
            (1.0, 0.0)
        } else if s >= 1.0 {
            (0.0, 0.0)
        } else {
            let (v, d) = self.step(2.0 * s - 1.0);
            (1.0 - v, -2.0 * d)
        }
    }

    /// `sup |phi'|`.
    pub fn sup_slope(&self) -> f64 {
        match self {
            Profile::Cubic => 3.0,
            Profile::Quintic => 3.75,
            Profile::Septic => 4.375,
        }
    }
}

/// `phi^eps_{i,j}(x) = phi((|x - z_{i,j}|_inf - eps) / eps^alpha)`.
#[derive(Debug, Clone, Copy)]
pub struct CutoffFamily<'a> {
    pub domain: &'a PerforatedDomain,
    pub profile: Profile,
}

impl<'a> CutoffFamily<'a> {
    pub fn new(domain: &'a PerforatedDomain, profile: Profile) -> Self {
        Self { domain, profile }
    }

    /// Value and gradient of the cut-off of inclusion `k` (row-major). On the
    /// diagonals of the infinity norm the gradient follows the x coordinate.
    pub fn value_grad(&self, k: usize, x: Point) -> (f64, Point) {
        let d = x - self.domain.centers[k];
        let eps = self.domain.eps();
        let gap = self.domain.params.gap();
        let (ax, ay) = (d.re.abs(), d.im.abs());
        let s = (ax.max(ay) - eps) / gap;
        let (v, dv) = self.profile.eval(s);
        if dv == 0.0 {
            return (v, Point::new(0.0, 0.0));
        }
        let dir = if ax >= ay { Point::new(d.re.signum(), 0.0) } else { Point::new(0.0, d.im.signum()) };
        (v, dir * (dv / gap))
    }

    /// Checked value and gradient with 1-based indices.
    pub fn cutoff(&self, i: usize, j: usize, x: Point) -> Result<(f64, Point)> {
        let k = self.domain.index(i, j)?;
        Ok(self.value_grad(k, x))
    }

    /// The only cut-off that can be non-zero at `x`, with its value and
    /// gradient, when one is.
    pub fn active(&self, x: Point) -> Option<(usize, f64, Point)> {
        let k = self.domain.cell_at(x)?;
        let (v, g) = self.value_grad(k, x);
        (v != 0.0 || g != Point::new(0.0, 0.0)).then_some((k, v, g))
    }

    /// `sum_{i,j} phi^eps_{i,j}(x)`.
    pub fn sum(&self, x: Point) -> f64 {
        self.active(x).map_or(0.0, |(_, v, _)| v)
    }

    /// `sup |grad phi^eps| = sup |phi'| / eps^alpha`.
    pub fn grad_bound(&self) -> f64 {
        self.profile.sup_slope() / self.domain.params.gap()
    }

    /// Closed form `4 eps^{alpha+1} + 3 eps^{2 alpha}`.
    pub fn gradient_support_measure_exact(&self) -> f64 {
        let eps = self.domain.eps();
        let gap = self.domain.params.gap();
        4.0 * gap * eps + 3.0 * gap * gap
    }

    /// Measure of `supp grad phi^eps_k`, located by bisection on the
    /// evaluated gradient along the ray from the center: the support is the
    /// square annulus between the two radii found.
    pub fn gradient_support_measure(&self, k: usize) -> f64 {
        let z = self.domain.centers[k];
        let active = |r: f64| self.value_grad(k, z + r).1 != Point::new(0.0, 0.0);
        let eps = self.domain.eps();
        let h = self.domain.params.half_pitch();
        let mid = eps + 0.75 * self.domain.params.gap();
        let bisect = |mut lo: f64, mut hi: f64, lo_active: bool| {
            for _ in 0..200 {
                let m = 0.5 * (lo + hi);
                if m <= lo || m >= hi {
                    break;
                }
                if active(m) == lo_active {
                    lo = m;
                } else {
                    hi = m;
                }
            }
            0.5 * (lo + hi)
        };
        let inner = bisect(0.0, mid, false);
        let outer = bisect(mid, h, true);
        4.0 * (outer * outer - inner * inner)
    }

    /// Measure of `supp phi^eps_k`, the square of half side `eps + eps^alpha`.
    pub fn support_measure(&self) -> f64 {
        let h = self.domain.params.half_pitch();
        4.0 * h * h
    }
}

/// All quantities of the decomposition at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PointTerms {
    /// `K_{R^2}[f 1_{Omega^eps}](x)`.
    pub plane: Point,
    /// `w^eps_1..4(x)`.
    pub w: [Point; 4],
    /// `sum phi^eps_{i,j}(x)`.
    pub phi: f64,
    /// `int ln(beta |x - y| / (eps |T x - T y|)) f(y) dy` for the active cut-off.
    pub log_ratio: f64,
    /// Whether `x` lies inside an inclusion (where `v^eps` is extended by 0).
    pub inside: bool,
}

impl PointTerms {
    /// `w^eps = sum_k w^eps_k`, or `K_{R^2}[f 1_{Omega^eps}]` inside inclusions.
    pub fn total(&self) -> Point {
        if self.inside {
            self.plane
        } else {
            self.w.iter().sum()
        }
    }

    /// `v^eps = K - w^eps`.
    pub fn corrected(&self) -> Point {
        if self.inside {
            Point::new(0.0, 0.0)
        } else {
            self.plane - self.total()
        }
    }
}

#[inline]
fn i_times(v: Point) -> Point {
    Point::new(-v.im, v.re)
}

/// The corrected field and its error terms for one vorticity on one lattice.
pub struct Corrector<'a> {
    pub domain: &'a PerforatedDomain,
    pub map: ObstacleMap,
    pub cutoffs: CutoffFamily<'a>,
    /// Quadrature of `f 1_{Omega^eps}`.
    pub sources: SourceSet<'a>,
    far: Vec<OnceLock<FarField>>,
}

impl<'a> Corrector<'a> {
    pub fn new(domain: &'a PerforatedDomain, f: &'a dyn Density, quad: QuadSpec, profile: Profile) -> Result<Self> {
        let map = ObstacleMap::new(domain.shape)?;
        Ok(Self {
            domain,
            map,
            cutoffs: CutoffFamily::new(domain, profile),
            sources: SourceSet::build(f, Some(domain), quad),
            far: (0..domain.len()).map(|_| OnceLock::new()).collect(),
        })
    }

    fn plane_only(&self, x: Point, inside: bool) -> PointTerms {
        let mut acc = Vec::new();
        self.sources.for_each_at(x, |y, w| {
            let d = x - y;
            if d.norm_sqr() > 0.0 {
                acc.push(w * grad_log(d));
            }
        });
        PointTerms { plane: i_times(pairwise_sum(&acc)) / TAU, inside, ..Default::default() }
    }

    /// `K`, `w^eps_1..4` at `x`. Source cells far from the active inclusion
    /// enter through series expansions built once per inclusion; the others
    /// are summed directly as in [`Corrector::terms_direct`].
    pub fn terms(&self, x: Point) -> PointTerms {
        if self.domain.interior_obstacle_at(x).is_some() {
            return self.plane_only(x, true);
        }
        let Some((k, phi, gphi)) = self.cutoffs.active(x) else {
            return self.plane_only(x, false);
        };
        let far = self.far[k].get_or_init(|| FarField::build(self, k));
        if far.far_cells.is_empty() {
            return self.terms_direct(x);
        }
        let sx = self.map.split_unchecked(self.domain.local(k, x));
        let mut acc = Sums::default();
        for &ci in &far.near_cells {
            let c = &self.sources.cells[ci];
            if self.sources.is_near(c, x) {
                let mut nodes = Vec::new();
                self.sources.near_nodes(c, x, &mut nodes);
                for n in nodes {
                    self.accumulate(&mut acc, k, x, &sx, n.y, n.w);
                }
            } else {
                for n in &self.sources.nodes[c.range.clone()] {
                    self.accumulate(&mut acc, k, x, &sx, n.y, n.w);
                }
            }
        }
        let near = acc.finish();
        let ff = far.eval(self, k, x, &sx);
        self.assemble(&sx, phi, gphi, [
            near[0] + ff[0],
            near[1] + ff[1],
            near[2] + ff[2],
            near[3] + ff[3],
            near[4] + ff[4],
        ])
    }

    #[inline]
    fn accumulate(&self, acc: &mut Sums, k: usize, x: Point, sx: &MapSplit, y: Point, w: f64) {
        let d = x - y;
        if d.norm() <= COINCIDENCE * self.domain.eps() {
            return;
        }
        let eps = self.domain.eps();
        let beta = self.map.beta;
        acc.plane.push(w * grad_log(d));
        let yl = self.domain.local(k, y);
        let hy = self.map.tail_unchecked(yl);
        let ty = beta * yl + hy;
        let dh = eps * (sx.h - hy);
        if dh != Point::new(0.0, 0.0) {
            let e = beta * d + dh;
            let delta = dh / (beta * d);
            acc.a.push(Point::new(-0.5 * w * (2.0 * delta.re + delta.norm_sqr()).ln_1p(), 0.0));
            acc.k3.push(w * (dh - sx.dh * d).conj() / (d * e).conj());
        }
        let diff = sx.t - image(ty);
        acc.b.push(Point::new(0.5 * w * (sx.t.norm_sqr() / diff.norm_sqr()).ln(), 0.0));
        acc.k4.push(w * (grad_log(diff) - grad_log(sx.t)));
    }

    /// Combine `[sum w grad ln|x-y|, A, B, kernel-3 sum, kernel-4 sum]`.
    fn assemble(&self, sx: &MapSplit, phi: f64, gphi: Point, s: [Point; 5]) -> PointTerms {
        let dt_eps = sx.dt / self.domain.eps();
        let (a, b) = (s[1].re, s[2].re);
        PointTerms {
            plane: i_times(s[0]) / TAU,
            w: [
                i_times(gphi) * a / TAU,
                -i_times(gphi) * b / TAU,
                i_times(s[3]) * phi / TAU,
                i_times(dt_eps.conj() * s[4]) * phi / TAU,
            ],
            phi,
            log_ratio: a,
            inside: false,
        }
    }

    /// As [`Corrector::terms`], summing every source node directly. The log
    /// ratio and the kernel difference are computed from the tail
    /// `h = T - beta Id`, so both vanish identically for the disk.
    pub fn terms_direct(&self, x: Point) -> PointTerms {
        if self.domain.interior_obstacle_at(x).is_some() {
            return self.plane_only(x, true);
        }
        let Some((k, phi, gphi)) = self.cutoffs.active(x) else {
            return self.plane_only(x, false);
        };
        let sx = self.map.split_unchecked(self.domain.local(k, x));
        let mut acc = Sums::default();
        self.sources.for_each_at(x, |y, w| self.accumulate(&mut acc, k, x, &sx, y, w));
        self.assemble(&sx, phi, gphi, acc.finish())
    }

    /// `w^eps_k(x)` for `k in 1..=4`; zero inside the inclusions.
    pub fn error_term(&self, k: usize, x: Point) -> Result<Point> {
        if !(1..=4).contains(&k) {
            return Err(Error::InvalidParams(format!("error term index {k} must be in 1..=4")));
        }
        let t = self.terms(x);
        Ok(if t.inside { Point::new(0.0, 0.0) } else { t.w[k - 1] })
    }

    /// `v^eps(x)` from the first form of `psi^eps`: the product rule applied
    /// to `(1 - phi) ln|x - y|` and to `phi ln(eps |Tx - Ty| |Tx| / (beta |Tx - Ty*|))`.
    pub fn corrector_velocity(&self, x: Point) -> Point {
        if self.domain.interior_obstacle_at(x).is_some() {
            return Point::new(0.0, 0.0);
        }
        let Some((k, phi, gphi)) = self.cutoffs.active(x) else {
            return self.plane_only(x, false).plane;
        };
        let eps = self.domain.eps();
        let scale = (eps / self.map.beta).ln();
        let (tx, dtx) = self.map.forward_with_derivative(self.domain.local(k, x));
        let mut plane = Vec::new();
        let mut l0 = Vec::new();
        let mut c = Vec::new();
        let mut kern = Vec::new();
        self.sources.for_each_at(x, |y, w| {
            let d = x - y;
            if d.norm() <= COINCIDENCE * self.domain.eps() {
                return;
            }
            plane.push(w * grad_log(d));
            l0.push(0.5 * w * d.norm_sqr().ln());
            let ty = self.map.forward_unchecked(self.domain.local(k, y));
            let ys = image(ty);
            c.push(w * (scale + 0.5 * ((tx - ty).norm_sqr() * tx.norm_sqr() / (tx - ys).norm_sqr()).ln()));
            kern.push(w * (grad_log(tx - ty) - grad_log(tx - ys) + grad_log(tx)));
        });
        let plane = i_times(pairwise_sum(&plane));
        let l0 = pairwise_sum(&l0);
        let c = pairwise_sum(&c);
        let mapped = i_times((dtx / eps).conj() * pairwise_sum(&kern));
        ((1.0 - phi) * plane + i_times(gphi) * (c - l0) + phi * mapped) / TAU
    }

    /// `psi^eps(x)` from the first form.
    pub fn stream(&self, x: Point) -> f64 {
        let active = self.cutoffs.active(x);
        let mut l0 = Vec::new();
        let mut c = Vec::new();
        let eps = self.domain.eps();
        let scale = (eps / self.map.beta).ln();
        let tx = active.map(|(k, _, _)| self.map.forward_unchecked(self.domain.local(k, x)));
        self.sources.for_each_at(x, |y, w| {
            let d = x - y;
            if d.norm() <= COINCIDENCE * self.domain.eps() {
                return;
            }
            l0.push(0.5 * w * d.norm_sqr().ln());
            if let (Some((k, _, _)), Some(tx)) = (active, tx) {
                let ty = self.map.forward_unchecked(self.domain.local(k, y));
                let r = (tx - ty).norm_sqr() * tx.norm_sqr() / (tx - image(ty)).norm_sqr();
                c.push(w * (scale + 0.5 * r.ln()));
            }
        });
        let phi = active.map_or(0.0, |(_, v, _)| v);
        ((1.0 - phi) * pairwise_sum(&l0) + phi * pairwise_sum(&c)) / TAU
    }

    pub fn terms_batch(&self, xs: &[Point]) -> Vec<PointTerms> {
        xs.par_iter().map(|&x| self.terms(x)).collect()
    }
}

impl VelocityField for Corrector<'_> {
    fn provenance(&self) -> Provenance {
        Provenance::Corrector
    }

    fn velocity(&self, x: Point) -> Result<Point> {
        Ok(self.corrector_velocity(x))
    }
}

/// `w^eps_k` as a velocity field.
pub struct ErrorTermField<'c, 'a> {
    pub corrector: &'c Corrector<'a>,
    pub k: usize,
}

impl VelocityField for ErrorTermField<'_, '_> {
    fn provenance(&self) -> Provenance {
        Provenance::ErrorTerm(self.k as u8)
    }

    fn velocity(&self, x: Point) -> Result<Point> {
        self.corrector.error_term(self.k, x)
    }
}

#[derive(Default)]
struct Sums {
    plane: Vec<Point>,
    a: Vec<Point>,
    b: Vec<Point>,
    k3: Vec<Point>,
    k4: Vec<Point>,
}

impl Sums {
    fn finish(&self) -> [Point; 5] {
        [
            pairwise_sum(&self.plane),
            pairwise_sum(&self.a),
            pairwise_sum(&self.b),
            pairwise_sum(&self.k3),
            pairwise_sum(&self.k4),
        ]
    }
}

/// Source cells farther than this many half pitches from the inclusion
/// center are summed through series.
const FAR_RADIUS: f64 = 3.0;
/// Series are truncated once the convergence ratio to this power is below
/// `1e-17`.
const SERIES_TOL: f64 = 1e-17;

/// Series for the sources far from inclusion `k`, in scaled variables:
/// `sum w log(x - y) = sum_p a_p ((x - z) / H)^p`,
/// `sum w log(Ty - Tx) = sum_p b_p (Tx / rho)^p`,
/// `sum w log(Tx - s) = m_0 log Tx - sum_{p>=1} m_p / (p Tx^p)` with `s = Ty*`.
struct FarField {
    near_cells: Vec<usize>,
    far_cells: Vec<usize>,
    h: f64,
    rho: f64,
    a: Vec<Point>,
    b: Vec<Point>,
    m: Vec<Point>,
}

fn order_for(ratio: f64) -> usize {
    ((SERIES_TOL.ln() / ratio.ln()).ceil() as usize).clamp(4, 400)
}

fn horner(c: &[Point], t: Point) -> (Point, Point) {
    let mut v = Point::new(0.0, 0.0);
    let mut dv = Point::new(0.0, 0.0);
    for &cp in c.iter().rev() {
        dv = dv * t + v;
        v = v * t + cp;
    }
    (v, dv)
}

impl FarField {
    fn build(c: &Corrector, k: usize) -> Self {
        let d = c.domain;
        let z = d.centers[k];
        let eps = d.eps();
        let h = d.params.half_pitch();
        let map = &c.map;
        let mut near_cells = Vec::new();
        let mut far_cells = Vec::new();
        let mut min_y = f64::INFINITY;
        let x_max = std::f64::consts::SQRT_2 * h;
        for (ci, cell) in c.sources.cells.iter().enumerate() {
            let width = cell.rect.width().max(cell.rect.height());
            let dist = cell.rect.distance(z);
            let far = dist >= FAR_RADIUS * h && dist >= c.sources.spec.near_factor * width + x_max;
            if far {
                far_cells.push(ci);
                min_y = min_y.min(cell.rect.distance(z));
            } else {
                near_cells.push(ci);
            }
        }
        let empty = Self { near_cells: Vec::new(), far_cells: Vec::new(), h, rho: 1.0, a: vec![], b: vec![], m: vec![] };
        if far_cells.is_empty() {
            return empty;
        }
        let pa = order_for(x_max / min_y);
        let (beta, hs) = (map.beta, map.h_sup);
        let tx_max = beta * x_max / eps + hs;
        let ty_min = beta * min_y / eps - hs;
        let rho = tx_max;
        if !(ty_min > 1.0) || tx_max / ty_min > 0.9 {
            return Self { near_cells: (0..c.sources.cells.len()).collect(), ..empty };
        }
        let pb = order_for(tx_max / ty_min);
        let pm = order_for(1.0 / ty_min);
        let tailed = map.shape != ObstacleShape::Disk;
        let mut a = vec![Point::new(0.0, 0.0); pa + 1];
        let mut b = vec![Point::new(0.0, 0.0); if tailed { pb + 1 } else { 0 }];
        let mut m = vec![Point::new(0.0, 0.0); pm + 1];
        let mut a0 = Vec::new();
        let mut b0 = Vec::new();
        for &ci in &far_cells {
            for n in &c.sources.nodes[c.sources.cells[ci].range.clone()] {
                let w = n.w;
                let u = n.y - z;
                a0.push(w * (-u).ln());
                let r = h / u;
                let mut rp = r;
                for (p, ap) in a.iter_mut().enumerate().skip(1) {
                    *ap -= w * rp / p as f64;
                    rp *= r;
                }
                let ty = map.forward_unchecked(u / eps);
                if tailed {
                    b0.push(w * ty.ln());
                    let q = rho / ty;
                    let mut qp = q;
                    for (p, bp) in b.iter_mut().enumerate().skip(1) {
                        *bp -= w * qp / p as f64;
                        qp *= q;
                    }
                }
                let s = image(ty);
                let mut sp = Point::new(w, 0.0);
                for mp in m.iter_mut() {
                    *mp += sp;
                    sp *= s;
                }
            }
        }
        a[0] = pairwise_sum(&a0);
        if tailed {
            b[0] = pairwise_sum(&b0);
        }
        Self { near_cells, far_cells, h, rho, a, b, m }
    }

    /// Far contributions `[sum w grad ln|x-y|, A, B, kernel-3 sum, kernel-4 sum]`.
    fn eval(&self, c: &Corrector, k: usize, x: Point, sx: &MapSplit) -> [Point; 5] {
        let eps = c.domain.eps();
        let t = (x - c.domain.centers[k]) / self.h;
        let (la, dla) = horner(&self.a, t);
        // sum w / (x - y)
        let s1 = dla / self.h;
        let tx = sx.t;
        let inv = 1.0 / tx;
        let m0 = self.m[0].re;
        // sum_{p>=1} m_p / (p Tx^p) and sum_{p>=1} m_p / Tx^{p+1}
        let mut lim = Point::new(0.0, 0.0);
        let mut dim = Point::new(0.0, 0.0);
        let mut ip = inv;
        for (p, &mp) in self.m.iter().enumerate().skip(1) {
            lim += mp * ip / p as f64;
            ip *= inv;
            dim += mp * ip;
        }
        let b = lim.re;
        let k4 = dim.conj();
        let (a, k3) = if self.b.is_empty() {
            (0.0, Point::new(0.0, 0.0))
        } else {
            let (lb, dlb) = horner(&self.b, tx / self.rho);
            let s2 = dlb / self.rho;
            let a = la.re - lb.re + m0 * (c.map.beta / eps).ln();
            (a, s1.conj() - sx.dt.conj() * s2.conj() / eps)
        };
        [s1.conj(), Point::new(a, 0.0), Point::new(b, 0.0), k3, k4]
    }
}

/// L^2 norms of the decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectorReport {
    pub eps: f64,
    pub alpha: f64,
    pub mu: f64,
    pub shape: ObstacleShape,
    /// `||w^eps_k||_{L^2(Omega^eps)}`.
    pub w: [f64; 4],
    /// `||w^eps||_{L^2(Omega^eps)}`.
    pub total: f64,
    /// `||w^eps||_{L^2(inclusions)} = ||K_{R^2}[f 1_{Omega^eps}]||_{L^2(inclusions)}`.
    pub inclusions: f64,
    /// `sup |K_{R^2}[f 1_{Omega^eps}]|` over the inclusion nodes.
    pub inclusions_sup: f64,
    /// Error estimates (difference against a half-order rule) for `w`, `total`, `inclusions`.
    pub w_err: [f64; 4],
    pub total_err: f64,
    pub inclusions_err: f64,
    /// `sup |log_ratio|` over the transition bands.
    pub log_ratio_sup: f64,
}

impl CorrectorReport {
    pub const CSV_HEADER: &'static str = "eps,alpha,mu,shape,w1_l2,w2_l2,w3_l2,w4_l2,w_l2,w_l2_inclusions,\
w1_err,w2_err,w3_err,w4_err,w_err,inclusions_err,log_ratio_sup";
}

/// Target rule over the cut-off supports minus the inclusions, split at the
/// inner plateau where the cut-off stops being smooth.
pub fn cutoff_support_rule(domain: &PerforatedDomain, order: usize) -> Vec<Node> {
    let h = domain.params.half_pitch();
    let inner = domain.eps() + 0.5 * domain.params.gap();
    (0..domain.len())
        .flat_map(|k| {
            let hole = hole_of(domain, k);
            let mut v = holed_cell_rule(&hole, h, CellPart::Inner(inner), order, order);
            v.extend(holed_cell_rule(&hole, h, CellPart::Outer(inner), order, order));
            v
        })
        .collect()
}

fn norms(c: &Corrector, order: usize) -> ([f64; 4], f64, f64, f64, f64) {
    let nodes = cutoff_support_rule(c.domain, order);
    let xs: Vec<Point> = nodes.iter().map(|n| n.y).collect();
    let terms = c.terms_batch(&xs);
    let mut w = [0.0; 4];
    for (k, wk) in w.iter_mut().enumerate() {
        let v: Vec<f64> = nodes.iter().zip(&terms).map(|(n, t)| n.w * t.w[k].norm_sqr()).collect();
        *wk = pairwise_sum(&v).sqrt();
    }
    let v: Vec<f64> = nodes.iter().zip(&terms).map(|(n, t)| n.w * t.total().norm_sqr()).collect();
    let total = pairwise_sum(&v).sqrt();
    let log_sup = terms.iter().filter(|t| t.phi < 1.0).map(|t| t.log_ratio.abs()).fold(0.0, f64::max);

    let inc: Vec<Node> = (0..c.domain.len())
        .flat_map(|k| hole_interior_rule(&hole_of(c.domain, k), 2 * order, order))
        .collect();
    let vals: Vec<Point> = inc.par_iter().map(|n| c.plane_only(n.y, true).plane).collect();
    let v: Vec<f64> = inc.iter().zip(&vals).map(|(n, u)| n.w * u.norm_sqr()).collect();
    let inclusions = pairwise_sum(&v).sqrt();
    let sup = vals.iter().map(|u| u.norm()).fold(0.0, f64::max);
    (w, total, inclusions, sup, log_sup)
}

/// Per-term L^2 norms over `Omega^eps` and over the inclusions.
pub fn corrector_report(c: &Corrector) -> Result<CorrectorReport> {
    let order = c.sources.spec.target_order.max(2);
    let (w, total, inclusions, sup, log_sup) = norms(c, order);
    let (w2, total2, inclusions2, _, _) = norms(c, order.div_ceil(2));
    let all = w.iter().chain([&total, &inclusions]);
    if all.clone().any(|v| !v.is_finite()) {
        return Err(Error::QuadratureNotConverged { value: f64::NAN, error: f64::NAN });
    }
    let p = c.domain.params;
    Ok(CorrectorReport {
        eps: p.eps,
        alpha: p.alpha,
        mu: p.mu,
        shape: c.domain.shape,
        w,
        total,
        inclusions,
        inclusions_sup: sup,
        w_err: [0, 1, 2, 3].map(|k| (w[k] - w2[k]).abs()),
        total_err: (total - total2).abs(),
        inclusions_err: (inclusions - inclusions2).abs(),
        log_ratio_sup: log_sup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{VorticityKind, VorticitySpec};
    use crate::geometry::LatticeParams;

    fn lattice(eps: f64, alpha: f64, mu: f64, shape: ObstacleShape) -> PerforatedDomain {
        PerforatedDomain::build(LatticeParams::new(eps, alpha, mu).unwrap(), shape).unwrap()
    }

    #[test]
    fn profiles_have_plateaus_and_bounded_slope() {
        for p in [Profile::Cubic, Profile::Quintic, Profile::Septic] {
            assert_eq!(p.eval(0.5), (1.0, 0.0));
            assert_eq!(p.eval(1.0), (0.0, 0.0));
            let mut prev = 1.0;
            let mut sup: f64 = 0.0;
            for k in 0..=1000 {
                let s = 0.5 + 0.5 * k as f64 / 1000.0;
                let (v, d) = p.eval(s);
                assert!(v <= prev + 1e-15);
                prev = v;
                sup = sup.max(d.abs());
                let e = 1e-7;
                if s > 0.5 + e && s < 1.0 - e {
                    let fd = (p.eval(s + e).0 - p.eval(s - e).0) / (2.0 * e);
                    assert!((fd - d).abs() < 1e-6);
                }
            }
            assert!((sup - p.sup_slope()).abs() < 1e-3, "{}", p.name());
            assert_eq!(Profile::parse(p.name()), Some(p));
        }
    }

    #[test]
    fn cutoff_plateaus_and_support_measure() {
        for (eps, alpha) in [(0.1, 1.0), (0.05, 2.0)] {
            let d = lattice(eps, alpha, 0.0, ObstacleShape::Disk);
            let c = CutoffFamily::new(&d, Profile::Quintic);
            let z = d.center(1, 1).unwrap();
            assert_eq!(c.cutoff(1, 1, z).unwrap(), (1.0, Point::new(0.0, 0.0)));
            let edge = z + Point::new(d.params.half_pitch(), 0.3 * eps);
            assert_eq!(c.cutoff(1, 1, edge).unwrap(), (0.0, Point::new(0.0, 0.0)));
            let exact = 4.0 * eps.powf(alpha + 1.0) + 3.0 * eps.powf(2.0 * alpha);
            assert!((c.gradient_support_measure(0) - exact).abs() < 1e-12);
            assert!((c.gradient_support_measure_exact() - exact).abs() < 1e-15);
        }
    }

    #[test]
    fn cutoff_gradient_is_bounded_and_supports_disjoint() {
        let d = lattice(0.1, 1.0, 1.0, ObstacleShape::Disk);
        let c = CutoffFamily::new(&d, Profile::Quintic);
        for a in 0..60 {
            for b in 0..60 {
                let x = Point::new(-0.1 + 1.2 * a as f64 / 59.0, -0.1 + 1.2 * b as f64 / 59.0);
                let nonzero = (0..d.len()).filter(|&k| c.value_grad(k, x).0 != 0.0).count();
                assert!(nonzero <= 1);
                for k in 0..d.len() {
                    assert!(c.value_grad(k, x).1.norm() <= c.grad_bound() * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn disk_annihilates_first_and_third_terms() {
        let d = lattice(0.1, 1.0, 0.0, ObstacleShape::Disk);
        let f = VorticitySpec::new(VorticityKind::RadialBump, Point::new(0.5, 0.5), 0.6, 1.0).unwrap();
        let c = Corrector::new(&d, &f, QuadSpec::default(), Profile::Quintic).unwrap();
        for &x in &[Point::new(0.32, 0.1), Point::new(0.5, 0.25), Point::new(0.02, 0.05)] {
            let t = c.terms(x);
            assert_eq!(t.w[0], Point::new(0.0, 0.0));
            assert_eq!(t.w[2], Point::new(0.0, 0.0));
        }
    }

    #[test]
    fn closure_matches_independent_stream_form() {
        let d = lattice(0.1, 1.0, 0.0, ObstacleShape::Ellipse { p: 1.0, q: 0.5 });
        let f = VorticitySpec::new(VorticityKind::RadialBump, Point::new(0.5, 0.4), 0.5, 1.0).unwrap();
        let c = Corrector::new(&d, &f, QuadSpec::default(), Profile::Quintic).unwrap();
        for &x in &[Point::new(0.33, 0.12), Point::new(0.55, 0.27), Point::new(0.9, -0.08), Point::new(0.7, 0.6)] {
            let t = c.terms(x);
            let v = c.corrector_velocity(x);
            let scale = t.plane.norm().max(1e-3);
            assert!((t.total() - (t.plane - v)).norm() < 1e-10 * scale, "{x}");
        }
    }

    #[test]
    fn outside_cutoffs_corrector_is_plane_field() {
        let d = lattice(0.1, 1.0, 0.0, ObstacleShape::Ellipse { p: 1.0, q: 0.5 });
        let f = VorticitySpec::new(VorticityKind::RadialBump, Point::new(0.5, 0.4), 0.5, 1.0).unwrap();
        let c = Corrector::new(&d, &f, QuadSpec::default(), Profile::Quintic).unwrap();
        let x = Point::new(0.5, 0.5);
        let t = c.terms(x);
        assert_eq!(t.w, [Point::new(0.0, 0.0); 4]);
        assert_eq!(c.corrector_velocity(x), t.plane);
    }

    #[test]
    fn corrector_is_tangent_on_ellipse() {
        let shape = ObstacleShape::Ellipse { p: 1.0, q: 0.5 };
        let d = lattice(0.1, 1.0, 0.0, shape);
        let f = VorticitySpec::new(VorticityKind::RadialBump, Point::new(0.5, 0.45), 0.3, 1.0).unwrap();
        let c = Corrector::new(&d, &f, QuadSpec::default(), Profile::Quintic).unwrap();
        let z = d.center(2, 1).unwrap();
        for m in 0..24 {
            let t = TAU * m as f64 / 24.0;
            let x = z + shape.boundary_point(t) * d.eps();
            let normal = Point::new(0.5 * t.cos(), t.sin());
            let v = c.corrector_velocity(x);
            assert!((v.re * normal.re + v.im * normal.im).abs() < 1e-9);
        }
    }

    #[test]
    fn series_match_direct_summation() {
        for shape in [ObstacleShape::Disk, ObstacleShape::Ellipse { p: 1.0, q: 0.5 }] {
            let d = lattice(0.05, 1.0, 0.0, shape);
            let f = VorticitySpec::new(VorticityKind::RadialBump, Point::new(0.5, 0.5), 0.9, 1.0).unwrap();
            let c = Corrector::new(&d, &f, QuadSpec::default(), Profile::Quintic).unwrap();
            for &x in &[Point::new(0.27, 0.02), Point::new(0.45, 0.08), Point::new(0.875, 0.05), Point::new(0.62, -0.015)] {
                let a = c.terms(x);
                let b = c.terms_direct(x);
                let scale = b.plane.norm();
                assert!((a.plane - b.plane).norm() < 1e-12 * scale, "{x}");
                for k in 0..4 {
                    assert!((a.w[k] - b.w[k]).norm() < 1e-12 * scale, "{x} w{}: {} vs {}", k + 1, a.w[k], b.w[k]);
                }
                assert!((a.log_ratio - b.log_ratio).abs() < 1e-12);
            }
        }
    }
}
