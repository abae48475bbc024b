//! Compactly supported vorticity data and L^p norms over regions.

use std::f64::consts::{PI, TAU};

use crate::geometry::{PerforatedDomain, Rect};
use crate::quadrature::{
    disk_rule, gl_interval, halton, hole_interior_rule, holed_cell_rule, pairwise_sum, rect_rule, CellPart, Hole,
    Node, QuadSpec, Scheme,
};
use crate::{Error, Point, Result};

/// A bounded scalar field with compact support.
pub trait Density: Sync {
    fn value(&self, x: Point) -> f64;

    /// Disk `(center, radius)` outside of which the field vanishes.
    fn support(&self) -> (Point, f64);

    /// Whether the field vanishes on the closed disk `B(c, r)`.
    fn vanishes_on_disk(&self, c: Point, r: f64) -> bool {
        let (s, rs) = self.support();
        (c - s).norm() >= r + rs
    }
}

/// Built-in radial profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VorticityKind {
    /// `A (1 - |x - c|^2 / R0^2)^3`.
    RadialBump,
    /// `A exp(-|x - c|^2 / (2 sigma^2))` with `sigma = R0 / 3`, cut at `R0`.
    GaussianTruncated,
    /// `A` on `|x - c| <= 0.8 R0`, quintic smoothstep down to 0 at `R0`.
    PatchIndicatorSmooth,
}

impl VorticityKind {
    pub fn name(&self) -> &'static str {
        match self {
            VorticityKind::RadialBump => "radial_bump",
            VorticityKind::GaussianTruncated => "gaussian_truncated",
            VorticityKind::PatchIndicatorSmooth => "patch_indicator_smooth",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "radial_bump" => Some(VorticityKind::RadialBump),
            "gaussian_truncated" => Some(VorticityKind::GaussianTruncated),
            "patch_indicator_smooth" => Some(VorticityKind::PatchIndicatorSmooth),
            _ => None,
        }
    }
}

/// Relative width of the smooth edge of the patch profile.
pub const PATCH_EDGE: f64 = 0.2;

/// Quintic smoothstep `6t^5 - 15t^4 + 10t^3` clamped to `[0, 1]`.
pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

/// Radially symmetric vorticity `A g(|x - c| / R0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VorticitySpec {
    pub kind: VorticityKind,
    pub center: Point,
    pub radius: f64,
    pub amplitude: f64,
}

impl VorticitySpec {
    pub fn new(kind: VorticityKind, center: Point, radius: f64, amplitude: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidParams(format!("support radius R0 = {radius} must be positive")));
        }
        if !amplitude.is_finite() {
            return Err(Error::InvalidParams("amplitude must be finite".into()));
        }
        Ok(Self { kind, center, radius, amplitude })
    }

    /// Profile `g(s)` on `s = r / R0 >= 0`.
    pub fn profile(&self, s: f64) -> f64 {
        if s > 1.0 {
            return 0.0;
        }
        match self.kind {
            VorticityKind::RadialBump => (1.0 - s * s).powi(3),
            VorticityKind::GaussianTruncated => (-4.5 * s * s).exp(),
            VorticityKind::PatchIndicatorSmooth => 1.0 - smoothstep((s - (1.0 - PATCH_EDGE)) / PATCH_EDGE),
        }
    }

    /// Vorticity enclosed in `B(c, r)`: `2 pi A int_0^r g(t / R0) t dt`.
    pub fn enclosed_mass(&self, r: f64) -> f64 {
        let r0 = self.radius;
        let s = (r / r0).clamp(0.0, 1.0);
        let a = self.amplitude;
        match self.kind {
            VorticityKind::RadialBump => PI * r0 * r0 * a / 4.0 * (1.0 - (1.0 - s * s).powi(4)),
            VorticityKind::GaussianTruncated => {
                let sigma = r0 / 3.0;
                let rr = s * r0;
                a * TAU * sigma * sigma * (1.0 - (-rr * rr / (2.0 * sigma * sigma)).exp())
            }
            VorticityKind::PatchIndicatorSmooth => {
                let e0 = 1.0 - PATCH_EDGE;
                let plateau = 0.5 * s.min(e0).powi(2);
                let edge: f64 = if s > e0 {
                    gl_interval(8, e0, s).map(|(t, w)| w * t * self.profile(t)).sum()
                } else {
                    0.0
                };
                TAU * a * r0 * r0 * (plateau + edge)
            }
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.enclosed_mass(self.radius)
    }

    /// `sup |f|`.
    pub fn sup_norm(&self) -> f64 {
        self.amplitude.abs()
    }

    /// `||f||_{L^1}` (the profiles are non-negative).
    pub fn l1_norm(&self) -> f64 {
        self.total_mass().abs()
    }

    /// Plane Biot-Savart velocity of this radial field, `(x - c)^perp m(|x - c|) / (2 pi |x - c|^2)`.
    pub fn radial_velocity(&self, x: Point) -> Point {
        let d = x - self.center;
        let r2 = d.norm_sqr();
        if r2 == 0.0 {
            return Point::new(0.0, 0.0);
        }
        Point::new(-d.im, d.re) * (self.enclosed_mass(r2.sqrt()) / (TAU * r2))
    }
}

impl Density for VorticitySpec {
    #[inline]
    fn value(&self, x: Point) -> f64 {
        let r2 = (x - self.center).norm_sqr();
        let r02 = self.radius * self.radius;
        if r2 > r02 {
            return 0.0;
        }
        match self.kind {
            VorticityKind::RadialBump => self.amplitude * (1.0 - r2 / r02).powi(3),
            VorticityKind::GaussianTruncated => self.amplitude * (-4.5 * r2 / r02).exp(),
            VorticityKind::PatchIndicatorSmooth => self.amplitude * self.profile((r2 / r02).sqrt()),
        }
    }

    fn support(&self) -> (Point, f64) {
        (self.center, self.radius)
    }
}

/// Linear combination `sum c_k f_k` of vorticity fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Combination {
    pub terms: Vec<(f64, VorticitySpec)>,
}

impl Density for Combination {
    fn value(&self, x: Point) -> f64 {
        self.terms.iter().map(|(c, f)| c * f.value(x)).sum()
    }

    fn support(&self) -> (Point, f64) {
        let Some((_, first)) = self.terms.first() else {
            return (Point::new(0.0, 0.0), 0.0);
        };
        let (mut c, mut r) = first.support();
        for (_, f) in &self.terms[1..] {
            let (c2, r2) = f.support();
            let d = (c2 - c).norm();
            if d + r2 <= r {
                continue;
            }
            if d + r <= r2 {
                c = c2;
                r = r2;
                continue;
            }
            let nr = 0.5 * (d + r + r2);
            c += (c2 - c) * ((nr - r) / d);
            r = nr;
        }
        (c, r * (1.0 + 1e-12))
    }

    fn vanishes_on_disk(&self, c: Point, r: f64) -> bool {
        self.terms.iter().all(|(_, f)| f.vanishes_on_disk(c, r))
    }
}

/// Integration region for [`lp_norm`].
#[derive(Debug, Clone, Copy)]
pub enum Region<'a> {
    Rect(Rect),
    Disk { center: Point, radius: f64 },
    /// Fluid part of the window.
    OmegaEps { domain: &'a PerforatedDomain, window: Rect },
    /// Union of the inclusions.
    Inclusions(&'a PerforatedDomain),
    /// Union of the cut-off supports minus the inclusions.
    CutoffSupports(&'a PerforatedDomain),
}

/// Tensor rule of the given order on a region.
pub fn region_rule(region: &Region, order: usize) -> Vec<Node> {
    match *region {
        Region::Rect(r) => rect_rule(&r, order),
        Region::Disk { center, radius } => disk_rule(center, radius, 2 * order, order),
        Region::Inclusions(d) => (0..d.len())
            .flat_map(|k| hole_interior_rule(&hole_of(d, k), 2 * order, order))
            .collect(),
        Region::CutoffSupports(d) => (0..d.len())
            .flat_map(|k| holed_cell_rule(&hole_of(d, k), d.params.half_pitch(), CellPart::All, order, order))
            .collect(),
        Region::OmegaEps { domain, window } => omega_rule(domain, &window, order),
    }
}

pub(crate) fn hole_of(d: &PerforatedDomain, k: usize) -> Hole {
    Hole { center: d.centers[k], eps: d.eps(), shape: d.shape }
}

/// Conforming rule on `window` minus the inclusions: lattice-aligned cells,
/// perforated where they carry an inclusion.
fn omega_rule(d: &PerforatedDomain, window: &Rect, order: usize) -> Vec<Node> {
    let pitch = 2.0 * d.params.half_pitch();
    let block = d.lattice_block();
    let (ox, oy) = (block.x0, block.y0);
    let i0 = ((window.x0 - ox) / pitch).floor() as i64;
    let i1 = ((window.x1 - ox) / pitch).ceil() as i64;
    let j0 = ((window.y0 - oy) / pitch).floor() as i64;
    let j1 = ((window.y1 - oy) / pitch).ceil() as i64;
    let mut out = Vec::new();
    for j in j0..j1 {
        for i in i0..i1 {
            let cell = Rect::new(
                ox + pitch * i as f64,
                ox + pitch * (i + 1) as f64,
                oy + pitch * j as f64,
                oy + pitch * (j + 1) as f64,
            );
            let Some(part) = cell.intersect(window) else { continue };
            let k = (i >= 0 && j >= 0 && (i as usize) < d.n1 && (j as usize) < d.n2)
                .then(|| j as usize * d.n1 + i as usize);
            match k {
                None => out.extend(rect_rule(&part, order)),
                Some(k) => {
                    let hole = hole_of(d, k);
                    let bbox = Rect::centered(hole.center, d.eps());
                    if part == cell {
                        out.extend(holed_cell_rule(&hole, d.params.half_pitch(), CellPart::All, order, order));
                    } else if bbox.intersect(&part).is_none() {
                        out.extend(rect_rule(&part, order));
                    } else {
                        out.extend(rect_rule(&part, 2 * order).into_iter().filter(|n| d.contains(n.y)));
                    }
                }
            }
        }
    }
    out
}

fn norm_from_nodes(nodes: &[Node], g: &(dyn Fn(Point) -> f64 + Sync), p: f64) -> f64 {
    if p.is_infinite() {
        return nodes.iter().map(|n| g(n.y).abs()).fold(0.0, f64::max);
    }
    let terms: Vec<f64> = nodes.iter().map(|n| n.w * g(n.y).abs().powf(p)).collect();
    pairwise_sum(&terms).max(0.0).powf(1.0 / p)
}

/// Bounding rectangle of a region (for Monte Carlo sampling).
fn region_bbox(region: &Region) -> Rect {
    match *region {
        Region::Rect(r) => r,
        Region::Disk { center, radius } => Rect::centered(center, radius),
        Region::OmegaEps { window, .. } => window,
        Region::Inclusions(d) | Region::CutoffSupports(d) => d.lattice_block(),
    }
}

fn region_contains(region: &Region, x: Point) -> bool {
    match *region {
        Region::Rect(r) => r.contains(x),
        Region::Disk { center, radius } => (x - center).norm() <= radius,
        Region::OmegaEps { domain, window } => window.contains(x) && domain.contains(x),
        Region::Inclusions(d) => d.obstacle_at(x).is_some(),
        Region::CutoffSupports(d) => d.cell_at(x).is_some() && d.contains(x),
    }
}

fn monte_carlo_norm(region: &Region, g: &(dyn Fn(Point) -> f64 + Sync), p: f64, samples: usize, skip: u64) -> (f64, f64) {
    let bbox = region_bbox(region);
    let area = bbox.area();
    let mut vals = Vec::with_capacity(samples);
    let mut sup: f64 = 0.0;
    for k in 0..samples as u64 {
        let idx = k + 1 + skip;
        let x = Point::new(bbox.x0 + bbox.width() * halton(idx, 2), bbox.y0 + bbox.height() * halton(idx, 3));
        let v = if region_contains(region, x) { g(x).abs() } else { 0.0 };
        sup = sup.max(v);
        vals.push(if p.is_infinite() { 0.0 } else { v.powf(p) });
    }
    if p.is_infinite() {
        return (sup, 0.0);
    }
    let n = samples as f64;
    let mean = pairwise_sum(&vals) / n;
    let sq: Vec<f64> = vals.iter().map(|v| (v - mean).powi(2)).collect();
    let std_err = (pairwise_sum(&sq) / (n - 1.0).max(1.0) / n).sqrt();
    let integral = mean * area;
    let value = integral.max(0.0).powf(1.0 / p);
    let err = if integral > 0.0 { value / p * (std_err * area / integral) } else { 0.0 };
    (value, err)
}

/// `||g||_{L^p(region)}` with an error estimate from two resolutions.
///
/// Fails with [`Error::QuadratureNotConverged`] when the estimate exceeds 10%
/// of the value.
pub fn lp_norm(g: &(dyn Fn(Point) -> f64 + Sync), p: f64, region: &Region, quad: &QuadSpec) -> Result<(f64, f64)> {
    if !(p >= 1.0) {
        return Err(Error::InvalidParams(format!("p = {p} must be at least 1")));
    }
    let (value, err) = match quad.scheme {
        Scheme::TensorGauss => {
            let coarse = norm_from_nodes(&region_rule(region, quad.order), g, p);
            let fine = norm_from_nodes(&region_rule(region, 2 * quad.order), g, p);
            (fine, (fine - coarse).abs())
        }
        Scheme::MonteCarlo => {
            let (a, ea) = monte_carlo_norm(region, g, p, quad.samples, 0);
            let (b, eb) = monte_carlo_norm(region, g, p, 2 * quad.samples, quad.samples as u64);
            (b, ea.max(eb).max((a - b).abs()))
        }
    };
    if err > 0.1 * value && err > 1e-300 {
        return Err(Error::QuadratureNotConverged { value, error: err });
    }
    Ok((value, err))
}

/// `int g` over a region with the tensor rule of the given order.
pub fn integrate(g: &(dyn Fn(Point) -> f64 + Sync), region: &Region, order: usize) -> f64 {
    let terms: Vec<f64> = region_rule(region, order).iter().map(|n| n.w * g(n.y)).collect();
    pairwise_sum(&terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{LatticeParams, ObstacleShape};

    fn bump() -> VorticitySpec {
        VorticitySpec::new(VorticityKind::RadialBump, Point::new(0.0, 0.0), 1.0, 1.0).unwrap()
    }

    #[test]
    fn bump_values() {
        let f = bump();
        assert_eq!(f.value(Point::new(2.0, 0.0)), 0.0);
        assert_eq!(f.value(Point::new(0.0, 0.0)), 1.0);
    }

    #[test]
    fn masses_match_polar_quadrature() {
        for kind in [VorticityKind::RadialBump, VorticityKind::GaussianTruncated, VorticityKind::PatchIndicatorSmooth] {
            let f = VorticitySpec::new(kind, Point::new(0.3, -0.2), 0.7, 1.7).unwrap();
            // radial integral split at the patch edge so each piece is smooth
            let edge = 0.7 * (1.0 - PATCH_EDGE);
            let radial: f64 = gl_interval(40, 0.0, edge)
                .chain(gl_interval(40, edge, 0.7))
                .map(|(r, w)| w * TAU * r * f.value(f.center + Point::new(r, 0.0)))
                .sum();
            assert!((radial - f.total_mass()).abs() < 1e-8 * f.total_mass(), "{kind:?}");
        }
    }

    #[test]
    fn unit_square_norm() {
        let (v, _) = lp_norm(&|_| 1.0, 2.0, &Region::Rect(Rect::new(0.0, 1.0, 0.0, 1.0)), &QuadSpec::default()).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
    }

    #[test]
    fn sup_norm_of_bump() {
        let f = bump();
        let g = |x: Point| f.value(x);
        let (v, _) = lp_norm(&g, f64::INFINITY, &Region::Disk { center: f.center, radius: 1.0 }, &QuadSpec::default()).unwrap();
        assert!((v - 1.0).abs() < 1e-3);
    }

    #[test]
    fn monte_carlo_agrees_with_tensor() {
        let f = bump();
        let g = |x: Point| f.value(x);
        let region = Region::Rect(Rect::new(-1.0, 1.0, -1.0, 1.0));
        let t = lp_norm(&g, 2.0, &region, &QuadSpec::default()).unwrap();
        let mc = lp_norm(&g, 2.0, &region, &QuadSpec { scheme: Scheme::MonteCarlo, samples: 50_000, ..QuadSpec::default() }).unwrap();
        assert!((t.0 - mc.0).abs() <= 3.0 * (t.1 + mc.1) + 1e-3, "{t:?} {mc:?}");
    }

    #[test]
    fn omega_plus_inclusions_is_window() {
        let d = PerforatedDomain::build(LatticeParams::new(0.1, 1.0, 0.0).unwrap(), ObstacleShape::Ellipse { p: 1.0, q: 0.6 })
            .unwrap();
        let g = |x: Point| (x.re * 2.0).cos() + x.im * x.re;
        let window = d.lattice_block();
        let a = integrate(&g, &Region::OmegaEps { domain: &d, window }, 12);
        let b = integrate(&g, &Region::Inclusions(&d), 12);
        let c = integrate(&g, &Region::Rect(window), 12);
        assert!((a + b - c).abs() < 1e-6 * c.abs());
    }

    #[test]
    fn combination_support_covers_terms() {
        let a = VorticitySpec::new(VorticityKind::RadialBump, Point::new(0.0, 0.0), 0.5, 1.0).unwrap();
        let b = VorticitySpec::new(VorticityKind::RadialBump, Point::new(2.0, 0.0), 0.3, 1.0).unwrap();
        let comb = Combination { terms: vec![(1.0, a), (-2.0, b)] };
        let (c, r) = comb.support();
        assert!((c - Point::new(0.9, 0.0)).norm() + 0.5 <= r + 1e-9 + 0.9);
        assert!((Point::new(2.3, 0.0) - c).norm() <= r);
        assert!((Point::new(-0.5, 0.0) - c).norm() <= r);
    }
}
