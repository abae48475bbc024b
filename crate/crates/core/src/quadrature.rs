//! Quadrature rules over cells, perforated cells and polar neighbourhoods of
//! a target point, plus the tiled source sets used by the kernel sums.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::ops::{Add, Range};
use std::sync::{Mutex, OnceLock};

use gauss_quad::GaussLegendre;

use crate::field::Density;
use crate::geometry::{ObstacleShape, PerforatedDomain, Rect};
use crate::Point;

/// Quadrature node `y` with weight `w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub y: Point,
    pub w: f64,
}

type RuleTable = Mutex<HashMap<usize, &'static [(f64, f64)]>>;

/// Gauss-Legendre nodes and weights on `[-1, 1]`, cached per order.
pub fn gl_rule(n: usize) -> &'static [(f64, f64)] {
    static TABLE: OnceLock<RuleTable> = OnceLock::new();
    let n = n.max(2);
    let mut table = TABLE.get_or_init(|| Mutex::new(HashMap::new())).lock().unwrap();
    table.entry(n).or_insert_with(|| {
        let rule = GaussLegendre::new(n).expect("order >= 2");
        let mut pairs: Vec<(f64, f64)> = rule.as_node_weight_pairs().to_vec();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Box::leak(pairs.into_boxed_slice())
    })
}

/// Gauss-Legendre nodes and weights mapped to `[a, b]`.
pub fn gl_interval(n: usize, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    gl_rule(n).iter().map(move |&(x, w)| (mid + half * x, half * w))
}

/// Cascade (pairwise) accumulator with a deterministic summation tree.
#[derive(Debug, Clone)]
pub struct Cascade<T> {
    block: T,
    count: usize,
    levels: Vec<Option<T>>,
}

const CASCADE_BLOCK: usize = 32;

impl<T: Copy + Default + Add<Output = T>> Default for Cascade<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Copy + Default + Add<Output = T>> Cascade<T> {
    pub fn new() -> Self {
        Self { block: T::default(), count: 0, levels: Vec::new() }
    }

    #[inline]
    pub fn add(&mut self, v: T) {
        self.block = self.block + v;
        self.count += 1;
        if self.count == CASCADE_BLOCK {
            let mut carry = std::mem::take(&mut self.block);
            self.count = 0;
            for level in self.levels.iter_mut() {
                match level.take() {
                    Some(prev) => carry = prev + carry,
                    None => {
                        *level = Some(carry);
                        return;
                    }
                }
            }
            self.levels.push(Some(carry));
        }
    }

    pub fn total(&self) -> T {
        let mut acc = T::default();
        for v in self.levels.iter().rev().flatten() {
            acc = acc + *v;
        }
        acc + self.block
    }
}

/// Pairwise sum of a slice.
pub fn pairwise_sum<T: Copy + Default + Add<Output = T>>(values: &[T]) -> T {
    if values.len() <= CASCADE_BLOCK {
        return values.iter().fold(T::default(), |a, &b| a + b);
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Tensor Gauss-Legendre rule on a rectangle.
pub fn rect_rule(rect: &Rect, n: usize) -> Vec<Node> {
    let mut out = Vec::with_capacity(n * n);
    for (y, wy) in gl_interval(n, rect.y0, rect.y1) {
        for (x, wx) in gl_interval(n, rect.x0, rect.x1) {
            out.push(Node { y: Point::new(x, y), w: wx * wy });
        }
    }
    out
}

/// Polar rule on a disk: Gauss in radius, trapezoid in angle.
pub fn disk_rule(center: Point, radius: f64, n_theta: usize, n_r: usize) -> Vec<Node> {
    let mut out = Vec::with_capacity(n_theta * n_r);
    for (r, wr) in gl_interval(n_r, 0.0, radius) {
        for k in 0..n_theta {
            let theta = TAU * k as f64 / n_theta as f64;
            out.push(Node { y: center + Point::from_polar(r, theta), w: wr * r * TAU / n_theta as f64 });
        }
    }
    out
}

/// Scaled obstacle `z + eps K` seen as a hole in a cell.
#[derive(Debug, Clone, Copy)]
pub struct Hole {
    pub center: Point,
    pub eps: f64,
    pub shape: ObstacleShape,
}

impl Hole {
    fn axes(&self) -> (f64, f64) {
        let (p, q) = self.shape.semi_axes();
        (self.eps * p, self.eps * q)
    }
}

/// Rule on `z + eps K` parameterized by `y = z + s (eps p cos t, eps q sin t)`,
/// `s in [0, 1]`.
pub fn hole_interior_rule(hole: &Hole, n_theta: usize, n_s: usize) -> Vec<Node> {
    let (a, b) = hole.axes();
    let mut out = Vec::with_capacity(n_theta * n_s);
    for (s, ws) in gl_interval(n_s, 0.0, 1.0) {
        for k in 0..n_theta {
            let t = TAU * k as f64 / n_theta as f64;
            out.push(Node {
                y: hole.center + Point::new(s * a * t.cos(), s * b * t.sin()),
                w: ws * s * a * b * TAU / n_theta as f64,
            });
        }
    }
    out
}

/// Which part of a perforated square cell a rule covers, measured by the
/// infinity-norm distance `L` to the cell center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellPart {
    /// Whole cell minus the hole.
    All,
    /// Points with `|y - z|_inf <= L`, minus the hole.
    Inner(f64),
    /// Points with `|y - z|_inf >= L`.
    Outer(f64),
}

/// Conforming rule on the square `|y - z|_inf <= half` minus the hole.
///
/// Four sectors bounded by the corner directions; in each sector a Gauss
/// rule in the parametric angle and in `ln s`.
pub fn holed_cell_rule(hole: &Hole, half: f64, part: CellPart, n_theta: usize, n_s: usize) -> Vec<Node> {
    let (a, b) = hole.axes();
    let tc = (a / b).atan();
    let sectors = [(-tc, tc), (tc, PI - tc), (PI - tc, PI + tc), (PI + tc, TAU - tc)];
    let mut out = Vec::with_capacity(4 * n_theta * n_s);
    for (t0, t1) in sectors {
        for (t, wt) in gl_interval(n_theta, t0, t1) {
            let (c, s) = (t.cos(), t.sin());
            let dir = Point::new(a * c, b * s);
            let norm_inf = (a * c.abs()).max(b * s.abs());
            let s_of = |level: f64| level / norm_inf;
            let (lo, hi) = match part {
                CellPart::All => (1.0, s_of(half)),
                CellPart::Inner(l) => (1.0, s_of(l)),
                CellPart::Outer(l) => (s_of(l), s_of(half)),
            };
            if hi <= lo {
                continue;
            }
            let (l0, l1) = (lo.ln(), hi.ln());
            for (u, wu) in gl_interval(n_s, l0, l1) {
                let r = u.exp();
                out.push(Node { y: hole.center + r * dir, w: wt * wu * a * b * r * r });
            }
        }
    }
    out
}

/// Parameter interval `[r0, r1]` of the ray `x + r d`, `r >= 0`, inside `rect`.
fn ray_rect(x: Point, d: Point, rect: &Rect) -> Option<(f64, f64)> {
    let mut lo: f64 = 0.0;
    let mut hi = f64::INFINITY;
    for (xa, da, a0, a1) in [(x.re, d.re, rect.x0, rect.x1), (x.im, d.im, rect.y0, rect.y1)] {
        if da.abs() < 1e-300 {
            if xa < a0 || xa > a1 {
                return None;
            }
        } else {
            let t0 = (a0 - xa) / da;
            let t1 = (a1 - xa) / da;
            lo = lo.max(t0.min(t1));
            hi = hi.min(t0.max(t1));
        }
    }
    (hi > lo).then_some((lo, hi))
}

/// Chord `[c0, c1]` of the ray `x + r d` through the hole, if any.
fn ray_hole(x: Point, d: Point, hole: &Hole) -> Option<(f64, f64)> {
    let (a, b) = hole.axes();
    let u = x - hole.center;
    let (ax, ay) = (u.re / a, u.im / b);
    let (ex, ey) = (d.re / a, d.im / b);
    let ee = ex * ex + ey * ey;
    let ae = ax * ex + ay * ey;
    let aa = ax * ax + ay * ay;
    let disc = ae * ae - ee * (aa - 1.0);
    if disc <= 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let c1 = (-ae + sq) / ee;
    if c1 <= 0.0 {
        return None;
    }
    let c0 = ((-ae - sq) / ee).max(0.0);
    Some((c0, c1))
}

/// Directions (angles) at which the rays from `x` graze the hole.
fn hole_tangent_angles(x: Point, hole: &Hole) -> [f64; 2] {
    let (a, b) = hole.axes();
    let u = x - hole.center;
    let v = Point::new(u.re / a, u.im / b);
    let n = v.norm();
    let vh = v / n;
    let s = (n * n - 1.0).max(0.0).sqrt();
    let perp = Point::new(-vh.im, vh.re);
    let d1 = -s * vh + perp;
    let d2 = -s * vh - perp;
    let back = |d: Point| Point::new(d.re * a, d.im * b).arg();
    [back(d1), back(d2)]
}

/// Polar rule centered at `x` over `rect` minus an optional hole.
///
/// The angle range is split at the directions of the rectangle corners and
/// of the hole tangents; each arc uses a cosine-clustered Gauss rule in the
/// angle and a Gauss rule in the radius (geometric in `r` when the interval
/// is far from `x`).
pub fn polar_rule(x: Point, rect: &Rect, hole: Option<&Hole>, n_theta: usize, n_r: usize) -> Vec<Node> {
    let mut breaks: Vec<(f64, bool)> = rect.corners().iter().map(|c| ((c - x).arg(), false)).collect();
    if let Some(h) = hole {
        breaks.extend(hole_tangent_angles(x, h).iter().map(|&t| (t, true)));
    }
    let base = breaks[0].0;
    for b in breaks.iter_mut() {
        b.0 = base + (b.0 - base).rem_euclid(TAU);
    }
    breaks.sort_by(|a, b| a.0.total_cmp(&b.0));
    breaks.dedup_by(|a, b| {
        let same = (a.0 - b.0).abs() < 1e-14;
        if same {
            b.1 |= a.1;
        }
        same
    });
    let mut out = Vec::new();
    let m = breaks.len();
    for k in 0..m {
        let (a, ta) = breaks[k];
        let (b, tb) = if k + 1 < m { breaks[k + 1] } else { (breaks[0].0 + TAU, breaks[0].1) };
        if b - a < 1e-15 {
            continue;
        }
        let mid = Point::from_polar(1.0, 0.5 * (a + b));
        if ray_rect(x, mid, rect).is_none() {
            continue;
        }
        let tangents: Vec<f64> = breaks.iter().filter(|t| t.1).map(|t| t.0).collect();
        let mut arcs = Vec::new();
        split_arc(a, b, ta, tb, &tangents, 0, &mut arcs);
        for (lo, hi, left, right) in arcs {
            let step = hi - lo;
            for (u, wu) in gl_interval(n_theta, 0.0, 1.0) {
                let (g, dg) = clustering(u, left, right);
                let theta = lo + step * g;
                let wt = wu * step * dg;
                if wt == 0.0 {
                    continue;
                }
                let d = Point::from_polar(1.0, theta);
                let Some((r0, r1)) = ray_rect(x, d, rect) else { continue };
                let mut spans = [(r0, r1), (0.0, 0.0)];
                if let Some((c0, c1)) = hole.and_then(|h| ray_hole(x, d, h)) {
                    spans = [(r0, c0.min(r1)), (c1.max(r0), r1)];
                }
                // rays from a boundary point into the hole leave a
                // rounding-length first span
                let min_span = 1e-12 * (r1 - r0);
                for (ra, rb) in spans {
                    if rb - ra > min_span {
                        radial_nodes(x, d, ra, rb, wt, n_r, &mut out);
                    }
                }
            }
        }
    }
    out
}

/// Largest angular span integrated by one Gauss rule in [`polar_rule`].
const MAX_ARC: f64 = PI / 4.0;

/// Split `[a, b]` until every piece is at most [`MAX_ARC`] long and at
/// least its own length away from any hole tangent direction that is not
/// one of its ends.
fn split_arc(a: f64, b: f64, ta: bool, tb: bool, tangents: &[f64], depth: usize, out: &mut Vec<(f64, f64, bool, bool)>) {
    let len = b - a;
    let gap = tangents
        .iter()
        .map(|&t| {
            let mut best = f64::INFINITY;
            for shift in [-TAU, 0.0, TAU] {
                let t = t + shift;
                if (t - a).abs() < 1e-14 || (t - b).abs() < 1e-14 {
                    continue;
                }
                best = best.min(if t < a { a - t } else if t > b { t - b } else { 0.0 });
            }
            best
        })
        .fold(f64::INFINITY, f64::min);
    if depth < 48 && (len > MAX_ARC || gap < len) {
        let m = 0.5 * (a + b);
        split_arc(a, m, ta, false, tangents, depth + 1, out);
        split_arc(m, b, false, tb, tangents, depth + 1, out);
    } else {
        out.push((a, b, ta, tb));
    }
}

/// Map `u in [0, 1]` onto `[0, 1]` with quadratic clustering at the ends that
/// carry square-root behaviour (hole tangents). Returns `(g(u), g'(u))`.
fn clustering(u: f64, left: bool, right: bool) -> (f64, f64) {
    let h = 0.5 * PI;
    match (left, right) {
        (false, false) => (u, 1.0),
        (true, true) => (0.5 * (1.0 - (PI * u).cos()), h * (PI * u).sin()),
        (true, false) => (1.0 - (h * u).cos(), h * (h * u).sin()),
        (false, true) => ((h * u).sin(), h * (h * u).cos()),
    }
}

/// Radial Gauss nodes on `[ra, rb]` with the polar weight `r`. Spans starting
/// at the center use `r = rb t^2`, which smooths the `r ln r` behaviour of
/// logarithmic kernels; the others are split into geometric panels.
fn radial_nodes(x: Point, d: Point, ra: f64, rb: f64, wt: f64, n_r: usize, out: &mut Vec<Node>) {
    // a span starting within rounding of the center is integrated from it
    if ra <= 1e-12 * rb {
        for (t, w) in gl_interval(n_r, 0.0, 1.0) {
            let r = rb * t * t;
            let y = x + r * d;
            if y != x {
                out.push(Node { y, w: wt * w * 2.0 * rb * t * r });
            }
        }
    } else {
        // geometric panels keep the center at least one panel length away
        let mut lo = ra;
        while lo < rb {
            let hi = if lo * RADIAL_RATIO * RADIAL_RATIO < rb { lo * RADIAL_RATIO } else { rb };
            for (r, w) in gl_interval(n_r, lo, hi) {
                out.push(Node { y: x + r * d, w: wt * w * r });
            }
            lo = hi;
        }
    }
}

/// Growth factor of the radial panels of spans that start away from the center.
const RADIAL_RATIO: f64 = 3.0;

/// Scheme used for region integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    TensorGauss,
    MonteCarlo,
}

/// Treatment of the kernel singularity at the evaluation point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Singularity {
    None,
    PolarSplit,
}

/// Quadrature resolution parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadSpec {
    pub scheme: Scheme,
    /// Gauss order per direction on source cells.
    pub order: usize,
    /// Gauss order per direction on target (norm) cells.
    pub target_order: usize,
    /// Gauss order per direction of the polar near-field rule.
    pub polar_order: usize,
    /// Monte Carlo sample count.
    pub samples: usize,
    /// A source cell is integrated with the polar rule centered at `x` when
    /// `dist(x, cell) < near_factor * width(cell)`.
    pub near_factor: f64,
    pub singularity: Singularity,
    /// Cells per support diameter when no lattice sets the cell size.
    pub plane_cells: usize,
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self {
            scheme: Scheme::TensorGauss,
            order: 16,
            target_order: 8,
            polar_order: 12,
            samples: 200_000,
            near_factor: 0.5,
            singularity: Singularity::PolarSplit,
            plane_cells: 8,
        }
    }
}

/// Source cell: a rectangle, possibly perforated by inclusion `hole`.
#[derive(Debug, Clone)]
pub struct SourceCell {
    pub rect: Rect,
    pub hole: Option<usize>,
    pub range: Range<usize>,
}

/// Quadrature of `f 1_{Omega^eps}` over its support, tiled by lattice-aligned
/// cells that are fine near the inclusions and graded coarser away from them.
pub struct SourceSet<'a> {
    pub density: &'a dyn Density,
    pub domain: Option<&'a PerforatedDomain>,
    pub spec: QuadSpec,
    /// Nodes with weights already multiplied by `f(y)`.
    pub nodes: Vec<Node>,
    pub cells: Vec<SourceCell>,
}

impl<'a> SourceSet<'a> {
    pub fn build(density: &'a dyn Density, domain: Option<&'a PerforatedDomain>, spec: QuadSpec) -> Self {
        Self::build_with_holes(density, domain, spec, |_| true)
    }

    /// As [`SourceSet::build`], perforating only the inclusions selected by
    /// `keep` (the others are treated as fluid).
    pub fn build_with_holes(
        density: &'a dyn Density,
        domain: Option<&'a PerforatedDomain>,
        spec: QuadSpec,
        keep: impl Fn(usize) -> bool,
    ) -> Self {
        let (c, radius) = density.support();
        let mut set = Self { density, domain, spec, nodes: Vec::new(), cells: Vec::new() };
        if radius <= 0.0 {
            return set;
        }
        let supp = Rect::centered(c, radius);
        let (origin, pitch, fine) = match domain {
            Some(d) => {
                let pitch = 2.0 * d.params.half_pitch();
                let block = d.lattice_block();
                (Point::new(block.x0, block.y0), pitch, Some(block.expand(2.0 * pitch)))
            }
            None => {
                let pitch = 2.0 * radius / spec.plane_cells.max(1) as f64;
                (Point::new(supp.x0, supp.y0), pitch, Some(supp))
            }
        };
        let edge = 2.0 * radius / spec.plane_cells.max(1) as f64 * EDGE_REFINE;
        let mut level = 0u32;
        while pitch * 2f64.powi(level as i32 + 1) <= radius && level < 20 {
            level += 1;
        }
        let size = pitch * 2f64.powi(level as i32);
        let i0 = ((supp.x0 - origin.re) / size).floor() as i64;
        let i1 = ((supp.x1 - origin.re) / size).ceil() as i64;
        let j0 = ((supp.y0 - origin.im) / size).floor() as i64;
        let j1 = ((supp.y1 - origin.im) / size).ceil() as i64;
        let mut leaves = Vec::new();
        for j in j0..j1 {
            for i in i0..i1 {
                let r = Rect::new(
                    origin.re + size * i as f64,
                    origin.re + size * (i + 1) as f64,
                    origin.im + size * j as f64,
                    origin.im + size * (j + 1) as f64,
                );
                refine(r, pitch, edge, fine.as_ref(), c, radius, &mut leaves);
            }
        }
        for rect in leaves {
            let hole = domain.and_then(|d| {
                let k = d.cell_at(rect.center())?;
                ((d.centers[k] - rect.center()).norm() < 1e-9 * pitch && keep(k)).then_some(k)
            });
            let start = set.nodes.len();
            let raw = match (hole, domain) {
                (Some(k), Some(d)) => holed_cell_rule(
                    &Hole { center: d.centers[k], eps: d.eps(), shape: d.shape },
                    d.params.half_pitch(),
                    CellPart::All,
                    spec.order,
                    spec.order,
                ),
                _ => rect_rule(&rect, spec.order),
            };
            for n in raw {
                let fy = density.value(n.y);
                if fy != 0.0 {
                    set.nodes.push(Node { y: n.y, w: n.w * fy });
                }
            }
            let end = set.nodes.len();
            if end > start {
                set.cells.push(SourceCell { rect, hole, range: start..end });
            }
        }
        set
    }

    pub fn hole(&self, k: usize) -> Option<Hole> {
        let d = self.domain?;
        Some(Hole { center: d.centers[k], eps: d.eps(), shape: d.shape })
    }

    /// Whether cell `c` needs the near-field rule at `x`.
    #[inline]
    pub fn is_near(&self, c: &SourceCell, x: Point) -> bool {
        self.spec.singularity == Singularity::PolarSplit
            && c.rect.distance(x) < self.spec.near_factor * c.rect.width().max(c.rect.height())
    }

    /// Polar replacement nodes (weights times `f`) of cell `c` around `x`.
    pub fn near_nodes(&self, c: &SourceCell, x: Point, out: &mut Vec<Node>) {
        let hole = c.hole.and_then(|k| self.hole(k));
        let n = self.spec.polar_order;
        for node in polar_rule(x, &c.rect, hole.as_ref(), n, n) {
            let fy = self.density.value(node.y);
            if fy != 0.0 {
                out.push(Node { y: node.y, w: node.w * fy });
            }
        }
    }

    /// The effective rule at `x`: regular node ranges of far cells and the
    /// polar nodes replacing the near cells.
    pub fn split_at(&self, x: Point) -> (Vec<Range<usize>>, Vec<Node>) {
        let mut ranges: Vec<Range<usize>> = Vec::new();
        let mut near = Vec::new();
        for c in &self.cells {
            if self.is_near(c, x) {
                self.near_nodes(c, x, &mut near);
            } else {
                match ranges.last_mut() {
                    Some(last) if last.end == c.range.start => last.end = c.range.end,
                    _ => ranges.push(c.range.clone()),
                }
            }
        }
        (ranges, near)
    }

    /// Total weight `sum w f`.
    pub fn mass(&self) -> f64 {
        let w: Vec<f64> = self.nodes.iter().map(|n| n.w).collect();
        pairwise_sum(&w)
    }

    /// Apply `g(y, w f(y))` to every node of the rule at `x`.
    pub fn for_each_at(&self, x: Point, mut g: impl FnMut(Point, f64)) {
        let (ranges, near) = self.split_at(x);
        for r in ranges {
            for n in &self.nodes[r] {
                g(n.y, n.w);
            }
        }
        for n in near {
            g(n.y, n.w);
        }
    }
}

/// Cells crossing the boundary of the support are refined down to this
/// fraction of the support diameter over `plane_cells`.
const EDGE_REFINE: f64 = 0.25;

fn refine(r: Rect, pitch: f64, edge: f64, fine: Option<&Rect>, c: Point, radius: f64, out: &mut Vec<Rect>) {
    if r.distance(c) >= radius {
        return;
    }
    let size = r.width();
    let straddles = r.corners().iter().any(|&q| (q - c).norm() > radius);
    let needs_split = (size > pitch * 1.5
        && match fine {
            Some(f) => f.expand(size).intersect(&r).is_some(),
            None => false,
        })
        || (straddles && size > edge * 1.5);
    if !needs_split {
        out.push(r);
        return;
    }
    let m = r.center();
    for q in [
        Rect::new(r.x0, m.re, r.y0, m.im),
        Rect::new(m.re, r.x1, r.y0, m.im),
        Rect::new(r.x0, m.re, m.im, r.y1),
        Rect::new(m.re, r.x1, m.im, r.y1),
    ] {
        refine(q, pitch, edge, fine, c, radius, out);
    }
}

/// Radical inverse of `index` in `base` (Halton coordinate).
pub fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let inv = 1.0 / base as f64;
    while index > 0 {
        f *= inv;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}
