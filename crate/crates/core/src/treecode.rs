//! Barnes-Hut summation of blob-regularized Biot-Savart velocities over many
//! weighted points.

use std::f64::consts::TAU;

use crate::Point;

/// Tree parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    /// A cell of width `s` at distance `d` is expanded when `s / d < theta`.
    pub theta: f64,
    /// Multipole terms kept.
    pub order: usize,
    pub leaf_size: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { theta: 0.5, order: 16, leaf_size: 16 }
    }
}

/// Cells farther than this many blob radii ignore the mollifier.
const BLOB_CUT: f64 = 6.0;

/// Gaussian blob velocity of a unit vortex at offset `d = x - y`.
#[inline]
pub fn blob_kernel(d: Point, delta: f64) -> Point {
    let r2 = d.norm_sqr();
    if r2 == 0.0 {
        return Point::new(0.0, 0.0);
    }
    let q = -(-r2 / (delta * delta)).exp_m1();
    Point::new(-d.im, d.re) * (q / (TAU * r2))
}

/// Exponential integral `E1(x) = int_x^inf e^-t / t dt` for `x > 0`.
pub fn exp_integral_e1(x: f64) -> f64 {
    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
    if x > 700.0 {
        return 0.0;
    }
    if x <= 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..60 {
            term *= -x / k as f64;
            let add = -term / k as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        return -EULER_GAMMA - x.ln() + sum;
    }
    // modified Lentz evaluation of the continued fraction
    let tiny = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..200 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h * (-x).exp()
}

/// `E1(x)`, or 0 where it is below `1e-19`.
#[inline]
pub fn e1_tail(x: f64) -> f64 {
    if x < 40.0 {
        exp_integral_e1(x)
    } else {
        0.0
    }
}

/// Stream function of a Gaussian blob of unit strength at offset `d`,
/// `(ln |d|^2 + E1(|d|^2 / delta^2)) / (4 pi)`, whose perpendicular
/// gradient is [`blob_kernel`].
pub fn blob_stream(d: Point, delta: f64) -> f64 {
    let r2 = d.norm_sqr();
    let s = r2 / (delta * delta);
    if s < 1e-12 {
        return ((delta * delta).ln() - 0.577_215_664_901_532_9 + s) / (2.0 * TAU);
    }
    (r2.ln() + exp_integral_e1(s)) / (2.0 * TAU)
}

struct Cell {
    center: Point,
    half: f64,
    range: std::ops::Range<usize>,
    children: Vec<usize>,
    moments: Vec<Point>,
}

/// Quadtree over weighted points with multipole moments `sum w (y - c)^p`.
pub struct Tree {
    params: TreeParams,
    points: Vec<Point>,
    weights: Vec<f64>,
    cells: Vec<Cell>,
}

impl Tree {
    pub fn new(points: &[Point], weights: &[f64], params: TreeParams) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut tree = Self { params, points: Vec::new(), weights: Vec::new(), cells: Vec::new() };
        if points.is_empty() {
            return tree;
        }
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in points {
            x0 = x0.min(p.re);
            x1 = x1.max(p.re);
            y0 = y0.min(p.im);
            y1 = y1.max(p.im);
        }
        let center = Point::new(0.5 * (x0 + x1), 0.5 * (y0 + y1));
        let half = 0.5 * (x1 - x0).max(y1 - y0) * (1.0 + 1e-12) + f64::MIN_POSITIVE;
        tree.split(points, &mut order, 0, center, half, 0);
        tree.points = order.iter().map(|&k| points[k]).collect();
        tree.weights = order.iter().map(|&k| weights[k]).collect();
        for c in (0..tree.cells.len()).rev() {
            let cell = &tree.cells[c];
            let mut m = vec![Point::new(0.0, 0.0); params.order];
            for k in cell.range.clone() {
                let d = tree.points[k] - cell.center;
                let mut pw = Point::new(tree.weights[k], 0.0);
                for mp in m.iter_mut() {
                    *mp += pw;
                    pw *= d;
                }
            }
            tree.cells[c].moments = m;
        }
        tree
    }

    fn split(&mut self, points: &[Point], order: &mut [usize], offset: usize, center: Point, half: f64, depth: u32) -> usize {
        let id = self.cells.len();
        self.cells.push(Cell { center, half, range: offset..offset + order.len(), children: Vec::new(), moments: Vec::new() });
        if order.len() <= self.params.leaf_size || depth >= 40 {
            return id;
        }
        let quadrant = |p: Point| (p.re >= center.re) as usize + 2 * (p.im >= center.im) as usize;
        order.sort_by_key(|&k| quadrant(points[k]));
        let mut start = 0;
        let mut children = Vec::new();
        for q in 0..4 {
            let len = order[start..].iter().take_while(|&&k| quadrant(points[k]) == q).count();
            if len > 0 {
                let h = 0.5 * half;
                let c = center + Point::new(if q & 1 == 1 { h } else { -h }, if q & 2 == 2 { h } else { -h });
                children.push(self.split(points, &mut order[start..start + len], offset + start, c, h, depth + 1));
            }
            start += len;
        }
        self.cells[id].children = children;
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `sum_k w_k K_delta(x - y_k)`.
    pub fn velocity(&self, x: Point, delta: f64) -> Point {
        if self.cells.is_empty() {
            return Point::new(0.0, 0.0);
        }
        let mut acc = Point::new(0.0, 0.0);
        let mut far = Point::new(0.0, 0.0);
        let mut stack = vec![0usize];
        while let Some(c) = stack.pop() {
            let cell = &self.cells[c];
            let d = x - cell.center;
            let dist = d.norm();
            let gap = (d.re.abs() - cell.half).max(d.im.abs() - cell.half).max(0.0);
            if 2.0 * cell.half < self.params.theta * dist && gap > BLOB_CUT * delta {
                let inv = 1.0 / d;
                let mut pw = inv;
                for m in &cell.moments {
                    far += m * pw;
                    pw *= inv;
                }
            } else if cell.children.is_empty() {
                for k in cell.range.clone() {
                    acc += self.weights[k] * blob_kernel(x - self.points[k], delta);
                }
            } else {
                stack.extend(cell.children.iter().rev());
            }
        }
        acc + Point::new(0.0, 1.0) * far.conj() / TAU
    }
}

/// Direct `O(N)` blob sum.
pub fn direct_velocity(points: &[Point], weights: &[f64], x: Point, delta: f64) -> Point {
    points.iter().zip(weights).map(|(&y, &w)| w * blob_kernel(x - y, delta)).sum()
}
