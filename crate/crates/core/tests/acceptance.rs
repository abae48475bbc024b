//! Acceptance suite: every criterion at its stated tolerance, one
//! pass/fail line each. Criterion 10 reruns 1-9 on a two-thread pool and
//! compares every CSV byte for byte.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use euler_sieve::analysis::{
    convergence_study, rate_study, static_convergence, ConvergenceStudy, RateStudy, Verdict,
};
use euler_sieve::biotsavart::{ExteriorObstacleVelocity, VelocityField};
use euler_sieve::conformal::ObstacleMap;
use euler_sieve::corrector::{corrector_report, Corrector, CutoffFamily, Profile};
use euler_sieve::exterior_solver::{boundary_profile, leray_check, solve_exterior, MfsParams};
use euler_sieve::field::{VorticityKind, VorticitySpec};
use euler_sieve::geometry::{LatticeParams, ObstacleShape, PerforatedDomain, Rect};
use euler_sieve::output::{self, num, Table};
use euler_sieve::quadrature::QuadSpec;
use euler_sieve::transport::{
    evolve, Backend, BackendKind, EvolveOptions, TransportParams, VortexState,
};
use euler_sieve::Point;

const SEED: u64 = 20240611;
const ELLIPSE: ObstacleShape = ObstacleShape::Ellipse { p: 1.0, q: 0.5 };

struct Outcome {
    pass: bool,
    detail: String,
    csvs: Vec<(String, Vec<u8>)>,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail, csvs: Vec::new() }
    }

    fn with(mut self, name: &str, t: &Table) -> Self {
        self.csvs.push((name.to_string(), t.to_bytes().unwrap()));
        self
    }
}

/// Running maximum that keeps NaN.
fn worse(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

fn lattice(eps: f64, alpha: f64, mu: f64, shape: ObstacleShape) -> PerforatedDomain {
    PerforatedDomain::build(LatticeParams::new(eps, alpha, mu).unwrap(), shape).unwrap()
}

fn bump(c: Point, r: f64) -> VorticitySpec {
    VorticitySpec::new(VorticityKind::RadialBump, c, r, 1.0).unwrap()
}

fn default_f() -> VorticitySpec {
    bump(Point::new(0.5, 0.5), 0.9)
}

/// Uniform random fluid points of the lattice block.
fn fluid_points(d: &PerforatedDomain, n: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let b = d.lattice_block();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x = Point::new(rng.gen_range(b.x0..b.x1), rng.gen_range(b.y0..b.y1));
        if d.obstacle_at(x).is_none() {
            out.push(x);
        }
    }
    out
}

/// Inclusion count along the unit segment by walking the centers: the
/// `i`-th inclusion and its gap fit when `eps + pitch (i - 1) + eps <= 1`.
fn brute_n1(eps: f64, alpha: f64) -> usize {
    let pitch = 2.0 * (eps + eps.powf(alpha));
    let mut n = 0;
    while 2.0 * eps + pitch * n as f64 <= 1.0 + 1e-12 {
        n += 1;
    }
    n
}

fn brute_n2(n1: usize, mu: f64) -> usize {
    let cap = (n1 as f64).powf(mu);
    let mut m = 1;
    while ((m + 1) as f64) <= cap + 1e-9 {
        m += 1;
    }
    m
}

fn geometry_identities() -> Outcome {
    let mut pass = true;
    let mut worst: f64 = 0.0;
    let mut t = Table::new("eps,alpha,k,measured,closed_form");
    for (eps, alpha) in [(0.1, 1.0), (0.05, 2.0)] {
        let d = lattice(eps, alpha, 0.0, ObstacleShape::Disk);
        let fam = CutoffFamily::new(&d, Profile::Quintic);
        let exact = 4.0 * eps.powf(alpha + 1.0) + 3.0 * eps.powf(2.0 * alpha);
        for k in 0..d.len() {
            let m = fam.gradient_support_measure(k);
            worst = worse(worst, (m - exact).abs());
            t.push(vec![num(eps), num(alpha), k.to_string(), num(m), num(exact)]);
        }
    }
    pass &= worst <= 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut counts = Table::new("eps,alpha,mu,n1,n2,n1_brute,n2_brute");
    let mut mismatches = 0;
    for _ in 0..20 {
        let eps = rng.gen_range(0.01..0.3);
        let alpha = rng.gen_range(1.0..3.0);
        let mu = rng.gen_range(0.0..1.0);
        let p = LatticeParams::new(eps, alpha, mu).unwrap();
        let (b1, b2) = (brute_n1(eps, alpha), brute_n2(brute_n1(eps, alpha), mu));
        if (p.n1(), p.n2()) != (b1, b2) {
            mismatches += 1;
        }
        counts.push(vec![num(eps), num(alpha), num(mu), p.n1().to_string(), p.n2().to_string(), b1.to_string(), b2.to_string()]);
    }
    pass &= mismatches == 0;
    let mut centers = Vec::new();
    lattice(0.1, 1.0, 0.0, ObstacleShape::Disk).write_centers_csv(&mut centers).unwrap();
    let mut o = Outcome::new(pass, format!("measure gap {worst:.1e} (tol 1e-12), count mismatches {mismatches}/20"))
        .with("cutoff_measure.csv", &t)
        .with("counts.csv", &counts);
    o.csvs.push(("centers.csv".into(), centers));
    o
}

fn tangency() -> Outcome {
    let f = default_f();
    let quad = QuadSpec::default();
    let mut t = Table::new("field,shape,k,max_normal,circulation");
    let mut worst_n: f64 = 0.0;
    let mut worst_c: f64 = 0.0;
    for shape in [ObstacleShape::Disk, ELLIPSE] {
        let d = lattice(0.1, 1.0, 0.0, shape);
        let map = ObstacleMap::new(shape).unwrap();
        let k_obstacle = d.index(2, 1).unwrap();
        let ext = ExteriorObstacleVelocity::new(&d, map, 2, 1, &f, quad).unwrap();
        let cor = Corrector::new(&d, &f, quad, Profile::Quintic).unwrap();
        let mfs = solve_exterior(&d, &f, quad, MfsParams::default()).unwrap();
        let fields: [(&str, &dyn VelocityField, Option<usize>); 3] =
            [("exterior_obstacle", &ext, Some(k_obstacle)), ("corrector", &cor, None), ("mfs", &mfs, None)];
        for (name, u, only) in fields {
            let prof = boundary_profile(u, &d, &map, 360).unwrap();
            for (k, (n, c)) in prof.into_iter().enumerate() {
                if only.is_some_and(|o| o != k) {
                    continue;
                }
                worst_n = worse(worst_n, n);
                worst_c = worse(worst_c, c.abs());
                t.push(vec![name.into(), shape.to_string(), k.to_string(), num(n), num(c)]);
            }
        }
    }
    Outcome::new(
        worst_n <= 1e-6 && worst_c <= 1e-6,
        format!("max |u.n| {worst_n:.1e}, max |circulation| {worst_c:.1e} (tol 1e-6)"),
    )
    .with("tangency.csv", &t)
}

fn disk_annihilation() -> Outcome {
    let d = lattice(0.1, 1.0, 0.0, ObstacleShape::Disk);
    let f = default_f();
    let c = Corrector::new(&d, &f, QuadSpec::default(), Profile::Quintic).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
    let pts = fluid_points(&d, 1000, &mut rng);
    let mut t = Table::new("x,y,w1,w3,plane");
    let (mut w1, mut w3, mut scale) = (0.0f64, 0.0f64, 0.0f64);
    for &x in &pts {
        let terms = c.terms(x);
        let (a, b) = (terms.w[0].norm(), terms.w[2].norm());
        w1 = worse(w1, a);
        w3 = worse(w3, b);
        scale = scale.max(terms.plane.norm());
        t.push(vec![num(x.re), num(x.im), num(a), num(b), num(terms.plane.norm())]);
    }
    let tol = 16.0 * f64::EPSILON * scale;
    Outcome::new(w1 <= tol && w3 <= tol, format!("max |w1| {w1:.1e}, max |w3| {w3:.1e} (tol {tol:.1e})"))
        .with("disk_annihilation.csv", &t)
}

fn closure() -> Outcome {
    let d = lattice(0.1, 1.0, 0.0, ELLIPSE);
    let f = default_f();
    let c = Corrector::new(&d, &f, QuadSpec::default(), Profile::Quintic).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 4);
    let pts = fluid_points(&d, 100, &mut rng);
    let mut gaps = Vec::new();
    let mut scale: f64 = 0.0;
    for &x in &pts {
        let terms = c.terms(x);
        let v = c.corrector_velocity(x);
        scale = scale.max(terms.plane.norm());
        gaps.push((x, (terms.total() - (terms.plane - v)).norm()));
    }
    let mut t = Table::new("x,y,gap");
    let mut worst: f64 = 0.0;
    for (x, g) in gaps {
        worst = worse(worst, g / scale);
        t.push(vec![num(x.re), num(x.im), num(g)]);
    }
    let rep = corrector_report(&c).unwrap();
    Outcome::new(worst <= 1e-8, format!("max relative gap {worst:.1e} (tol 1e-8)"))
        .with("closure.csv", &t)
        .with("corrector_norms.csv", &output::corrector_table(&[rep]))
}

fn rate_reproduction() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut o = Outcome::new(true, String::new());
    for (mu, alpha) in [(0.0, 1.0), (1.0, 0.5)] {
        let rep = rate_study(RateStudy {
            alpha,
            mu,
            shape: ObstacleShape::Disk,
            eps_list: vec![0.1, 0.05, 0.025, 0.0125],
            f: default_f(),
            quad: QuadSpec::default(),
            profile: Profile::Quintic,
            slack: 0.15,
        })
        .unwrap();
        pass &= rep.slope_holds() && !rep.any_flagged;
        parts.push(format!(
            "(mu {mu}, alpha {alpha}) slope {:.3} >= {:.3}? {} [fit stability {}, verdict {}]",
            rep.fitted_slope,
            rep.predicted_slope - rep.study.slack,
            rep.slope_holds(),
            if rep.stable { "ok" } else { "weak" },
            rep.verdict.name()
        ));
        o = o.with(&format!("rates_mu{mu}_alpha{alpha}.csv"), &output::rates_table(&rep));
    }
    o.pass = pass;
    o.detail = parts.join("; ");
    o
}

fn leray() -> Outcome {
    let f = default_f();
    let quad = QuadSpec::default();
    let mut t = Table::new("eps,alpha,mu,n,r_norm,w_norm");
    let mut pass = true;
    let mut parts = Vec::new();
    for (eps, mu) in [(0.1, 0.0), (0.05, 0.7)] {
        let d = lattice(eps, 1.0, mu, ObstacleShape::Disk);
        let sol = solve_exterior(&d, &f, quad, MfsParams::default()).unwrap();
        let c = Corrector::new(&d, &f, quad, Profile::Quintic).unwrap();
        let rep = leray_check(&c, &sol, 0.02).unwrap();
        pass &= rep.r_norm <= 1.02 * rep.w_norm && !sol.flagged;
        parts.push(format!("{}x{}: {:.4} <= 1.02 * {:.4}", d.params.n1(), d.params.n2(), rep.r_norm, rep.w_norm));
        t.push(vec![num(eps), num(1.0), num(mu), d.len().to_string(), num(rep.r_norm), num(rep.w_norm)]);
    }
    Outcome::new(pass, parts.join(", ")).with("leray.csv", &t)
}

fn static_convergence_check() -> Outcome {
    let f = default_f();
    let rows = static_convergence(
        &[0.1, 0.05, 0.025, 0.0125],
        1.0,
        0.0,
        ObstacleShape::Disk,
        &f,
        QuadSpec::default(),
        MfsParams::default(),
    )
    .unwrap();
    let pass = rows.windows(2).all(|w| w[1].1 < w[0].1);
    let mut t = Table::new("eps,l2_error");
    for (e, v) in &rows {
        t.push(vec![num(*e), num(*v)]);
    }
    let errs: Vec<String> = rows.iter().map(|(_, v)| format!("{v:.4}")).collect();
    Outcome::new(pass, format!("errors {} (strictly decreasing required)", errs.join(" > "))).with("static.csv", &t)
}

fn transport_conservation() -> Outcome {
    let d = lattice(0.1, 1.0, 0.0, ObstacleShape::Disk);
    let params = TransportParams::default();
    let backend = Backend::new(BackendKind::Corrector, Some(&d), params).unwrap();
    let f = bump(Point::new(0.5, 0.55), 0.25);
    let state = VortexState::initialize(&f, &backend).unwrap();
    let run = evolve(state, &backend, EvolveOptions { t_end: 1.0, dt: None, diag_stride: 1, traj_stride: 0 }).unwrap();
    let d0 = &run.diagnostics[0];
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    let (mut l1, mut linf, mut mass, mut circ) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for g in &run.diagnostics {
        l1 = worse(l1, rel(g.l1, d0.l1));
        linf = worse(linf, rel(g.linf, d0.linf));
        mass = worse(mass, rel(g.mass, d0.mass));
        circ = worse(circ, g.max_circulation());
    }
    let reached = run.failure.is_none() && (run.state.t - 1.0).abs() < 1e-12;
    let conserved = reached && l1 <= 0.01 && linf <= 0.01 && mass <= 0.01 && circ <= 1e-5;

    let plane = Backend::plane(params).unwrap();
    let patch = bump(Point::new(0.0, 0.0), 0.25);
    let state = VortexState::initialize(&patch, &plane).unwrap();
    let r0: Vec<f64> = state.particles.iter().map(|p| p.pos.norm()).collect();
    let rot = evolve(state, &plane, EvolveOptions { t_end: 1.0, dt: None, diag_stride: 0, traj_stride: 0 }).unwrap();
    let radial = rot.state.particles.iter().zip(&r0).map(|(p, r)| (p.pos.norm() - r).abs()).fold(0.0, f64::max);
    let pass = conserved && rot.failure.is_none() && radial <= 1e-4;
    Outcome::new(
        pass,
        format!(
            "{} particles, {} steps: drift L1 {l1:.1e} Linf {linf:.1e} mass {mass:.1e} (tol 1e-2), \
             circulation {circ:.1e} (tol 1e-5), radial drift {radial:.1e} (tol 1e-4)",
            run.state.len(),
            run.steps
        ),
    )
    .with("diagnostics.csv", &output::diagnostics_table(&run.diagnostics))
}

fn dynamic_convergence() -> Outcome {
    let r0 = 0.3;
    let study = ConvergenceStudy {
        eps_list: vec![0.1, 0.05, 0.025],
        alpha: 1.0,
        mu: 0.0,
        shape: ObstacleShape::Disk,
        omega0: bump(Point::new(0.5, 0.2), r0),
        t_end: 0.5,
        window: Rect::new(0.0, 1.0, 0.0, 0.8),
        window_cells: (200, 160),
        transport: TransportParams { h: r0 / 12.0, ..TransportParams::default() },
        dt: None,
    };
    let tab = convergence_study(&study).unwrap();
    let errs: Vec<String> = tab.rows.iter().map(|r| format!("{:.4e}", r.errors[2])).collect();
    Outcome::new(
        tab.verdict() == Verdict::Pass,
        format!("errors at T {} (strictly decreasing required)", errs.join(" > ")),
    )
    .with("convergence.csv", &output::convergence_table(&tab))
}

type Criterion = (&'static str, fn() -> Outcome);

const CRITERIA: [Criterion; 9] = [
    ("geometry and cut-off identities", geometry_identities),
    ("tangency and circulation", tangency),
    ("disk annihilation", disk_annihilation),
    ("decomposition closure", closure),
    ("rate reproduction", rate_reproduction),
    ("Leray inequality", leray),
    ("static convergence", static_convergence_check),
    ("transport conservation", transport_conservation),
    ("dynamic convergence", dynamic_convergence),
];

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected = |name: &str| filter.is_empty() || filter.iter().any(|f| name.contains(f.as_str()));
    let mut failed = 0;
    let mut first = Vec::new();
    for (k, (name, run)) in CRITERIA.iter().enumerate() {
        if !selected(name) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        println!(
            "criterion {:>2} {:<32} {}  {}  [{:.1}s]",
            k + 1,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!o.pass);
        first.push((k, o.csvs));
    }
    if selected("determinism") {
        let start = Instant::now();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(2).build().unwrap();
        let mut differing = Vec::new();
        let mut files = 0;
        for (k, csvs) in &first {
            let again = pool.install(|| (CRITERIA[*k].1)());
            files += csvs.len();
            if again.csvs != *csvs {
                differing.push(format!("{}", k + 1));
            }
        }
        let pass = differing.is_empty();
        println!(
            "criterion 10 {:<32} {}  {files} CSVs from {} reruns, differing criteria: [{}]  [{:.1}s]",
            "determinism",
            if pass { "PASS" } else { "FAIL" },
            first.len(),
            differing.join(", "),
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
