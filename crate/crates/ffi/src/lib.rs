//! C ABI over the core library: opaque handles, `int32_t` status codes and a
//! per-thread message for the last failure.
//!
//! Points and velocities cross the boundary as interleaved `x0, y0, x1, y1,
//! ...` arrays of doubles.

use std::cell::RefCell;
use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use euler_sieve::biotsavart::VelocityField;
use euler_sieve::corrector::{corrector_report, Corrector, Profile};
use euler_sieve::exterior_solver::{solve_exterior, MfsParams, MfsSolution};
use euler_sieve::field::{VorticityKind, VorticitySpec};
use euler_sieve::geometry::{LatticeParams, ObstacleShape, PerforatedDomain};
use euler_sieve::quadrature::QuadSpec;
use euler_sieve::{Error, Point};

pub const ES_OK: i32 = 0;
pub const ES_ERR_NULL: i32 = -1;
pub const ES_ERR_INVALID: i32 = -2;
pub const ES_ERR_INSIDE_OBSTACLE: i32 = -3;
pub const ES_ERR_NUMERIC: i32 = -4;
pub const ES_ERR_IO: i32 = -5;
pub const ES_ERR_PANIC: i32 = -6;
pub const ES_ERR_BUFFER: i32 = -7;

/// Obstacle shape of a lattice.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EsShape {
    Disk = 0,
    /// Ellipse with semi-axes `p >= q`.
    Ellipse = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EsLattice {
    pub eps: f64,
    pub alpha: f64,
    pub mu: f64,
    pub shape: EsShape,
    pub p: f64,
    pub q: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EsVorticityKind {
    RadialBump = 0,
    GaussianTruncated = 1,
    PatchIndicatorSmooth = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EsVorticity {
    pub kind: EsVorticityKind,
    pub center_x: f64,
    pub center_y: f64,
    pub radius: f64,
    pub amplitude: f64,
}

/// `L^2` norms of the corrector error terms.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EsCorrectorNorms {
    pub w: [f64; 4],
    /// Norm of the sum over the fluid.
    pub total: f64,
    /// Norm of the plane field over the inclusions.
    pub inclusions: f64,
}

/// Lattice of obstacles.
pub struct EsDomain {
    inner: PerforatedDomain,
}

/// Domain and vorticity kept alive for a field that borrows them.
struct Owned {
    domain: *mut PerforatedDomain,
    f: *mut VorticitySpec,
}

impl Owned {
    fn new(domain: PerforatedDomain, f: VorticitySpec) -> Self {
        Self { domain: Box::into_raw(Box::new(domain)), f: Box::into_raw(Box::new(f)) }
    }

    /// References valid until `self` drops.
    unsafe fn parts(&self) -> (&'static PerforatedDomain, &'static VorticitySpec) {
        (&*self.domain, &*self.f)
    }
}

impl Drop for Owned {
    fn drop(&mut self) {
        unsafe {
            drop(Box::from_raw(self.domain));
            drop(Box::from_raw(self.f));
        }
    }
}

/// Corrected velocity of one vorticity on one lattice.
pub struct EsCorrector {
    // declared first so it drops before the data it borrows
    inner: Corrector<'static>,
    _owned: Owned,
}

/// Solved exterior problem of one vorticity on one lattice.
pub struct EsExterior {
    inner: MfsSolution<'static>,
    _owned: Owned,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn code_of(e: &Error) -> i32 {
    match e {
        Error::InvalidParams(_) | Error::IndexOutOfRange { .. } | Error::Config(_) | Error::EmptyParticles(_) => {
            ES_ERR_INVALID
        }
        Error::InsideObstacle(_) => ES_ERR_INSIDE_OBSTACLE,
        Error::QuadratureNotConverged { .. } | Error::Solver(_) | Error::Penetration { .. } => ES_ERR_NUMERIC,
        Error::Io(_) => ES_ERR_IO,
    }
}

/// Run `f`, recording any failure and containing panics.
fn guard(f: impl FnOnce() -> Result<(), (i32, String)>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ES_OK,
        Ok(Err((code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            ES_ERR_PANIC
        }
    }
}

fn lib(e: Error) -> (i32, String) {
    (code_of(&e), e.to_string())
}

fn null(what: &str) -> (i32, String) {
    (ES_ERR_NULL, format!("{what} is null"))
}

fn lattice(l: &EsLattice) -> Result<PerforatedDomain, Error> {
    let shape = match l.shape {
        EsShape::Disk => ObstacleShape::Disk,
        EsShape::Ellipse => ObstacleShape::Ellipse { p: l.p, q: l.q },
    };
    PerforatedDomain::build(LatticeParams::new(l.eps, l.alpha, l.mu)?, shape)
}

fn vorticity(v: &EsVorticity) -> Result<VorticitySpec, Error> {
    let kind = match v.kind {
        EsVorticityKind::RadialBump => VorticityKind::RadialBump,
        EsVorticityKind::GaussianTruncated => VorticityKind::GaussianTruncated,
        EsVorticityKind::PatchIndicatorSmooth => VorticityKind::PatchIndicatorSmooth,
    };
    VorticitySpec::new(kind, Point::new(v.center_x, v.center_y), v.radius, v.amplitude)
}

/// Evaluate `u` at `n` interleaved points into `uv`; zero inside obstacles.
unsafe fn eval_into(u: &dyn VelocityField, xy: *const f64, n: usize, uv: *mut f64) -> Result<(), (i32, String)> {
    if n == 0 {
        return Ok(());
    }
    if xy.is_null() || uv.is_null() {
        return Err(null("point or output buffer"));
    }
    let coords = std::slice::from_raw_parts(xy, 2 * n);
    let xs: Vec<Point> = coords.chunks_exact(2).map(|c| Point::new(c[0], c[1])).collect();
    let out = std::slice::from_raw_parts_mut(uv, 2 * n);
    for (k, &x) in xs.iter().enumerate() {
        let v = match u.velocity(x) {
            Err(Error::InsideObstacle(_)) => Point::new(0.0, 0.0),
            r => r.map_err(lib)?,
        };
        out[2 * k] = v.re;
        out[2 * k + 1] = v.im;
    }
    Ok(())
}

/// Library version as a NUL-terminated string.
#[no_mangle]
pub extern "C" fn es_version() -> *const c_char {
    static VERSION: &[u8] = concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes();
    VERSION.as_ptr().cast()
}

/// Copy the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`). Returns the length the full message needs,
/// terminator included.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn es_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len() + 1
    })
}

/// Build a lattice.
///
/// # Safety
/// `params` must point to a valid `EsLattice`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn es_domain_new(params: *const EsLattice, out: *mut *mut EsDomain) -> i32 {
    guard(|| {
        let params = params.as_ref().ok_or_else(|| null("params"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = lattice(params).map_err(lib)?;
        *out = Box::into_raw(Box::new(EsDomain { inner }));
        Ok(())
    })
}

/// # Safety
/// `d` must be null or a handle from [`es_domain_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn es_domain_free(d: *mut EsDomain) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Inclusion counts along the two axes.
///
/// # Safety
/// `d` must be a live handle; `n1` and `n2` must be writable.
#[no_mangle]
pub unsafe extern "C" fn es_domain_counts(d: *const EsDomain, n1: *mut usize, n2: *mut usize) -> i32 {
    guard(|| {
        let d = d.as_ref().ok_or_else(|| null("domain"))?;
        if n1.is_null() || n2.is_null() {
            return Err(null("output"));
        }
        *n1 = d.inner.params.n1();
        *n2 = d.inner.params.n2();
        Ok(())
    })
}

/// Inclusion centers as interleaved `x, y` in row-major order; `capacity`
/// is the number of points `xy` holds.
///
/// # Safety
/// `d` must be a live handle; `xy` must be valid for `2 * capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn es_domain_centers(d: *const EsDomain, xy: *mut f64, capacity: usize) -> i32 {
    guard(|| {
        let d = d.as_ref().ok_or_else(|| null("domain"))?;
        let n = d.inner.len();
        if capacity < n {
            return Err((ES_ERR_BUFFER, format!("{n} centers do not fit in {capacity}")));
        }
        if xy.is_null() {
            return Err(null("xy"));
        }
        let out = std::slice::from_raw_parts_mut(xy, 2 * n);
        for (k, c) in d.inner.centers.iter().enumerate() {
            out[2 * k] = c.re;
            out[2 * k + 1] = c.im;
        }
        Ok(())
    })
}

/// Corrector of `f` on a copy of `d`, with the default quadrature and the
/// quintic cut-off profile.
///
/// # Safety
/// `d` must be a live handle, `f` a valid `EsVorticity`, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn es_corrector_new(d: *const EsDomain, f: *const EsVorticity, out: *mut *mut EsCorrector) -> i32 {
    guard(|| {
        let d = d.as_ref().ok_or_else(|| null("domain"))?;
        let f = f.as_ref().ok_or_else(|| null("vorticity"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let owned = Owned::new(d.inner.clone(), vorticity(f).map_err(lib)?);
        let (domain, spec) = owned.parts();
        let inner = Corrector::new(domain, spec, QuadSpec::default(), Profile::Quintic).map_err(lib)?;
        *out = Box::into_raw(Box::new(EsCorrector { inner, _owned: owned }));
        Ok(())
    })
}

/// # Safety
/// `c` must be null or a handle from [`es_corrector_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn es_corrector_free(c: *mut EsCorrector) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Corrected velocity at `n` interleaved points.
///
/// # Safety
/// `c` must be a live handle; `xy` and `uv` valid for `2 * n` doubles.
#[no_mangle]
pub unsafe extern "C" fn es_corrector_velocity(c: *const EsCorrector, xy: *const f64, n: usize, uv: *mut f64) -> i32 {
    guard(|| {
        let c = c.as_ref().ok_or_else(|| null("corrector"))?;
        eval_into(&c.inner, xy, n, uv)
    })
}

/// `L^2` norms of the error terms.
///
/// # Safety
/// `c` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn es_corrector_norms(c: *const EsCorrector, out: *mut EsCorrectorNorms) -> i32 {
    guard(|| {
        let c = c.as_ref().ok_or_else(|| null("corrector"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let r = corrector_report(&c.inner).map_err(lib)?;
        *out = EsCorrectorNorms { w: r.w, total: r.total, inclusions: r.inclusions };
        Ok(())
    })
}

/// Solve the exterior problem of `f` on a copy of `d` with the default
/// quadrature and solver settings.
///
/// # Safety
/// `d` must be a live handle, `f` a valid `EsVorticity`, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn es_exterior_solve(d: *const EsDomain, f: *const EsVorticity, out: *mut *mut EsExterior) -> i32 {
    guard(|| {
        let d = d.as_ref().ok_or_else(|| null("domain"))?;
        let f = f.as_ref().ok_or_else(|| null("vorticity"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let owned = Owned::new(d.inner.clone(), vorticity(f).map_err(lib)?);
        let (domain, spec) = owned.parts();
        let inner = solve_exterior(domain, spec, QuadSpec::default(), MfsParams::default()).map_err(lib)?;
        *out = Box::into_raw(Box::new(EsExterior { inner, _owned: owned }));
        Ok(())
    })
}

/// # Safety
/// `e` must be null or a handle from [`es_exterior_solve`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn es_exterior_free(e: *mut EsExterior) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// Exterior velocity at `n` interleaved points.
///
/// # Safety
/// `e` must be a live handle; `xy` and `uv` valid for `2 * n` doubles.
#[no_mangle]
pub unsafe extern "C" fn es_exterior_velocity(e: *const EsExterior, xy: *const f64, n: usize, uv: *mut f64) -> i32 {
    guard(|| {
        let e = e.as_ref().ok_or_else(|| null("exterior solution"))?;
        eval_into(&e.inner, xy, n, uv)
    })
}

/// Largest boundary residual of the solve and whether it exceeds the
/// solver tolerance.
///
/// # Safety
/// `e` must be a live handle; `residual` and `flagged` writable.
#[no_mangle]
pub unsafe extern "C" fn es_exterior_residual(e: *const EsExterior, residual: *mut f64, flagged: *mut bool) -> i32 {
    guard(|| {
        let e = e.as_ref().ok_or_else(|| null("exterior solution"))?;
        if residual.is_null() || flagged.is_null() {
            return Err(null("output"));
        }
        *residual = e.inner.residual;
        *flagged = e.inner.flagged;
        Ok(())
    })
}
