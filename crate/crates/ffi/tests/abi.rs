use std::ptr;

use euler_sieve::biotsavart::VelocityField;
use euler_sieve::corrector::{Corrector, Profile};
use euler_sieve::exterior_solver::{solve_exterior, MfsParams};
use euler_sieve::field::{VorticityKind, VorticitySpec};
use euler_sieve::geometry::{LatticeParams, ObstacleShape, PerforatedDomain};
use euler_sieve::quadrature::QuadSpec;
use euler_sieve::Point;
use euler_sieve_ffi::*;

fn lattice() -> EsLattice {
    EsLattice { eps: 0.1, alpha: 1.0, mu: 0.0, shape: EsShape::Disk, p: 1.0, q: 1.0 }
}

fn bump() -> EsVorticity {
    EsVorticity { kind: EsVorticityKind::RadialBump, center_x: 0.5, center_y: 0.5, radius: 0.9, amplitude: 1.0 }
}

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    let need = unsafe { es_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert!(need >= 1);
    unsafe { std::ffi::CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn domain_round_trip() {
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { es_domain_new(&lattice(), &mut d) }, ES_OK);
    let (mut n1, mut n2) = (0, 0);
    assert_eq!(unsafe { es_domain_counts(d, &mut n1, &mut n2) }, ES_OK);
    assert_eq!((n1, n2), (3, 1));
    let mut small = [0.0; 2];
    assert_eq!(unsafe { es_domain_centers(d, small.as_mut_ptr(), 1) }, ES_ERR_BUFFER);
    let mut xy = [0.0; 6];
    assert_eq!(unsafe { es_domain_centers(d, xy.as_mut_ptr(), 3) }, ES_OK);
    assert_eq!(xy, [0.1, 0.1, 0.5, 0.1, 0.9, 0.1]);
    unsafe { es_domain_free(d) };
}

#[test]
fn invalid_parameters_report_a_message() {
    let mut d = ptr::null_mut();
    let bad = EsLattice { eps: 2.0, ..lattice() };
    assert_eq!(unsafe { es_domain_new(&bad, &mut d) }, ES_ERR_INVALID);
    assert!(d.is_null());
    assert!(last_error().contains("eps"), "{}", last_error());
    assert_eq!(unsafe { es_domain_new(ptr::null(), &mut d) }, ES_ERR_NULL);
}

#[test]
fn fields_match_the_library() {
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { es_domain_new(&lattice(), &mut d) }, ES_OK);
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { es_corrector_new(d, &bump(), &mut c) }, ES_OK);
    let mut e = ptr::null_mut();
    assert_eq!(unsafe { es_exterior_solve(d, &bump(), &mut e) }, ES_OK);
    unsafe { es_domain_free(d) };

    let xy = [0.5, 0.6, 0.5, 0.1];
    let mut uc = [1.0; 4];
    let mut ue = [1.0; 4];
    assert_eq!(unsafe { es_corrector_velocity(c, xy.as_ptr(), 2, uc.as_mut_ptr()) }, ES_OK);
    assert_eq!(unsafe { es_exterior_velocity(e, xy.as_ptr(), 2, ue.as_mut_ptr()) }, ES_OK);
    // the second point is an inclusion center
    assert_eq!(&uc[2..], &[0.0, 0.0]);
    assert_eq!(&ue[2..], &[0.0, 0.0]);
    let d = PerforatedDomain::build(LatticeParams::new(0.1, 1.0, 0.0).unwrap(), ObstacleShape::Disk).unwrap();
    let f = VorticitySpec::new(VorticityKind::RadialBump, Point::new(0.5, 0.5), 0.9, 1.0).unwrap();
    let x = Point::new(xy[0], xy[1]);
    let cor = Corrector::new(&d, &f, QuadSpec::default(), Profile::Quintic).unwrap();
    assert_eq!(cor.velocity(x).unwrap(), Point::new(uc[0], uc[1]));
    let ext = solve_exterior(&d, &f, QuadSpec::default(), MfsParams::default()).unwrap();
    assert_eq!(ext.velocity(x).unwrap(), Point::new(ue[0], ue[1]));

    let mut norms = EsCorrectorNorms::default();
    assert_eq!(unsafe { es_corrector_norms(c, &mut norms) }, ES_OK);
    assert_eq!(norms.w[0], 0.0);
    assert!(norms.total > 0.0);
    let (mut residual, mut flagged) = (f64::NAN, true);
    assert_eq!(unsafe { es_exterior_residual(e, &mut residual, &mut flagged) }, ES_OK);
    assert!(residual < 1e-8 && !flagged);
    unsafe {
        es_corrector_free(c);
        es_exterior_free(e);
    }
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { std::ffi::CStr::from_ptr(es_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
