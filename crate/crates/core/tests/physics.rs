use mhd_core::cases::{make_case, CaseKind, CaseSpec};
use mhd_core::oracle::{duct_poisson_center, observed_order};

fn small(kind: CaseKind, ha: f64) -> CaseSpec {
    CaseSpec {
        counts: [1, 4, 4],
        order: 5,
        length: 2.0,
        grade: false,
        steady_tol: 1e-7,
        ..CaseSpec::new(kind, ha)
    }
}

fn steady_center(spec: &CaseSpec) -> (f64, f64) {
    let mut c = make_case(spec).unwrap();
    let out = c
        .stepper
        .march_to_steady(&mut c.state, spec.criterion(), |_| {})
        .unwrap();
    assert!(out.converged, "no steady state by t = {}", c.state.time);
    c.stepper.center_probe(&c.state)
}

#[test]
fn zero_field_reduces_to_duct_poisson_flow() {
    let spec = CaseSpec {
        dt: 1e-2,
        t_max: 20.0,
        ..small(CaseKind::Shercliff, 0.0)
    };
    let (u, b) = steady_center(&spec);
    let exact = duct_poisson_center(400);
    assert!((u - exact).abs() < 1e-5 * exact, "u = {u}, series = {exact}");
    assert_eq!(b, 0.0);
}

#[test]
fn steady_state_independent_of_time_step() {
    let base = CaseSpec {
        adaptive_dt: false,
        t_max: 10.0,
        ..small(CaseKind::Shercliff, 4.0)
    };
    let (u1, b1) = steady_center(&CaseSpec {
        dt: 4e-3,
        ..base.clone()
    });
    let (u2, b2) = steady_center(&CaseSpec { dt: 2e-3, ..base });
    assert!((u1 - u2).abs() < 1e-6 * u1.abs(), "{u1} vs {u2}");
    assert!((b1 - b2).abs() < 1e-6 * u1.abs(), "{b1} vs {b2}");
}

#[test]
fn steady_velocity_depends_on_hartmann_number_only() {
    let base = CaseSpec {
        dt: 4e-3,
        t_max: 20.0,
        ..small(CaseKind::Hunt, 4.0)
    };
    let (u1, _) = steady_center(&base);
    let (u2, _) = steady_center(&CaseSpec {
        re: 2.0,
        rm: 0.5,
        ..base
    });
    assert!((u1 - u2).abs() < 1e-6 * u1, "{u1} vs {u2}");
}

#[test]
fn bdf2_center_velocity_is_second_order_in_time() {
    let base = CaseSpec {
        counts: [1, 2, 2],
        order: 4,
        length: 2.0,
        adaptive_dt: false,
        grade: false,
        ..CaseSpec::new(CaseKind::Hunt, 4.0)
    };
    let at = |dt: f64| {
        let mut c = make_case(&CaseSpec { dt, ..base.clone() }).unwrap();
        c.stepper.march_to_time(&mut c.state, 0.2, |_| {}).unwrap();
        assert!((c.state.time - 0.2).abs() < 1e-9);
        c.stepper.center_probe(&c.state).0
    };
    let (a, b, c) = (at(8e-3), at(4e-3), at(2e-3));
    let p = observed_order(a, b, c);
    assert!(p >= 1.8, "observed order {p}");
}
