//! Oracles shared by the integration tests.
#![allow(dead_code)]

use formsim::vessel::{ControlInput, VesselParams, VesselState};
use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Body accelerations from `M_RB ν̇ + C_RB(ν)ν + M_A ν̇_r + C_A(ν_r)ν_r + D(ν_r)ν_r = B f`.
pub fn matrix_form(
    p: &VesselParams,
    s: &VesselState,
    vc: (f64, f64),
    f: (f64, f64),
) -> Vector3<f64> {
    let (c, sn) = (s.psi.cos(), s.psi.sin());
    let u_c = c * vc.0 + sn * vc.1;
    let v_c = -sn * vc.0 + c * vc.1;
    let nu = Vector3::new(s.u, s.v, s.r);
    let nu_c = Vector3::new(u_c, v_c, 0.0);
    let nu_r = nu - nu_c;
    // Constant inertial current seen from a rotating frame.
    let nu_c_dot = Vector3::new(s.r * v_c, -s.r * u_c, 0.0);

    let m_rb = Matrix3::new(
        p.m11_rb, 0.0, 0.0, 0.0, p.m22_rb, p.m23_rb, 0.0, p.m23_rb, p.m33_rb,
    );
    let m_a = Matrix3::new(
        p.m11_a, 0.0, 0.0, 0.0, p.m22_a, p.m23_a, 0.0, p.m23_a, p.m33_a,
    );
    let coriolis = |m11: f64, m22: f64, m23: f64, w: &Vector3<f64>| {
        let a = m22 * w.y + m23 * w.z;
        let b = m11 * w.x;
        Matrix3::new(0.0, 0.0, -a, 0.0, 0.0, b, a, -b, 0.0)
    };
    let c_rb = coriolis(p.m11_rb, p.m22_rb, p.m23_rb, &nu);
    let c_a = coriolis(p.m11_a, p.m22_a, p.m23_a, &nu_r);
    let d = Matrix3::new(
        p.d11 + p.d11_q * nu_r.x,
        0.0,
        0.0,
        0.0,
        p.d22,
        p.d23,
        0.0,
        p.d32,
        p.d33,
    );
    let bf = Vector3::new(p.b11 * f.0, p.b22 * f.1, p.b23 * f.1);
    let rhs = bf - c_rb * nu - c_a * nu_r - d * nu_r + m_a * nu_c_dot;
    (m_rb + m_a).lu().solve(&rhs).unwrap()
}

/// Normalized inputs that the component form takes for physical `f`.
pub fn normalized(p: &VesselParams, f: (f64, f64)) -> ControlInput {
    let g = p.m22() * p.m33() - p.m23() * p.m23();
    ControlInput::new(
        p.b11 * f.0 / p.m11(),
        (p.m22() * p.b23 - p.m23() * p.b22) / g * f.1,
    )
}

pub fn random_state(rng: &mut ChaCha8Rng) -> VesselState {
    VesselState {
        x: rng.random_range(-100.0..100.0),
        y: rng.random_range(-100.0..100.0),
        psi: rng.random_range(-10.0..10.0),
        u: rng.random_range(-1.0..6.0),
        v: rng.random_range(-3.0..3.0),
        r: rng.random_range(-1.0..1.0),
    }
}

/// Random vessel with equal rigid-body surge/sway mass and rudder acting only
/// in yaw.
pub fn random_vessel(rng: &mut ChaCha8Rng) -> VesselParams {
    let m = rng.random_range(1e3..1e4);
    let mut p = VesselParams {
        m11_rb: m,
        m22_rb: m,
        m23_rb: rng.random_range(-0.3..0.3) * m,
        m33_rb: rng.random_range(3.0..10.0) * m,
        m11_a: rng.random_range(0.05..0.2) * m,
        m22_a: rng.random_range(0.3..1.0) * m,
        m23_a: rng.random_range(-0.2..0.2) * m,
        m33_a: rng.random_range(0.5..3.0) * m,
        d11: rng.random_range(10.0..500.0),
        d11_q: rng.random_range(0.0..200.0),
        d22: rng.random_range(500.0..5000.0),
        d23: rng.random_range(-2000.0..2000.0),
        d32: rng.random_range(-2000.0..2000.0),
        d33: rng.random_range(1e3..3e4),
        b11: 1.0,
        b22: 0.0,
        b23: rng.random_range(1e3..3e4),
    };
    p.b22 = p.m23() * p.b23 / p.m33();
    p
}
