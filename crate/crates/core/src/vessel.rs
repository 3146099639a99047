//! 3-DOF maneuvering model of a port-starboard symmetric surface vessel.
//!
//! The model is evaluated in component form:
//!
//! ```text
//! x_dot   = cos(psi) u - sin(psi) v
//! y_dot   = sin(psi) u + cos(psi) v
//! psi_dot = r
//! u_dot   = -(d11 + d11_q u)/m11 u + (m22 v + m23 r)/m11 r + phi_u^T theta + tau_u
//! v_dot   = X(u, u_c) r + Y(u, u_c) (v - v_c)
//! r_dot   = F_r(u, v, r) + phi_r^T theta + tau_r
//! ```
//!
//! with `theta = [Vx, Vy, Vx^2, Vy^2, Vx Vy]` collecting the unknown current.
//! The coefficient functions are the exact reduction of
//! `M_RB nu_dot + C_RB(nu) nu + M_A nu_r_dot + C_A(nu_r) nu_r + D(nu_r) nu_r = B f`
//! for a constant irrotational current.

use nalgebra::{Matrix3, Vector2, Vector5};
use serde::{Deserialize, Serialize};

use crate::angle::wrap_to_pi;
use crate::error::{Error, Result};

/// Vessel coefficients. Masses in kg, kg·m, kg·m²; damping in matching
/// per-velocity units. `b*` entries map `[thrust, rudder]` to generalized forces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VesselParams {
    pub m11_rb: f64,
    pub m22_rb: f64,
    pub m23_rb: f64,
    pub m33_rb: f64,
    pub m11_a: f64,
    pub m22_a: f64,
    pub m23_a: f64,
    pub m33_a: f64,
    pub d11: f64,
    pub d11_q: f64,
    pub d22: f64,
    pub d23: f64,
    pub d32: f64,
    pub d33: f64,
    pub b11: f64,
    pub b22: f64,
    pub b23: f64,
}

const DEFAULT_VESSEL_JSON: &str = include_str!("../data/default_vessel.json");

impl VesselParams {
    /// The shipped ~10 m default vessel (`data/default_vessel.json`).
    pub fn default_vessel() -> Self {
        Self::from_json(DEFAULT_VESSEL_JSON).expect("shipped vessel file is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn m11(&self) -> f64 {
        self.m11_rb + self.m11_a
    }
    pub fn m22(&self) -> f64 {
        self.m22_rb + self.m22_a
    }
    pub fn m23(&self) -> f64 {
        self.m23_rb + self.m23_a
    }
    pub fn m33(&self) -> f64 {
        self.m33_rb + self.m33_a
    }

    /// Determinant of the sway-yaw mass block, `m22 m33 - m23²`.
    pub fn gamma(&self) -> f64 {
        self.m22() * self.m33() - self.m23() * self.m23()
    }

    /// Sway acceleration produced by a unit rudder input. Zero when the body
    /// origin sits at the decoupling point.
    pub fn decoupling_residual(&self) -> f64 {
        (self.m33() * self.b22 - self.m23() * self.b23) / self.gamma()
    }

    fn all_finite(&self) -> bool {
        [
            self.m11_rb,
            self.m22_rb,
            self.m23_rb,
            self.m33_rb,
            self.m11_a,
            self.m22_a,
            self.m23_a,
            self.m33_a,
            self.d11,
            self.d11_q,
            self.d22,
            self.d23,
            self.d32,
            self.d33,
            self.b11,
            self.b22,
            self.b23,
        ]
        .iter()
        .all(|x| x.is_finite())
    }
}

/// Pose and body velocities of one vessel. `psi` is stored unwrapped.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VesselState {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub u: f64,
    pub v: f64,
    pub r: f64,
}

impl VesselState {
    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    /// Inertial velocity `R(psi) [u, v]`.
    pub fn inertial_velocity(&self) -> Vector2<f64> {
        let (s, c) = self.psi.sin_cos();
        Vector2::new(c * self.u - s * self.v, s * self.u + c * self.v)
    }

    pub fn speed(&self) -> f64 {
        self.u.hypot(self.v)
    }

    pub fn is_finite(&self) -> bool {
        [self.x, self.y, self.psi, self.u, self.v, self.r]
            .iter()
            .all(|x| x.is_finite())
    }
}

/// Constant irrotational current in the inertial frame (m/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OceanCurrent {
    pub vx: f64,
    pub vy: f64,
}

impl OceanCurrent {
    pub fn new(vx: f64, vy: f64) -> Self {
        Self { vx, vy }
    }

    pub fn magnitude(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    /// The regressor target `[Vx, Vy, Vx², Vy², Vx Vy]`.
    pub fn theta(&self) -> Vector5<f64> {
        Vector5::new(
            self.vx,
            self.vy,
            self.vx * self.vx,
            self.vy * self.vy,
            self.vx * self.vy,
        )
    }
}

/// Normalized control channels after the `M⁻¹B` map.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub tau_u: f64,
    pub tau_r: f64,
}

impl ControlInput {
    pub fn new(tau_u: f64, tau_r: f64) -> Self {
        Self { tau_u, tau_r }
    }

    pub fn saturated(self, limits: Option<(f64, f64)>) -> Self {
        match limits {
            Some((lu, lr)) => Self {
                tau_u: self.tau_u.clamp(-lu, lu),
                tau_r: self.tau_r.clamp(-lr, lr),
            },
            None => self,
        }
    }
}

/// Rotation from body to inertial frame about z.
pub fn rotation(psi: f64) -> Matrix3<f64> {
    let (s, c) = psi.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Current expressed in the body frame, `R(psi)^T V_c`.
pub fn current_in_body(current: OceanCurrent, psi: f64) -> (f64, f64) {
    let (s, c) = psi.sin_cos();
    (
        c * current.vx + s * current.vy,
        -s * current.vx + c * current.vy,
    )
}

/// Sway coupling to yaw rate, `X(u, u_c)`.
pub fn coeff_x(u: f64, u_c: f64, p: &VesselParams) -> f64 {
    let (m11, m23, m33) = (p.m11(), p.m23(), p.m33());
    let u_r = u - u_c;
    (m33 * (-p.d23 - m11 * u_r - p.m11_rb * u_c - p.m22_a * u_c)
        + m23 * p.d33
        + m23 * (m23 * u_r + p.m23_rb * u_c + p.m23_a * u_c))
        / p.gamma()
}

/// Sway damping coefficient on relative sway, `Y(u, u_c)`.
pub fn coeff_y(u: f64, u_c: f64, p: &VesselParams) -> f64 {
    let (m23, m33) = (p.m23(), p.m33());
    (-m33 * p.d22 + m23 * p.d32 + m23 * (p.m22_a - p.m11_a) * (u - u_c)) / p.gamma()
}

/// Current-free yaw acceleration, `F_r(u, v, r)`.
pub fn coeff_fr(u: f64, v: f64, r: f64, p: &VesselParams) -> f64 {
    let (m11, m22, m23) = (p.m11(), p.m22(), p.m23());
    let g = p.gamma();
    -(m23 / g) * (-m11 * r * u - p.d22 * v - p.d23 * r)
        + (m22 / g) * (-(m22 * v + m23 * r) * u + m11 * u * v - p.d32 * v - p.d33 * r)
}

/// Surge regressor for the unknown current terms.
pub fn phi_u(psi: f64, r: f64, u: f64, p: &VesselParams) -> Vector5<f64> {
    let m11 = p.m11();
    let (s, c) = psi.sin_cos();
    let k = (p.d11 + 2.0 * p.d11_q * u) / m11;
    let dm = (p.m11_a - p.m22_a) / m11;
    let q = p.d11_q / m11;
    Vector5::new(
        k * c - dm * r * s,
        k * s + dm * r * c,
        -q * c * c,
        -q * s * s,
        -2.0 * q * c * s,
    )
}

/// Yaw regressor for the unknown current terms.
pub fn phi_r(u: f64, v: f64, r: f64, psi: f64, p: &VesselParams) -> Vector5<f64> {
    let (m22, m23) = (p.m22(), p.m23());
    let g = p.gamma();
    let dm = p.m11_a - p.m22_a;
    let a1 = -(dm / g) * (m22 * v + m23 * r);
    let a2 = (m22 / g) * (p.d32 - dm * u) - (m23 / g) * p.d22;
    let (s, c) = psi.sin_cos();
    let k = m22 * dm / g;
    Vector5::new(
        c * a1 - s * a2,
        s * a1 + c * a2,
        -k * c * s,
        k * c * s,
        k * (1.0 - 2.0 * s * s),
    )
}

/// Sway acceleration `X(u, u_c) r + Y(u, u_c)(v - v_c)`; independent of the
/// control input.
pub fn sway_acceleration(s: &VesselState, current: OceanCurrent, p: &VesselParams) -> f64 {
    let (u_c, v_c) = current_in_body(current, s.psi);
    coeff_x(s.u, u_c, p) * s.r + coeff_y(s.u, u_c, p) * (s.v - v_c)
}

/// Time derivative of one vessel's state.
pub fn state_derivative(
    s: &VesselState,
    inp: ControlInput,
    current: OceanCurrent,
    p: &VesselParams,
) -> Result<VesselState> {
    let (sp, cp) = s.psi.sin_cos();
    let theta = current.theta();
    let m11 = p.m11();

    let d = VesselState {
        x: cp * s.u - sp * s.v,
        y: sp * s.u + cp * s.v,
        psi: s.r,
        u: -(p.d11 + p.d11_q * s.u) / m11 * s.u
            + (p.m22() * s.v + p.m23() * s.r) / m11 * s.r
            + phi_u(s.psi, s.r, s.u, p).dot(&theta)
            + inp.tau_u,
        v: sway_acceleration(s, current, p),
        r: coeff_fr(s.u, s.v, s.r, p) + phi_r(s.u, s.v, s.r, s.psi, p).dot(&theta) + inp.tau_r,
    };
    if d.is_finite() {
        Ok(d)
    } else {
        Err(Error::NonFinite {
            what: "vessel state derivative".into(),
            step: 0,
        })
    }
}

/// Feasibility report for a parameter set over an operating envelope.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamsReport {
    pub y_min: f64,
    pub x_max: f64,
    pub ratio: f64,
    pub gamma: f64,
    pub decoupling_residual: f64,
    pub ok: bool,
    pub violations: Vec<String>,
}

/// Envelope and grid used to extract `Y_min` and `X_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    /// Upper end of the surge interval `[0, u_max]`.
    pub u_max: f64,
    /// Bound on the current magnitude; `u_c` spans `[-v_max, v_max]`.
    pub v_max: f64,
    pub du: f64,
    pub dc: f64,
}

impl Envelope {
    pub fn new(u_max: f64, v_max: f64) -> Self {
        Self {
            u_max,
            v_max,
            du: 1e-3,
            dc: 1e-2,
        }
    }

    fn u_grid(&self) -> impl Iterator<Item = f64> + '_ {
        grid(0.0, self.u_max, self.du)
    }

    fn c_grid(&self) -> impl Iterator<Item = f64> + '_ {
        grid(-self.v_max, self.v_max, self.dc)
    }
}

fn grid(lo: f64, hi: f64, step: f64) -> impl Iterator<Item = f64> {
    let n = ((hi - lo) / step).ceil().max(0.0) as usize;
    (0..=n).map(move |i| (lo + i as f64 * step).min(hi))
}

pub const DECOUPLING_TOLERANCE: f64 = 1e-8;

/// Checks the model assumptions and extracts `Y_min = min(-Y)` and
/// `X_max = max|X|` over the envelope. Never panics.
pub fn validate_params(p: &VesselParams, env: Envelope) -> ParamsReport {
    let mut violations = Vec::new();
    let gamma = p.gamma();

    if !p.all_finite() {
        violations.push("non-finite coefficient".to_string());
    }
    if !(p.m11() > 0.0 && p.m22() > 0.0 && p.m33() > 0.0) {
        violations.push("mass matrix diagonal must be positive".to_string());
    }
    if !(gamma > 0.0) {
        violations.push(format!("Gamma = {gamma} must be positive"));
    }
    if p.m11_rb != p.m22_rb {
        violations.push(format!(
            "rigid-body surge and sway mass differ ({} vs {})",
            p.m11_rb, p.m22_rb
        ));
    }
    let residual = if gamma > 0.0 {
        p.decoupling_residual()
    } else {
        f64::NAN
    };
    if !(residual.abs() < DECOUPLING_TOLERANCE) {
        violations.push(format!("actuation decoupling residual {residual:.3e}"));
    }
    if !(env.u_max >= 0.0 && env.v_max >= 0.0 && env.du > 0.0 && env.dc > 0.0) {
        violations.push("invalid envelope".to_string());
    }

    let (mut y_min, mut x_max) = (f64::INFINITY, 0.0f64);
    if violations.is_empty() {
        for u in env.u_grid() {
            for c in env.c_grid() {
                y_min = y_min.min(-coeff_y(u, c, p));
                x_max = x_max.max(coeff_x(u, c, p).abs());
            }
        }
        // Both coefficients are affine, so the grid extremes sit on the corners.
        let (vy, vx) = corner_extremes(p, env);
        let tol = 1e-9 * (1.0 + vy.abs().max(vx.abs()));
        if (vy - y_min).abs() > tol || (vx - x_max).abs() > tol {
            violations.push("grid extremes disagree with corner evaluation".to_string());
        }
        if !(y_min > 0.0) {
            violations.push(format!(
                "Y(u, u_c) reaches {:.6} >= 0 on the envelope",
                -y_min
            ));
        }
    } else {
        y_min = f64::NAN;
        x_max = f64::NAN;
    }

    ParamsReport {
        y_min,
        x_max,
        ratio: y_min / x_max,
        gamma,
        decoupling_residual: residual,
        ok: violations.is_empty(),
        violations,
    }
}

fn corner_extremes(p: &VesselParams, env: Envelope) -> (f64, f64) {
    let corners = [
        (0.0, -env.v_max),
        (0.0, env.v_max),
        (env.u_max, -env.v_max),
        (env.u_max, env.v_max),
    ];
    let y = corners
        .iter()
        .map(|&(u, c)| -coeff_y(u, c, p))
        .fold(f64::INFINITY, f64::min);
    let x = corners
        .iter()
        .map(|&(u, c)| coeff_x(u, c, p).abs())
        .fold(0.0, f64::max);
    (y, x)
}

/// Heading difference `a - b` wrapped to `(-pi, pi]`.
pub fn heading_error(a: f64, b: f64) -> f64 {
    wrap_to_pi(a - b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::Vector3;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn p() -> VesselParams {
        VesselParams::default_vessel()
    }

    #[test]
    fn rotation_identity_and_quarter_turn() {
        assert_abs_diff_eq!(rotation(0.0), Matrix3::identity(), epsilon = 0.0);
        let e = rotation(FRAC_PI_2) * Vector3::new(1.0, 0.0, 0.0);
        assert_abs_diff_eq!(e, Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-15);
        assert_abs_diff_eq!(
            rotation(0.3) * rotation(-0.3),
            Matrix3::identity(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn body_current() {
        let (u, v) = current_in_body(OceanCurrent::new(1.0, 0.0), 0.0);
        assert_abs_diff_eq!(u, 1.0);
        assert_abs_diff_eq!(v, 0.0);
        let (u, v) = current_in_body(OceanCurrent::new(1.0, 0.0), FRAC_PI_2);
        assert_abs_diff_eq!(u, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v, -1.0, epsilon = 1e-15);
        let (u, v) = current_in_body(OceanCurrent::new(-0.707, -0.707), FRAC_PI_4);
        assert_abs_diff_eq!(u.hypot(v), 0.707f64.hypot(0.707), epsilon = 1e-12);
        assert_abs_diff_eq!(u.hypot(v), 0.9998, epsilon = 1e-4);
    }

    #[test]
    fn x_and_y_at_origin() {
        let p = p();
        let g = p.gamma();
        assert_abs_diff_eq!(
            coeff_x(0.0, 0.0, &p),
            (p.m23() * p.d33 - p.m33() * p.d23) / g,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            coeff_y(0.0, 0.0, &p),
            (-p.m33() * p.d22 + p.m23() * p.d32) / g,
            epsilon = 1e-14
        );
    }

    #[test]
    fn x_and_y_are_affine() {
        let p = p();
        for &(u1, u2, c) in &[(0.0, 3.0, 0.4), (1.2, 2.7, -0.9), (0.3, 0.4, 0.0)] {
            let mid = 0.5 * (u1 + u2);
            let dx = coeff_x(u1, c, &p) + coeff_x(u2, c, &p) - 2.0 * coeff_x(mid, c, &p);
            let dy = coeff_y(u1, c, &p) + coeff_y(u2, c, &p) - 2.0 * coeff_y(mid, c, &p);
            assert_abs_diff_eq!(dx, 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(dy, 0.0, epsilon = 1e-12);
            let dxc = coeff_x(u1, -c, &p) + coeff_x(u1, c, &p) - 2.0 * coeff_x(u1, 0.0, &p);
            assert_abs_diff_eq!(dxc, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn fr_vanishes_at_rest_and_phi_r_symmetry() {
        let p = p();
        assert_eq!(coeff_fr(0.0, 0.0, 0.0, &p), 0.0);
        for i in 0..20 {
            let psi = -3.0 + 0.3 * i as f64;
            let phi = phi_r(2.0, 0.3, 0.1, psi, &p);
            assert_abs_diff_eq!(phi[2] + phi[3], 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn phi_u_at_zero_heading() {
        // Independent expansion of -(d11 + d11_q u_r) u_r / m11 about u_r = u - Vx.
        let p = p();
        let c = OceanCurrent::new(0.4, -0.2);
        let u = 2.5;
        let got = phi_u(0.0, 0.0, u, &p).dot(&c.theta());
        let ur = u - c.vx;
        let want = (-(p.d11 + p.d11_q * ur) * ur + (p.d11 + p.d11_q * u) * u) / p.m11();
        assert_abs_diff_eq!(got, want, epsilon = 1e-12);
        let lead = phi_u(0.0, 0.0, u, &p)[0] * c.vx;
        assert_abs_diff_eq!(
            lead,
            (p.d11 + 2.0 * p.d11_q * u) / p.m11() * c.vx,
            epsilon = 1e-15
        );
    }

    #[test]
    fn derivative_at_rest_and_heading_kinematics() {
        let p = p();
        let d = state_derivative(
            &VesselState::default(),
            ControlInput::default(),
            OceanCurrent::default(),
            &p,
        )
        .unwrap();
        assert_eq!(d, VesselState::default());

        let s = VesselState {
            psi: FRAC_PI_2,
            u: 1.0,
            ..Default::default()
        };
        let d = state_derivative(&s, ControlInput::default(), OceanCurrent::default(), &p).unwrap();
        assert_abs_diff_eq!(d.x, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.y, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn non_finite_derivative_is_reported() {
        let s = VesselState {
            u: f64::NAN,
            ..Default::default()
        };
        let err = state_derivative(&s, ControlInput::default(), OceanCurrent::default(), &p());
        assert!(matches!(err, Err(Error::NonFinite { .. })));
    }

    #[test]
    fn default_vessel_is_feasible() {
        let rep = validate_params(&p(), Envelope::new(3.5, 1.0));
        assert!(rep.ok, "{:?}", rep.violations);
        assert!(
            (rep.ratio - 0.0882).abs() / 0.0882 < 0.02,
            "ratio {}",
            rep.ratio
        );
    }

    #[test]
    fn negative_sway_damping_is_rejected() {
        let mut q = p();
        q.d22 = -q.d22;
        let rep = validate_params(&q, Envelope::new(3.5, 1.0));
        assert!(!rep.ok);
        assert!(rep.violations.iter().any(|v| v.contains("Y(u, u_c)")));
    }

    #[test]
    fn broken_decoupling_and_mass_are_named() {
        let mut q = p();
        q.b22 *= 1.5;
        q.m22_rb += 1.0;
        let rep = validate_params(&q, Envelope::new(3.5, 1.0));
        assert!(!rep.ok);
        assert!(rep.violations.iter().any(|v| v.contains("decoupling")));
        assert!(rep.violations.iter().any(|v| v.contains("rigid-body")));
    }

    #[test]
    fn unknown_json_fields_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(DEFAULT_VESSEL_JSON).unwrap();
        v["extra"] = serde_json::json!(1.0);
        assert!(VesselParams::from_json(&v.to_string()).is_err());
    }
}
