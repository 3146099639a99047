//! Surge and heading autopilots: adaptive feedback-linearizing sliding mode
//! controllers and a plain PI/PD baseline.

use nalgebra::Vector5;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vessel::{coeff_fr, heading_error, phi_r, phi_u, VesselParams, VesselState};

/// Replacement for `sign(s)` in the switching terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Switching {
    /// True signum with `sign(0) = 0`.
    Strict,
    /// `sat(s / width)`.
    BoundaryLayer { width: f64 },
}

impl Default for Switching {
    fn default() -> Self {
        Switching::BoundaryLayer { width: 0.1 }
    }
}

impl Switching {
    pub fn apply(&self, s: f64) -> f64 {
        match *self {
            Switching::Strict => {
                if s > 0.0 {
                    1.0
                } else if s < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Switching::BoundaryLayer { width } => (s / width).clamp(-1.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutopilotGains {
    pub k_psi: f64,
    pub k_r: f64,
    pub lambda: f64,
    pub k_d: f64,
    pub gamma_r: f64,
    pub k_u: f64,
    pub k_e: f64,
    pub gamma_u: f64,
    pub switching: Switching,
}

impl Default for AutopilotGains {
    fn default() -> Self {
        Self {
            k_psi: 1.2,
            k_r: 1.3,
            lambda: 100.0,
            k_d: 10.0,
            gamma_r: 5.0,
            k_u: 0.1,
            k_e: 0.1,
            gamma_u: 1.0,
            switching: Switching::default(),
        }
    }
}

impl AutopilotGains {
    pub fn validate(&self) -> Result<()> {
        let g = [
            ("k_psi", self.k_psi),
            ("k_r", self.k_r),
            ("lambda", self.lambda),
            ("k_d", self.k_d),
            ("gamma_r", self.gamma_r),
            ("k_u", self.k_u),
            ("k_e", self.k_e),
            ("gamma_u", self.gamma_u),
        ];
        for (name, v) in g {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "gain {name} must be positive"
                )));
            }
        }
        if let Switching::BoundaryLayer { width } = self.switching {
            if !(width.is_finite() && width > 0.0) {
                return Err(Error::InvalidConfig(
                    "boundary layer width must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Current-parameter estimates of one vessel.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AdaptiveState {
    pub theta_hat_u: Vector5<f64>,
    pub theta_hat_r: Vector5<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AutopilotRefs {
    pub u_d: f64,
    pub u_d_dot: f64,
    pub psi_d: f64,
    pub psi_d_dot: f64,
    pub psi_d_ddot: f64,
}

/// Heading error and its rate, `(psi - psi_d, r - psi_d_dot)`.
pub fn heading_errors(s: &VesselState, refs: &AutopilotRefs) -> (f64, f64) {
    (heading_error(s.psi, refs.psi_d), s.r - refs.psi_d_dot)
}

/// Sliding variable `psi_tilde_dot + lambda psi_tilde`.
pub fn sliding_variable(s: &VesselState, refs: &AutopilotRefs, gains: &AutopilotGains) -> f64 {
    let (e, de) = heading_errors(s, refs);
    de + gains.lambda * e
}

pub fn heading_control(
    s: &VesselState,
    refs: &AutopilotRefs,
    gains: &AutopilotGains,
    ad: &AdaptiveState,
    p: &VesselParams,
) -> f64 {
    let (e, de) = heading_errors(s, refs);
    let g = gains;
    -coeff_fr(s.u, s.v, s.r, p) - phi_r(s.u, s.v, s.r, s.psi, p).dot(&ad.theta_hat_r)
        + refs.psi_d_ddot
        - (g.k_psi + g.lambda * g.k_r) * e
        - (g.k_r + g.lambda) * de
        - g.k_d * g.switching.apply(de + g.lambda * e)
}

pub fn heading_adapt(
    s: &VesselState,
    refs: &AutopilotRefs,
    gains: &AutopilotGains,
    p: &VesselParams,
) -> Vector5<f64> {
    phi_r(s.u, s.v, s.r, s.psi, p) * (gains.gamma_r * sliding_variable(s, refs, gains))
}

pub fn surge_control(
    s: &VesselState,
    refs: &AutopilotRefs,
    gains: &AutopilotGains,
    ad: &AdaptiveState,
    p: &VesselParams,
) -> f64 {
    let m11 = p.m11();
    let e = s.u - refs.u_d;
    -(p.m22() * s.v + p.m23() * s.r) * s.r / m11 + p.d11 / m11 * refs.u_d
        - phi_u(s.psi, s.r, s.u, p).dot(&ad.theta_hat_u)
        + refs.u_d_dot
        + p.d11_q / m11 * s.u * s.u
        - gains.k_u * e
        - gains.k_e * gains.switching.apply(e)
}

pub fn surge_adapt(
    s: &VesselState,
    refs: &AutopilotRefs,
    gains: &AutopilotGains,
    p: &VesselParams,
) -> Vector5<f64> {
    phi_u(s.psi, s.r, s.u, p) * (gains.gamma_u * (s.u - refs.u_d))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PidGains {
    pub kp_u: f64,
    pub ki_u: f64,
    pub kp_psi: f64,
    pub kd_psi: f64,
    /// Clamp on the integral contribution `ki_u * integral`.
    pub integral_limit: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            kp_u: 1.0,
            ki_u: 0.1,
            kp_psi: 2.0,
            kd_psi: 5.0,
            integral_limit: 1.0,
        }
    }
}

impl PidGains {
    pub fn validate(&self) -> Result<()> {
        let ok = [
            self.kp_u,
            self.ki_u,
            self.kp_psi,
            self.kd_psi,
            self.integral_limit,
        ]
        .iter()
        .all(|g| g.is_finite() && *g >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(
                "baseline gains must be non-negative".into(),
            ))
        }
    }
}

/// PI surge and PD heading commands. `integral` is the running integral of
/// the surge error. The heading loop sees only the setpoint: its damping
/// acts on the measured yaw rate, with no rate or current feedforward.
pub fn baseline_control(
    s: &VesselState,
    refs: &AutopilotRefs,
    pid: &PidGains,
    integral: f64,
) -> (f64, f64) {
    let e = heading_error(s.psi, refs.psi_d);
    let i_term = (pid.ki_u * integral).clamp(-pid.integral_limit, pid.integral_limit);
    let tau_u = -pid.kp_u * (s.u - refs.u_d) - i_term;
    let tau_r = -pid.kp_psi * e - pid.kd_psi * s.r;
    (tau_u, tau_r)
}

/// Rate of the surge integral with conditional-integration anti-windup.
pub fn baseline_integral_rate(
    s: &VesselState,
    refs: &AutopilotRefs,
    pid: &PidGains,
    integral: f64,
) -> f64 {
    let e = s.u - refs.u_d;
    let saturated = (pid.ki_u * integral).abs() >= pid.integral_limit;
    if saturated && e * integral > 0.0 {
        0.0
    } else {
        e
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutopilotMode {
    #[default]
    Adaptive,
    Baseline,
}
