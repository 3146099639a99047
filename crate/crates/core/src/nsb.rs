//! Null-space-based task composition for the two-vessel formation:
//! collision avoidance, formation keeping and barycenter LOS path following.
//!
//! Velocities live in the stacked space `[p1; p2] ∈ R⁴`.

use nalgebra::{DMatrix, Matrix2, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::path::{frame_rotation, PathErrors};

const DEGENERATE_DISTANCE: f64 = 1e-6;
const DEGENERATE_SPEED: f64 = 1e-6;
const DEGENERATE_SIDESLIP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    /// Collision-avoidance activation distance (m).
    pub sigma_ca_d: f64,
    /// Extra distance beyond `sigma_ca_d` before the task releases (m).
    pub ca_hysteresis: f64,
    pub lambda_ca: f64,
    /// Desired `p1 - p_b` in the path frame (m).
    pub sigma_f_d_p: [f64; 2],
    /// Diagonal of the formation gain in the path frame.
    pub lambda_f_p: [f64; 2],
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            sigma_ca_d: 20.0,
            ca_hysteresis: 0.5,
            lambda_ca: 1.0,
            sigma_f_d_p: [0.0, 20.0],
            lambda_f_p: [2.5, 0.3],
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |x: f64| x.is_finite() && x > 0.0;
        if !pos(self.sigma_ca_d) {
            return Err(Error::InvalidConfig("sigma_ca_d must be positive".into()));
        }
        if !(self.ca_hysteresis.is_finite() && self.ca_hysteresis >= 0.0) {
            return Err(Error::InvalidConfig(
                "ca_hysteresis must be non-negative".into(),
            ));
        }
        if !(pos(self.lambda_ca) && pos(self.lambda_f_p[0]) && pos(self.lambda_f_p[1])) {
            return Err(Error::InvalidConfig("task gains must be positive".into()));
        }
        if !self.sigma_f_d_p.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidConfig("sigma_f_d_p must be finite".into()));
        }
        Ok(())
    }
}

/// Moore-Penrose pseudoinverse by SVD with the usual `max(m, n) ε σ_max`
/// rank threshold.
pub fn pinv(j: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = j.shape();
    if m == 0 || n == 0 {
        return DMatrix::zeros(n, m);
    }
    let svd = j.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return DMatrix::zeros(n, m);
    }
    let tol = m.max(n) as f64 * f64::EPSILON * smax;
    svd.pseudo_inverse(tol).expect("both factors were computed")
}

/// Null-space projector `I - J†J`; the identity for an empty Jacobian.
pub fn null_projector(j: &DMatrix<f64>) -> DMatrix<f64> {
    let n = j.ncols();
    DMatrix::identity(n, n) - pinv(j) * j
}

/// Jacobian and CLIK velocity of one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskVelocity {
    pub jacobian: DMatrix<f64>,
    pub velocity: Vector4<f64>,
}

impl TaskVelocity {
    pub fn inactive() -> Self {
        Self {
            jacobian: DMatrix::zeros(0, 4),
            velocity: Vector4::zeros(),
        }
    }

    /// `J† (sigma_dot_d + Λ sigma_tilde)`.
    pub fn clik(jacobian: DMatrix<f64>, rate: &[f64]) -> Self {
        let v = pinv(&jacobian) * nalgebra::DVector::from_column_slice(rate);
        Self {
            jacobian,
            velocity: Vector4::new(v[0], v[1], v[2], v[3]),
        }
    }

    pub fn is_active(&self) -> bool {
        self.jacobian.nrows() > 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaTask {
    pub sigma: f64,
    pub sigma_tilde: f64,
    pub active: bool,
    pub task: TaskVelocity,
}

/// Collision avoidance. Each vessel treats the other as the obstacle, giving
/// the rows `(p1 - p2)ᵀ/σ` and `(p2 - p1)ᵀ/σ`. `was_active` drives the
/// hysteresis band.
pub fn task_ca(
    p1: Vector2<f64>,
    p2: Vector2<f64>,
    cfg: &TaskConfig,
    was_active: bool,
) -> Result<CaTask> {
    let d = p1 - p2;
    let sigma = d.norm();
    if !(sigma >= DEGENERATE_DISTANCE) {
        return Err(Error::DegenerateGeometry(sigma));
    }
    let active = if was_active {
        sigma < cfg.sigma_ca_d + cfg.ca_hysteresis
    } else {
        sigma < cfg.sigma_ca_d
    };
    let sigma_tilde = cfg.sigma_ca_d - sigma;
    let task = if active {
        let n = d / sigma;
        let j = DMatrix::from_row_slice(2, 4, &[n.x, n.y, 0.0, 0.0, 0.0, 0.0, -n.x, -n.y]);
        let rate = cfg.lambda_ca * sigma_tilde;
        TaskVelocity::clik(j, &[rate, rate])
    } else {
        TaskVelocity::inactive()
    };
    Ok(CaTask {
        sigma,
        sigma_tilde,
        active,
        task,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormationTask {
    pub sigma: Vector2<f64>,
    pub sigma_d: Vector2<f64>,
    pub sigma_d_dot: Vector2<f64>,
    pub gain: Matrix2<f64>,
    pub task: TaskVelocity,
}

impl FormationTask {
    pub fn error(&self) -> Vector2<f64> {
        self.sigma_d - self.sigma
    }
}

/// `J_f = [½I, -½I]`.
pub fn formation_jacobian() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 4, &[0.5, 0.0, -0.5, 0.0, 0.0, 0.5, 0.0, -0.5])
}

/// Formation keeping on `sigma_f = p1 - p_b`. The desired value and the gain
/// are rotated from the path frame at `gamma_p`; `gamma_p_dot` feeds the
/// rotation rate forward.
pub fn task_formation(
    p1: Vector2<f64>,
    p2: Vector2<f64>,
    gamma_p: f64,
    gamma_p_dot: f64,
    cfg: &TaskConfig,
) -> FormationTask {
    let rot = frame_rotation(gamma_p);
    let sp = Vector2::new(cfg.sigma_f_d_p[0], cfg.sigma_f_d_p[1]);
    let sigma = 0.5 * (p1 - p2);
    let sigma_d = rot * sp;
    // d/dt R(γ) = γ̇ R(γ) S with S the 90° rotation.
    let sigma_d_dot = gamma_p_dot * Vector2::new(-sigma_d.y, sigma_d.x);
    let gain = rot
        * Matrix2::from_diagonal(&Vector2::new(cfg.lambda_f_p[0], cfg.lambda_f_p[1]))
        * rot.transpose();
    let rate = sigma_d_dot + gain * (sigma_d - sigma);
    FormationTask {
        sigma,
        sigma_d,
        sigma_d_dot,
        gain,
        task: TaskVelocity::clik(formation_jacobian(), rate.as_slice()),
    }
}

/// Lookahead distance `sqrt(mu + x² + y²)`.
pub fn lookahead(errs: PathErrors, mu: f64) -> f64 {
    (mu + errs.x_pb * errs.x_pb + errs.y_pb * errs.y_pb).sqrt()
}

/// Desired barycenter course `gamma_p - atan(y / Δ)`.
pub fn los_course(errs: PathErrors, gamma_p: f64, mu: f64) -> f64 {
    gamma_p - (errs.y_pb / lookahead(errs, mu)).atan()
}

/// Barycenter task velocity `U_d [cos χ, sin χ]` applied to both vessels.
pub fn barycenter_task_velocity(chi_bd: f64, u_d_total: f64) -> (Vector2<f64>, Vector4<f64>) {
    let (s, c) = chi_bd.sin_cos();
    let v = u_d_total * Vector2::new(c, s);
    (v, Vector4::new(v.x, v.y, v.x, v.y))
}

/// `v1 + (I - J1†J1)[v2 + (I - J2†J2) v3]`.
pub fn compose(t1: &TaskVelocity, t2: &TaskVelocity, v3: &Vector4<f64>) -> Vector4<f64> {
    let inner = if t2.is_active() {
        t2.velocity + project(&t2.jacobian, v3)
    } else {
        t2.velocity + v3
    };
    if t1.is_active() {
        t1.velocity + project(&t1.jacobian, &inner)
    } else {
        t1.velocity + inner
    }
}

fn project(j: &DMatrix<f64>, v: &Vector4<f64>) -> Vector4<f64> {
    let p = null_projector(j);
    let w = p * nalgebra::DVector::from_column_slice(v.as_slice());
    Vector4::new(w[0], w[1], w[2], w[3])
}

/// Surge and heading references for one vessel from its NSB velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecomposedRefs {
    pub u_d: f64,
    pub psi_d: f64,
    pub chi_nsb: f64,
    pub u_nsb: f64,
}

/// `u_d = U (1 + cos(χ_NSB - χ)) / 2`, `ψ_d = χ_NSB - atan(v / u_d)`.
/// `chi` is the actual course. `psi_d` is returned unwrapped next to `psi_ref`.
pub fn decompose_refs(
    v_nsb: Vector2<f64>,
    chi: f64,
    v_sway: f64,
    psi_ref: f64,
) -> Result<DecomposedRefs> {
    let u_nsb = v_nsb.norm();
    if !(u_nsb >= DEGENERATE_SPEED) {
        return Err(Error::DegenerateReference(format!(
            "NSB speed {u_nsb:.3e} m/s"
        )));
    }
    let chi_nsb = v_nsb.y.atan2(v_nsb.x);
    let u_d = u_nsb * (1.0 + (chi_nsb - chi).cos()) / 2.0;
    // atan2 equals atan(v / u_d) for u_d > 0 and stays defined at u_d = 0.
    let psi_d = chi_nsb - v_sway.atan2(u_d);
    Ok(DecomposedRefs {
        u_d,
        psi_d: crate::angle::unwrap_near(psi_d, psi_ref),
        chi_nsb,
        u_nsb,
    })
}

/// Inputs of the desired yaw rate for one vessel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YawRateInputs {
    /// Curvature times path speed, i.e. `γ̇_p`.
    pub gamma_p_dot: f64,
    pub errs: PathErrors,
    /// Path-frame error rates `(ẋ, ẏ)`.
    pub errs_dot: (f64, f64),
    pub mu: f64,
    pub u_d: f64,
    pub u_d_dot: f64,
    pub v: f64,
    /// Sway acceleration, from the model or a measurement.
    pub v_dot: f64,
}

/// Rate of the LOS course, `γ̇_p - d/dt atan(y / Δ)`.
pub fn los_course_rate(inp: &YawRateInputs) -> f64 {
    let (x, y) = (inp.errs.x_pb, inp.errs.y_pb);
    let (xd, yd) = inp.errs_dot;
    let delta = lookahead(inp.errs, inp.mu);
    let delta_dot = (x * xd + y * yd) / delta;
    inp.gamma_p_dot - (delta * yd - y * delta_dot) / (delta * delta + y * y)
}

/// Desired yaw rate: LOS course rate minus the sideslip rate
/// `(v̇ u_d - u̇_d v) / (u_d² + v²)`.
pub fn desired_yaw_rate(inp: &YawRateInputs) -> Result<f64> {
    let den = inp.u_d * inp.u_d + inp.v * inp.v;
    if !(den >= DEGENERATE_SIDESLIP) {
        return Err(Error::DegenerateReference(format!("u_d² + v² = {den:.3e}")));
    }
    Ok(los_course_rate(inp) - (inp.v_dot * inp.u_d - inp.u_d_dot * inp.v) / den)
}

/// Error state of one vessel entering the cross-track interconnection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AutopilotErrors {
    pub psi_tilde: f64,
    pub u_tilde: f64,
    /// Actual heading.
    pub psi: f64,
    /// `sqrt(u_d² + v²)`.
    pub u_d_total: f64,
}

/// Single-vessel perturbation of the cross-track dynamics.
pub fn interconnection_g2(e: &AutopilotErrors, gamma_p: f64, y_pb: f64, delta: f64) -> f64 {
    let a = (y_pb / delta).atan();
    e.u_tilde * (e.psi - gamma_p).sin()
        + e.u_d_total * (1.0 - e.psi_tilde.cos()) * a.sin()
        + e.u_d_total * a.cos() * e.psi_tilde.sin()
}

/// `½ (G₂(vessel 1) + G₂(vessel 2))`.
pub fn interconnection_g1(
    e1: &AutopilotErrors,
    e2: &AutopilotErrors,
    gamma_p: f64,
    y_pb: f64,
    delta: f64,
) -> f64 {
    0.5 * (interconnection_g2(e1, gamma_p, y_pb, delta)
        + interconnection_g2(e2, gamma_p, y_pb, delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    #[test]
    fn pinv_unit_row_and_zero() {
        let j = DMatrix::from_row_slice(1, 4, &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(pinv(&j), j.transpose());
        let z = DMatrix::<f64>::zeros(2, 4);
        assert_eq!(pinv(&z), DMatrix::<f64>::zeros(4, 2));
        assert_eq!(pinv(&DMatrix::zeros(0, 4)).shape(), (4, 0));
    }

    #[test]
    fn formation_pinv_is_stacked_identity() {
        let jp = pinv(&formation_jacobian());
        let expect = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0]);
        assert_abs_diff_eq!(jp, expect, epsilon = 1e-14);
    }

    #[test]
    fn ca_inactive_beyond_threshold() {
        let cfg = TaskConfig::default();
        let t = task_ca(Vector2::zeros(), Vector2::new(25.0, 0.0), &cfg, false).unwrap();
        assert!(!t.active);
        assert_eq!(
            null_projector(&t.task.jacobian),
            DMatrix::<f64>::identity(4, 4)
        );
    }

    #[test]
    fn ca_rows_and_hysteresis() {
        let cfg = TaskConfig::default();
        let t = task_ca(Vector2::zeros(), Vector2::new(10.0, 0.0), &cfg, false).unwrap();
        assert_eq!(t.sigma, 10.0);
        assert_eq!(
            t.task.jacobian.row(0).iter().copied().collect::<Vec<_>>(),
            vec![-1.0, 0.0, 0.0, 0.0]
        );
        let p2 = Vector2::new(20.3, 0.0);
        assert!(task_ca(Vector2::zeros(), p2, &cfg, true).unwrap().active);
        assert!(!task_ca(Vector2::zeros(), p2, &cfg, false).unwrap().active);
        assert!(matches!(
            task_ca(Vector2::zeros(), Vector2::new(1e-7, 0.0), &cfg, false),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn ca_pushes_vessels_apart() {
        let cfg = TaskConfig::default();
        let p1 = Vector2::new(3.0, 4.0);
        let p2 = p1 + Vector2::new(9.0, 12.0);
        let t = task_ca(p1, p2, &cfg, false).unwrap();
        // Orthonormal rows: J† = Jᵀ, each vessel moves 5 m/s away from the other.
        let n = Vector2::new(-0.6, -0.8);
        let expect = Vector4::new(5.0 * n.x, 5.0 * n.y, -5.0 * n.x, -5.0 * n.y);
        assert_abs_diff_eq!(t.task.velocity, expect, epsilon = 1e-12);
    }

    #[test]
    fn formation_desired_rotation() {
        let cfg = TaskConfig::default();
        let p1 = Vector2::new(0.0, 10.0);
        let p2 = Vector2::new(0.0, -10.0);
        let f = task_formation(p1, p2, 0.0, 0.0, &cfg);
        assert_eq!(f.sigma_d, Vector2::new(0.0, 20.0));
        assert_eq!(f.error(), Vector2::new(0.0, 10.0));
        let f = task_formation(p1, p2, FRAC_PI_2, 0.0, &cfg);
        assert_abs_diff_eq!(f.sigma_d, Vector2::new(-20.0, 0.0), epsilon = 1e-12);
        let eig = f.gain.symmetric_eigenvalues();
        assert!(eig.min() > 0.0);
    }

    #[test]
    fn formation_feedforward_matches_finite_difference() {
        let cfg = TaskConfig::default();
        let (g, gd, h) = (0.7, 0.3, 1e-6);
        let z = Vector2::zeros();
        let f = task_formation(z, z + Vector2::new(1.0, 0.0), g, gd, &cfg);
        let a = task_formation(z, z, g + gd * h, 0.0, &cfg).sigma_d;
        let b = task_formation(z, z, g - gd * h, 0.0, &cfg).sigma_d;
        assert_abs_diff_eq!(f.sigma_d_dot, (a - b) / (2.0 * h), epsilon = 1e-6);
    }

    #[test]
    fn los_examples() {
        let z = PathErrors::default();
        assert_abs_diff_eq!(lookahead(z, 50.0), 7.0711, epsilon = 1e-4);
        assert_eq!(los_course(z, 0.4, 50.0), 0.4);
        let e = PathErrors::new(30.0, -40.0);
        assert_abs_diff_eq!(lookahead(e, 50.0), 50.4975, epsilon = 1e-4);
        assert_abs_diff_eq!(los_course(e, 0.0, 50.0), 0.6699, epsilon = 1e-4);
        // y equal to the lookahead: with x = 0, Δ² = μ + y² so y = Δ is impossible
        // unless μ = 0; use a tiny μ limit instead.
        let e = PathErrors::new(0.0, 10.0);
        assert_abs_diff_eq!(los_course(e, 0.0, 1e-12), -FRAC_PI_4, epsilon = 1e-12);
    }

    #[test]
    fn barycenter_velocity_examples() {
        let (v, s) = barycenter_task_velocity(0.0, 3.0);
        assert_eq!(v, Vector2::new(3.0, 0.0));
        assert_eq!(s, Vector4::new(3.0, 0.0, 3.0, 0.0));
        let (v, _) = barycenter_task_velocity(PI, 3.0);
        assert_abs_diff_eq!(v, Vector2::new(-3.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn compose_with_inactive_tasks_passes_v3() {
        let (_, v3) = barycenter_task_velocity(0.3, 2.0);
        let off = TaskVelocity::inactive();
        assert_eq!(compose(&off, &off, &v3), v3);
    }

    #[test]
    fn compose_rational_sample() {
        // J1 = [1 0 0 0], J2 = formation; all entries dyadic so the chain is exact.
        let t1 = TaskVelocity::clik(DMatrix::from_row_slice(1, 4, &[1.0, 0.0, 0.0, 0.0]), &[2.0]);
        let t2 = TaskVelocity::clik(formation_jacobian(), &[0.5, -1.0]);
        let v3 = Vector4::new(1.0, 2.0, 3.0, 4.0);
        // P2 v3 = [2, 3, 2, 3]; v2 = [0.5, -1, -0.5, 1]; sum = [2.5, 2, 1.5, 4].
        // P1 zeroes the first entry; v1 = [2, 0, 0, 0].
        let v = compose(&t1, &t2, &v3);
        assert_abs_diff_eq!(v, Vector4::new(2.0, 2.0, 1.5, 4.0), epsilon = 1e-14);
    }

    #[test]
    fn decompose_examples() {
        let r = decompose_refs(Vector2::new(3.0, 0.0), 0.0, 0.0, 0.0).unwrap();
        assert_eq!((r.u_d, r.psi_d), (3.0, 0.0));
        let r = decompose_refs(Vector2::new(-3.0, 0.0), 0.0, 0.0, PI).unwrap();
        assert_abs_diff_eq!(r.u_d, 0.0, epsilon = 1e-15);
        let r = decompose_refs(Vector2::new(0.0, 2.0), 1.0, 0.0, 0.0).unwrap();
        assert_eq!(r.psi_d, FRAC_PI_2);
        let r = decompose_refs(Vector2::new(2.0, 0.0), 0.0, 2.0, 0.0).unwrap();
        assert_abs_diff_eq!(r.psi_d, -FRAC_PI_4, epsilon = 1e-15);
        assert!(matches!(
            decompose_refs(Vector2::zeros(), 0.0, 0.0, 0.0),
            Err(Error::DegenerateReference(_))
        ));
    }

    #[test]
    fn yaw_rate_straight_zero_errors() {
        let inp = YawRateInputs {
            gamma_p_dot: 0.0,
            errs: PathErrors::default(),
            errs_dot: (0.0, 0.0),
            mu: 50.0,
            u_d: 3.0,
            u_d_dot: 0.0,
            v: 0.0,
            v_dot: 0.0,
        };
        assert_eq!(desired_yaw_rate(&inp).unwrap(), 0.0);
        let stop = YawRateInputs { u_d: 0.0, ..inp };
        assert!(desired_yaw_rate(&stop).is_err());
    }

    #[test]
    fn los_course_rate_matches_finite_difference() {
        // x(t) = 3 + 0.5 t, y(t) = -4 + 0.2 t, γ(t) = 0.1 t.
        let mu = 50.0;
        let chi = |t: f64| los_course(PathErrors::new(3.0 + 0.5 * t, -4.0 + 0.2 * t), 0.1 * t, mu);
        let h = 1e-5;
        let fd = (chi(h) - chi(-h)) / (2.0 * h);
        let inp = YawRateInputs {
            gamma_p_dot: 0.1,
            errs: PathErrors::new(3.0, -4.0),
            errs_dot: (0.5, 0.2),
            mu,
            u_d: 1.0,
            u_d_dot: 0.0,
            v: 0.0,
            v_dot: 0.0,
        };
        assert_abs_diff_eq!(los_course_rate(&inp), fd, epsilon = 1e-8);
    }

    #[test]
    fn g1_zero_at_zero_errors_and_linearization() {
        let e = |pt: f64, ut: f64| AutopilotErrors {
            psi_tilde: pt,
            u_tilde: ut,
            psi: 0.4,
            u_d_total: 3.0,
        };
        assert_eq!(
            interconnection_g1(&e(0.0, 0.0), &e(0.0, 0.0), 0.1, 5.0, 8.0),
            0.0
        );
        let pt = 1e-5;
        let g2 = interconnection_g2(&e(pt, 0.0), 0.1, 5.0, 8.0);
        let a = (5.0f64 / 8.0).atan();
        assert_abs_diff_eq!(g2, 3.0 * a.cos() * pt, epsilon = 1e-9);
    }

    fn mat24() -> impl Strategy<Value = DMatrix<f64>> {
        (1usize..=2, prop::collection::vec(-5.0f64..5.0, 8))
            .prop_map(|(m, v)| DMatrix::from_row_slice(m, 4, &v[..4 * m]))
    }

    proptest! {
        #[test]
        fn moore_penrose_identities(j in mat24()) {
            let p = pinv(&j);
            prop_assert!((&j * &p * &j - &j).amax() < 1e-10);
            prop_assert!((&p * &j * &p - &p).amax() < 1e-10);
            prop_assert!(((&j * &p).transpose() - &j * &p).amax() < 1e-10);
            prop_assert!(((&p * &j).transpose() - &p * &j).amax() < 1e-10);
        }

        #[test]
        fn projector_properties(j in mat24()) {
            let p = null_projector(&j);
            prop_assert!((&p * &p - &p).amax() < 1e-10);
            prop_assert!((p.transpose() - &p).amax() < 1e-10);
            prop_assert!((&j * &p).amax() < 1e-10);
        }

        #[test]
        fn barycenter_speed_preserved(chi in -10.0f64..10.0, u in 0.0f64..6.0) {
            let (v, _) = barycenter_task_velocity(chi, u);
            prop_assert!((v.norm() - u).abs() < 1e-12);
        }

        #[test]
        fn los_turns_toward_path(y in -500.0f64..500.0, x in -500.0f64..500.0, g in -3.0f64..3.0) {
            prop_assume!(y.abs() > 1e-9);
            let chi = los_course(PathErrors::new(x, y), g, 50.0);
            prop_assert_eq!((chi - g).signum(), -y.signum());
        }

        #[test]
        fn u_d_within_nsb_speed(vx in -5.0f64..5.0, vy in -5.0f64..5.0, chi in -4.0f64..4.0, v in -2.0f64..2.0) {
            prop_assume!(vx.hypot(vy) > 1e-3);
            let r = decompose_refs(Vector2::new(vx, vy), chi, v, 0.0).unwrap();
            prop_assert!(r.u_d >= 0.0 && r.u_d <= r.u_nsb * (1.0 + 1e-15));
        }
    }
}
