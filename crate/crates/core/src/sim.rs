//! Fixed-step simulation of the two-vessel closed loop.
//!
//! Guidance and autopilots are evaluated inside every RK4 stage. The few
//! discrete quantities (collision-avoidance latch, held course, held heading
//! reference, sensor noise) are refreshed once per step.

use nalgebra::{SVector, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::angle::wrap_to_pi;
use crate::autopilot::{
    baseline_control, baseline_integral_rate, heading_adapt, heading_control, sliding_variable,
    surge_adapt, surge_control, AdaptiveState, AutopilotGains, AutopilotMode, AutopilotRefs,
    PidGains,
};
use crate::error::{Error, Result};
use crate::nsb::{
    barycenter_task_velocity, compose, decompose_refs, desired_yaw_rate, interconnection_g1,
    lookahead, los_course, los_course_rate, task_ca, task_formation, AutopilotErrors, TaskConfig,
    YawRateInputs,
};
use crate::path::{frame_rotation, path_errors_at, path_speed, PathErrors, PathSpec};
use crate::vessel::{
    state_derivative, sway_acceleration, validate_params, ControlInput, Envelope, OceanCurrent,
    ParamsReport, VesselParams, VesselState,
};

/// Length of the flattened continuous state.
pub const STATE_LEN: usize = 39;
const VESSEL_BLOCK: usize = 19;
const COURSE_SPEED_MIN: f64 = 1e-3;

pub type StateVector = SVector<f64, STATE_LEN>;

/// Classical fourth-order Runge-Kutta step.
pub fn rk4_step<const N: usize, F>(
    mut f: F,
    x: &SVector<f64, N>,
    dt: f64,
) -> Result<SVector<f64, N>>
where
    F: FnMut(&SVector<f64, N>) -> Result<SVector<f64, N>>,
{
    let k1 = f(x)?;
    let k2 = f(&(x + k1 * (dt / 2.0)))?;
    let k3 = f(&(x + k2 * (dt / 2.0)))?;
    let k4 = f(&(x + k3 * dt))?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VdotSource {
    /// Sway acceleration from the model expression.
    #[default]
    Truth,
    /// Sway acceleration read from the plant derivative, optionally noisy.
    Sensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutopilotConfig {
    pub mode: AutopilotMode,
    pub gains: AutopilotGains,
    pub baseline: PidGains,
    /// Initial estimates for both vessels; zero when absent.
    pub warm_start: Option<AdaptiveState>,
}

impl Default for AutopilotConfig {
    fn default() -> Self {
        Self {
            mode: AutopilotMode::Adaptive,
            gains: AutopilotGains::default(),
            baseline: PidGains::default(),
            warm_start: None,
        }
    }
}

/// Placement relative to the path point at `theta_start`, in the path frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConditions {
    pub theta_start: f64,
    pub along_track_offset: f64,
    pub cross_track_offset: f64,
    /// Distance of each vessel from the barycenter, across the path.
    pub half_spacing: f64,
    /// Initial surge speed of both vessels (m/s); the desired speed when absent.
    pub surge: Option<f64>,
    /// Initial path variable; the point nearest to the barycenter when absent.
    pub theta0: Option<f64>,
    /// Explicit vessel states, overriding the placement above.
    pub vessels: Option<[VesselState; 2]>,
}

impl Default for InitialConditions {
    fn default() -> Self {
        Self {
            theta_start: 0.0,
            along_track_offset: 0.0,
            cross_track_offset: 20.0,
            half_spacing: 10.0,
            surge: None,
            theta0: None,
            vessels: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeConfig {
    pub u_max: f64,
    pub v_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub u_d: f64,
    pub mu: f64,
    pub k_theta: f64,
    pub current: OceanCurrent,
    pub path: PathSpec,
    pub tasks: TaskConfig,
    pub autopilot: AutopilotConfig,
    pub vessel: VesselParams,
    pub initial: InitialConditions,
    pub vdot: VdotSource,
    /// Standard deviation of the sway-acceleration measurement noise (m/s²).
    pub vdot_noise_std: f64,
    pub seed: u64,
    /// Time constant of the filtered differentiators for `u̇_d` and `ψ̈_d` (s).
    pub diff_filter_tau: f64,
    /// Symmetric limits on `(tau_u, tau_r)`.
    pub tau_limits: Option<[f64; 2]>,
    /// Envelope for `Y_min` and `X_max`; `u ∈ [0, u_d + 0.5]`, `|u_c| ≤ max(1, |V_c|)` when absent.
    pub envelope: Option<EnvelopeConfig>,
    /// Sway speed treated as divergence (m/s).
    pub sway_cap: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            t_end: 600.0,
            u_d: 3.0,
            mu: 50.0,
            k_theta: 1.0,
            current: OceanCurrent::new(-0.707, -0.707),
            path: PathSpec::sin300(5000.0),
            tasks: TaskConfig::default(),
            autopilot: AutopilotConfig::default(),
            vessel: VesselParams::default_vessel(),
            initial: InitialConditions::default(),
            vdot: VdotSource::Truth,
            vdot_noise_std: 0.0,
            seed: 0,
            diff_filter_tau: 0.1,
            tau_limits: None,
            envelope: None,
            sway_cap: 5.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.dt > 0.0 && self.dt <= 0.1) {
            return bad(format!("dt = {} outside (0, 0.1]", self.dt));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return bad("t_end must be non-negative".into());
        }
        if !(self.u_d.is_finite() && self.u_d > 0.0) {
            return bad("u_d must be positive".into());
        }
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return bad("mu must be positive".into());
        }
        if !(self.k_theta.is_finite() && self.k_theta > 0.0) {
            return bad("k_theta must be positive".into());
        }
        if !(self.diff_filter_tau.is_finite() && self.diff_filter_tau > 0.0) {
            return bad("diff_filter_tau must be positive".into());
        }
        if !(self.vdot_noise_std.is_finite() && self.vdot_noise_std >= 0.0) {
            return bad("vdot_noise_std must be non-negative".into());
        }
        if !(self.current.vx.is_finite() && self.current.vy.is_finite()) {
            return bad("current must be finite".into());
        }
        if !(self.sway_cap > 0.0) {
            return bad("sway_cap must be positive".into());
        }
        self.path.validate()?;
        self.tasks.validate()?;
        self.autopilot.gains.validate()?;
        self.autopilot.baseline.validate()?;
        Ok(())
    }

    pub fn envelope(&self) -> Envelope {
        match self.envelope {
            Some(e) => Envelope::new(e.u_max, e.v_max),
            None => Envelope::new(self.u_d + 0.5, self.current.magnitude().max(1.0)),
        }
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// Feasibility of the path and lookahead for the configured vessel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub kappa_max: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub ratio: f64,
    pub mu: f64,
    pub bound_mu: f64,
    pub kappa_ok: bool,
    pub mu_ok: bool,
    pub params_ok: bool,
    pub violations: Vec<String>,
}

impl ConditionReport {
    pub fn ok(&self) -> bool {
        self.kappa_ok && self.mu_ok && self.params_ok
    }
}

/// `κ_max < Y_min / X_max` and `μ > 4 X_max / (Y_min - X_max κ_max)`.
pub fn check_conditions(cfg: &SimConfig, report: &ParamsReport) -> ConditionReport {
    let kappa_max = cfg.path.kappa_max();
    let den = report.y_min - report.x_max * kappa_max;
    let bound_mu = if den > 0.0 {
        4.0 * report.x_max / den
    } else {
        f64::INFINITY
    };
    ConditionReport {
        kappa_max,
        y_min: report.y_min,
        x_max: report.x_max,
        ratio: report.ratio,
        mu: cfg.mu,
        bound_mu,
        kappa_ok: kappa_max < report.ratio,
        mu_ok: cfg.mu > bound_mu,
        params_ok: report.ok,
        violations: report.violations.clone(),
    }
}

pub fn conditions(cfg: &SimConfig) -> ConditionReport {
    check_conditions(cfg, &validate_params(&cfg.vessel, cfg.envelope()))
}

/// Continuous state of the closed loop.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimState {
    pub t: f64,
    pub vessels: [VesselState; 2],
    pub adaptive: [AdaptiveState; 2],
    /// Filter states of the `r_d` differentiators.
    pub r_d_filter: [f64; 2],
    /// Filter states of the `u_d` differentiators.
    pub u_d_filter: [f64; 2],
    /// Surge error integrals of the baseline autopilot.
    pub integral: [f64; 2],
    pub theta: f64,
}

impl SimState {
    pub fn to_vector(&self) -> StateVector {
        let mut x = StateVector::zeros();
        for i in 0..2 {
            let o = i * VESSEL_BLOCK;
            let s = &self.vessels[i];
            x.fixed_rows_mut::<6>(o)
                .copy_from_slice(&[s.x, s.y, s.psi, s.u, s.v, s.r]);
            x.fixed_rows_mut::<5>(o + 6)
                .copy_from(&self.adaptive[i].theta_hat_u);
            x.fixed_rows_mut::<5>(o + 11)
                .copy_from(&self.adaptive[i].theta_hat_r);
            x[o + 16] = self.r_d_filter[i];
            x[o + 17] = self.u_d_filter[i];
            x[o + 18] = self.integral[i];
        }
        x[2 * VESSEL_BLOCK] = self.theta;
        x
    }

    pub fn from_vector(t: f64, x: &StateVector) -> Self {
        let mut st = SimState {
            t,
            theta: x[2 * VESSEL_BLOCK],
            ..Default::default()
        };
        for i in 0..2 {
            let o = i * VESSEL_BLOCK;
            st.vessels[i] = VesselState {
                x: x[o],
                y: x[o + 1],
                psi: x[o + 2],
                u: x[o + 3],
                v: x[o + 4],
                r: x[o + 5],
            };
            st.adaptive[i].theta_hat_u = x.fixed_rows::<5>(o + 6).into();
            st.adaptive[i].theta_hat_r = x.fixed_rows::<5>(o + 11).into();
            st.r_d_filter[i] = x[o + 16];
            st.u_d_filter[i] = x[o + 17];
            st.integral[i] = x[o + 18];
        }
        st
    }
}

/// Quantities held constant over one integration step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discrete {
    pub ca_active: bool,
    pub chi_last: [f64; 2],
    pub psi_d_last: [f64; 2],
    pub vdot_noise: [f64; 2],
}

/// Per-vessel diagnostics of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct VesselDiag {
    pub u_d: f64,
    pub u_d_dot: f64,
    pub psi_d: f64,
    pub r_d: f64,
    /// `r_d` with the model sway acceleration, whatever the configured source.
    pub r_d_truth: f64,
    pub psi_d_ddot: f64,
    pub tau_u: f64,
    pub tau_r: f64,
    pub chi: f64,
    pub u_d_total: f64,
    pub sliding: f64,
    pub degenerate_ref: bool,
}

/// Everything computed by one evaluation of the closed loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub derivative: StateVector,
    pub theta_eval: f64,
    pub theta_dot: f64,
    pub s_dot: f64,
    pub gamma_p: f64,
    pub kappa: f64,
    pub errs: PathErrors,
    pub errs_dot: (f64, f64),
    pub delta: f64,
    pub chi_bd: f64,
    /// Barycenter guidance speed `√(u_d² + v̄²)`.
    pub guidance_speed: f64,
    pub ca_sigma: f64,
    pub ca_active: bool,
    pub formation_error: Vector2<f64>,
    pub g1: f64,
    pub vessels: [VesselDiag; 2],
}

/// One evaluation of the closed loop in the documented order: path errors,
/// path update, NSB tasks, composition, decomposition, desired yaw rate,
/// autopilots, plant.
pub fn closed_loop_derivative(
    st: &SimState,
    disc: &Discrete,
    cfg: &SimConfig,
) -> Result<Evaluation> {
    let p = &cfg.vessel;
    let (theta_eval, _) = cfg.path.clamp_theta(st.theta);
    let pp = cfg.path.eval(theta_eval)?;
    let gamma_p = pp.tangent_angle();
    let kappa = pp.curvature();

    let [s1, s2] = st.vessels;
    let (p1, p2) = (s1.position(), s2.position());
    let errs = path_errors_at(&pp, 0.5 * (p1 + p2));

    let vel = [s1.inertial_velocity(), s2.inertial_velocity()];
    let mut chi = [0.0; 2];
    for i in 0..2 {
        chi[i] = if vel[i].norm() >= COURSE_SPEED_MIN {
            vel[i].y.atan2(vel[i].x)
        } else {
            disc.chi_last[i]
        };
    }
    let s_dot = path_speed(
        gamma_p,
        errs,
        (vel[0].norm(), chi[0]),
        (vel[1].norm(), chi[1]),
        cfg.k_theta,
    );
    let theta_dot = s_dot / pp.speed();
    let gamma_p_dot = kappa * s_dot;

    // Path-frame error rates from the actual barycenter velocity.
    let pb_dot = frame_rotation(gamma_p).transpose() * (0.5 * (vel[0] + vel[1]));
    let x_dot = pb_dot.x - s_dot + gamma_p_dot * errs.y_pb;
    let y_dot = pb_dot.y - gamma_p_dot * errs.x_pb;

    let ca = task_ca(p1, p2, &cfg.tasks, disc.ca_active)?;
    let form = task_formation(p1, p2, gamma_p, gamma_p_dot, &cfg.tasks);
    let v_bar = 0.5 * (s1.v + s2.v);
    let u_d_total = (cfg.u_d * cfg.u_d + v_bar * v_bar).sqrt();
    let chi_bd = los_course(errs, gamma_p, cfg.mu);
    let (_, v3) = barycenter_task_velocity(chi_bd, u_d_total);
    let v_nsb = compose(&ca.task, &form.task, &v3);
    let delta = lookahead(errs, cfg.mu);

    let tf = cfg.diff_filter_tau;
    let mut dx = StateVector::zeros();
    let mut diags = [VesselDiag::default(); 2];
    let mut ap_errs = [AutopilotErrors {
        psi_tilde: 0.0,
        u_tilde: 0.0,
        psi: 0.0,
        u_d_total: 0.0,
    }; 2];

    for i in 0..2 {
        let s = &st.vessels[i];
        let ad = &st.adaptive[i];
        let vn = Vector2::new(v_nsb[2 * i], v_nsb[2 * i + 1]);
        let (u_d, psi_d, degenerate_ref) = match decompose_refs(vn, chi[i], s.v, s.psi) {
            Ok(r) => (r.u_d, r.psi_d, false),
            Err(Error::DegenerateReference(_)) => (0.0, disc.psi_d_last[i], true),
            Err(e) => return Err(e),
        };
        let u_d_dot = (u_d - st.u_d_filter[i]) / tf;

        let v_dot_truth = sway_acceleration(s, cfg.current, p);
        let v_dot = match cfg.vdot {
            VdotSource::Truth => v_dot_truth,
            VdotSource::Sensor => {
                state_derivative(s, ControlInput::default(), cfg.current, p)?.v + disc.vdot_noise[i]
            }
        };
        let yaw_in = YawRateInputs {
            gamma_p_dot,
            errs,
            errs_dot: (x_dot, y_dot),
            mu: cfg.mu,
            u_d,
            u_d_dot,
            v: s.v,
            v_dot,
        };
        let yaw_rate = |inp: &YawRateInputs| match desired_yaw_rate(inp) {
            Ok(r) => Ok(r),
            Err(Error::DegenerateReference(_)) => Ok(los_course_rate(inp)),
            Err(e) => Err(e),
        };
        let r_d = yaw_rate(&yaw_in)?;
        let r_d_truth = yaw_rate(&YawRateInputs {
            v_dot: v_dot_truth,
            ..yaw_in
        })?;
        let psi_d_ddot = (r_d - st.r_d_filter[i]) / tf;

        let refs = AutopilotRefs {
            u_d,
            u_d_dot,
            psi_d,
            psi_d_dot: r_d,
            psi_d_ddot,
        };
        let gains = &cfg.autopilot.gains;
        let o = i * VESSEL_BLOCK;
        let (tau_u, tau_r) = match cfg.autopilot.mode {
            AutopilotMode::Adaptive => {
                let tu = surge_control(s, &refs, gains, ad, p);
                let tr = heading_control(s, &refs, gains, ad, p);
                dx.fixed_rows_mut::<5>(o + 6)
                    .copy_from(&surge_adapt(s, &refs, gains, p));
                dx.fixed_rows_mut::<5>(o + 11)
                    .copy_from(&heading_adapt(s, &refs, gains, p));
                (tu, tr)
            }
            AutopilotMode::Baseline => {
                let pid = &cfg.autopilot.baseline;
                dx[o + 18] = baseline_integral_rate(s, &refs, pid, st.integral[i]);
                baseline_control(s, &refs, pid, st.integral[i])
            }
        };
        let inp = ControlInput::new(tau_u, tau_r).saturated(cfg.tau_limits.map(|l| (l[0], l[1])));
        let ds = state_derivative(s, inp, cfg.current, p)?;
        dx.fixed_rows_mut::<6>(o)
            .copy_from_slice(&[ds.x, ds.y, ds.psi, ds.u, ds.v, ds.r]);
        dx[o + 16] = (r_d - st.r_d_filter[i]) / tf;
        dx[o + 17] = u_d_dot;

        let u_d_i_total = u_d.hypot(s.v);
        ap_errs[i] = AutopilotErrors {
            psi_tilde: wrap_to_pi(s.psi - psi_d),
            u_tilde: s.u - u_d,
            psi: s.psi,
            u_d_total: u_d_i_total,
        };
        diags[i] = VesselDiag {
            u_d,
            u_d_dot,
            psi_d,
            r_d,
            r_d_truth,
            psi_d_ddot,
            tau_u: inp.tau_u,
            tau_r: inp.tau_r,
            chi: chi[i],
            u_d_total: u_d_i_total,
            sliding: sliding_variable(s, &refs, gains),
            degenerate_ref,
        };
    }
    dx[2 * VESSEL_BLOCK] = theta_dot;

    Ok(Evaluation {
        derivative: dx,
        theta_eval,
        theta_dot,
        s_dot,
        gamma_p,
        kappa,
        errs,
        errs_dot: (x_dot, y_dot),
        delta,
        chi_bd,
        guidance_speed: u_d_total,
        ca_sigma: ca.sigma,
        ca_active: ca.active,
        formation_error: form.error(),
        g1: interconnection_g1(&ap_errs[0], &ap_errs[1], gamma_p, errs.y_pb, delta),
        vessels: diags,
    })
}

/// Initial continuous and discrete state for a configuration.
pub fn initial_state(cfg: &SimConfig) -> Result<(SimState, Discrete)> {
    let ic = &cfg.initial;
    let vessels = match ic.vessels {
        Some(v) => v,
        None => {
            let pp = cfg.path.eval(ic.theta_start)?;
            let g = pp.tangent_angle();
            let rot = frame_rotation(g);
            let pb = pp.pos + rot * Vector2::new(ic.along_track_offset, ic.cross_track_offset);
            let off = rot * Vector2::new(0.0, ic.half_spacing);
            let at = |q: Vector2<f64>| VesselState {
                x: q.x,
                y: q.y,
                psi: g,
                u: ic.surge.unwrap_or(cfg.u_d),
                ..Default::default()
            };
            [at(pb + off), at(pb - off)]
        }
    };
    let pb = 0.5 * (vessels[0].position() + vessels[1].position());
    let theta = match ic.theta0 {
        Some(t) => t,
        None => cfg.path.nearest_theta(pb),
    };
    let ad = cfg.autopilot.warm_start.unwrap_or_default();
    let mut st = SimState {
        t: 0.0,
        vessels,
        adaptive: [ad, ad],
        theta,
        ..Default::default()
    };
    let mut disc = Discrete {
        ca_active: false,
        chi_last: [vessels[0].psi, vessels[1].psi],
        psi_d_last: [vessels[0].psi, vessels[1].psi],
        vdot_noise: [0.0; 2],
    };
    let ca = task_ca(
        vessels[0].position(),
        vessels[1].position(),
        &cfg.tasks,
        false,
    )?;
    disc.ca_active = ca.active;

    // Start the differentiators at rest: first u_d, then r_d with u̇_d = 0.
    let e = closed_loop_derivative(&st, &disc, cfg)?;
    st.u_d_filter = [e.vessels[0].u_d, e.vessels[1].u_d];
    let e = closed_loop_derivative(&st, &disc, cfg)?;
    st.r_d_filter = [e.vessels[0].r_d, e.vessels[1].r_d];
    for i in 0..2 {
        disc.psi_d_last[i] = e.vessels[i].psi_d;
    }
    Ok((st, disc))
}

/// One logged sample.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Record {
    pub t: f64,
    pub theta: f64,
    pub theta_dot: f64,
    pub s_dot: f64,
    pub gamma_p: f64,
    pub kappa: f64,
    pub x_pb: f64,
    pub y_pb: f64,
    pub chi_bd: f64,
    pub guidance_speed: f64,
    pub delta: f64,
    pub ca_sigma: f64,
    pub ca_active: bool,
    pub sigma_f_err_x: f64,
    pub sigma_f_err_y: f64,
    pub lyapunov_v: f64,
    pub g1: f64,
    pub theta_clamped: bool,
    pub vessels: [VesselRecord; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct VesselRecord {
    pub state: VesselState,
    pub diag: VesselDiag,
    pub theta_hat_u_norm: f64,
    pub theta_hat_r_norm: f64,
}

impl Record {
    pub fn errs(&self) -> PathErrors {
        PathErrors::new(self.x_pb, self.y_pb)
    }

    pub fn formation_error_norm(&self) -> f64 {
        self.sigma_f_err_x.hypot(self.sigma_f_err_y)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimLog {
    pub dt: f64,
    pub records: Vec<Record>,
    /// Step index and error when the run halted early.
    pub failure: Option<(usize, Error)>,
}

fn record(st: &SimState, e: &Evaluation, clamped: bool) -> Record {
    let vessels = std::array::from_fn(|i| VesselRecord {
        state: st.vessels[i],
        diag: e.vessels[i],
        theta_hat_u_norm: st.adaptive[i].theta_hat_u.norm(),
        theta_hat_r_norm: st.adaptive[i].theta_hat_r.norm(),
    });
    Record {
        t: st.t,
        theta: st.theta,
        theta_dot: e.theta_dot,
        s_dot: e.s_dot,
        gamma_p: e.gamma_p,
        kappa: e.kappa,
        x_pb: e.errs.x_pb,
        y_pb: e.errs.y_pb,
        chi_bd: e.chi_bd,
        guidance_speed: e.guidance_speed,
        delta: e.delta,
        ca_sigma: e.ca_sigma,
        ca_active: e.ca_active,
        sigma_f_err_x: e.formation_error.x,
        sigma_f_err_y: e.formation_error.y,
        lyapunov_v: 0.5 * (e.errs.x_pb * e.errs.x_pb + e.errs.y_pb * e.errs.y_pb),
        g1: e.g1,
        theta_clamped: clamped,
        vessels,
    }
}

/// Runs after checking the feasibility conditions.
pub fn run(cfg: &SimConfig) -> Result<SimLog> {
    cfg.validate()?;
    let report = conditions(cfg);
    if !report.ok() {
        let mut why = Vec::new();
        if !report.kappa_ok {
            why.push(format!(
                "kappa_max {} not below Y_min/X_max {}",
                report.kappa_max, report.ratio
            ));
        }
        if !report.mu_ok {
            why.push(format!(
                "mu {} not above bound {}",
                report.mu, report.bound_mu
            ));
        }
        why.extend(report.violations.iter().cloned());
        return Err(Error::AssumptionViolated(why.join("; ")));
    }
    run_unchecked(cfg)
}

/// Runs without the feasibility check. Module failures end the run and are
/// reported in `SimLog::failure` together with the partial log.
pub fn run_unchecked(cfg: &SimConfig) -> Result<SimLog> {
    cfg.validate()?;
    let (mut st, mut disc) = initial_state(cfg)?;
    let n = cfg.steps();
    let dt = cfg.dt;
    let mut log = SimLog {
        dt,
        records: Vec::with_capacity(n + 1),
        failure: None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.vdot_noise_std.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let draw = |rng: &mut ChaCha8Rng| {
        if cfg.vdot == VdotSource::Sensor && cfg.vdot_noise_std > 0.0 {
            [noise.sample(rng), noise.sample(rng)]
        } else {
            [0.0; 2]
        }
    };
    disc.vdot_noise = draw(&mut rng);
    let mut clamped = false;

    for step in 0..=n {
        let e = match closed_loop_derivative(&st, &disc, cfg) {
            Ok(e) => e,
            Err(err) => {
                log.failure = Some((step, err));
                return Ok(log);
            }
        };
        log.records.push(record(&st, &e, clamped));
        if step == n {
            break;
        }

        let x0 = st.to_vector();
        let t0 = st.t;
        let next = rk4_step(
            |x| {
                let s = SimState::from_vector(t0, x);
                Ok(closed_loop_derivative(&s, &disc, cfg)?.derivative)
            },
            &x0,
            dt,
        );
        let x1 = match next {
            Ok(x) => x,
            Err(err) => {
                log.failure = Some((step, err));
                return Ok(log);
            }
        };
        if !x1.iter().all(|v| v.is_finite()) {
            log.failure = Some((
                step,
                Error::NonFinite {
                    what: "closed-loop state".into(),
                    step,
                },
            ));
            return Ok(log);
        }
        st = SimState::from_vector((step + 1) as f64 * dt, &x1);
        if st.vessels.iter().any(|v| v.v.abs() > cfg.sway_cap) {
            log.failure = Some((
                step,
                Error::NonFinite {
                    what: format!("sway speed beyond cap {}", cfg.sway_cap),
                    step,
                },
            ));
            return Ok(log);
        }
        let (th, c) = cfg.path.clamp_theta(st.theta);
        st.theta = th;
        clamped |= c;

        // Discrete updates at the step boundary.
        for i in 0..2 {
            let v = st.vessels[i].inertial_velocity();
            if v.norm() >= COURSE_SPEED_MIN {
                disc.chi_last[i] = v.y.atan2(v.x);
            }
            if !e.vessels[i].degenerate_ref {
                disc.psi_d_last[i] = e.vessels[i].psi_d;
            }
        }
        disc.ca_active = match task_ca(
            st.vessels[0].position(),
            st.vessels[1].position(),
            &cfg.tasks,
            disc.ca_active,
        ) {
            Ok(ca) => ca.active,
            Err(err) => {
                log.failure = Some((step + 1, err));
                return Ok(log);
            }
        };
        disc.vdot_noise = draw(&mut rng);
    }
    Ok(log)
}

/// Lyapunov function of the path-following errors and its nominal rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovDiag {
    pub v: f64,
    pub v_dot_nominal: f64,
    pub q_min: f64,
}

/// `V = ½(x² + y²)`, `V̇ = -k_θ x²/√(1+x²) - U_d y²/√(Δ²+y²)` and the
/// smallest diagonal entry of `Q` over the ball `‖(x, y)‖ ≤ ball_radius`.
/// `u_d` is the barycenter guidance speed.
pub fn lyapunov_diag(
    errs: PathErrors,
    u: f64,
    k_theta: f64,
    mu: f64,
    ball_radius: f64,
) -> LyapunovDiag {
    let (x, y) = (errs.x_pb, errs.y_pb);
    let delta = lookahead(errs, mu);
    let r2 = ball_radius * ball_radius;
    LyapunovDiag {
        v: 0.5 * (x * x + y * y),
        v_dot_nominal: -k_theta * x * x / (1.0 + x * x).sqrt()
            - u * y * y / (delta * delta + y * y).sqrt(),
        q_min: (k_theta / (1.0 + r2).sqrt()).min(u / (mu + 2.0 * r2).sqrt()),
    }
}

/// Summary metrics of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub duration: f64,
    pub convergence_time: Option<f64>,
    pub along_track_convergence_time: Option<f64>,
    pub exp_rate_fit: Option<f64>,
    pub max_sway: f64,
    pub formation_rms: f64,
    pub crosstrack_rms: f64,
    pub steady_max_abs_x: f64,
    pub steady_max_abs_y: f64,
    pub max_theta_hat_norm: f64,
}

/// Fraction of the log treated as steady state.
pub const STEADY_FRACTION: f64 = 0.4;
/// Error level used for the convergence times (m).
pub const CONVERGENCE_TOL: f64 = 0.5;

/// First time after which `e` stays below `tol`.
pub fn settle_time(t: &[f64], e: &[f64], tol: f64) -> Option<f64> {
    match e.iter().rposition(|v| *v >= tol) {
        None => t.first().copied(),
        Some(i) if i + 1 < t.len() => Some(t[i + 1]),
        Some(_) => None,
    }
}

/// Lowest error level (m) used by the decay fit.
pub const DECAY_FLOOR: f64 = 0.05;

/// Least-squares slope of `ln e` over the first decay window after the peak:
/// from where `e` drops below `min(peak/2, 2)` until it falls below the
/// floor `max(0.05, 3 × median of the last 20%)`.
pub fn fit_decay_rate(t: &[f64], e: &[f64]) -> Result<f64> {
    if t.len() != e.len() || t.len() < 10 {
        return Err(Error::InsufficientDecay);
    }
    let (peak_i, peak) = e
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::MIN), |a, (i, v)| if v > a.1 { (i, v) } else { a });
    let upper = (0.5 * peak).min(2.0);
    let mut tail: Vec<f64> = e[e.len() - e.len() / 5..].to_vec();
    tail.sort_by(f64::total_cmp);
    let floor = (3.0 * tail[tail.len() / 2]).max(DECAY_FLOOR);
    if !(upper > 2.0 * floor) {
        return Err(Error::InsufficientDecay);
    }
    let start = match e[peak_i..].iter().position(|v| *v <= upper) {
        Some(k) => peak_i + k,
        None => return Err(Error::InsufficientDecay),
    };
    let end = e[start..]
        .iter()
        .position(|v| *v < floor)
        .map(|k| start + k)
        .unwrap_or(e.len());
    if end - start < 10 || e[start] < 2.0 * e[end - 1] {
        return Err(Error::InsufficientDecay);
    }
    let n = (end - start) as f64;
    let (ts, ls): (Vec<f64>, Vec<f64>) = (start..end).map(|k| (t[k], e[k].ln())).unzip();
    let tm = ts.iter().sum::<f64>() / n;
    let lm = ls.iter().sum::<f64>() / n;
    let sxy: f64 = ts.iter().zip(&ls).map(|(a, b)| (a - tm) * (b - lm)).sum();
    let sxx: f64 = ts.iter().map(|a| (a - tm) * (a - tm)).sum();
    Ok(sxy / sxx)
}

pub fn metrics(log: &SimLog) -> Result<Metrics> {
    let rec = &log.records;
    if rec.is_empty() {
        return Err(Error::InvalidConfig("empty log".into()));
    }
    let t: Vec<f64> = rec.iter().map(|r| r.t).collect();
    let norm: Vec<f64> = rec.iter().map(|r| r.errs().norm()).collect();
    let ax: Vec<f64> = rec.iter().map(|r| r.x_pb.abs()).collect();
    let steady = &rec[steady_start(rec.len())..];
    let rms = |f: &dyn Fn(&Record) -> f64| {
        (steady.iter().map(|r| f(r).powi(2)).sum::<f64>() / steady.len() as f64).sqrt()
    };
    let max = |f: &dyn Fn(&Record) -> f64, rs: &[Record]| rs.iter().map(f).fold(0.0, f64::max);
    Ok(Metrics {
        duration: rec.last().map(|r| r.t).unwrap_or(0.0),
        convergence_time: settle_time(&t, &norm, CONVERGENCE_TOL),
        along_track_convergence_time: settle_time(&t, &ax, CONVERGENCE_TOL),
        exp_rate_fit: fit_decay_rate(&t, &norm).ok(),
        max_sway: max(
            &|r| r.vessels[0].state.v.abs().max(r.vessels[1].state.v.abs()),
            rec,
        ),
        formation_rms: rms(&|r| r.formation_error_norm()),
        crosstrack_rms: rms(&|r| r.y_pb),
        steady_max_abs_x: max(&|r| r.x_pb.abs(), steady),
        steady_max_abs_y: max(&|r| r.y_pb.abs(), steady),
        max_theta_hat_norm: max(
            &|r| {
                r.vessels
                    .iter()
                    .map(|v| v.theta_hat_u_norm.max(v.theta_hat_r_norm))
                    .fold(0.0, f64::max)
            },
            rec,
        ),
    })
}

/// Index of the first record in the steady window.
pub fn steady_start(len: usize) -> usize {
    len - ((len as f64) * STEADY_FRACTION).round() as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::SVector;

    #[test]
    fn rk4_constant_and_exponential() {
        let x = SVector::<f64, 1>::new(2.0);
        let y = rk4_step(|_| Ok(SVector::<f64, 1>::zeros()), &x, 0.1).unwrap();
        assert_eq!(y, x);
        let y = rk4_step(|x| Ok(*x), &SVector::<f64, 1>::new(1.0), 0.1).unwrap();
        assert_abs_diff_eq!(y[0], 0.1f64.exp(), epsilon = 1e-7);
        assert_abs_diff_eq!(y[0], 1.1051708, epsilon = 1e-7);
    }

    #[test]
    fn rk4_fourth_order() {
        let err = |dt: f64| {
            let mut x = SVector::<f64, 1>::new(1.0);
            let n = (1.0 / dt).round() as usize;
            for _ in 0..n {
                x = rk4_step(|x| Ok(-x), &x, dt).unwrap();
            }
            (x[0] - (-1.0f64).exp()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 16.0).abs() < 1.5, "ratio {ratio}");
    }

    #[test]
    fn state_vector_roundtrip() {
        let mut st = SimState {
            t: 1.0,
            theta: 7.0,
            ..Default::default()
        };
        st.vessels[1].r = 0.3;
        st.adaptive[0].theta_hat_r[4] = 2.0;
        st.integral[1] = -1.0;
        st.r_d_filter[0] = 0.1;
        st.u_d_filter[1] = 2.5;
        assert_eq!(SimState::from_vector(1.0, &st.to_vector()), st);
    }

    #[test]
    fn lyapunov_examples() {
        let d = lyapunov_diag(PathErrors::default(), 3.0, 1.0, 50.0, 1.0);
        assert_eq!((d.v, d.v_dot_nominal), (0.0, 0.0));
        let d = lyapunov_diag(PathErrors::new(3.0, 4.0), 3.0, 1.0, 50.0, 5.0);
        assert_eq!(d.v, 12.5);
        assert!(d.v_dot_nominal < 0.0);
        // Nominal rate is bounded by -q_min ‖X‖² inside the ball.
        assert!(d.v_dot_nominal <= -d.q_min * 25.0 + 1e-12);
    }

    #[test]
    fn decay_fit_on_synthetic_logs() {
        let t: Vec<f64> = (0..5000).map(|k| k as f64 * 0.01).collect();
        let e: Vec<f64> = t.iter().map(|t| (-0.2 * t).exp()).collect();
        assert_abs_diff_eq!(fit_decay_rate(&t, &e).unwrap(), -0.2, epsilon = 1e-3);
        let c = vec![3.0; t.len()];
        assert_eq!(fit_decay_rate(&t, &c), Err(Error::InsufficientDecay));
    }

    #[test]
    fn settle_time_cases() {
        let t = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(settle_time(&t, &[2.0, 1.0, 0.1, 0.1], 0.5), Some(2.0));
        assert_eq!(settle_time(&t, &[0.1; 4], 0.5), Some(0.0));
        assert_eq!(settle_time(&t, &[0.1, 0.1, 0.1, 1.0], 0.5), None);
    }

    #[test]
    fn circle_r10_fails_curvature_condition() {
        let cfg = SimConfig {
            path: PathSpec::Circle {
                center: [0.0, 10.0],
                radius: 10.0,
                turns: 3.0,
            },
            ..Default::default()
        };
        let c = conditions(&cfg);
        assert!(!c.kappa_ok);
        assert!(matches!(run(&cfg), Err(Error::AssumptionViolated(_))));
    }

    #[test]
    fn perfect_tracking_is_an_equilibrium() {
        // Straight path, no current, vessels in formation at the desired speed.
        let mut cfg = SimConfig {
            current: OceanCurrent::default(),
            path: PathSpec::Straight {
                origin: [0.0, 0.0],
                heading: 0.0,
                length: 10_000.0,
            },
            ..Default::default()
        };
        let at = |y: f64| VesselState {
            x: 100.0,
            y,
            u: 3.0,
            ..Default::default()
        };
        cfg.initial.vessels = Some([at(20.0), at(-20.0)]);
        let (st, disc) = initial_state(&cfg).unwrap();
        let e = closed_loop_derivative(&st, &disc, &cfg).unwrap();
        assert_abs_diff_eq!(e.errs.norm(), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(e.errs_dot.0, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(e.errs_dot.1, 0.0, epsilon = 1e-12);
        for i in 0..2 {
            let o = i * VESSEL_BLOCK;
            assert_abs_diff_eq!(e.vessels[i].u_d, 3.0, epsilon = 1e-12);
            assert_abs_diff_eq!(e.vessels[i].r_d, 0.0, epsilon = 1e-12);
            // Surge, sway and yaw accelerations vanish.
            for k in 3..6 {
                assert_abs_diff_eq!(e.derivative[o + k], 0.0, epsilon = 1e-12);
            }
        }
    }
}
