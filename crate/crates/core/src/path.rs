//! Parametrized planar paths, the path-tangential frame and the barycenter
//! path-following errors.
//!
//! `theta` is the path variable. It is arc length for every kind except the
//! sinusoid, which uses `x_p = theta`. The along-path speed `s_dot` produced by
//! the update law is therefore converted to `theta_dot = s_dot / |p'(theta)|`.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::angle::wrap_to_pi;
use crate::error::{Error, Result};

const RANGE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PathSpec {
    /// `x_p = theta`, `y_p = amplitude * sin(frequency * theta)`.
    Sinusoid {
        amplitude: f64,
        frequency: f64,
        theta_min: f64,
        theta_max: f64,
    },
    /// Line from `origin` along `heading`, `theta` in `[0, length]`.
    Straight {
        origin: [f64; 2],
        heading: f64,
        length: f64,
    },
    /// Counter-clockwise circle starting below the center heading east.
    Circle {
        center: [f64; 2],
        radius: f64,
        turns: f64,
    },
    /// Waypoint polyline with circular fillets at the corners.
    Polyline {
        waypoints: Vec<[f64; 2]>,
        fillet_radius: f64,
    },
}

/// Position and first two derivatives with respect to `theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint {
    pub pos: Vector2<f64>,
    pub d1: Vector2<f64>,
    pub d2: Vector2<f64>,
}

impl PathPoint {
    pub fn tangent_angle(&self) -> f64 {
        self.d1.y.atan2(self.d1.x)
    }

    /// Signed curvature, positive for left turns.
    pub fn curvature(&self) -> f64 {
        let n = self.d1.norm();
        (self.d1.x * self.d2.y - self.d1.y * self.d2.x) / (n * n * n)
    }

    /// `|p'(theta)|`, metres of path per unit of `theta`.
    pub fn speed(&self) -> f64 {
        self.d1.norm()
    }
}

/// Along-track and cross-track error of the barycenter in the path frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PathErrors {
    pub x_pb: f64,
    pub y_pb: f64,
}

impl PathErrors {
    pub fn new(x_pb: f64, y_pb: f64) -> Self {
        Self { x_pb, y_pb }
    }

    pub fn norm(&self) -> f64 {
        self.x_pb.hypot(self.y_pb)
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    s0: f64,
    len: f64,
    p0: Vector2<f64>,
    h0: f64,
    k: f64,
}

impl Segment {
    fn eval(&self, s: f64) -> PathPoint {
        let h = self.h0 + self.k * s;
        let (sh, ch) = h.sin_cos();
        let pos = if self.k == 0.0 {
            self.p0 + s * Vector2::new(ch, sh)
        } else {
            let (sh0, ch0) = self.h0.sin_cos();
            self.p0 + Vector2::new(sh - sh0, ch0 - ch) / self.k
        };
        PathPoint {
            pos,
            d1: Vector2::new(ch, sh),
            d2: self.k * Vector2::new(-sh, ch),
        }
    }
}

fn polyline_segments(waypoints: &[[f64; 2]], radius: f64) -> Result<Vec<Segment>> {
    if waypoints.len() < 2 {
        return Err(Error::InvalidConfig(
            "polyline needs at least two waypoints".into(),
        ));
    }
    let pts: Vec<Vector2<f64>> = waypoints.iter().map(|w| Vector2::new(w[0], w[1])).collect();
    let legs: Vec<Vector2<f64>> = pts.windows(2).map(|w| w[1] - w[0]).collect();
    if legs.iter().any(|l| l.norm() < 1e-9) {
        return Err(Error::InvalidConfig("repeated polyline waypoint".into()));
    }
    // Tangent length consumed by the fillet at each interior corner.
    let mut trim = vec![0.0; pts.len()];
    let mut turn = vec![0.0; pts.len()];
    for i in 1..pts.len() - 1 {
        let a = wrap_to_pi(legs[i].y.atan2(legs[i].x) - legs[i - 1].y.atan2(legs[i - 1].x));
        if a.abs() > std::f64::consts::PI - 1e-6 {
            return Err(Error::InvalidConfig("polyline reverses direction".into()));
        }
        turn[i] = a;
        trim[i] = radius * (a.abs() / 2.0).tan();
    }
    let mut segs = Vec::new();
    let mut s = 0.0;
    for (i, leg) in legs.iter().enumerate() {
        let len = leg.norm();
        let dir = leg / len;
        let line_len = len - trim[i] - trim[i + 1];
        if line_len < -1e-9 {
            return Err(Error::InvalidConfig(format!(
                "fillet radius {radius} too large for leg {i}"
            )));
        }
        let h = dir.y.atan2(dir.x);
        segs.push(Segment {
            s0: s,
            len: line_len.max(0.0),
            p0: pts[i] + trim[i] * dir,
            h0: h,
            k: 0.0,
        });
        s += line_len.max(0.0);
        if i + 1 < pts.len() - 1 && turn[i + 1] != 0.0 {
            let a = turn[i + 1];
            let arc = radius * a.abs();
            segs.push(Segment {
                s0: s,
                len: arc,
                p0: pts[i + 1] - trim[i + 1] * dir,
                h0: h,
                k: a.signum() / radius,
            });
            s += arc;
        }
    }
    Ok(segs)
}

impl PathSpec {
    /// The sinusoid used by the reference scenario: `y = 300 sin(0.005 x)`.
    pub fn sin300(theta_max: f64) -> Self {
        PathSpec::Sinusoid {
            amplitude: 300.0,
            frequency: 0.005,
            theta_min: -200.0,
            theta_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        match self {
            PathSpec::Sinusoid {
                amplitude,
                frequency,
                theta_min,
                theta_max,
            } => {
                if !(amplitude.is_finite() && frequency.is_finite() && theta_min < theta_max) {
                    return bad("sinusoid parameters");
                }
            }
            PathSpec::Straight {
                length, heading, ..
            } => {
                if !(*length > 0.0 && heading.is_finite()) {
                    return bad("straight path needs positive length");
                }
            }
            PathSpec::Circle { radius, turns, .. } => {
                if !(*radius > 0.0 && *turns > 0.0) {
                    return bad("circle needs positive radius and turns");
                }
            }
            PathSpec::Polyline {
                waypoints,
                fillet_radius,
            } => {
                if !(*fillet_radius > 0.0) {
                    return bad("fillet radius must be positive");
                }
                polyline_segments(waypoints, *fillet_radius)?;
            }
        }
        Ok(())
    }

    pub fn theta_range(&self) -> (f64, f64) {
        match self {
            PathSpec::Sinusoid {
                theta_min,
                theta_max,
                ..
            } => (*theta_min, *theta_max),
            PathSpec::Straight { length, .. } => (0.0, *length),
            PathSpec::Circle { radius, turns, .. } => (0.0, std::f64::consts::TAU * radius * turns),
            PathSpec::Polyline {
                waypoints,
                fillet_radius,
            } => {
                let segs = polyline_segments(waypoints, *fillet_radius).unwrap_or_default();
                let end = segs.last().map(|s| s.s0 + s.len).unwrap_or(0.0);
                (0.0, end)
            }
        }
    }

    /// Clamps `theta` into the configured range; the flag reports clamping.
    pub fn clamp_theta(&self, theta: f64) -> (f64, bool) {
        let (lo, hi) = self.theta_range();
        let c = theta.clamp(lo, hi);
        (c, c != theta)
    }

    fn check(&self, theta: f64) -> Result<()> {
        let (min, max) = self.theta_range();
        if theta.is_finite() && theta >= min - RANGE_SLACK && theta <= max + RANGE_SLACK {
            Ok(())
        } else {
            Err(Error::OutOfRange { theta, min, max })
        }
    }

    /// Evaluates the path and its derivatives without a range check.
    pub fn eval_unchecked(&self, theta: f64) -> PathPoint {
        match self {
            PathSpec::Sinusoid {
                amplitude: a,
                frequency: w,
                ..
            } => {
                let (s, c) = (w * theta).sin_cos();
                PathPoint {
                    pos: Vector2::new(theta, a * s),
                    d1: Vector2::new(1.0, a * w * c),
                    d2: Vector2::new(0.0, -a * w * w * s),
                }
            }
            PathSpec::Straight {
                origin, heading, ..
            } => {
                let (s, c) = heading.sin_cos();
                PathPoint {
                    pos: Vector2::new(origin[0] + theta * c, origin[1] + theta * s),
                    d1: Vector2::new(c, s),
                    d2: Vector2::zeros(),
                }
            }
            PathSpec::Circle { center, radius, .. } => {
                let (s, c) = (theta / radius).sin_cos();
                PathPoint {
                    pos: Vector2::new(center[0] + radius * s, center[1] - radius * c),
                    d1: Vector2::new(c, s),
                    d2: Vector2::new(-s, c) / *radius,
                }
            }
            PathSpec::Polyline {
                waypoints,
                fillet_radius,
            } => {
                let segs = polyline_segments(waypoints, *fillet_radius)
                    .expect("polyline validated before evaluation");
                let idx = segs.iter().rposition(|s| s.s0 <= theta).unwrap_or(0);
                let seg = &segs[idx];
                seg.eval(theta - seg.s0)
            }
        }
    }

    pub fn eval(&self, theta: f64) -> Result<PathPoint> {
        self.check(theta)?;
        Ok(self.eval_unchecked(theta))
    }

    pub fn point(&self, theta: f64) -> Result<Vector2<f64>> {
        Ok(self.eval(theta)?.pos)
    }

    pub fn tangent_angle(&self, theta: f64) -> Result<f64> {
        Ok(self.eval(theta)?.tangent_angle())
    }

    pub fn curvature(&self, theta: f64) -> Result<f64> {
        Ok(self.eval(theta)?.curvature())
    }

    /// Maximum absolute curvature over the whole path.
    pub fn kappa_max(&self) -> f64 {
        match self {
            PathSpec::Sinusoid {
                amplitude,
                frequency,
                theta_min,
                theta_max,
            } => {
                let peak = (amplitude * frequency * frequency).abs();
                // The crest curvature is attained only if a crest lies in range.
                let period = std::f64::consts::PI / frequency.abs().max(f64::MIN_POSITIVE);
                if theta_max - theta_min >= period {
                    peak
                } else {
                    self.kappa_max_sampled(0.1)
                }
            }
            PathSpec::Straight { .. } => 0.0,
            PathSpec::Circle { radius, .. } => 1.0 / radius,
            PathSpec::Polyline {
                waypoints,
                fillet_radius,
            } => {
                let turns = polyline_segments(waypoints, *fillet_radius)
                    .map(|s| s.iter().any(|seg| seg.k != 0.0))
                    .unwrap_or(false);
                if turns {
                    1.0 / fillet_radius
                } else {
                    0.0
                }
            }
        }
    }

    /// Dense sampling at spacing `step` followed by golden-section refinement
    /// around the largest sample.
    pub fn kappa_max_sampled(&self, step: f64) -> f64 {
        let (lo, hi) = self.theta_range();
        let k = |t: f64| self.eval_unchecked(t).curvature().abs();
        let n = ((hi - lo) / step).ceil().max(1.0) as usize;
        let (mut best_t, mut best) = (lo, k(lo));
        for i in 1..=n {
            let t = (lo + i as f64 * step).min(hi);
            let v = k(t);
            if v > best {
                best = v;
                best_t = t;
            }
        }
        let (a, b) = ((best_t - step).max(lo), (best_t + step).min(hi));
        let t = golden_max(k, a, b, 1e-10);
        best.max(k(t))
    }

    /// Path variable of the point closest to `p`: coarse global scan then
    /// local refinement.
    pub fn nearest_theta(&self, p: Vector2<f64>) -> f64 {
        let (lo, hi) = self.theta_range();
        let d = |t: f64| -(self.eval_unchecked(t).pos - p).norm_squared();
        let n = (((hi - lo) / 0.5).ceil() as usize).clamp(1000, 200_000);
        let step = (hi - lo) / n as f64;
        let (mut best_t, mut best) = (lo, d(lo));
        for i in 1..=n {
            let t = lo + i as f64 * step;
            let v = d(t);
            if v > best {
                best = v;
                best_t = t;
            }
        }
        let (a, b) = ((best_t - step).max(lo), (best_t + step).min(hi));
        let mut t = golden_max(d, a, b, 1e-9);
        // Newton on (P - p)·P' = 0; the distance is too flat near its minimum
        // for the bracket alone.
        let grad = |t: f64| {
            let pp = self.eval_unchecked(t);
            let r = pp.pos - p;
            (r.dot(&pp.d1), pp.d1.norm_squared() + r.dot(&pp.d2))
        };
        for _ in 0..3 {
            let (g, dg) = grad(t);
            if !(dg > 0.0) {
                break;
            }
            let next = (t - g / dg).clamp(a, b);
            if grad(next).0.abs() >= g.abs() {
                break;
            }
            t = next;
        }
        t
    }

    /// Errors of `p_b` expressed in the path frame at `theta`.
    pub fn path_errors(&self, theta: f64, p_b: Vector2<f64>) -> Result<PathErrors> {
        let pp = self.eval(theta)?;
        Ok(path_errors_at(&pp, p_b))
    }
}

pub(crate) fn path_errors_at(pp: &PathPoint, p_b: Vector2<f64>) -> PathErrors {
    let e = frame_rotation(pp.tangent_angle()).transpose() * (p_b - pp.pos);
    PathErrors::new(e.x, e.y)
}

/// 2×2 rotation from the path frame to the inertial frame.
pub fn frame_rotation(gamma_p: f64) -> Matrix2<f64> {
    let (s, c) = gamma_p.sin_cos();
    Matrix2::new(c, -s, s, c)
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Along-track shaping function `x / sqrt(1 + x²)`.
pub fn f_theta(x_pb: f64, _y_pb: f64) -> f64 {
    x_pb / (1.0 + x_pb * x_pb).sqrt()
}

/// Speed of the path frame along the path (m/s):
/// `½ U1 cos(chi1 - gamma_p) + ½ U2 cos(chi2 - gamma_p) + k_theta f_theta`.
pub fn path_speed(
    gamma_p: f64,
    errs: PathErrors,
    (u1, chi1): (f64, f64),
    (u2, chi2): (f64, f64),
    k_theta: f64,
) -> f64 {
    0.5 * u1 * (chi1 - gamma_p).cos()
        + 0.5 * u2 * (chi2 - gamma_p).cos()
        + k_theta * f_theta(errs.x_pb, errs.y_pb)
}

/// Rate of the path variable, `path_speed / |p'(theta)|`.
pub fn theta_dot(
    path: &PathSpec,
    theta: f64,
    errs: PathErrors,
    vessel1: (f64, f64),
    vessel2: (f64, f64),
    k_theta: f64,
) -> Result<f64> {
    let pp = path.eval(theta)?;
    Ok(path_speed(pp.tangent_angle(), errs, vessel1, vessel2, k_theta) / pp.speed())
}
