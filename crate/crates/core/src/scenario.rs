//! Scenario files, presets and parameter sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::autopilot::AutopilotMode;
use crate::error::{Error, Result};
use crate::path::PathSpec;
use crate::sim::{self, ConditionReport, Metrics, SimConfig};

pub const SCENARIO_SCHEMA: u32 = 1;

pub const PRESETS: [&str; 4] = ["sin300", "straight", "circle-r10", "baseline-vii"];

/// Upper limits checked against the metrics of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpectedMetrics {
    pub crosstrack_rms_max: Option<f64>,
    pub steady_max_abs_x_max: Option<f64>,
    pub steady_max_abs_y_max: Option<f64>,
    pub max_sway_max: Option<f64>,
}

impl ExpectedMetrics {
    /// Names of the limits that `m` exceeds.
    pub fn violations(&self, m: &Metrics) -> Vec<String> {
        let checks = [
            ("crosstrack_rms", self.crosstrack_rms_max, m.crosstrack_rms),
            (
                "steady_max_abs_x",
                self.steady_max_abs_x_max,
                m.steady_max_abs_x,
            ),
            (
                "steady_max_abs_y",
                self.steady_max_abs_y_max,
                m.steady_max_abs_y,
            ),
            ("max_sway", self.max_sway_max, m.max_sway),
        ];
        checks
            .iter()
            .filter_map(|(name, lim, val)| match lim {
                Some(l) if !(val <= l) => Some(format!("{name} = {val:.4} > {l}")),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    pub name: String,
    #[serde(default)]
    pub config: SimConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<ExpectedMetrics>,
}

impl Scenario {
    pub fn new(name: &str, config: SimConfig) -> Self {
        Self {
            schema: SCENARIO_SCHEMA,
            name: name.to_string(),
            config,
            expected: None,
        }
    }

    /// Parses and validates a scenario document.
    pub fn from_json(text: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(text)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCENARIO_SCHEMA {
            return Err(Error::InvalidConfig(format!(
                "scenario schema {} unsupported (expected {SCENARIO_SCHEMA})",
                self.schema
            )));
        }
        self.config.validate()
    }
}

pub fn preset(name: &str) -> Option<Scenario> {
    let base = SimConfig::default();
    let sc = match name {
        "sin300" => {
            let mut sc = Scenario::new(name, base);
            sc.expected = Some(ExpectedMetrics {
                steady_max_abs_x_max: Some(0.5),
                steady_max_abs_y_max: Some(0.5),
                max_sway_max: Some(6.0),
                ..Default::default()
            });
            sc
        }
        "straight" => Scenario::new(
            name,
            SimConfig {
                path: PathSpec::Straight {
                    origin: [0.0, 0.0],
                    heading: 0.0,
                    length: 3000.0,
                },
                ..base
            },
        ),
        // Curvature 0.1 exceeds what the default vessel can follow.
        "circle-r10" => Scenario::new(
            name,
            SimConfig {
                path: PathSpec::Circle {
                    center: [0.0, 0.0],
                    radius: 10.0,
                    turns: 5.0,
                },
                t_end: 100.0,
                ..base
            },
        ),
        // Generic two-turn run with the PI/PD autopilots; not a survey of any
        // real test area.
        "baseline-vii" => {
            let mut cfg = SimConfig {
                path: PathSpec::Polyline {
                    waypoints: vec![[0.0, 0.0], [400.0, 0.0], [400.0, 150.0], [0.0, 150.0]],
                    fillet_radius: 60.0,
                },
                mu: 60.0,
                t_end: 280.0,
                ..base
            };
            cfg.autopilot.mode = AutopilotMode::Baseline;
            Scenario::new(name, cfg)
        }
        _ => return None,
    };
    Some(sc)
}

fn param_slot<'a>(doc: &'a mut Value, path: &str) -> Result<&'a mut Value> {
    let mut slot = doc;
    for key in path.split('.') {
        slot = match slot {
            Value::Object(map) => map.get_mut(key),
            Value::Array(items) => key.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| Error::UnknownParameter(path.to_string()))?;
    }
    // Optional numeric fields serialize as null when unset.
    if slot.is_number() || slot.is_null() {
        Ok(slot)
    } else {
        Err(Error::UnknownParameter(path.to_string()))
    }
}

/// Fails unless `path` addresses a numeric field of the config.
pub fn check_param(cfg: &SimConfig, path: &str) -> Result<()> {
    param_slot(&mut serde_json::to_value(cfg)?, path).map(|_| ())
}

/// Writes `value` at the dotted `path` of the config and re-validates.
pub fn with_param(cfg: &SimConfig, path: &str, value: f64) -> Result<SimConfig> {
    let mut doc = serde_json::to_value(cfg)?;
    *param_slot(&mut doc, path)? = serde_json::Number::from_f64(value)
        .map(Value::Number)
        .ok_or_else(|| Error::InvalidConfig(format!("{path} = {value} is not finite")))?;
    let out: SimConfig = serde_json::from_value(doc)
        .map_err(|e| Error::InvalidConfig(format!("{path} = {value}: {e}")))?;
    out.validate()?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub conditions: ConditionReport,
    pub completed: bool,
    pub failure: Option<String>,
    pub metrics: Option<Metrics>,
}

fn sweep_row(cfg: SimConfig, value: f64) -> SweepRow {
    let conditions = sim::conditions(&cfg);
    let (completed, failure, metrics) = match sim::run(&cfg) {
        Ok(log) => {
            let m = sim::metrics(&log).ok();
            let fail = log.failure.as_ref().map(|(_, e)| e.to_string());
            (fail.is_none(), fail, m)
        }
        Err(e) => (false, Some(e.to_string()), None),
    };
    SweepRow {
        value,
        conditions,
        completed,
        failure,
        metrics,
    }
}

/// Thread cap from `FORMSIM_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var("FORMSIM_THREADS")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .filter(|n: &usize| *n > 0)
}

/// One run per value, rows in input order. All paths and values are checked
/// before any run starts.
pub fn sweep(cfg: &SimConfig, path: &str, values: &[f64]) -> Result<Vec<SweepRow>> {
    check_param(cfg, path)?;
    let cfgs = values
        .iter()
        .map(|v| with_param(cfg, path, *v))
        .collect::<Result<Vec<_>>>()?;
    let work = || {
        cfgs.into_par_iter()
            .zip(values.par_iter())
            .map(|(c, v)| sweep_row(c, *v))
            .collect()
    };
    match thread_cap() {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidConfig(e.to_string()))?;
            Ok(pool.install(work))
        }
        None => Ok(work()),
    }
}
