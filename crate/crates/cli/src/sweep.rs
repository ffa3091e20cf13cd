//! One-parameter sweeps over a base configuration.

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{CoefficientSpec, ConfigError, GridSpec, RunConfig, Scenario};
use crate::run::{run, RunError, RunReport};
use dglab::showcase::ForceKernel;

/// Parameters a sweep can vary.
pub const AXES: &[&str] = &["t", "d", "alpha", "beta", "mu", "epsilon", "n"];

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub axis: String,
    pub values: Vec<f64>,
    pub runs: Vec<RunReport>,
    pub overall_pass: bool,
}

fn unsupported(axis: &str, scenario: &Scenario) -> ConfigError {
    ConfigError(format!(
        "sweep axis {axis:?} does not apply to a {} scenario",
        scenario.kind()
    ))
}

fn set_cells(grid: &mut GridSpec, value: f64) -> Result<(), ConfigError> {
    if !(value >= 2.0 && value.fract() == 0.0) {
        return Err(ConfigError(format!("sweep axis n needs integers >= 2, got {value}")));
    }
    grid.axes.iter_mut().for_each(|a| a.cells = value as usize);
    Ok(())
}

/// The base configuration with `axis` set to `value`.
pub fn apply(base: &RunConfig, axis: &str, value: f64) -> Result<RunConfig, ConfigError> {
    let mut cfg = base.clone();
    cfg.name = format!("{}[{axis}={value}]", base.name);
    let err = || unsupported(axis, &base.scenario);
    match (axis, &mut cfg.scenario) {
        ("t", Scenario::Certify(c)) => {
            if !(value > c.s) {
                return Err(ConfigError(format!("sweep value t = {value} must exceed s = {}", c.s)));
            }
            c.times = vec![value];
            c.time_fractions.clear();
        }
        ("t", Scenario::TravelingWave(c)) => c.horizon = value,
        ("t", Scenario::PorousMedium(c)) => c.t_final = value,
        ("t", Scenario::MckeanVlasov(c)) => c.fractions = Some(vec![value]),
        ("d", Scenario::Certify(c)) => {
            let (Some((_, x_hi)), Some((y_lo, _))) = (c.x.extent0(), c.y.extent0()) else {
                return Err(ConfigError(
                    "sweep axis d needs box regions with Y to the right of X".into(),
                ));
            };
            c.y = c.y.shifted(x_hi + value - y_lo)?;
        }
        ("d", Scenario::PorousMedium(c)) => c.d = Some(value),
        ("alpha", Scenario::Certify(c)) => match &mut c.coefficients {
            CoefficientSpec::Constant { a, matrix: None, .. } => *a = Some(value),
            CoefficientSpec::Checkerboard { value: v, .. } => *v = value,
            CoefficientSpec::Rotation { a, .. } => *a = value,
            _ => return Err(err()),
        },
        ("alpha", Scenario::MckeanVlasov(c)) => c.sigma = value,
        ("beta", Scenario::Certify(c)) => match &mut c.coefficients {
            CoefficientSpec::Constant { b, .. } => b[0] = value,
            CoefficientSpec::Rotation { omega, .. } => *omega = value,
            _ => return Err(err()),
        },
        ("beta", Scenario::TravelingWave(c)) => c.beta = value,
        ("beta", Scenario::MckeanVlasov(c)) => match &mut c.kernel {
            ForceKernel::Sine { amplitude, .. } => *amplitude = value,
            ForceKernel::Zero => return Err(err()),
        },
        ("mu", Scenario::Certify(c)) => c.mu = Some(value),
        ("epsilon", _) => cfg.cutoff.epsilon = value,
        ("n", Scenario::Certify(c)) => set_cells(&mut c.grid, value)?,
        ("n", Scenario::TravelingWave(c)) => set_cells(&mut c.grid, value)?,
        ("n", Scenario::PorousMedium(c)) => set_cells(&mut c.grid, value)?,
        ("n", Scenario::MckeanVlasov(c)) => set_cells(&mut c.grid, value)?,
        (a, _) if !AXES.contains(&a) => {
            return Err(ConfigError(format!(
                "unknown sweep axis {a:?}; choose one of {}",
                AXES.join(", ")
            )))
        }
        _ => return Err(err()),
    }
    Ok(cfg)
}

/// Runs every value in parallel; rows keep the order of `values`.
pub fn sweep(base: &RunConfig, axis: &str, values: &[f64]) -> Result<SweepReport, RunError> {
    if values.is_empty() {
        return Err(ConfigError("sweep needs at least one value".into()).into());
    }
    let configs = values
        .iter()
        .map(|&v| apply(base, axis, v))
        .collect::<Result<Vec<_>, _>>()?;
    let runs = configs.par_iter().map(run).collect::<Result<Vec<_>, _>>()?;
    Ok(SweepReport {
        axis: axis.to_string(),
        values: values.to_vec(),
        overall_pass: runs.iter().all(|r| r.overall_pass),
        runs,
    })
}
