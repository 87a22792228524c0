//! Scenario configuration: TOML sections with benchmark defaults, so an
//! empty file reproduces the reference 10,000-load air-conditioning case.

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use tclsim_core::population::{Deadband, Heterogeneity, TclParameters};
use tclsim_core::trajectory::SetpointSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    Agents,
    Pde,
    Coupled,
}

impl std::str::FromStr for RunMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "agents" => Ok(RunMode::Agents),
            "pde" => Ok(RunMode::Pde),
            "coupled" => Ok(RunMode::Coupled),
            other => Err(format!("unknown mode '{other}' (expected agents|pde|coupled)")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationConfig {
    pub n: usize,
    pub seed: u64,
    /// log-normal | normal | uniform
    pub heterogeneity: String,
    pub c_mean: f64,
    pub c_std: f64,
    pub r: f64,
    pub p: f64,
    pub eta: f64,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self {
            n: 10_000,
            seed: 42,
            heterogeneity: "log-normal".into(),
            c_mean: 10.0,
            c_std: 3.0,
            r: 2.0,
            p: 14.0,
            eta: 2.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermalConfig {
    pub beta: f64,
    pub deadband_width: f64,
    pub initial_center: f64,
    /// Apply the diffusion as per-agent temperature noise.
    pub agent_noise: bool,
}

impl Default for ThermalConfig {
    fn default() -> Self {
        Self {
            beta: 0.1,
            deadband_width: 0.5,
            initial_center: 20.0,
            agent_noise: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmbientConfig {
    /// Piecewise-linear table of (hour, degC).
    pub points: Vec<(f64, f64)>,
}

impl Default for AmbientConfig {
    fn default() -> Self {
        Self {
            points: vec![(0.0, 30.0), (5.0, 28.0), (14.0, 32.0), (24.0, 29.0)],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwitchingConfig {
    /// Forced-toggle rate per load, events per hour.
    pub rate: f64,
}

impl Default for SwitchingConfig {
    fn default() -> Self {
        Self { rate: 2.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    pub a: f64,
    pub k0: f64,
    pub smoothing_window: usize,
    /// Denominator floor as a fraction of the population size.
    pub floor_fraction: f64,
    /// Controller period in hours.
    pub period: f64,
    /// Supervisory set-point servo gain, 1/h (0 disables).
    pub anchor_gain: f64,
    /// Band slew limits, degC per hour.
    pub u_min: f64,
    pub u_max: f64,
    /// Desired weighted output (constant).
    pub y_d: f64,
}

impl Default for ControllerSection {
    fn default() -> Self {
        Self {
            a: -1.0,
            k0: 7.5,
            smoothing_window: 10,
            floor_fraction: 0.01,
            period: 1.0 / 360.0,
            anchor_gain: 15.0,
            u_min: -0.4,
            u_max: 0.2,
            y_d: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub initial: f64,
    /// Transitions as (start hour, end hour, target degC).
    pub moves: Vec<(f64, f64, f64)>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            initial: 20.0,
            moves: vec![(2.0, 7.0, 19.6), (9.0, 15.0, 20.3), (16.0, 22.0, 19.9)],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub n_cells: usize,
    /// thermostat | zero | prescribed
    pub sigma_model: String,
    /// Piecewise-linear (hour, loads/h) tables for the prescribed model.
    pub sigma_upper: Vec<(f64, f64)>,
    pub sigma_lower: Vec<(f64, f64)>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            n_cells: 100,
            sigma_model: "thermostat".into(),
            sigma_upper: Vec::new(),
            sigma_lower: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: RunMode,
    pub horizon: f64,
    /// Log every k-th control step.
    pub log_every: usize,
    /// Number of agent temperature series kept for plot data.
    pub temperature_samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: RunMode::Agents,
            horizon: 24.0,
            log_every: 1,
            temperature_samples: 200,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub population: PopulationConfig,
    pub thermal: ThermalConfig,
    pub ambient: AmbientConfig,
    pub switching: SwitchingConfig,
    pub controller: ControllerSection,
    pub schedule: ScheduleConfig,
    pub solver: SolverConfig,
    pub run: RunConfig,
}

/// Piecewise-linear table over time, clamped at the ends.
#[derive(Debug, Clone)]
pub struct PiecewiseLinear {
    points: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn new(points: &[(f64, f64)]) -> anyhow::Result<Self> {
        if points.is_empty() {
            bail!("piecewise-linear table needs at least one point");
        }
        for pair in points.windows(2) {
            if pair[1].0 <= pair[0].0 {
                bail!("piecewise-linear table must be strictly time-ordered");
            }
        }
        Ok(Self {
            points: points.to_vec(),
        })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            points: vec![(0.0, value)],
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let pts = &self.points;
        if t <= pts[0].0 {
            return pts[0].1;
        }
        if t >= pts[pts.len() - 1].0 {
            return pts[pts.len() - 1].1;
        }
        for pair in pts.windows(2) {
            let (t0, v0) = pair[0];
            let (t1, v1) = pair[1];
            if t <= t1 {
                return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
            }
        }
        pts[pts.len() - 1].1
    }
}

/// How the solver's boundary switching flux is produced.
#[derive(Debug, Clone)]
pub enum SigmaModel {
    Thermostat,
    Zero,
    Prescribed {
        upper: PiecewiseLinear,
        lower: PiecewiseLinear,
    },
}

/// Config resolved into domain values.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub base_params: TclParameters,
    pub heterogeneity: Heterogeneity,
    pub n: usize,
    pub seed: u64,
    pub beta: f64,
    pub agent_noise: bool,
    pub initial_band: Deadband,
    pub ambient: PiecewiseLinear,
    pub forced_rate: f64,
    pub controller: ControllerSection,
    pub schedule: SetpointSchedule,
    pub n_cells: usize,
    pub sigma_model: SigmaModel,
    pub mode: RunMode,
    pub horizon: f64,
    pub log_every: usize,
    pub temperature_samples: usize,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        toml::from_str(text).context("parsing scenario config")
    }

    pub fn resolve(&self) -> anyhow::Result<Scenario> {
        let p = &self.population;
        if p.r <= 0.0 || p.c_mean <= 0.0 || p.p <= 0.0 || p.eta <= 0.0 {
            bail!("population thermal parameters must be positive");
        }
        if self.thermal.deadband_width <= 0.0 {
            bail!("deadband width must be positive");
        }
        if self.run.horizon <= 0.0 {
            bail!("horizon must be positive");
        }
        if self.controller.a == 0.0 {
            bail!("weighting slope a must be nonzero");
        }
        if self.controller.k0 <= 0.0 {
            bail!("controller gain k0 must be positive");
        }
        if self.controller.period <= 0.0 {
            bail!("controller period must be positive");
        }
        if self.switching.rate < 0.0 {
            bail!("forced switching rate must be nonnegative");
        }
        if self.solver.n_cells < 4 {
            bail!("solver needs at least 4 cells");
        }
        let heterogeneity = match self.population.heterogeneity.as_str() {
            "log-normal" => Heterogeneity::LogNormalCapacitance {
                mean: p.c_mean,
                std_dev: p.c_std,
            },
            "normal" => Heterogeneity::NormalCapacitance {
                mean: p.c_mean,
                std_dev: p.c_std,
            },
            "uniform" => Heterogeneity::Uniform,
            other => bail!("unknown heterogeneity '{other}'"),
        };
        let sigma_model = match self.solver.sigma_model.as_str() {
            "thermostat" => SigmaModel::Thermostat,
            "zero" => SigmaModel::Zero,
            "prescribed" => SigmaModel::Prescribed {
                upper: if self.solver.sigma_upper.is_empty() {
                    PiecewiseLinear::constant(0.0)
                } else {
                    PiecewiseLinear::new(&self.solver.sigma_upper)?
                },
                lower: if self.solver.sigma_lower.is_empty() {
                    PiecewiseLinear::constant(0.0)
                } else {
                    PiecewiseLinear::new(&self.solver.sigma_lower)?
                },
            },
            other => bail!("unknown sigma model '{other}'"),
        };
        // the schedule may be written for a longer day than this run covers
        let schedule_horizon = self
            .schedule
            .moves
            .iter()
            .map(|&(_, end, _)| end)
            .fold(self.run.horizon, f64::max);
        let schedule = SetpointSchedule::new(
            self.schedule.initial,
            schedule_horizon,
            &self.schedule.moves,
        )
        .map_err(|e| anyhow::anyhow!("schedule: {e}"))?;
        schedule
            .verify_endpoint_conditions()
            .map_err(|e| anyhow::anyhow!("schedule endpoint conditions: {e}"))?;
        Ok(Scenario {
            base_params: TclParameters {
                r: p.r,
                c: p.c_mean,
                p: p.p,
                eta: p.eta,
            },
            heterogeneity,
            n: p.n,
            seed: p.seed,
            beta: self.thermal.beta,
            agent_noise: self.thermal.agent_noise,
            initial_band: Deadband::from_center(
                self.thermal.initial_center,
                self.thermal.deadband_width,
            ),
            ambient: PiecewiseLinear::new(&self.ambient.points)?,
            forced_rate: self.switching.rate,
            controller: self.controller.clone(),
            schedule,
            n_cells: self.solver.n_cells,
            sigma_model,
            mode: self.run.mode,
            horizon: self.run.horizon,
            log_every: self.run.log_every.max(1),
            temperature_samples: self.run.temperature_samples,
        })
    }
}

impl Scenario {
    /// Controller denominator floor in load units.
    pub fn denom_floor(&self) -> f64 {
        self.controller.floor_fraction * self.n as f64
    }

    /// Envelopes (M, M') of the in-domain and boundary switching masses for
    /// the L1 stability bound. M comes from the declared toggle rate; M' from
    /// the declared sigma tables, or for the thermostat closure from the
    /// worst-case advective outflow (whole population piled into one cell
    /// moving at the peak drift speed).
    pub fn disturbance_envelopes(&self) -> (f64, f64) {
        let n = self.n as f64;
        let m = self.forced_rate * n * self.horizon;
        let abs_max =
            |pl: &PiecewiseLinear| pl.points.iter().map(|&(_, v)| v.abs()).fold(0.0f64, f64::max);
        let m_prime = match &self.sigma_model {
            SigmaModel::Zero => 0.0,
            SigmaModel::Prescribed { upper, lower } => {
                abs_max(upper).max(abs_max(lower)) * self.horizon
            }
            SigmaModel::Thermostat => {
                let width = self.initial_band.width();
                let rc = self.base_params.time_constant();
                let ambient_gap = abs_max(&self.ambient) + self.initial_band.center().abs() + width;
                let drift_max = (ambient_gap + self.base_params.r * self.base_params.p) / rc;
                let slew = self.controller.u_min.abs().max(self.controller.u_max.abs());
                let c_max = (drift_max + 2.0 * slew) / width;
                c_max * n * self.n_cells as f64 * self.horizon
            }
        };
        (m, m_prime)
    }
}
