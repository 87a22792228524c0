//! Closed-loop scenario execution in three modes: agents (population plant,
//! controller fed by histograms), pde (field plant and measurement), and
//! coupled (population plant with the field model integrated alongside under
//! the same control for model-vs-plant comparison).
//!
//! Loop per controller period: evaluate the set-point trajectory, measure
//! the output, form the tracking error and the auxiliary control, evaluate
//! the band-speed control, saturate and smooth it, log, then advance the
//! band and the reconstructed reference and step the plant(s). Rows carry
//! the state as measured at the control instant; the switching-disturbance
//! aggregate in a row is the one realized over the preceding period.

use anyhow::{anyhow, Context, Result};

use tclsim_core::control::{
    advance_reference, compute_control, smooth_control, stabilizer, weighted_output_agents,
    weighted_output_field, ControllerConfig, ControllerState,
};
use tclsim_core::diagnostics::{
    check_conservation, compute_gamma, l1_bounds, ConservationLedger, ConservationReport,
    L1Report, L1Sample,
};
use tclsim_core::error::Error as CoreError;
use tclsim_core::fpe::{
    admissible_dt, delta_model, fpe_step_with_budget, thermostat_boundary_flux, DistributionField,
    NormalizedSystem, Species,
};
use tclsim_core::population::{
    aggregate_power, build_population, estimate_distribution, step_population, Deadband,
    SwitchStats, TclAgent,
};
use tclsim_core::rng::CounterRng;

use crate::scenario::{RunMode, Scenario, SigmaModel};

/// One logged sample of the closed loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub x_e: f64,
    pub u_raw: f64,
    pub u_applied: f64,
    pub x_ref: f64,
    pub x_p: f64,
    pub y: f64,
    pub y_d: f64,
    pub e: f64,
    pub power: f64,
    pub power_ref: f64,
    pub power_model: f64,
    pub n_agg: f64,
    pub l1_w: f64,
    pub l1_v: f64,
    pub gamma: f64,
}

/// Uniformly sampled time series of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub mode: RunMode,
    pub rows: Vec<LogRow>,
    /// Sampled agent temperatures per logged row (agents/coupled modes).
    pub temperature_samples: Vec<Vec<f64>>,
    pub sample_ids: Vec<usize>,
}

impl RunLog {
    pub fn has_model_power(&self) -> bool {
        matches!(self.mode, RunMode::Coupled)
    }

    pub fn has_temperature_samples(&self) -> bool {
        !self.sample_ids.is_empty()
    }
}

/// Run log plus the post-hoc diagnostic verdicts.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub log: RunLog,
    /// Species/total mass bookkeeping of the field plant (pde/coupled).
    pub conservation: Option<ConservationReport>,
    pub l1: L1Report,
    /// Largest excess of any agent temperature beyond the band expanded by
    /// one period's drift (agents/coupled; <= 0 means contained).
    pub containment_excess: Option<f64>,
    /// Envelopes used in the L1 check.
    pub m_bound: f64,
    pub m_prime_bound: f64,
}

struct FieldPlant {
    field: DistributionField,
    ledger: ConservationLedger,
    /// sigma and delta applied at the start of the last advanced period.
    last_sigma: (f64, f64),
    last_delta: Vec<f64>,
}

impl FieldPlant {
    fn new(n_cells: usize, population: f64) -> Self {
        let field = DistributionField::uniform(n_cells, population / 2.0, population / 2.0);
        let ledger = ConservationLedger::new(&field);
        Self {
            field,
            ledger,
            last_sigma: (0.0, 0.0),
            last_delta: Vec::new(),
        }
    }

    /// Advance the field by one controller period under constant band speed.
    fn advance(
        &mut self,
        scenario: &Scenario,
        band: &Deadband,
        x_e: f64,
        u: f64,
        dt_total: f64,
    ) -> Result<()> {
        let mut elapsed = 0.0;
        let mut first = true;
        let sys_base =
            NormalizedSystem::from_physical(&scenario.base_params, band, x_e, scenario.beta, u);
        while elapsed < dt_total - 1e-15 {
            let (sigma_upper, sigma_lower) = match &scenario.sigma_model {
                SigmaModel::Zero => (0.0, 0.0),
                SigmaModel::Thermostat => thermostat_boundary_flux(&self.field, &sys_base),
                SigmaModel::Prescribed { upper, lower } => {
                    let t = self.field.time;
                    (upper.eval(t), lower.eval(t))
                }
            };
            let delta = if scenario.forced_rate > 0.0 {
                delta_model(&self.field, scenario.forced_rate)
            } else {
                Vec::new()
            };
            if first {
                self.last_sigma = (sigma_upper, sigma_lower);
                self.last_delta = delta.clone();
                first = false;
            }
            let sys = sys_base
                .clone()
                .with_sigma(sigma_upper, sigma_lower)
                .with_delta(delta);
            let mut dt = admissible_dt(&self.field, &sys)
                .map_err(|e| anyhow!("solver: {e}"))?
                .min(dt_total - elapsed);
            if scenario.forced_rate > 0.0 {
                dt = dt.min(0.5 / scenario.forced_rate);
            }
            let (next, budget) = fpe_step_with_budget(&self.field, &sys, dt)
                .map_err(|e| anyhow!("solver step at t={}: {e}", self.field.time))?;
            self.ledger.record(&budget);
            self.field = next;
            elapsed += dt;
        }
        Ok(())
    }
}

struct AgentPlant {
    agents: Vec<TclAgent>,
    rng: CounterRng,
    last_stats: SwitchStats,
}

pub fn run_scenario(scenario: &Scenario) -> Result<RunResult> {
    let dt_c = scenario.controller.period;
    let n_steps = (scenario.horizon / dt_c).round() as usize;
    if n_steps == 0 {
        return Err(anyhow!("horizon shorter than one controller period"));
    }
    let population = scenario.n as f64;

    let wants_agents = matches!(scenario.mode, RunMode::Agents | RunMode::Coupled);
    let wants_field = matches!(scenario.mode, RunMode::Pde | RunMode::Coupled);

    let mut agent_plant = if wants_agents {
        let agents = build_population(
            scenario.n,
            scenario.base_params,
            scenario.heterogeneity,
            &scenario.initial_band,
            scenario.seed,
        )
        .map_err(|e| anyhow!("population: {e}"))?;
        Some(AgentPlant {
            agents,
            rng: CounterRng::new(scenario.seed),
            last_stats: SwitchStats::default(),
        })
    } else {
        None
    };
    let mut field_plant = if wants_field {
        Some(FieldPlant::new(scenario.n_cells, population))
    } else {
        None
    };

    let sample_ids: Vec<usize> = if wants_agents {
        let count = scenario.temperature_samples.min(scenario.n);
        let stride = (scenario.n / count.max(1)).max(1);
        (0..scenario.n).step_by(stride).take(count).collect()
    } else {
        Vec::new()
    };

    let ctrl_cfg = ControllerConfig {
        a: scenario.controller.a,
        k0: scenario.controller.k0,
        smoothing_window: scenario.controller.smoothing_window,
        denom_floor: scenario.denom_floor(),
    };
    let mut band = scenario.initial_band;
    let mut state = ControllerState::new(band.center(), ctrl_cfg.smoothing_window);
    let mut held_u_raw = 0.0;
    let y_d = scenario.controller.y_d;
    let p_over_eta = scenario.base_params.electrical_power();

    let mut rows: Vec<LogRow> = Vec::with_capacity(n_steps / scenario.log_every + 2);
    let mut temperature_samples = Vec::new();
    let mut l1_history = Vec::new();
    let mut containment_excess: Option<f64> = if wants_agents { Some(f64::MIN) } else { None };

    for step in 0..n_steps {
        let t = step as f64 * dt_c;
        let sample = scenario
            .schedule
            .eval(t)
            .map_err(|e| anyhow!("schedule at t={t}: {e}"))?;
        let x_p = sample.value;
        let b = -ctrl_cfg.a * x_p;
        let b_dot = -ctrl_cfg.a * sample.rate;
        let x_e = scenario.ambient.eval(t);

        // measurement: histogram in agents/coupled, the field itself in pde
        let meas_field = match (&agent_plant, &field_plant, scenario.mode) {
            (Some(p), _, RunMode::Agents | RunMode::Coupled) => {
                estimate_distribution(&p.agents, &band, scenario.n_cells)
            }
            (_, Some(f), RunMode::Pde) => f.field.clone(),
            _ => unreachable!(),
        };
        let y = match (&agent_plant, scenario.mode) {
            (Some(p), RunMode::Agents | RunMode::Coupled) => {
                weighted_output_agents(&p.agents, ctrl_cfg.a, b)
            }
            _ => weighted_output_field(&meas_field, &band, ctrl_cfg.a, b, p_over_eta),
        };
        let e = y - y_d;
        state.error = e;
        let phi = stabilizer(e, 0.0, ctrl_cfg.k0);

        let ctrl_sys =
            NormalizedSystem::from_physical(&scenario.base_params, &band, x_e, scenario.beta, 0.0);
        let u_raw = match compute_control(
            &meas_field,
            &band,
            &scenario.base_params,
            &ctrl_sys,
            &ctrl_cfg,
            b_dot,
            phi,
        ) {
            Ok(u) => u,
            Err(CoreError::ControlSingularity { .. }) => held_u_raw,
            Err(e) => return Err(anyhow!("control at t={t}: {e}")),
        };
        held_u_raw = u_raw;

        // supervisory set-point servo and actuator slew limits
        let anchored = u_raw + scenario.controller.anchor_gain * (x_p - state.x_ref);
        let u_cmd = anchored
            .max(scenario.controller.u_min)
            .min(scenario.controller.u_max);
        let u_applied = smooth_control(&mut state, u_cmd);

        if step % scenario.log_every == 0 {
            let (power, n_agg, l1_w, l1_v, gamma) = match scenario.mode {
                RunMode::Pde => {
                    let plant = field_plant.as_ref().unwrap();
                    let f = &plant.field;
                    let gamma = compute_gamma(
                        f,
                        &band,
                        ctrl_cfg.a,
                        b,
                        p_over_eta,
                        &plant.last_delta,
                        plant.last_sigma.0,
                        plant.last_sigma.1,
                    );
                    (
                        f.on_mass() / population,
                        f.total_mass(),
                        f.l1_norm(Species::On),
                        f.l1_norm(Species::Off),
                        gamma,
                    )
                }
                RunMode::Agents | RunMode::Coupled => {
                    let plant = agent_plant.as_ref().unwrap();
                    let stats = &plant.last_stats;
                    let sigma_upper = stats.boundary_to_on as f64 / dt_c;
                    let sigma_lower = stats.boundary_to_off as f64 / dt_c;
                    let interior =
                        (ctrl_cfg.a * stats.forced_temp_net + b * stats.forced_net) / dt_c;
                    let gamma = p_over_eta
                        * ((ctrl_cfg.a * band.upper + b) * sigma_upper
                            - (ctrl_cfg.a * band.lower + b) * sigma_lower
                            + interior);
                    (
                        aggregate_power(&plant.agents),
                        meas_field.total_mass(),
                        meas_field.l1_norm(Species::On),
                        meas_field.l1_norm(Species::Off),
                        gamma,
                    )
                }
            };
            let power_model = field_plant
                .as_ref()
                .map(|p| p.field.on_mass() / population)
                .unwrap_or(f64::NAN);
            let power_ref =
                ((x_e - x_p) / (scenario.base_params.r * scenario.base_params.p)).clamp(0.0, 1.0);
            let row = LogRow {
                t,
                x_e,
                u_raw,
                u_applied,
                x_ref: state.x_ref,
                x_p,
                y,
                y_d,
                e,
                power,
                power_ref,
                power_model,
                n_agg,
                l1_w,
                l1_v,
                gamma,
            };
            if !row_is_finite(&row, scenario.mode) {
                return Err(anyhow!("non-finite log row at t={t}"));
            }
            rows.push(row);
            l1_history.push(L1Sample {
                t,
                w_norm: l1_w,
                v_norm: l1_v,
            });
            if let Some(plant) = agent_plant.as_ref() {
                temperature_samples
                    .push(sample_ids.iter().map(|&i| plant.agents[i].temp).collect());
            }
        }

        let center_before = band.center();
        advance_reference(&mut state, &mut band, u_applied, dt_c);
        let band_shift = (band.center() - center_before).abs();

        // plants
        if let Some(plant) = agent_plant.as_mut() {
            let noise = scenario.agent_noise.then_some(scenario.beta);
            let stats = step_population(
                &mut plant.agents,
                &band,
                x_e,
                dt_c,
                scenario.forced_rate,
                noise,
                &plant.rng,
                step as u64,
            )
            .map_err(|e| anyhow!("population step at t={t}: {e}"))?;
            plant.last_stats = stats;
            if let Some(excess) = containment_excess.as_mut() {
                // one period's drift: the loads' own motion plus the band's
                let drift_bound = dt_c * stats.max_drift_rate + band_shift + 1e-12;
                let mut dev = f64::MIN;
                for a in &plant.agents {
                    dev = dev.max(a.temp - band.upper).max(band.lower - a.temp);
                }
                *excess = excess.max(dev - drift_bound);
            }
        }
        if let Some(plant) = field_plant.as_mut() {
            plant.advance(scenario, &band, x_e, u_applied, dt_c)?;
        }
    }

    let conservation = field_plant
        .as_ref()
        .map(|p| check_conservation(&p.ledger, &p.field));

    let (m_decl, m_prime_decl) = scenario.disturbance_envelopes();
    // the realized switching mass is itself a valid (tighter) envelope
    let (m_bound, m_prime_bound) = if let Some(p) = field_plant.as_ref() {
        (
            p.ledger.cum_abs_delta.min(m_decl),
            p.ledger
                .cum_abs_sigma_upper
                .max(p.ledger.cum_abs_sigma_lower)
                .min(m_prime_decl),
        )
    } else {
        (m_decl, m_prime_decl)
    };
    let (initial_w, initial_v) = l1_history
        .first()
        .map(|s| (s.w_norm, s.v_norm))
        .unwrap_or((population / 2.0, population / 2.0));
    let l1 = l1_bounds(&l1_history, initial_w, initial_v, m_bound, m_prime_bound);

    let log = RunLog {
        mode: scenario.mode,
        rows,
        temperature_samples,
        sample_ids,
    };
    Ok(RunResult {
        log,
        conservation,
        l1,
        containment_excess: containment_excess.filter(|&x| x != f64::MIN),
        m_bound,
        m_prime_bound,
    })
}

fn row_is_finite(row: &LogRow, mode: RunMode) -> bool {
    let core = [
        row.t, row.x_e, row.u_raw, row.u_applied, row.x_ref, row.x_p, row.y, row.y_d, row.e,
        row.power, row.power_ref, row.n_agg, row.l1_w, row.l1_v, row.gamma,
    ];
    core.iter().all(|x| x.is_finite())
        && (!matches!(mode, RunMode::Coupled) || row.power_model.is_finite())
}

/// Convenience used by tests: run a scenario built from a TOML string.
pub fn run_from_toml(text: &str) -> Result<RunResult> {
    let cfg = crate::scenario::ScenarioConfig::from_toml(text)?;
    let scenario = cfg.resolve().context("resolving scenario")?;
    run_scenario(&scenario)
}
