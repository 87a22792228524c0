//! Agent-level thermostatic load model and population synthesis.
//!
//! Each load is a first-order thermal circuit dx/dt = (x_e - x - s*R*P)/(R*C)
//! switched by a deadband thermostat with optional random forced toggles.
//! Temperatures advance by the exact exponential solution, so the update is
//! unconditionally stable and composes exactly over sub-steps.

use alloc::vec::Vec;

use libm::{exp, log, sqrt};

use crate::error::{Error, Result};
use crate::fpe::DistributionField;
use crate::rng::{channel, CounterRng};

/// Thermal parameters of one load.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TclParameters {
    /// Thermal resistance, degC per kW.
    pub r: f64,
    /// Thermal capacitance, kWh per degC.
    pub c: f64,
    /// Thermal power when ON, kW.
    pub p: f64,
    /// Load efficiency (coefficient of performance), dimensionless.
    pub eta: f64,
}

impl TclParameters {
    /// Thermal time constant R*C in hours.
    pub fn time_constant(&self) -> f64 {
        self.r * self.c
    }

    /// Electrical power drawn when ON, kW.
    pub fn electrical_power(&self) -> f64 {
        self.p / self.eta
    }
}

/// Operating state of a load.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Off,
    On,
}

impl Mode {
    pub fn bit(self) -> u8 {
        match self {
            Mode::Off => 0,
            Mode::On => 1,
        }
    }

    fn from_bit(bit: u8) -> Self {
        if bit & 1 == 1 {
            Mode::On
        } else {
            Mode::Off
        }
    }

    pub fn toggled(self) -> Self {
        match self {
            Mode::Off => Mode::On,
            Mode::On => Mode::Off,
        }
    }
}

/// One thermostatic load: temperature, operating state and parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TclAgent {
    pub temp: f64,
    pub mode: Mode,
    pub params: TclParameters,
}

/// The thermostat deadband [lower, upper]. Width stays constant; both bounds
/// move together under set-point control.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deadband {
    pub lower: f64,
    pub upper: f64,
}

impl Deadband {
    pub fn from_center(center: f64, width: f64) -> Self {
        debug_assert!(width > 0.0);
        Self {
            lower: center - width / 2.0,
            upper: center + width / 2.0,
        }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    /// Translate both bounds by the same amount.
    pub fn shift(&mut self, delta: f64) {
        self.lower += delta;
        self.upper += delta;
    }
}

/// Exact exponential advance of the thermal state over `dt` hours, with an
/// optional Gaussian increment of variance 2*beta*dt (`noise` carries the
/// diffusion intensity and a pre-drawn standard normal).
pub fn step_tcl(agent: &TclAgent, x_e: f64, dt: f64, noise: Option<(f64, f64)>) -> Result<TclAgent> {
    debug_assert!(dt > 0.0);
    let equilibrium = x_e - agent.mode.bit() as f64 * agent.params.r * agent.params.p;
    let decay = exp(-dt / agent.params.time_constant());
    let mut temp = equilibrium + (agent.temp - equilibrium) * decay;
    if let Some((beta, z)) = noise {
        temp += z * sqrt(2.0 * beta * dt);
    }
    if !temp.is_finite() {
        return Err(Error::NonFiniteTemperature { value: temp });
    }
    Ok(TclAgent { temp, ..*agent })
}

/// Thermostat switching rule. Outside the band the bound decides; inside,
/// the forced-switch bit toggles the state via one-bit binary addition with
/// the overflow discarded: (s AND r) + (s OR r) mod 2.
pub fn switch_logic(temp: f64, s_prev: Mode, r: bool, band: &Deadband) -> Mode {
    if temp >= band.upper {
        Mode::On
    } else if temp <= band.lower {
        Mode::Off
    } else {
        let s = s_prev.bit();
        let r = r as u8;
        Mode::from_bit(((s & r) + (s | r)) & 1)
    }
}

/// How the population's thermal capacitance is spread.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Heterogeneity {
    /// Log-normal with the given mean and standard deviation of C, truncated
    /// at +-2.5 sigma in log space (resampled outside the window).
    LogNormalCapacitance { mean: f64, std_dev: f64 },
    /// Normal with the given mean and standard deviation, resampled until
    /// positive.
    NormalCapacitance { mean: f64, std_dev: f64 },
    /// All loads share the base parameters.
    Uniform,
}

const LOG_TRUNCATION_SIGMAS: f64 = 2.5;
const RESAMPLE_LIMIT: u64 = 64;

fn draw_capacitance(het: Heterogeneity, base_c: f64, rng: &CounterRng, agent: u64) -> f64 {
    match het {
        Heterogeneity::Uniform => base_c,
        Heterogeneity::LogNormalCapacitance { mean, std_dev } => {
            let sigma2 = log(1.0 + (std_dev / mean) * (std_dev / mean));
            let mu = log(mean) - sigma2 / 2.0;
            let sigma = sqrt(sigma2);
            for attempt in 0..RESAMPLE_LIMIT {
                let z = rng.normal(agent, attempt, channel::CAPACITANCE);
                if z.abs() <= LOG_TRUNCATION_SIGMAS {
                    return exp(mu + sigma * z);
                }
            }
            exp(mu)
        }
        Heterogeneity::NormalCapacitance { mean, std_dev } => {
            for attempt in 0..RESAMPLE_LIMIT {
                let c = mean + std_dev * rng.normal(agent, attempt, channel::CAPACITANCE);
                if c > 0.0 {
                    return c;
                }
            }
            mean
        }
    }
}

/// Synthesize `n` loads: capacitances per the heterogeneity choice,
/// temperatures i.i.d. uniform over the band, modes i.i.d. Bernoulli(1/2).
/// Fully determined by the seed.
pub fn build_population(
    n: usize,
    base: TclParameters,
    het: Heterogeneity,
    band: &Deadband,
    seed: u64,
) -> Result<Vec<TclAgent>> {
    if n == 0 {
        return Err(Error::EmptyPopulation);
    }
    let rng = CounterRng::new(seed);
    let mut agents = Vec::with_capacity(n);
    for i in 0..n {
        let id = i as u64;
        let c = draw_capacitance(het, base.c, &rng, id);
        let temp = band.lower + band.width() * rng.uniform(id, 0, channel::TEMP_INIT);
        let mode = if rng.bernoulli(id, 0, channel::MODE_INIT, 0.5) {
            Mode::On
        } else {
            Mode::Off
        };
        agents.push(TclAgent {
            temp,
            mode,
            params: TclParameters { c, ..base },
        });
    }
    Ok(agents)
}

/// Per-step switching tallies for disturbance accounting. Boundary events
/// happen at the band edges; forced events carry the toggling agent's
/// temperature so any affine weight can be applied afterwards.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SwitchStats {
    /// Loads forced ON at the upper bound this step.
    pub boundary_to_on: u32,
    /// Loads forced OFF at the lower bound this step.
    pub boundary_to_off: u32,
    /// Net count of in-band forced toggles, OFF->ON minus ON->OFF.
    pub forced_net: f64,
    /// Net temperature-weighted count of forced toggles, same sign convention.
    pub forced_temp_net: f64,
    /// Largest |dx/dt| across the population at the start of the step.
    pub max_drift_rate: f64,
}

/// Advance the whole population one step: exponential drift, optional noise,
/// then boundary/forced switching. Draws are addressed by (seed, slice
/// position, step), so any execution order over the full population slice
/// reproduces the same result bit-for-bit; a chunked parallel driver must
/// key by global position.
#[allow(clippy::too_many_arguments)]
pub fn step_population(
    agents: &mut [TclAgent],
    band: &Deadband,
    x_e: f64,
    dt: f64,
    forced_rate: f64,
    noise_beta: Option<f64>,
    rng: &CounterRng,
    step: u64,
) -> Result<SwitchStats> {
    let toggle_prob = if forced_rate > 0.0 {
        1.0 - exp(-forced_rate * dt)
    } else {
        0.0
    };
    let mut stats = SwitchStats::default();
    for (i, agent) in agents.iter_mut().enumerate() {
        let id = i as u64;
        let drift_rate = (x_e - agent.temp - agent.mode.bit() as f64 * agent.params.r * agent.params.p)
            / agent.params.time_constant();
        if drift_rate.abs() > stats.max_drift_rate {
            stats.max_drift_rate = drift_rate.abs();
        }
        let noise = noise_beta.map(|beta| (beta, rng.normal(id, step, channel::NOISE)));
        let stepped = step_tcl(agent, x_e, dt, noise)?;
        let r = toggle_prob > 0.0 && rng.bernoulli(id, step, channel::FORCED_SWITCH, toggle_prob);
        let new_mode = switch_logic(stepped.temp, stepped.mode, r, band);
        if new_mode != stepped.mode {
            if stepped.temp >= band.upper {
                stats.boundary_to_on += 1;
            } else if stepped.temp <= band.lower {
                stats.boundary_to_off += 1;
            } else {
                let sign = if new_mode == Mode::On { 1.0 } else { -1.0 };
                stats.forced_net += sign;
                stats.forced_temp_net += sign * stepped.temp;
            }
        }
        *agent = TclAgent {
            mode: new_mode,
            ..stepped
        };
    }
    Ok(stats)
}

/// Histogram the population onto the normalized grid: ON densities in `w`,
/// OFF densities in `v`, per unit z, so each species integrates to its head
/// count. Out-of-band agents land in the nearest edge cell.
pub fn estimate_distribution(
    agents: &[TclAgent],
    band: &Deadband,
    n_bins: usize,
) -> DistributionField {
    assert!(n_bins >= 4, "histogram needs at least 4 bins");
    let mut field = DistributionField::zeroed(n_bins);
    if agents.is_empty() {
        return field;
    }
    let dz = field.dz();
    let width = band.width();
    for agent in agents {
        let z = (agent.temp - band.lower) / width;
        let bin = if z <= 0.0 {
            0
        } else if z >= 1.0 {
            n_bins - 1
        } else {
            // z in (0,1) cannot round up to n_bins here
            (z * n_bins as f64) as usize
        };
        match agent.mode {
            Mode::On => field.w[bin] += 1.0 / dz,
            Mode::Off => field.v[bin] += 1.0 / dz,
        }
    }
    field
}

/// Aggregate electrical power of the ON loads, normalized by the maximal
/// total power of the population.
pub fn aggregate_power(agents: &[TclAgent]) -> f64 {
    let mut on = 0.0;
    let mut total = 0.0;
    for agent in agents {
        let p = agent.params.electrical_power();
        total += p;
        if agent.mode == Mode::On {
            on += p;
        }
    }
    if total > 0.0 {
        on / total
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_params() -> TclParameters {
        TclParameters {
            r: 2.0,
            c: 10.0,
            p: 14.0,
            eta: 2.5,
        }
    }

    fn agent(temp: f64, mode: Mode) -> TclAgent {
        TclAgent {
            temp,
            mode,
            params: table_params(),
        }
    }

    #[test]
    fn off_agent_at_ambient_is_in_equilibrium() {
        let a = agent(32.0, Mode::Off);
        let next = step_tcl(&a, 32.0, 0.1, None).unwrap();
        assert_eq!(next.temp, 32.0);
    }

    #[test]
    fn on_agent_follows_exact_exponential() {
        // closed form: x_eq + (x0 - x_eq) * exp(-dt/RC) with x_eq = 4
        let a = agent(20.0, Mode::On);
        let next = step_tcl(&a, 32.0, 0.1, None).unwrap();
        let expected = 4.0 + 16.0 * (-0.005f64).exp();
        assert!((next.temp - expected).abs() < 1e-14, "{}", next.temp);

        // cross-check against fine-step explicit integration
        let mut x = 20.0f64;
        let fine = 1e-6;
        let steps = (0.1 / fine) as usize;
        for _ in 0..steps {
            x += fine * (32.0 - x - 28.0) / 20.0;
        }
        assert!((next.temp - x).abs() < 1e-7, "exact {} euler {x}", next.temp);
    }

    #[test]
    fn long_horizon_reaches_equilibrium() {
        let a = agent(20.0, Mode::On);
        let next = step_tcl(&a, 32.0, 1e6, None).unwrap();
        assert!((next.temp - 4.0).abs() < 1e-9);
    }

    #[test]
    fn switch_rule_boundaries() {
        let band = Deadband {
            lower: 19.75,
            upper: 20.25,
        };
        for s in [Mode::Off, Mode::On] {
            for r in [false, true] {
                assert_eq!(switch_logic(20.30, s, r, &band), Mode::On);
                assert_eq!(switch_logic(19.60, s, r, &band), Mode::Off);
            }
        }
    }

    #[test]
    fn switch_rule_interior_truth_table() {
        let band = Deadband {
            lower: 19.75,
            upper: 20.25,
        };
        let t = 20.0;
        assert_eq!(switch_logic(t, Mode::Off, false, &band), Mode::Off);
        assert_eq!(switch_logic(t, Mode::Off, true, &band), Mode::On);
        assert_eq!(switch_logic(t, Mode::On, false, &band), Mode::On);
        // 1 AND 1 = 1, 1 OR 1 = 1, 1 + 1 overflows to 0
        assert_eq!(switch_logic(t, Mode::On, true, &band), Mode::Off);
    }

    #[test]
    fn population_statistics_match_targets() {
        let band = Deadband {
            lower: 19.75,
            upper: 20.25,
        };
        let het = Heterogeneity::LogNormalCapacitance {
            mean: 10.0,
            std_dev: 3.0,
        };
        let agents = build_population(10_000, table_params(), het, &band, 42).unwrap();
        let n = agents.len() as f64;
        let mean = agents.iter().map(|a| a.params.c).sum::<f64>() / n;
        let var = agents
            .iter()
            .map(|a| (a.params.c - mean) * (a.params.c - mean))
            .sum::<f64>()
            / (n - 1.0);
        let std = var.sqrt();
        assert!((mean - 10.0).abs() < 0.2, "mean {mean}");
        assert!((std - 3.0).abs() < 0.3, "std {std}");

        let rc_max = agents
            .iter()
            .map(|a| a.params.time_constant())
            .fold(f64::MIN, f64::max);
        let rc_min = agents
            .iter()
            .map(|a| a.params.time_constant())
            .fold(f64::MAX, f64::min);
        let ratio = rc_max / rc_min;
        assert!((2.0..=6.0).contains(&ratio), "RC ratio {ratio}");

        let on = agents.iter().filter(|a| a.mode == Mode::On).count() as f64;
        assert!((on / n - 0.5).abs() < 0.02, "ON fraction {}", on / n);
        for a in &agents {
            assert!(a.temp >= band.lower && a.temp <= band.upper);
        }
    }

    #[test]
    fn population_is_reproducible() {
        let band = Deadband {
            lower: 19.75,
            upper: 20.25,
        };
        let het = Heterogeneity::LogNormalCapacitance {
            mean: 10.0,
            std_dev: 3.0,
        };
        let a = build_population(4, table_params(), het, &band, 7).unwrap();
        let b = build_population(4, table_params(), het, &band, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_population_rejected() {
        let band = Deadband {
            lower: 19.75,
            upper: 20.25,
        };
        assert_eq!(
            build_population(0, table_params(), Heterogeneity::Uniform, &band, 1),
            Err(Error::EmptyPopulation)
        );
    }

    #[test]
    fn histogram_delta_mass() {
        let band = Deadband {
            lower: 19.75,
            upper: 20.25,
        };
        let agents = alloc::vec![agent(20.0, Mode::On); 500];
        let field = estimate_distribution(&agents, &band, 10);
        assert!((field.on_mass() - 500.0).abs() < 1e-9);
        assert_eq!(field.off_mass(), 0.0);
    }

    #[test]
    fn histogram_split_masses_within_sampling_error() {
        let band = Deadband {
            lower: 19.75,
            upper: 20.25,
        };
        let n = 10_000;
        let agents = build_population(
            n,
            table_params(),
            Heterogeneity::Uniform,
            &band,
            3,
        )
        .unwrap();
        let field = estimate_distribution(&agents, &band, 20);
        // each species is Binomial(n, 1/2): 3 sigma = 3*sqrt(n)/2 = 150
        let bound = 3.0 * (n as f64).sqrt() / 2.0;
        assert!((field.on_mass() - n as f64 / 2.0).abs() < bound);
        assert!((field.off_mass() - n as f64 / 2.0).abs() < bound);
        assert!((field.on_mass() + field.off_mass() - n as f64).abs() < 1e-9);
    }

    #[test]
    fn histogram_empty_population() {
        let band = Deadband {
            lower: 19.75,
            upper: 20.25,
        };
        let field = estimate_distribution(&[], &band, 8);
        assert_eq!(field.on_mass(), 0.0);
        assert_eq!(field.off_mass(), 0.0);
    }

    #[test]
    fn histogram_clamps_outliers_to_edge_cells() {
        let band = Deadband {
            lower: 19.75,
            upper: 20.25,
        };
        let agents = [agent(18.0, Mode::On), agent(22.0, Mode::Off)];
        let field = estimate_distribution(&agents, &band, 10);
        assert!(field.w[0] > 0.0);
        assert!(field.v[9] > 0.0);
    }

    #[test]
    fn normalized_power_extremes() {
        let all_on = alloc::vec![agent(20.0, Mode::On); 5];
        let all_off = alloc::vec![agent(20.0, Mode::Off); 5];
        assert_eq!(aggregate_power(&all_on), 1.0);
        assert_eq!(aggregate_power(&all_off), 0.0);
        let mut half = all_on.clone();
        half.extend_from_slice(&all_off);
        assert!((aggregate_power(&half) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn stepping_conserves_population() {
        let band = Deadband {
            lower: 19.75,
            upper: 20.25,
        };
        let het = Heterogeneity::LogNormalCapacitance {
            mean: 10.0,
            std_dev: 3.0,
        };
        let mut agents = build_population(500, table_params(), het, &band, 11).unwrap();
        let rng = CounterRng::new(11);
        let n0 = agents.len();
        for step in 0..200 {
            step_population(&mut agents, &band, 30.0, 1.0 / 360.0, 1.0, None, &rng, step).unwrap();
        }
        assert_eq!(agents.len(), n0);
        // every temperature within the band expanded by one step's drift
        let eps = 1.0 / 360.0 * 5.0; // generous drift envelope for table params
        for a in &agents {
            assert!(a.temp > band.lower - eps && a.temp < band.upper + eps);
        }
    }
}
