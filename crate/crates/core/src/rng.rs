//! Counter-based random streams.
//!
//! Every draw is addressed by (seed, agent, step, channel), so stepping the
//! population in parallel or serially, or replaying a single agent, produces
//! bit-identical results. The mixer is splitmix64 applied over the key words.

use libm::{cos, log, sqrt};

const TWO_PI: f64 = core::f64::consts::TAU;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix(seed: u64, agent: u64, step: u64, channel: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(splitmix64(seed) ^ agent) ^ step) ^ channel)
}

/// Uniform in the open interval (0, 1).
fn to_unit(word: u64) -> f64 {
    ((word >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// Keyed source of per-agent, per-step random draws.
#[derive(Debug, Clone, Copy)]
pub struct CounterRng {
    seed: u64,
}

/// Draw channels. Distinct channels of the same (agent, step) key are
/// independent.
pub mod channel {
    pub const TEMP_INIT: u64 = 0;
    pub const MODE_INIT: u64 = 1;
    pub const CAPACITANCE: u64 = 2;
    pub const FORCED_SWITCH: u64 = 3;
    pub const NOISE: u64 = 4;
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw in (0, 1).
    pub fn uniform(&self, agent: u64, step: u64, channel: u64) -> f64 {
        to_unit(mix(self.seed, agent, step, channel))
    }

    /// Standard normal draw (Box-Muller on two sub-words of the channel).
    pub fn normal(&self, agent: u64, step: u64, channel: u64) -> f64 {
        let u1 = to_unit(mix(self.seed, agent, step, channel));
        let u2 = to_unit(mix(self.seed, agent, step, channel ^ 0x8000_0000_0000_0000));
        sqrt(-2.0 * log(u1)) * cos(TWO_PI * u2)
    }

    /// Bernoulli draw with the given probability.
    pub fn bernoulli(&self, agent: u64, step: u64, channel: u64, p: f64) -> bool {
        self.uniform(agent, step, channel) < p
    }
}
