//! Conservative finite-volume solver for the coupled ON/OFF density system
//! on the normalized band coordinate z in [0, 1].
//!
//! Cell-centered volumes, central diffusion, first-order upwind advection.
//! Boundary faces carry exactly the prescribed switching fluxes, so the
//! discrete mass balance of each species telescopes to the boundary and
//! source bookkeeping at round-off level:
//!
//!   d/dt (sum w dz) = sigma_upper - sigma_lower + sum delta dz
//!   d/dt (sum v dz) = -sigma_upper + sigma_lower - sum delta dz
//!
//! Fields are stored per unit z, so each species integrates to its load
//! count; sigma is then a plain mass rate (loads per hour) through the
//! corresponding face, and delta a per-cell exchange density rate.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::population::{Deadband, TclParameters};

/// Which density a value refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Species {
    On,
    Off,
}

/// Map a temperature into the normalized band coordinate.
pub fn normalize(x: f64, band: &Deadband) -> f64 {
    (x - band.lower) / band.width()
}

/// Map a normalized coordinate back to a temperature.
pub fn denormalize(z: f64, band: &Deadband) -> f64 {
    band.lower + z * band.width()
}

/// Cell-averaged ON (`w`) and OFF (`v`) densities on the uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionField {
    pub w: Vec<f64>,
    pub v: Vec<f64>,
    pub time: f64,
}

impl DistributionField {
    pub fn zeroed(n_cells: usize) -> Self {
        Self {
            w: vec![0.0; n_cells],
            v: vec![0.0; n_cells],
            time: 0.0,
        }
    }

    /// Uniform field integrating to the given species masses.
    pub fn uniform(n_cells: usize, on_mass: f64, off_mass: f64) -> Self {
        Self {
            w: vec![on_mass; n_cells],
            v: vec![off_mass; n_cells],
            time: 0.0,
        }
    }

    pub fn from_cells(w: Vec<f64>, v: Vec<f64>) -> Self {
        assert_eq!(w.len(), v.len());
        Self { w, v, time: 0.0 }
    }

    pub fn n_cells(&self) -> usize {
        self.w.len()
    }

    pub fn dz(&self) -> f64 {
        1.0 / self.n_cells() as f64
    }

    /// Center of cell `i` in z.
    pub fn cell_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dz()
    }

    pub fn on_mass(&self) -> f64 {
        self.w.iter().sum::<f64>() * self.dz()
    }

    pub fn off_mass(&self) -> f64 {
        self.v.iter().sum::<f64>() * self.dz()
    }

    pub fn total_mass(&self) -> f64 {
        self.on_mass() + self.off_mass()
    }

    pub fn l1_norm(&self, species: Species) -> f64 {
        let cells = match species {
            Species::On => &self.w,
            Species::Off => &self.v,
        };
        cells.iter().map(|x| x.abs()).sum::<f64>() * self.dz()
    }

    /// Field values at the two faces z = 0 and z = 1 by linear extrapolation
    /// from the two outermost cell averages.
    pub fn boundary_values(&self, species: Species) -> (f64, f64) {
        let cells = match species {
            Species::On => &self.w,
            Species::Off => &self.v,
        };
        let n = cells.len();
        debug_assert!(n >= 2);
        let at_zero = cells[0] - 0.5 * (cells[1] - cells[0]);
        let at_one = cells[n - 1] + 0.5 * (cells[n - 1] - cells[n - 2]);
        (at_zero, at_one)
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().chain(self.v.iter()).all(|x| x.is_finite())
    }
}

/// Affine function of z, `intercept + slope * z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub intercept: f64,
    pub slope: f64,
}

impl Affine {
    pub fn eval(&self, z: f64) -> f64 {
        self.intercept + self.slope * z
    }
}

/// Snapshot of the normalized system coefficients at one instant: hatted
/// diffusivity beta/width^2, hatted band speed u/width, the per-species
/// drift fields alpha_hat_j(z) (affine in z), the boundary switching fluxes
/// and the in-domain exchange source.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedSystem {
    pub beta_hat: f64,
    pub u_hat: f64,
    pub alpha_hat_on: Affine,
    pub alpha_hat_off: Affine,
    /// Normalized ambient temperature (x_e - lower) / width.
    pub z_e: f64,
    /// Switching flux through the z = 1 face, loads per hour into `w`.
    pub sigma_upper: f64,
    /// Switching flux through the z = 0 face, loads per hour out of `w`.
    pub sigma_lower: f64,
    /// Per-cell exchange source, added to `w` and subtracted from `v`
    /// (loads per unit z per hour). Empty means zero.
    pub delta: Vec<f64>,
}

impl NormalizedSystem {
    /// Build the snapshot from physical parameters: representative load,
    /// current band, ambient temperature, diffusivity and band speed.
    pub fn from_physical(
        params: &TclParameters,
        band: &Deadband,
        x_e: f64,
        beta: f64,
        u: f64,
    ) -> Self {
        let width = band.width();
        let z_e = (x_e - band.lower) / width;
        let coeff = 1.0 / (params.time_constant() * width);
        let slope = -coeff * width;
        let on_intercept = coeff * (z_e * width - params.r * params.p);
        let off_intercept = coeff * z_e * width;
        Self {
            beta_hat: beta / (width * width),
            u_hat: u / width,
            alpha_hat_on: Affine {
                intercept: on_intercept,
                slope,
            },
            alpha_hat_off: Affine {
                intercept: off_intercept,
                slope,
            },
            z_e,
            sigma_upper: 0.0,
            sigma_lower: 0.0,
            delta: Vec::new(),
        }
    }

    /// Build directly from hatted coefficients (manufactured-solution and
    /// stress configurations).
    pub fn from_parts(beta_hat: f64, u_hat: f64, alpha_hat_on: Affine, alpha_hat_off: Affine) -> Self {
        Self {
            beta_hat,
            u_hat,
            alpha_hat_on,
            alpha_hat_off,
            z_e: 0.0,
            sigma_upper: 0.0,
            sigma_lower: 0.0,
            delta: Vec::new(),
        }
    }

    pub fn with_sigma(mut self, upper: f64, lower: f64) -> Self {
        self.sigma_upper = upper;
        self.sigma_lower = lower;
        self
    }

    pub fn with_delta(mut self, delta: Vec<f64>) -> Self {
        self.delta = delta;
        self
    }

    /// Advection velocity of the species at z: alpha_hat - 2 u_hat.
    pub fn advection(&self, species: Species, z: f64) -> f64 {
        let alpha = match species {
            Species::On => self.alpha_hat_on,
            Species::Off => self.alpha_hat_off,
        };
        alpha.eval(z) - 2.0 * self.u_hat
    }

    fn max_advection(&self) -> f64 {
        let mut a = 0.0f64;
        for species in [Species::On, Species::Off] {
            for z in [0.0, 1.0] {
                a = a.max(self.advection(species, z).abs());
            }
        }
        a
    }
}

/// Largest stable explicit step for the current coefficients, with a 0.5
/// safety factor: 0.5 * dz^2 / (2 beta_hat + a_max dz).
pub fn admissible_dt(field: &DistributionField, sys: &NormalizedSystem) -> Result<f64> {
    let dz = field.dz();
    let denom = 2.0 * sys.beta_hat + sys.max_advection() * dz;
    if denom <= 0.0 {
        return Err(Error::DegenerateSystem);
    }
    Ok(0.5 * dz * dz / denom)
}

/// Per-step mass bookkeeping: exactly what the step injected through the
/// faces and exchanged in the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepBudget {
    pub dt: f64,
    pub sigma_upper: f64,
    pub sigma_lower: f64,
    /// Integral of the exchange source over the domain, loads per hour.
    pub delta_mass_rate: f64,
}

/// Exchange source of the rate model: every load toggles at rate `rho`, so
/// the net OFF->ON flow per unit z is rho * (v - w). Mass-conservative by
/// construction.
pub fn delta_model(field: &DistributionField, rho: f64) -> Vec<f64> {
    debug_assert!(rho >= 0.0);
    field
        .w
        .iter()
        .zip(field.v.iter())
        .map(|(w, v)| rho * (v - w))
        .collect()
}

/// Thermostat switching fluxes induced by the advective outflow at the band
/// edges: OFF loads reaching z = 1 turn ON, ON loads reaching z = 0 turn
/// OFF. Face densities are the linear boundary extrapolations clamped at 0.
pub fn thermostat_boundary_flux(field: &DistributionField, sys: &NormalizedSystem) -> (f64, f64) {
    let (w0, _) = field.boundary_values(Species::On);
    let (_, v1) = field.boundary_values(Species::Off);
    let c_off_top = sys.advection(Species::Off, 1.0);
    let c_on_bottom = sys.advection(Species::On, 0.0);
    let sigma_upper = c_off_top.max(0.0) * v1.max(0.0);
    let sigma_lower = (-c_on_bottom).max(0.0) * w0.max(0.0);
    (sigma_upper, sigma_lower)
}

fn species_fluxes(
    cells: &[f64],
    sys: &NormalizedSystem,
    species: Species,
    dz: f64,
    fluxes: &mut [f64],
) {
    let n = cells.len();
    // Interior faces: J = c * w_upwind - beta_hat * dw/dz.
    for i in 1..n {
        let z = i as f64 * dz;
        let c = sys.advection(species, z);
        let upwind = if c > 0.0 { cells[i - 1] } else { cells[i] };
        fluxes[i] = c * upwind - sys.beta_hat * (cells[i] - cells[i - 1]) / dz;
    }
    // Boundary faces carry the prescribed switching fluxes; the sign flips
    // between species because what leaves one state enters the other.
    let sign = match species {
        Species::On => -1.0,
        Species::Off => 1.0,
    };
    fluxes[0] = sign * sys.sigma_lower;
    fluxes[n] = sign * sys.sigma_upper;
}

fn positivity_check(cells: &[f64], species: Species, scale: f64) -> Result<()> {
    let floor = -1e-12 * scale;
    for (i, &x) in cells.iter().enumerate() {
        if x < floor {
            return Err(Error::PositivityViolation {
                species,
                index: i,
                value: x,
            });
        }
    }
    Ok(())
}

/// One conservative finite-volume step, returning the stepped field and the
/// step's mass budget.
pub fn fpe_step_with_budget(
    field: &DistributionField,
    sys: &NormalizedSystem,
    dt: f64,
) -> Result<(DistributionField, StepBudget)> {
    let admissible = admissible_dt(field, sys)?;
    if dt > admissible * (1.0 + 1e-9) {
        return Err(Error::CflViolation { dt, admissible });
    }
    let n = field.n_cells();
    let dz = field.dz();
    debug_assert!(sys.delta.is_empty() || sys.delta.len() == n);

    let mut fluxes = vec![0.0; n + 1];
    let mut next = field.clone();

    let mut scale = 1.0f64;
    for &x in field.w.iter().chain(field.v.iter()) {
        scale = scale.max(x.abs());
    }

    species_fluxes(&field.w, sys, Species::On, dz, &mut fluxes);
    for i in 0..n {
        let source = if sys.delta.is_empty() { 0.0 } else { sys.delta[i] };
        next.w[i] = field.w[i] - dt / dz * (fluxes[i + 1] - fluxes[i]) + dt * source;
    }
    species_fluxes(&field.v, sys, Species::Off, dz, &mut fluxes);
    for i in 0..n {
        let source = if sys.delta.is_empty() { 0.0 } else { sys.delta[i] };
        next.v[i] = field.v[i] - dt / dz * (fluxes[i + 1] - fluxes[i]) - dt * source;
    }

    positivity_check(&next.w, Species::On, scale)?;
    positivity_check(&next.v, Species::Off, scale)?;
    next.time = field.time + dt;

    let delta_mass_rate = sys.delta.iter().sum::<f64>() * dz;
    Ok((
        next,
        StepBudget {
            dt,
            sigma_upper: sys.sigma_upper,
            sigma_lower: sys.sigma_lower,
            delta_mass_rate,
        },
    ))
}

/// One conservative finite-volume step.
pub fn fpe_step(field: &DistributionField, sys: &NormalizedSystem, dt: f64) -> Result<DistributionField> {
    fpe_step_with_budget(field, sys, dt).map(|(f, _)| f)
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

    fn band() -> Deadband {
        Deadband {
            lower: 19.75,
            upper: 20.25,
        }
    }

    #[test]
    fn normalize_maps_band_to_unit_interval() {
        let b = band();
        assert_eq!(normalize(19.75, &b), 0.0);
        assert_eq!(normalize(20.25, &b), 1.0);
    }

    #[test]
    fn alpha_hat_matches_unnormalized_drift() {
        // identity: alpha_hat_j(z) = alpha_j(x) / width at x = z*width + lower
        let p = table_params();
        let b = band();
        let sys = NormalizedSystem::from_physical(&p, &b, 32.0, 0.1, 0.0);
        for k in 0..=10 {
            let z = k as f64 / 10.0;
            let x = denormalize(z, &b);
            let alpha_on = (32.0 - x - p.r * p.p) / p.time_constant();
            let alpha_off = (32.0 - x) / p.time_constant();
            assert!((sys.alpha_hat_on.eval(z) - alpha_on / b.width()).abs() < 1e-12);
            assert!((sys.alpha_hat_off.eval(z) - alpha_off / b.width()).abs() < 1e-12);
        }
    }

    #[test]
    fn admissible_dt_pure_diffusion() {
        // beta = 0.1, width 0.5 => beta_hat = 0.4; dz = 0.01
        let field = DistributionField::zeroed(100);
        let sys = NormalizedSystem::from_parts(
            0.4,
            0.0,
            Affine {
                intercept: 0.0,
                slope: 0.0,
            },
            Affine {
                intercept: 0.0,
                slope: 0.0,
            },
        );
        let dt = admissible_dt(&field, &sys).unwrap();
        assert!((dt - 6.25e-5).abs() < 1e-18, "{dt}");
    }

    #[test]
    fn admissible_dt_quarters_on_refinement() {
        let sys = NormalizedSystem::from_parts(
            0.4,
            0.0,
            Affine {
                intercept: 0.0,
                slope: 0.0,
            },
            Affine {
                intercept: 0.0,
                slope: 0.0,
            },
        );
        let coarse = admissible_dt(&DistributionField::zeroed(100), &sys).unwrap();
        let fine = admissible_dt(&DistributionField::zeroed(200), &sys).unwrap();
        assert!((fine / coarse - 0.25).abs() < 1e-12);
    }

    #[test]
    fn admissible_dt_degenerate_system() {
        let field = DistributionField::zeroed(10);
        let sys = NormalizedSystem::from_parts(
            0.0,
            0.0,
            Affine {
                intercept: 0.0,
                slope: 0.0,
            },
            Affine {
                intercept: 0.0,
                slope: 0.0,
            },
        );
        assert_eq!(admissible_dt(&field, &sys), Err(Error::DegenerateSystem));
    }

    #[test]
    fn zero_field_stays_zero() {
        let field = DistributionField::zeroed(50);
        let sys = NormalizedSystem::from_physical(&table_params(), &band(), 32.0, 0.1, 0.0);
        let dt = admissible_dt(&field, &sys).unwrap();
        let next = fpe_step(&field, &sys, dt).unwrap();
        assert!(next.w.iter().all(|&x| x == 0.0));
        assert!(next.v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn cfl_violation_names_admissible_step() {
        let field = DistributionField::uniform(50, 1.0, 1.0);
        let sys = NormalizedSystem::from_physical(&table_params(), &band(), 32.0, 0.1, 0.0);
        let admissible = admissible_dt(&field, &sys).unwrap();
        match fpe_step(&field, &sys, admissible * 2.0) {
            Err(Error::CflViolation { admissible: a, .. }) => {
                assert!((a - admissible).abs() < 1e-18)
            }
            other => panic!("expected CFL violation, got {other:?}"),
        }
    }

    #[test]
    fn one_step_mass_change_matches_budget() {
        // discrete telescoping: d(mass) = dt*(sigma_up - sigma_lo + sum delta dz)
        let n = 64;
        let mut field = DistributionField::zeroed(n);
        for i in 0..n {
            let z = field.cell_center(i);
            field.w[i] = 2.0 + (6.0 * z).sin().abs() * 3.0;
            field.v[i] = 1.5 + z * z;
        }
        let delta = delta_model(&field, 0.8);
        let sys = NormalizedSystem::from_physical(&table_params(), &band(), 30.0, 0.1, -0.2)
            .with_sigma(1.3, 0.7)
            .with_delta(delta);
        let dt = admissible_dt(&field, &sys).unwrap();
        let (next, budget) = fpe_step_with_budget(&field, &sys, dt).unwrap();

        let expected_dw = dt * (budget.sigma_upper - budget.sigma_lower + budget.delta_mass_rate);
        let expected_dv = -expected_dw;
        let scale = field.total_mass().max(1.0);
        assert!(
            ((next.on_mass() - field.on_mass()) - expected_dw).abs() < 1e-12 * scale,
            "dw {} vs {}",
            next.on_mass() - field.on_mass(),
            expected_dw
        );
        assert!(((next.off_mass() - field.off_mass()) - expected_dv).abs() < 1e-12 * scale);
    }

    #[test]
    fn rate_model_source_properties() {
        let n = 32;
        let mut field = DistributionField::zeroed(n);
        for i in 0..n {
            let z = field.cell_center(i);
            field.w[i] = 1.0 + z;
            field.v[i] = 2.0 - z;
        }
        // symmetric fields cancel
        let sym = DistributionField::uniform(n, 3.0, 3.0);
        assert!(delta_model(&sym, 1.7).iter().all(|&d| d == 0.0));
        // zero rate cancels
        assert!(delta_model(&field, 0.0).iter().all(|&d| d == 0.0));
        // where w > v the source drains w
        let rho = 0.9;
        let delta = delta_model(&field, rho);
        for ((&w, &v), &d) in field.w.iter().zip(&field.v).zip(&delta) {
            if w > v {
                assert!(d < 0.0);
            }
        }
        // total source mass equals rho * (off_mass - on_mass)
        let total: f64 = delta.iter().sum::<f64>() * field.dz();
        let expected = rho * (field.off_mass() - field.on_mass());
        assert!((total - expected).abs() < 1e-12);
    }

    #[test]
    fn positivity_under_cfl_and_rate_condition() {
        let n = 40;
        let mut field = DistributionField::zeroed(n);
        for i in 0..n {
            let z = field.cell_center(i);
            field.w[i] = (1.0 - 2.0 * (z - 0.5).abs()).max(0.0);
            field.v[i] = 0.2 + 0.1 * z;
        }
        let rho = 2.0;
        let mut sys = NormalizedSystem::from_physical(&table_params(), &band(), 31.0, 0.1, 0.1);
        let dt = admissible_dt(&field, &sys).unwrap().min(1.0 / rho);
        let mut f = field;
        for _ in 0..400 {
            sys.delta = delta_model(&f, rho);
            f = fpe_step(&f, &sys, dt).unwrap();
            for &x in f.w.iter().chain(f.v.iter()) {
                assert!(x >= -1e-12);
            }
        }
    }

    #[test]
    fn boundary_values_extrapolate_linearly() {
        // a field linear in z extrapolates exactly to its face values
        let n = 10;
        let mut field = DistributionField::zeroed(n);
        for i in 0..n {
            let z = field.cell_center(i);
            field.w[i] = 1.0 + 3.0 * z;
            field.v[i] = 5.0 - 2.0 * z;
        }
        let (w0, w1) = field.boundary_values(Species::On);
        assert!((w0 - 1.0).abs() < 1e-12);
        assert!((w1 - 4.0).abs() < 1e-12);
        let (v0, v1) = field.boundary_values(Species::Off);
        assert!((v0 - 5.0).abs() < 1e-12);
        assert!((v1 - 3.0).abs() < 1e-12);
    }

    #[test]
    fn overdrawn_source_reports_positivity_violation() {
        let field = DistributionField::uniform(20, 0.1, 5.0);
        let sys = NormalizedSystem::from_physical(&table_params(), &band(), 30.0, 0.1, 0.0)
            .with_delta(alloc::vec![-1.0e4; 20]);
        let dt = admissible_dt(&field, &sys).unwrap();
        match fpe_step(&field, &sys, dt) {
            Err(Error::PositivityViolation {
                species: Species::On,
                ..
            }) => {}
            other => panic!("expected positivity violation, got {other:?}"),
        }
    }

    #[test]
    fn thermostat_closure_conserves_total_mass() {
        let n = 50;
        let field = DistributionField::uniform(n, 5.0, 5.0);
        let mut sys = NormalizedSystem::from_physical(&table_params(), &band(), 30.0, 0.1, 0.0);
        let dt = admissible_dt(&field, &sys).unwrap().min(0.5);
        let mut f = field;
        let n0 = f.total_mass();
        for _ in 0..2000 {
            let (su, sl) = thermostat_boundary_flux(&f, &sys);
            sys.sigma_upper = su;
            sys.sigma_lower = sl;
            sys.delta = delta_model(&f, 1.0);
            f = fpe_step(&f, &sys, dt).unwrap();
        }
        assert!((f.total_mass() - n0).abs() < 1e-10 * n0);
        // ON fraction settles near the duty ratio (x_e - center) / (R P)
        let duty = (30.0 - 20.0) / 28.0;
        assert!(
            (f.on_mass() / n0 - duty).abs() < 0.08,
            "on fraction {}",
            f.on_mass() / n0
        );
    }
}
