//! Particle Monte Carlo of a thermal cloud carrying a stored spin wave.
//!
//! Atoms move ballistically (collisions are rare on millisecond scales). Every
//! retrieval efficiency is a sum over atoms evaluated in fixed chunks of
//! [`CHUNK_LEN`](crate::runner::CHUNK_LEN) atoms; partial sums are folded in
//! chunk order, so results do not depend on the runner.
//!
//! Transverse geometry: the spin wave is written through the detection mode,
//! so excited atoms are distributed like the mode intensity `exp(-2 rho^2 / r0^2)`
//! (per-axis standard deviation `r0 / 2`), and read-out weights each atom by
//! the same intensity profile at its displaced position.

use alloc::vec::Vec;

use libm::{cos, exp, sin};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::physics::{one_d_speed, EnsembleParams, SpinWaveVector, STANDARD_GRAVITY};
use crate::runner::{chunk_count, chunk_range, ChunkRunner, Sequential};
use crate::zeeman::ZeemanConfig;
use crate::{Error, Result};

const INV_E: f64 = 0.367_879_441_171_442_33;

/// Default longitudinal extent of the interaction region, m.
pub const DEFAULT_PENCIL_LENGTH: f64 = 3e-3;

/// Per-atom initial positions and velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomSample {
    positions: Vec<[f64; 3]>,
    velocities: Vec<[f64; 3]>,
}

impl AtomSample {
    pub fn from_parts(positions: Vec<[f64; 3]>, velocities: Vec<[f64; 3]>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::Domain("sample must contain at least one atom"));
        }
        if positions.len() != velocities.len() {
            return Err(Error::Domain("positions and velocities differ in length"));
        }
        Ok(Self { positions, velocities })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn velocities(&self) -> &[[f64; 3]] {
        &self.velocities
    }
}

/// Draw `params.atom_count` atoms: Maxwell-Boltzmann velocities, Gaussian
/// transverse positions following the mode intensity of waist
/// `params.cloud_radius`, uniform longitudinal positions over `pencil_length`.
pub fn sample_ensemble(params: &EnsembleParams, pencil_length: f64, seed: u64) -> Result<AtomSample> {
    params.validate()?;
    if !(pencil_length > 0.0 && pencil_length.is_finite()) {
        return Err(Error::Domain("pencil length must be positive"));
    }
    let v_s = one_d_speed(params)?;
    let sigma_r = 0.5 * params.cloud_radius;
    let along = Uniform::new(-0.5 * pencil_length, 0.5 * pencil_length)
        .map_err(|_| Error::Domain("pencil length must be positive"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = params.atom_count;
    let mut positions = Vec::with_capacity(n);
    let mut velocities = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = StandardNormal.sample(&mut rng);
        let y: f64 = StandardNormal.sample(&mut rng);
        let z = along.sample(&mut rng);
        positions.push([sigma_r * x, sigma_r * y, z]);
        let vx: f64 = StandardNormal.sample(&mut rng);
        let vy: f64 = StandardNormal.sample(&mut rng);
        let vz: f64 = StandardNormal.sample(&mut rng);
        velocities.push([v_s * vx, v_s * vy, v_s * vz]);
    }
    AtomSample::from_parts(positions, velocities)
}

/// Free-flight options.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Ballistics {
    /// Let atoms fall along `-x` (transverse to the pencil).
    pub gravity: bool,
}

impl Ballistics {
    fn displacement(&self, velocity: &[f64; 3], delay: f64) -> [f64; 3] {
        let sag = if self.gravity {
            0.5 * STANDARD_GRAVITY * delay * delay
        } else {
            0.0
        };
        [velocity[0] * delay - sag, velocity[1] * delay, velocity[2] * delay]
    }
}

/// Which observables a pass over the sample accumulates.
#[derive(Debug, Clone, Copy)]
struct Probe {
    delay: f64,
    wave_vector: Option<[f64; 3]>,
    /// Differential Zeeman coefficient times field gradient, rad/s/m.
    phase_gradient: Option<f64>,
    waist: Option<f64>,
    ballistics: Ballistics,
}

#[derive(Debug, Clone, Copy, Default)]
struct Partial {
    motional: [f64; 2],
    magnetic: [f64; 2],
    weight_start: f64,
    weight_now: f64,
}

impl Partial {
    fn merge(mut self, other: &Partial) -> Partial {
        self.motional[0] += other.motional[0];
        self.motional[1] += other.motional[1];
        self.magnetic[0] += other.magnetic[0];
        self.magnetic[1] += other.magnetic[1];
        self.weight_start += other.weight_start;
        self.weight_now += other.weight_now;
        self
    }
}

fn accumulate_chunk(sample: &AtomSample, range: core::ops::Range<usize>, probe: &Probe) -> Partial {
    let mut acc = Partial::default();
    let t = probe.delay;
    for (r, v) in sample.positions[range.clone()].iter().zip(&sample.velocities[range]) {
        let d = probe.ballistics.displacement(v, t);
        if let Some(k) = probe.wave_vector {
            let phase = k[0] * d[0] + k[1] * d[1] + k[2] * d[2];
            acc.motional[0] += cos(phase);
            acc.motional[1] += sin(phase);
        }
        if let Some(kappa) = probe.phase_gradient {
            // Bias-field phase is common to all atoms and dropped.
            let phase = kappa * (r[2] * t + 0.5 * v[2] * t * t);
            acc.magnetic[0] += cos(phase);
            acc.magnetic[1] += sin(phase);
        }
        if let Some(w) = probe.waist {
            let scale = 2.0 / (w * w);
            let rho0 = r[0] * r[0] + r[1] * r[1];
            let x = r[0] + d[0];
            let y = r[1] + d[1];
            acc.weight_start += exp(-scale * rho0);
            acc.weight_now += exp(-scale * (x * x + y * y));
        }
    }
    acc
}

fn accumulate<R: ChunkRunner>(runner: &R, sample: &AtomSample, probe: &Probe) -> Partial {
    let len = sample.len();
    let partials = runner.map_indexed(chunk_count(len), |i| {
        accumulate_chunk(sample, chunk_range(i, len), probe)
    });
    partials.iter().fold(Partial::default(), Partial::merge)
}

fn modulus_squared(sum: [f64; 2], n: usize) -> f64 {
    let n = n as f64;
    let (re, im) = (sum[0] / n, sum[1] / n);
    (re * re + im * im).min(1.0)
}

fn check_delay(delay: f64) -> Result<()> {
    if !(delay >= 0.0 && delay.is_finite()) {
        return Err(Error::Domain("delay must be non-negative"));
    }
    Ok(())
}

fn check_waist(waist: f64) -> Result<()> {
    if !(waist > 0.0 && waist.is_finite()) {
        return Err(Error::Domain("mode waist must be positive"));
    }
    Ok(())
}

/// Per-factor retrieval efficiencies evaluated on one trajectory realization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencyBreakdown {
    pub motional: f64,
    pub magnetic: f64,
    pub survival: f64,
}

impl EfficiencyBreakdown {
    pub fn combined(&self) -> f64 {
        self.motional * self.magnetic * self.survival
    }
}

/// Everything needed to evaluate the retrieval efficiency of a stored spin wave.
#[derive(Debug, Clone, Copy)]
pub struct Retrieval<'a> {
    pub sample: &'a AtomSample,
    pub spin_wave: &'a SpinWaveVector,
    pub zeeman: &'a ZeemanConfig,
    pub waist: f64,
    pub ballistics: Ballistics,
}

impl Retrieval<'_> {
    pub fn breakdown_with<R: ChunkRunner>(&self, runner: &R, delay: f64) -> Result<EfficiencyBreakdown> {
        check_delay(delay)?;
        check_waist(self.waist)?;
        let coefficient = self.zeeman.differential_coefficient()?;
        let probe = Probe {
            delay,
            wave_vector: Some(self.spin_wave.components()),
            phase_gradient: Some(coefficient * self.zeeman.field_gradient),
            waist: Some(self.waist),
            ballistics: self.ballistics,
        };
        let acc = accumulate(runner, self.sample, &probe);
        let n = self.sample.len();
        Ok(EfficiencyBreakdown {
            motional: modulus_squared(acc.motional, n),
            magnetic: modulus_squared(acc.magnetic, n),
            survival: acc.weight_now / acc.weight_start,
        })
    }

    pub fn combined_with<R: ChunkRunner>(&self, runner: &R, delay: f64) -> Result<f64> {
        Ok(self.breakdown_with(runner, delay)?.combined())
    }
}

/// `|(1/N) sum_j exp(i Δk·v_j δt)|^2`.
pub fn motional_retrieval_efficiency(sample: &AtomSample, sw: &SpinWaveVector, delay: f64) -> Result<f64> {
    motional_retrieval_efficiency_with(&Sequential, sample, sw, delay)
}

pub fn motional_retrieval_efficiency_with<R: ChunkRunner>(
    runner: &R,
    sample: &AtomSample,
    sw: &SpinWaveVector,
    delay: f64,
) -> Result<f64> {
    check_delay(delay)?;
    let probe = Probe {
        delay,
        wave_vector: Some(sw.components()),
        phase_gradient: None,
        waist: None,
        ballistics: Ballistics::default(),
    };
    Ok(modulus_squared(
        accumulate(runner, sample, &probe).motional,
        sample.len(),
    ))
}

/// Fraction of intensity-weighted spin-wave population still inside the
/// detection mode, normalized to its value at zero delay.
pub fn mode_overlap_survival(sample: &AtomSample, waist: f64, delay: f64) -> Result<f64> {
    mode_overlap_survival_with(&Sequential, sample, waist, delay, Ballistics::default())
}

pub fn mode_overlap_survival_with<R: ChunkRunner>(
    runner: &R,
    sample: &AtomSample,
    waist: f64,
    delay: f64,
    ballistics: Ballistics,
) -> Result<f64> {
    check_delay(delay)?;
    check_waist(waist)?;
    let probe = Probe {
        delay,
        wave_vector: None,
        phase_gradient: None,
        waist: Some(waist),
        ballistics,
    };
    let acc = accumulate(runner, sample, &probe);
    Ok(acc.weight_now / acc.weight_start)
}

/// `|(1/N) sum_j exp(i phi_j)|^2` with `phi_j` the differential Zeeman phase
/// picked up along atom `j`'s path through the bias field plus gradient.
pub fn magnetic_dephasing_factor(sample: &AtomSample, config: &ZeemanConfig, delay: f64) -> Result<f64> {
    magnetic_dephasing_factor_with(&Sequential, sample, config, delay)
}

pub fn magnetic_dephasing_factor_with<R: ChunkRunner>(
    runner: &R,
    sample: &AtomSample,
    config: &ZeemanConfig,
    delay: f64,
) -> Result<f64> {
    check_delay(delay)?;
    let kappa = config.differential_coefficient()? * config.field_gradient;
    let probe = Probe {
        delay,
        wave_vector: None,
        phase_gradient: Some(kappa),
        waist: None,
        ballistics: Ballistics::default(),
    };
    Ok(modulus_squared(
        accumulate(runner, sample, &probe).magnetic,
        sample.len(),
    ))
}

/// Product of the motional, magnetic and mode-survival factors on one realization.
pub fn combined_efficiency(
    sample: &AtomSample,
    sw: &SpinWaveVector,
    config: &ZeemanConfig,
    waist: f64,
    delay: f64,
) -> Result<f64> {
    Retrieval {
        sample,
        spin_wave: sw,
        zeeman: config,
        waist,
        ballistics: Ballistics::default(),
    }
    .combined_with(&Sequential, delay)
}

/// First time at which a decreasing-from-one efficiency curve reaches `1/e`.
///
/// The curve is scanned on a uniform grid up to `t_max` and the crossing is
/// refined by bisection. Returns `None` if it never drops to `1/e`.
pub fn one_over_e_time<F>(mut efficiency: F, t_max: f64) -> Result<Option<f64>>
where
    F: FnMut(f64) -> Result<f64>,
{
    const SCAN: usize = 64;
    let mut lo = 0.0;
    let mut hi = None;
    for i in 1..=SCAN {
        let t = t_max * i as f64 / SCAN as f64;
        if efficiency(t)? <= INV_E {
            hi = Some(t);
            break;
        }
        lo = t;
    }
    let Some(mut hi) = hi else {
        return Ok(None);
    };
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if efficiency(mid)? <= INV_E {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// `1/e` time of the magnetic dephasing factor, searched up to `t_max`.
pub fn magnetic_lifetime_with<R: ChunkRunner>(
    runner: &R,
    sample: &AtomSample,
    config: &ZeemanConfig,
    t_max: f64,
) -> Result<Option<f64>> {
    one_over_e_time(|t| magnetic_dephasing_factor_with(runner, sample, config, t), t_max)
}

/// Field gradient giving the non-clock pair in `config` a magnetic `1/e` time
/// of `target_lifetime` on `sample`. Bisection in `log(gradient)`.
pub fn calibrate_gradient_with<R: ChunkRunner>(
    runner: &R,
    sample: &AtomSample,
    config: &ZeemanConfig,
    target_lifetime: f64,
) -> Result<f64> {
    if !(target_lifetime > 0.0 && target_lifetime.is_finite()) {
        return Err(Error::Domain("target lifetime must be positive"));
    }
    if config.differential_coefficient()? == 0.0 {
        return Err(Error::Domain("clock pairs cannot be calibrated against a gradient"));
    }
    let t_max = 4.0 * target_lifetime;
    let lifetime = |gradient: f64| -> Result<f64> {
        let cfg = ZeemanConfig {
            field_gradient: gradient,
            ..*config
        };
        Ok(magnetic_lifetime_with(runner, sample, &cfg, t_max)?.unwrap_or(f64::INFINITY))
    };
    // Stronger gradient dephases faster.
    let (mut lo, mut hi) = (1e-8_f64, 1e2_f64);
    if lifetime(hi)? > target_lifetime || lifetime(lo)? < target_lifetime {
        return Err(Error::Domain("target lifetime outside the calibratable range"));
    }
    for _ in 0..48 {
        let mid = libm::sqrt(lo * hi);
        if lifetime(mid)? > target_lifetime {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(libm::sqrt(lo * hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{radial_speed, spin_wave_vector, BeamGeometry, SpeciesConstants};
    use crate::zeeman::{Sublevel, CLOCK_PAIRS};

    fn params(n: usize) -> EnsembleParams {
        EnsembleParams {
            atom_count: n,
            ..EnsembleParams::default()
        }
    }

    #[test]
    fn velocity_moments_follow_boltzmann() {
        let p = params(100_000);
        let sample = sample_ensemble(&p, DEFAULT_PENCIL_LENGTH, 1).unwrap();
        let v_s = one_d_speed(&p).unwrap();
        let n = sample.len() as f64;
        for axis in 0..3 {
            let mean = sample.velocities().iter().map(|v| v[axis]).sum::<f64>() / n;
            let var = sample
                .velocities()
                .iter()
                .map(|v| (v[axis] - mean) * (v[axis] - mean))
                .sum::<f64>()
                / (n - 1.0);
            assert!(mean.abs() < 5.0 * v_s / n.sqrt(), "axis {axis} mean {mean}");
            assert!((var.sqrt() / 0.0978 - 1.0).abs() < 0.02);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = params(5_000);
        let a = sample_ensemble(&p, 1e-3, 42).unwrap();
        let b = sample_ensemble(&p, 1e-3, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_ensemble(&p, 1e-3, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn frozen_cloud_limit() {
        let p = EnsembleParams {
            temperature: 1e-15,
            ..params(100_000)
        };
        let sample = sample_ensemble(&p, 1e-3, 7).unwrap();
        for v in sample.velocities() {
            let speed = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            assert!(speed < 1e-5);
        }
    }

    #[test]
    fn zero_atoms_rejected() {
        assert!(matches!(sample_ensemble(&params(0), 1e-3, 1), Err(Error::Domain(_))));
        assert!(AtomSample::from_parts(Vec::new(), Vec::new()).is_err());
        assert!(AtomSample::from_parts(alloc::vec![[0.0; 3]], Vec::new()).is_err());
    }

    #[test]
    fn motional_trivial_limits() {
        let sample = sample_ensemble(&params(10_000), 1e-3, 3).unwrap();
        let sw = spin_wave_vector(&BeamGeometry::from_degrees(3.0), &SpeciesConstants::RB87).unwrap();
        assert_eq!(motional_retrieval_efficiency(&sample, &sw, 0.0).unwrap(), 1.0);

        let frozen = AtomSample::from_parts(sample.positions().to_vec(), alloc::vec![[0.0; 3]; sample.len()]).unwrap();
        assert_eq!(motional_retrieval_efficiency(&frozen, &sw, 1e-3).unwrap(), 1.0);
        assert!(motional_retrieval_efficiency(&sample, &sw, -1.0).is_err());
    }

    #[test]
    fn motional_matches_gaussian_at_lifetime() {
        let p = params(1_000_000);
        let sample = sample_ensemble(&p, DEFAULT_PENCIL_LENGTH, 11).unwrap();
        let sw = spin_wave_vector(&BeamGeometry::from_degrees(3.0), &p.species).unwrap();
        let tau = 1.0 / (sw.magnitude * one_d_speed(&p).unwrap());
        assert!((tau - 24.7e-6).abs() < 0.1e-6);
        let gamma = motional_retrieval_efficiency(&sample, &sw, tau).unwrap();
        assert!((gamma - INV_E).abs() < 5.0 / (p.atom_count as f64).sqrt(), "{gamma}");
    }

    #[test]
    fn survival_limits_and_scaling() {
        let p = params(100_000);
        let sample = sample_ensemble(&p, DEFAULT_PENCIL_LENGTH, 5).unwrap();
        assert_eq!(mode_overlap_survival(&sample, 100e-6, 0.0).unwrap(), 1.0);
        assert!(mode_overlap_survival(&sample, 0.0, 1e-3).is_err());

        let v_r = radial_speed(&p).unwrap();
        let tau_l = (core::f64::consts::E - 1.0).sqrt() * 100e-6 / v_r;
        assert!((tau_l - 950e-6).abs() < 10e-6);
        let s = mode_overlap_survival(&sample, 100e-6, 950e-6).unwrap();
        assert!((s / INV_E - 1.0).abs() < 0.1, "{s}");

        // T/4 halves v_r: same survival at twice the delay (identical normals).
        let cold = EnsembleParams {
            temperature: p.temperature / 4.0,
            ..p
        };
        let cold_sample = sample_ensemble(&cold, DEFAULT_PENCIL_LENGTH, 5).unwrap();
        let hot = mode_overlap_survival(&sample, 100e-6, 400e-6).unwrap();
        let slow = mode_overlap_survival(&cold_sample, 100e-6, 800e-6).unwrap();
        assert!((hot - slow).abs() < 1e-12);
    }

    #[test]
    fn gravity_only_lowers_survival() {
        let sample = sample_ensemble(&params(20_000), DEFAULT_PENCIL_LENGTH, 9).unwrap();
        let free = mode_overlap_survival_with(&Sequential, &sample, 100e-6, 2e-3, Ballistics::default()).unwrap();
        let falling =
            mode_overlap_survival_with(&Sequential, &sample, 100e-6, 2e-3, Ballistics { gravity: true }).unwrap();
        assert!(falling < free);
    }

    #[test]
    fn clock_pairs_never_dephase() {
        let sample = sample_ensemble(&params(8_192), DEFAULT_PENCIL_LENGTH, 2).unwrap();
        for (g, s) in CLOCK_PAIRS {
            let cfg = ZeemanConfig::new(g, s, 3.2e-4, 0.05);
            for t in [0.0, 1e-5, 1e-3] {
                assert_eq!(magnetic_dephasing_factor(&sample, &cfg, t).unwrap(), 1.0);
            }
        }
    }

    #[test]
    fn uniform_field_is_a_global_phase() {
        let sample = sample_ensemble(&params(8_192), DEFAULT_PENCIL_LENGTH, 2).unwrap();
        let cfg = ZeemanConfig::new(Sublevel::new(1, -1), Sublevel::new(2, -1), 3.2e-4, 0.0);
        assert_eq!(magnetic_dephasing_factor(&sample, &cfg, 1e-3).unwrap(), 1.0);
    }

    #[test]
    fn combined_is_product_and_starts_at_one() {
        let p = params(20_000);
        let sample = sample_ensemble(&p, DEFAULT_PENCIL_LENGTH, 4).unwrap();
        let sw = spin_wave_vector(&BeamGeometry::from_degrees(0.2), &p.species).unwrap();
        let cfg = ZeemanConfig::new(Sublevel::new(1, -1), Sublevel::new(2, -1), 3.2e-4, 0.01);
        assert_eq!(combined_efficiency(&sample, &sw, &cfg, 100e-6, 0.0).unwrap(), 1.0);
        let t = 50e-6;
        let product = motional_retrieval_efficiency(&sample, &sw, t).unwrap()
            * magnetic_dephasing_factor(&sample, &cfg, t).unwrap()
            * mode_overlap_survival(&sample, 100e-6, t).unwrap();
        let combined = combined_efficiency(&sample, &sw, &cfg, 100e-6, t).unwrap();
        assert!((combined - product).abs() < 1e-15);
        assert!((0.0..=1.0).contains(&combined));
    }

    #[test]
    fn collinear_clock_pair_is_loss_limited() {
        let p = params(20_000);
        let sample = sample_ensemble(&p, DEFAULT_PENCIL_LENGTH, 8).unwrap();
        let sw = spin_wave_vector(&BeamGeometry::from_degrees(0.0), &p.species).unwrap();
        let cfg = ZeemanConfig::new(Sublevel::new(1, 1), Sublevel::new(2, -1), 3.2e-4, 0.01);
        for t in [0.5e-3, 1e-3, 2e-3] {
            let motional = motional_retrieval_efficiency(&sample, &sw, t).unwrap();
            assert!(motional > 0.999, "{motional}");
            let combined = combined_efficiency(&sample, &sw, &cfg, 100e-6, t).unwrap();
            let survival = mode_overlap_survival(&sample, 100e-6, t).unwrap();
            assert!((combined - survival * motional).abs() < 1e-14);
        }
    }

    #[test]
    fn one_over_e_time_of_known_curve() {
        let t = one_over_e_time(|t| Ok(libm::exp(-(t / 2.0) * (t / 2.0))), 10.0)
            .unwrap()
            .unwrap();
        assert!((t - 2.0).abs() < 1e-9);
        assert_eq!(one_over_e_time(|_| Ok(1.0), 1.0).unwrap(), None);
    }
}
