//! Photon-counting trials and `g_S,AS` estimation.
//!
//! Each trial is a single-excitation Bernoulli process: the write pulse excites
//! the ensemble with probability `chi`; given an excitation the Stokes photon
//! is detected with probability `eta_S` and the retrieved anti-Stokes photon
//! with probability `gamma * eta_AS`; background fires the anti-Stokes
//! detector with probability `B * eta_AS` in every trial. Retrieved and
//! background clicks are disjoint events, so their probabilities add and the
//! singles rates equal the closed-form rates exactly. A coincidence is a
//! Stokes click together with an anti-Stokes click in the same trial.
//!
//! The four joint outcomes of a trial are multinomial, so a block of trials is
//! sampled with three conditional binomial draws instead of trial by trial.

use alloc::vec::Vec;

use libm::sqrt;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::analytic::{gamma_loss, gamma_magnetic_pencil, gamma_motional, motional_lifetime, DetectionModel};
use crate::ensemble::{sample_ensemble, Ballistics, Retrieval};
use crate::physics::{one_d_speed, radial_speed, spin_wave_vector, BeamGeometry, EnsembleParams};
use crate::runner::ChunkRunner;
use crate::zeeman::ZeemanConfig;
use crate::{Error, Result};

/// Detector counts accumulated over `trials` write/read trials at one delay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountRecord {
    pub trials: u64,
    pub n_s: u64,
    pub n_as: u64,
    pub n_coinc: u64,
    /// s
    pub delay: f64,
}

/// Joint per-trial outcome probabilities `(S and AS, S only, AS only)`.
fn outcome_probabilities(gamma: f64, det: &DetectionModel) -> Result<[f64; 3]> {
    det.validate()?;
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::ModelOutOfRange("retrieval efficiency outside [0, 1]"));
    }
    let retrieved = gamma * det.eta_as;
    let background = det.background * det.eta_as;
    let either = retrieved + background;
    let p_s = det.chi * det.eta_s;
    let both = p_s * either;
    let stokes_only = p_s - both;
    let p_as = det.chi * either + (1.0 - det.chi) * background;
    let as_only = p_as - both;
    let rest = 1.0 - both - stokes_only - as_only;
    for p in [either, both, stokes_only, as_only, rest] {
        if !(-1e-15..=1.0 + 1e-15).contains(&p) {
            return Err(Error::ModelOutOfRange("trial probability outside [0, 1]"));
        }
    }
    Ok([both.max(0.0), stokes_only.max(0.0), as_only.max(0.0)])
}

fn binomial<R: rand_core::RngCore>(rng: &mut R, n: u64, p: f64) -> Result<u64> {
    if n == 0 || p <= 0.0 {
        return Ok(0);
    }
    if p >= 1.0 {
        return Ok(n);
    }
    let dist = Binomial::new(n, p).map_err(|_| Error::ModelOutOfRange("binomial probability"))?;
    Ok(dist.sample(rng))
}

/// Simulate `trials` trials at retrieval efficiency `gamma` with a caller-owned RNG.
pub fn simulate_counts_rng<R: rand_core::RngCore>(
    gamma: f64,
    det: &DetectionModel,
    trials: u64,
    delay: f64,
    rng: &mut R,
) -> Result<CountRecord> {
    if trials == 0 {
        return Err(Error::Domain("at least one trial is required"));
    }
    let [p_both, p_stokes, p_anti] = outcome_probabilities(gamma, det)?;
    let both = binomial(rng, trials, p_both)?;
    let mut left = trials - both;
    let mut mass = 1.0 - p_both;
    let stokes = if mass > 0.0 {
        binomial(rng, left, (p_stokes / mass).min(1.0))?
    } else {
        0
    };
    left -= stokes;
    mass -= p_stokes;
    let anti = if mass > 0.0 {
        binomial(rng, left, (p_anti / mass).min(1.0))?
    } else {
        0
    };
    Ok(CountRecord {
        trials,
        n_s: both + stokes,
        n_as: both + anti,
        n_coinc: both,
        delay,
    })
}

pub fn simulate_counts(gamma: f64, det: &DetectionModel, trials: u64, seed: u64) -> Result<CountRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_counts_rng(gamma, det, trials, 0.0, &mut rng)
}

/// `g_S,AS` estimate with its Poisson error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationEstimate {
    pub g: f64,
    pub sigma: f64,
}

/// `g = n_c N / (n_s n_as)`, `sigma = g sqrt(1/n_c + 1/n_s + 1/n_as)`.
pub fn estimate_g(record: &CountRecord) -> Result<CorrelationEstimate> {
    if record.n_coinc == 0 || record.n_s == 0 || record.n_as == 0 {
        return Err(Error::InsufficientStatistics { record: *record });
    }
    let (nc, ns, nas) = (record.n_coinc as f64, record.n_s as f64, record.n_as as f64);
    let g = nc * record.trials as f64 / (ns * nas);
    Ok(CorrelationEstimate {
        g,
        sigma: g * sqrt(1.0 / nc + 1.0 / ns + 1.0 / nas),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    /// s
    pub delay: f64,
    pub g: f64,
    pub sigma_g: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissingPoint {
    pub delay: f64,
    pub reason: Error,
}

/// Measured `g_S,AS` versus storage time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DecayCurve {
    points: Vec<CurvePoint>,
    missing: Vec<MissingPoint>,
}

impl DecayCurve {
    /// Delays must be strictly increasing and every sigma finite and positive.
    pub fn new(points: Vec<CurvePoint>) -> Result<Self> {
        Self::with_missing(points, Vec::new())
    }

    pub fn with_missing(points: Vec<CurvePoint>, missing: Vec<MissingPoint>) -> Result<Self> {
        if points.windows(2).any(|w| !(w[1].delay > w[0].delay)) {
            return Err(Error::Domain("curve delays must be strictly increasing"));
        }
        for p in &points {
            if !(p.delay.is_finite() && p.g.is_finite()) {
                return Err(Error::Domain("curve values must be finite"));
            }
            if !(p.sigma_g > 0.0 && p.sigma_g.is_finite()) {
                return Err(Error::Domain("curve errors must be positive"));
            }
        }
        Ok(Self { points, missing })
    }

    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }

    pub fn missing(&self) -> &[MissingPoint] {
        &self.missing
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// How the retrieval efficiency at each delay is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GammaEngine {
    /// Closed-form product of the motional, magnetic and loss laws.
    #[default]
    Analytic,
    /// Particle Monte Carlo over `ensemble.atom_count` atoms.
    MonteCarlo,
}

/// A full experimental configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub ensemble: EnsembleParams,
    pub geometry: BeamGeometry,
    pub zeeman: ZeemanConfig,
    pub detection: DetectionModel,
    /// m
    pub pencil_length: f64,
    pub ballistics: Ballistics,
    pub engine: GammaEngine,
}

impl Scenario {
    /// Retrieval efficiency at each delay. `seed` selects the Monte-Carlo sample.
    pub fn gamma_curve<R: ChunkRunner>(&self, runner: &R, delays: &[f64], seed: u64) -> Result<Vec<f64>> {
        let sw = spin_wave_vector(&self.geometry, &self.ensemble.species)?;
        match self.engine {
            GammaEngine::Analytic => {
                let v_s = one_d_speed(&self.ensemble)?;
                let v_r = radial_speed(&self.ensemble)?;
                let tau_d = motional_lifetime(&sw, v_s)?;
                let kappa = self.zeeman.differential_coefficient()? * self.zeeman.field_gradient;
                delays
                    .iter()
                    .map(|&t| {
                        Ok(gamma_motional(t, tau_d)?
                            * gamma_loss(t, self.ensemble.cloud_radius, v_r)?
                            * gamma_magnetic_pencil(t, kappa, self.pencil_length, v_s)?)
                    })
                    .collect()
            }
            GammaEngine::MonteCarlo => {
                let sample = sample_ensemble(&self.ensemble, self.pencil_length, seed)?;
                let retrieval = Retrieval {
                    sample: &sample,
                    spin_wave: &sw,
                    zeeman: &self.zeeman,
                    waist: self.ensemble.cloud_radius,
                    ballistics: self.ballistics,
                };
                delays.iter().map(|&t| retrieval.combined_with(runner, t)).collect()
            }
        }
    }
}

fn point_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Simulate a full `g_S,AS` decay curve.
///
/// Point `i` draws its counts from its own RNG stream derived from
/// `(seed, i)`; the Monte-Carlo sample (if any) uses `seed` directly. A point
/// whose counts cannot be turned into an estimate is recorded as missing.
pub fn synthesize_curve<R: ChunkRunner>(
    runner: &R,
    scenario: &Scenario,
    delays: &[f64],
    trials_per_point: u64,
    seed: u64,
) -> Result<DecayCurve> {
    if delays.is_empty() {
        return Err(Error::Domain("at least one delay is required"));
    }
    if delays.windows(2).any(|w| !(w[1] > w[0])) || delays[0] < 0.0 {
        return Err(Error::Domain("delays must be non-negative and strictly increasing"));
    }
    if trials_per_point == 0 {
        return Err(Error::Domain("at least one trial per point is required"));
    }
    let gammas = scenario.gamma_curve(runner, delays, seed)?;
    let outcomes = runner.map_indexed(delays.len(), |i| {
        let mut rng = point_rng(seed, i);
        simulate_counts_rng(
            gammas[i].clamp(0.0, 1.0),
            &scenario.detection,
            trials_per_point,
            delays[i],
            &mut rng,
        )
        .and_then(|record| estimate_g(&record))
    });
    let mut points = Vec::with_capacity(delays.len());
    let mut missing = Vec::new();
    for (&delay, outcome) in delays.iter().zip(outcomes) {
        match outcome {
            Ok(est) => points.push(CurvePoint {
                delay,
                g: est.g,
                sigma_g: est.sigma,
            }),
            Err(reason) => missing.push(MissingPoint { delay, reason }),
        }
    }
    DecayCurve::with_missing(points, missing)
}
