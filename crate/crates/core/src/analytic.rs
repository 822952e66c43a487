//! Closed-form decay laws, lifetimes and photon-correlation relations.

use core::f64::consts::{E, SQRT_2};

use libm::{exp, sqrt};

use crate::physics::SpinWaveVector;
use crate::{Error, Result};

/// `sqrt(e - 1)`: the loss law `1/(1 + (v_r t / r0)^2)` reaches `1/e` at `t = sqrt(e-1) r0 / v_r`.
pub const LOSS_LIFETIME_FACTOR: f64 = 1.310_832_494_432_086_2;

/// Retrieval-efficiency decay law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecayModel {
    /// `exp(-t^2 / tau_d^2)`
    GaussianMotional { tau_d: f64 },
    /// `1 / (1 + a t^2)`
    LorentzianLoss { a: f64 },
    /// `exp(-t^2 / tau_d^2) / (1 + a t^2)`
    Combined { tau_d: f64, a: f64 },
}

impl DecayModel {
    pub fn validate(&self) -> Result<()> {
        let (tau, a) = match *self {
            DecayModel::GaussianMotional { tau_d } => (Some(tau_d), None),
            DecayModel::LorentzianLoss { a } => (None, Some(a)),
            DecayModel::Combined { tau_d, a } => (Some(tau_d), Some(a)),
        };
        if let Some(tau) = tau {
            if !(tau > 0.0) {
                return Err(Error::Domain("tau_d must be positive"));
            }
        }
        if let Some(a) = a {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::Domain("A must be non-negative"));
            }
        }
        Ok(())
    }

    pub fn gamma(&self, delay: f64) -> Result<f64> {
        self.validate()?;
        Ok(match *self {
            DecayModel::GaussianMotional { tau_d } => gaussian(delay, tau_d),
            DecayModel::LorentzianLoss { a } => 1.0 / (1.0 + a * delay * delay),
            DecayModel::Combined { tau_d, a } => gaussian(delay, tau_d) / (1.0 + a * delay * delay),
        })
    }
}

fn gaussian(delay: f64, tau_d: f64) -> f64 {
    let x = delay / tau_d;
    exp(-x * x)
}

/// `exp(-(t / tau_d)^2)`.
pub fn gamma_motional(delay: f64, tau_d: f64) -> Result<f64> {
    DecayModel::GaussianMotional { tau_d }.gamma(delay)
}

/// `tau_D = 1 / (Δk v_s)`.
pub fn motional_lifetime(sw: &SpinWaveVector, v_s: f64) -> Result<f64> {
    if !(sw.magnitude > 0.0) {
        return Err(Error::DegenerateGeometry);
    }
    if !(v_s > 0.0) {
        return Err(Error::Domain("thermal speed must be positive"));
    }
    Ok(1.0 / (sw.magnitude * v_s))
}

/// `r0^2 / r^2(t) = 1 / (1 + (v_r / r0)^2 t^2)` for a cloud expanding out of the mode.
pub fn gamma_loss(delay: f64, r0: f64, v_r: f64) -> Result<f64> {
    DecayModel::LorentzianLoss {
        a: loss_coefficient(r0, v_r)?,
    }
    .gamma(delay)
}

/// `A = (v_r / r0)^2`.
pub fn loss_coefficient(r0: f64, v_r: f64) -> Result<f64> {
    if !(r0 > 0.0) {
        return Err(Error::Domain("mode radius must be positive"));
    }
    if !(v_r >= 0.0) {
        return Err(Error::Domain("radial speed must be non-negative"));
    }
    let ratio = v_r / r0;
    Ok(ratio * ratio)
}

/// `tau_L = sqrt(e - 1) r0 / v_r`.
pub fn loss_lifetime(r0: f64, v_r: f64) -> Result<f64> {
    if !(r0 > 0.0) {
        return Err(Error::Domain("mode radius must be positive"));
    }
    if !(v_r > 0.0) {
        return Err(Error::Domain("radial speed must be positive"));
    }
    Ok(LOSS_LIFETIME_FACTOR * r0 / v_r)
}

/// Magnetic dephasing of a non-clock pair in a linear gradient along a uniformly
/// filled pencil of length `pencil_length`, for Maxwell-Boltzmann atoms:
/// `sinc^2(kappa L t / 2) * exp(-(kappa v_s t^2 / 2)^2)` with `kappa` the
/// differential Zeeman coefficient times the gradient (rad/s/m).
pub fn gamma_magnetic_pencil(delay: f64, phase_gradient: f64, pencil_length: f64, v_s: f64) -> Result<f64> {
    if !(pencil_length > 0.0) {
        return Err(Error::Domain("pencil length must be positive"));
    }
    let u = 0.5 * phase_gradient * pencil_length * delay;
    let sinc = if u == 0.0 { 1.0 } else { libm::sin(u) / u };
    let w = 0.5 * phase_gradient * v_s * delay * delay;
    Ok(sinc * sinc * exp(-w * w))
}

/// Excitation and detection parameters of the write/read sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionModel {
    /// Excitation probability per write pulse
    pub chi: f64,
    pub eta_s: f64,
    pub eta_as: f64,
    /// Anti-Stokes background, in units of a retrieved excitation
    pub background: f64,
}

impl DetectionModel {
    pub fn validate(&self) -> Result<()> {
        for (value, what) in [
            (self.chi, "chi must lie in [0, 1]"),
            (self.eta_s, "eta_s must lie in [0, 1]"),
            (self.eta_as, "eta_as must lie in [0, 1]"),
            (self.background, "background must lie in [0, 1]"),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::Domain(what));
            }
        }
        Ok(())
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Domain("retrieval efficiency must lie in [0, 1]"));
    }
    Ok(())
}

/// `g_S,AS = 1 + gamma / (chi gamma + B)`.
pub fn cross_correlation(gamma: f64, det: &DetectionModel) -> Result<f64> {
    check_gamma(gamma)?;
    det.validate()?;
    let denom = det.chi * gamma + det.background;
    if gamma == 0.0 {
        return Ok(1.0);
    }
    if denom == 0.0 {
        return Err(Error::DegenerateModel("chi * gamma + B vanishes"));
    }
    Ok(1.0 + gamma / denom)
}

/// Linear form `1 + gamma / B` of [`cross_correlation`], valid for `chi gamma << B`.
pub fn linearized_cross_correlation(gamma: f64, det: &DetectionModel) -> Result<f64> {
    check_gamma(gamma)?;
    det.validate()?;
    if gamma == 0.0 {
        return Ok(1.0);
    }
    if det.background == 0.0 {
        return Err(Error::DegenerateModel("linear form needs a non-zero background"));
    }
    Ok(1.0 + gamma / det.background)
}

/// Stokes, anti-Stokes and coincidence probabilities per trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionRates {
    pub p_s: f64,
    pub p_as: f64,
    pub p_s_as: f64,
}

impl DetectionRates {
    /// `p_S,AS / (p_S p_AS)`.
    pub fn cross_correlation(&self) -> Result<f64> {
        let denom = self.p_s * self.p_as;
        if denom == 0.0 {
            return Err(Error::DegenerateModel("zero singles rate"));
        }
        Ok(self.p_s_as / denom)
    }
}

/// Per-trial rates with Stokes-channel noise neglected.
pub fn rates_from_model(gamma: f64, det: &DetectionModel) -> Result<DetectionRates> {
    check_gamma(gamma)?;
    det.validate()?;
    let p_s = det.chi * det.eta_s;
    let p_as = det.chi * gamma * det.eta_as + det.background * det.eta_as;
    let p_s_as = det.chi * gamma * det.eta_s * det.eta_as + p_s * p_as;
    for p in [p_s, p_as, p_s_as] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::ModelOutOfRange("detection probability exceeds one"));
        }
    }
    Ok(DetectionRates { p_s, p_as, p_s_as })
}

/// Heralded single-photon autocorrelation `alpha ~ 4 / (g - 1)`.
pub fn heralded_autocorrelation(g: f64) -> Result<f64> {
    if !(g > 1.0) {
        return Err(Error::Domain("heralded autocorrelation needs g > 1"));
    }
    Ok(4.0 / (g - 1.0))
}

/// CHSH parameter `S ~ 2 sqrt(2) (g - 1) / (g + 1)`.
pub fn bell_parameter(g: f64) -> Result<f64> {
    if !(g >= 1.0) {
        return Err(Error::Domain("Bell parameter needs g >= 1"));
    }
    if g.is_infinite() {
        return Ok(2.0 * SQRT_2);
    }
    Ok(2.0 * SQRT_2 * (g - 1.0) / (g + 1.0))
}

/// True iff `g_S,AS^2 > g_S,S g_AS,AS`.
pub fn cauchy_schwarz_violated(g_s_as: f64, g_s_s: f64, g_as_as: f64) -> Result<bool> {
    if !(g_s_as >= 0.0 && g_s_s >= 0.0 && g_as_as >= 0.0) {
        return Err(Error::Domain("correlation functions must be non-negative"));
    }
    Ok(g_s_as * g_s_as > g_s_s * g_as_as)
}

/// `g_S,AS > 2`: nonclassical for ideal thermal autocorrelations of 2.
pub fn nonclassical_threshold(g: f64) -> bool {
    g > 2.0
}

/// `1/e` lifetime of the combined law, solved by bisection.
pub fn combined_lifetime(tau_d: f64, a: f64) -> Result<f64> {
    if !(a >= 0.0 && a.is_finite()) {
        return Err(Error::Domain("A must be non-negative"));
    }
    if !(tau_d > 0.0) {
        return Err(Error::Domain("tau_d must be positive"));
    }
    if a == 0.0 {
        if tau_d.is_infinite() {
            return Err(Error::Domain("no decay: 1/e crossing is not bracketed"));
        }
        return Ok(tau_d);
    }
    let loss_only = sqrt((E - 1.0) / a);
    if tau_d.is_infinite() {
        return Ok(loss_only);
    }
    let inv_e = 1.0 / E;
    // Both factors are <= 1, so the crossing is no later than either alone.
    let (mut lo, mut hi) = (0.0_f64, tau_d.min(loss_only));
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if gaussian(mid, tau_d) / (1.0 + a * mid * mid) > inv_e {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}
