//! Weighted least-squares fits of `g_S,AS(t) = 1 + C * gamma(t)`.
//!
//! Three decay laws are supported: Gaussian `exp(-t^2/tau^2)`, Lorentzian
//! `1/(1 + A t^2)` and their product. The optimizer is Levenberg-Marquardt with
//! Marquardt diagonal scaling and analytic Jacobians; parameter errors come
//! from the inverse of the weighted normal matrix at the optimum.

#![allow(clippy::needless_range_loop)]

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::f64::consts::E;

use libm::{exp, log, sqrt};

use crate::analytic::{combined_lifetime, motional_lifetime, DecayModel};
use crate::photon::{CurvePoint, DecayCurve};
use crate::physics::{spin_wave_vector, temperature_from_speed, BeamGeometry, SpeciesConstants};
use crate::{Error, Result};

const C_IDX: usize = 0;
const TAU_IDX: usize = 1;
const A_IDX: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// `1 + C exp(-t^2/tau^2)`
    Gaussian,
    /// `1 + C / (1 + A t^2)`
    Lorentzian,
    /// `1 + C exp(-t^2/tau^2) / (1 + A t^2)`
    Combined,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Gaussian => "gaussian",
            ModelKind::Lorentzian => "lorentzian",
            ModelKind::Combined => "combined",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "gaussian" => Some(ModelKind::Gaussian),
            "lorentzian" => Some(ModelKind::Lorentzian),
            "combined" => Some(ModelKind::Combined),
            _ => None,
        }
    }

    fn has_tau(&self) -> bool {
        !matches!(self, ModelKind::Lorentzian)
    }

    fn has_a(&self) -> bool {
        !matches!(self, ModelKind::Gaussian)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Hold `A` at this value (s^-2) instead of fitting it.
    pub fixed_a: Option<f64>,
    /// Drop the earliest delay before fitting.
    pub exclude_first: bool,
    pub max_iterations: usize,
    /// Converged once every relative parameter step is below this.
    pub step_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            fixed_a: None,
            exclude_first: false,
            max_iterations: 200,
            step_tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Parameter {
    pub value: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub kind: ModelKind,
    pub c: Parameter,
    /// s
    pub tau_d: Option<Parameter>,
    /// s^-2
    pub a: Option<Parameter>,
    pub a_fixed: bool,
    /// Delay at which the fitted `gamma` reaches `1/e`, s.
    pub lifetime: f64,
    pub lifetime_sigma: f64,
    pub chi2: f64,
    pub dof: usize,
    pub chi2_reduced: f64,
    pub iterations: usize,
    /// Covariance indexed `[C, tau, A]`; rows of absent or fixed parameters are zero.
    pub covariance: [[f64; 3]; 3],
}

impl FitResult {
    pub fn model(&self) -> DecayModel {
        let tau_d = self.tau_d.map_or(f64::INFINITY, |p| p.value);
        let a = self.a.map_or(0.0, |p| p.value);
        match self.kind {
            ModelKind::Gaussian => DecayModel::GaussianMotional { tau_d },
            ModelKind::Lorentzian => DecayModel::LorentzianLoss { a },
            ModelKind::Combined => DecayModel::Combined { tau_d, a },
        }
    }

    /// Fitted `g_S,AS` at `delay`.
    pub fn predict(&self, delay: f64) -> f64 {
        1.0 + self.c.value * self.model().gamma(delay).unwrap_or(f64::NAN)
    }
}

/// Maps the free-parameter vector onto `[C, tau, A]`.
#[derive(Debug, Clone, Copy)]
struct Layout {
    kind: ModelKind,
    fixed_a: Option<f64>,
}

impl Layout {
    fn free_indices(&self) -> ([usize; 3], usize) {
        let mut idx = [0; 3];
        let mut n = 0;
        for (full, present) in [
            (C_IDX, true),
            (TAU_IDX, self.kind.has_tau()),
            (A_IDX, self.kind.has_a() && self.fixed_a.is_none()),
        ] {
            if present {
                idx[n] = full;
                n += 1;
            }
        }
        (idx, n)
    }

    fn expand(&self, free: &[f64]) -> [f64; 3] {
        let mut full = [0.0, f64::INFINITY, self.fixed_a.unwrap_or(0.0)];
        let (idx, n) = self.free_indices();
        for k in 0..n {
            full[idx[k]] = free[k];
        }
        full
    }

    fn admissible(&self, full: &[f64; 3]) -> bool {
        let tau_ok = !self.kind.has_tau() || (full[TAU_IDX] > 0.0 && full[TAU_IDX].is_finite());
        let a_ok = full[A_IDX] >= 0.0 && full[A_IDX].is_finite();
        full[C_IDX].is_finite() && tau_ok && a_ok
    }

    /// Model value and gradient with respect to `[C, tau, A]`.
    fn eval(&self, full: &[f64; 3], t: f64) -> (f64, [f64; 3]) {
        let (c, tau, a) = (full[C_IDX], full[TAU_IDX], full[A_IDX]);
        let gauss = if self.kind.has_tau() {
            let x = t / tau;
            exp(-x * x)
        } else {
            1.0
        };
        let lorentz = if self.kind.has_a() {
            1.0 / (1.0 + a * t * t)
        } else {
            1.0
        };
        let shape = gauss * lorentz;
        let d_tau = if self.kind.has_tau() {
            c * shape * 2.0 * t * t / (tau * tau * tau)
        } else {
            0.0
        };
        let d_a = if self.kind.has_a() {
            -c * gauss * t * t * lorentz * lorentz
        } else {
            0.0
        };
        (1.0 + c * shape, [shape, d_tau, d_a])
    }
}

struct Linearization {
    chi2: f64,
    normal: [[f64; 3]; 3],
    gradient: [f64; 3],
}

fn chi2_at(layout: &Layout, points: &[CurvePoint], free: &[f64]) -> f64 {
    let full = layout.expand(free);
    points
        .iter()
        .map(|p| {
            let r = (p.g - layout.eval(&full, p.delay).0) / p.sigma_g;
            r * r
        })
        .sum()
}

fn linearize(layout: &Layout, points: &[CurvePoint], free: &[f64]) -> Linearization {
    let full = layout.expand(free);
    let (idx, n) = layout.free_indices();
    let mut lin = Linearization {
        chi2: 0.0,
        normal: [[0.0; 3]; 3],
        gradient: [0.0; 3],
    };
    for p in points {
        let (value, grad) = layout.eval(&full, p.delay);
        let w = 1.0 / p.sigma_g;
        let r = (p.g - value) * w;
        lin.chi2 += r * r;
        for i in 0..n {
            let ji = grad[idx[i]] * w;
            lin.gradient[i] += ji * r;
            for j in 0..n {
                lin.normal[i][j] += ji * grad[idx[j]] * w;
            }
        }
    }
    lin
}

/// Solve `m x = b` for the leading `n x n` block, with Jacobi scaling and
/// partial pivoting. `None` if the system is singular.
fn solve(m: &[[f64; 3]; 3], b: &[f64; 3], n: usize) -> Option<[f64; 3]> {
    let mut scale = [1.0; 3];
    for i in 0..n {
        if !(m[i][i] > 0.0 && m[i][i].is_finite()) {
            return None;
        }
        scale[i] = 1.0 / sqrt(m[i][i]);
    }
    let mut a = [[0.0; 4]; 3];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = m[i][j] * scale[i] * scale[j];
        }
        a[i][n] = b[i] * scale[i];
    }
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[pivot][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, pivot);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..=n {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    let mut x = [0.0; 3];
    for i in 0..n {
        x[i] = a[i][n] / a[i][i] * scale[i];
    }
    Some(x)
}

fn invert(m: &[[f64; 3]; 3], n: usize) -> Option<[[f64; 3]; 3]> {
    let mut inv = [[0.0; 3]; 3];
    for col in 0..n {
        let mut e = [0.0; 3];
        e[col] = 1.0;
        let x = solve(m, &e, n)?;
        for row in 0..n {
            inv[row][col] = x[row];
        }
    }
    Some(inv)
}

fn initial_guess(layout: &Layout, points: &[CurvePoint]) -> Result<[f64; 3]> {
    let g_max = points.iter().map(|p| p.g).fold(f64::NEG_INFINITY, f64::max);
    let c0 = g_max - 1.0;
    if !(c0 > 0.0) {
        return Err(Error::DegenerateFit("no correlation above the uncorrelated floor"));
    }
    let threshold = 1.0 + c0 / E;
    let last = points[points.len() - 1].delay;
    let crossing = match points.iter().position(|p| p.g < threshold) {
        Some(0) | None if points.len() == 1 => last,
        None => 2.0 * last,
        Some(0) => points[0].delay,
        Some(i) => {
            let (a, b) = (&points[i - 1], &points[i]);
            a.delay + (a.g - threshold) / (a.g - b.g) * (b.delay - a.delay)
        }
    };
    let smallest_positive = points.iter().map(|p| p.delay).find(|&d| d > 0.0).unwrap_or(1.0);
    let t = if crossing > 0.0 { crossing } else { smallest_positive };

    let mut full = [c0, f64::INFINITY, layout.fixed_a.unwrap_or(0.0)];
    match (layout.kind, layout.fixed_a) {
        (ModelKind::Gaussian, _) => full[TAU_IDX] = t,
        (ModelKind::Lorentzian, None) => full[A_IDX] = (E - 1.0) / (t * t),
        (ModelKind::Lorentzian, Some(_)) => {}
        (ModelKind::Combined, Some(a)) => {
            let rest = 1.0 - log(1.0 + a * t * t);
            full[TAU_IDX] = if rest > 0.0 { t / sqrt(rest) } else { 10.0 * t };
        }
        (ModelKind::Combined, None) => {
            full[TAU_IDX] = core::f64::consts::SQRT_2 * t;
            full[A_IDX] = 0.5 * (E - 1.0) / (t * t);
        }
    }
    Ok(full)
}

/// Fit `curve` with the given decay law.
pub fn fit_decay(curve: &DecayCurve, kind: ModelKind, options: &FitOptions) -> Result<FitResult> {
    if let Some(a) = options.fixed_a {
        if !kind.has_a() {
            return Err(Error::Domain("the Gaussian model has no A to fix"));
        }
        if !(a >= 0.0 && a.is_finite()) {
            return Err(Error::Domain("fixed A must be non-negative"));
        }
    }
    let points = if options.exclude_first && !curve.is_empty() {
        &curve.points()[1..]
    } else {
        curve.points()
    };
    let layout = Layout {
        kind,
        fixed_a: options.fixed_a,
    };
    let (idx, n) = layout.free_indices();
    if points.len() < n + 1 {
        return Err(Error::Domain("not enough points for the free parameters"));
    }

    let init = initial_guess(&layout, points)?;
    let mut p = [0.0; 3];
    for k in 0..n {
        p[k] = init[idx[k]];
    }
    let mut lin = linearize(&layout, points, &p[..n]);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iterations {
        iterations += 1;
        let mut accepted = None;
        while lambda <= 1e16 {
            let mut damped = lin.normal;
            for i in 0..n {
                damped[i][i] += lambda * lin.normal[i][i];
            }
            let Some(step) = solve(&damped, &lin.gradient, n) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = p;
            for k in 0..n {
                trial[k] += step[k];
            }
            if layout.admissible(&layout.expand(&trial[..n])) {
                let chi2 = chi2_at(&layout, points, &trial[..n]);
                if chi2 < lin.chi2 {
                    accepted = Some((trial, step));
                    break;
                }
            }
            lambda *= 10.0;
        }
        let Some((trial, step)) = accepted else {
            // No descent direction left at any damping: at the minimum.
            converged = true;
            break;
        };
        p = trial;
        lin = linearize(&layout, points, &p[..n]);
        lambda = (lambda / 10.0).max(1e-12);
        let small = (0..n).all(|k| step[k].abs() <= options.step_tolerance * p[k].abs().max(1e-6 * init[idx[k]].abs()));
        if small {
            converged = true;
            break;
        }
    }

    let cov_free = invert(&lin.normal, n).ok_or(Error::DegenerateFit("singular curvature at the optimum"))?;
    let mut covariance = [[0.0; 3]; 3];
    for i in 0..n {
        for j in 0..n {
            covariance[idx[i]][idx[j]] = cov_free[i][j];
        }
    }
    let full = layout.expand(&p[..n]);
    let param = |i: usize| Parameter {
        value: full[i],
        sigma: sqrt(covariance[i][i].max(0.0)),
    };
    let dof = points.len() - n;
    let mut result = FitResult {
        kind,
        c: param(C_IDX),
        tau_d: kind.has_tau().then(|| param(TAU_IDX)),
        a: kind.has_a().then(|| param(A_IDX)),
        a_fixed: options.fixed_a.is_some(),
        lifetime: f64::NAN,
        lifetime_sigma: f64::NAN,
        chi2: lin.chi2,
        dof,
        chi2_reduced: lin.chi2 / dof as f64,
        iterations,
        covariance,
    };
    let (lifetime, sigma) =
        lifetime_from_fit(&result).map_err(|_| Error::DegenerateFit("fitted curve never decays to 1/e"))?;
    result.lifetime = lifetime;
    result.lifetime_sigma = sigma;
    if !converged {
        return Err(Error::FitFailure {
            iterations,
            best: Box::new(result),
        });
    }
    Ok(result)
}

/// `1/e` lifetime and its standard error from a fit.
pub fn lifetime_from_fit(result: &FitResult) -> Result<(f64, f64)> {
    let cov = &result.covariance;
    match result.kind {
        ModelKind::Gaussian => {
            let tau = result.tau_d.ok_or(Error::Domain("missing tau"))?;
            Ok((tau.value, tau.sigma))
        }
        ModelKind::Lorentzian => {
            let a = result.a.ok_or(Error::Domain("missing A"))?;
            if !(a.value > 0.0) {
                return Err(Error::Domain("A = 0: no 1/e crossing"));
            }
            let tau = sqrt((E - 1.0) / a.value);
            Ok((tau, 0.5 * tau * a.sigma / a.value))
        }
        ModelKind::Combined => {
            let tau = result.tau_d.ok_or(Error::Domain("missing tau"))?.value;
            let a = result.a.ok_or(Error::Domain("missing A"))?.value;
            let t = combined_lifetime(tau, a)?;
            // Implicit derivatives of t^2/tau^2 + ln(1 + A t^2) = 1.
            let lorentz = 1.0 / (1.0 + a * t * t);
            let f_t = 2.0 * t / (tau * tau) + 2.0 * a * t * lorentz;
            let f_tau = -2.0 * t * t / (tau * tau * tau);
            let f_a = t * t * lorentz;
            let g = [0.0, -f_tau / f_t, -f_a / f_t];
            let g = if tau.is_finite() { g } else { [0.0, 0.0, g[2]] };
            let mut var = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    var += g[i] * cov[i][j] * g[j];
                }
            }
            Ok((t, sqrt(var.max(0.0))))
        }
    }
}

/// A fitted motional lifetime at one detection angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleLifetime {
    /// rad
    pub theta: f64,
    /// s
    pub tau_d: f64,
    /// s
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureEstimate {
    /// K
    pub temperature: f64,
    pub temperature_sigma: f64,
    /// Fitted one-dimensional speed, m/s
    pub speed: f64,
    pub speed_sigma: f64,
    pub points_used: usize,
}

/// Fit `tau_D = 1 / (Δk(theta) v_s)` to lifetime-versus-angle data and convert
/// `v_s` to a temperature. Zero-angle points are skipped.
///
/// The model is linear in `1/v_s`, so the weighted least-squares solution is
/// closed-form. Points are sorted first so the sums do not depend on input order.
pub fn infer_temperature(
    points: &[AngleLifetime],
    geometry: &BeamGeometry,
    species: &SpeciesConstants,
) -> Result<TemperatureEstimate> {
    let mut used: Vec<AngleLifetime> = points.iter().copied().filter(|p| p.theta != 0.0).collect();
    if used.is_empty() {
        return Err(Error::Domain("temperature inference needs a non-zero angle"));
    }
    for p in &used {
        if !(p.tau_d > 0.0 && p.sigma > 0.0) {
            return Err(Error::Domain("lifetimes and their errors must be positive"));
        }
    }
    used.sort_by(|x, y| {
        x.theta
            .total_cmp(&y.theta)
            .then(x.tau_d.total_cmp(&y.tau_d))
            .then(x.sigma.total_cmp(&y.sigma))
    });

    // tau_i = u / k_i with u = 1 / v_s.
    let (mut num, mut den) = (0.0, 0.0);
    for p in &used {
        let g = BeamGeometry {
            detection_angle: p.theta,
            ..*geometry
        };
        let k = spin_wave_vector(&g, species)?.magnitude;
        let w = 1.0 / (p.sigma * p.sigma);
        num += w * p.tau_d / k;
        den += w / (k * k);
    }
    let u = num / den;
    let u_sigma = 1.0 / sqrt(den);
    let speed = 1.0 / u;
    let speed_sigma = u_sigma / (u * u);
    let temperature = temperature_from_speed(speed, species.mass);
    Ok(TemperatureEstimate {
        temperature,
        temperature_sigma: 2.0 * temperature * speed_sigma / speed,
        speed,
        speed_sigma,
        points_used: used.len(),
    })
}

/// Motional lifetime at `theta` for a given temperature; the forward model of
/// [`infer_temperature`].
pub fn lifetime_at_angle(
    theta: f64,
    temperature: f64,
    geometry: &BeamGeometry,
    species: &SpeciesConstants,
) -> Result<f64> {
    let g = BeamGeometry {
        detection_angle: theta,
        ..*geometry
    };
    let sw = spin_wave_vector(&g, species)?;
    motional_lifetime(&sw, crate::physics::thermal_speed(temperature, species.mass)?)
}
