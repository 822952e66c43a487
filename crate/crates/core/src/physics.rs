//! Physical constants, thermal speeds and spin-wave geometry.
//!
//! Everything here is SI. The write beam propagates along `+z`, which is also
//! the long (pencil) axis of the interaction region; the Stokes detection mode
//! is tilted by the detection angle in the `x-z` plane.

use core::f64::consts::PI;

use libm::{cos, sin, sqrt};

use crate::{Error, Result};

pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const HBAR: f64 = 1.054_571_817e-34;
pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const STANDARD_GRAVITY: f64 = 9.806_65;

/// Atomic constants of the stored species.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeciesConstants {
    /// kg
    pub mass: f64,
    /// s-wave scattering length, m
    pub scattering_length: f64,
    /// Ground-state hyperfine splitting between the two storage manifolds, Hz
    pub hyperfine_splitting: f64,
}

impl SpeciesConstants {
    pub const RB87: Self = Self {
        mass: 1.4432e-25,
        scattering_length: 6e-9,
        hyperfine_splitting: 6.8347e9,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(Error::Domain("species mass must be positive"));
        }
        if !(self.scattering_length > 0.0 && self.scattering_length.is_finite()) {
            return Err(Error::Domain("scattering length must be positive"));
        }
        if !(self.hyperfine_splitting > 0.0 && self.hyperfine_splitting.is_finite()) {
            return Err(Error::Domain("hyperfine splitting must be positive"));
        }
        Ok(())
    }
}

impl Default for SpeciesConstants {
    fn default() -> Self {
        Self::RB87
    }
}

/// Macroscopic description of the cold cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleParams {
    /// K
    pub temperature: f64,
    /// m^-3
    pub density: f64,
    /// Cross-section radius of the interaction region (detection-mode waist), m
    pub cloud_radius: f64,
    /// Number of Monte-Carlo atoms
    pub atom_count: usize,
    pub species: SpeciesConstants,
}

impl EnsembleParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Domain("temperature must be positive"));
        }
        if !(self.density >= 0.0 && self.density.is_finite()) {
            return Err(Error::Domain("density must be non-negative"));
        }
        if !(self.cloud_radius > 0.0 && self.cloud_radius.is_finite()) {
            return Err(Error::Domain("cloud radius must be positive"));
        }
        if self.atom_count == 0 {
            return Err(Error::Domain("atom count must be at least 1"));
        }
        self.species.validate()
    }
}

impl Default for EnsembleParams {
    /// 100 µK, 10^10 cm^-3, 100 µm waist.
    fn default() -> Self {
        Self {
            temperature: 100e-6,
            density: 1e16,
            cloud_radius: 100e-6,
            atom_count: 100_000,
            species: SpeciesConstants::RB87,
        }
    }
}

/// `sqrt(k_B T / m)` for a bare temperature and mass.
pub fn thermal_speed(temperature: f64, mass: f64) -> Result<f64> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::Domain("temperature must be positive"));
    }
    if !(mass > 0.0) {
        return Err(Error::Domain("species mass must be positive"));
    }
    Ok(sqrt(BOLTZMANN * temperature / mass))
}

/// Inverse of [`thermal_speed`]: `T = m v^2 / k_B`.
pub fn temperature_from_speed(speed: f64, mass: f64) -> f64 {
    mass * speed * speed / BOLTZMANN
}

/// One-dimensional thermal speed `v_s = sqrt(k_B T / m)`.
pub fn one_d_speed(params: &EnsembleParams) -> Result<f64> {
    thermal_speed(params.temperature, params.species.mass)
}

/// Radial speed `v_r = sqrt(2 k_B T / m)`.
pub fn radial_speed(params: &EnsembleParams) -> Result<f64> {
    Ok(core::f64::consts::SQRT_2 * one_d_speed(params)?)
}

/// Collision rate `n v_s 8 pi a^2`.
pub fn collision_rate(params: &EnsembleParams) -> Result<f64> {
    params.validate()?;
    let a = params.species.scattering_length;
    let cross_section = 8.0 * PI * a * a;
    Ok(params.density * one_d_speed(params)? * cross_section)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GeometryMode {
    /// `k_W sin(theta)`; undefined at zero angle.
    SmallAngle,
    /// `|k_W - k_S|` with the Stokes photon red-shifted by one hyperfine quantum.
    #[default]
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamGeometry {
    /// Vacuum wavelength of the write beam, m
    pub write_wavelength: f64,
    /// Angle between write beam and Stokes detection mode, rad
    pub detection_angle: f64,
    pub mode: GeometryMode,
}

impl BeamGeometry {
    pub const DEFAULT_WRITE_WAVELENGTH: f64 = 795e-9;

    pub fn new(write_wavelength: f64, detection_angle: f64, mode: GeometryMode) -> Self {
        Self {
            write_wavelength,
            detection_angle,
            mode,
        }
    }

    /// Default 795 nm write beam, exact wave vector, angle in degrees.
    pub fn from_degrees(detection_angle_deg: f64) -> Self {
        Self::new(
            Self::DEFAULT_WRITE_WAVELENGTH,
            detection_angle_deg.to_radians(),
            GeometryMode::Exact,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.write_wavelength > 0.0 && self.write_wavelength.is_finite()) {
            return Err(Error::Domain("write wavelength must be positive"));
        }
        if !(self.detection_angle >= 0.0 && self.detection_angle < PI / 2.0) {
            return Err(Error::Domain("detection angle must lie in [0, pi/2)"));
        }
        Ok(())
    }

    pub fn write_wavenumber(&self) -> f64 {
        2.0 * PI / self.write_wavelength
    }
}

/// Wave vector `Δk = k_W - k_S` of the stored spin wave.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinWaveVector {
    /// rad/m
    pub magnitude: f64,
    /// `2 pi / magnitude`, m
    pub wavelength: f64,
    /// Unit vector along `Δk`
    pub direction: [f64; 3],
}

impl SpinWaveVector {
    pub fn from_components(v: [f64; 3]) -> Result<Self> {
        let magnitude = sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        if !(magnitude > 0.0 && magnitude.is_finite()) {
            return Err(Error::DegenerateGeometry);
        }
        Ok(Self {
            magnitude,
            wavelength: 2.0 * PI / magnitude,
            direction: [v[0] / magnitude, v[1] / magnitude, v[2] / magnitude],
        })
    }

    pub fn components(&self) -> [f64; 3] {
        let k = self.magnitude;
        [k * self.direction[0], k * self.direction[1], k * self.direction[2]]
    }
}

pub fn spin_wave_vector(geometry: &BeamGeometry, species: &SpeciesConstants) -> Result<SpinWaveVector> {
    geometry.validate()?;
    species.validate()?;
    let k_w = geometry.write_wavenumber();
    let theta = geometry.detection_angle;
    match geometry.mode {
        GeometryMode::SmallAngle => {
            if theta == 0.0 {
                return Err(Error::DegenerateGeometry);
            }
            // Same direction as the exact construction with |k_S| = |k_W|.
            let dir = [-sin(theta), 0.0, 1.0 - cos(theta)];
            let norm = sqrt(dir[0] * dir[0] + dir[2] * dir[2]);
            let magnitude = k_w * sin(theta);
            Ok(SpinWaveVector {
                magnitude,
                wavelength: 2.0 * PI / magnitude,
                direction: [dir[0] / norm, 0.0, dir[2] / norm],
            })
        }
        GeometryMode::Exact => {
            let mismatch = 2.0 * PI * species.hyperfine_splitting / SPEED_OF_LIGHT;
            let k_s = k_w - mismatch;
            // k_W - k_S cos(theta), written to stay exact in the collinear limit.
            let half = sin(theta / 2.0);
            let along = mismatch + 2.0 * k_s * half * half;
            let across = -k_s * sin(theta);
            SpinWaveVector::from_components([across, 0.0, along])
        }
    }
}
