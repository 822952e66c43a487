//! Ground-state Zeeman sublevels of the two hyperfine manifolds.

use crate::physics::{BOHR_MAGNETON, HBAR};
use crate::{Error, Result};

/// A ground-state sublevel `|F, m_F>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Sublevel {
    pub f: u8,
    pub m: i8,
}

impl Sublevel {
    pub const fn new(f: u8, m: i8) -> Self {
        Self { f, m }
    }

    fn validate(&self) -> Result<()> {
        if self.f != 1 && self.f != 2 {
            return Err(Error::Domain("hyperfine level F must be 1 or 2"));
        }
        if self.m.unsigned_abs() > self.f {
            return Err(Error::Domain("|m_F| exceeds F"));
        }
        Ok(())
    }
}

impl core::fmt::Display for Sublevel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{},{}", self.f, self.m)
    }
}

/// The three first-order field-insensitive `(|g>, |s>)` pairs.
pub const CLOCK_PAIRS: [(Sublevel, Sublevel); 3] = [
    (Sublevel::new(1, 1), Sublevel::new(2, -1)),
    (Sublevel::new(1, 0), Sublevel::new(2, 0)),
    (Sublevel::new(1, -1), Sublevel::new(2, 1)),
];

/// Hyperfine Landé factors `g_F` for `F = 1` and `F = 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandeFactors {
    pub g_f1: f64,
    pub g_f2: f64,
}

impl LandeFactors {
    pub fn get(&self, f: u8) -> Result<f64> {
        match f {
            1 => Ok(self.g_f1),
            2 => Ok(self.g_f2),
            _ => Err(Error::Domain("no Lande factor for this F")),
        }
    }
}

impl Default for LandeFactors {
    fn default() -> Self {
        Self { g_f1: -0.5, g_f2: 0.5 }
    }
}

/// Storage pair plus the field it sits in. The field magnitude is
/// `bias_field + field_gradient * z` along the pencil axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeemanConfig {
    pub ground: Sublevel,
    pub storage: Sublevel,
    /// T
    pub bias_field: f64,
    /// T/m
    pub field_gradient: f64,
    pub lande: LandeFactors,
}

impl ZeemanConfig {
    pub fn new(ground: Sublevel, storage: Sublevel, bias_field: f64, field_gradient: f64) -> Self {
        Self {
            ground,
            storage,
            bias_field,
            field_gradient,
            lande: LandeFactors::default(),
        }
    }

    /// `(|1,0>, |2,0>)` in a 3.2 G bias with no gradient.
    pub fn clock() -> Self {
        Self::new(Sublevel::new(1, 0), Sublevel::new(2, 0), 3.2e-4, 0.0)
    }

    pub fn is_clock_pair(&self) -> bool {
        CLOCK_PAIRS.contains(&(self.ground, self.storage))
    }

    /// Differential shift per unit field, `(m_s g_s - m_g g_g) mu_B / hbar`, in rad/s/T.
    pub fn differential_coefficient(&self) -> Result<f64> {
        self.ground.validate()?;
        self.storage.validate()?;
        let g_g = self.lande.get(self.ground.f)?;
        let g_s = self.lande.get(self.storage.f)?;
        let moment = f64::from(self.storage.m) * g_s - f64::from(self.ground.m) * g_g;
        Ok(moment * BOHR_MAGNETON / HBAR)
    }
}

/// First-order differential Zeeman shift of the pair at the bias field, rad/s.
pub fn first_order_zeeman_shift(config: &ZeemanConfig) -> Result<f64> {
    Ok(config.differential_coefficient()? * config.bias_field)
}
