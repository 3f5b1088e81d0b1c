//! Harmonic phonon bath: thermal occupations, broadened energy-conserving
//! deltas, and the one- and two-phonon spectral weights.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::constants::BOLTZMANN_CM1_PER_K;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhononMode {
    /// Caller's label for the mode; couplings refer to it.
    pub index: usize,
    /// ħω in cm⁻¹, strictly positive.
    pub omega_cm1: f64,
}

impl PhononMode {
    pub fn new(index: usize, omega_cm1: f64) -> Result<Self> {
        if !(omega_cm1 > 0.0) || !omega_cm1.is_finite() {
            return Err(Error::InvalidMode(omega_cm1));
        }
        Ok(Self { index, omega_cm1 })
    }
}

/// Bose-Einstein occupation `1 / (exp(ħω/k_BT) - 1)`; underflows to zero.
pub fn occupation(omega_cm1: f64, temperature_k: f64) -> f64 {
    let x = omega_cm1 / (BOLTZMANN_CM1_PER_K * temperature_k);
    if x > 700.0 {
        0.0
    } else {
        1.0 / libm::expm1(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BroadeningKind {
    Gaussian,
    /// `width_cm1` is the half width at half maximum.
    Lorentzian,
    /// Unit-weight resonance indicator: 1 per cm⁻¹ when `|ω - c| <= width_cm1`.
    Exact,
}

/// Numerical representation of δ(ω - c).
///
/// Gaussian and Lorentzian kernels are truncated at `cutoff_sigmas · width`
/// and renormalized over the window, so each integrates to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BroadeningPolicy {
    pub kind: BroadeningKind,
    pub width_cm1: f64,
    pub cutoff_sigmas: f64,
}

impl Default for BroadeningPolicy {
    fn default() -> Self {
        Self { kind: BroadeningKind::Gaussian, width_cm1: 3.0, cutoff_sigmas: 5.0 }
    }
}

impl BroadeningPolicy {
    pub fn new(kind: BroadeningKind, width_cm1: f64, cutoff_sigmas: f64) -> Result<Self> {
        if !(width_cm1 > 0.0) || !width_cm1.is_finite() {
            return Err(Error::InvalidBroadening(format!("width must be positive, got {width_cm1}")));
        }
        if !(cutoff_sigmas > 0.0) || !cutoff_sigmas.is_finite() {
            return Err(Error::InvalidBroadening(format!("cutoff must be positive, got {cutoff_sigmas}")));
        }
        Ok(Self { kind, width_cm1, cutoff_sigmas })
    }

    /// Exact-delta mode with resonance tolerance `tol_cm1`.
    pub fn exact(tol_cm1: f64) -> Result<Self> {
        Self::new(BroadeningKind::Exact, tol_cm1, 1.0)
    }

    /// Half width of the support of the kernel.
    pub fn window_cm1(&self) -> f64 {
        match self.kind {
            BroadeningKind::Exact => self.width_cm1,
            _ => self.cutoff_sigmas * self.width_cm1,
        }
    }

    fn window_mass(&self) -> f64 {
        let c = self.cutoff_sigmas;
        match self.kind {
            BroadeningKind::Gaussian => libm::erf(c / core::f64::consts::SQRT_2),
            BroadeningKind::Lorentzian => 2.0 / core::f64::consts::PI * libm::atan(c),
            BroadeningKind::Exact => 1.0,
        }
    }

    /// Kernel value in cm (per cm⁻¹).
    pub fn delta(&self, omega_cm1: f64, center_cm1: f64) -> f64 {
        let x = omega_cm1 - center_cm1;
        if x.abs() > self.window_cm1() {
            return 0.0;
        }
        let w = self.width_cm1;
        match self.kind {
            BroadeningKind::Gaussian => {
                let u = x / w;
                (-0.5 * u * u).exp() / (w * (2.0 * core::f64::consts::PI).sqrt() * self.window_mass())
            }
            BroadeningKind::Lorentzian => w / (core::f64::consts::PI * (x * x + w * w) * self.window_mass()),
            BroadeningKind::Exact => 1.0,
        }
    }
}

/// Two-phonon process type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    /// Absorb the first mode, emit the second (Raman).
    AbsorptionEmission,
    DoubleAbsorption,
    DoubleEmission,
}

impl Channel {
    pub const ALL: [Channel; 3] =
        [Channel::AbsorptionEmission, Channel::DoubleAbsorption, Channel::DoubleEmission];

    pub fn name(self) -> &'static str {
        match self {
            Channel::AbsorptionEmission => "absorption_emission",
            Channel::DoubleAbsorption => "double_absorption",
            Channel::DoubleEmission => "double_emission",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    /// Spin transition frequency at which the channel is resonant.
    pub fn resonance(self, first_cm1: f64, second_cm1: f64) -> f64 {
        match self {
            Channel::AbsorptionEmission => first_cm1 - second_cm1,
            Channel::DoubleAbsorption => first_cm1 + second_cm1,
            Channel::DoubleEmission => -(first_cm1 + second_cm1),
        }
    }
}

/// Phonon modes (sorted by frequency) in equilibrium at one temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct Bath {
    modes: Vec<PhononMode>,
    occupations: Vec<f64>,
    temperature_k: f64,
    broadening: BroadeningPolicy,
}

impl Bath {
    pub fn new(mut modes: Vec<PhononMode>, temperature_k: f64, broadening: BroadeningPolicy) -> Result<Self> {
        if !(temperature_k > 0.0) || !temperature_k.is_finite() {
            return Err(Error::InvalidTemperature(temperature_k));
        }
        for m in &modes {
            PhononMode::new(m.index, m.omega_cm1)?;
        }
        modes.sort_by(|a, b| a.omega_cm1.total_cmp(&b.omega_cm1).then(a.index.cmp(&b.index)));
        let occupations = modes.iter().map(|m| occupation(m.omega_cm1, temperature_k)).collect();
        Ok(Self { modes, occupations, temperature_k, broadening })
    }

    pub fn with_temperature(&self, temperature_k: f64) -> Result<Self> {
        Self::new(self.modes.clone(), temperature_k, self.broadening)
    }

    pub fn modes(&self) -> &[PhononMode] {
        &self.modes
    }

    pub fn temperature_k(&self) -> f64 {
        self.temperature_k
    }

    pub fn broadening(&self) -> &BroadeningPolicy {
        &self.broadening
    }

    /// Occupation of the mode at sorted position `pos`.
    pub fn occupation_at(&self, pos: usize) -> f64 {
        self.occupations[pos]
    }

    /// `G²(ω, ω_α) = δ(ω - ω_α) n̄ + δ(ω + ω_α)(n̄ + 1)` for the mode at `pos`.
    pub fn g2(&self, omega_cm1: f64, pos: usize) -> f64 {
        let w = self.modes[pos].omega_cm1;
        let n = self.occupations[pos];
        self.broadening.delta(omega_cm1, w) * n + self.broadening.delta(omega_cm1, -w) * (n + 1.0)
    }

    /// Two-phonon weight for modes at sorted positions `first`, `second`.
    /// For [`Channel::AbsorptionEmission`] `first` is absorbed and `second` emitted.
    pub fn g4(&self, omega_cm1: f64, first: usize, second: usize, channel: Channel) -> f64 {
        let (wa, wb) = (self.modes[first].omega_cm1, self.modes[second].omega_cm1);
        let (na, nb) = (self.occupations[first], self.occupations[second]);
        let thermal = match channel {
            Channel::AbsorptionEmission => na * (nb + 1.0),
            Channel::DoubleAbsorption => na * nb,
            Channel::DoubleEmission => (na + 1.0) * (nb + 1.0),
        };
        if thermal == 0.0 {
            return 0.0;
        }
        self.broadening.delta(omega_cm1, channel.resonance(wa, wb)) * thermal
    }

    /// Sorted positions `p` with `ω_p` inside `[lo, hi]`.
    pub(crate) fn positions_in(&self, lo: f64, hi: f64) -> core::ops::Range<usize> {
        let start = self.modes.partition_point(|m| m.omega_cm1 < lo);
        let end = self.modes.partition_point(|m| m.omega_cm1 <= hi);
        start..end.max(start)
    }
}
