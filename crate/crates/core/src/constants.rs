//! Physical constants and unit conversions.
//!
//! Energies are carried in cm⁻¹ throughout the crate, magnetic fields in
//! tesla and temperatures in kelvin. Rates leave the crate in s⁻¹.

/// Bohr magneton in cm⁻¹/T (CODATA 2018, μ_B/hc).
pub const BOHR_MAGNETON_CM1_PER_T: f64 = 0.466_864_477_83;

/// Boltzmann constant in cm⁻¹/K (CODATA 2018, k_B/hc).
pub const BOLTZMANN_CM1_PER_K: f64 = 0.695_034_800_4;

/// Speed of light in cm/s.
pub const SPEED_OF_LIGHT_CM_PER_S: f64 = 2.997_924_58e10;

/// Angular frequency (rad/s) equivalent to an energy of 1 cm⁻¹: 2πc.
pub const CM1_TO_RAD_PER_S: f64 = 2.0 * core::f64::consts::PI * SPEED_OF_LIGHT_CM_PER_S;

/// Converts a golden-rule rate `2π |M|² δ` evaluated with energies in cm⁻¹
/// (so the product carries units of cm⁻¹) into s⁻¹.
///
/// With δ expressed per unit energy, `(2π/ħ²)|M|² δ(ω) = (2π/ħ)|M|² δ(E)`,
/// and `E/ħ` for `E` in cm⁻¹ is `E · 2πc`.
#[inline]
pub fn golden_rule_rate_per_s(matrix_element_sq_times_density_cm1: f64) -> f64 {
    2.0 * core::f64::consts::PI * matrix_element_sq_times_density_cm1 * CM1_TO_RAD_PER_S
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounded_values_match_documented_constants() {
        assert!((BOHR_MAGNETON_CM1_PER_T - 0.46686).abs() < 5e-6);
        assert!((BOLTZMANN_CM1_PER_K - 0.69503).abs() < 5e-6);
    }

    #[test]
    fn one_wavenumber_is_about_188_grad_per_second() {
        // 2π · 29.9792458 GHz
        let expected = 2.0 * core::f64::consts::PI * 29.979_245_8e9;
        assert!((CM1_TO_RAD_PER_S - expected).abs() / expected < 1e-15);
        assert!((golden_rule_rate_per_s(1.0) - 2.0 * core::f64::consts::PI * expected).abs() < 1.0);
    }
}
