//! Atomic units are used everywhere internally; these helpers convert at the
//! I/O boundary.

/// Wavenumbers per hartree.
pub const HARTREE_TO_CM1: f64 = 219474.6313632;

/// Boltzmann constant in hartree per kelvin.
pub const BOLTZMANN_HARTREE_PER_K: f64 = 3.166811563e-6;

#[inline]
pub fn cm1_to_hartree(x: f64) -> f64 {
    x / HARTREE_TO_CM1
}

#[inline]
pub fn hartree_to_cm1(x: f64) -> f64 {
    x * HARTREE_TO_CM1
}
