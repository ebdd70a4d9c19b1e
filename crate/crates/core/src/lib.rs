//! Polariton spectra of emitters in a single cavity mode, with the field
//! treated either classically (Ehrenfest) or as a quantized oscillator.
//!
//! All quantities are in atomic units unless a name says otherwise.

pub mod classical;
pub mod error;
pub mod integrator;
pub mod io;
pub mod manymol;
pub mod model;
pub mod quantum;
pub mod spectra;
pub mod units;

pub use classical::{
    classical_total_energy, propagate_classical, CavityParams, ClassicalState, FieldSeries, KickPulse, TimeGrid,
    Trajectory,
};
pub use error::{Error, Result};
pub use manymol::{
    analytic_nonsymmetric_spectrum, analytic_symmetric_spectrum, build_many_molecule_hamiltonian,
    build_symmetric_hamiltonian, thermodynamic_limit_spectrum, LimitBranch, ManyMolConfig,
};
pub use model::{
    boltzmann_weights, build_morse_rovib, build_three_level, mu_squared_matrix, MolecularModel, MorseParams,
    RadialGrid, StateLabel, ThermalWeights,
};
pub use quantum::{
    assemble_hamiltonian, diagonalize_polaritons, photon_observables, propagate_quantum, static_stick_spectrum,
    PolaritonSolution, ProductBasis, QuantumState,
};
pub use spectra::{
    broaden_sticks, detect_peaks, dipole_spectrum, measure_splitting, thermal_average_spectra, Lineshape, PeakSet,
    Spectrum,
};
