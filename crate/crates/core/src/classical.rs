//! Molecule + classical cavity mode (Ehrenfest). The molecular wavefunction is
//! carried in the interaction picture, ψ_k = C_k e^{−iE_k t}, and the mode is
//! a scalar oscillator (q, p) driven by ⟨μ⟩.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::Rk4;
use crate::model::{mu_squared_matrix, MolecularModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    pub omega_c: f64,
    pub g: f64,
    pub include_dse: bool,
    pub n_fock_max: usize,
}

impl Default for CavityParams {
    fn default() -> Self {
        Self {
            omega_c: 1e-2,
            g: 2e-4,
            include_dse: true,
            n_fock_max: 2,
        }
    }
}

impl CavityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega_c > 0.0) || !self.omega_c.is_finite() {
            return Err(Error::InvalidInput(format!("omega_c must be positive, got {}", self.omega_c)));
        }
        if !(self.g >= 0.0) || !self.g.is_finite() {
            return Err(Error::InvalidInput(format!("g must be nonnegative, got {}", self.g)));
        }
        if self.n_fock_max < 1 {
            return Err(Error::InvalidInput("n_fock_max must be at least 1".into()));
        }
        Ok(())
    }

    /// Bilinear coupling prefactor g√(2ω_c) multiplying q·μ.
    pub fn q_coupling(&self) -> f64 {
        self.g * (2.0 * self.omega_c).sqrt()
    }

    /// Prefactor of μ² in the self-energy, zero when switched off.
    pub fn dse_prefactor(&self) -> f64 {
        if self.include_dse {
            self.g * self.g / self.omega_c
        } else {
            0.0
        }
    }
}

/// Gaussian kick f(t) = A exp(−(t − t0)² / 2σ²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KickPulse {
    pub amplitude: f64,
    pub t0: f64,
    pub sigma: f64,
}

impl Default for KickPulse {
    fn default() -> Self {
        Self {
            amplitude: 1e-4,
            t0: 25.0,
            sigma: 5.0,
        }
    }
}

impl KickPulse {
    pub fn none() -> Self {
        Self {
            amplitude: 0.0,
            ..Self::default()
        }
    }

    pub fn field(&self, t: f64) -> f64 {
        if self.amplitude == 0.0 {
            return 0.0;
        }
        let x = (t - self.t0) / self.sigma;
        self.amplitude * (-0.5 * x * x).exp()
    }

    /// Last time before which |f(t)| < 1e-15.
    pub fn support_start(&self) -> f64 {
        if self.amplitude.abs() < 1e-15 {
            return 0.0;
        }
        2.0 * self.t0 - self.support_end()
    }

    /// First time after which |f(t)| < 1e-15.
    pub fn support_end(&self) -> f64 {
        let a = self.amplitude.abs();
        if a < 1e-15 {
            return 0.0;
        }
        // small margin so that f(support_end) is strictly below the threshold
        self.t0 + self.sigma * ((2.0 * (a / 1e-15).ln()).sqrt() + 1e-6)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.amplitude.is_finite() || !self.t0.is_finite() {
            return Err(Error::InvalidInput(format!("invalid kick pulse {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_end: f64,
    pub dt: f64,
    /// Record every `stride`-th step.
    pub stride: usize,
}

impl TimeGrid {
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn validate(&self, max_frequency: f64) -> Result<()> {
        if !(self.dt > 0.0 && self.t_end > 0.0) || self.stride == 0 {
            return Err(Error::InvalidInput(format!("invalid time grid {self:?}")));
        }
        if self.dt * max_frequency >= 0.1 {
            return Err(Error::InvalidInput(format!(
                "dt = {} does not resolve the fastest frequency {max_frequency:.3e} (need dt·ω < 0.1)",
                self.dt
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldSeries {
    Classical { q: Vec<f64>, p: Vec<f64> },
    Quantum { q_expect: Vec<f64>, q2_expect: Vec<f64> },
}

impl FieldSeries {
    /// Displacement series: q(t) or ⟨q⟩(t).
    pub fn q(&self) -> &[f64] {
        match self {
            FieldSeries::Classical { q, .. } => q,
            FieldSeries::Quantum { q_expect, .. } => q_expect,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub dipole: Vec<f64>,
    pub state_labels: Vec<String>,
    /// `populations[k][i]` is the population of state k at `times[i]`.
    pub populations: Vec<Vec<f64>>,
    pub field: FieldSeries,
    pub energy: Vec<f64>,
    pub norm: Vec<f64>,
    pub dt: f64,
    pub pulse_start: f64,
    pub pulse_end: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn max_norm_drift(&self) -> f64 {
        self.norm.iter().fold(0.0f64, |a, n| a.max((n - 1.0).abs()))
    }

    /// First recorded index at or after the end of the pulse support.
    pub fn post_pulse_index(&self) -> usize {
        self.times.iter().position(|&t| t >= self.pulse_end).unwrap_or(self.times.len())
    }

    /// max |E(t) − E(t_p)| / |E(t_p)| over recorded t ≥ t_p, t_p the pulse end.
    pub fn max_relative_energy_drift(&self) -> f64 {
        let i0 = self.post_pulse_index();
        if i0 >= self.energy.len() {
            return 0.0;
        }
        let e0 = self.energy[i0];
        let scale = e0.abs().max(f64::MIN_POSITIVE);
        self.energy[i0..].iter().fold(0.0f64, |a, e| a.max((e - e0).abs() / scale))
    }

    pub fn population(&self, label: &str) -> Option<&[f64]> {
        self.state_labels
            .iter()
            .position(|l| l == label)
            .map(|k| self.populations[k].as_slice())
    }
}

/// Real symmetric operator stored as its nonzero entries (both triangles).
#[derive(Debug, Clone)]
pub(crate) struct SparseOp {
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseOp {
    pub fn from_dense(m: &nalgebra::DMatrix<f64>) -> Self {
        let mut entries = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != 0.0 {
                    entries.push((i, j, m[(i, j)]));
                }
            }
        }
        Self { entries }
    }

    /// out += a · (Op x)
    #[inline]
    pub fn apply_add(&self, a: f64, x: &[Complex64], out: &mut [Complex64]) {
        for &(i, j, v) in &self.entries {
            out[i] += x[j] * (a * v);
        }
    }

    pub fn expect(&self, x: &[Complex64]) -> f64 {
        self.entries.iter().map(|&(i, j, v)| v * (x[i].conj() * x[j]).re).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalState {
    /// Interaction-picture coefficients C_k.
    pub coeffs: Vec<Complex64>,
    pub q: f64,
    pub p: f64,
    pub t: f64,
}

impl ClassicalState {
    pub fn eigenstate(n: usize, k: usize) -> Self {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); n];
        coeffs[k] = Complex64::new(1.0, 0.0);
        Self {
            coeffs,
            q: 0.0,
            p: 0.0,
            t: 0.0,
        }
    }

    /// Schrödinger-picture amplitudes ψ_k = C_k e^{−iE_k t}.
    pub fn psi(&self, energies: &[f64]) -> Vec<Complex64> {
        self.coeffs
            .iter()
            .zip(energies)
            .map(|(c, e)| c * Complex64::from_polar(1.0, -e * self.t))
            .collect()
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Single-step engine; `propagate_classical` drives it over a whole run.
pub struct ClassicalPropagator<'a> {
    energies: &'a [f64],
    mu: SparseOp,
    mu2: SparseOp,
    cav: CavityParams,
    pulse: KickPulse,
    rk: Rk4<Complex64>,
    // packed state: n coefficients, then (q, p) as one complex number
    y: Vec<Complex64>,
    t: f64,
}

impl<'a> ClassicalPropagator<'a> {
    pub fn new(model: &'a MolecularModel, cav: CavityParams, pulse: KickPulse, state: &ClassicalState) -> Self {
        let n = model.n_states();
        let mut y = state.coeffs.clone();
        y.push(Complex64::new(state.q, state.p));
        Self {
            energies: model.energies(),
            mu: SparseOp::from_dense(model.dipole()),
            mu2: SparseOp::from_dense(&mu_squared_matrix(model)),
            cav,
            pulse,
            rk: Rk4::new(n + 1),
            y,
            t: state.t,
        }
    }

    pub fn state(&self) -> ClassicalState {
        let n = self.energies.len();
        ClassicalState {
            coeffs: self.y[..n].to_vec(),
            q: self.y[n].re,
            p: self.y[n].im,
            t: self.t,
        }
    }

    pub fn step(&mut self, dt: f64) {
        let n = self.energies.len();
        let energies = self.energies;
        let (mu, mu2) = (&self.mu, &self.mu2);
        let (cq, cd, w2) = (self.cav.q_coupling(), self.cav.dse_prefactor(), self.cav.omega_c.powi(2));
        let pulse = self.pulse;
        let mut psi = vec![Complex64::default(); n];
        let mut hpsi = vec![Complex64::default(); n];
        let mut phase = vec![Complex64::default(); n];
        let mut rhs = |t: f64, y: &[Complex64], dy: &mut [Complex64]| {
            for k in 0..n {
                phase[k] = Complex64::from_polar(1.0, -energies[k] * t);
                psi[k] = y[k] * phase[k];
                hpsi[k] = Complex64::default();
            }
            let q = y[n].re;
            let p = y[n].im;
            mu.apply_add(cq * q + pulse.field(t), &psi, &mut hpsi);
            if cd != 0.0 {
                mu2.apply_add(cd, &psi, &mut hpsi);
            }
            for k in 0..n {
                dy[k] = -Complex64::i() * hpsi[k] * phase[k].conj();
            }
            let mu_avg = mu.expect(&psi);
            dy[n] = Complex64::new(p, -w2 * q - cq * mu_avg);
        };
        self.rk.step(&mut rhs, self.t, dt, &mut self.y);
        self.t += dt;
    }
}

pub fn classical_total_energy(state: &ClassicalState, model: &MolecularModel, cav: &CavityParams) -> f64 {
    let psi = state.psi(model.energies());
    let e_mol: f64 = psi.iter().zip(model.energies()).map(|(c, e)| c.norm_sqr() * e).sum();
    let mu = SparseOp::from_dense(model.dipole()).expect(&psi);
    let dse = if cav.include_dse {
        cav.dse_prefactor() * SparseOp::from_dense(&mu_squared_matrix(model)).expect(&psi)
    } else {
        0.0
    };
    e_mol + cav.q_coupling() * state.q * mu + dse + 0.5 * (state.p.powi(2) + cav.omega_c.powi(2) * state.q.powi(2))
}

/// Norm drift beyond which a propagation is rejected.
pub const NORM_FAILURE_LIMIT: f64 = 1e-6;

pub fn propagate_classical(
    model: &MolecularModel,
    cav: &CavityParams,
    pulse: &KickPulse,
    init_state: usize,
    grid: &TimeGrid,
) -> Result<Trajectory> {
    cav.validate()?;
    pulse.validate()?;
    grid.validate(model.max_transition() + cav.omega_c)?;
    let n = model.n_states();
    if init_state >= n {
        return Err(Error::InvalidInput(format!(
            "initial state {init_state} out of range for a {n}-state model"
        )));
    }
    let mu = SparseOp::from_dense(model.dipole());
    let mut prop = ClassicalPropagator::new(model, *cav, *pulse, &ClassicalState::eigenstate(n, init_state));
    let n_steps = grid.n_steps();
    let n_rec = n_steps / grid.stride + 1;

    let mut times = Vec::with_capacity(n_rec);
    let mut dipole = Vec::with_capacity(n_rec);
    let mut pops = vec![Vec::with_capacity(n_rec); n];
    let mut qs = Vec::with_capacity(n_rec);
    let mut ps = Vec::with_capacity(n_rec);
    let mut energy = Vec::with_capacity(n_rec);
    let mut norm = Vec::with_capacity(n_rec);

    let mut step = 0usize;
    loop {
        let st = prop.state();
        let nrm = st.norm();
        if (nrm - 1.0).abs() > NORM_FAILURE_LIMIT {
            return Err(Error::Integration {
                t: st.t,
                drift: (nrm - 1.0).abs(),
                limit: NORM_FAILURE_LIMIT,
                dt: grid.dt,
            });
        }
        let psi = st.psi(model.energies());
        times.push(step as f64 * grid.dt);
        dipole.push(mu.expect(&psi));
        for (k, c) in st.coeffs.iter().enumerate() {
            pops[k].push(c.norm_sqr());
        }
        qs.push(st.q);
        ps.push(st.p);
        energy.push(classical_total_energy(&st, model, cav));
        norm.push(nrm);
        if step + grid.stride > n_steps {
            break;
        }
        for _ in 0..grid.stride {
            prop.step(grid.dt);
        }
        // keep the clock exact instead of accumulating dt
        prop.t = (step + grid.stride) as f64 * grid.dt;
        step += grid.stride;
    }

    Ok(Trajectory {
        times,
        dipole,
        state_labels: model.labels().iter().map(|l| l.to_string()).collect(),
        populations: pops,
        field: FieldSeries::Classical { q: qs, p: ps },
        energy,
        norm,
        dt: grid.dt,
        pulse_start: pulse.support_start(),
        pulse_end: pulse.support_end(),
    })
}
