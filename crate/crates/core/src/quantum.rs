//! Molecule ⊗ Fock product basis: static polariton spectra by exact
//! diagonalization and kick-driven TDSE propagation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::classical::{CavityParams, FieldSeries, KickPulse, SparseOp, TimeGrid, Trajectory, NORM_FAILURE_LIMIT};
use crate::error::{Error, Result};
use crate::model::{eigen_failure, mu_squared_matrix, MolecularModel, ThermalWeights};
use crate::spectra::{Spectrum, StickInfo};

/// |ψ_k, N⟩ states, N-major then k.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductBasis {
    n_mol: usize,
    n_fock_max: usize,
}

impl ProductBasis {
    pub fn new(n_mol: usize, n_fock_max: usize) -> Self {
        Self { n_mol, n_fock_max }
    }

    pub fn for_model(model: &MolecularModel, cav: &CavityParams) -> Self {
        Self::new(model.n_states(), cav.n_fock_max)
    }

    pub fn len(&self) -> usize {
        self.n_mol * (self.n_fock_max + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_mol(&self) -> usize {
        self.n_mol
    }

    pub fn n_fock_max(&self) -> usize {
        self.n_fock_max
    }

    pub fn index(&self, k: usize, n: usize) -> usize {
        n * self.n_mol + k
    }

    /// (k, N) of basis index i.
    pub fn entry(&self, i: usize) -> (usize, usize) {
        (i % self.n_mol, i / self.n_mol)
    }

    pub fn entries(&self) -> Vec<(usize, usize)> {
        (0..self.len()).map(|i| self.entry(i)).collect()
    }

    pub fn label(&self, model: &MolecularModel, i: usize) -> String {
        let (k, n) = self.entry(i);
        format!("{},N={n}", model.label(k))
    }

    /// Uncoupled energies E_k + Nω_c.
    pub fn bare_energies(&self, model: &MolecularModel, omega_c: f64) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let (k, n) = self.entry(i);
                model.energies()[k] + n as f64 * omega_c
            })
            .collect()
    }

    fn check(&self, model: &MolecularModel) -> Result<()> {
        if self.n_mol != model.n_states() {
            return Err(Error::Dimension {
                expected: model.n_states(),
                got: self.n_mol,
            });
        }
        Ok(())
    }
}

/// Coupling part of H (dipole ladder term plus optional self-energy), without
/// the diagonal E_k + Nω_c.
fn coupling_matrix(model: &MolecularModel, cav: &CavityParams, basis: &ProductBasis) -> DMatrix<f64> {
    let dim = basis.len();
    let n = model.n_states();
    let mu = model.dipole();
    let mut h = DMatrix::zeros(dim, dim);
    for nf in 0..basis.n_fock_max() {
        let s = cav.g * ((nf + 1) as f64).sqrt();
        for k in 0..n {
            for l in 0..n {
                let v = s * mu[(k, l)];
                if v != 0.0 {
                    let a = basis.index(k, nf + 1);
                    let b = basis.index(l, nf);
                    h[(a, b)] = v;
                    h[(b, a)] = v;
                }
            }
        }
    }
    if cav.include_dse {
        let mu2 = mu_squared_matrix(model);
        let c = cav.dse_prefactor();
        for nf in 0..=basis.n_fock_max() {
            for k in 0..n {
                for l in 0..n {
                    h[(basis.index(k, nf), basis.index(l, nf))] += c * mu2[(k, l)];
                }
            }
        }
    }
    h
}

/// μ ⊗ 1 over the product basis.
fn dipole_operator(model: &MolecularModel, basis: &ProductBasis) -> DMatrix<f64> {
    let dim = basis.len();
    let mu = model.dipole();
    DMatrix::from_fn(dim, dim, |a, b| {
        let (k, na) = basis.entry(a);
        let (l, nb) = basis.entry(b);
        if na == nb {
            mu[(k, l)]
        } else {
            0.0
        }
    })
}

pub fn assemble_hamiltonian(model: &MolecularModel, cav: &CavityParams, basis: &ProductBasis) -> Result<DMatrix<f64>> {
    cav.validate()?;
    basis.check(model)?;
    let mut h = coupling_matrix(model, cav, basis);
    for (i, e) in basis.bare_energies(model, cav.omega_c).into_iter().enumerate() {
        h[(i, i)] += e;
    }
    Ok(h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolaritonSolution {
    pub eigenvalues: Vec<f64>,
    /// Column j is eigenvector j.
    pub eigenvectors: DMatrix<f64>,
}

impl PolaritonSolution {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Eigenstate with the largest squared overlap on basis state `i`,
    /// provided that overlap exceeds `threshold`.
    pub fn dominant_eigenstate(&self, basis_index: usize, threshold: f64) -> Option<usize> {
        let row = self.eigenvectors.row(basis_index);
        let (j, w) = row
            .iter()
            .enumerate()
            .map(|(j, c)| (j, c * c))
            .fold((0, -1.0), |best, x| if x.1 > best.1 { x } else { best });
        (w > threshold).then_some(j)
    }

    /// Basis index carrying the largest weight of eigenstate j.
    pub fn dominant_basis_state(&self, j: usize) -> usize {
        self.eigenvectors
            .column(j)
            .iter()
            .enumerate()
            .fold((0, -1.0), |best, (i, c)| if c * c > best.1 { (i, c * c) } else { best })
            .0
    }
}

pub fn diagonalize_polaritons(h: &DMatrix<f64>) -> Result<PolaritonSolution> {
    let n = h.nrows();
    if h.ncols() != n {
        return Err(Error::Dimension {
            expected: n,
            got: h.ncols(),
        });
    }
    let scale = h.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in 0..i {
            if (h[(i, j)] - h[(j, i)]).abs() > 1e-14 * scale {
                return Err(Error::InvalidInput(format!("Hamiltonian is not symmetric at ({i},{j})")));
            }
        }
    }
    let eig = SymmetricEigen::try_new(h.clone(), f64::EPSILON, 1000 * n.max(10)).ok_or_else(|| eigen_failure(h))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut vecs = DMatrix::zeros(n, n);
    for (c, &k) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(k).clone_owned();
        // deterministic phase: largest component positive
        let imax = col.iamax();
        if col[imax] < 0.0 {
            col.neg_mut();
        }
        vecs.set_column(c, &col);
    }
    Ok(PolaritonSolution {
        eigenvalues: order.iter().map(|&k| eig.eigenvalues[k]).collect(),
        eigenvectors: vecs,
    })
}

/// Degenerate sticks closer than this are merged.
pub const STICK_MERGE_TOL: f64 = 1e-10;
/// Sticks weaker than this fraction of the strongest are dropped.
pub const STICK_REL_FLOOR: f64 = 1e-12;

/// Absorption sticks from polaritonic initial states (eigenstate index,
/// weight) to every higher eigenstate, intensity Σ w |⟨Ψ_i|μ⊗1|Ψ_f⟩|².
pub fn static_stick_spectrum(
    sol: &PolaritonSolution,
    model: &MolecularModel,
    basis: &ProductBasis,
    initial: &[(usize, f64)],
) -> Result<Spectrum> {
    basis.check(model)?;
    if sol.dim() != basis.len() {
        return Err(Error::Dimension {
            expected: basis.len(),
            got: sol.dim(),
        });
    }
    let dop = dipole_operator(model, basis);
    let mut raw: Vec<(f64, f64, usize, usize)> = Vec::new();
    for &(i, w) in initial {
        if i >= sol.dim() {
            return Err(Error::InvalidInput(format!("initial eigenstate {i} out of range")));
        }
        if w == 0.0 {
            continue;
        }
        let v: DVector<f64> = &dop * sol.eigenvectors.column(i);
        let amps = sol.eigenvectors.tr_mul(&v);
        for f in 0..sol.dim() {
            let om = sol.eigenvalues[f] - sol.eigenvalues[i];
            if om > STICK_MERGE_TOL {
                raw.push((om, w * amps[f] * amps[f], i, f));
            }
        }
    }
    let merged = merge_sticks(raw);
    let mut spec = Spectrum::sticks(
        merged.iter().map(|s| s.0).collect(),
        merged.iter().map(|s| s.1).collect(),
    );
    spec.stick_info = merged
        .iter()
        .map(|&(_, _, i, f)| StickInfo {
            label_i: basis.label(model, sol.dominant_basis_state(i)),
            label_f: basis.label(model, sol.dominant_basis_state(f)),
            ..StickInfo::default()
        })
        .collect();
    Ok(spec)
}

/// Sort, merge within `STICK_MERGE_TOL` (intensity-weighted position, labels
/// from the strongest member), drop sticks under the relative floor.
fn merge_sticks(mut raw: Vec<(f64, f64, usize, usize)>) -> Vec<(f64, f64, usize, usize)> {
    raw.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64, usize, usize)> = Vec::new();
    let mut group: Vec<(f64, f64, usize, usize)> = Vec::new();
    let flush = |group: &mut Vec<(f64, f64, usize, usize)>, out: &mut Vec<(f64, f64, usize, usize)>| {
        if group.is_empty() {
            return;
        }
        let tot: f64 = group.iter().map(|s| s.1).sum();
        let pos = if tot > 0.0 {
            group.iter().map(|s| s.0 * s.1).sum::<f64>() / tot
        } else {
            group[0].0
        };
        let best = group.iter().fold(group[0], |b, s| if s.1 > b.1 { *s } else { b });
        out.push((pos, tot, best.2, best.3));
        group.clear();
    };
    for s in raw {
        if let Some(last) = group.last() {
            if s.0 - last.0 > STICK_MERGE_TOL {
                flush(&mut group, &mut out);
            }
        }
        group.push(s);
    }
    flush(&mut group, &mut out);
    let imax = out.iter().fold(0.0f64, |a, s| a.max(s.1));
    out.retain(|s| s.1 > STICK_REL_FLOOR * imax);
    out
}

/// Map molecular thermal weights onto the dressed eigenstates that are
/// dominantly |ψ_i, 0⟩ (squared overlap > 0.5) and compute the weighted
/// stick spectrum. States without such an eigenstate are reported back.
pub fn thermal_static_spectrum(
    sol: &PolaritonSolution,
    model: &MolecularModel,
    basis: &ProductBasis,
    weights: &ThermalWeights,
) -> Result<(Spectrum, Vec<usize>)> {
    let mut initial = Vec::new();
    let mut unmatched = Vec::new();
    for (k, w) in weights.nonzero() {
        match sol.dominant_eigenstate(basis.index(k, 0), 0.5) {
            Some(j) => initial.push((j, w)),
            None => unmatched.push(k),
        }
    }
    Ok((static_stick_spectrum(sol, model, basis, &initial)?, unmatched))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    /// Interaction-picture coefficients over the product basis.
    pub coeffs: Vec<Complex64>,
    pub t: f64,
}

impl QuantumState {
    pub fn basis_state(basis: &ProductBasis, k: usize, n: usize) -> Self {
        let mut coeffs = vec![Complex64::default(); basis.len()];
        coeffs[basis.index(k, n)] = Complex64::new(1.0, 0.0);
        Self { coeffs, t: 0.0 }
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// (⟨q⟩, ⟨q²⟩) with q = (a + a†)/√(2ω_c). Only the photon-number phases
/// e^{−iNω_c t} enter, so the molecular energies are not needed.
pub fn photon_observables(state: &QuantumState, basis: &ProductBasis, cav: &CavityParams) -> (f64, f64) {
    let nm = basis.n_mol();
    let nmax = basis.n_fock_max();
    let rot = Complex64::from_polar(1.0, cav.omega_c * state.t);
    let c = &state.coeffs;
    let mut x = 0.0;
    let mut x2 = 0.0;
    for k in 0..nm {
        for n in 0..=nmax {
            let cn = c[basis.index(k, n)];
            x2 += (2 * n + 1) as f64 * cn.norm_sqr();
            if n < nmax {
                // ⟨N+1|a†|N⟩ = √(N+1), relative phase e^{−iω_c t}
                let cu = c[basis.index(k, n + 1)];
                x += 2.0 * ((n + 1) as f64).sqrt() * (cu.conj() * cn * rot).re;
            }
            if n + 2 <= nmax {
                let cuu = c[basis.index(k, n + 2)];
                x2 += 2.0 * (((n + 1) * (n + 2)) as f64).sqrt() * (cuu.conj() * cn * rot * rot).re;
            }
        }
    }
    let s = 2.0 * cav.omega_c;
    (x / s.sqrt(), x2 / s)
}

/// Kick-driven TDSE from |ψ_k, N⟩ in the interaction picture.
pub fn propagate_quantum(
    model: &MolecularModel,
    cav: &CavityParams,
    pulse: &KickPulse,
    init: (usize, usize),
    grid: &TimeGrid,
) -> Result<Trajectory> {
    cav.validate()?;
    pulse.validate()?;
    let basis = ProductBasis::for_model(model, cav);
    let bare = basis.bare_energies(model, cav.omega_c);
    let emax = bare.iter().cloned().fold(f64::MIN, f64::max) - bare.iter().cloned().fold(f64::MAX, f64::min);
    grid.validate(emax.max(model.max_transition() + cav.omega_c))?;
    if init.0 >= model.n_states() || init.1 > cav.n_fock_max {
        return Err(Error::InvalidInput(format!(
            "initial state (k={}, N={}) outside the product basis",
            init.0, init.1
        )));
    }
    let coupling = SparseOp::from_dense(&coupling_matrix(model, cav, &basis));
    let dop = SparseOp::from_dense(&dipole_operator(model, &basis));
    let dim = basis.len();

    let mut prop = QuantumPropagator {
        bare: &bare,
        coupling: &coupling,
        dipole: &dop,
        pulse: *pulse,
        psi: vec![Complex64::default(); dim],
        hpsi: vec![Complex64::default(); dim],
        phase: vec![Complex64::default(); dim],
    };
    let mut rk = crate::integrator::Rk4::new(dim);
    let mut state = QuantumState::basis_state(&basis, init.0, init.1);

    let n_steps = grid.n_steps();
    let n_rec = n_steps / grid.stride + 1;
    let mut times = Vec::with_capacity(n_rec);
    let mut dipole = Vec::with_capacity(n_rec);
    let mut pops = vec![Vec::with_capacity(n_rec); dim];
    let mut qe = Vec::with_capacity(n_rec);
    let mut q2e = Vec::with_capacity(n_rec);
    let mut energy = Vec::with_capacity(n_rec);
    let mut norm = Vec::with_capacity(n_rec);

    let mut step = 0usize;
    loop {
        let nrm = state.norm();
        if (nrm - 1.0).abs() > NORM_FAILURE_LIMIT {
            return Err(Error::Integration {
                t: state.t,
                drift: (nrm - 1.0).abs(),
                limit: NORM_FAILURE_LIMIT,
                dt: grid.dt,
            });
        }
        let psi: Vec<Complex64> = state
            .coeffs
            .iter()
            .zip(&bare)
            .map(|(c, e)| c * Complex64::from_polar(1.0, -e * state.t))
            .collect();
        times.push(state.t);
        dipole.push(dop.expect(&psi));
        for (i, c) in state.coeffs.iter().enumerate() {
            pops[i].push(c.norm_sqr());
        }
        let (q, q2) = photon_observables(&state, &basis, cav);
        qe.push(q);
        q2e.push(q2);
        let e_bare: f64 = psi.iter().zip(&bare).map(|(c, e)| c.norm_sqr() * e).sum();
        energy.push(e_bare + coupling.expect(&psi));
        norm.push(nrm);
        if step + grid.stride > n_steps {
            break;
        }
        for s in 0..grid.stride {
            let t = (step + s) as f64 * grid.dt;
            rk.step(&mut |t, y: &[Complex64], dy: &mut [Complex64]| prop.rhs(t, y, dy), t, grid.dt, &mut state.coeffs);
        }
        step += grid.stride;
        state.t = step as f64 * grid.dt;
    }

    Ok(Trajectory {
        times,
        dipole,
        state_labels: (0..dim).map(|i| basis.label(model, i)).collect(),
        populations: pops,
        field: FieldSeries::Quantum {
            q_expect: qe,
            q2_expect: q2e,
        },
        energy,
        norm,
        dt: grid.dt,
        pulse_start: pulse.support_start(),
        pulse_end: pulse.support_end(),
    })
}

struct QuantumPropagator<'a> {
    bare: &'a [f64],
    coupling: &'a SparseOp,
    dipole: &'a SparseOp,
    pulse: KickPulse,
    psi: Vec<Complex64>,
    hpsi: Vec<Complex64>,
    phase: Vec<Complex64>,
}

impl QuantumPropagator<'_> {
    fn rhs(&mut self, t: f64, y: &[Complex64], dy: &mut [Complex64]) {
        for i in 0..y.len() {
            self.phase[i] = Complex64::from_polar(1.0, -self.bare[i] * t);
            self.psi[i] = y[i] * self.phase[i];
            self.hpsi[i] = Complex64::default();
        }
        self.coupling.apply_add(1.0, &self.psi, &mut self.hpsi);
        let f = self.pulse.field(t);
        if f != 0.0 {
            self.dipole.apply_add(f, &self.psi, &mut self.hpsi);
        }
        for i in 0..y.len() {
            dy[i] = -Complex64::i() * self.hpsi[i] * self.phase[i].conj();
        }
    }
}
