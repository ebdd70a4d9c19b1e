//! N identical 3-level emitters in one mode, coupling g/√N. Brute-force
//! diagonalization (full product basis, or the permutation-symmetric
//! subspace) and the closed-form block spectra.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::classical::CavityParams;
use crate::error::{Error, Result};
use crate::model::MolecularModel;
use crate::quantum::{diagonalize_polaritons, PolaritonSolution, STICK_MERGE_TOL, STICK_REL_FLOOR};
use crate::spectra::{Branch, Mechanism, Spectrum, StickInfo};

pub const MAX_BRUTE_FORCE_MOLECULES: usize = 8;
/// Dense diagonalization is refused beyond this dimension.
pub const MAX_DENSE_DIM: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManyMolConfig {
    pub n_mol: usize,
    /// Molecules in ψ_0; the remaining n_mol − n0 are in ψ_1.
    pub n0: usize,
    /// Bare coupling; the Hamiltonian uses g/√n_mol.
    pub g: f64,
    pub mu: f64,
    pub omega02: f64,
    pub omega12: f64,
}

impl ManyMolConfig {
    pub fn n1(&self) -> usize {
        self.n_mol - self.n0
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_mol == 0 {
            return Err(Error::InvalidInput("n_mol must be at least 1".into()));
        }
        if self.n0 > self.n_mol {
            return Err(Error::InvalidInput(format!(
                "n0 = {} exceeds n_mol = {}",
                self.n0, self.n_mol
            )));
        }
        if self.n_mol > 1020 {
            return Err(Error::Size {
                what: "n_mol (binomial weights)",
                value: self.n_mol,
                limit: 1020,
            });
        }
        Ok(())
    }
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn push_stick(
    spec: &mut Vec<(f64, f64, StickInfo)>,
    omega: f64,
    weight: f64,
    n_mol: usize,
    n0: usize,
    branch: Branch,
    mechanism: Mechanism,
) {
    if weight > 0.0 {
        spec.push((
            omega,
            weight,
            StickInfo {
                n_mol: Some(n_mol),
                n0: Some(n0),
                branch: Some(branch),
                mechanism: Some(mechanism),
                ..StickInfo::default()
            },
        ));
    }
}

fn to_spectrum(mut sticks: Vec<(f64, f64, StickInfo)>) -> Spectrum {
    sticks.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut s = Spectrum::sticks(sticks.iter().map(|x| x.0).collect(), sticks.iter().map(|x| x.1).collect());
    s.stick_info = sticks.into_iter().map(|x| x.2).collect();
    s
}

/// Block-diagonal spectrum for n0 molecules in ψ_0 and the rest in ψ_1,
/// summed over all C(N, n0) arrangements.
pub fn analytic_nonsymmetric_spectrum(cfg: &ManyMolConfig) -> Result<Spectrum> {
    cfg.validate()?;
    let (n, n0) = (cfg.n_mol, cfg.n0);
    let nf = n as f64;
    let mu2 = cfg.mu * cfg.mu;
    let mut st = Vec::new();
    for sgn in [-1.0, 1.0] {
        let r = cfg.omega02 + sgn * cfg.g * (n0 as f64 / nf).sqrt() * cfg.mu;
        push_stick(&mut st, r, n0 as f64 * 0.5 * mu2 * binomial(n, n0), n, n0, Branch::R, Mechanism::Polariton);
        let p = cfg.omega12 + sgn * cfg.g * ((n0 + 1) as f64 / nf).sqrt() * cfg.mu;
        push_stick(&mut st, p, 0.5 * mu2 * binomial(n, n0 + 1), n, n0, Branch::P, Mechanism::Twin);
    }
    push_stick(
        &mut st,
        cfg.omega12,
        n0 as f64 * mu2 * binomial(n, n0 + 1),
        n,
        n0,
        Branch::P,
        Mechanism::Dark,
    );
    Ok(to_spectrum(st))
}

/// Spectrum of the product state ((ψ_0 + ψ_1)/√2)^{⊗N}: a binomial mixture
/// of n0-sectors. Per stick, R carries n0·C(N,n0)/2^{N+1}·μ² and TP
/// (N − n0)·C(N,n0)/2^{N+1}·μ², so the total intensity is Nμ²/2 per branch.
pub fn analytic_symmetric_spectrum(cfg: &ManyMolConfig) -> Result<Spectrum> {
    cfg.validate()?;
    let n = cfg.n_mol;
    let nf = n as f64;
    let mu2 = cfg.mu * cfg.mu;
    let norm = 2f64.powi(n as i32 + 1);
    let mut st = Vec::new();
    for n0 in 0..=n {
        let c = binomial(n, n0) / norm;
        for sgn in [-1.0, 1.0] {
            let r = cfg.omega02 + sgn * cfg.g * cfg.mu * (n0 as f64 / nf).sqrt();
            push_stick(&mut st, r, n0 as f64 * c * mu2, n, n0, Branch::R, Mechanism::Polariton);
            let p = cfg.omega12 + sgn * cfg.g * cfg.mu * ((n0 + 1) as f64 / nf).sqrt();
            push_stick(&mut st, p, (n - n0) as f64 * c * mu2, n, n0, Branch::P, Mechanism::Twin);
        }
    }
    Ok(to_spectrum(st))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitBranch {
    Thermal,
    Symmetric,
}

/// N → ∞ closed forms. Thermal: R at ω_02 ± g√r0·μ with r0·μ² each and the
/// dark line at ω_12 with 2(1 − r0)·μ² (μ²/2 and μ² at r0 = ½). Symmetric:
/// ω_02 ± √2gμ and ω_12 ± √2gμ with μ²/2 each.
///
/// The symmetric form is the commonly quoted one; note that the large-N
/// limit of `analytic_symmetric_spectrum` concentrates at ±gμ/√2 instead.
pub fn thermodynamic_limit_spectrum(
    r0: f64,
    branch: LimitBranch,
    g: f64,
    mu: f64,
    omega02: f64,
    omega12: f64,
) -> Result<Spectrum> {
    if !(0.0..=1.0).contains(&r0) {
        return Err(Error::InvalidInput(format!("r0 must lie in [0, 1], got {r0}")));
    }
    let mu2 = mu * mu;
    let mut st = Vec::new();
    let info = |b: Branch, m: Mechanism| StickInfo {
        branch: Some(b),
        mechanism: Some(m),
        ..StickInfo::default()
    };
    match branch {
        LimitBranch::Thermal => {
            let d = g * r0.sqrt() * mu;
            if r0 > 0.0 {
                st.push((omega02 - d, r0 * mu2, info(Branch::R, Mechanism::Polariton)));
                st.push((omega02 + d, r0 * mu2, info(Branch::R, Mechanism::Polariton)));
            }
            if r0 < 1.0 {
                st.push((omega12, 2.0 * (1.0 - r0) * mu2, info(Branch::P, Mechanism::Dark)));
            }
        }
        LimitBranch::Symmetric => {
            let d = std::f64::consts::SQRT_2 * g * mu;
            for s in [-1.0, 1.0] {
                st.push((omega02 + s * d, 0.5 * mu2, info(Branch::R, Mechanism::Polariton)));
                st.push((omega12 + s * d, 0.5 * mu2, info(Branch::P, Mechanism::Twin)));
            }
        }
    }
    Ok(to_spectrum(st))
}

/// Orthonormal rows spanning the complement of (1,…,1)/√n0, by Gram–Schmidt
/// over the unit vectors e_1, e_2, … in order.
pub fn dark_state_coefficients(n0: usize) -> Vec<Vec<f64>> {
    if n0 < 2 {
        return Vec::new();
    }
    let s = vec![1.0 / (n0 as f64).sqrt(); n0];
    let mut rows: Vec<Vec<f64>> = vec![s];
    for seed in 0..n0 {
        if rows.len() == n0 {
            break;
        }
        let mut v = vec![0.0; n0];
        v[seed] = 1.0;
        // two passes for numerical orthogonality
        for _ in 0..2 {
            for r in &rows {
                let d: f64 = r.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(r).for_each(|(x, y)| *x -= d * y);
            }
        }
        let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm > 1e-10 {
            v.iter_mut().for_each(|x| *x /= nrm);
            rows.push(v);
        }
    }
    rows.remove(0);
    rows
}

/// Ground arrangement |G⟩ (each molecule in ψ_0 or ψ_1, no photon) and the
/// one-excitation states it couples to.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldBasis {
    pub n_mol: usize,
    pub n0: usize,
    /// All arrangements with n0 molecules in ψ_0, lexicographic.
    pub ground: Vec<Vec<u8>>,
    pub symmetric_row: Vec<f64>,
    pub dark_rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExcitedKind {
    Photon,
    Symmetric,
    Dark(usize),
}

/// Sparse product-basis vector: (levels per molecule, photons, amplitude).
pub type ProductVector = Vec<(Vec<u8>, usize, f64)>;

impl ManifoldBasis {
    pub fn new(n_mol: usize, n0: usize) -> Result<Self> {
        if n0 > n_mol || n_mol == 0 {
            return Err(Error::InvalidInput(format!("invalid occupation n0={n0}, n_mol={n_mol}")));
        }
        if n_mol > 24 {
            return Err(Error::Size {
                what: "n_mol (explicit arrangements)",
                value: n_mol,
                limit: 24,
            });
        }
        let mut ground = Vec::new();
        for mask in 0u32..(1 << n_mol) {
            if (n_mol - mask.count_ones() as usize) == n0 {
                ground.push((0..n_mol).rev().map(|i| ((mask >> i) & 1) as u8).collect::<Vec<u8>>());
            }
        }
        ground.sort();
        Ok(Self {
            n_mol,
            n0,
            ground,
            symmetric_row: if n0 > 0 { vec![1.0 / (n0 as f64).sqrt(); n0] } else { Vec::new() },
            dark_rows: dark_state_coefficients(n0),
        })
    }

    /// |G⟩|1⟩, |S⟩|0⟩ (symmetric ψ_0→ψ_2 excitation) and |D_k⟩|0⟩ for
    /// arrangement `gi`.
    pub fn excited_states(&self, gi: usize) -> Vec<(ExcitedKind, ProductVector)> {
        let g = &self.ground[gi];
        let zeros: Vec<usize> = (0..self.n_mol).filter(|&i| g[i] == 0).collect();
        let excite = |row: &[f64]| -> ProductVector {
            zeros
                .iter()
                .zip(row)
                .map(|(&i, &c)| {
                    let mut conf = g.clone();
                    conf[i] = 2;
                    (conf, 0usize, c)
                })
                .collect()
        };
        let mut out = vec![(ExcitedKind::Photon, vec![(g.clone(), 1usize, 1.0)])];
        if !zeros.is_empty() {
            out.push((ExcitedKind::Symmetric, excite(&self.symmetric_row)));
        }
        for (k, row) in self.dark_rows.iter().enumerate() {
            out.push((ExcitedKind::Dark(k), excite(row)));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManyMolBasisKind {
    /// Every molecule labeled individually (3^N configurations).
    Product,
    /// Permutation-symmetric states labeled by occupation numbers.
    Symmetric,
}

/// Hamiltonian over a molecular basis ⊗ Fock states (photon-major).
#[derive(Debug, Clone)]
pub struct ManyMolSystem {
    pub kind: ManyMolBasisKind,
    pub n_mol: usize,
    pub cavity: CavityParams,
    /// Product: level of each molecule. Symmetric: (n0, n1, n2).
    pub mol_states: Vec<Vec<u8>>,
    pub hamiltonian: DMatrix<f64>,
    /// Total dipole ⊗ 1 in the same basis.
    pub dipole: DMatrix<f64>,
    omega02: f64,
    omega12: f64,
}

type Sparse = Vec<Vec<(usize, f64)>>;

fn check_three_level(model: &MolecularModel) -> Result<()> {
    if model.n_states() != 3 {
        return Err(Error::InvalidModel(format!(
            "many-molecule solvers need a 3-level model, got {} states",
            model.n_states()
        )));
    }
    Ok(())
}

impl ManyMolSystem {
    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    fn n_mol_states(&self) -> usize {
        self.mol_states.len()
    }

    /// (molecular index, photons) of basis index i.
    pub fn entry(&self, i: usize) -> (usize, usize) {
        (i % self.n_mol_states(), i / self.n_mol_states())
    }

    pub fn index(&self, m: usize, photons: usize) -> usize {
        photons * self.n_mol_states() + m
    }

    pub fn label(&self, i: usize) -> String {
        let (m, n) = self.entry(i);
        let s = &self.mol_states[m];
        match self.kind {
            ManyMolBasisKind::Product => {
                let levels: String = s.iter().map(|x| char::from(b'0' + x)).collect();
                format!("|{levels}>,N={n}")
            }
            ManyMolBasisKind::Symmetric => format!("n=({},{},{}),N={n}", s[0], s[1], s[2]),
        }
    }

    fn assemble(
        kind: ManyMolBasisKind,
        n_mol: usize,
        cav: &CavityParams,
        model: &MolecularModel,
        mol_states: Vec<Vec<u8>>,
        energies: Vec<f64>,
        mu: Sparse,
    ) -> Result<Self> {
        let nm = mol_states.len();
        let nph = cav.n_fock_max + 1;
        let dim = nm * nph;
        if dim > MAX_DENSE_DIM {
            return Err(Error::Size {
                what: "many-molecule basis dimension",
                value: dim,
                limit: MAX_DENSE_DIM,
            });
        }
        let gn = cav.g / (n_mol as f64).sqrt();
        let dse = if cav.include_dse { gn * gn / cav.omega_c } else { 0.0 };
        let mut h = DMatrix::zeros(dim, dim);
        let mut d = DMatrix::zeros(dim, dim);
        for ph in 0..nph {
            for a in 0..nm {
                h[(ph * nm + a, ph * nm + a)] += energies[a] + ph as f64 * cav.omega_c;
                for &(b, v) in &mu[a] {
                    d[(ph * nm + b, ph * nm + a)] += v;
                    if ph + 1 < nph {
                        let c = gn * ((ph + 1) as f64).sqrt() * v;
                        h[((ph + 1) * nm + b, ph * nm + a)] += c;
                        h[(ph * nm + a, (ph + 1) * nm + b)] += c;
                    }
                    if dse != 0.0 {
                        for &(c2, w) in &mu[b] {
                            h[(ph * nm + c2, ph * nm + a)] += dse * v * w;
                        }
                    }
                }
            }
        }
        // exact symmetry for the eigensolver's check
        for i in 0..dim {
            for j in 0..i {
                let s = 0.5 * (h[(i, j)] + h[(j, i)]);
                h[(i, j)] = s;
                h[(j, i)] = s;
            }
        }
        let e = model.energies();
        Ok(Self {
            kind,
            n_mol,
            cavity: *cav,
            mol_states,
            hamiltonian: h,
            dipole: d,
            omega02: e[2] - e[0],
            omega12: e[2] - e[1],
        })
    }

    pub fn solve(&self) -> Result<PolaritonSolution> {
        diagonalize_polaritons(&self.hamiltonian)
    }

    /// Normalized (ψ_0 + ψ_1)/√2 on every molecule, vacuum field.
    pub fn symmetric_superposition(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim());
        let nf = self.n_mol as f64;
        for (m, s) in self.mol_states.iter().enumerate() {
            let amp = match self.kind {
                ManyMolBasisKind::Product if s.iter().all(|&x| x < 2) => 2f64.powf(-nf / 2.0),
                ManyMolBasisKind::Symmetric if s[2] == 0 => {
                    (binomial(self.n_mol, s[0] as usize)).sqrt() * 2f64.powf(-nf / 2.0)
                }
                _ => 0.0,
            };
            v[self.index(m, 0)] = amp;
        }
        v
    }

    fn stick_info(&self, sol: &PolaritonSolution, i: usize, f: usize, omega: f64, n0: Option<usize>) -> StickInfo {
        let branch = if (omega - self.omega02).abs() < (omega - self.omega12).abs() {
            Branch::R
        } else {
            Branch::P
        };
        StickInfo {
            label_i: self.label(sol.dominant_basis_state(i)),
            label_f: self.label(sol.dominant_basis_state(f)),
            n_mol: Some(self.n_mol),
            n0,
            branch: Some(branch),
            mechanism: None,
        }
    }

    /// Sticks from all eigenstates that are mostly (> 0.5) inside the span
    /// of the ground arrangements with n0 molecules in ψ_0, weight 1 each.
    pub fn thermal_spectrum(&self, sol: &PolaritonSolution, n0: usize) -> Result<Spectrum> {
        if self.kind != ManyMolBasisKind::Product {
            return Err(Error::InvalidInput("thermal arrangements need the full product basis".into()));
        }
        if n0 > self.n_mol {
            return Err(Error::InvalidInput(format!("n0 = {n0} exceeds n_mol = {}", self.n_mol)));
        }
        let targets: Vec<usize> = self
            .mol_states
            .iter()
            .enumerate()
            .filter(|(_, s)| s.iter().all(|&x| x < 2) && s.iter().filter(|&&x| x == 0).count() == n0)
            .map(|(m, _)| self.index(m, 0))
            .collect();
        let initial: Vec<usize> = (0..sol.dim())
            .filter(|&j| targets.iter().map(|&t| sol.eigenvectors[(t, j)].powi(2)).sum::<f64>() > 0.5)
            .collect();
        let mut raw = Vec::new();
        for &i in &initial {
            let amps = sol.eigenvectors.tr_mul(&(&self.dipole * sol.eigenvectors.column(i)));
            for f in 0..sol.dim() {
                let om = sol.eigenvalues[f] - sol.eigenvalues[i];
                if om > STICK_MERGE_TOL {
                    raw.push((om, amps[f] * amps[f], self.stick_info(sol, i, f, om, Some(n0))));
                }
            }
        }
        Ok(finish(raw))
    }

    /// Sticks of an arbitrary (real) initial vector: it is split over groups
    /// of degenerate eigenstates (within 1e-9), and each group P_I contributes
    /// |⟨Ψ_f|μ P_I init⟩|² at E_f − E_I.
    pub fn superposition_spectrum(&self, sol: &PolaritonSolution, init: &DVector<f64>) -> Result<Spectrum> {
        if init.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: init.len(),
            });
        }
        let c = sol.eigenvectors.tr_mul(init);
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for j in 0..sol.dim() {
            if c[j].abs() < 1e-8 {
                continue;
            }
            match groups.last_mut() {
                Some(gr) if (sol.eigenvalues[j] - sol.eigenvalues[gr[0]]).abs() < 1e-9 => gr.push(j),
                _ => groups.push(vec![j]),
            }
        }
        let mut raw = Vec::new();
        for gr in &groups {
            let mut proj = DVector::zeros(self.dim());
            for &j in gr {
                proj += sol.eigenvectors.column(j) * c[j];
            }
            let amps = sol.eigenvectors.tr_mul(&(&self.dipole * proj));
            let lead = *gr.iter().max_by(|&&a, &&b| c[a].abs().total_cmp(&c[b].abs())).unwrap();
            for f in 0..sol.dim() {
                let om = sol.eigenvalues[f] - sol.eigenvalues[gr[0]];
                if om > STICK_MERGE_TOL {
                    raw.push((om, amps[f] * amps[f], self.stick_info(sol, lead, f, om, None)));
                }
            }
        }
        Ok(finish(raw))
    }
}

fn finish(mut raw: Vec<(f64, f64, StickInfo)>) -> Spectrum {
    raw.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64, StickInfo, f64)> = Vec::new();
    for (om, x, info) in raw {
        match out.last_mut() {
            Some(last) if om - last.0 <= STICK_MERGE_TOL => {
                let tot = last.1 + x;
                if tot > 0.0 {
                    last.0 = (last.0 * last.1 + om * x) / tot;
                }
                last.1 = tot;
                if x > last.3 {
                    last.2 = info;
                    last.3 = x;
                }
            }
            _ => out.push((om, x, info, x)),
        }
    }
    let imax = out.iter().fold(0.0f64, |a, s| a.max(s.1));
    out.retain(|s| s.1 > STICK_REL_FLOOR * imax);
    let mut s = Spectrum::sticks(out.iter().map(|o| o.0).collect(), out.iter().map(|o| o.1).collect());
    s.stick_info = out.into_iter().map(|o| o.2).collect();
    s
}

/// Full 3^N product basis with H_mol = Σ_i H_mol(i), μ = Σ_i μ(i), coupling
/// g/√N, and the self-energy on the total dipole when enabled.
pub fn build_many_molecule_hamiltonian(model: &MolecularModel, cav: &CavityParams, n_mol: usize) -> Result<ManyMolSystem> {
    check_three_level(model)?;
    cav.validate()?;
    if n_mol == 0 {
        return Err(Error::InvalidInput("n_mol must be at least 1".into()));
    }
    if n_mol > MAX_BRUTE_FORCE_MOLECULES {
        return Err(Error::Size {
            what: "n_mol (brute force)",
            value: n_mol,
            limit: MAX_BRUTE_FORCE_MOLECULES,
        });
    }
    let nm = 3usize.pow(n_mol as u32);
    if nm * (cav.n_fock_max + 1) > MAX_DENSE_DIM {
        return Err(Error::Size {
            what: "many-molecule basis dimension",
            value: nm * (cav.n_fock_max + 1),
            limit: MAX_DENSE_DIM,
        });
    }
    let confs: Vec<Vec<u8>> = (0..nm)
        .map(|mut x| {
            let mut c = vec![0u8; n_mol];
            for slot in c.iter_mut().rev() {
                *slot = (x % 3) as u8;
                x /= 3;
            }
            c
        })
        .collect();
    let index: HashMap<&[u8], usize> = confs.iter().enumerate().map(|(i, c)| (c.as_slice(), i)).collect();
    let e = model.energies();
    let d = model.dipole();
    let energies = confs.iter().map(|c| c.iter().map(|&x| e[x as usize]).sum()).collect();
    let mut mu: Sparse = vec![Vec::new(); nm];
    for (a, c) in confs.iter().enumerate() {
        let mut acc: HashMap<usize, f64> = HashMap::new();
        for i in 0..n_mol {
            for k in 0..3u8 {
                let v = d[(k as usize, c[i] as usize)];
                if v != 0.0 {
                    let mut c2 = c.clone();
                    c2[i] = k;
                    *acc.entry(index[c2.as_slice()]).or_default() += v;
                }
            }
        }
        let mut row: Vec<(usize, f64)> = acc.into_iter().collect();
        row.sort_by_key(|x| x.0);
        mu[a] = row;
    }
    ManyMolSystem::assemble(ManyMolBasisKind::Product, n_mol, cav, model, confs, energies, mu)
}

/// Permutation-symmetric subspace |n0, n1, n2⟩ (occupation numbers). Exact
/// for symmetric initial states at any N, since H and μ preserve symmetry.
pub fn build_symmetric_hamiltonian(model: &MolecularModel, cav: &CavityParams, n_mol: usize) -> Result<ManyMolSystem> {
    check_three_level(model)?;
    cav.validate()?;
    if n_mol == 0 || n_mol > 255 {
        return Err(Error::InvalidInput(format!("n_mol must be in 1..=255, got {n_mol}")));
    }
    let mut occ = Vec::new();
    for n2 in 0..=n_mol {
        for n1 in 0..=(n_mol - n2) {
            occ.push(vec![(n_mol - n1 - n2) as u8, n1 as u8, n2 as u8]);
        }
    }
    let index: HashMap<Vec<u8>, usize> = occ.iter().cloned().enumerate().map(|(i, o)| (o, i)).collect();
    let e = model.energies();
    let d = model.dipole();
    let energies = occ.iter().map(|o| (0..3).map(|k| o[k] as f64 * e[k]).sum()).collect();
    let mut mu: Sparse = vec![Vec::new(); occ.len()];
    for (a, o) in occ.iter().enumerate() {
        let mut row = Vec::new();
        let diag: f64 = (0..3).map(|k| d[(k, k)] * o[k] as f64).sum();
        if diag != 0.0 {
            row.push((a, diag));
        }
        // one molecule moves from level s to level t
        for s in 0..3 {
            for t in 0..3 {
                if s == t || o[s] == 0 || d[(t, s)] == 0.0 {
                    continue;
                }
                let mut o2 = o.clone();
                o2[s] -= 1;
                o2[t] += 1;
                let v = d[(t, s)] * ((o[s] as f64) * (o[t] as f64 + 1.0)).sqrt();
                row.push((index[&o2], v));
            }
        }
        row.sort_by_key(|x| x.0);
        mu[a] = row;
    }
    ManyMolSystem::assemble(ManyMolBasisKind::Symmetric, n_mol, cav, model, occ, energies, mu)
}
