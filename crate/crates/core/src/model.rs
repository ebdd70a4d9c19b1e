//! Cavity-free molecular models: the 3-level Λ system and a Morse rovibrational
//! diatomic. Everything downstream only sees `MolecularModel`.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{cm1_to_hartree, hartree_to_cm1, BOLTZMANN_HARTREE_PER_K};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateLabel {
    Level { index: usize },
    Rovib { v: u32, j: u32, m: i32 },
}

impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateLabel::Level { index } => write!(f, "psi_{index}"),
            StateLabel::Rovib { v, j, m } => write!(f, "v={v},J={j},M={m}"),
        }
    }
}

impl StateLabel {
    /// Accepts the display form, ignoring whitespace and the case of the
    /// quantum-number letters.
    pub fn parse(s: &str) -> Option<StateLabel> {
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if let Some(rest) = t.strip_prefix("psi_") {
            return rest.parse().ok().map(|index| StateLabel::Level { index });
        }
        let mut v = None;
        let mut j = None;
        let mut m = None;
        for part in t.split(',') {
            let (key, val) = part.split_once('=')?;
            match key.to_ascii_lowercase().as_str() {
                "v" => v = val.parse().ok(),
                "j" => j = val.parse().ok(),
                "m" => m = val.parse().ok(),
                _ => return None,
            }
        }
        Some(StateLabel::Rovib {
            v: v?,
            j: j?,
            m: m?,
        })
    }
}

/// Field-free eigenstates: energies (hartree, ground state at zero), the
/// dipole matrix in that basis, and a label per state.
#[derive(Debug, Clone, PartialEq)]
pub struct MolecularModel {
    energies: Vec<f64>,
    dipole: DMatrix<f64>,
    labels: Vec<StateLabel>,
}

impl MolecularModel {
    pub fn new(energies: Vec<f64>, dipole: DMatrix<f64>, labels: Vec<StateLabel>) -> Result<Self> {
        let n = energies.len();
        if n == 0 {
            return Err(Error::InvalidModel("model has no states".into()));
        }
        if dipole.nrows() != n || dipole.ncols() != n {
            return Err(Error::Dimension {
                expected: n,
                got: dipole.nrows().max(dipole.ncols()),
            });
        }
        if labels.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: labels.len(),
            });
        }
        if energies.iter().any(|e| !e.is_finite()) || dipole.iter().any(|d| !d.is_finite()) {
            return Err(Error::InvalidModel("non-finite energy or dipole entry".into()));
        }
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (dipole[(i, j)], dipole[(j, i)]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::InvalidModel(format!(
                        "dipole matrix not symmetric at ({i},{j}): {a} vs {b}"
                    )));
                }
            }
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::InvalidModel(format!("duplicate state label {l}")));
            }
        }
        Ok(Self {
            energies,
            dipole,
            labels,
        })
    }

    pub fn n_states(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn dipole(&self) -> &DMatrix<f64> {
        &self.dipole
    }

    pub fn labels(&self) -> &[StateLabel] {
        &self.labels
    }

    pub fn label(&self, k: usize) -> StateLabel {
        self.labels[k]
    }

    pub fn index_of(&self, label: &StateLabel) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn find_label(&self, s: &str) -> Option<usize> {
        StateLabel::parse(s).and_then(|l| self.index_of(&l))
    }

    /// Largest transition frequency max|E_k − E_l|.
    pub fn max_transition(&self) -> f64 {
        let lo = self.energies.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    }

    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            energies_hartree: self.energies.clone(),
            dipole: (0..self.n_states())
                .map(|i| self.dipole.row(i).iter().cloned().collect())
                .collect(),
            labels: self.labels.clone(),
        }
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        let n = doc.energies_hartree.len();
        if doc.dipole.len() != n || doc.dipole.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidModel(format!(
                "dipole must be {n}x{n} to match the energy list"
            )));
        }
        let dipole = DMatrix::from_fn(n, n, |i, j| doc.dipole[i][j]);
        Self::new(doc.energies_hartree.clone(), dipole, doc.labels.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(s)?)
    }
}

/// Serialized form of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub energies_hartree: Vec<f64>,
    pub dipole: Vec<Vec<f64>>,
    pub labels: Vec<StateLabel>,
}

pub fn build_three_level(e0: f64, e1: f64, e2: f64, mu02: f64, mu12: f64) -> Result<MolecularModel> {
    if !(e0 < e1 && e1 < e2) {
        return Err(Error::InvalidModel(format!(
            "3-level energies must satisfy E0 < E1 < E2, got ({e0}, {e1}, {e2})"
        )));
    }
    let mut d = DMatrix::zeros(3, 3);
    d[(0, 2)] = mu02;
    d[(2, 0)] = mu02;
    d[(1, 2)] = mu12;
    d[(2, 1)] = mu12;
    MolecularModel::new(
        vec![0.0, e1 - e0, e2 - e0],
        d,
        (0..3).map(|index| StateLabel::Level { index }).collect(),
    )
}

/// Morse potential V(R) = D_e (e^{-2α(R-R_e)} − 2 e^{-α(R-R_e)}) plus a
/// polynomial dipole curve μ(R) = Σ c_n (R − R_e)^n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorseParams {
    pub de_cm1: f64,
    pub alpha: f64,
    pub re: f64,
    pub m1: f64,
    pub m2: f64,
    pub v_max: u32,
    pub j_max: u32,
    pub dipole_curve: Vec<f64>,
}

impl Default for MorseParams {
    /// H³⁵Cl. The dipole curve is a placeholder: only intensities depend on it.
    fn default() -> Self {
        Self {
            de_cm1: 37209.369,
            alpha: 0.993099,
            re: 2.40855,
            m1: 1837.1522,
            m2: 63744.3019,
            v_max: 1,
            j_max: 10,
            dipole_curve: vec![0.43, 0.30],
        }
    }
}

impl MorseParams {
    pub fn reduced_mass(&self) -> f64 {
        self.m1 * self.m2 / (self.m1 + self.m2)
    }

    pub fn de(&self) -> f64 {
        cm1_to_hartree(self.de_cm1)
    }

    pub fn potential(&self, r: f64) -> f64 {
        let x = (-self.alpha * (r - self.re)).exp();
        self.de() * (x * x - 2.0 * x)
    }

    pub fn dipole_at(&self, r: f64) -> f64 {
        let dr = r - self.re;
        self.dipole_curve.iter().rev().fold(0.0, |acc, c| acc * dr + c)
    }

    /// Harmonic frequency ω_e = α √(2 D_e / m).
    pub fn omega_e(&self) -> f64 {
        self.alpha * (2.0 * self.de() / self.reduced_mass()).sqrt()
    }

    /// Closed-form J = 0 Morse level measured from the potential minimum.
    pub fn analytic_level(&self, v: u32) -> f64 {
        let we = self.omega_e();
        let wexe = we * we / (4.0 * self.de());
        let x = v as f64 + 0.5;
        we * x - wexe * x * x - self.de()
    }

    pub fn rotational_constant(&self) -> f64 {
        1.0 / (2.0 * self.reduced_mass() * self.re * self.re)
    }

    fn validate(&self) -> Result<()> {
        if !(self.de_cm1 > 0.0 && self.alpha > 0.0 && self.re > 0.0 && self.m1 > 0.0 && self.m2 > 0.0) {
            return Err(Error::InvalidModel(
                "Morse parameters D_e, alpha, R_e and both masses must be positive".into(),
            ));
        }
        if self.j_max < 1 {
            return Err(Error::InvalidModel("j_max must be at least 1".into()));
        }
        if self.dipole_curve.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidModel("dipole curve has non-finite coefficients".into()));
        }
        Ok(())
    }
}

/// Interior points of a sine DVR on the open interval (r_min, r_max).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    pub r_min: f64,
    pub r_max: f64,
    pub n_points: usize,
}

impl Default for RadialGrid {
    fn default() -> Self {
        Self {
            r_min: 1.2,
            r_max: 6.0,
            n_points: 400,
        }
    }
}

impl RadialGrid {
    pub fn points(&self) -> Vec<f64> {
        let n = self.n_points + 1;
        let h = (self.r_max - self.r_min) / n as f64;
        (1..n).map(|i| self.r_min + i as f64 * h).collect()
    }

    fn validate(&self) -> Result<()> {
        if !(self.r_min > 0.0 && self.r_max > self.r_min) || self.n_points < 8 {
            return Err(Error::InvalidModel(format!(
                "radial grid needs 0 < r_min < r_max and at least 8 points, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Kinetic energy matrix of the sine DVR (box eigenfunctions as the
/// underlying basis).
pub fn sine_dvr_kinetic(grid: &RadialGrid, mass: f64) -> DMatrix<f64> {
    let n = grid.n_points + 1;
    let nf = n as f64;
    let len = grid.r_max - grid.r_min;
    let pref = PI * PI / (2.0 * len * len) / (2.0 * mass);
    let m = grid.n_points;
    DMatrix::from_fn(m, m, |a, b| {
        let (i, j) = (a + 1, b + 1);
        if i == j {
            let s = (PI * i as f64 / nf).sin();
            pref * ((2.0 * nf * nf + 1.0) / 3.0 - 1.0 / (s * s))
        } else {
            let sm = (PI * (i as f64 - j as f64) / (2.0 * nf)).sin();
            let sp = (PI * (i + j) as f64 / (2.0 * nf)).sin();
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            pref * sign * (1.0 / (sm * sm) - 1.0 / (sp * sp))
        }
    })
}

/// Radial levels for one J: energies (absolute, hartree) and grid-normalized
/// vectors for v = 0..=v_max.
struct RadialSolution {
    energies: Vec<f64>,
    vectors: Vec<Vec<f64>>,
}

fn solve_radial(params: &MorseParams, grid: &RadialGrid, j: u32, kinetic: &DMatrix<f64>) -> Result<RadialSolution> {
    let m = params.reduced_mass();
    let pts = grid.points();
    let jj = (j * (j + 1)) as f64;
    let mut h = kinetic.clone();
    for (i, &r) in pts.iter().enumerate() {
        h[(i, i)] += params.potential(r) + jj / (2.0 * m * r * r);
    }
    let eig = SymmetricEigen::try_new(h.clone(), f64::EPSILON, 0).ok_or_else(|| eigen_failure(&h))?;
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let nv = params.v_max as usize + 1;
    if order.len() < nv {
        return Err(Error::InvalidModel("radial grid has fewer points than requested levels".into()));
    }
    let mut energies = Vec::with_capacity(nv);
    let mut vectors = Vec::with_capacity(nv);
    for &k in order.iter().take(nv) {
        let e = eig.eigenvalues[k];
        if e >= 0.0 {
            return Err(Error::InvalidModel(format!(
                "level v={} for J={j} is not bound on this grid",
                energies.len()
            )));
        }
        let mut vec: Vec<f64> = eig.eigenvectors.column(k).iter().cloned().collect();
        let big = vec.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        if let Some(first) = vec.iter().find(|x| x.abs() > 1e-3 * big) {
            if *first < 0.0 {
                vec.iter_mut().for_each(|x| *x = -*x);
            }
        }
        energies.push(e);
        vectors.push(vec);
    }
    Ok(RadialSolution { energies, vectors })
}

pub(crate) fn eigen_failure(h: &DMatrix<f64>) -> Error {
    Error::Eigensolver {
        dim: h.nrows(),
        max_abs: h.iter().fold(0.0f64, |a, x| a.max(x.abs())),
        frobenius: h.norm(),
    }
}

/// Direction-cosine factor ⟨J',M|cosθ|J,M⟩ for a linear rotor.
pub fn angular_factor(j: u32, jp: u32, m: i32) -> f64 {
    let (jf, mf) = (j as f64, m as f64);
    if jp == j + 1 {
        (((jf + 1.0).powi(2) - mf * mf) / ((2.0 * jf + 1.0) * (2.0 * jf + 3.0))).sqrt()
    } else if j >= 1 && jp == j - 1 {
        ((jf * jf - mf * mf) / ((2.0 * jf - 1.0) * (2.0 * jf + 1.0))).sqrt()
    } else {
        0.0
    }
}

/// Drift allowed between the working grid and one with half the points.
pub const GRID_CONVERGENCE_CM1: f64 = 1e-4;

/// Rovibrational model |v,J,M⟩ with Z-polarized dipole couplings. States are
/// ordered v-major, then J, then M = −J..J.
pub fn build_morse_rovib(params: &MorseParams, grid: &RadialGrid) -> Result<MolecularModel> {
    params.validate()?;
    grid.validate()?;
    let m = params.reduced_mass();

    let kin = sine_dvr_kinetic(grid, m);
    let coarse_grid = RadialGrid {
        n_points: grid.n_points / 2,
        ..*grid
    };
    let coarse_kin = sine_dvr_kinetic(&coarse_grid, m);

    let mut radial = Vec::with_capacity(params.j_max as usize + 1);
    for j in 0..=params.j_max {
        let fine = solve_radial(params, grid, j, &kin)?;
        let coarse = solve_radial(params, &coarse_grid, j, &coarse_kin)?;
        for (v, (a, b)) in fine.energies.iter().zip(&coarse.energies).enumerate() {
            let drift = hartree_to_cm1((a - b).abs());
            if drift > GRID_CONVERGENCE_CM1 {
                return Err(Error::Convergence {
                    v: v as u32,
                    j,
                    drift_cm1: drift,
                    tolerance_cm1: GRID_CONVERGENCE_CM1,
                });
            }
        }
        radial.push(fine);
    }

    let pts = grid.points();
    let mu_r: Vec<f64> = pts.iter().map(|&r| params.dipole_at(r)).collect();
    let radial_dipole = |v1: usize, j1: u32, v2: usize, j2: u32| -> f64 {
        let a = &radial[j1 as usize].vectors[v1];
        let b = &radial[j2 as usize].vectors[v2];
        a.iter().zip(b).zip(&mu_r).map(|((x, y), u)| x * y * u).sum()
    };

    let e00 = radial[0].energies[0];
    let mut energies = Vec::new();
    let mut labels = Vec::new();
    for v in 0..=params.v_max {
        for j in 0..=params.j_max {
            for mm in -(j as i32)..=(j as i32) {
                energies.push(radial[j as usize].energies[v as usize] - e00);
                labels.push(StateLabel::Rovib { v, j, m: mm });
            }
        }
    }

    let n = labels.len();
    let mut dipole = DMatrix::zeros(n, n);
    for a in 0..n {
        let StateLabel::Rovib { v: va, j: ja, m: ma } = labels[a] else { unreachable!() };
        for b in 0..a {
            let StateLabel::Rovib { v: vb, j: jb, m: mb } = labels[b] else { unreachable!() };
            if ma != mb || ja.abs_diff(jb) != 1 {
                continue;
            }
            let d = radial_dipole(va as usize, ja, vb as usize, jb) * angular_factor(jb, ja, mb);
            dipole[(a, b)] = d;
            dipole[(b, a)] = d;
        }
    }
    MolecularModel::new(energies, dipole, labels)
}

/// μ² approximated by squaring the dipole matrix over the model basis.
pub fn mu_squared_matrix(model: &MolecularModel) -> DMatrix<f64> {
    let d = model.dipole();
    let mut sq = d * d;
    // exact symmetry regardless of summation order
    let n = sq.nrows();
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (sq[(i, j)] + sq[(j, i)]);
            sq[(i, j)] = s;
            sq[(j, i)] = s;
        }
    }
    sq
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalWeights {
    pub temperature: f64,
    pub weights: Vec<f64>,
}

impl ThermalWeights {
    /// (state index, weight) pairs with nonzero weight.
    pub fn nonzero(&self) -> Vec<(usize, f64)> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(i, w)| (i, *w))
            .collect()
    }
}

/// Boltzmann populations over the states accepted by `subset`; rejected
/// states get weight zero. M sublevels count as separate states.
pub fn boltzmann_weights(
    model: &MolecularModel,
    temperature: f64,
    subset: impl Fn(usize, &StateLabel) -> bool,
) -> Result<ThermalWeights> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::InvalidInput(format!("temperature must be positive, got {temperature}")));
    }
    let chosen: Vec<usize> = (0..model.n_states()).filter(|&k| subset(k, &model.label(k))).collect();
    if chosen.is_empty() {
        return Err(Error::EmptySubset);
    }
    let e = model.energies();
    let emin = chosen.iter().map(|&k| e[k]).fold(f64::INFINITY, f64::min);
    let kt = BOLTZMANN_HARTREE_PER_K * temperature;
    let mut weights = vec![0.0; model.n_states()];
    for &k in &chosen {
        weights[k] = (-(e[k] - emin) / kt).exp();
    }
    let z: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= z);
    Ok(ThermalWeights { temperature, weights })
}
