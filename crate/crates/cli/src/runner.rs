//! Executes a resolved configuration and writes its artifacts plus a
//! `manifest.json` that records the fully explicit config, the model hash,
//! the tolerances and checks applied, and every file produced.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::result::Result;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};
use twinpol_core::io::{peaks_to_json, write_plot_columns, write_spectrum_csv, write_trajectory_csv};
use twinpol_core::manymol::ManyMolBasisKind;
use twinpol_core::spectra::SpectrumKind;
use twinpol_core::*;

use crate::config::{Format, Framework, ManyMolInitial, RunConfig, Window};
use crate::error::CliError;

pub const NORM_DRIFT_TOL: f64 = 1e-8;
pub const ENERGY_DRIFT_TOL: f64 = 1e-7;
/// Thermal weight that may be left without a dressed initial state.
pub const UNMATCHED_WEIGHT_TOL: f64 = 1e-3;
/// Fraction of the dressed state that must sit on the requested |ψ_k, N⟩.
pub const DOMINANT_OVERLAP: f64 = 0.5;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            limit,
            passed: value <= limit,
        }
    }
}

/// Result of one run (one coupling strength).
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub outputs: Vec<String>,
    pub checks: Vec<Check>,
    /// Spectrum per initial-state label, for splitting measurements.
    pub spectra: BTreeMap<String, Spectrum>,
}

impl RunSummary {
    pub fn failed_checks(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{} = {:.3e} > {:.1e}", c.name, c.value, c.limit))
            .collect()
    }
}

/// File stem for a state label: `v=0,J=1,M=-1` → `v0_J1_M-1`.
pub fn file_stem(label: &str) -> String {
    label
        .chars()
        .filter_map(|c| match c {
            ',' => Some('_'),
            c if c.is_ascii_alphanumeric() || c == '-' || c == '_' => Some(c),
            _ => None,
        })
        .collect()
}

struct Writer<'a> {
    dir: &'a Path,
    format: Format,
    files: Vec<String>,
}

impl<'a> Writer<'a> {
    fn new(dir: &'a Path, format: Format) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
        Ok(Self {
            dir,
            format,
            files: Vec::new(),
        })
    }

    fn bytes(&mut self, name: &str, data: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, data).map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn ext(&self) -> &'static str {
        match self.format {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }

    fn spectrum(&mut self, stem: &str, spec: &Spectrum) -> Result<(), CliError> {
        let mut buf = Vec::new();
        match self.format {
            Format::Csv => write_spectrum_csv(spec, &mut buf)?,
            Format::Json => buf = serde_json::to_vec_pretty(spec).map_err(Error::from)?,
        }
        self.bytes(&format!("{stem}.{}", self.ext()), &buf)?;
        let mut plot = Vec::new();
        write_plot_columns(spec, &mut plot)?;
        self.bytes(&format!("plot_{stem}.dat"), &plot)
    }

    fn trajectory(&mut self, stem: &str, traj: &Trajectory) -> Result<(), CliError> {
        let mut buf = Vec::new();
        match self.format {
            Format::Csv => write_trajectory_csv(traj, &mut buf)?,
            Format::Json => buf = serde_json::to_vec(traj).map_err(Error::from)?,
        }
        self.bytes(&format!("{stem}.{}", self.ext()), &buf)
    }

    fn peaks(&mut self, stem: &str, peaks: &PeakSet) -> Result<(), CliError> {
        self.bytes(&format!("{stem}.json"), peaks_to_json(peaks)?.as_bytes())
    }

    /// Stick spectrum, plus a broadened version when requested.
    fn sticks(&mut self, cfg: &RunConfig, stem: &str, spec: &Spectrum) -> Result<(), CliError> {
        self.spectrum(&format!("sticks_{stem}"), spec)?;
        if let (Some(w), false) = (cfg.output.broaden_hwhm, spec.is_empty()) {
            let b = broaden_sticks(spec, cfg.output.lineshape, w)?;
            self.spectrum(&format!("broadened_{stem}"), &b)?;
        }
        Ok(())
    }
}

pub fn model_sha256(model: &MolecularModel) -> Result<String, CliError> {
    Ok(hex::encode(Sha256::digest(model.to_json()?.as_bytes())))
}

fn manifest(cfg: &RunConfig, command: &str, outputs: &[String], checks: &[Check]) -> Result<serde_json::Value, CliError> {
    Ok(json!({
        "tool": "twinpol",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": cfg.to_raw(),
        "model": {
            "n_states": cfg.model.n_states(),
            "sha256": model_sha256(&cfg.model)?,
        },
        "tolerances": {
            "norm_drift": NORM_DRIFT_TOL,
            "energy_drift": ENERGY_DRIFT_TOL,
            "unmatched_thermal_weight": UNMATCHED_WEIGHT_TOL,
            "dominant_overlap": DOMINANT_OVERLAP,
            "peak_threshold": cfg.protocol.peak_threshold,
        },
        "checks": checks,
        "outputs": outputs,
    }))
}

fn write_manifest(dir: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    fs::write(&path, text + "\n").map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

/// One run at the configured coupling; writes artifacts and the manifest.
pub fn run_single(cfg: &RunConfig, dir: &Path) -> Result<RunSummary, CliError> {
    let mut w = Writer::new(dir, cfg.output.format)?;
    let mut checks = Vec::new();
    let mut spectra = BTreeMap::new();
    let p = &cfg.protocol;
    let model = &cfg.model;
    let cav = &cfg.cavity;

    match p.framework {
        Framework::Classical | Framework::QuantumTd => {
            let quantum = p.framework == Framework::QuantumTd;
            let propagate = |k: usize| -> twinpol_core::Result<Trajectory> {
                if quantum {
                    propagate_quantum(model, cav, &p.pulse, (k, p.photons), &p.grid)
                } else {
                    propagate_classical(model, cav, &p.pulse, k, &p.grid)
                }
            };
            let (states, weights): (Vec<usize>, Vec<f64>) = match p.temperature {
                Some(t) => {
                    let tw = boltzmann_weights(model, t, |_, _| true)?;
                    let wmax = tw.weights.iter().cloned().fold(0.0, f64::max);
                    tw.nonzero().into_iter().filter(|&(_, x)| x >= p.thermal_cutoff * wmax).unzip()
                }
                None => (
                    p.initial_states.iter().map(|l| model.find_label(l).expect("validated label")).collect(),
                    Vec::new(),
                ),
            };
            let runs: Vec<(Trajectory, Spectrum)> = states
                .par_iter()
                .map(|&k| {
                    let tr = propagate(k)?;
                    let s = dipole_spectrum(&tr, p.damping_tau, p.pad_factor)?;
                    Ok((tr, s))
                })
                .collect::<twinpol_core::Result<_>>()?;
            for (&k, (tr, s)) in states.iter().zip(&runs) {
                let label = model.label(k).to_string();
                let stem = file_stem(&label);
                checks.push(Check::at_most(format!("norm_drift[{label}]"), tr.max_norm_drift(), NORM_DRIFT_TOL));
                checks.push(Check::at_most(
                    format!("energy_drift[{label}]"),
                    tr.max_relative_energy_drift(),
                    ENERGY_DRIFT_TOL,
                ));
                if cfg.output.trajectory {
                    w.trajectory(&format!("trajectory_{stem}"), tr)?;
                }
                if p.temperature.is_none() {
                    w.spectrum(&format!("spectrum_{stem}"), s)?;
                    let peaks = detect_peaks(s, p.peak_threshold);
                    w.peaks(&format!("peaks_{stem}"), &peaks)?;
                    spectra.insert(label, s.clone());
                }
            }
            if p.temperature.is_some() {
                let total: f64 = weights.iter().sum();
                let pairs: Vec<(Spectrum, f64)> =
                    runs.into_iter().zip(&weights).map(|((_, s), &x)| (s, x / total)).collect();
                let avg = thermal_average_spectra(&pairs)?;
                w.spectrum("spectrum_thermal", &avg)?;
                w.peaks("peaks_thermal", &detect_peaks(&avg, p.peak_threshold))?;
                spectra.insert("thermal".into(), avg);
            }
        }
        Framework::QuantumStatic => {
            let basis = ProductBasis::for_model(model, cav);
            let sol = diagonalize_polaritons(&assemble_hamiltonian(model, cav, &basis)?)?;
            match p.temperature {
                Some(t) => {
                    let tw = boltzmann_weights(model, t, |_, _| true)?;
                    let (s, unmatched) = quantum::thermal_static_spectrum(&sol, model, &basis, &tw)?;
                    let lost: f64 = unmatched.iter().map(|&k| tw.weights[k]).sum();
                    checks.push(Check::at_most("unmatched_thermal_weight", lost, UNMATCHED_WEIGHT_TOL));
                    w.sticks(cfg, "thermal", &s)?;
                    spectra.insert("thermal".into(), s);
                }
                None => {
                    for label in &p.initial_states {
                        let k = model.find_label(label).expect("validated label");
                        let Some(i) = sol.dominant_eigenstate(basis.index(k, p.photons), DOMINANT_OVERLAP) else {
                            return Err(Error::InvalidInput(format!(
                                "no dressed eigenstate is dominated by |{label}, N={}⟩; the coupling mixes it too strongly",
                                p.photons
                            ))
                            .into());
                        };
                        let s = static_stick_spectrum(&sol, model, &basis, &[(i, 1.0)])?;
                        w.sticks(cfg, &file_stem(label), &s)?;
                        spectra.insert(label.clone(), s);
                    }
                }
            }
        }
        Framework::ManymolBruteforce | Framework::ManymolAnalytic => {
            let m = &cfg.manymol;
            for &n in &m.n_mol {
                let n0s: Vec<usize> = m.n0.clone().unwrap_or_else(|| (0..=n).collect());
                let brute = p.framework == Framework::ManymolBruteforce;
                let sys = if brute {
                    let sys = match m.basis {
                        ManyMolBasisKind::Product => build_many_molecule_hamiltonian(model, cav, n)?,
                        ManyMolBasisKind::Symmetric => build_symmetric_hamiltonian(model, cav, n)?,
                    };
                    let sol = sys.solve()?;
                    Some((sys, sol))
                } else {
                    None
                };
                let acfg = |n0: usize| -> ManyMolConfig {
                    let e = model.energies();
                    ManyMolConfig {
                        n_mol: n,
                        n0,
                        g: cav.g,
                        mu: model.dipole()[(0, 2)],
                        omega02: e[2] - e[0],
                        omega12: e[2] - e[1],
                    }
                };
                match m.initial {
                    ManyMolInitial::Thermal => {
                        for n0 in n0s {
                            let s = match &sys {
                                Some((sys, sol)) => sys.thermal_spectrum(sol, n0)?,
                                None => analytic_nonsymmetric_spectrum(&acfg(n0))?,
                            };
                            w.sticks(cfg, &format!("N{n}_n0_{n0}"), &s)?;
                        }
                    }
                    ManyMolInitial::Symmetric => {
                        let s = match &sys {
                            Some((sys, sol)) => sys.superposition_spectrum(sol, &sys.symmetric_superposition())?,
                            None => analytic_symmetric_spectrum(&acfg(0))?,
                        };
                        w.sticks(cfg, &format!("N{n}_symmetric"), &s)?;
                    }
                }
            }
        }
        Framework::ThermoLimit => {
            let e = model.energies();
            let m = &cfg.manymol;
            let s = thermodynamic_limit_spectrum(m.r0, m.limit, cav.g, model.dipole()[(0, 2)], e[2] - e[0], e[2] - e[1])?;
            let name = match m.limit {
                LimitBranch::Thermal => "limit_thermal",
                LimitBranch::Symmetric => "limit_symmetric",
            };
            w.sticks(cfg, name, &s)?;
        }
    }

    write_manifest(dir, &manifest(cfg, "run", &w.files, &checks)?)?;
    Ok(RunSummary {
        dir: dir.to_path_buf(),
        outputs: w.files,
        checks,
        spectra,
    })
}

/// Splitting of the two strongest features inside a window: peaks of a
/// continuous spectrum or sticks above the relative threshold.
pub fn window_splitting(spec: &Spectrum, window: &Window, threshold: f64) -> twinpol_core::Result<f64> {
    let lo = window.center - window.half_width;
    let hi = window.center + window.half_width;
    match spec.kind {
        SpectrumKind::Continuous => measure_splitting(&detect_peaks(spec, threshold), (lo, hi)),
        SpectrumKind::Sticks => {
            let floor = threshold * spec.max_intensity();
            let inside: Vec<f64> = spec
                .sticks_in(lo, hi)
                .into_iter()
                .filter(|&(_, x, _)| x >= floor)
                .map(|(f, _, _)| f)
                .collect();
            if inside.len() != 2 {
                return Err(Error::Ambiguity {
                    lo,
                    hi,
                    candidates: inside,
                });
            }
            Ok((inside[1] - inside[0]).abs())
        }
    }
}

/// Least-squares line through the origin; R² relative to the mean.
pub fn fit_through_origin(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    if x.len() < 2 {
        return None;
    }
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / sxx;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|b| (b - mean).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { f64::NAN };
    Some((slope, r2))
}

#[derive(Debug, Clone, Serialize)]
pub struct WindowResult {
    pub name: String,
    pub initial: String,
    pub center: f64,
    pub half_width: f64,
    /// One entry per coupling; None where the window did not hold two features.
    pub splittings: Vec<Option<f64>>,
    pub notes: Vec<Option<String>>,
    pub slope: Option<f64>,
    pub r_squared: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub children: Vec<RunSummary>,
    pub windows: Vec<WindowResult>,
    pub outputs: Vec<String>,
}

pub fn child_dir(i: usize) -> String {
    format!("g_{i:03}")
}

/// Runs every coupling of `g_sweep` in parallel (one subdirectory each) and
/// fits the window splittings against g.
pub fn run_sweep(cfg: &RunConfig, dir: &Path) -> Result<SweepSummary, CliError> {
    let gs = cfg
        .g_sweep
        .clone()
        .ok_or_else(|| CliError::config("cavity.g_sweep", "a sweep needs a list of couplings"))?;
    let children: Vec<RunSummary> = gs
        .par_iter()
        .enumerate()
        .map(|(i, &g)| run_single(&cfg.with_g(g), &dir.join(child_dir(i))))
        .collect::<Result<_, _>>()?;

    let mut windows = Vec::new();
    for win in &cfg.windows {
        let mut splittings = Vec::new();
        let mut notes = Vec::new();
        for child in &children {
            let measured = match child.spectra.get(&win.initial) {
                Some(spec) => window_splitting(spec, win, cfg.protocol.peak_threshold),
                None => Err(Error::InvalidInput(format!("no spectrum for {}", win.initial))),
            };
            match measured {
                Ok(s) => {
                    splittings.push(Some(s));
                    notes.push(None);
                }
                Err(e) => {
                    splittings.push(None);
                    notes.push(Some(e.to_string()));
                }
            }
        }
        let (x, y): (Vec<f64>, Vec<f64>) = gs
            .iter()
            .zip(&splittings)
            .filter_map(|(&g, s)| s.map(|s| (g, s)))
            .unzip();
        let fit = fit_through_origin(&x, &y);
        windows.push(WindowResult {
            name: win.name.clone(),
            initial: win.initial.clone(),
            center: win.center,
            half_width: win.half_width,
            splittings,
            notes,
            slope: fit.map(|f| f.0),
            r_squared: fit.map(|f| f.1),
        });
    }

    let mut w = Writer::new(dir, Format::Csv)?;
    let mut csv = String::from("g_au");
    for win in &windows {
        csv.push_str(&format!(",splitting_{}_au", win.name));
    }
    csv.push('\n');
    for (i, g) in gs.iter().enumerate() {
        csv.push_str(&format!("{g:e}"));
        for win in &windows {
            csv.push(',');
            if let Some(s) = win.splittings[i] {
                csv.push_str(&format!("{s:e}"));
            }
        }
        csv.push('\n');
    }
    w.bytes("sweep.csv", csv.as_bytes())?;
    let doc = json!({ "g": gs, "children": (0..gs.len()).map(child_dir).collect::<Vec<_>>(), "windows": windows });
    w.bytes(
        "sweep.json",
        serde_json::to_string_pretty(&doc).map_err(Error::from)?.as_bytes(),
    )?;

    let checks: Vec<Check> = children
        .iter()
        .enumerate()
        .flat_map(|(i, c)| {
            c.checks.iter().map(move |k| Check {
                name: format!("{}/{}", child_dir(i), k.name),
                ..k.clone()
            })
        })
        .collect();
    let mut m = manifest(cfg, "sweep", &w.files, &checks)?;
    m["children"] = json!((0..gs.len()).map(child_dir).collect::<Vec<_>>());
    write_manifest(dir, &m)?;
    Ok(SweepSummary {
        children,
        windows,
        outputs: w.files,
    })
}

/// Runs `cfg` (a sweep when it carries `g_sweep`) into `dir`. Failed
/// checks are reported as an error after all artifacts are written.
pub fn execute(cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    let failed = if cfg.g_sweep.is_some() {
        let s = run_sweep(cfg, dir)?;
        s.children
            .iter()
            .enumerate()
            .flat_map(|(i, c)| c.failed_checks().into_iter().map(move |f| format!("{}: {f}", child_dir(i))))
            .collect::<Vec<_>>()
    } else {
        run_single(cfg, dir)?.failed_checks()
    };
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Checks(failed))
    }
}

pub const RERUN_DIR: &str = ".rerun";

fn collect_files(root: &Path, rel: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    let mut entries: Vec<_> = fs::read_dir(root.join(rel))?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let name = rel.join(e.file_name());
        if name == Path::new(RERUN_DIR) || name == Path::new("error.json") {
            continue;
        }
        if e.file_type()?.is_dir() {
            collect_files(root, &name, out)?;
        } else {
            out.push(name);
        }
    }
    Ok(())
}

/// Re-runs `cfg` into `dir/.rerun` and byte-compares every file against the
/// first run; the scratch copy is removed when they agree.
pub fn check_determinism(cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    let scratch = dir.join(RERUN_DIR);
    if scratch.exists() {
        fs::remove_dir_all(&scratch).map_err(|e| CliError::io("clearing re-run directory", e))?;
    }
    let result = execute(cfg, &scratch);
    // checks are compared as files below; only hard errors abort here
    if let Err(e @ (CliError::Config { .. } | CliError::Core(_) | CliError::Io { .. })) = result {
        return Err(e);
    }
    let (mut a, mut b) = (Vec::new(), Vec::new());
    collect_files(dir, Path::new(""), &mut a).map_err(|e| CliError::io("listing outputs", e))?;
    collect_files(&scratch, Path::new(""), &mut b).map_err(|e| CliError::io("listing re-run outputs", e))?;
    let mut differ: Vec<PathBuf> = a.iter().filter(|p| !b.contains(p)).cloned().collect();
    differ.extend(b.iter().filter(|p| !a.contains(p)).cloned());
    for p in a.iter().filter(|p| b.contains(p)) {
        let x = fs::read(dir.join(p)).map_err(|e| CliError::io(format!("reading {}", p.display()), e))?;
        let y = fs::read(scratch.join(p)).map_err(|e| CliError::io(format!("reading {}", p.display()), e))?;
        if x != y {
            differ.push(p.clone());
        }
    }
    if differ.is_empty() {
        fs::remove_dir_all(&scratch).map_err(|e| CliError::io("removing re-run directory", e))?;
        Ok(())
    } else {
        Err(CliError::NonDeterministic(differ))
    }
}

/// Writes `model.json` (energies, dipoles, labels) and returns its path.
pub fn export_model(cfg: &RunConfig, dir: &Path) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
    let path = dir.join("model.json");
    fs::write(&path, cfg.model.to_json()?).map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
    Ok(path)
}
