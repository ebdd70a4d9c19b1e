//! CSV/JSON writers for trajectories, spectra and peak sets.

use std::io::Write;

use serde::Serialize;

use crate::classical::{FieldSeries, Trajectory};
use crate::error::{Error, Result};
use crate::spectra::{PeakSet, Spectrum, SpectrumKind};
use crate::units::hartree_to_cm1;

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidInput(format!("csv: {other:?}")),
    }
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

/// Columns: t, mu, then q, p (classical) or q_expect, q2_expect (quantum),
/// energy, norm, and one p_<label> column per state.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string(), "mu".to_string()];
    let (a, b): (&[f64], &[f64]) = match &traj.field {
        FieldSeries::Classical { q, p } => {
            header.extend(["q".into(), "p".into()]);
            (q, p)
        }
        FieldSeries::Quantum { q_expect, q2_expect } => {
            header.extend(["q_expect".into(), "q2_expect".into()]);
            (q_expect, q2_expect)
        }
    };
    header.extend(["energy".into(), "norm".into()]);
    header.extend(traj.state_labels.iter().map(|l| format!("p_{l}")));
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..traj.len() {
        let mut row = vec![
            num(traj.times[i]),
            num(traj.dipole[i]),
            num(a[i]),
            num(b[i]),
            num(traj.energy[i]),
            num(traj.norm[i]),
        ];
        row.extend(traj.populations.iter().map(|p| num(p[i])));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Continuous: omega_au, omega_cm1, intensity. Sticks: omega_cm1, omega_au,
/// intensity, label_i, label_f, plus n_mol, n0, branch, mechanism when any
/// stick carries them.
pub fn write_spectrum_csv<W: Write>(spec: &Spectrum, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    match spec.kind {
        SpectrumKind::Continuous => {
            w.write_record(["omega_au", "omega_cm1", "intensity"]).map_err(csv_err)?;
            for (f, x) in spec.frequencies.iter().zip(&spec.intensities) {
                w.write_record([num(*f), num(hartree_to_cm1(*f)), num(*x)]).map_err(csv_err)?;
            }
        }
        SpectrumKind::Sticks => {
            let extra = spec
                .stick_info
                .iter()
                .any(|s| s.n_mol.is_some() || s.branch.is_some() || s.mechanism.is_some());
            let mut header = vec!["omega_cm1", "omega_au", "intensity", "label_i", "label_f"];
            if extra {
                header.extend(["n_mol", "n0", "branch", "mechanism"]);
            }
            w.write_record(&header).map_err(csv_err)?;
            for i in 0..spec.len() {
                let f = spec.frequencies[i];
                let info = spec.stick_info.get(i).cloned().unwrap_or_default();
                let mut row = vec![num(hartree_to_cm1(f)), num(f), num(spec.intensities[i]), info.label_i, info.label_f];
                if extra {
                    let opt = |x: Option<String>| x.unwrap_or_default();
                    row.push(opt(info.n_mol.map(|v| v.to_string())));
                    row.push(opt(info.n0.map(|v| v.to_string())));
                    row.push(opt(info.branch.map(|v| v.to_string())));
                    row.push(opt(info.mechanism.map(|v| v.to_string())));
                }
                w.write_record(&row).map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Two columns (omega_cm1, intensity) without a header, for plotting.
pub fn write_plot_columns<W: Write>(spec: &Spectrum, mut out: W) -> Result<()> {
    for (f, x) in spec.frequencies.iter().zip(&spec.intensities) {
        writeln!(out, "{} {}", num(hartree_to_cm1(*f)), num(*x))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct PeakDoc<'a> {
    centers_au: Vec<f64>,
    centers_cm1: Vec<f64>,
    heights: Vec<f64>,
    branches: Vec<Option<String>>,
    splittings: &'a [crate::spectra::Splitting],
    bin_width: Option<f64>,
}

pub fn peaks_to_json(peaks: &PeakSet) -> Result<String> {
    let c = peaks.centers();
    let doc = PeakDoc {
        centers_cm1: c.iter().map(|&x| hartree_to_cm1(x)).collect(),
        centers_au: c,
        heights: peaks.peaks.iter().map(|p| p.height).collect(),
        branches: peaks.peaks.iter().map(|p| p.branch.map(|b| b.to_string())).collect(),
        splittings: &peaks.splittings,
        bin_width: peaks.bin_width,
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}
