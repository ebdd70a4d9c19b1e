//! Spectra: FFT of the dipole signal, stick spectra, peak finding, thermal
//! averaging and line broadening.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::classical::Trajectory;
use crate::error::{Error, Result};
use crate::units::hartree_to_cm1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumKind {
    Continuous,
    Sticks,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Branch {
    R,
    P,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    Polariton,
    Twin,
    Dark,
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Branch::R => "R",
            Branch::P => "P",
        })
    }
}

impl std::fmt::Display for Mechanism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mechanism::Polariton => "polariton",
            Mechanism::Twin => "twin",
            Mechanism::Dark => "dark",
        })
    }
}

/// Per-stick annotations; all optional except the state labels.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StickInfo {
    pub label_i: String,
    pub label_f: String,
    pub n_mol: Option<usize>,
    pub n0: Option<usize>,
    pub branch: Option<Branch>,
    pub mechanism: Option<Mechanism>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub kind: SpectrumKind,
    /// Hartree; strictly increasing for continuous spectra.
    pub frequencies: Vec<f64>,
    pub intensities: Vec<f64>,
    /// Empty, or one entry per stick.
    pub stick_info: Vec<StickInfo>,
    /// Grid spacing of continuous spectra.
    pub bin_width: Option<f64>,
    pub metadata: BTreeMap<String, String>,
}

impl Spectrum {
    pub fn sticks(frequencies: Vec<f64>, intensities: Vec<f64>) -> Self {
        Self {
            kind: SpectrumKind::Sticks,
            frequencies,
            intensities,
            stick_info: Vec::new(),
            bin_width: None,
            metadata: BTreeMap::new(),
        }
    }

    pub fn continuous(frequencies: Vec<f64>, intensities: Vec<f64>) -> Self {
        let bin_width = (frequencies.len() > 1).then(|| frequencies[1] - frequencies[0]);
        Self {
            kind: SpectrumKind::Continuous,
            frequencies,
            intensities,
            stick_info: Vec::new(),
            bin_width,
            metadata: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    pub fn frequencies_cm1(&self) -> Vec<f64> {
        self.frequencies.iter().map(|&w| hartree_to_cm1(w)).collect()
    }

    pub fn max_intensity(&self) -> f64 {
        self.intensities.iter().fold(0.0f64, |a, &x| a.max(x))
    }

    pub fn total_intensity(&self) -> f64 {
        self.intensities.iter().sum()
    }

    /// Copy scaled so the largest intensity is 1 (unchanged if all zero).
    pub fn normalized(&self) -> Self {
        let m = self.max_intensity();
        let mut s = self.clone();
        if m > 0.0 {
            s.intensities.iter_mut().for_each(|x| *x /= m);
        }
        s
    }

    /// Sticks within [lo, hi] as (frequency, intensity, index).
    pub fn sticks_in(&self, lo: f64, hi: f64) -> Vec<(f64, f64, usize)> {
        self.frequencies
            .iter()
            .zip(&self.intensities)
            .enumerate()
            .filter(|(_, (f, _))| **f >= lo && **f <= hi)
            .map(|(i, (f, x))| (*f, *x, i))
            .collect()
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.insert(key.to_string(), value.to_string());
        self
    }
}

/// Absorption spectrum I(ω) = ω² |∫ (⟨μ(t)⟩ − μ̄) e^{−t/τ} e^{−iωt} dt|², μ̄ the
/// pre-kick mean, on a grid zero-padded to `pad_factor` × the record length.
/// Being a power spectrum, peak heights go as ω²|μ_if|⁴.
pub fn dipole_spectrum(traj: &Trajectory, damping_tau: f64, pad_factor: usize) -> Result<Spectrum> {
    if !(damping_tau > 0.0) || pad_factor == 0 {
        return Err(Error::InvalidInput(format!(
            "damping_tau must be positive and pad_factor ≥ 1 (got {damping_tau}, {pad_factor})"
        )));
    }
    let t = &traj.times;
    if t.len() < 4 {
        return Err(Error::InvalidInput("trajectory too short for a spectrum".into()));
    }
    let h = t[1] - t[0];
    if !(h > 0.0) || t.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h) {
        return Err(Error::NonUniformGrid);
    }
    let pre: Vec<f64> = t
        .iter()
        .zip(&traj.dipole)
        .filter(|(&ti, _)| ti < traj.pulse_start)
        .map(|(_, &d)| d)
        .collect();
    let mean = if pre.is_empty() {
        0.0
    } else {
        pre.iter().sum::<f64>() / pre.len() as f64
    };

    let m = t.len() * pad_factor;
    let mut buf = vec![Complex64::default(); m];
    for (i, (&ti, &d)) in t.iter().zip(&traj.dipole).enumerate() {
        buf[i] = Complex64::new((d - mean) * (-(ti - t[0]) / damping_tau).exp(), 0.0);
    }
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);

    let dw = 2.0 * std::f64::consts::PI / (m as f64 * h);
    let (freq, inten): (Vec<f64>, Vec<f64>) = (1..=m / 2)
        .map(|k| {
            let w = k as f64 * dw;
            (w, w * w * buf[k].norm_sqr() * h * h)
        })
        .unzip();
    let mut s = Spectrum::continuous(freq, inten);
    s.bin_width = Some(dw);
    Ok(s
        .with_meta("damping_tau", damping_tau)
        .with_meta("pad_factor", pad_factor)
        .with_meta("bin_width", dw))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub center: f64,
    pub height: f64,
    pub branch: Option<Branch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Splitting {
    pub lower: usize,
    pub upper: usize,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakSet {
    pub peaks: Vec<Peak>,
    pub splittings: Vec<Splitting>,
    pub bin_width: Option<f64>,
}

impl PeakSet {
    pub fn centers(&self) -> Vec<f64> {
        self.peaks.iter().map(|p| p.center).collect()
    }

    pub fn in_window(&self, lo: f64, hi: f64) -> Vec<&Peak> {
        self.peaks.iter().filter(|p| p.center >= lo && p.center <= hi).collect()
    }

    /// Tag peaks in [lo, hi] with a branch.
    pub fn assign_branch(&mut self, lo: f64, hi: f64, branch: Branch) {
        for p in self.peaks.iter_mut().filter(|p| p.center >= lo && p.center <= hi) {
            p.branch = Some(branch);
        }
    }
}

/// Local maxima (x[i] > x[i−1], x[i] ≥ x[i+1]) above `rel_threshold` × the
/// global maximum, refined by a parabola through the three points.
pub fn detect_peaks(spec: &Spectrum, rel_threshold: f64) -> PeakSet {
    let x = &spec.intensities;
    let f = &spec.frequencies;
    let gmax = spec.max_intensity();
    let mut peaks = Vec::new();
    if x.len() >= 3 && gmax > 0.0 {
        for i in 1..x.len() - 1 {
            if x[i] > x[i - 1] && x[i] >= x[i + 1] && x[i] > rel_threshold * gmax {
                let (a, b, c) = (x[i - 1], x[i], x[i + 1]);
                let den = a - 2.0 * b + c;
                let d = if den != 0.0 { (0.5 * (a - c) / den).clamp(-0.5, 0.5) } else { 0.0 };
                let df = if d >= 0.0 { f[i + 1] - f[i] } else { f[i] - f[i - 1] };
                peaks.push(Peak {
                    center: f[i] + d * df,
                    height: b - 0.25 * (a - c) * d,
                    branch: None,
                });
            }
        }
    }
    let splittings = peaks
        .windows(2)
        .enumerate()
        .map(|(i, w)| Splitting {
            lower: i,
            upper: i + 1,
            delta: w[1].center - w[0].center,
        })
        .collect();
    PeakSet {
        peaks,
        splittings,
        bin_width: spec.bin_width,
    }
}

/// Separation of the two peaks inside [lo, hi].
pub fn measure_splitting(peaks: &PeakSet, window: (f64, f64)) -> Result<f64> {
    let inside = peaks.in_window(window.0, window.1);
    if inside.len() != 2 {
        return Err(Error::Ambiguity {
            lo: window.0,
            hi: window.1,
            candidates: inside.iter().map(|p| p.center).collect(),
        });
    }
    Ok((inside[1].center - inside[0].center).abs())
}

/// Weighted sum of spectra. Continuous spectra must share a grid; stick
/// spectra are pooled and coincident sticks merged.
pub fn thermal_average_spectra(runs: &[(Spectrum, f64)]) -> Result<Spectrum> {
    let Some((first, _)) = runs.first() else {
        return Err(Error::EmptySubset);
    };
    if runs.iter().any(|(s, _)| s.kind != first.kind) {
        return Err(Error::GridMismatch);
    }
    match first.kind {
        SpectrumKind::Continuous => {
            let mut acc = vec![0.0; first.len()];
            for (s, w) in runs {
                if s.frequencies != first.frequencies {
                    return Err(Error::GridMismatch);
                }
                for (a, x) in acc.iter_mut().zip(&s.intensities) {
                    *a += w * x;
                }
            }
            let mut out = first.clone();
            out.intensities = acc;
            Ok(out)
        }
        SpectrumKind::Sticks => {
            let mut pool: Vec<(f64, f64, StickInfo)> = Vec::new();
            for (s, w) in runs {
                for i in 0..s.len() {
                    let info = s.stick_info.get(i).cloned().unwrap_or_default();
                    pool.push((s.frequencies[i], w * s.intensities[i], info));
                }
            }
            pool.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut out: Vec<(f64, f64, StickInfo, f64)> = Vec::new();
            for (f, x, info) in pool {
                match out.last_mut() {
                    Some(last) if f - last.0 <= crate::quantum::STICK_MERGE_TOL => {
                        if x > last.3 {
                            last.2 = info;
                            last.3 = x;
                        }
                        last.1 += x;
                    }
                    _ => out.push((f, x, info, x)),
                }
            }
            let mut s = Spectrum::sticks(out.iter().map(|o| o.0).collect(), out.iter().map(|o| o.1).collect());
            if runs.iter().any(|(r, _)| !r.stick_info.is_empty()) {
                s.stick_info = out.into_iter().map(|o| o.2).collect();
            }
            Ok(s)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lineshape {
    Lorentzian,
    Gaussian,
}

/// Grid points per half-width used by `broaden_sticks`.
pub const BROADEN_POINTS_PER_WIDTH: f64 = 20.0;

/// Each stick becomes a lineshape of half width at half maximum `width`,
/// normalized to unit area on the output grid (sticks ± 10 widths).
pub fn broaden_sticks(sticks: &Spectrum, lineshape: Lineshape, width: f64) -> Result<Spectrum> {
    if !(width > 0.0) {
        return Err(Error::InvalidInput(format!("broadening width must be positive, got {width}")));
    }
    if sticks.is_empty() {
        return Ok(Spectrum::continuous(Vec::new(), Vec::new()));
    }
    let lo = sticks.frequencies.iter().cloned().fold(f64::INFINITY, f64::min) - 10.0 * width;
    let hi = sticks.frequencies.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 10.0 * width;
    let dx = width / BROADEN_POINTS_PER_WIDTH;
    let n = ((hi - lo) / dx).ceil() as usize + 1;
    let grid: Vec<f64> = (0..n).map(|i| lo + i as f64 * dx).collect();
    let sigma = width / (2.0 * std::f64::consts::LN_2).sqrt();
    let shape = |x: f64| match lineshape {
        Lineshape::Lorentzian => 1.0 / (1.0 + (x / width).powi(2)),
        Lineshape::Gaussian => (-0.5 * (x / sigma).powi(2)).exp(),
    };
    let mut out = vec![0.0; n];
    let mut prof = vec![0.0; n];
    for (&f0, &a) in sticks.frequencies.iter().zip(&sticks.intensities) {
        let mut area = 0.0;
        for (p, &x) in prof.iter_mut().zip(&grid) {
            *p = shape(x - f0);
            area += *p * dx;
        }
        for (o, p) in out.iter_mut().zip(&prof) {
            *o += a * p / area;
        }
    }
    Ok(Spectrum::continuous(grid, out).with_meta("broadening_hwhm", width))
}

/// Index and distance of the candidate closest to `x`.
pub fn nearest(x: f64, candidates: &[f64]) -> Option<(usize, f64)> {
    candidates
        .iter()
        .enumerate()
        .map(|(i, c)| (i, (c - x).abs()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}
