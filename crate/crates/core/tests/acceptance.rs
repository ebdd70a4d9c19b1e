// Acceptance suite: one PASS/FAIL line per criterion on stdout (written to the
// raw stream so it shows up even when the harness captures output).

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use twinpol_core::manymol::ManyMolSystem;
use twinpol_core::model::angular_factor;
use twinpol_core::quantum::thermal_static_spectrum;
use twinpol_core::spectra::Branch;
use twinpol_core::units::{cm1_to_hartree, hartree_to_cm1};
use twinpol_core::*;

const E: [f64; 3] = [0.0, 2e-3, 10e-3];
const G: f64 = 2e-4;
const MU: f64 = 1.0;
const OMEGA_C: f64 = 1e-2;
const OMEGA02: f64 = 1e-2;
const OMEGA12: f64 = 8e-3;

const T_END: f64 = 1.6e6;
const DT: f64 = 0.5;
const STRIDE: usize = 20;
const TAU: f64 = T_END / 8.0;
const PAD: usize = 4;
/// Peaks and sticks below this fraction of the strongest are ignored.
const REL: f64 = 0.01;
/// "At 8e-3" for the single classical P peak: the field-induced shift must
/// stay well inside the quantum splitting.
const CLASSICAL_P_TOL: f64 = 0.25 * G * MU;

fn report(id: &str, pass: bool, detail: String) {
    let line = format!("{} criterion {id}: {detail}", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
    assert!(pass, "{line}");
}

fn three_level() -> MolecularModel {
    build_three_level(E[0], E[1], E[2], MU, MU).unwrap()
}

fn cavity(g: f64) -> CavityParams {
    CavityParams {
        omega_c: OMEGA_C,
        g,
        include_dse: false,
        n_fock_max: 2,
    }
}

fn r_window() -> (f64, f64) {
    (OMEGA02 - 5.0 * G * MU, OMEGA02 + 5.0 * G * MU)
}

fn p_window() -> (f64, f64) {
    (OMEGA12 - 5.0 * G * MU, OMEGA12 + 5.0 * G * MU)
}

fn strong_sticks(s: &Spectrum, (lo, hi): (f64, f64)) -> Vec<(f64, f64)> {
    let imax = s.max_intensity();
    s.sticks_in(lo, hi)
        .into_iter()
        .filter(|x| x.1 > REL * imax)
        .map(|x| (x.0, x.1))
        .collect()
}

fn peaks_in(p: &PeakSet, (lo, hi): (f64, f64)) -> Vec<f64> {
    p.in_window(lo, hi).iter().map(|x| x.center).collect()
}

// --- shared time-dependent runs ---------------------------------------------

#[derive(Clone, Copy, PartialEq)]
enum Light {
    Classical,
    Quantum,
}

struct Run {
    name: String,
    traj: Trajectory,
    spec: Spectrum,
    peaks: PeakSet,
    secs: f64,
}

impl Run {
    fn bin(&self) -> f64 {
        self.spec.bin_width.unwrap()
    }
}

fn execute(light: Light, init: usize, half_dt: bool) -> Run {
    let m = three_level();
    let cav = cavity(G);
    let grid = if half_dt {
        TimeGrid {
            t_end: T_END,
            dt: DT / 2.0,
            stride: 2 * STRIDE,
        }
    } else {
        TimeGrid {
            t_end: T_END,
            dt: DT,
            stride: STRIDE,
        }
    };
    let start = Instant::now();
    let traj = match light {
        Light::Classical => propagate_classical(&m, &cav, &KickPulse::default(), init, &grid),
        Light::Quantum => propagate_quantum(&m, &cav, &KickPulse::default(), (init, 0), &grid),
    }
    .unwrap();
    let secs = start.elapsed().as_secs_f64();
    let spec = dipole_spectrum(&traj, TAU, PAD).unwrap();
    let peaks = detect_peaks(&spec, REL);
    let name = format!(
        "{}-{}{}",
        if light == Light::Classical { "classical" } else { "quantum" },
        if init == 0 { "R" } else { "P" },
        if half_dt { "(dt/2)" } else { "" }
    );
    Run {
        name,
        traj,
        spec,
        peaks,
        secs,
    }
}

static RUNS: [OnceLock<Run>; 8] = [const { OnceLock::new() }; 8];

fn run(light: Light, init: usize, half_dt: bool) -> &'static Run {
    let slot = (light == Light::Quantum) as usize * 4 + init * 2 + half_dt as usize;
    RUNS[slot].get_or_init(|| execute(light, init, half_dt))
}

// --- helpers -----------------------------------------------------------------

/// Dominant nonzero frequency of a uniformly sampled real series (mean
/// removed, Hann window, 8× zero padding, parabolic refinement).
fn dominant_frequency(x: &[f64], dt: f64) -> f64 {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let m = (8 * n).next_power_of_two();
    let mut buf: Vec<Complex64> = (0..m)
        .map(|i| {
            if i < n {
                let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos();
                Complex64::new((x[i] - mean) * w, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let amp: Vec<f64> = buf[..m / 2].iter().map(|c| c.norm_sqr()).collect();
    let k = (1..m / 2 - 1).max_by(|&a, &b| amp[a].total_cmp(&amp[b])).unwrap();
    let (a, b, c) = (amp[k - 1], amp[k], amp[k + 1]);
    let d = 0.5 * (a - c) / (a - 2.0 * b + c);
    2.0 * std::f64::consts::PI * (k as f64 + d) / (m as f64 * dt)
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

fn peak_to_peak(x: &[f64]) -> f64 {
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    hi - lo
}

fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Least squares through the origin y = a x; returns (a, R²) with R²
/// measured against the mean of y.
fn fit_through_origin(x: &[f64], y: &[f64]) -> (f64, f64) {
    let a = x.iter().zip(y).map(|(u, v)| u * v).sum::<f64>() / x.iter().map(|u| u * u).sum::<f64>();
    let my = y.iter().sum::<f64>() / y.len() as f64;
    let ss_res: f64 = x.iter().zip(y).map(|(u, v)| (v - a * u).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    (a, 1.0 - ss_res / ss_tot)
}

/// Reference sticks with coincident positions merged.
fn merge_reference(s: &Spectrum) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (&w, &i) in s.frequencies.iter().zip(&s.intensities) {
        match out.last_mut() {
            Some(last) if (w - last.0).abs() < 1e-12 => last.1 += i,
            _ => out.push((w, i)),
        }
    }
    out
}

/// Brute-force sticks grouped onto the nearest reference stick within
/// `radius`: (centroid, summed intensity) per reference, plus the largest
/// unassigned intensity.
fn cluster(sticks: &Spectrum, reference: &[(f64, f64)], radius: f64) -> (Vec<(f64, f64)>, f64) {
    let centers: Vec<f64> = reference.iter().map(|r| r.0).collect();
    let mut acc = vec![(0.0, 0.0); reference.len()];
    let mut stray = 0.0f64;
    for (&w, &i) in sticks.frequencies.iter().zip(&sticks.intensities) {
        match twinpol_core::spectra::nearest(w, &centers) {
            Some((k, _)) if (w - centers[k]).abs() <= radius => {
                acc[k].0 += w * i;
                acc[k].1 += i;
            }
            _ => stray = stray.max(i),
        }
    }
    let out = acc
        .into_iter()
        .zip(&centers)
        .map(|((wi, i), &c)| if i > 0.0 { (wi / i, i) } else { (c, 0.0) })
        .collect();
    (out, stray)
}

fn polariton_static(g: f64) -> (Spectrum, Spectrum) {
    let m = three_level();
    let cav = cavity(g);
    let basis = ProductBasis::for_model(&m, &cav);
    let sol = diagonalize_polaritons(&assemble_hamiltonian(&m, &cav, &basis).unwrap()).unwrap();
    let from = |k: usize| {
        let i = sol.dominant_eigenstate(basis.index(k, 0), 0.5).unwrap();
        static_stick_spectrum(&sol, &m, &basis, &[(i, 1.0)]).unwrap()
    };
    (from(0), from(1))
}

// --- criteria ------------------------------------------------------------------

#[test]
fn criterion_01_single_molecule_static_polaritons() {
    let start = Instant::now();
    let (r, p) = polariton_static(G);
    let secs = start.elapsed().as_secs_f64();
    let rs = strong_sticks(&r, r_window());
    let ps = strong_sticks(&p, p_window());
    let dev = |s: &[(f64, f64)], c: f64| -> f64 {
        if s.len() != 2 {
            return f64::INFINITY;
        }
        ((s[0].0 - (c - G * MU)).abs()).max((s[1].0 - (c + G * MU)).abs())
    };
    let (dr, dp) = (dev(&rs, OMEGA02), dev(&ps, OMEGA12));
    let pass = dr <= 1e-9 && dp <= 1e-9 && secs < 1.0;
    report(
        "1",
        pass,
        format!(
            "R sticks {:?}, TP sticks {:?}; max deviation from ±gμ: R {dr:.3e}, TP {dp:.3e} (tol 1e-9 Eh); {secs:.3}s (limit 1s)",
            rs.iter().map(|s| s.0).collect::<Vec<_>>(),
            ps.iter().map(|s| s.0).collect::<Vec<_>>()
        ),
    );
}

#[test]
fn criterion_02_classical_vs_quantum_twin_polariton() {
    let c = run(Light::Classical, 1, false);
    let q = run(Light::Quantum, 1, false);
    let bin = c.bin();
    let cp = peaks_in(&c.peaks, p_window());
    let qp = peaks_in(&q.peaks, p_window());
    let classical_ok = cp.len() == 1 && (cp[0] - OMEGA12).abs() <= CLASSICAL_P_TOL;
    let split = measure_splitting(&q.peaks, p_window()).unwrap_or(f64::NAN);
    let quantum_ok = (split - 2.0 * G * MU).abs() <= bin;
    let time_ok = c.secs < 60.0 && q.secs < 60.0;
    report(
        "2",
        classical_ok && quantum_ok && time_ok,
        format!(
            "classical P peaks {cp:?} (need one within {CLASSICAL_P_TOL:.1e} of 8e-3); quantum P peaks {qp:?}, \
             splitting {split:.6e} vs 4e-4 (|Δ| {:.2e}, bin {bin:.3e}); runtimes {:.1}s / {:.1}s",
            (split - 2.0 * G * MU).abs(),
            c.secs,
            q.secs
        ),
    );
}

#[test]
fn criterion_03_splitting_linearity() {
    let gs = [0.5e-4, 1.0e-4, 1.5e-4, 2.0e-4];
    let mut rsplit = Vec::new();
    let mut psplit = Vec::new();
    for &g in &gs {
        let (r, p) = polariton_static(g);
        let win = |c: f64| (c - 5.0 * g * MU, c + 5.0 * g * MU);
        let rs = strong_sticks(&r, win(OMEGA02));
        let ps = strong_sticks(&p, win(OMEGA12));
        assert_eq!(rs.len(), 2, "R sticks at g = {g}: {rs:?}");
        assert_eq!(ps.len(), 2, "P sticks at g = {g}: {ps:?}");
        rsplit.push(rs[1].0 - rs[0].0);
        psplit.push(ps[1].0 - ps[0].0);
    }
    let (ar, r2r) = fit_through_origin(&gs, &rsplit);
    let (ap, r2p) = fit_through_origin(&gs, &psplit);
    let slope_ok = |a: f64| ((a - 2.0 * MU) / (2.0 * MU)).abs() <= 0.01;
    let agree = ((ar - ap) / ar).abs() <= 0.01;
    let pass = slope_ok(ar) && slope_ok(ap) && r2r > 0.999 && r2p > 0.999 && agree;
    report(
        "3",
        pass,
        format!(
            "fits through the origin: R slope {ar:.6} (R² {r2r:.8}); P slope {ap:.6} (R² {r2p:.8}); \
             target 2μ = {:.1} within 1%; R/P slope mismatch {:.3e}",
            2.0 * MU,
            ((ar - ap) / ar).abs()
        ),
    );
}

#[test]
fn criterion_04_static_td_equivalence() {
    let (r, p) = polariton_static(G);
    let mut pass = true;
    let mut detail = Vec::new();
    for (run, sticks) in [(run(Light::Quantum, 0, false), &r), (run(Light::Quantum, 1, false), &p)] {
        let bin = run.bin();
        let positions: Vec<f64> = sticks.frequencies.clone();
        let mut worst_peak = 0.0f64;
        for pk in &run.peaks.peaks {
            let d = twinpol_core::spectra::nearest(pk.center, &positions).map_or(f64::INFINITY, |x| x.1);
            worst_peak = worst_peak.max(d);
        }
        // diagnostic only: sticks whose expected power-spectrum height
        // (∝ ω² I²) exceeds 1% should show up as peaks as well
        let centers = run.peaks.centers();
        let tdmax = sticks.frequencies.iter().zip(&sticks.intensities).map(|(w, i)| w * w * i * i).fold(0.0, f64::max);
        let mut worst_stick = 0.0f64;
        for (&w, &i) in sticks.frequencies.iter().zip(&sticks.intensities) {
            if w * w * i * i > REL * tdmax {
                let d = twinpol_core::spectra::nearest(w, &centers).map_or(f64::INFINITY, |x| x.1);
                worst_stick = worst_stick.max(d);
            }
        }
        pass &= worst_peak <= bin;
        detail.push(format!(
            "{}: {} TD peaks above 1%, worst peak→stick {:.2e} (bin {bin:.3e}); worst visible stick→peak {:.2e}",
            run.name,
            run.peaks.peaks.len(),
            worst_peak,
            worst_stick
        ));
    }
    report("4", pass, detail.join("; "));
}

/// Thermal n0-sector spectrum by brute force (full product basis).
fn brute_thermal(sys: &ManyMolSystem, n0: usize) -> Spectrum {
    let sol = sys.solve().unwrap();
    sys.thermal_spectrum(&sol, n0).unwrap()
}

fn brute_system(n_mol: usize) -> ManyMolSystem {
    build_many_molecule_hamiltonian(&three_level(), &cavity(G), n_mol).unwrap()
}

fn config(n_mol: usize, n0: usize) -> ManyMolConfig {
    ManyMolConfig {
        n_mol,
        n0,
        g: G,
        mu: MU,
        omega02: OMEGA02,
        omega12: OMEGA12,
    }
}

/// Per-stick comparison of clustered brute-force sticks with a reference:
/// (max relative position error, max relative intensity error).
fn compare_sticks(reference: &[(f64, f64)], clusters: &[(f64, f64)]) -> (f64, f64) {
    let mut dpos = 0.0f64;
    let mut dint = 0.0f64;
    for (r, c) in reference.iter().zip(clusters) {
        dpos = dpos.max(((c.0 - r.0) / r.0).abs());
        dint = dint.max(((c.1 - r.1) / r.1).abs());
    }
    (dpos, dint)
}

#[test]
fn criterion_05_many_molecule_thermal_suppression() {
    let start = Instant::now();
    let sys4 = brute_system(4);
    let s = brute_thermal(&sys4, 2);
    let reference = merge_reference(&analytic_nonsymmetric_spectrum(&config(4, 2)).unwrap());
    let radius = 0.3 * G / 2.0;
    let (cl, _) = cluster(&s, &reference, radius);
    // reference order: TP−, dark, TP+, R−, R+
    let r_split = cl[4].0 - cl[3].0;
    let r_target = 2.0 * G * 0.5f64.sqrt() * MU;
    let tp_split = cl[2].0 - cl[0].0;
    let tp_target = 2.0 * G * 0.75f64.sqrt() * MU;
    let tp_pos = ((cl[0].0 - (OMEGA12 - tp_target / 2.0)) / OMEGA12)
        .abs()
        .max(((cl[2].0 - (OMEGA12 + tp_target / 2.0)) / OMEGA12).abs());
    let ratio = cl[1].1 / (0.5 * (cl[0].1 + cl[2].1));
    let example_ok = ((r_split - r_target) / r_target).abs() <= 0.02
        && ((tp_split - tp_target) / tp_target).abs() <= 0.02
        && tp_pos <= 0.02
        && ((ratio - 4.0) / 4.0).abs() <= 0.02;

    let mut sweep_ok = true;
    let mut rows = Vec::new();
    for n in 1..=5 {
        let sys = brute_system(n);
        let sol = sys.solve().unwrap();
        for n0 in 0..=n {
            let bf = sys.thermal_spectrum(&sol, n0).unwrap();
            let reference = merge_reference(&analytic_nonsymmetric_spectrum(&config(n, n0)).unwrap());
            let (cl, stray) = cluster(&bf, &reference, 0.3 * G / (n as f64).sqrt());
            let (dpos, dint) = compare_sticks(&reference, &cl);
            sweep_ok &= dpos <= 0.02 && dint <= 0.02;
            rows.push(format!(
                "N={n},n0={n0}: pos {:.1e}, int {:.1}%, stray {:.1e}",
                dpos,
                100.0 * dint,
                stray / bf.max_intensity()
            ));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        "5",
        example_ok && sweep_ok && secs < 120.0,
        format!(
            "N=4,n0=2: R split {r_split:.6e} vs {r_target:.6e} ({:+.2}%), TP split {tp_split:.6e} vs {tp_target:.6e} ({:+.2}%), \
             TP position error {tp_pos:.1e} rel, dark/TP {ratio:.4} vs 4 ({:+.2}%); analytic vs brute (per stick, tol 2%): [{}]; {secs:.1}s",
            100.0 * (r_split - r_target) / r_target,
            100.0 * (tp_split - tp_target) / tp_target,
            100.0 * (ratio - 4.0) / 4.0,
            rows.join("; ")
        ),
    );
}

#[test]
fn criterion_06_symmetric_state_persistence() {
    let start = Instant::now();
    let sys = brute_system(2);
    let sol = sys.solve().unwrap();
    let bf = sys.superposition_spectrum(&sol, &sys.symmetric_superposition()).unwrap();
    let reference = merge_reference(&analytic_symmetric_spectrum(&config(2, 0)).unwrap());
    let (cl, stray) = cluster(&bf, &reference, 0.3 * G / 2f64.sqrt());
    let (dpos, dint) = compare_sticks(&reference, &cl);
    let per_stick: Vec<String> = reference
        .iter()
        .zip(&cl)
        .map(|(r, c)| format!("{:.6e}:{:+.1}%", r.0, 100.0 * (c.1 - r.1) / r.1))
        .collect();
    let n2_ok = dpos <= 0.02 && dint <= 0.02;

    let big = analytic_symmetric_spectrum(&config(50, 0)).unwrap();
    let target = 2.0 * 2f64.sqrt() * G * MU;
    let mut fractions = BTreeMap::new();
    for (center, branch) in [(OMEGA02, Branch::R), (OMEGA12, Branch::P)] {
        let (mut inside, mut total) = (0.0, 0.0);
        for (k, (&w, &i)) in big.frequencies.iter().zip(&big.intensities).enumerate() {
            if big.stick_info[k].branch == Some(branch) {
                total += i;
                if (2.0 * (w - center).abs() - target).abs() <= 0.1 * target {
                    inside += i;
                }
            }
        }
        fractions.insert(branch.to_string(), inside / total);
    }
    let n50_ok = fractions.values().all(|&f| f >= 0.95);
    let secs = start.elapsed().as_secs_f64();
    report(
        "6",
        n2_ok && n50_ok && secs < 60.0,
        format!(
            "N=2 brute vs analytic: position {dpos:.1e} rel, intensity {:.2}% (tol 2%), per stick [{}], stray {:.1e}; \
             N=50 intensity fraction within 10% of 2√2gμ: {fractions:?} (need ≥ 0.95); {secs:.2}s",
            100.0 * dint,
            per_stick.join(", "),
            stray / bf.max_intensity()
        ),
    );
}

#[test]
fn criterion_07_thermodynamic_limits() {
    let start = Instant::now();
    let mu2 = MU * MU;
    let th = thermodynamic_limit_spectrum(0.5, LimitBranch::Thermal, G, MU, OMEGA02, OMEGA12).unwrap();
    let d = G * 0.5f64.sqrt() * MU;
    let want_th = [(OMEGA12, mu2), (OMEGA02 - d, 0.5 * mu2), (OMEGA02 + d, 0.5 * mu2)];
    let sy = thermodynamic_limit_spectrum(0.5, LimitBranch::Symmetric, G, MU, OMEGA02, OMEGA12).unwrap();
    let s = 2f64.sqrt() * G * MU;
    let want_sy = [
        (OMEGA12 - s, 0.5 * mu2),
        (OMEGA12 + s, 0.5 * mu2),
        (OMEGA02 - s, 0.5 * mu2),
        (OMEGA02 + s, 0.5 * mu2),
    ];
    let exact = |sp: &Spectrum, want: &[(f64, f64)]| {
        sp.len() == want.len()
            && sp
                .frequencies
                .iter()
                .zip(&sp.intensities)
                .zip(want)
                .all(|((&w, &i), &(ww, wi))| w == ww && i == wi)
    };
    let th_ok = exact(&th, &want_th);
    let sy_ok = exact(&sy, &want_sy);
    let split = th.frequencies[2] - th.frequencies[1];
    let secs = start.elapsed().as_secs_f64();
    report(
        "7",
        th_ok && sy_ok && secs < 1.0,
        format!(
            "thermal r0=½: {} sticks, R splitting {split:.6e} (2g√½μ = {:.6e}), single dark line, exact: {th_ok}; \
             symmetric: {} sticks at ±√2gμ, exact: {sy_ok}; {secs:.4}s",
            th.len(),
            2.0 * d,
            sy.len()
        ),
    );
}

#[test]
fn criterion_08_vacuum_fluctuation_signature() {
    let qr = run(Light::Quantum, 0, false);
    let qp = run(Light::Quantum, 1, false);
    let cr = run(Light::Classical, 0, false);
    let cp = run(Light::Classical, 1, false);
    let q_ratio = max_abs(qp.traj.field.q()) / max_abs(qr.traj.field.q());
    let q2 = match &qp.traj.field {
        FieldSeries::Quantum { q2_expect, .. } => q2_expect.as_slice(),
        _ => unreachable!(),
    };
    let vacuum = 1.0 / (2.0 * OMEGA_C);
    let q2_rel = peak_to_peak(q2) / vacuum;
    let c_ratio = max_abs(cp.traj.field.q()) / max_abs(cr.traj.field.q());
    let pass = q_ratio < 1e-3 && q2_rel > 0.1 && c_ratio < 1e-3;
    report(
        "8",
        pass,
        format!(
            "quantum max|<q>| P/R = {q_ratio:.3e} (need < 1e-3); <q²> peak-to-peak = {:.2}% of 1/(2ω_c) (need > 10%); \
             classical max|q| P/R = {c_ratio:.3e} (need < 1e-3)",
            100.0 * q2_rel
        ),
    );
}

#[test]
fn criterion_09_population_dynamics() {
    let cr = run(Light::Classical, 0, false);
    let i0 = cr.traj.post_pulse_index();
    let p0 = &cr.traj.population("psi_0").unwrap()[i0..];
    let p2 = &cr.traj.population("psi_2").unwrap()[i0..];
    let rec_dt = cr.traj.times[1] - cr.traj.times[0];
    let corr = pearson(p0, p2);
    let freq = dominant_frequency(p2, rec_dt);
    let target = 2.0 * G * MU;
    let r_ok = corr < -0.9 && ((freq - target) / target).abs() <= 0.05;

    let cp = run(Light::Classical, 1, false);
    let j0 = cp.traj.post_pulse_index();
    let var1 = peak_to_peak(&cp.traj.population("psi_1").unwrap()[j0..]);
    let var2 = peak_to_peak(&cp.traj.population("psi_2").unwrap()[j0..]);
    let p_ok = var1 <= 1e-4 && var2 <= 1e-4;

    let qp = run(Light::Quantum, 1, false);
    let k0 = qp.traj.post_pulse_index();
    let osc = |label: &str| {
        let x = &qp.traj.population(label).unwrap()[k0..];
        (peak_to_peak(x) / max_abs(x), dominant_frequency(x, rec_dt))
    };
    let (a20, f20) = osc("psi_2,N=0");
    let (a11, f11) = osc("psi_1,N=1");
    let q_ok = a20 > 0.1 && a11 > 0.1;
    report(
        "9",
        r_ok && p_ok && q_ok,
        format!(
            "classical R: corr(p0,p2) {corr:.4}, p2 frequency {freq:.5e} vs 2gμ {target:.1e} ({:+.2}%); \
             classical P: post-pulse peak-to-peak p1 {var1:.2e}, p2 {var2:.2e} (tol 1e-4); \
             quantum P: p(2,0) relative swing {a20:.3} at {f20:.3e}, p(1,1) relative swing {a11:.3} at {f11:.3e} (need > 0.1)",
            100.0 * (freq - target) / target
        ),
    );
}

#[test]
fn criterion_10_hcl_rovibrational_polaritons() {
    let start = Instant::now();
    let params = MorseParams::default();
    let m = build_morse_rovib(&params, &RadialGrid::default()).unwrap();
    let e = m.energies();
    let idx = |v: u32, j: u32, mm: i32| m.index_of(&StateLabel::Rovib { v, j, m: mm }).unwrap();
    let fundamental = hartree_to_cm1(e[idx(1, 1, 0)] - e[idx(0, 0, 0)]);
    let fund_ok = (fundamental - 2906.46).abs() <= 5.0;

    let cav = CavityParams {
        omega_c: cm1_to_hartree(2906.46),
        g: cm1_to_hartree(400.0),
        include_dse: true,
        n_fock_max: 2,
    };
    let basis = ProductBasis::for_model(&m, &cav);
    let sol = diagonalize_polaritons(&assemble_hamiltonian(&m, &cav, &basis).unwrap()).unwrap();
    let w = boltzmann_weights(&m, 300.0, |_, _| true).unwrap();
    let (spec, unmatched) = thermal_static_spectrum(&sol, &m, &basis, &w).unwrap();

    let free = |j: u32, jp: u32| hartree_to_cm1(e[idx(1, jp, 0)] - e[idx(0, j, 0)]);
    let cm1 = spec.frequencies_cm1();
    // A line is split when at least two sticks from its initial state, each
    // carrying ≥ 10% of the group, sit more than the uncoupled tolerance apart.
    let split_line = |j: u32, jp: u32| -> (bool, Vec<f64>) {
        let label = format!("v=0,J={j},M=0,N=0");
        let centre = free(j, jp);
        let group: Vec<(f64, f64)> = (0..spec.len())
            .filter(|&k| spec.stick_info[k].label_i == label && (cm1[k] - centre).abs() < 60.0)
            .map(|k| (cm1[k], spec.intensities[k]))
            .collect();
        let tot: f64 = group.iter().map(|g| g.1).sum();
        let strong: Vec<f64> = group.iter().filter(|g| g.1 >= 0.1 * tot).map(|g| g.0).collect();
        let spread = strong.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - strong.iter().cloned().fold(f64::INFINITY, f64::min);
        (strong.len() >= 2 && spread > 1.0, strong)
    };
    let (r0_split, r0_sticks) = split_line(0, 1);
    let (p2_split, p2_sticks) = split_line(2, 1);

    // Uncoupled lines: upper level detuned from every dressed partner
    // |0, J'±1, N=1⟩ by more than five coupling strengths.
    let mu01 = (m.dipole()[(idx(0, 0, 0), idx(1, 1, 0))] / angular_factor(0, 1, 0)).abs();
    let threshold = 5.0 * hartree_to_cm1(cav.g) * mu01;
    let omega_c = hartree_to_cm1(cav.omega_c);
    let j_max = params.j_max;
    let mut worst = 0.0f64;
    let mut n_lines = 0;
    let mut missing = Vec::new();
    for j in 0..=j_max {
        for jp in [j.wrapping_sub(1), j + 1] {
            if jp > j_max {
                continue;
            }
            let upper = e[idx(1, jp, 0)];
            let detuning = [jp.wrapping_sub(1), jp + 1]
                .iter()
                .filter(|&&jj| jj <= j_max)
                .map(|&jj| (hartree_to_cm1(upper - e[idx(0, jj, 0)]) - omega_c).abs())
                .fold(f64::INFINITY, f64::min);
            if detuning <= threshold {
                continue;
            }
            let (mut wi, mut it) = (0.0, 0.0);
            for k in 0..spec.len() {
                let info = &spec.stick_info[k];
                let (Some(StateLabel::Rovib { v: 0, j: a, m: ma }), Some(StateLabel::Rovib { v: 1, j: b, m: mb })) = (
                    StateLabel::parse(info.label_i.split(",N=").next().unwrap()),
                    StateLabel::parse(info.label_f.split(",N=").next().unwrap()),
                ) else {
                    continue;
                };
                if a == j && b == jp && ma == mb && info.label_i.ends_with("N=0") && info.label_f.ends_with("N=0") {
                    wi += cm1[k] * spec.intensities[k];
                    it += spec.intensities[k];
                }
            }
            if it == 0.0 {
                missing.push((j, jp));
                continue;
            }
            n_lines += 1;
            worst = worst.max((wi / it - free(j, jp)).abs());
        }
    }
    let uncoupled_ok = n_lines > 0 && missing.is_empty() && worst < 1.0;
    let secs = start.elapsed().as_secs_f64();
    report(
        "10",
        fund_ok && r0_split && p2_split && uncoupled_ok && unmatched.is_empty() && secs < 600.0,
        format!(
            "E(1,1)−E(0,0) = {fundamental:.3} cm⁻¹ (2906.46 ± 5); R(0) sticks {r0_sticks:.2?} around {:.2}; \
             P(2)→|1,1,0> sticks {p2_sticks:.2?} around {:.2}; {n_lines} uncoupled lines (detuning > {threshold:.1} cm⁻¹), \
             worst shift {worst:.3} cm⁻¹ (tol 1), missing {missing:?}; unmatched thermal states {}; {secs:.1}s",
            free(0, 1),
            free(2, 1),
            unmatched.len()
        ),
    );
}

#[test]
fn criterion_11_conservation_and_step_convergence() {
    let mut pass = true;
    let mut detail = Vec::new();
    for light in [Light::Classical, Light::Quantum] {
        for init in [0, 1] {
            let base = run(light, init, false);
            let half = run(light, init, true);
            for r in [base, half] {
                let (dn, de) = (r.traj.max_norm_drift(), r.traj.max_relative_energy_drift());
                pass &= dn <= 1e-8 && de <= 1e-7;
                detail.push(format!("{}: norm {dn:.1e}, energy {de:.1e}", r.name));
            }
            let bin = base.bin();
            let mut worst = 0.0f64;
            let hc = half.peaks.centers();
            if hc.len() != base.peaks.peaks.len() {
                worst = f64::INFINITY;
            }
            for c in base.peaks.centers() {
                let d = twinpol_core::spectra::nearest(c, &hc).map_or(f64::INFINITY, |x| x.1);
                worst = worst.max(d);
            }
            pass &= worst < 0.1 * bin;
            detail.push(format!(
                "{} vs dt/2: {} peaks, max shift {:.3} bin",
                base.name,
                base.peaks.peaks.len(),
                worst / bin
            ));
        }
    }
    report("11", pass, detail.join("; "));
}
