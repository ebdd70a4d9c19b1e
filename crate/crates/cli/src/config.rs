//! Run configuration: a TOML file with one model table (`[three_level]` or
//! `[morse]`), `[cavity]`, `[protocol]`, optional `[manymol]`, `[sweep]` and
//! `[output]`. Dimensional values are numbers (atomic units / kelvin) or
//! strings with a unit suffix: `"2e-4 au"`, `"400 cm-1"`, `"300 K"`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use twinpol_core::manymol::ManyMolBasisKind;
use twinpol_core::units::cm1_to_hartree;
use twinpol_core::{
    build_morse_rovib, build_three_level, CavityParams, KickPulse, LimitBranch, Lineshape, MolecularModel,
    MorseParams, RadialGrid, StateLabel, TimeGrid,
};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Quantity {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Framework {
    Classical,
    QuantumStatic,
    QuantumTd,
    ManymolBruteforce,
    ManymolAnalytic,
    ThermoLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManyMolInitial {
    /// n0 molecules in ψ_0, the rest in ψ_1, all arrangements.
    Thermal,
    /// ((ψ_0 + ψ_1)/√2)^{⊗N}.
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

// --- file schema -------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub three_level: Option<RawThreeLevel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub morse: Option<RawMorse>,
    #[serde(default)]
    pub cavity: RawCavity,
    pub protocol: RawProtocol,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manymol: Option<RawManyMol>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<RawSweep>,
    #[serde(default)]
    pub output: RawOutput,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawThreeLevel {
    pub energies: Option<Vec<Quantity>>,
    pub mu02: Option<f64>,
    pub mu12: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMorse {
    pub de: Option<Quantity>,
    pub alpha: Option<f64>,
    pub re: Option<f64>,
    pub m1: Option<f64>,
    pub m2: Option<f64>,
    pub v_max: Option<u32>,
    pub j_max: Option<u32>,
    /// Polynomial coefficients of μ(R) in powers of (R − R_e); the default
    /// (0.43, 0.30) is a placeholder that only affects intensities.
    pub dipole_curve: Option<Vec<f64>>,
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    pub n_points: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCavity {
    pub omega_c: Option<Quantity>,
    pub g: Option<Quantity>,
    pub g_sweep: Option<Vec<Quantity>>,
    pub dse: Option<bool>,
    pub n_fock_max: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPulse {
    pub amplitude: Option<f64>,
    pub t0: Option<Quantity>,
    pub sigma: Option<Quantity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawProtocol {
    pub framework: Framework,
    pub initial_state: Option<OneOrMany<String>>,
    pub photons: Option<usize>,
    pub temperature: Option<Quantity>,
    /// Thermal states below this fraction of the largest weight are skipped
    /// in time-dependent ensembles.
    pub thermal_cutoff: Option<f64>,
    pub t_end: Option<Quantity>,
    pub dt: Option<Quantity>,
    pub stride: Option<usize>,
    pub damping_tau: Option<Quantity>,
    pub pad_factor: Option<usize>,
    pub peak_threshold: Option<f64>,
    pub pulse: Option<RawPulse>,
}

impl Default for RawProtocol {
    fn default() -> Self {
        Self {
            framework: Framework::QuantumStatic,
            initial_state: None,
            photons: None,
            temperature: None,
            thermal_cutoff: None,
            t_end: None,
            dt: None,
            stride: None,
            damping_tau: None,
            pad_factor: None,
            peak_threshold: None,
            pulse: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawManyMol {
    pub n_mol: Option<OneOrMany<usize>>,
    pub n0: Option<OneOrMany<usize>>,
    pub initial: Option<ManyMolInitial>,
    pub basis: Option<ManyMolBasisKind>,
    pub r0: Option<f64>,
    pub limit: Option<LimitBranch>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSweep {
    #[serde(default)]
    pub window: Vec<RawWindow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawWindow {
    pub name: String,
    pub initial: String,
    pub center: Quantity,
    pub half_width: Quantity,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    pub dir: Option<PathBuf>,
    pub format: Option<Format>,
    pub trajectory: Option<bool>,
    pub broaden_hwhm: Option<Quantity>,
    pub lineshape: Option<Lineshape>,
}

// --- resolved configuration --------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    ThreeLevel { energies: [f64; 3], mu02: f64, mu12: f64 },
    Morse { params: MorseParams, grid: RadialGrid },
}

impl ModelSpec {
    pub fn build(&self) -> Result<MolecularModel, CliError> {
        Ok(match self {
            ModelSpec::ThreeLevel { energies: e, mu02, mu12 } => build_three_level(e[0], e[1], e[2], *mu02, *mu12)?,
            ModelSpec::Morse { params, grid } => build_morse_rovib(params, grid)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub framework: Framework,
    /// Canonical state labels (ignored when `temperature` is set).
    pub initial_states: Vec<String>,
    pub photons: usize,
    pub temperature: Option<f64>,
    pub thermal_cutoff: f64,
    pub pulse: KickPulse,
    pub grid: TimeGrid,
    pub damping_tau: f64,
    pub pad_factor: usize,
    pub peak_threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManyMolSpec {
    pub n_mol: Vec<usize>,
    /// None: every n0 from 0 to N.
    pub n0: Option<Vec<usize>>,
    pub initial: ManyMolInitial,
    pub basis: ManyMolBasisKind,
    pub r0: f64,
    pub limit: LimitBranch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub name: String,
    pub initial: String,
    pub center: f64,
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub format: Format,
    pub trajectory: bool,
    pub broaden_hwhm: Option<f64>,
    pub lineshape: Lineshape,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model_spec: ModelSpec,
    pub model: MolecularModel,
    pub cavity: CavityParams,
    pub g_sweep: Option<Vec<f64>>,
    pub protocol: Protocol,
    pub manymol: ManyMolSpec,
    pub windows: Vec<Window>,
    pub output: OutputSpec,
}

// --- units -------------------------------------------------------------------

#[derive(Clone, Copy)]
enum Dim {
    Energy,
    Time,
    Temperature,
}

fn split_quantity(q: &Quantity, key: &str) -> Result<(f64, Option<String>), CliError> {
    let (value, unit) = match q {
        Quantity::Number(x) => (*x, None),
        Quantity::Text(s) => {
            let s = s.trim();
            let split = s
                .char_indices()
                .find(|&(i, c)| c.is_ascii_alphabetic() && !(matches!(c, 'e' | 'E') && i > 0 && next_is_numeric(s, i)))
                .map_or(s.len(), |(i, _)| i);
            let (num, unit) = s.split_at(split);
            let value: f64 = num
                .trim()
                .parse()
                .map_err(|_| CliError::config(key, format!("cannot read a number from {s:?}")))?;
            (value, Some(unit.trim().to_string()).filter(|u| !u.is_empty()))
        }
    };
    if !value.is_finite() {
        return Err(CliError::config(key, format!("value {value} is not finite")));
    }
    Ok((value, unit))
}

fn quantity(q: &Quantity, dim: Dim, key: &str) -> Result<f64, CliError> {
    let (value, unit) = split_quantity(q, key)?;
    let converted = match (dim, unit.as_deref()) {
        (Dim::Energy, None | Some("au") | Some("hartree") | Some("Eh")) => value,
        (Dim::Energy, Some("cm-1")) => cm1_to_hartree(value),
        (Dim::Time, None | Some("au")) => value,
        (Dim::Temperature, None | Some("K")) => value,
        (d, Some(u)) => {
            let expected = match d {
                Dim::Energy => "au or cm-1",
                Dim::Time => "au",
                Dim::Temperature => "K",
            };
            return Err(CliError::config(key, format!("unit {u:?} does not fit here (expected {expected})")));
        }
    };
    Ok(converted)
}

fn next_is_numeric(s: &str, i: usize) -> bool {
    s[i + 1..].chars().next().is_some_and(|c| c.is_ascii_digit() || c == '-' || c == '+')
}

fn opt_quantity(q: &Option<Quantity>, dim: Dim, key: &str, default: f64) -> Result<f64, CliError> {
    q.as_ref().map_or(Ok(default), |q| quantity(q, dim, key))
}

// --- parsing -----------------------------------------------------------------

/// Read a config file (TOML) or the `config` echo of a run manifest (JSON).
pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config("", format!("cannot read {}: {e}", path.display())))?;
    let raw = if path.extension().is_some_and(|e| e == "json") {
        let doc: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::config("", format!("{}: {e}", path.display())))?;
        let cfg = doc
            .get("config")
            .ok_or_else(|| CliError::config("config", "manifest has no config echo"))?;
        serde_json::from_value(cfg.clone()).map_err(|e| CliError::config("config", e.to_string()))?
    } else {
        parse_str(&text)?
    };
    resolve(&raw)
}

pub fn parse_str(text: &str) -> Result<RawConfig, CliError> {
    toml::from_str(text).map_err(|e| CliError::config("", e.to_string()))
}

pub fn resolve(raw: &RawConfig) -> Result<RunConfig, CliError> {
    let model_spec = match (&raw.three_level, &raw.morse) {
        (Some(t), None) => resolve_three_level(t)?,
        (None, Some(m)) => resolve_morse(m)?,
        (Some(_), Some(_)) => return Err(CliError::config("model", "give exactly one of [three_level] or [morse]")),
        (None, None) => return Err(CliError::config("model", "missing model table: [three_level] or [morse]")),
    };
    let model = model_spec.build()?;
    let is_three = matches!(model_spec, ModelSpec::ThreeLevel { .. });

    let c = &raw.cavity;
    let require = |q: &Option<Quantity>, key: &str, default: f64| -> Result<f64, CliError> {
        match q {
            Some(q) => quantity(q, Dim::Energy, key),
            None if is_three => Ok(default),
            None => Err(CliError::config(key, "missing required key for a [morse] model")),
        }
    };
    let omega_c = require(&c.omega_c, "cavity.omega_c", 1e-2)?;
    let g_sweep = match &c.g_sweep {
        Some(list) => {
            if c.g.is_some() {
                return Err(CliError::config("cavity.g_sweep", "give either g or g_sweep, not both"));
            }
            if list.is_empty() {
                return Err(CliError::config("cavity.g_sweep", "empty list"));
            }
            Some(
                list.iter()
                    .enumerate()
                    .map(|(i, q)| quantity(q, Dim::Energy, &format!("cavity.g_sweep[{i}]")))
                    .collect::<Result<Vec<_>, _>>()?,
            )
        }
        None => None,
    };
    let g = match &g_sweep {
        Some(list) => list[0],
        None => require(&c.g, "cavity.g", 2e-4)?,
    };
    let cavity = CavityParams {
        omega_c,
        g,
        include_dse: c.dse.unwrap_or(true),
        n_fock_max: c.n_fock_max.unwrap_or(2),
    };
    cavity.validate().map_err(|e| CliError::config("cavity", e.to_string()))?;

    let p = &raw.protocol;
    let temperature = p
        .temperature
        .as_ref()
        .map(|q| quantity(q, Dim::Temperature, "protocol.temperature"))
        .transpose()?;
    if temperature.is_some_and(|t| t <= 0.0) {
        return Err(CliError::config("protocol.temperature", "must be positive"));
    }
    if temperature.is_some() && p.initial_state.is_some() {
        return Err(CliError::config(
            "protocol.initial_state",
            "give either initial_state or temperature (thermal ensemble), not both",
        ));
    }
    let initial_states = match &p.initial_state {
        Some(list) => list
            .to_vec()
            .iter()
            .map(|s| canonical_label(&model, s, "protocol.initial_state"))
            .collect::<Result<Vec<_>, _>>()?,
        None => vec![model.label(0).to_string()],
    };
    let photons = p.photons.unwrap_or(0);
    if photons > cavity.n_fock_max {
        return Err(CliError::config(
            "protocol.photons",
            format!("{photons} exceeds cavity.n_fock_max = {}", cavity.n_fock_max),
        ));
    }
    let pulse_raw = p.pulse.clone().unwrap_or_default();
    let defaults = KickPulse::default();
    let pulse = KickPulse {
        amplitude: pulse_raw.amplitude.unwrap_or(defaults.amplitude),
        t0: opt_quantity(&pulse_raw.t0, Dim::Time, "protocol.pulse.t0", defaults.t0)?,
        sigma: opt_quantity(&pulse_raw.sigma, Dim::Time, "protocol.pulse.sigma", defaults.sigma)?,
    };
    pulse.validate().map_err(|e| CliError::config("protocol.pulse", e.to_string()))?;
    let grid = TimeGrid {
        t_end: opt_quantity(&p.t_end, Dim::Time, "protocol.t_end", 1.6e6)?,
        dt: opt_quantity(&p.dt, Dim::Time, "protocol.dt", 0.5)?,
        stride: p.stride.unwrap_or(20),
    };
    if !(grid.t_end > 0.0 && grid.dt > 0.0 && grid.stride > 0) {
        return Err(CliError::config("protocol", "t_end, dt and stride must be positive"));
    }
    let protocol = Protocol {
        framework: p.framework,
        initial_states,
        photons,
        temperature,
        thermal_cutoff: p.thermal_cutoff.unwrap_or(1e-4),
        pulse,
        grid,
        damping_tau: opt_quantity(&p.damping_tau, Dim::Time, "protocol.damping_tau", grid.t_end / 8.0)?,
        pad_factor: p.pad_factor.unwrap_or(4),
        peak_threshold: p.peak_threshold.unwrap_or(0.01),
    };
    if !(protocol.damping_tau > 0.0) || protocol.pad_factor == 0 {
        return Err(CliError::config("protocol", "damping_tau and pad_factor must be positive"));
    }
    if !(0.0..1.0).contains(&protocol.peak_threshold) {
        return Err(CliError::config("protocol.peak_threshold", "must lie in [0, 1)"));
    }

    let many = matches!(
        protocol.framework,
        Framework::ManymolBruteforce | Framework::ManymolAnalytic | Framework::ThermoLimit
    );
    if many {
        if !is_three {
            return Err(CliError::config(
                "protocol.framework",
                "many-molecule frameworks need a [three_level] model",
            ));
        }
        if temperature.is_some() {
            return Err(CliError::config(
                "protocol.temperature",
                "many-molecule frameworks take their ensemble from [manymol]",
            ));
        }
    } else if raw.manymol.is_some() {
        return Err(CliError::config("manymol", "only used by many-molecule frameworks"));
    }
    let m = raw.manymol.clone().unwrap_or_default();
    let manymol = ManyMolSpec {
        n_mol: m.n_mol.map_or(vec![4], |x| x.to_vec()),
        n0: m.n0.map(|x| x.to_vec()),
        initial: m.initial.unwrap_or(ManyMolInitial::Thermal),
        basis: m.basis.unwrap_or(ManyMolBasisKind::Product),
        r0: m.r0.unwrap_or(0.5),
        limit: m.limit.unwrap_or(LimitBranch::Thermal),
    };
    if manymol.n_mol.is_empty() || manymol.n_mol.contains(&0) {
        return Err(CliError::config("manymol.n_mol", "molecule counts must be positive"));
    }
    if let Some(n0) = &manymol.n0 {
        let nmin = *manymol.n_mol.iter().min().unwrap();
        if let Some(bad) = n0.iter().find(|&&x| x > nmin) {
            return Err(CliError::config("manymol.n0", format!("n0 = {bad} exceeds n_mol = {nmin}")));
        }
    }
    if !(0.0..=1.0).contains(&manymol.r0) {
        return Err(CliError::config("manymol.r0", "must lie in [0, 1]"));
    }
    if manymol.basis == ManyMolBasisKind::Symmetric && manymol.initial == ManyMolInitial::Thermal && many {
        return Err(CliError::config(
            "manymol.basis",
            "thermal arrangements need the product basis; use initial = \"symmetric\" with the symmetric basis",
        ));
    }
    if let ModelSpec::ThreeLevel { mu02, mu12, .. } = model_spec {
        if matches!(protocol.framework, Framework::ManymolAnalytic | Framework::ThermoLimit) && mu02 != mu12 {
            return Err(CliError::config(
                "three_level",
                "analytic many-molecule spectra assume mu02 = mu12",
            ));
        }
    }

    let windows = resolve_windows(raw, &model, &model_spec, &protocol, g_sweep.as_deref())?;

    let o = &raw.output;
    let output = OutputSpec {
        dir: o.dir.clone().unwrap_or_else(|| PathBuf::from("twinpol-out")),
        format: o.format.unwrap_or(Format::Csv),
        trajectory: o.trajectory.unwrap_or(true),
        broaden_hwhm: o
            .broaden_hwhm
            .as_ref()
            .map(|q| quantity(q, Dim::Energy, "output.broaden_hwhm"))
            .transpose()?,
        lineshape: o.lineshape.unwrap_or(Lineshape::Lorentzian),
    };
    if output.broaden_hwhm.is_some_and(|w| w <= 0.0) {
        return Err(CliError::config("output.broaden_hwhm", "must be positive"));
    }

    Ok(RunConfig {
        model_spec,
        model,
        cavity,
        g_sweep,
        protocol,
        manymol,
        windows,
        output,
    })
}

fn resolve_three_level(t: &RawThreeLevel) -> Result<ModelSpec, CliError> {
    let energies = match &t.energies {
        Some(list) => {
            if list.len() != 3 {
                return Err(CliError::config("three_level.energies", "expected three energies"));
            }
            let mut e = [0.0; 3];
            for (i, q) in list.iter().enumerate() {
                e[i] = quantity(q, Dim::Energy, &format!("three_level.energies[{i}]"))?;
            }
            e
        }
        None => [0.0, 2e-3, 10e-3],
    };
    Ok(ModelSpec::ThreeLevel {
        energies,
        mu02: t.mu02.unwrap_or(1.0),
        mu12: t.mu12.unwrap_or(1.0),
    })
}

fn resolve_morse(m: &RawMorse) -> Result<ModelSpec, CliError> {
    let d = MorseParams::default();
    let g = RadialGrid::default();
    // kept verbatim when given in cm-1 so that the echo round-trips exactly
    let de_cm1 = match &m.de {
        Some(q) => match split_quantity(q, "morse.de")? {
            (x, Some(u)) if u == "cm-1" => x,
            _ => twinpol_core::units::hartree_to_cm1(quantity(q, Dim::Energy, "morse.de")?),
        },
        None => d.de_cm1,
    };
    Ok(ModelSpec::Morse {
        params: MorseParams {
            de_cm1,
            alpha: m.alpha.unwrap_or(d.alpha),
            re: m.re.unwrap_or(d.re),
            m1: m.m1.unwrap_or(d.m1),
            m2: m.m2.unwrap_or(d.m2),
            v_max: m.v_max.unwrap_or(d.v_max),
            j_max: m.j_max.unwrap_or(d.j_max),
            dipole_curve: m.dipole_curve.clone().unwrap_or(d.dipole_curve),
        },
        grid: RadialGrid {
            r_min: m.r_min.unwrap_or(g.r_min),
            r_max: m.r_max.unwrap_or(g.r_max),
            n_points: m.n_points.unwrap_or(g.n_points),
        },
    })
}

/// Canonical form of a state label, or an error naming the valid ones.
fn canonical_label(model: &MolecularModel, s: &str, key: &str) -> Result<String, CliError> {
    match StateLabel::parse(s).and_then(|l| model.index_of(&l)) {
        Some(k) => Ok(model.label(k).to_string()),
        None => Err(CliError::config(key, format!("unknown state label {s:?}; valid labels: {}", describe_labels(model)))),
    }
}

fn describe_labels(model: &MolecularModel) -> String {
    let labels = model.labels();
    if labels.len() <= 12 {
        return labels.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(", ");
    }
    let (mut vmax, mut jmax) = (0, 0);
    for l in labels {
        if let StateLabel::Rovib { v, j, .. } = l {
            vmax = vmax.max(*v);
            jmax = jmax.max(*j);
        }
    }
    format!("v=0..{vmax},J=0..{jmax},M=-J..J (e.g. {})", labels[0])
}

fn resolve_windows(
    raw: &RawConfig,
    model: &MolecularModel,
    spec: &ModelSpec,
    protocol: &Protocol,
    g_sweep: Option<&[f64]>,
) -> Result<Vec<Window>, CliError> {
    if let Some(sw) = &raw.sweep {
        if g_sweep.is_none() {
            return Err(CliError::config("sweep", "windows need cavity.g_sweep"));
        }
        if protocol.temperature.is_some() {
            return Err(CliError::config("sweep", "splitting windows refer to single initial states"));
        }
        if !matches!(
            protocol.framework,
            Framework::Classical | Framework::QuantumStatic | Framework::QuantumTd
        ) {
            return Err(CliError::config("sweep", "splitting windows need a single-molecule framework"));
        }
        let mut out = Vec::new();
        for (i, w) in sw.window.iter().enumerate() {
            let key = format!("sweep.window[{i}]");
            let initial = canonical_label(model, &w.initial, &format!("{key}.initial"))?;
            if !protocol.initial_states.contains(&initial) {
                return Err(CliError::config(
                    &format!("{key}.initial"),
                    format!("{initial} is not among protocol.initial_state"),
                ));
            }
            out.push(Window {
                name: w.name.clone(),
                initial,
                center: quantity(&w.center, Dim::Energy, &format!("{key}.center"))?,
                half_width: quantity(&w.half_width, Dim::Energy, &format!("{key}.half_width"))?,
            });
        }
        return Ok(out);
    }
    // default R/P windows of the 3-level model
    let (Some(gs), ModelSpec::ThreeLevel { energies: e, mu02, mu12 }) = (g_sweep, spec) else {
        return Ok(Vec::new());
    };
    if protocol.temperature.is_some()
        || !matches!(
            protocol.framework,
            Framework::Classical | Framework::QuantumStatic | Framework::QuantumTd
        )
    {
        return Ok(Vec::new());
    }
    let gmax = gs.iter().cloned().fold(0.0, f64::max);
    let mut out = Vec::new();
    for (name, k, center, mu) in [("R", 0, e[2] - e[0], mu02), ("P", 1, e[2] - e[1], mu12)] {
        let initial = model.label(k).to_string();
        if protocol.initial_states.contains(&initial) {
            out.push(Window {
                name: name.into(),
                initial,
                center,
                half_width: 5.0 * gmax * mu.abs(),
            });
        }
    }
    Ok(out)
}

impl RunConfig {
    /// Fully explicit echo (atomic units, every default written out); feeding
    /// it back through `resolve` reproduces this configuration exactly.
    pub fn to_raw(&self) -> RawConfig {
        let n = Quantity::Number;
        let (three_level, morse) = match &self.model_spec {
            ModelSpec::ThreeLevel { energies, mu02, mu12 } => (
                Some(RawThreeLevel {
                    energies: Some(energies.iter().map(|&e| n(e)).collect()),
                    mu02: Some(*mu02),
                    mu12: Some(*mu12),
                }),
                None,
            ),
            ModelSpec::Morse { params, grid } => (
                None,
                Some(RawMorse {
                    de: Some(Quantity::Text(format!("{} cm-1", params.de_cm1))),
                    alpha: Some(params.alpha),
                    re: Some(params.re),
                    m1: Some(params.m1),
                    m2: Some(params.m2),
                    v_max: Some(params.v_max),
                    j_max: Some(params.j_max),
                    dipole_curve: Some(params.dipole_curve.clone()),
                    r_min: Some(grid.r_min),
                    r_max: Some(grid.r_max),
                    n_points: Some(grid.n_points),
                }),
            ),
        };
        let p = &self.protocol;
        let many = matches!(
            p.framework,
            Framework::ManymolBruteforce | Framework::ManymolAnalytic | Framework::ThermoLimit
        );
        RawConfig {
            three_level,
            morse,
            cavity: RawCavity {
                omega_c: Some(n(self.cavity.omega_c)),
                g: self.g_sweep.is_none().then_some(n(self.cavity.g)),
                g_sweep: self.g_sweep.as_ref().map(|v| v.iter().map(|&g| n(g)).collect()),
                dse: Some(self.cavity.include_dse),
                n_fock_max: Some(self.cavity.n_fock_max),
            },
            protocol: RawProtocol {
                framework: p.framework,
                initial_state: p.temperature.is_none().then(|| OneOrMany::Many(p.initial_states.clone())),
                photons: Some(p.photons),
                temperature: p.temperature.map(n),
                thermal_cutoff: Some(p.thermal_cutoff),
                t_end: Some(n(p.grid.t_end)),
                dt: Some(n(p.grid.dt)),
                stride: Some(p.grid.stride),
                damping_tau: Some(n(p.damping_tau)),
                pad_factor: Some(p.pad_factor),
                peak_threshold: Some(p.peak_threshold),
                pulse: Some(RawPulse {
                    amplitude: Some(p.pulse.amplitude),
                    t0: Some(n(p.pulse.t0)),
                    sigma: Some(n(p.pulse.sigma)),
                }),
            },
            manymol: many.then(|| RawManyMol {
                n_mol: Some(OneOrMany::Many(self.manymol.n_mol.clone())),
                n0: self.manymol.n0.clone().map(OneOrMany::Many),
                initial: Some(self.manymol.initial),
                basis: Some(self.manymol.basis),
                r0: Some(self.manymol.r0),
                limit: Some(self.manymol.limit),
            }),
            sweep: (!self.windows.is_empty()).then(|| RawSweep {
                window: self
                    .windows
                    .iter()
                    .map(|w| RawWindow {
                        name: w.name.clone(),
                        initial: w.initial.clone(),
                        center: n(w.center),
                        half_width: n(w.half_width),
                    })
                    .collect(),
            }),
            output: RawOutput {
                dir: Some(self.output.dir.clone()),
                format: Some(self.output.format),
                trajectory: Some(self.output.trajectory),
                broaden_hwhm: self.output.broaden_hwhm.map(n),
                lineshape: Some(self.output.lineshape),
            },
        }
    }

    /// Same configuration with a single coupling strength (sweep child).
    pub fn with_g(&self, g: f64) -> RunConfig {
        let mut c = self.clone();
        c.cavity.g = g;
        c.g_sweep = None;
        c.windows.clear();
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(framework: &str) -> String {
        format!("[three_level]\n[protocol]\nframework = \"{framework}\"\n")
    }

    #[test]
    fn defaults_resolved() {
        let c = resolve(&parse_str(&minimal("quantum_static")).unwrap()).unwrap();
        assert_eq!(c.cavity.n_fock_max, 2);
        assert!(c.cavity.include_dse);
        assert_eq!(c.protocol.initial_states, vec!["psi_0"]);
        assert_eq!(c.protocol.grid.t_end / 8.0, c.protocol.damping_tau);
    }

    #[test]
    fn unit_suffixes() {
        let e = |s: &str| quantity(&Quantity::Text(s.into()), Dim::Energy, "k");
        assert_eq!(e("2e-4 au").unwrap(), 2e-4);
        assert_eq!(e("2E-4au").unwrap(), 2e-4);
        assert!((e("219474.6313632 cm-1").unwrap() - 1.0).abs() < 1e-15);
        assert!(e("300 K").is_err());
        let t = quantity(&Quantity::Text("300 K".into()), Dim::Temperature, "k").unwrap();
        assert_eq!(t, 300.0);
        assert!(quantity(&Quantity::Text("300 cm-1".into()), Dim::Temperature, "protocol.temperature")
            .unwrap_err()
            .to_string()
            .contains("protocol.temperature"));
        assert!(e("fast").is_err());
    }

    #[test]
    fn g_sweep_schedules_children() {
        let text = format!(
            "{}initial_state = [\"psi_0\", \"psi_1\"]\n[cavity]\ng_sweep = [0.5e-4, 1e-4, 1.5e-4, 2e-4]\n",
            minimal("quantum_static")
        );
        // [cavity] after [protocol] is fine in TOML
        let c = resolve(&parse_str(&text).unwrap()).unwrap();
        assert_eq!(c.g_sweep.as_ref().unwrap().len(), 4);
        assert_eq!(c.windows.len(), 2);
        assert_eq!(c.windows[0].name, "R");
        assert!((c.windows[1].center - 8e-3).abs() < 1e-15);
    }

    #[test]
    fn bad_label_names_valid_ones() {
        let text = format!("{}initial_state = \"psi_3\"\n", minimal("quantum_static"));
        let err = resolve(&parse_str(&text).unwrap()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("psi_3") && msg.contains("psi_0, psi_1, psi_2"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_key_rejected_with_context() {
        let err = parse_str("[three_level]\nfoo = 1\n[protocol]\nframework = \"classical\"\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("foo") && msg.contains("line"), "{msg}");
    }

    #[test]
    fn missing_required_key() {
        assert!(parse_str("[three_level]\n[protocol]\n").is_err());
        let err = resolve(&parse_str("[morse]\n[protocol]\nframework = \"quantum_static\"\n").unwrap());
        assert!(err.unwrap_err().to_string().contains("cavity.omega_c"));
    }

    #[test]
    fn exactly_one_model() {
        let both = "[three_level]\n[morse]\n[protocol]\nframework = \"classical\"\n";
        assert!(resolve(&parse_str(both).unwrap()).is_err());
        let none = "[protocol]\nframework = \"classical\"\n";
        assert!(resolve(&parse_str(none).unwrap()).is_err());
    }

    #[test]
    fn explicit_echo_round_trips() {
        let text = "[three_level]\nenergies = [\"0 au\", \"438.9 cm-1\", \"2194.7 cm-1\"]\n\
                    [cavity]\ng = \"40 cm-1\"\ndse = false\n\
                    [protocol]\nframework = \"quantum_td\"\ninitial_state = \" psi_1\"\n\
                    [output]\nbroaden_hwhm = \"1 cm-1\"\n";
        let c = resolve(&parse_str(text).unwrap()).unwrap();
        assert_eq!(c.protocol.initial_states, vec!["psi_1"]);
        let raw = c.to_raw();
        let again = resolve(&raw).unwrap();
        assert_eq!(again.to_raw(), raw);
        assert_eq!(again.cavity, c.cavity);
        assert_eq!(again.model_spec, c.model_spec);
        // and through JSON, as stored in a manifest
        let json = serde_json::to_string(&raw).unwrap();
        let back: RawConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, raw);
        // and through TOML
        let toml_text = toml::to_string(&raw).unwrap();
        assert_eq!(parse_str(&toml_text).unwrap(), raw);
    }

    proptest::proptest! {
        #[test]
        fn cm1_text_matches_numeric_au(x in 1e-3f64..1e5) {
            let text = quantity(&Quantity::Text(format!("{x} cm-1")), Dim::Energy, "k").unwrap();
            proptest::prop_assert_eq!(text, cm1_to_hartree(x));
            let au = quantity(&Quantity::Text(format!("{x:e}au")), Dim::Energy, "k").unwrap();
            proptest::prop_assert_eq!(au, x);
        }

        #[test]
        fn echo_round_trips_any_coupling(g in 0.0f64..1e-3, wc in 1e-3f64..1e-1) {
            let text = format!("[three_level]\n[cavity]\ng = {g:e}\nomega_c = {wc:e}\n[protocol]\nframework = \"classical\"\n");
            let c = resolve(&parse_str(&text).unwrap()).unwrap();
            let raw = c.to_raw();
            let back: RawConfig = parse_str(&toml::to_string(&raw).unwrap()).unwrap();
            proptest::prop_assert_eq!(resolve(&back).unwrap().cavity, c.cavity);
        }
    }

    #[test]
    fn manymol_needs_three_level_and_product_basis() {
        let text = "[three_level]\n[protocol]\nframework = \"manymol_bruteforce\"\n[manymol]\nbasis = \"symmetric\"\n";
        assert!(resolve(&parse_str(text).unwrap()).is_err());
        let text = "[three_level]\n[protocol]\nframework = \"quantum_static\"\n[manymol]\nn_mol = 2\n";
        assert!(resolve(&parse_str(text).unwrap()).is_err());
    }
}
