//! Line-oriented scenario/sweep config format.
//!
//! Syntax: `key = value` pairs, `#` starts a comment, blank lines are
//! ignored, and a section header `[sweep.<param>]` opens an axis whose body
//! holds a single `values = v1, v2, ...` list. Unknown keys, duplicate keys,
//! and unparsable numbers are hard errors carrying the line number.
//!
//! All frequencies are given as ordinary frequencies in Hz (`*_hz` keys) and
//! multiplied by 2π exactly once, here, when the config is resolved to
//! angular parameters.

use std::collections::BTreeMap;
use std::fmt;

use ionkerr::gate::HamiltonianLevel;
use ionkerr::hamiltonian::{DissipationParams, PhysicalParams, RegimeThresholds};
use ionkerr::IonLevel;

const TAU: f64 = std::f64::consts::TAU;

/// Parse/validation failure with the offending line when known.
#[derive(Debug, Clone)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        Self { line: Some(line), message: message.into() }
    }

    pub(crate) fn plain(message: impl Into<String>) -> Self {
        Self { line: None, message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(n) => write!(f, "config error at line {n}: {}", self.message),
            None => write!(f, "config error: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Every accepted top-level key, in the order used for echo headers.
const KNOWN_KEYS: &[&str] = &[
    "label",
    "level",
    "g_hz",
    "delta_hz",
    "delta_over_g",
    "nu_hz",
    "nu_over_delta",
    "omega_c_hz",
    "eta",
    "phonon_cutoff",
    "photon_cutoff",
    "kappa_hz",
    "gamma_hz",
    "t_final_s",
    "sample_count",
    "rel_tol",
    "abs_tol",
    "max_step_s",
    "initial",
    "amplitude_columns",
    "quad_points",
    "pt_samples",
    "transition_triples",
    "regime_g_over_delta_max",
    "regime_delta_over_nu_max",
    "regime_resonance_margin_min",
    "max_sweep_points",
    "reduction",
];

/// Keys that may serve as sweep axes (numeric scalars).
pub const SWEEPABLE_KEYS: &[&str] = &[
    "g_hz",
    "delta_hz",
    "delta_over_g",
    "nu_hz",
    "nu_over_delta",
    "omega_c_hz",
    "eta",
    "kappa_hz",
    "gamma_hz",
    "t_final_s",
];

/// Fully resolved single-scenario configuration (angular units).
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub label: String,
    pub level: HamiltonianLevel,
    pub params: PhysicalParams,
    pub dissipation: Option<DissipationParams>,
    pub phonon_cutoff: usize,
    pub photon_cutoff: usize,
    pub t_final_s: Option<f64>,
    pub sample_count: usize,
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub max_step_s: Option<f64>,
    /// Real amplitudes over basis kets; normalized downstream.
    pub initial: Vec<(f64, IonLevel, usize, usize)>,
    pub amplitude_columns: bool,
    /// Gauss-Legendre nodes per oscillation period in quadratures.
    pub quad_points: usize,
    /// Sample count of the transition-probability bound check.
    pub pt_samples: usize,
    /// (m, m′, n) triples for the bound check.
    pub transition_triples: Vec<(usize, usize, usize)>,
    pub thresholds: RegimeThresholds,
    pub max_sweep_points: usize,
    pub reductions: Vec<String>,
    /// Resolved `key = value` pairs, fixed order, echoed into every output.
    pub echo: Vec<(String, String)>,
}

/// A scenario plus one or more sweep axes.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub base: ScenarioConfig,
    /// (parameter, values) in file order.
    pub axes: Vec<(String, Vec<f64>)>,
    /// Raw top-level pairs, kept so axis points re-resolve from source.
    pub raw: BTreeMap<String, String>,
}

impl SweepConfig {
    pub fn point_count(&self) -> usize {
        self.axes.iter().fold(1usize, |acc, (_, v)| acc.saturating_mul(v.len()))
    }
}

/// A parsed config file: plain scenario, or scenario plus sweep axes.
#[derive(Debug, Clone)]
pub enum ConfigFile {
    Scenario(Box<ScenarioConfig>),
    Sweep(Box<SweepConfig>),
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(pos) => &line[..pos],
        None => line,
    }
}

/// Parses config text into a scenario or sweep description.
pub fn parse_config(text: &str) -> Result<ConfigFile, ConfigError> {
    let mut pairs: BTreeMap<String, String> = BTreeMap::new();
    let mut pair_lines: BTreeMap<String, usize> = BTreeMap::new();
    let mut axes: Vec<(String, Vec<f64>)> = Vec::new();
    let mut section: Option<(String, usize, bool)> = None; // (axis key, line, has values)

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw_line).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                return Err(ConfigError::at(line_no, "unterminated section header"));
            };
            let Some(param) = name.trim().strip_prefix("sweep.") else {
                return Err(ConfigError::at(
                    line_no,
                    format!("unknown section '[{}]' (only [sweep.<param>] is accepted)", name.trim()),
                ));
            };
            let param = param.trim();
            if !SWEEPABLE_KEYS.contains(&param) {
                return Err(ConfigError::at(
                    line_no,
                    format!("'{param}' is not a sweepable parameter"),
                ));
            }
            if axes.iter().any(|(k, _)| k == param) {
                return Err(ConfigError::at(line_no, format!("duplicate sweep section for '{param}'")));
            }
            if let Some((prev, prev_line, has_values)) = section.take() {
                if !has_values {
                    return Err(ConfigError::at(
                        prev_line,
                        format!("sweep section '{prev}' has no 'values' list"),
                    ));
                }
            }
            section = Some((param.to_string(), line_no, false));
            continue;
        }

        let Some(eq) = line.find('=') else {
            return Err(ConfigError::at(line_no, format!("expected 'key = value', got '{line}'")));
        };
        let key = line[..eq].trim();
        let value = line[eq + 1..].trim();
        if key.is_empty() {
            return Err(ConfigError::at(line_no, "empty key"));
        }

        match &mut section {
            Some((param, _, has_values)) => {
                if key != "values" {
                    return Err(ConfigError::at(
                        line_no,
                        format!("unknown key '{key}' inside [sweep.{param}] (only 'values')"),
                    ));
                }
                if *has_values {
                    return Err(ConfigError::at(line_no, format!("duplicate 'values' in [sweep.{param}]")));
                }
                let mut vals = Vec::new();
                for part in value.split(',') {
                    let part = part.trim();
                    if part.is_empty() {
                        return Err(ConfigError::at(line_no, "empty value in list"));
                    }
                    vals.push(parse_finite(part, line_no)?);
                }
                if vals.is_empty() {
                    return Err(ConfigError::at(line_no, "empty values list"));
                }
                axes.push((param.clone(), vals));
                *has_values = true;
            }
            None => {
                if !KNOWN_KEYS.contains(&key) {
                    return Err(ConfigError::at(line_no, format!("unknown key '{key}'")));
                }
                if pairs.contains_key(key) {
                    return Err(ConfigError::at(
                        line_no,
                        format!("duplicate key '{key}' (first given on line {})", pair_lines[key]),
                    ));
                }
                pairs.insert(key.to_string(), value.to_string());
                pair_lines.insert(key.to_string(), line_no);
            }
        }
    }
    if let Some((prev, prev_line, has_values)) = section {
        if !has_values {
            return Err(ConfigError::at(prev_line, format!("sweep section '{prev}' has no 'values' list")));
        }
    }

    if axes.is_empty() {
        let base = resolve_scenario(&pairs, &pair_lines, &[])?;
        return Ok(ConfigFile::Scenario(Box::new(base)));
    }
    for (axis, _) in &axes {
        if pairs.contains_key(axis) {
            return Err(ConfigError::plain(format!(
                "'{axis}' is both a fixed key and a sweep axis"
            )));
        }
    }
    // the base scenario is the first sweep point; it carries the label,
    // echo, reductions, and the size cap
    let first_point: Vec<(&str, f64)> =
        axes.iter().map(|(name, values)| (name.as_str(), values[0])).collect();
    let base = resolve_scenario(&pairs, &pair_lines, &first_point)?;
    Ok(ConfigFile::Sweep(Box::new(SweepConfig { base, axes, raw: pairs })))
}

fn parse_finite(s: &str, line: usize) -> Result<f64, ConfigError> {
    let v: f64 = s
        .parse()
        .map_err(|_| ConfigError::at(line, format!("cannot parse '{s}' as a number")))?;
    if !v.is_finite() {
        return Err(ConfigError::at(line, format!("'{s}' is not finite")));
    }
    Ok(v)
}

struct Reader<'a> {
    pairs: &'a BTreeMap<String, String>,
    lines: &'a BTreeMap<String, usize>,
    overrides: &'a [(&'a str, f64)],
}

impl Reader<'_> {
    fn line(&self, key: &str) -> usize {
        self.lines.get(key).copied().unwrap_or(0)
    }

    fn err(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError { line: self.lines.get(key).copied(), message: message.into() }
    }

    fn float(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        if let Some(&(_, v)) = self.overrides.iter().find(|(k, _)| *k == key) {
            return Ok(Some(v));
        }
        match self.pairs.get(key) {
            Some(raw) => parse_finite(raw, self.line(key)).map(Some),
            None => Ok(None),
        }
    }

    fn float_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.float(key)?.unwrap_or(default))
    }

    fn integer(&self, key: &str, range: std::ops::RangeInclusive<usize>) -> Result<Option<usize>, ConfigError> {
        let Some(raw) = self.pairs.get(key) else { return Ok(None) };
        let v: usize = raw
            .parse()
            .map_err(|_| ConfigError::at(self.line(key), format!("cannot parse '{raw}' as an integer")))?;
        if !range.contains(&v) {
            return Err(ConfigError::at(
                self.line(key),
                format!("{key} = {v} outside the accepted range {}..={}", range.start(), range.end()),
            ));
        }
        Ok(Some(v))
    }

    fn boolean(&self, key: &str) -> Result<Option<bool>, ConfigError> {
        let Some(raw) = self.pairs.get(key) else { return Ok(None) };
        match raw.trim() {
            "true" => Ok(Some(true)),
            "false" => Ok(Some(false)),
            other => Err(ConfigError::at(
                self.line(key),
                format!("cannot parse '{other}' as true/false"),
            )),
        }
    }

    fn string(&self, key: &str) -> Option<&str> {
        self.pairs.get(key).map(|s| s.as_str())
    }
}

/// Resolves raw pairs (plus numeric overrides from sweep axes) into a
/// [`ScenarioConfig`], filling documented defaults.
pub fn resolve_scenario(
    pairs: &BTreeMap<String, String>,
    lines: &BTreeMap<String, usize>,
    overrides: &[(&str, f64)],
) -> Result<ScenarioConfig, ConfigError> {
    let r = Reader { pairs, lines, overrides };

    // surface unparsable values (with their line numbers) before anything
    // else, including the required-key check
    const FLOAT_KEYS: &[&str] = &[
        "g_hz",
        "delta_hz",
        "delta_over_g",
        "nu_hz",
        "nu_over_delta",
        "omega_c_hz",
        "eta",
        "kappa_hz",
        "gamma_hz",
        "t_final_s",
        "rel_tol",
        "abs_tol",
        "max_step_s",
        "regime_g_over_delta_max",
        "regime_delta_over_nu_max",
        "regime_resonance_margin_min",
    ];
    for key in FLOAT_KEYS {
        let _ = r.float(key)?;
    }

    // η is the one parameter without a canonical default (the model uses
    // very different values for the Kerr point and the π gate), so it must
    // be given; every other key has a documented default.
    let mut missing = Vec::new();
    if r.float("eta")?.is_none() {
        missing.push("eta");
    }
    if !missing.is_empty() {
        return Err(ConfigError::plain(format!("missing required keys: {}", missing.join(", "))));
    }
    let label = r.string("label").unwrap_or("scenario").to_string();
    if label.is_empty() || !label.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
    {
        return Err(ConfigError::at(
            r.line("label"),
            "label must be non-empty and use only [A-Za-z0-9_-] (it names output files)",
        ));
    }

    let level: HamiltonianLevel = match r.string("level") {
        Some(s) => s
            .parse()
            .map_err(|e| ConfigError::at(r.line("level"), format!("{e}")))?,
        None => HamiltonianLevel::Full,
    };

    let g_hz = r.float_or("g_hz", 1.51e6)?;
    let has = |k: &str| r.pairs.contains_key(k) || overrides.iter().any(|(ok, _)| *ok == k);
    if has("delta_hz") && has("delta_over_g") {
        return Err(ConfigError::plain("give either delta_hz or delta_over_g, not both"));
    }
    if has("nu_hz") && has("nu_over_delta") {
        return Err(ConfigError::plain("give either nu_hz or nu_over_delta, not both"));
    }
    let g = TAU * g_hz;
    let delta = match r.float("delta_hz")? {
        Some(hz) => TAU * hz,
        None => r.float_or("delta_over_g", 10.0)? * g,
    };
    let nu = match r.float("nu_hz")? {
        Some(hz) => TAU * hz,
        None => r.float_or("nu_over_delta", 20.0)? * delta.abs(),
    };
    let omega_c_hz = r.float_or("omega_c_hz", 1.0e8)?;
    let omega_c = TAU * omega_c_hz;
    let eta = r.float("eta")?.expect("presence checked above");
    let params = PhysicalParams::new(nu, omega_c, delta, g, eta)
        .map_err(|e| ConfigError::plain(format!("{e}")))?;

    let kappa_hz = r.float("kappa_hz")?;
    let gamma_hz = r.float("gamma_hz")?;
    let dissipation = if kappa_hz.is_some() || gamma_hz.is_some() {
        Some(
            DissipationParams::new(TAU * kappa_hz.unwrap_or(0.0), TAU * gamma_hz.unwrap_or(0.0))
                .map_err(|e| ConfigError::plain(format!("{e}")))?,
        )
    } else {
        None
    };

    let phonon_cutoff = r.integer("phonon_cutoff", 1..=64)?.unwrap_or(6);
    let photon_cutoff = r.integer("photon_cutoff", 1..=64)?.unwrap_or(4);

    let t_final_s = r.float("t_final_s")?;
    if let Some(t) = t_final_s {
        if !(t > 0.0) {
            return Err(ConfigError::at(r.line("t_final_s"), "t_final_s must be positive"));
        }
    }
    let sample_count = r.integer("sample_count", 2..=1_000_000)?.unwrap_or(400);
    let rel_tol = r.float("rel_tol")?;
    let abs_tol = r.float("abs_tol")?;
    for (key, v) in [("rel_tol", rel_tol), ("abs_tol", abs_tol)] {
        if let Some(v) = v {
            if !(v > 0.0) {
                return Err(ConfigError::at(r.line(key), format!("{key} must be positive")));
            }
        }
    }
    let max_step_s = r.float("max_step_s")?;
    if let Some(v) = max_step_s {
        if !(v > 0.0) {
            return Err(ConfigError::at(r.line("max_step_s"), "max_step_s must be positive"));
        }
    }

    let initial_text = r.string("initial").unwrap_or("|g,0,0>");
    let initial = parse_initial_state(initial_text).map_err(|msg| r.err("initial", msg))?;
    for &(_, _, m, n) in &initial {
        if m >= phonon_cutoff || n >= photon_cutoff {
            return Err(r.err(
                "initial",
                format!("initial ket component (m={m}, n={n}) exceeds cutoffs ({phonon_cutoff}, {photon_cutoff})"),
            ));
        }
    }

    let amplitude_columns = r.boolean("amplitude_columns")?.unwrap_or(false);
    let quad_points = r.integer("quad_points", 2..=100_000)?.unwrap_or(64);
    let pt_samples = r.integer("pt_samples", 2..=1_000_000)?.unwrap_or(1000);

    let triples_text = r.string("transition_triples").unwrap_or("0,0,1; 0,2,1; 1,1,1");
    let transition_triples = parse_triples(triples_text)
        .map_err(|msg| r.err("transition_triples", msg))?;

    let thresholds = RegimeThresholds {
        g_over_delta_max: r.float_or("regime_g_over_delta_max", 0.1)?,
        delta_over_nu_max: r.float_or("regime_delta_over_nu_max", 0.1)?,
        resonance_margin_min: r.float_or("regime_resonance_margin_min", 0.1)?,
    };
    let max_sweep_points = r.integer("max_sweep_points", 1..=10_000_000)?.unwrap_or(10_000);

    let reductions: Vec<String> = r
        .string("reduction")
        .unwrap_or("conditional_phase_rad,process_fidelity")
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if reductions.is_empty() {
        return Err(ConfigError::at(r.line("reduction"), "empty reduction list"));
    }
    for name in &reductions {
        if !crate::scenario::REDUCTION_NAMES.contains(&name.as_str()) {
            return Err(ConfigError::at(
                r.line("reduction"),
                format!(
                    "unknown reduction '{name}' (available: {})",
                    crate::scenario::REDUCTION_NAMES.join(", ")
                ),
            ));
        }
    }

    // Echo the fully resolved configuration in the key forms that were used
    // to resolve it (shortest round-trip float formatting), so a config
    // rebuilt from the echo resolves to bit-identical parameters.
    let mut echo: Vec<(String, String)> = vec![
        ("label".into(), label.clone()),
        ("level".into(), level.as_str().into()),
        ("g_hz".into(), format!("{g_hz}")),
    ];
    match r.float("delta_hz")? {
        Some(hz) => echo.push(("delta_hz".into(), format!("{hz}"))),
        None => echo.push((
            "delta_over_g".into(),
            format!("{}", r.float_or("delta_over_g", 10.0)?),
        )),
    }
    match r.float("nu_hz")? {
        Some(hz) => echo.push(("nu_hz".into(), format!("{hz}"))),
        None => echo.push((
            "nu_over_delta".into(),
            format!("{}", r.float_or("nu_over_delta", 20.0)?),
        )),
    }
    echo.push(("omega_c_hz".into(), format!("{omega_c_hz}")));
    echo.push(("eta".into(), format!("{eta}")));
    echo.push(("phonon_cutoff".into(), phonon_cutoff.to_string()));
    echo.push(("photon_cutoff".into(), photon_cutoff.to_string()));
    if let Some(hz) = kappa_hz {
        echo.push(("kappa_hz".into(), format!("{hz}")));
    }
    if let Some(hz) = gamma_hz {
        echo.push(("gamma_hz".into(), format!("{hz}")));
    }
    if let Some(t) = t_final_s {
        echo.push(("t_final_s".into(), format!("{t}")));
    }
    echo.push(("sample_count".into(), sample_count.to_string()));
    if let Some(v) = rel_tol {
        echo.push(("rel_tol".into(), format!("{v}")));
    }
    if let Some(v) = abs_tol {
        echo.push(("abs_tol".into(), format!("{v}")));
    }
    if let Some(v) = max_step_s {
        echo.push(("max_step_s".into(), format!("{v}")));
    }
    echo.push(("initial".into(), initial_text.to_string()));
    echo.push(("amplitude_columns".into(), amplitude_columns.to_string()));
    echo.push(("quad_points".into(), quad_points.to_string()));
    echo.push(("pt_samples".into(), pt_samples.to_string()));
    echo.push(("transition_triples".into(), triples_text.to_string()));
    echo.push((
        "regime_g_over_delta_max".into(),
        format!("{}", thresholds.g_over_delta_max),
    ));
    echo.push((
        "regime_delta_over_nu_max".into(),
        format!("{}", thresholds.delta_over_nu_max),
    ));
    echo.push((
        "regime_resonance_margin_min".into(),
        format!("{}", thresholds.resonance_margin_min),
    ));
    echo.push(("reduction".into(), reductions.join(",")));

    Ok(ScenarioConfig {
        label,
        level,
        params,
        dissipation,
        phonon_cutoff,
        photon_cutoff,
        t_final_s,
        sample_count,
        rel_tol,
        abs_tol,
        max_step_s,
        initial,
        amplitude_columns,
        quad_points,
        pt_samples,
        transition_triples,
        thresholds,
        max_sweep_points,
        reductions,
        echo,
    })
}

/// Parses an initial-state expression: a basis ket `|g,m,n>` or a
/// superposition `0.7071|g,0,0> + 0.7071|g,1,1>` with real coefficients
/// (amplitudes are normalized before use).
pub fn parse_initial_state(text: &str) -> Result<Vec<(f64, IonLevel, usize, usize)>, String> {
    let text = text.trim();
    if text.is_empty() {
        return Err("empty initial-state expression".into());
    }
    let mut terms = Vec::new();
    for part in text.split('+') {
        let part = part.trim();
        if part.is_empty() {
            return Err("empty term in superposition".into());
        }
        let Some(bar) = part.find('|') else {
            return Err(format!("term '{part}' has no ket (expected like |g,0,1>)"));
        };
        let coeff_str = part[..bar].trim();
        let coeff: f64 = if coeff_str.is_empty() {
            1.0
        } else {
            coeff_str
                .parse()
                .map_err(|_| format!("cannot parse coefficient '{coeff_str}'"))?
        };
        if !coeff.is_finite() {
            return Err(format!("coefficient '{coeff_str}' is not finite"));
        }
        let rest = &part[bar + 1..];
        let Some(close) = rest.find('>') else {
            return Err(format!("unterminated ket in '{part}'"));
        };
        if !rest[close + 1..].trim().is_empty() {
            return Err(format!("trailing text after ket in '{part}'"));
        }
        let fields: Vec<&str> = rest[..close].split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(format!("ket '|{}>' needs exactly ion,phonon,photon", &rest[..close]));
        }
        let ion = match fields[0] {
            "g" => IonLevel::Ground,
            "e" => IonLevel::Excited,
            other => return Err(format!("ion level must be g or e, got '{other}'")),
        };
        let m: usize = fields[1]
            .parse()
            .map_err(|_| format!("cannot parse phonon number '{}'", fields[1]))?;
        let n: usize = fields[2]
            .parse()
            .map_err(|_| format!("cannot parse photon number '{}'", fields[2]))?;
        if m > 1_000 || n > 1_000 {
            return Err(format!("ket indices ({m}, {n}) are unreasonably large"));
        }
        terms.push((coeff, ion, m, n));
    }
    if terms.iter().all(|&(c, _, _, _)| c == 0.0) {
        return Err("all coefficients are zero".into());
    }
    Ok(terms)
}

fn parse_triples(text: &str) -> Result<Vec<(usize, usize, usize)>, String> {
    let mut out = Vec::new();
    for chunk in text.split(';') {
        let chunk = chunk.trim();
        if chunk.is_empty() {
            continue;
        }
        let fields: Vec<&str> = chunk.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(format!("triple '{chunk}' needs exactly m,m',n"));
        }
        let parse = |s: &str| -> Result<usize, String> {
            let v: usize = s.parse().map_err(|_| format!("cannot parse '{s}' as an integer"))?;
            if v > 1_000 {
                return Err(format!("index {v} is unreasonably large"));
            }
            Ok(v)
        };
        out.push((parse(fields[0])?, parse(fields[1])?, parse(fields[2])?));
    }
    if out.is_empty() {
        return Err("empty transition_triples list".into());
    }
    Ok(out)
}
