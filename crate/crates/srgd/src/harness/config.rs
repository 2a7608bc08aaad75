//! Flat INI-style experiment configuration.
//!
//! The format is deliberately tiny: `[section]` headers, `key = value`
//! lines, `#`/`;` comments.  Unknown sections and keys are rejected so
//! typos fail loudly.  [`ExperimentConfig::to_ini`] emits the canonical
//! form, which the runner drops next to its outputs for exact re-runs.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::engine::DiagLevel;
use crate::format::FloatFormat;
use crate::harness::HarnessError;
use crate::problems::SettingId;
use crate::rounding::RoundingMode;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    RoundDemo,
    Quadratic,
    Mlr,
    Nn,
    Bounds,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentKind::RoundDemo => "round-demo",
            ExperimentKind::Quadratic => "quadratic",
            ExperimentKind::Mlr => "mlr",
            ExperimentKind::Nn => "nn",
            ExperimentKind::Bounds => "bounds",
        })
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "round-demo" => Ok(ExperimentKind::RoundDemo),
            "quadratic" => Ok(ExperimentKind::Quadratic),
            "mlr" => Ok(ExperimentKind::Mlr),
            "nn" => Ok(ExperimentKind::Nn),
            "bounds" => Ok(ExperimentKind::Bounds),
            other => Err(format!("unknown experiment kind '{other}'")),
        }
    }
}

/// Inputs for bound evaluation over a previously written aggregate CSV.
/// All optional; the evaluator derives what it can from the config and
/// complains about genuinely missing parameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BoundsParams {
    pub source: Option<PathBuf>,
    pub l: Option<f64>,
    pub dist0_sq: Option<f64>,
    pub chi: Option<f64>,
    pub a: Option<f64>,
    pub eps: Option<f64>,
}

/// Everything needed to reproduce one experiment ensemble.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub format: FloatFormat,
    pub mode_grad: RoundingMode,
    pub mode_mul: RoundingMode,
    pub mode_sub: RoundingMode,
    /// Stepsize; `None` uses the problem's recommended value.
    pub t: Option<f64>,
    pub iters: u64,
    pub reps: u32,
    pub seed: u64,
    /// Shrinks the problem uniformly: quadratic dimension and training
    /// subset size are multiplied by this factor.
    pub scale: f64,
    pub diag: DiagLevel,
    pub out: Option<PathBuf>,
    pub label: String,
    pub setting: SettingId,
    pub dim: usize,
    pub data_dir: Option<PathBuf>,
    pub synthetic: bool,
    pub subset_train: Option<usize>,
    pub bounds: BoundsParams,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        let (format, diag) = match kind {
            ExperimentKind::Quadratic => (FloatFormat::bfloat16(), DiagLevel::Standard),
            ExperimentKind::RoundDemo => (FloatFormat::binary8(), DiagLevel::Standard),
            ExperimentKind::Bounds => (FloatFormat::binary32(), DiagLevel::Standard),
            _ => (FloatFormat::binary8(), DiagLevel::Minimal),
        };
        ExperimentConfig {
            kind,
            format,
            mode_grad: RoundingMode::Sr,
            mode_mul: RoundingMode::Sr,
            mode_sub: RoundingMode::Sr,
            t: None,
            iters: 100,
            reps: 20,
            seed: 1,
            scale: 1.0,
            diag,
            out: None,
            label: kind.to_string(),
            setting: SettingId::One,
            dim: 1000,
            data_dir: None,
            synthetic: true,
            subset_train: None,
            bounds: BoundsParams::default(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.reps < 1 {
            return Err(HarnessError::Config("reps must be at least 1".into()));
        }
        if !(self.scale > 0.0 && self.scale <= 1.0) {
            return Err(HarnessError::Config(format!(
                "scale {} outside (0, 1]",
                self.scale
            )));
        }
        if let Some(t) = self.t {
            if !(t.is_finite() && t > 0.0) {
                return Err(HarnessError::Config(format!("stepsize {t} must be positive")));
            }
        }
        for mode in [self.mode_grad, self.mode_mul, self.mode_sub] {
            mode.validate()
                .map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        if self.kind == ExperimentKind::Quadratic && self.dim < 2 {
            return Err(HarnessError::Config(format!("dim {} below 2", self.dim)));
        }
        Ok(())
    }

    /// Canonical INI form; parsing it back yields an identical config.
    pub fn to_ini(&self) -> String {
        let mut s = String::new();
        s.push_str("[experiment]\n");
        s.push_str(&format!("kind = {}\n", self.kind));
        s.push_str(&format!("label = {}\n", self.label));
        s.push_str(&format!("format = {}\n", format_name(&self.format)));
        s.push_str(&format!("mode_grad = {}\n", self.mode_grad));
        s.push_str(&format!("mode_mul = {}\n", self.mode_mul));
        s.push_str(&format!("mode_sub = {}\n", self.mode_sub));
        if let Some(t) = self.t {
            s.push_str(&format!("t = {t}\n"));
        }
        s.push_str(&format!("iters = {}\n", self.iters));
        s.push_str(&format!("reps = {}\n", self.reps));
        s.push_str(&format!("seed = {}\n", self.seed));
        s.push_str(&format!("scale = {}\n", self.scale));
        s.push_str(&format!("diag = {}\n", diag_name(self.diag)));
        if let Some(out) = &self.out {
            s.push_str(&format!("out = {}\n", out.display()));
        }
        if self.kind == ExperimentKind::Quadratic {
            s.push_str("\n[quadratic]\n");
            s.push_str(&format!(
                "setting = {}\n",
                match self.setting {
                    SettingId::One => 1,
                    SettingId::Two => 2,
                }
            ));
            s.push_str(&format!("dim = {}\n", self.dim));
        }
        if matches!(self.kind, ExperimentKind::Mlr | ExperimentKind::Nn) {
            s.push_str("\n[data]\n");
            if let Some(dir) = &self.data_dir {
                s.push_str(&format!("dir = {}\n", dir.display()));
            }
            s.push_str(&format!("synthetic = {}\n", self.synthetic));
            if let Some(n) = self.subset_train {
                s.push_str(&format!("subset_train = {n}\n"));
            }
        }
        if self.kind == ExperimentKind::Bounds {
            s.push_str("\n[bounds]\n");
            if let Some(src) = &self.bounds.source {
                s.push_str(&format!("source = {}\n", src.display()));
            }
            for (key, value) in [
                ("l", self.bounds.l),
                ("dist0_sq", self.bounds.dist0_sq),
                ("chi", self.bounds.chi),
                ("a", self.bounds.a),
                ("eps", self.bounds.eps),
            ] {
                if let Some(v) = value {
                    s.push_str(&format!("{key} = {v}\n"));
                }
            }
        }
        s
    }
}

/// Preset name where one exists, else a `(s, e_min, e_max, subnormals)` tuple.
pub fn format_name(fmt: &FloatFormat) -> String {
    match fmt.name() {
        Some(n) => n.to_string(),
        None => format!(
            "({}, {}, {}, {})",
            fmt.significand_bits(),
            fmt.e_min(),
            fmt.e_max(),
            fmt.supports_subnormals()
        ),
    }
}

/// Accepts preset names and `(s, e_min, e_max, subnormals)` tuples.
pub fn parse_format(value: &str) -> Result<FloatFormat, String> {
    if let Some(fmt) = FloatFormat::by_name(value) {
        return Ok(fmt);
    }
    let inner = value.trim().trim_start_matches('(').trim_end_matches(')');
    let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(format!(
            "unknown format '{value}'; use a preset name or (s, e_min, e_max, subnormals)"
        ));
    }
    let num = |i: usize, what: &str| -> Result<i64, String> {
        parts[i]
            .parse()
            .map_err(|_| format!("bad {what} '{}'", parts[i]))
    };
    let s = num(0, "significand bits")? as u32;
    let e_min = num(1, "e_min")? as i32;
    let e_max = num(2, "e_max")? as i32;
    let subnormals: bool = parts[3]
        .parse()
        .map_err(|_| format!("bad subnormal flag '{}'", parts[3]))?;
    FloatFormat::new(s, e_min, e_max, subnormals).map_err(|e| e.to_string())
}

pub fn diag_name(d: DiagLevel) -> &'static str {
    match d {
        DiagLevel::Minimal => "minimal",
        DiagLevel::Standard => "standard",
        DiagLevel::Debug => "debug",
    }
}

pub fn parse_diag(s: &str) -> Result<DiagLevel, String> {
    match s {
        "minimal" => Ok(DiagLevel::Minimal),
        "standard" => Ok(DiagLevel::Standard),
        "debug" => Ok(DiagLevel::Debug),
        other => Err(format!("unknown diag level '{other}'")),
    }
}

fn config_err(line: usize, msg: impl fmt::Display) -> HarnessError {
    HarnessError::Config(format!("line {line}: {msg}"))
}

/// Parses a config in the INI form written by [`ExperimentConfig::to_ini`].
pub fn parse_config(text: &str) -> Result<ExperimentConfig, HarnessError> {
    let mut entries: Vec<(usize, String, String, String)> = Vec::new();
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = match raw.find(['#', ';']) {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| config_err(line_no, "unterminated section header"))?
                .trim();
            if !matches!(name, "experiment" | "quadratic" | "data" | "bounds") {
                return Err(config_err(line_no, format!("unknown section '{name}'")));
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| config_err(line_no, "expected 'key = value'"))?;
        if section.is_empty() {
            return Err(config_err(line_no, "key outside any section"));
        }
        entries.push((
            line_no,
            section.clone(),
            key.trim().to_string(),
            value.trim().to_string(),
        ));
    }

    let kind = entries
        .iter()
        .find(|(_, s, k, _)| s == "experiment" && k == "kind")
        .ok_or_else(|| HarnessError::Config("missing experiment.kind".into()))?;
    let kind: ExperimentKind = kind.3.parse().map_err(|e| config_err(kind.0, e))?;
    let mut cfg = ExperimentConfig::new(kind);

    for (line, section, key, value) in &entries {
        let line = *line;
        match (section.as_str(), key.as_str()) {
            ("experiment", "kind") => {}
            ("experiment", "label") => cfg.label = value.clone(),
            ("experiment", "format") => {
                cfg.format = parse_format(value).map_err(|e| config_err(line, e))?;
            }
            ("experiment", "mode_grad") => {
                cfg.mode_grad = value.parse().map_err(|e| config_err(line, e))?;
            }
            ("experiment", "mode_mul") => {
                cfg.mode_mul = value.parse().map_err(|e| config_err(line, e))?;
            }
            ("experiment", "mode_sub") => {
                cfg.mode_sub = value.parse().map_err(|e| config_err(line, e))?;
            }
            ("experiment", "t") => cfg.t = Some(parse_num(value, line)?),
            ("experiment", "iters") => cfg.iters = parse_num(value, line)?,
            ("experiment", "reps") => cfg.reps = parse_num(value, line)?,
            ("experiment", "seed") => cfg.seed = parse_num(value, line)?,
            ("experiment", "scale") => cfg.scale = parse_num(value, line)?,
            ("experiment", "diag") => cfg.diag = parse_diag(value).map_err(|e| config_err(line, e))?,
            ("experiment", "out") => cfg.out = Some(PathBuf::from(value)),
            ("quadratic", "setting") => {
                cfg.setting = match value.as_str() {
                    "1" => SettingId::One,
                    "2" => SettingId::Two,
                    other => return Err(config_err(line, format!("unknown setting '{other}'"))),
                };
            }
            ("quadratic", "dim") => cfg.dim = parse_num(value, line)?,
            ("data", "dir") => cfg.data_dir = Some(PathBuf::from(value)),
            ("data", "synthetic") => {
                cfg.synthetic = value
                    .parse()
                    .map_err(|_| config_err(line, format!("expected true/false, got '{value}'")))?;
            }
            ("data", "subset_train") => cfg.subset_train = Some(parse_num(value, line)?),
            ("bounds", "source") => cfg.bounds.source = Some(PathBuf::from(value)),
            ("bounds", "l") => cfg.bounds.l = Some(parse_num(value, line)?),
            ("bounds", "dist0_sq") => cfg.bounds.dist0_sq = Some(parse_num(value, line)?),
            ("bounds", "chi") => cfg.bounds.chi = Some(parse_num(value, line)?),
            ("bounds", "a") => cfg.bounds.a = Some(parse_num(value, line)?),
            ("bounds", "eps") => cfg.bounds.eps = Some(parse_num(value, line)?),
            (s, k) => return Err(config_err(line, format!("unknown key '{s}.{k}'"))),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_num<T: FromStr>(value: &str, line: usize) -> Result<T, HarnessError>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| config_err(line, format!("bad number '{value}': {e}")))
}
