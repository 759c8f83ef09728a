//! The single JSON pipeline configuration and `--set` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use splat2twin::clean::StageMask;
use splat2twin::mesh::MeshFormat;
use splat2twin::metrics::{DEFAULT_CHAMFER_RESOLUTION, DEFAULT_HIGH_CONFIDENCE, DEFAULT_MATCH_THRESHOLD};
use splat2twin::{CleanSettings, VoteSettings};

use crate::error::CliError;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub splats: PathBuf,
    pub cameras: PathBuf,
    pub masks_dir: PathBuf,
    pub out_dir: PathBuf,
}

/// `"auto"` or a radius in metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Alpha {
    Auto,
    Fixed(f64),
}

impl Serialize for Alpha {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Alpha::Auto => s.serialize_str("auto"),
            Alpha::Fixed(a) => s.serialize_f64(*a),
        }
    }
}

impl<'de> Deserialize<'de> for Alpha {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match Value::deserialize(d)? {
            Value::String(s) if s == "auto" => Ok(Alpha::Auto),
            Value::Number(n) => n
                .as_f64()
                .map(Alpha::Fixed)
                .ok_or_else(|| serde::de::Error::custom("alpha must be a number")),
            other => Err(serde::de::Error::custom(format!(
                "alpha must be \"auto\" or metres, got {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshingConfig {
    pub alpha: Alpha,
    /// Multiplier on the median nearest-neighbour distance for `"auto"`.
    pub alpha_factor: f64,
    /// Decimation target; `None` keeps the alpha-shape mesh as is.
    pub target_faces: Option<usize>,
    pub format: String,
}

impl Default for MeshingConfig {
    fn default() -> Self {
        Self {
            alpha: Alpha::Auto,
            alpha_factor: splat2twin::mesh::DEFAULT_ALPHA_FACTOR,
            target_faces: None,
            format: "obj".into(),
        }
    }
}

impl MeshingConfig {
    pub fn mesh_format(&self) -> Result<MeshFormat, CliError> {
        self.format
            .parse()
            .map_err(|e| CliError::config(format!("meshing.format: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub enabled: bool,
    /// Directory holding `gt/<label>.ply` (a synth scene) or `<label>.ply`.
    pub gt_dir: Option<PathBuf>,
    pub high_confidence: f64,
    pub chamfer_resolution: f64,
    pub match_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            gt_dir: None,
            high_confidence: DEFAULT_HIGH_CONFIDENCE,
            chamfer_resolution: DEFAULT_CHAMFER_RESOLUTION,
            match_threshold: DEFAULT_MATCH_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub paths: Paths,
    #[serde(default)]
    pub vote: VoteSettings,
    #[serde(default)]
    pub clean: CleanSettings,
    #[serde(default = "full_stages")]
    pub stages: String,
    #[serde(default)]
    pub meshing: MeshingConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn schema_version() -> u32 {
    CONFIG_SCHEMA_VERSION
}

fn full_stages() -> String {
    "full".into()
}

impl PipelineConfig {
    pub fn new(paths: Paths) -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            paths,
            vote: VoteSettings::default(),
            clean: CleanSettings::default(),
            stages: full_stages(),
            meshing: MeshingConfig::default(),
            eval: EvalConfig::default(),
        }
    }

    /// Reads a config file, applies overrides and resolves relative paths
    /// against the file's directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::input(path, format!("cannot read config: {e}")))?;
        let mut value: Value =
            serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let mut cfg: PipelineConfig =
            serde_json::from_value(value).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve(base);
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.splats);
        fix(&mut self.paths.cameras);
        fix(&mut self.paths.masks_dir);
        fix(&mut self.paths.out_dir);
        if let Some(g) = self.eval.gt_dir.as_mut() {
            fix(g);
        }
    }

    pub fn stage_mask(&self) -> Result<StageMask, CliError> {
        self.stages
            .parse()
            .map_err(|e| CliError::config(format!("stages: {e}")))
    }

    /// Parameter checks; no filesystem access.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(CliError::config(format!(
                "unsupported config schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.vote.validate().map_err(|e| CliError::config(e.to_string()))?;
        self.clean.validate().map_err(|e| CliError::config(e.to_string()))?;
        self.stage_mask()?;
        self.meshing.mesh_format()?;
        match self.meshing.alpha {
            Alpha::Fixed(a) if !(a > 0.0 && a.is_finite()) => {
                return Err(CliError::config(format!("meshing.alpha must be > 0, got {a}")));
            }
            _ => {}
        }
        if !(self.meshing.alpha_factor > 0.0) {
            return Err(CliError::config("meshing.alpha_factor must be > 0"));
        }
        if let Some(t) = self.meshing.target_faces {
            if t < 4 {
                return Err(CliError::config(format!("meshing.target_faces must be >= 4, got {t}")));
            }
        }
        let e = &self.eval;
        if !(e.high_confidence > 0.0 && e.high_confidence <= 1.0) {
            return Err(CliError::config("eval.high_confidence must lie in (0, 1]"));
        }
        if !(e.chamfer_resolution >= 0.0) || !(e.match_threshold > 0.0) {
            return Err(CliError::config(
                "eval.chamfer_resolution must be >= 0 and eval.match_threshold > 0",
            ));
        }
        Ok(())
    }

    /// Inputs must exist before any work starts.
    pub fn check_inputs(&self) -> Result<(), CliError> {
        let p = &self.paths;
        for f in [&p.splats, &p.cameras] {
            if !f.is_file() {
                return Err(CliError::input(f, "file not found"));
            }
        }
        if !p.masks_dir.is_dir() {
            return Err(CliError::input(&p.masks_dir, "masks directory not found"));
        }
        if self.eval.enabled {
            match &self.eval.gt_dir {
                Some(g) if !g.is_dir() => return Err(CliError::input(g, "ground-truth directory not found")),
                _ => {}
            }
        }
        Ok(())
    }
}

/// `a.b.c=value`; the value is parsed as JSON and falls back to a string.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::config(format!("override '{spec}' is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::config(format!("override key '{key}' is malformed")));
    }
    for part in &parts[..parts.len() - 1] {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| CliError::config(format!("override '{key}': '{part}' is not inside an object")))?;
        cur = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = cur
        .as_object_mut()
        .ok_or_else(|| CliError::config(format!("override '{key}' does not address an object field")))?;
    obj.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
