use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::information::MAX_TRUNCATION;
use crate::polynomial::MAX_ORDER;
use crate::psf::{make_gaussian_psf, make_signum_masked_psf, Psf};
use crate::scene::{PointSource, SourceScene};

/// Version of the spec file format.
pub const SCHEMA_VERSION: u32 = 1;

/// Measurement names accepted in `measurements`.
pub const MEASUREMENTS: [&str; 5] = ["direct", "hermite-gauss", "pad", "sliver", "splice"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    FisherSweep,
    Mse,
    Moments,
    Thermal,
    Reconstruct,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentKind::FisherSweep => "fisher-sweep",
            ExperimentKind::Mse => "mse",
            ExperimentKind::Moments => "moments",
            ExperimentKind::Thermal => "thermal",
            ExperimentKind::Reconstruct => "reconstruct",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsfChoice {
    Gaussian,
    SignumMaskedGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lower: f64,
    pub upper: f64,
    pub samples: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        let g = Grid::default();
        GridSpec {
            lower: g.lower(),
            upper: g.upper(),
            samples: g.samples(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsfSpec {
    #[serde(default = "default_psf_kind")]
    pub kind: PsfChoice,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default)]
    pub grid: GridSpec,
}

fn default_psf_kind() -> PsfChoice {
    PsfChoice::Gaussian
}

fn default_sigma() -> f64 {
    0.5
}

impl Default for PsfSpec {
    fn default() -> Self {
        PsfSpec {
            kind: default_psf_kind(),
            sigma: default_sigma(),
            grid: GridSpec::default(),
        }
    }
}

impl PsfSpec {
    pub fn build(&self) -> Result<Psf> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid(
                "psf.sigma",
                format!("must be positive, got {}", self.sigma),
            ));
        }
        let grid = Grid::new(self.grid.lower, self.grid.upper, self.grid.samples)?;
        match self.kind {
            PsfChoice::Gaussian => make_gaussian_psf(self.sigma, grid),
            PsfChoice::SignumMaskedGaussian => make_signum_masked_psf(self.sigma, grid),
        }
    }
}

/// Object used by the reconstruction experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SceneSpec {
    TwoPoint { separation: f64 },
    FivePoint { delta: f64 },
    Uniform { half_width: f64 },
    Points { sources: Vec<PointSource> },
    File { path: PathBuf },
}

impl SceneSpec {
    pub fn build(&self) -> Result<SourceScene> {
        match self {
            SceneSpec::TwoPoint { separation } => crate::scene::two_point_scene(*separation),
            SceneSpec::FivePoint { delta } => {
                let (family, base) = crate::information::ParamFamily::five_point_moments(*delta)?;
                family.scene(&base)
            }
            SceneSpec::Uniform { half_width } => SourceScene::uniform(*half_width, 401),
            SceneSpec::Points { sources } => SourceScene::points(sources.clone()),
            SceneSpec::File { path } => SourceScene::from_csv(path),
        }
    }
}

fn default_measurements() -> Vec<String> {
    vec!["direct".into(), "hermite-gauss".into(), "sliver".into()]
}

fn default_trials() -> usize {
    1000
}

fn default_modes() -> usize {
    12
}

fn default_truncation() -> usize {
    crate::information::DEFAULT_TRUNCATION
}

fn default_max_order() -> usize {
    8
}

/// A scripted experiment, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub schema: u32,
    pub experiment: ExperimentKind,
    /// Base name of the output files; defaults to the experiment kind.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub psf: PsfSpec,
    #[serde(default)]
    pub scene: Option<SceneSpec>,
    #[serde(default = "default_measurements")]
    pub measurements: Vec<String>,
    /// Separations.
    #[serde(default)]
    pub theta: Vec<f64>,
    /// Object half-widths for moment studies.
    #[serde(default)]
    pub delta: Vec<f64>,
    /// Mean photon numbers. For `moments`, either one value or one per order.
    #[serde(default)]
    pub photons: Vec<f64>,
    #[serde(default)]
    pub epsilon: Vec<f64>,
    /// Moment orders `μ` for `moments`.
    #[serde(default)]
    pub orders: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Number of Hermite-Gauss modes (PAD bases use orders below it).
    #[serde(default = "default_modes")]
    pub modes: usize,
    #[serde(default = "default_truncation")]
    pub truncation: usize,
    /// Search interval of maximum-likelihood separation estimates.
    #[serde(default)]
    pub bounds: Option<[f64; 2]>,
    /// Expansion order of the reconstruction.
    #[serde(default = "default_max_order")]
    pub max_order: usize,
    /// Standard deviation of the Gaussian reference density; defaults to the
    /// object's own spread.
    #[serde(default)]
    pub reference_std: Option<f64>,
    #[serde(default)]
    pub clip: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentSpec {
    /// Spec of `kind` with every optional field at its default.
    pub fn new(kind: ExperimentKind) -> Self {
        ExperimentSpec {
            schema: SCHEMA_VERSION,
            experiment: kind,
            name: None,
            psf: PsfSpec::default(),
            scene: None,
            measurements: default_measurements(),
            theta: Vec::new(),
            delta: Vec::new(),
            photons: Vec::new(),
            epsilon: Vec::new(),
            orders: Vec::new(),
            trials: default_trials(),
            seed: 0,
            modes: default_modes(),
            truncation: default_truncation(),
            bounds: None,
            max_order: default_max_order(),
            reference_std: None,
            clip: false,
            output_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let spec: ExperimentSpec = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Base name of the output files.
    pub fn file_stem(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| self.experiment.to_string())
    }

    /// Applies `key=value` overrides. Keys are dotted paths of existing
    /// fields (`trials`, `psf.sigma`); values are JSON, or plain strings.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut value = serde_json::to_value(self)?;
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::invalid(item, "override must have the form key=value"))?;
            let key = key.trim();
            let parsed: Value = serde_json::from_str(raw.trim())
                .unwrap_or_else(|_| Value::String(raw.trim().to_string()));
            let mut slot = &mut value;
            for part in key.split('.') {
                slot = slot
                    .as_object_mut()
                    .and_then(|o| o.get_mut(part))
                    .ok_or_else(|| Error::invalid(key, "unknown key"))?;
            }
            *slot = parsed;
            // Check each override on its own so errors name the key.
            serde_json::from_value::<ExperimentSpec>(value.clone())
                .map_err(|e| Error::invalid(key, e.to_string()))?;
        }
        let spec: ExperimentSpec = serde_json::from_value(value)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Checks the fields the experiment kind uses.
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::invalid(
                "schema",
                format!(
                    "unsupported version {}, expected {SCHEMA_VERSION}",
                    self.schema
                ),
            ));
        }
        if let Some(name) = &self.name {
            if name.is_empty() || name.contains(['/', '\\']) {
                return Err(Error::invalid("name", "must be a plain file name"));
            }
        }
        if !(self.psf.sigma > 0.0) || !self.psf.sigma.is_finite() {
            return Err(Error::invalid("psf.sigma", "must be positive"));
        }
        Grid::new(
            self.psf.grid.lower,
            self.psf.grid.upper,
            self.psf.grid.samples,
        )
        .map_err(|e| Error::invalid("psf.grid", e.to_string()))?;
        if self.trials == 0 {
            return Err(Error::invalid("trials", "must be at least 1"));
        }
        if self.modes == 0 || self.modes > MAX_ORDER + 1 {
            return Err(Error::invalid(
                "modes",
                format!("must lie in 1..={}", MAX_ORDER + 1),
            ));
        }
        if self.truncation == 0 || self.truncation > MAX_TRUNCATION {
            return Err(Error::invalid(
                "truncation",
                format!("must lie in 1..={MAX_TRUNCATION}"),
            ));
        }
        for m in &self.measurements {
            if !MEASUREMENTS.contains(&m.as_str()) {
                return Err(Error::invalid(
                    "measurements",
                    format!("unknown measurement `{m}`; expected one of {MEASUREMENTS:?}"),
                ));
            }
        }
        check_positive("theta", &self.theta)?;
        check_positive("delta", &self.delta)?;
        check_positive("photons", &self.photons)?;
        check_positive("epsilon", &self.epsilon)?;
        if self.epsilon.iter().any(|e| *e > 1.0) {
            return Err(Error::invalid("epsilon", "values must lie in (0, 1]"));
        }
        if let Some([lo, hi]) = self.bounds {
            if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
                return Err(Error::invalid("bounds", "need 0 <= lo < hi"));
            }
        }
        if let Some(s) = self.reference_std {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::invalid("reference_std", "must be positive"));
            }
        }
        let require = |key: &str, empty: bool| {
            if empty {
                Err(Error::invalid(
                    key,
                    format!("`{}` needs a nonempty `{key}` grid", self.experiment),
                ))
            } else {
                Ok(())
            }
        };
        match self.experiment {
            ExperimentKind::FisherSweep => {
                require("theta", self.theta.is_empty())?;
                require("measurements", self.measurements.is_empty())?;
            }
            ExperimentKind::Mse => {
                require("theta", self.theta.is_empty())?;
                require("photons", self.photons.is_empty())?;
                require("measurements", self.measurements.is_empty())?;
            }
            ExperimentKind::Moments => {
                require("delta", self.delta.is_empty())?;
                require("orders", self.orders.is_empty())?;
                require("photons", self.photons.is_empty())?;
                if self.orders.iter().any(|&mu| mu == 0 || mu > 4) {
                    return Err(Error::invalid("orders", "moment orders must lie in 1..=4"));
                }
                if self.photons.len() != 1 && self.photons.len() != self.orders.len() {
                    return Err(Error::invalid(
                        "photons",
                        "give one value, or one per entry of `orders`",
                    ));
                }
            }
            ExperimentKind::Thermal => {
                require("theta", self.theta.is_empty())?;
                require("epsilon", self.epsilon.is_empty())?;
            }
            ExperimentKind::Reconstruct => {
                require("scene", self.scene.is_none())?;
                if self.max_order == 0 || self.max_order > MAX_ORDER {
                    return Err(Error::invalid(
                        "max_order",
                        format!("must lie in 1..={MAX_ORDER}"),
                    ));
                }
                if self.photons.len() > 1 {
                    return Err(Error::invalid("photons", "give at most one value"));
                }
            }
        }
        Ok(())
    }
}

fn check_positive(key: &str, values: &[f64]) -> Result<()> {
    if let Some(v) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::invalid(
            key,
            format!("values must be positive and finite, got {v}"),
        ));
    }
    Ok(())
}

/// A written file and its SHA-256.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
}

/// Record of a run: the resolved spec, versions and output digests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: u32,
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub spec: ExperimentSpec,
    pub versions: BTreeMap<String, String>,
    pub git_hash: String,
    pub outputs: Vec<OutputFile>,
}

impl Manifest {
    pub fn new(spec: &ExperimentSpec, outputs: Vec<OutputFile>) -> Self {
        let mut spec = spec.clone();
        spec.output_dir = None;
        let mut versions = BTreeMap::new();
        versions.insert("superres".into(), env!("CARGO_PKG_VERSION").into());
        Manifest {
            schema: SCHEMA_VERSION,
            experiment: spec.experiment,
            seed: spec.seed,
            spec,
            versions,
            git_hash: option_env!("SUPERRES_GIT_HASH").unwrap_or("unknown").into(),
            outputs,
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        manifest.spec.validate()?;
        Ok(manifest)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// SHA-256 (hex) of a file's bytes.
pub fn file_sha256(path: impl AsRef<Path>) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}
