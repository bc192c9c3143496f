//! Experiment configuration: JSON schema, defaults, and validation.
//!
//! Validation failures carry a JSON-pointer-style path to the offending
//! field so config errors are actionable from the command line.

use std::fmt;

use kflab_core::measure::{
    atomize, extend_atomization, periodize, AtomicMeasure, IfsMeasure, MeasureSpec,
};
use kflab_core::diffusion::SpeedMeasure;
use kflab_core::operator::BoundaryTuple;
use serde::{Deserialize, Serialize};

/// A validation failure with the JSON pointer of the offending field.
#[derive(Debug, Clone)]
pub struct ConfigError {
    pub pointer: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.pointer, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(pointer: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        pointer: pointer.to_string(),
        message: message.into(),
    }
}

/// Experiment families exposed by the runner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Spectrum,
    Transfer,
    Counting,
    Simulate,
    Exit,
    WalkDim,
}

impl ExperimentKind {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        match text {
            "spectrum" => Ok(Self::Spectrum),
            "transfer" => Ok(Self::Transfer),
            "counting" => Ok(Self::Counting),
            "simulate" => Ok(Self::Simulate),
            "exit" => Ok(Self::Exit),
            "walkdim" => Ok(Self::WalkDim),
            other => Err(err(
                "/kind",
                format!(
                    "unknown experiment kind '{other}' (expected spectrum, transfer, counting, simulate, exit, or walkdim)"
                ),
            )),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Spectrum => "spectrum",
            Self::Transfer => "transfer",
            Self::Counting => "counting",
            Self::Simulate => "simulate",
            Self::Exit => "exit",
            Self::WalkDim => "walkdim",
        }
    }

    /// Experiments that consume randomness and therefore require a seed.
    pub fn is_stochastic(&self) -> bool {
        matches!(self, Self::Simulate | Self::Exit)
    }
}

/// Boundary tuple in radians; values within 1e-12 of π/2 become Neumann.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BoundarySpec {
    pub alpha: f64,
    pub beta: f64,
}

/// Speed-measure schema of the diffusion experiments.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SpeedSpec {
    Lebesgue {
        #[serde(default = "default_density")]
        density: f64,
        #[serde(default)]
        window: Option<(f64, f64)>,
    },
    Atomic {
        atoms: Vec<f64>,
        weights: Vec<f64>,
    },
    /// Depth-`depth` atomization of an IFS measure on the unit interval.
    IfsAtomized { measure: MeasureSpec, depth: u32 },
    /// Integer-lattice periodization of an atomized IFS measure.
    Periodized {
        measure: MeasureSpec,
        depth: u32,
        radius: f64,
    },
}

fn default_density() -> f64 {
    1.0
}

impl SpeedSpec {
    pub fn build(&self, pointer: &str) -> Result<SpeedMeasure, ConfigError> {
        match self {
            SpeedSpec::Lebesgue { density, window } => {
                if !(*density > 0.0) {
                    return Err(err(pointer, "density must be positive"));
                }
                if let Some((lo, hi)) = window {
                    if !(lo < hi) {
                        return Err(err(pointer, "window must be a nonempty interval"));
                    }
                }
                Ok(SpeedMeasure::Lebesgue {
                    density: *density,
                    window: *window,
                })
            }
            SpeedSpec::Atomic { atoms, weights } => AtomicMeasure::new(atoms.clone(), weights.clone())
                .map(SpeedMeasure::Atomic)
                .map_err(|e| err(pointer, e.to_string())),
            SpeedSpec::IfsAtomized { measure, depth } => {
                let ifs = build_ifs(measure, pointer)?;
                atomize(&ifs, *depth)
                    .map(SpeedMeasure::Atomic)
                    .map_err(|e| err(pointer, e.to_string()))
            }
            SpeedSpec::Periodized {
                measure,
                depth,
                radius,
            } => {
                let ifs = build_ifs(measure, pointer)?;
                let base = atomize(&ifs, *depth).map_err(|e| err(pointer, e.to_string()))?;
                periodize(&base, *radius)
                    .map(SpeedMeasure::Atomic)
                    .map_err(|e| err(pointer, e.to_string()))
            }
        }
    }
}

fn build_ifs(spec: &MeasureSpec, pointer: &str) -> Result<IfsMeasure, ConfigError> {
    match spec {
        MeasureSpec::Lebesgue => Ok(IfsMeasure::lebesgue_dyadic()),
        other => other.build_ifs().map_err(|e| err(pointer, e.to_string())),
    }
}

/// Self-similar scale extension for the transformed walk-dimension run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TransformSpec {
    /// Spatial factor `c > 1`.
    pub c: f64,
    /// Mass factor `m̂ > 1`.
    pub mass_factor: f64,
    /// Tiling level: the extended measure is atomized on `[-c^level, c^level]`.
    pub level: u32,
}

/// Raw JSON shape; unknown fields are rejected so typos surface early.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu: Option<MeasureSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<MeasureSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundary: Option<BoundarySpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depths: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_paths: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_multiplier: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_modes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interval: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulator: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub speed: Option<SpeedSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transform: Option<TransformSpec>,
}

/// Which simulator an exit experiment runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimulatorChoice {
    JumpChain,
    TimeChange,
}

/// A validated configuration with all defaults filled in.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub raw: RawConfig,
    pub nu: Option<IfsMeasure>,
    pub mu: Option<IfsMeasure>,
    pub boundary: BoundaryTuple,
    pub depth: u32,
    pub depths: Vec<u32>,
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub epsilon_multiplier: f64,
    pub max_modes: usize,
    pub interval: (f64, f64),
    pub start: f64,
    pub simulator: SimulatorChoice,
    pub speed: Option<SpeedMeasure>,
    pub radii: Vec<f64>,
    pub x: f64,
    pub transform: Option<TransformSpec>,
}

/// Parses the raw JSON shape without semantic validation.
pub fn parse_raw(text: &str) -> Result<RawConfig, ConfigError> {
    serde_json::from_str(text).map_err(|e| err("/", format!("malformed config: {e}")))
}

/// Parses and validates a JSON config document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    validate(parse_raw(text)?)
}

/// Fills defaults and checks the semantic requirements of the chosen kind.
pub fn validate(raw: RawConfig) -> Result<ExperimentConfig, ConfigError> {
    let kind = ExperimentKind::parse(&raw.kind)?;

    if kind.is_stochastic() && raw.seed.is_none() {
        return Err(err("/seed", "required for stochastic experiments"));
    }

    let boundary_spec = raw.boundary.unwrap_or(BoundarySpec {
        alpha: 0.0,
        beta: 0.0,
    });
    let boundary = BoundaryTuple::new(boundary_spec.alpha, boundary_spec.beta)
        .map_err(|e| err("/boundary", e.to_string()))?;

    let nu = match &raw.nu {
        Some(spec) => Some(build_ifs(spec, "/nu")?),
        None => None,
    };
    let mu = match &raw.mu {
        Some(spec) => Some(build_ifs(spec, "/mu")?),
        None => None,
    };

    if matches!(
        kind,
        ExperimentKind::Spectrum | ExperimentKind::Transfer | ExperimentKind::Counting
    ) && nu.is_none()
    {
        return Err(err("/nu", "required for spectral experiments"));
    }

    let depth = raw.depth.unwrap_or(10);
    if depth == 0 {
        return Err(err("/depth", "must be at least 1"));
    }
    let depths = raw.depths.clone().unwrap_or_else(|| vec![depth]);
    if depths.is_empty() {
        return Err(err("/depths", "must name at least one depth"));
    }

    let dt = raw.dt.unwrap_or(1e-4);
    if !(dt > 0.0) {
        return Err(err("/dt", "must be positive"));
    }
    let horizon = raw.horizon.unwrap_or(1.0);
    if !(horizon > 0.0) {
        return Err(err("/horizon", "must be positive"));
    }
    let epsilon_multiplier = raw.epsilon_multiplier.unwrap_or(5.0);
    if !(epsilon_multiplier > 0.0) {
        return Err(err("/epsilon_multiplier", "must be positive"));
    }
    let n_paths = raw.n_paths.unwrap_or(10_000);
    let max_modes = raw.max_modes.unwrap_or(16);

    let interval = raw.interval.unwrap_or((0.0, 1.0));
    if !(interval.0 < interval.1) {
        return Err(err("/interval", "must be a nonempty interval"));
    }
    let start = raw.start.unwrap_or(0.5 * (interval.0 + interval.1));
    if kind == ExperimentKind::Exit && !(interval.0 < start && start < interval.1) {
        return Err(err("/start", "must lie inside the interval"));
    }

    let simulator = match raw.simulator.as_deref() {
        None | Some("jump-chain") => SimulatorChoice::JumpChain,
        Some("time-change") => SimulatorChoice::TimeChange,
        Some(other) => {
            return Err(err(
                "/simulator",
                format!("unknown simulator '{other}' (expected jump-chain or time-change)"),
            ))
        }
    };

    let speed = match &raw.speed {
        Some(spec) => Some(spec.build("/speed")?),
        None => None,
    };
    if matches!(kind, ExperimentKind::Exit | ExperimentKind::Simulate | ExperimentKind::WalkDim)
        && speed.is_none()
        && raw.transform.is_none()
    {
        return Err(err("/speed", "required for diffusion experiments"));
    }
    if kind == ExperimentKind::Exit
        && simulator == SimulatorChoice::JumpChain
        && !matches!(speed, Some(SpeedMeasure::Atomic(_)))
    {
        return Err(err(
            "/speed",
            "the jump-chain simulator needs an atomic speed measure",
        ));
    }

    let radii = raw.radii.clone().unwrap_or_default();
    if kind == ExperimentKind::WalkDim && radii.len() < 3 {
        return Err(err("/radii", "need at least three radii"));
    }
    let x = raw.x.unwrap_or(0.0);

    if let Some(t) = &raw.transform {
        if !(t.c > 1.0) || !(t.mass_factor > 1.0) {
            return Err(err("/transform", "factors c and mass_factor must exceed 1"));
        }
        if kind == ExperimentKind::WalkDim && nu.is_none() {
            return Err(err("/nu", "transformed walk dimension needs a base measure"));
        }
    }

    Ok(ExperimentConfig {
        kind,
        nu,
        mu,
        boundary,
        depth,
        depths,
        dt,
        horizon,
        n_paths,
        seed: raw.seed.unwrap_or(0),
        epsilon_multiplier,
        max_modes,
        interval,
        start,
        simulator,
        speed,
        radii,
        x,
        transform: raw.transform,
        raw,
    })
}

impl ExperimentConfig {
    /// Canonical serialized form of the raw config (after overrides), hashed
    /// into the manifest.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(&self.raw).expect("raw config serializes")
    }

    /// The extended atomization `ν_ext` and scale for a transformed
    /// walk-dimension run.
    pub fn build_extension(
        &self,
    ) -> Result<(AtomicMeasure, kflab_core::measure::ExtendedCdf), ConfigError> {
        let spec = self
            .transform
            .ok_or_else(|| err("/transform", "missing extension parameters"))?;
        let nu = self
            .nu
            .clone()
            .ok_or_else(|| err("/nu", "transformed walk dimension needs a base measure"))?;
        let base = atomize(&nu, self.depth).map_err(|e| err("/depth", e.to_string()))?;
        let nu_ext = extend_atomization(&base, spec.c, spec.mass_factor, spec.level, true)
            .map_err(|e| err("/transform", e.to_string()))?;
        let f_base = kflab_core::measure::CdfView::from_ifs(nu);
        let f_ext = kflab_core::measure::extend_selfsimilar(f_base, spec.c, spec.mass_factor, true)
            .map_err(|e| err("/transform", e.to_string()))?;
        Ok((nu_ext, f_ext))
    }
}
