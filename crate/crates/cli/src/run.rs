//! Experiment dispatch: runs the configured pipeline, writes CSV/JSON
//! artifacts, and records a manifest with a content hash per output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use kflab_core::diffusion::{
    exit_probabilities, expected_exit_time, lbm_path, mc_exit_stats, sample_bm, time_change,
    transform_path, transformed_walk_dimension, walk_dimension, ExitProblem, Simulator,
    SpeedMeasure,
};
use kflab_core::measure::{atomize, CdfView, MeasureSpec};
use kflab_core::operator::{build_string, Spectrum};
use kflab_core::spectra::convergence_study;
use kflab_core::transform::{phi_apply, pushforward, PhiDirection};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{ConfigError, ExperimentConfig, ExperimentKind, SimulatorChoice};

/// Runner failure, mapped to process exit codes by `main`.
#[derive(Debug)]
pub enum RunError {
    /// Invalid configuration (exit code 2).
    Validation(ConfigError),
    /// A numerical self-check failed its tolerance (exit code 3).
    Tolerance(String),
    /// Everything else: I/O, numerics that refused to run (exit code 1).
    Other(String),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Validation(e) => write!(f, "invalid config: {e}"),
            RunError::Tolerance(m) => write!(f, "numerical self-check failed: {m}"),
            RunError::Other(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<kflab_core::Error> for RunError {
    fn from(e: kflab_core::Error) -> Self {
        RunError::Other(e.to_string())
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Other(format!("i/o error: {e}"))
    }
}

#[derive(Debug, Serialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub kind: String,
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
    pub wall_time_ms: u128,
    pub outputs: Vec<OutputFile>,
    pub summary: serde_json::Value,
}

/// Collects artifacts and finally the manifest into the output directory.
struct ArtifactSink {
    dir: PathBuf,
    outputs: Vec<OutputFile>,
}

impl ArtifactSink {
    fn new(dir: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, content: &str) -> Result<(), RunError> {
        let path = self.dir.join(name);
        fs::write(&path, content)?;
        self.outputs.push(OutputFile {
            path: name.to_string(),
            sha256: hex_digest(content.as_bytes()),
            bytes: content.len() as u64,
        });
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), RunError> {
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| RunError::Other(format!("serialization failed: {e}")))?;
        self.write(name, &text)
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    let mut text = String::with_capacity(64);
    for b in out {
        let _ = write!(text, "{b:02x}");
    }
    text
}

/// Runs the configured experiment, writing artifacts and `manifest.json`
/// into `out_dir`. Returns the manifest on success.
pub fn dispatch(config: &ExperimentConfig, out_dir: &Path) -> Result<Manifest, RunError> {
    let started = Instant::now();
    let mut sink = ArtifactSink::new(out_dir)?;
    let summary = match config.kind {
        ExperimentKind::Spectrum => run_spectrum(config, &mut sink)?,
        ExperimentKind::Transfer => run_transfer(config, &mut sink)?,
        ExperimentKind::Counting => run_counting(config, &mut sink)?,
        ExperimentKind::Simulate => run_simulate(config, &mut sink)?,
        ExperimentKind::Exit => run_exit(config, &mut sink)?,
        ExperimentKind::WalkDim => run_walkdim(config, &mut sink)?,
    };
    let manifest = Manifest {
        kind: config.kind.name().to_string(),
        config_sha256: hex_digest(config.canonical_json().as_bytes()),
        seed: config.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_ms: started.elapsed().as_millis(),
        outputs: sink.outputs,
        summary,
    };
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| RunError::Other(format!("manifest serialization failed: {e}")))?;
    fs::write(out_dir.join("manifest.json"), text)?;
    Ok(manifest)
}

/// The scale measure as a distribution-function evaluator; Lebesgue stays
/// the exact identity rather than a dyadic recursion.
fn mu_cdf(config: &ExperimentConfig) -> CdfView {
    match (&config.raw.mu, &config.mu) {
        (Some(MeasureSpec::Lebesgue), _) | (None, _) => CdfView::lebesgue(),
        (_, Some(ifs)) => CdfView::from_ifs(ifs.clone()),
        _ => CdfView::lebesgue(),
    }
}

fn eigenvalue_csv(spectrum_depth: u32, boundary: (f64, f64), values: &[f64]) -> String {
    let mut text = String::from("index,eigenvalue,boundary_alpha,boundary_beta,depth\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(
            text,
            "{},{},{},{},{}",
            i + 1,
            v,
            boundary.0,
            boundary.1,
            spectrum_depth
        );
    }
    text
}

fn eigenvector_csv(spectrum: &Spectrum, max_modes: usize) -> String {
    let modes = spectrum.len().min(max_modes);
    let mut text = String::from("node");
    for n in 1..=modes {
        let _ = write!(text, ",mode_{n}");
    }
    text.push('\n');
    for (k, node) in spectrum.nodes().iter().enumerate() {
        let _ = write!(text, "{node}");
        for n in 1..=modes {
            let _ = write!(text, ",{}", spectrum.eigenvector(n)[k]);
        }
        text.push('\n');
    }
    text
}

fn path_csv(times: &[f64], values: &[f64]) -> String {
    let mut text = String::from("t,value\n");
    for (t, v) in times.iter().zip(values) {
        let _ = writeln!(text, "{t},{v}");
    }
    text
}

fn boundary_angles(config: &ExperimentConfig) -> (f64, f64) {
    (
        config.boundary.alpha.angle(),
        config.boundary.beta.angle(),
    )
}

fn run_spectrum(
    config: &ExperimentConfig,
    sink: &mut ArtifactSink,
) -> Result<serde_json::Value, RunError> {
    let nu = config
        .nu
        .as_ref()
        .ok_or_else(|| RunError::Other("missing nu".to_string()))?;
    let atoms = atomize(nu, config.depth)?;
    let string = build_string(&atoms, &mu_cdf(config), config.boundary)?;
    let angles = boundary_angles(config);
    // Full eigenvectors are cubic in the atom count; above this size only
    // the eigenvalues are reported.
    if atoms.len() <= 4096 {
        let mut spectrum = string.eigensolve();
        spectrum.set_depth(config.depth);
        sink.write(
            "eigenvalues.csv",
            &eigenvalue_csv(config.depth, angles, spectrum.eigenvalues()),
        )?;
        sink.write(
            "eigenvectors.csv",
            &eigenvector_csv(&spectrum, config.max_modes),
        )?;
        Ok(json!({
            "atoms": atoms.len(),
            "largest_eigenvalue": spectrum.eigenvalues()[0],
            "smallest_eigenvalue": spectrum.eigenvalues()[spectrum.len() - 1],
            "modes_written": spectrum.len().min(config.max_modes),
        }))
    } else {
        let values = string.eigenvalues();
        sink.write(
            "eigenvalues.csv",
            &eigenvalue_csv(config.depth, angles, &values),
        )?;
        Ok(json!({
            "atoms": atoms.len(),
            "largest_eigenvalue": values[0],
            "smallest_eigenvalue": values[values.len() - 1],
            "modes_written": 0,
        }))
    }
}

fn run_transfer(
    config: &ExperimentConfig,
    sink: &mut ArtifactSink,
) -> Result<serde_json::Value, RunError> {
    let nu = config
        .nu
        .as_ref()
        .ok_or_else(|| RunError::Other("missing nu".to_string()))?;
    let atoms = atomize(nu, config.depth)?;
    let f_mu = mu_cdf(config);
    let generalized = build_string(&atoms, &f_mu, config.boundary)?.eigensolve();
    let pf = pushforward(&atoms, &f_mu);
    let classical = build_string(&pf.image, &CdfView::lebesgue(), config.boundary)?.eigensolve();

    let mut max_value_discrepancy = 0.0f64;
    for (a, b) in generalized.eigenvalues().iter().zip(classical.eigenvalues()) {
        max_value_discrepancy = max_value_discrepancy.max(((a - b) / b).abs());
    }
    let mut max_vector_discrepancy = 0.0f64;
    for n in 1..=generalized.len() {
        let relabeled = phi_apply(generalized.eigenvector(n), &pf, PhiDirection::Forward)?;
        for (a, b) in relabeled.iter().zip(classical.eigenvector(n)) {
            max_vector_discrepancy = max_vector_discrepancy.max((a - b).abs());
        }
    }

    let angles = boundary_angles(config);
    sink.write(
        "eigenvalues_generalized.csv",
        &eigenvalue_csv(config.depth, angles, generalized.eigenvalues()),
    )?;
    sink.write(
        "eigenvalues_classical.csv",
        &eigenvalue_csv(config.depth, angles, classical.eigenvalues()),
    )?;

    if max_value_discrepancy > 1e-12 {
        return Err(RunError::Tolerance(format!(
            "transfer eigenvalue discrepancy {max_value_discrepancy:e} exceeds 1e-12"
        )));
    }
    Ok(json!({
        "atoms": atoms.len(),
        "max_eigenvalue_rel_discrepancy": max_value_discrepancy,
        "max_eigenvector_discrepancy": max_vector_discrepancy,
    }))
}

fn run_counting(
    config: &ExperimentConfig,
    sink: &mut ArtifactSink,
) -> Result<serde_json::Value, RunError> {
    let nu = config
        .nu
        .as_ref()
        .ok_or_else(|| RunError::Other("missing nu".to_string()))?;
    let mu = config
        .mu
        .clone()
        .unwrap_or_else(kflab_core::measure::IfsMeasure::lebesgue_dyadic);
    let report = convergence_study(nu, &mu, config.boundary, &config.depths)?;
    let angles = boundary_angles(config);
    for depth_result in &report.depths {
        sink.write(
            &format!("eigenvalues_depth_{}.csv", depth_result.depth),
            &eigenvalue_csv(depth_result.depth, angles, &depth_result.eigenvalues),
        )?;
    }
    sink.write_json("report.json", &report)?;
    Ok(json!({
        "reference_exponent": report.reference_exponent,
        "slopes": report
            .depths
            .iter()
            .map(|d| json!({"depth": d.depth, "slope": d.fit.slope, "std_error": d.fit.std_error}))
            .collect::<Vec<_>>(),
    }))
}

fn run_simulate(
    config: &ExperimentConfig,
    sink: &mut ArtifactSink,
) -> Result<serde_json::Value, RunError> {
    let speed = config
        .speed
        .clone()
        .ok_or_else(|| RunError::Other("missing speed measure".to_string()))?;
    let epsilon = config.epsilon_multiplier * config.dt.sqrt();
    let brownian = sample_bm(config.dt, config.horizon, config.start, config.seed)?;
    let tc = time_change(&brownian, &speed, epsilon)?;
    let changed = lbm_path(&brownian, &tc, config.dt, config.horizon)?;
    let transformed = transform_path(&changed, &mu_cdf(config))?;

    sink.write(
        "brownian.csv",
        &path_csv(brownian.times(), brownian.positions()),
    )?;
    sink.write("time_change.csv", &path_csv(tc.times(), tc.phi()))?;
    sink.write("lbm.csv", &path_csv(changed.times(), changed.positions()))?;
    sink.write(
        "transformed.csv",
        &path_csv(transformed.times(), transformed.positions()),
    )?;

    let truncated = matches!(
        changed.kind(),
        kflab_core::diffusion::PathKind::TimeChanged { truncated: true }
    );
    Ok(json!({
        "steps": brownian.len() - 1,
        "changed_horizon": tc.horizon(),
        "truncated": truncated,
    }))
}

fn run_exit(
    config: &ExperimentConfig,
    sink: &mut ArtifactSink,
) -> Result<serde_json::Value, RunError> {
    let speed = config
        .speed
        .clone()
        .ok_or_else(|| RunError::Other("missing speed measure".to_string()))?;
    let (lo, hi) = config.interval;
    // Snap the start to an atom for atomic speeds so the chain can launch.
    let start = match &speed {
        SpeedMeasure::Atomic(m) => m.atoms()[m.nearest_atom(config.start)],
        _ => config.start,
    };
    let problem = ExitProblem::two_sided(lo, hi, start, speed)?;
    let quadrature = expected_exit_time(&problem);
    let (p_left, p_right) = exit_probabilities(&problem)?;
    let simulator = match config.simulator {
        SimulatorChoice::JumpChain => Simulator::JumpChain,
        SimulatorChoice::TimeChange => Simulator::TimeChange {
            dt: config.dt,
            horizon: config.horizon,
        },
    };
    let stats = mc_exit_stats(&problem, simulator, config.n_paths.max(100), config.seed)?;

    let gap = (stats.mean - quadrature).abs();
    let report = json!({
        "start": start,
        "quadrature": quadrature,
        "hit_left_probability": p_left,
        "hit_right_probability": p_right,
        "monte_carlo": stats,
        "gap": gap,
    });
    sink.write_json("report.json", &report)?;

    if stats.truncation_warning {
        return Err(RunError::Tolerance(format!(
            "{:.1}% of paths were truncated before exit",
            stats.truncated_fraction * 100.0
        )));
    }
    if gap > 4.0 * stats.std_error.max(1e-12) {
        return Err(RunError::Tolerance(format!(
            "Monte Carlo mean {} is {:.1} standard errors from the quadrature {quadrature}",
            stats.mean,
            gap / stats.std_error
        )));
    }
    Ok(report)
}

fn run_walkdim(
    config: &ExperimentConfig,
    sink: &mut ArtifactSink,
) -> Result<serde_json::Value, RunError> {
    let report = if config.transform.is_some() {
        let (nu_ext, f_ext) = config.build_extension().map_err(RunError::Validation)?;
        transformed_walk_dimension(&nu_ext, &f_ext, config.x, &config.radii)?
    } else {
        let speed = config
            .speed
            .clone()
            .ok_or_else(|| RunError::Other("missing speed measure".to_string()))?;
        walk_dimension(&speed, config.x, &config.radii)?
    };

    let mut csv = String::from("radius,exit_time,mass_radius,mass\n");
    for i in 0..report.radii.len() {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            report.radii[i], report.exit_times[i], report.mass_radii[i], report.masses[i]
        );
    }
    sink.write("walkdim.csv", &csv)?;
    sink.write_json("report.json", &report)?;
    Ok(json!({
        "walk_dimension": report.exit_slope.slope,
        "mass_exponent": report.mass_slope.slope,
        "consistency_gap": report.consistency_gap,
        "growth_exponent": report.growth_exponent,
    }))
}
