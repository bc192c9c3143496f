//! Gap diffusions: Brownian paths, local times, time changes, the
//! equivalent birth-death jump chain, closed-form exit functionals, and
//! walk-dimension estimation.
//!
//! The diffusion with speed measure `m` is the time change `X_t = B_{Φ̂⁻¹_t}`
//! of a Brownian motion through `Φ_t = ∫ L_x^t dm(x)`. Its expected exit
//! functionals have the closed form
//! `E_x[∫₀^τ f(X_s) ds] = ∫ G_{x₀,x₁}(x,y) f(y) dm(y)` with the kernel
//! `G = 2(x∧y−x₀)(x₁−x∨y)/(x₁−x₀)`, which makes exit times exactly
//! computable by quadrature; Monte Carlo is used to validate the simulators
//! against those numbers, never the other way round.
//!
//! Every stochastic routine is a pure function of its inputs and a 64-bit
//! seed: replications derive per-path seeds, and parallel reductions
//! aggregate per-path results in index order, so outputs are bit-stable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{AtomicMeasure, CdfView, ExtendedCdf};
use crate::spectra::{fit_loglog, SlopeFit};
use crate::transform::MERGE_TOL;

/// Default multiplier tying the local-time bandwidth to the step:
/// `ε = c·√dt`. Larger `c` biases the estimator, smaller `c` inflates its
/// variance.
pub const DEFAULT_EPSILON_MULTIPLIER: f64 = 5.0;

/// Derives a per-replication seed from a master seed (splitmix64 finalizer).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// What a path sample represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathKind {
    Brownian,
    TimeChanged { truncated: bool },
    Transformed { truncated: bool },
    JumpChain,
}

/// A sampled path: strictly increasing times with matching positions.
/// Uniform grids for Brownian and time-changed kinds, event times for jump
/// chains.
#[derive(Debug, Clone)]
pub struct PathSample {
    times: Vec<f64>,
    positions: Vec<f64>,
    seed: u64,
    kind: PathKind,
}

impl PathSample {
    pub fn new(times: Vec<f64>, positions: Vec<f64>, seed: u64, kind: PathKind) -> Result<Self> {
        if times.len() != positions.len() || times.is_empty() {
            return Err(Error::ShapeMismatch(format!(
                "{} times vs {} positions",
                times.len(),
                positions.len()
            )));
        }
        if times.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::InvalidParameter(
                "path times must be non-decreasing".to_string(),
            ));
        }
        Ok(Self {
            times,
            positions,
            seed,
            kind,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn kind(&self) -> PathKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }
}

/// Euler path of a standard Brownian motion: i.i.d. Gaussian increments of
/// variance `dt` from a seeded generator; a fixed seed reproduces the path
/// bit for bit.
pub fn sample_bm(dt: f64, horizon: f64, x0: f64, seed: u64) -> Result<PathSample> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "step must be positive, got {dt}"
        )));
    }
    if horizon < dt {
        return Err(Error::InvalidParameter(format!(
            "horizon {horizon} shorter than one step {dt}"
        )));
    }
    let steps = (horizon / dt).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = dt.sqrt();
    let mut times = Vec::with_capacity(steps + 1);
    let mut positions = Vec::with_capacity(steps + 1);
    times.push(0.0);
    positions.push(x0);
    let mut x = x0;
    for k in 1..=steps {
        let z: f64 = rng.sample(StandardNormal);
        x += scale * z;
        times.push(k as f64 * dt);
        positions.push(x);
    }
    PathSample::new(times, positions, seed, PathKind::Brownian)
}

/// Occupation-density estimates `L_x^t ≈ Λ{s ≤ t : |B_s − x| ≤ ε}/(2ε)` on
/// a spatial grid, snapshot at the requested times.
#[derive(Debug, Clone)]
pub struct LocalTimeProfile {
    grid: Vec<f64>,
    epsilon: f64,
    times: Vec<f64>,
    /// `values[i][j] = L_{grid[j]} at times[i]`.
    values: Vec<Vec<f64>>,
}

impl LocalTimeProfile {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn row(&self, time_index: usize) -> &[f64] {
        &self.values[time_index]
    }

    /// Trapezoid quadrature of the profile over the grid; approximates `t`
    /// when the grid covers the path's range.
    pub fn occupation_integral(&self, time_index: usize) -> f64 {
        let row = &self.values[time_index];
        self.grid
            .windows(2)
            .zip(row.windows(2))
            .map(|(g, v)| (g[1] - g[0]) * 0.5 * (v[0] + v[1]))
            .sum()
    }
}

/// Estimates local times of `path` on `grid` by occupation counting with
/// bandwidth `epsilon`, snapshotting at each of `at_times`.
pub fn local_time_profile(
    path: &PathSample,
    grid: &[f64],
    epsilon: f64,
    at_times: &[f64],
) -> Result<LocalTimeProfile> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "bandwidth must be positive, got {epsilon}"
        )));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter(
            "local-time grid must be strictly increasing".to_string(),
        ));
    }
    let mut checkpoints = at_times.to_vec();
    checkpoints.sort_by(f64::total_cmp);
    let mut running = vec![0.0; grid.len()];
    let mut values = Vec::with_capacity(checkpoints.len());
    let mut next = 0usize;
    for k in 0..path.len() - 1 {
        let t = path.times()[k];
        while next < checkpoints.len() && checkpoints[next] <= t {
            values.push(running.clone());
            next += 1;
        }
        let dt = path.times()[k + 1] - t;
        let x = path.positions()[k];
        let lo = grid.partition_point(|&g| g < x - epsilon);
        let hi = grid.partition_point(|&g| g <= x + epsilon);
        let inc = dt / (2.0 * epsilon);
        for cell in &mut running[lo..hi] {
            *cell += inc;
        }
    }
    while next < checkpoints.len() {
        values.push(running.clone());
        next += 1;
    }
    Ok(LocalTimeProfile {
        grid: grid.to_vec(),
        epsilon,
        times: checkpoints,
        values,
    })
}

/// Speed measure of a gap diffusion.
#[derive(Debug, Clone)]
pub enum SpeedMeasure {
    Atomic(AtomicMeasure),
    /// `density·Λ`, optionally restricted to a window.
    Lebesgue {
        density: f64,
        window: Option<(f64, f64)>,
    },
}

impl SpeedMeasure {
    pub fn lebesgue() -> Self {
        SpeedMeasure::Lebesgue {
            density: 1.0,
            window: None,
        }
    }

    /// Mass of the open interval `(lo, hi)`.
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        match self {
            SpeedMeasure::Atomic(m) => m.mass_between(lo, hi),
            SpeedMeasure::Lebesgue { density, window } => {
                let (a, b) = clip((lo, hi), *window);
                density * (b - a).max(0.0)
            }
        }
    }

    /// Instantaneous rate of the time change at position `x`:
    /// `m([x−ε, x+ε])/(2ε)` for atoms, the plain density for Lebesgue parts.
    fn occupation_rate(&self, x: f64, epsilon: f64) -> f64 {
        match self {
            SpeedMeasure::Atomic(m) => m.mass_closed(x - epsilon, x + epsilon) / (2.0 * epsilon),
            SpeedMeasure::Lebesgue { density, window } => match window {
                None => *density,
                Some((a, b)) => {
                    if x >= *a && x <= *b {
                        *density
                    } else {
                        0.0
                    }
                }
            },
        }
    }
}

fn clip(interval: (f64, f64), window: Option<(f64, f64)>) -> (f64, f64) {
    match window {
        None => interval,
        Some((a, b)) => (interval.0.max(a), interval.1.min(b)),
    }
}

/// The time change `Φ_t = ∫ L_x^t dm(x)` sampled on the path grid, with its
/// right-continuous inverse `Φ̂⁻¹(t) = inf{s : Φ_s > t}`.
#[derive(Debug, Clone)]
pub struct TimeChange {
    times: Vec<f64>,
    phi: Vec<f64>,
}

/// Builds `Φ` along a Brownian path: exact occupation increments for
/// Lebesgue parts, `ε`-window local-time estimates for atoms.
pub fn time_change(path: &PathSample, m: &SpeedMeasure, epsilon: f64) -> Result<TimeChange> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "bandwidth must be positive, got {epsilon}"
        )));
    }
    let mut phi = Vec::with_capacity(path.len());
    phi.push(0.0);
    let mut acc = 0.0;
    for k in 0..path.len() - 1 {
        let dt = path.times()[k + 1] - path.times()[k];
        acc += dt * m.occupation_rate(path.positions()[k], epsilon);
        phi.push(acc);
    }
    Ok(TimeChange {
        times: path.times().to_vec(),
        phi,
    })
}

impl TimeChange {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    /// Total changed time available on this path.
    pub fn horizon(&self) -> f64 {
        *self.phi.last().unwrap()
    }

    /// Index of the first grid time with `Φ` strictly above `t`; `None` once
    /// the query passes `Φ` at the end of the path.
    pub fn inverse_index(&self, t: f64) -> Option<usize> {
        let idx = self.phi.partition_point(|&p| p <= t);
        (idx < self.phi.len()).then_some(idx)
    }

    /// `Φ̂⁻¹(t)` on the grid.
    pub fn inverse(&self, t: f64) -> Option<f64> {
        self.inverse_index(t).map(|i| self.times[i])
    }
}

/// Time-changed path `X_t = B(Φ̂⁻¹(t))` on a uniform output grid of step
/// `dt_out` up to `horizon`; if `Φ` runs out first the path stops early and
/// carries a truncation flag.
pub fn lbm_path(
    path: &PathSample,
    tc: &TimeChange,
    dt_out: f64,
    horizon: f64,
) -> Result<PathSample> {
    if !(dt_out > 0.0) || !(horizon > 0.0) {
        return Err(Error::InvalidParameter(
            "output grid step and horizon must be positive".to_string(),
        ));
    }
    if tc.times() != path.times() {
        return Err(Error::ShapeMismatch(
            "time change was built from a different path grid".to_string(),
        ));
    }
    let steps = (horizon / dt_out).round() as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut positions = Vec::with_capacity(steps + 1);
    let mut truncated = false;
    for k in 0..=steps {
        let t = k as f64 * dt_out;
        match tc.inverse_index(t) {
            Some(idx) => {
                times.push(t);
                positions.push(path.positions()[idx]);
            }
            None => {
                truncated = true;
                break;
            }
        }
    }
    if times.is_empty() {
        return Err(Error::InvalidParameter(
            "time change is exhausted at t = 0".to_string(),
        ));
    }
    PathSample::new(
        times,
        positions,
        path.seed(),
        PathKind::TimeChanged { truncated },
    )
}

/// Pointwise pseudo-inverse image `Y_t = F̌_μ⁻¹(X_t)` of a time-changed path.
pub fn transform_path(path: &PathSample, f_mu: &CdfView) -> Result<PathSample> {
    let truncated = match path.kind() {
        PathKind::TimeChanged { truncated } => truncated,
        other => {
            return Err(Error::InvalidParameter(format!(
                "transform expects a time-changed path, got {other:?}"
            )))
        }
    };
    let positions = path
        .positions()
        .iter()
        .map(|&x| f_mu.pseudo_inverse(x.clamp(0.0, f_mu.total_mass())))
        .collect::<Result<Vec<_>>>()?;
    PathSample::new(
        path.times().to_vec(),
        positions,
        path.seed(),
        PathKind::Transformed { truncated },
    )
}

/// Left/right jump rates of the birth-death chain whose generator is one
/// half of the Neumann string of `(m, F_μ)`: at atom `k` the rate to the
/// right neighbour is `1/(2 w_k h_k)` with `h_k` the `F_μ`-gap, and the
/// extreme atoms reflect (no outward rate).
pub fn jump_chain_rates(m: &AtomicMeasure, f_mu: &CdfView) -> Result<Vec<(f64, f64)>> {
    let n = m.len();
    let scale: Vec<f64> = m.atoms().iter().map(|&y| f_mu.eval(y)).collect();
    let mut rates = Vec::with_capacity(n);
    for k in 0..n {
        let left = if k == 0 {
            0.0
        } else {
            let h = scale[k] - scale[k - 1];
            if !(h > 0.0) {
                return Err(Error::SupportInclusion(format!(
                    "atoms {} and {} coincide in the F_mu scale",
                    k - 1,
                    k
                )));
            }
            1.0 / (2.0 * m.weights()[k] * h)
        };
        let right = if k + 1 == n {
            0.0
        } else {
            let h = scale[k + 1] - scale[k];
            if !(h > 0.0) {
                return Err(Error::SupportInclusion(format!(
                    "atoms {} and {} coincide in the F_mu scale",
                    k,
                    k + 1
                )));
            }
            1.0 / (2.0 * m.weights()[k] * h)
        };
        rates.push((left, right));
    }
    Ok(rates)
}

/// Continuous-time birth-death path on the atoms of `m` with reflecting
/// ends: exponential holding times, embedded nearest-neighbour walk.
pub fn jump_chain_path(
    m: &AtomicMeasure,
    f_mu: &CdfView,
    x0: f64,
    horizon: f64,
    seed: u64,
) -> Result<PathSample> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidParameter("horizon must be positive".to_string()));
    }
    let start = m.nearest_atom(x0);
    if (m.atoms()[start] - x0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "start {x0} is not an atom of the speed measure"
        )));
    }
    let rates = jump_chain_rates(m, f_mu)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut k = start;
    let mut t = 0.0;
    let mut times = vec![0.0];
    let mut positions = vec![m.atoms()[k]];
    loop {
        let (left, right) = rates[k];
        let total = left + right;
        if total == 0.0 {
            // Single atom: frozen path.
            break;
        }
        let u: f64 = rng.gen::<f64>();
        t += -u.ln() / total;
        if t >= horizon {
            break;
        }
        let go_right = rng.gen::<f64>() * total < right;
        k = if go_right { k + 1 } else { k - 1 };
        times.push(t);
        positions.push(m.atoms()[k]);
    }
    times.push(horizon);
    positions.push(m.atoms()[k]);
    PathSample::new(times, positions, seed, PathKind::JumpChain)
}

/// Exit interval of a one-dimensional diffusion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExitInterval {
    /// Exit from `(lo, hi)` through either end.
    TwoSided { lo: f64, hi: f64 },
    /// Exit from `(−∞, hi)` by hitting `hi`.
    HalfLineRight { hi: f64 },
    /// Exit from `(lo, ∞)` by hitting `lo`.
    HalfLineLeft { lo: f64 },
}

/// First-exit problem for the diffusion with the given speed measure.
#[derive(Debug, Clone)]
pub struct ExitProblem {
    pub interval: ExitInterval,
    pub start: f64,
    pub speed: SpeedMeasure,
}

impl ExitProblem {
    pub fn new(interval: ExitInterval, start: f64, speed: SpeedMeasure) -> Result<Self> {
        let inside = match interval {
            ExitInterval::TwoSided { lo, hi } => lo < start && start < hi,
            ExitInterval::HalfLineRight { hi } => start < hi,
            ExitInterval::HalfLineLeft { lo } => start > lo,
        };
        if !inside {
            return Err(Error::InvalidParameter(format!(
                "start {start} does not lie inside {interval:?}"
            )));
        }
        Ok(Self {
            interval,
            start,
            speed,
        })
    }

    pub fn two_sided(lo: f64, hi: f64, start: f64, speed: SpeedMeasure) -> Result<Self> {
        Self::new(ExitInterval::TwoSided { lo, hi }, start, speed)
    }
}

/// Green kernel `G_{x₀,x₁}(x, y) = 2(x∧y−x₀)(x₁−x∨y)/(x₁−x₀)` of the
/// two-sided exit problem; symmetric and non-negative.
pub fn green_kernel(x0: f64, x1: f64, x: f64, y: f64) -> Result<f64> {
    if !(x0 < x && x < x1) || !(x0 < y && y < x1) {
        return Err(Error::Domain(format!(
            "arguments ({x}, {y}) outside the open interval ({x0}, {x1})"
        )));
    }
    Ok(2.0 * (x.min(y) - x0) * (x1 - x.max(y)) / (x1 - x0))
}

/// Deterministic quadrature of the exit-time functional with `f ≡ 1`:
/// exact weighted sums for atomic speed, closed-form integrals for
/// Lebesgue parts. Half-line problems use the one-sided kernels
/// `2(x₁ − x∨y)` and `2(x∧y − x₂)`; against an unbounded Lebesgue speed
/// they diverge and the result is infinite.
pub fn expected_exit_time(problem: &ExitProblem) -> f64 {
    let x = problem.start;
    match (&problem.interval, &problem.speed) {
        (ExitInterval::TwoSided { lo, hi }, SpeedMeasure::Atomic(m)) => {
            let range = m.atoms_in(*lo, *hi);
            let mut total = 0.0;
            for k in range {
                let y = m.atoms()[k];
                total +=
                    2.0 * (x.min(y) - lo) * (hi - x.max(y)) / (hi - lo) * m.weights()[k];
            }
            total
        }
        (ExitInterval::TwoSided { lo, hi }, SpeedMeasure::Lebesgue { density, window }) => {
            let (a, b) = clip((*lo, *hi), *window);
            green_lebesgue_integral(*lo, *hi, x, a, b) * density
        }
        (ExitInterval::HalfLineRight { hi }, SpeedMeasure::Atomic(m)) => {
            let range = m.atoms_in(f64::NEG_INFINITY, *hi);
            let mut total = 0.0;
            for k in range {
                let y = m.atoms()[k];
                total += 2.0 * (hi - x.max(y)) * m.weights()[k];
            }
            total
        }
        (ExitInterval::HalfLineLeft { lo }, SpeedMeasure::Atomic(m)) => {
            let range = m.atoms_in(*lo, f64::INFINITY);
            let mut total = 0.0;
            for k in range {
                let y = m.atoms()[k];
                total += 2.0 * (x.min(y) - lo) * m.weights()[k];
            }
            total
        }
        (ExitInterval::HalfLineRight { hi }, SpeedMeasure::Lebesgue { density, window }) => {
            match window {
                None => f64::INFINITY,
                Some((wl, wh)) => {
                    let (a, b) = (*wl, wh.min(*hi));
                    if b <= a {
                        return 0.0;
                    }
                    // kernel 2(hi - max(x, y))
                    let m = b.min(x).max(a);
                    let flat = 2.0 * (hi - x) * (m - a).max(0.0);
                    let upper = b.max(m);
                    let sloped = (hi - m).powi(2) - (hi - upper).powi(2);
                    (flat + sloped) * density
                }
            }
        }
        (ExitInterval::HalfLineLeft { lo }, SpeedMeasure::Lebesgue { density, window }) => {
            match window {
                None => f64::INFINITY,
                Some((wl, wh)) => {
                    let (a, b) = (wl.max(*lo), *wh);
                    if b <= a {
                        return 0.0;
                    }
                    // kernel 2(min(x, y) - lo)
                    let m = a.max(x).min(b);
                    let flat = 2.0 * (x - lo) * (b - m).max(0.0);
                    let sloped = (m - lo).powi(2) - (a.min(m) - lo).powi(2);
                    (flat + sloped) * density
                }
            }
        }
    }
}

/// `∫_a^b G_{x0,x1}(x, y) dy` in closed form, `[a,b] ⊆ [x0,x1]`.
fn green_lebesgue_integral(x0: f64, x1: f64, x: f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let length = x1 - x0;
    let mut total = 0.0;
    let mid_left = b.min(x);
    if mid_left > a {
        total += (x1 - x) * ((mid_left - x0).powi(2) - (a - x0).powi(2)) / length;
    }
    let mid_right = a.max(x);
    if b > mid_right {
        total += (x - x0) * ((x1 - mid_right).powi(2) - (x1 - b).powi(2)) / length;
    }
    total
}

/// Harmonic exit probabilities of the two-sided problem:
/// `(P[hit lo], P[hit hi]) = ((hi−x)/(hi−lo), (x−lo)/(hi−lo))`.
pub fn exit_probabilities(problem: &ExitProblem) -> Result<(f64, f64)> {
    match problem.interval {
        ExitInterval::TwoSided { lo, hi } => {
            let p_left = (hi - problem.start) / (hi - lo);
            Ok((p_left, 1.0 - p_left))
        }
        _ => Err(Error::InvalidParameter(
            "exit probabilities need a two-sided interval".to_string(),
        )),
    }
}

/// Which simulator realizes the diffusion in Monte Carlo exit runs.
#[derive(Debug, Clone, Copy)]
pub enum Simulator {
    /// Exact birth-death chain on the atoms (atomic speed only). The exit
    /// time estimator accumulates per-state mean holding times along the
    /// embedded walk, which is unbiased for the expectation with less
    /// variance than sampling the exponentials.
    JumpChain,
    /// Streaming Euler walk of the underlying Brownian motion with the time
    /// change accumulated on the fly; the exit time is `Φ` at the step the
    /// walk leaves the interval.
    TimeChange {
        dt: f64,
        /// Brownian-time budget per path; paths that miss the exit within it
        /// count as truncated.
        horizon: f64,
    },
}

/// Monte Carlo exit statistics.
#[derive(Debug, Clone, Serialize)]
pub struct ExitStats {
    pub mean: f64,
    pub std_error: f64,
    pub hit_left_fraction: f64,
    pub hit_left_std_error: f64,
    pub paths: usize,
    pub truncated_fraction: f64,
    /// Set when more than 1% of paths were truncated before exit.
    pub truncation_warning: bool,
}

/// Independent replications with per-path derived seeds; two-sided
/// intervals only. Per-path outcomes are collected in path order before the
/// reduction, so a fixed seed gives bit-identical statistics regardless of
/// thread scheduling.
pub fn mc_exit_stats(
    problem: &ExitProblem,
    simulator: Simulator,
    n_paths: usize,
    seed: u64,
) -> Result<ExitStats> {
    if n_paths < 100 {
        return Err(Error::InvalidParameter(format!(
            "need at least 100 paths, got {n_paths}"
        )));
    }
    let (lo, hi) = match problem.interval {
        ExitInterval::TwoSided { lo, hi } => (lo, hi),
        _ => {
            return Err(Error::InvalidParameter(
                "Monte Carlo exit runs need a two-sided interval".to_string(),
            ))
        }
    };

    // (tau, hit_left, truncated) per path.
    let outcomes: Vec<(f64, bool, bool)> = match simulator {
        Simulator::JumpChain => {
            let walk = ExitWalkTables::new(problem, lo, hi)?;
            (0..n_paths)
                .into_par_iter()
                .map(|i| walk.run(derive_seed(seed, i as u64)))
                .collect()
        }
        Simulator::TimeChange { dt, horizon } => {
            if !(dt > 0.0) || !(horizon > 0.0) {
                return Err(Error::InvalidParameter(
                    "time-change simulator needs positive dt and horizon".to_string(),
                ));
            }
            let epsilon = DEFAULT_EPSILON_MULTIPLIER * dt.sqrt();
            let speed = problem.speed.clone();
            let start = problem.start;
            (0..n_paths)
                .into_par_iter()
                .map(|i| {
                    streamed_exit(
                        &speed,
                        start,
                        lo,
                        hi,
                        dt,
                        horizon,
                        epsilon,
                        derive_seed(seed, i as u64),
                    )
                })
                .collect()
        }
    };

    let usable: Vec<&(f64, bool, bool)> = outcomes.iter().filter(|o| !o.2).collect();
    let truncated = outcomes.len() - usable.len();
    let n = usable.len().max(1) as f64;
    let mean = usable.iter().map(|o| o.0).sum::<f64>() / n;
    let var = usable.iter().map(|o| (o.0 - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let hit_left = usable.iter().filter(|o| o.1).count() as f64 / n;
    let truncated_fraction = truncated as f64 / outcomes.len() as f64;
    Ok(ExitStats {
        mean,
        std_error: (var / n).sqrt(),
        hit_left_fraction: hit_left,
        hit_left_std_error: (hit_left * (1.0 - hit_left) / n).sqrt(),
        paths: outcomes.len(),
        truncated_fraction,
        truncation_warning: truncated_fraction > 0.01,
    })
}

/// Precomputed tables for the absorbed birth-death walk on the atoms inside
/// an interval: Dirichlet ends through the gaps to the boundaries.
struct ExitWalkTables {
    /// Probability threshold for a right step, scaled to u64.
    right_threshold: Vec<u64>,
    /// Mean holding time `1/(left + right)` per state.
    mean_hold: Vec<f64>,
    start_state: usize,
}

impl ExitWalkTables {
    fn new(problem: &ExitProblem, lo: f64, hi: f64) -> Result<Self> {
        let m = match &problem.speed {
            SpeedMeasure::Atomic(m) => m,
            _ => {
                return Err(Error::InvalidParameter(
                    "the jump-chain simulator needs an atomic speed measure".to_string(),
                ))
            }
        };
        let range = m.atoms_in(lo, hi);
        if range.is_empty() {
            return Err(Error::InvalidParameter(
                "no atoms inside the exit interval".to_string(),
            ));
        }
        let atoms = &m.atoms()[range.clone()];
        let weights = &m.weights()[range.clone()];
        let count = atoms.len();
        let mut right_threshold = Vec::with_capacity(count);
        let mut mean_hold = Vec::with_capacity(count);
        for k in 0..count {
            let gap_left = if k == 0 { atoms[0] - lo } else { atoms[k] - atoms[k - 1] };
            let gap_right = if k + 1 == count {
                hi - atoms[k]
            } else {
                atoms[k + 1] - atoms[k]
            };
            let rate_left = 1.0 / (2.0 * weights[k] * gap_left);
            let rate_right = 1.0 / (2.0 * weights[k] * gap_right);
            let total = rate_left + rate_right;
            let p_right = rate_right / total;
            right_threshold.push((p_right * u64::MAX as f64) as u64);
            mean_hold.push(1.0 / total);
        }
        let start_global = m.nearest_atom(problem.start);
        let start_state = start_global
            .checked_sub(range.start)
            .filter(|s| *s < count)
            .ok_or_else(|| {
                Error::InvalidParameter("start atom lies outside the interval".to_string())
            })?;
        Ok(Self {
            right_threshold,
            mean_hold,
            start_state,
        })
    }

    /// One replication; returns (tau estimate, hit left, truncated=false).
    fn run(&self, seed: u64) -> (f64, bool, bool) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let count = self.mean_hold.len();
        let mut state = self.start_state;
        let mut tau = 0.0;
        loop {
            tau += self.mean_hold[state];
            let go_right = rng.gen::<u64>() < self.right_threshold[state];
            if go_right {
                if state + 1 == count {
                    return (tau, false, false);
                }
                state += 1;
            } else {
                if state == 0 {
                    return (tau, true, false);
                }
                state -= 1;
            }
        }
    }
}

/// Streaming Brownian walk with on-the-fly time change; the exit time in
/// the changed clock is `Φ` at the step the walk leaves `(lo, hi)`.
#[allow(clippy::too_many_arguments)]
fn streamed_exit(
    speed: &SpeedMeasure,
    start: f64,
    lo: f64,
    hi: f64,
    dt: f64,
    horizon: f64,
    epsilon: f64,
    seed: u64,
) -> (f64, bool, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = dt.sqrt();
    let mut x = start;
    let mut phi = 0.0;
    let mut t = 0.0;
    while t < horizon {
        phi += dt * speed.occupation_rate(x, epsilon);
        let z: f64 = rng.sample(StandardNormal);
        x += scale * z;
        t += dt;
        if x <= lo {
            return (phi, true, false);
        }
        if x >= hi {
            return (phi, false, false);
        }
    }
    (phi, false, true)
}

/// Walk-dimension estimate from deterministic exit-time quadrature.
#[derive(Debug, Clone, Serialize)]
pub struct WalkDimReport {
    pub radii: Vec<f64>,
    pub exit_times: Vec<f64>,
    /// Radii of the mass windows (identical to `radii` for the plain case,
    /// image radii for the transformed case).
    pub mass_radii: Vec<f64>,
    pub masses: Vec<f64>,
    /// Slope of `log E[τ_r]` against `log r`: the walk dimension (of the
    /// transformed process when `growth_exponent` is set).
    pub exit_slope: SlopeFit,
    /// Slope `t` of `log m((−ρ,ρ))` against `log ρ`.
    pub mass_slope: SlopeFit,
    /// `|d_W − (1+t)|`, or `|ď_W − a·(1+t)|` in the transformed case.
    pub consistency_gap: f64,
    /// Growth exponent `a` of the scale extension, transformed case only.
    pub growth_exponent: Option<f64>,
    pub skipped_radii: Vec<f64>,
}

fn walk_dim_fits(
    radii: Vec<f64>,
    exit_times: Vec<f64>,
    mass_radii: Vec<f64>,
    masses: Vec<f64>,
    growth_exponent: Option<f64>,
    skipped_radii: Vec<f64>,
) -> Result<WalkDimReport> {
    let exit_window = (radii[0], radii[radii.len() - 1]);
    let exit_slope = fit_loglog(&radii, &exit_times, exit_window)?;
    let mass_window = (mass_radii[0], mass_radii[mass_radii.len() - 1]);
    let mass_slope = fit_loglog(&mass_radii, &masses, mass_window)?;
    let predicted = match growth_exponent {
        None => 1.0 + mass_slope.slope,
        Some(a) => a * (1.0 + mass_slope.slope),
    };
    Ok(WalkDimReport {
        consistency_gap: (exit_slope.slope - predicted).abs(),
        radii,
        exit_times,
        mass_radii,
        masses,
        exit_slope,
        mass_slope,
        growth_exponent,
        skipped_radii,
    })
}

/// Walk dimension of the diffusion with speed `m` started at `x`: exit
/// times from `(x−r, x+r)` by Green quadrature, window masses by
/// distribution-function differences, both log-log slopes, and the gap
/// `|d_W − (1+t)|`. Radii must span at least two decades; radii whose mass
/// window is empty are skipped with a note in the report.
pub fn walk_dimension(m: &SpeedMeasure, x: f64, radii: &[f64]) -> Result<WalkDimReport> {
    validate_radii(radii)?;
    let mut used = Vec::new();
    let mut exit_times = Vec::new();
    let mut masses = Vec::new();
    let mut skipped = Vec::new();
    for &r in radii {
        let mass = m.mass_between(x - r, x + r);
        if !(mass > 0.0) {
            skipped.push(r);
            continue;
        }
        let problem = ExitProblem::two_sided(x - r, x + r, x, m.clone())?;
        used.push(r);
        exit_times.push(expected_exit_time(&problem));
        masses.push(mass);
    }
    if used.len() < 3 {
        return Err(Error::Fit(format!(
            "only {} radii produced mass in the window",
            used.len()
        )));
    }
    let mass_radii = used.clone();
    walk_dim_fits(used, exit_times, mass_radii, masses, None, skipped)
}

/// Walk dimension of the transformed process `Y = F̌⁻¹(X)`: the exit of `Y`
/// from `(x−r, x+r)` is the exit of `X` from `(F(x−r), F(x+r))`, so exit
/// times come from Green quadrature on the image side against the
/// pushforward speed `ν∘F⁻¹`. Reports the scale growth exponent `a` and the
/// gap `|ď_W − a·(1+t)|`.
pub fn transformed_walk_dimension(
    nu_ext: &AtomicMeasure,
    f_ext: &ExtendedCdf,
    x: f64,
    radii: &[f64],
) -> Result<WalkDimReport> {
    validate_radii(radii)?;
    let speed = pushforward_extended(nu_ext, f_ext)?;
    let fx = f_ext.eval(x)?;
    let mut used = Vec::new();
    let mut exit_times = Vec::new();
    let mut mass_radii = Vec::new();
    let mut masses = Vec::new();
    let mut skipped = Vec::new();
    for &r in radii {
        let a = f_ext.eval(x - r)?;
        let b = f_ext.eval(x + r)?;
        if !(a < fx && fx < b) {
            skipped.push(r);
            continue;
        }
        let rho = (b - fx).max(fx - a);
        let mass = speed.mass_between(fx - rho, fx + rho);
        if !(mass > 0.0) {
            skipped.push(r);
            continue;
        }
        let problem =
            ExitProblem::two_sided(a, b, fx, SpeedMeasure::Atomic(speed.clone()))?;
        used.push(r);
        exit_times.push(expected_exit_time(&problem));
        mass_radii.push(rho);
        masses.push(mass);
    }
    if used.len() < 3 {
        return Err(Error::Fit(format!(
            "only {} radii produced usable image windows",
            used.len()
        )));
    }
    walk_dim_fits(
        used,
        exit_times,
        mass_radii,
        masses,
        Some(f_ext.growth_exponent()),
        skipped,
    )
}

fn validate_radii(radii: &[f64]) -> Result<()> {
    if radii.len() < 3 || radii.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter(
            "need at least three strictly increasing radii".to_string(),
        ));
    }
    if !(radii[0] > 0.0) {
        return Err(Error::InvalidParameter("radii must be positive".to_string()));
    }
    if radii[radii.len() - 1] / radii[0] < 100.0 {
        return Err(Error::InvalidParameter(
            "radii must span at least two decades".to_string(),
        ));
    }
    Ok(())
}

/// Pushes the atoms of an extended measure through the extended scale,
/// merging plateau collisions.
pub fn pushforward_extended(nu_ext: &AtomicMeasure, f_ext: &ExtendedCdf) -> Result<AtomicMeasure> {
    let mut mapped = Vec::with_capacity(nu_ext.len());
    for &y in nu_ext.atoms() {
        mapped.push(f_ext.eval(y)?);
    }
    for i in 1..mapped.len() {
        if mapped[i] < mapped[i - 1] {
            mapped[i] = mapped[i - 1];
        }
    }
    let mut atoms: Vec<f64> = Vec::with_capacity(mapped.len());
    let mut weights: Vec<f64> = Vec::with_capacity(mapped.len());
    for (i, &z) in mapped.iter().enumerate() {
        if i > 0 && z - mapped[i - 1] <= MERGE_TOL && !atoms.is_empty() {
            let last = weights.len() - 1;
            weights[last] += nu_ext.weights()[i];
        } else {
            atoms.push(z);
            weights.push(nu_ext.weights()[i]);
        }
    }
    AtomicMeasure::new(atoms, weights)
}

/// Exploratory mean-square-displacement estimator of the walk dimension:
/// fits `log E[(X_t − x)²]` against `log t` and returns `2/slope` with the
/// fit. No closed-form validation backs this route; it mirrors an open
/// alternative definition.
pub fn moment_walk_dimension(
    m: &SpeedMeasure,
    x0: f64,
    times: &[f64],
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<(f64, SlopeFit)> {
    if times.len() < 3 || times.windows(2).any(|w| !(w[0] < w[1])) || !(times[0] > 0.0) {
        return Err(Error::InvalidParameter(
            "need at least three increasing positive query times".to_string(),
        ));
    }
    if !(dt > 0.0) || n_paths == 0 {
        return Err(Error::InvalidParameter(
            "need a positive step and at least one path".to_string(),
        ));
    }
    let epsilon = DEFAULT_EPSILON_MULTIPLIER * dt.sqrt();
    let horizon = times[times.len() - 1];
    let per_path: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
            let scale = dt.sqrt();
            let mut x = x0;
            let mut phi = 0.0;
            let mut displacements = Vec::with_capacity(times.len());
            let mut next = 0usize;
            while next < times.len() {
                phi += dt * m.occupation_rate(x, epsilon);
                let z: f64 = rng.sample(StandardNormal);
                x += scale * z;
                while next < times.len() && phi > times[next] {
                    displacements.push((x - x0).powi(2));
                    next += 1;
                }
                if phi > horizon * 64.0 {
                    break;
                }
            }
            while displacements.len() < times.len() {
                displacements.push(f64::NAN);
            }
            displacements
        })
        .collect();
    let mut means = Vec::with_capacity(times.len());
    for k in 0..times.len() {
        let vals: Vec<f64> = per_path.iter().map(|p| p[k]).filter(|v| v.is_finite()).collect();
        if vals.is_empty() {
            return Err(Error::Fit(format!("no samples reached time {}", times[k])));
        }
        means.push(vals.iter().sum::<f64>() / vals.len() as f64);
    }
    let fit = fit_loglog(times, &means, (times[0], times[times.len() - 1]))?;
    Ok((2.0 / fit.slope, fit))
}
