//! Acceptance suite: each test exercises one criterion end to end at its
//! stated tolerance and prints a PASS/FAIL line.
//!
//! Run with `cargo test -p kflab-core --test acceptance -- --nocapture` to
//! see the lines; a failed criterion also fails its test.

use std::sync::Mutex;
use std::time::Instant;

use kflab_core::diffusion::{
    expected_exit_time, mc_exit_stats, ExitProblem, Simulator, SpeedMeasure,
};
use kflab_core::measure::{
    atomize, extend_atomization, extend_selfsimilar, periodize, AtomicMeasure, CdfView, IfsMeasure,
};
use kflab_core::operator::{
    build_string, inverse_apply, kernel_spectrum, BoundaryTuple,
};
use kflab_core::spectra::convergence_study;
use kflab_core::transform::{phi_apply, pushforward, PhiDirection};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria run one at a time so the stated runtime bounds measure the
/// work, not harness contention.
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(number: u8, name: &str, failures: &[String]) {
    let verdict = if failures.is_empty() { "PASS" } else { "FAIL" };
    println!("acceptance criterion {number} ({name}): {verdict}");
    assert!(
        failures.is_empty(),
        "criterion {number} ({name}):\n{}",
        failures.join("\n")
    );
}

/// Criterion 1: the generalized string of (ν, μ) and the classical string of
/// the pushforward share eigenvalues to relative 1e-12 and eigenvectors up
/// to the atom relabeling, at depth 9 (512 atoms), in under 10 seconds.
#[test]
fn criterion_1_discrete_transfer_theorem() {
    let _guard = serial();
    let started = Instant::now();
    let mut failures = Vec::new();

    let nu = atomize(&IfsMeasure::cantor(0.3, 0.7).unwrap(), 9).unwrap();
    let f_mu = CdfView::from_ifs(IfsMeasure::cantor(0.5, 0.5).unwrap());
    let gamma = BoundaryTuple::dirichlet();

    let generalized = build_string(&nu, &f_mu, gamma).unwrap().eigensolve();
    let pf = pushforward(&nu, &f_mu);
    let classical = build_string(&pf.image, &CdfView::lebesgue(), gamma)
        .unwrap()
        .eigensolve();

    let mut worst_value = 0.0f64;
    for (a, b) in generalized
        .eigenvalues()
        .iter()
        .zip(classical.eigenvalues())
    {
        worst_value = worst_value.max(((a - b) / b).abs());
    }
    if worst_value > 1e-12 {
        failures.push(format!("eigenvalue relative discrepancy {worst_value:e}"));
    }

    let mut worst_vector = 0.0f64;
    for n in 1..=generalized.len() {
        let relabeled = phi_apply(generalized.eigenvector(n), &pf, PhiDirection::Forward).unwrap();
        for (a, b) in relabeled.iter().zip(classical.eigenvector(n)) {
            worst_vector = worst_vector.max((a - b).abs());
        }
    }
    if worst_vector > 1e-10 {
        failures.push(format!("eigenvector discrepancy {worst_vector:e}"));
    }

    let elapsed = started.elapsed().as_secs_f64();
    if elapsed >= 10.0 {
        failures.push(format!("runtime {elapsed:.1}s exceeds 10s"));
    }
    report(1, "discrete transfer theorem", &failures);
}

/// Criterion 2: depth-10 dyadic Lebesgue pair under Neumann reproduces the
/// classical second-derivative eigenvalues −(nπ)² to 0.1% for the first ten
/// nonzero modes, and the Cantor pair reproduces the same ten values.
#[test]
fn criterion_2_classical_limit() {
    let _guard = serial();
    let mut failures = Vec::new();

    let lebesgue = IfsMeasure::lebesgue_dyadic();
    let nu = atomize(&lebesgue, 10).unwrap();
    let classical = build_string(&nu, &CdfView::lebesgue(), BoundaryTuple::neumann())
        .unwrap()
        .eigenvalues();
    let nonzero: Vec<f64> = classical.iter().copied().filter(|&l| l < 0.0).collect();
    for (i, &lambda) in nonzero.iter().take(10).enumerate() {
        let n = (i + 1) as f64;
        let exact = -(n * std::f64::consts::PI).powi(2);
        let rel = ((lambda - exact) / exact).abs();
        if rel > 1e-3 {
            failures.push(format!("Lebesgue mode {n}: {lambda} vs {exact} (rel {rel:e})"));
        }
    }

    let cantor = IfsMeasure::cantor(0.5, 0.5).unwrap();
    let nu_c = atomize(&cantor, 10).unwrap();
    let f_mu = CdfView::from_ifs(cantor);
    let fractal = build_string(&nu_c, &f_mu, BoundaryTuple::neumann())
        .unwrap()
        .eigenvalues();
    let nonzero_c: Vec<f64> = fractal.iter().copied().filter(|&l| l < 0.0).collect();
    for (i, (&a, &b)) in nonzero_c.iter().zip(&nonzero).take(10).enumerate() {
        let rel = ((a - b) / b).abs();
        if rel > 1e-3 {
            failures.push(format!("Cantor mode {}: {a} vs {b} (rel {rel:e})", i + 1));
        }
    }

    report(2, "classical limit", &failures);
}

/// Criterion 3: counting-function slopes over the trusted band match the
/// spectral exponent within ±0.05 for the symmetric Cantor pair and the
/// mixed-weight pair at depths 12 and 14, in under two minutes; the leading
/// eigenvalues Cauchy-converge across depths.
#[test]
fn criterion_3_spectral_exponent() {
    let _guard = serial();
    let started = Instant::now();
    let mut failures = Vec::new();

    let mu = IfsMeasure::cantor(0.5, 0.5).unwrap();
    let cases = [
        ("symmetric", IfsMeasure::cantor(0.5, 0.5).unwrap(), 0.5),
        ("mixed", IfsMeasure::cantor(0.25, 0.75).unwrap(), 0.47499),
    ];
    for (label, nu, expected_u) in cases {
        let report_data =
            convergence_study(&nu, &mu, BoundaryTuple::neumann(), &[10, 12, 14]).unwrap();
        if (report_data.reference_exponent - expected_u).abs() > 1e-3 {
            failures.push(format!(
                "{label}: reference exponent {} far from {expected_u}",
                report_data.reference_exponent
            ));
        }
        for depth_result in &report_data.depths {
            if depth_result.depth < 12 {
                continue;
            }
            let err = (depth_result.fit.slope - report_data.reference_exponent).abs();
            if err > 0.05 {
                failures.push(format!(
                    "{label} depth {}: slope {} vs u {} (err {err:.3})",
                    depth_result.depth, depth_result.fit.slope, report_data.reference_exponent
                ));
            }
        }
        // Cauchy convergence of the leading modes; changes already below
        // 1e-4 count as converged (further shrinkage is noise-dominated).
        for pair in report_data.cauchy.windows(2) {
            for (mode, (early, late)) in pair[0]
                .relative_change
                .iter()
                .zip(&pair[1].relative_change)
                .enumerate()
            {
                if *late > *early && *late > 1e-4 {
                    failures.push(format!(
                        "{label} mode {}: Cauchy change grew from {early:e} to {late:e}",
                        mode + 1
                    ));
                }
            }
        }
    }

    let elapsed = started.elapsed().as_secs_f64();
    if elapsed >= 120.0 {
        failures.push(format!("runtime {elapsed:.1}s exceeds 120s"));
    }
    report(3, "spectral exponent", &failures);
}

/// Criterion 4: the Nyström kernel route and the string route agree to
/// relative 1e-8 on all 256 eigenvalues for Dirichlet, Robin π/4, and the
/// right-Neumann mixed case; the constructive inverse meets both Robin
/// conditions to 1e-10.
#[test]
fn criterion_4_route_cross_validation() {
    let _guard = serial();
    let mut failures = Vec::new();
    let nu = atomize(&IfsMeasure::cantor(0.3, 0.7).unwrap(), 8).unwrap();
    assert_eq!(nu.len(), 256);

    let gammas = [
        BoundaryTuple::dirichlet(),
        BoundaryTuple::new(std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_4).unwrap(),
        BoundaryTuple::new(0.0, std::f64::consts::FRAC_PI_2).unwrap(),
    ];
    for gamma in gammas {
        let string = build_string(&nu, &CdfView::lebesgue(), gamma)
            .unwrap()
            .eigenvalues();
        let kernel = kernel_spectrum(&nu, gamma, nu.len()).unwrap();
        let mut worst = 0.0f64;
        for (a, b) in string.iter().zip(&kernel) {
            worst = worst.max(((a - b) / b).abs());
        }
        if worst > 1e-8 {
            failures.push(format!("{gamma:?}: route discrepancy {worst:e}"));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let g: Vec<f64> = (0..nu.len()).map(|_| rng.gen_range(-3.0..3.0)).collect();
    for gamma in [
        BoundaryTuple::dirichlet(),
        BoundaryTuple::new(0.9, 0.4).unwrap(),
        BoundaryTuple::new(0.0, std::f64::consts::FRAC_PI_2).unwrap(),
        BoundaryTuple::new(std::f64::consts::FRAC_PI_2, 0.7).unwrap(),
    ] {
        let sol = inverse_apply(&g, &nu, gamma).unwrap();
        let (left, right) = sol.boundary_residuals();
        if left.abs() > 1e-10 || right.abs() > 1e-10 {
            failures.push(format!("{gamma:?}: Robin residuals ({left:e}, {right:e})"));
        }
    }

    report(4, "route cross-validation", &failures);
}

/// Criterion 5: exit-time quadrature is exactly 0.25 for Brownian motion on
/// (0,1) from 1/2; jump-chain Monte Carlo with 1e5 paths matches the
/// quadrature within three standard errors on Lebesgue and Cantor speeds;
/// hit-left frequency from x=1/4 lands within three standard errors of 3/4.
/// Runtime under one minute.
#[test]
fn criterion_5_exit_time_formulas() {
    let _guard = serial();
    let started = Instant::now();
    let mut failures = Vec::new();
    let n_paths = 100_000;

    let brownian = ExitProblem::two_sided(0.0, 1.0, 0.5, SpeedMeasure::lebesgue()).unwrap();
    if expected_exit_time(&brownian) != 0.25 {
        failures.push("closed-form quadrature is not exactly 0.25".to_string());
    }

    // Lebesgue speed, discretized for the chain; the exit functional is
    // exact for any speed measure, so quadrature on the same atoms is the
    // reference. The quarter start doubles as the hit-side check.
    let dyadic = atomize(&IfsMeasure::lebesgue_dyadic(), 8).unwrap();
    let start = dyadic.atoms()[dyadic.nearest_atom(0.25)];
    let problem =
        ExitProblem::two_sided(0.0, 1.0, start, SpeedMeasure::Atomic(dyadic.clone())).unwrap();
    let exact = expected_exit_time(&problem);
    let stats = mc_exit_stats(&problem, Simulator::JumpChain, n_paths, 2025).unwrap();
    if (stats.mean - exact).abs() > 3.0 * stats.std_error {
        failures.push(format!(
            "Lebesgue chain mean {} vs {exact} (se {})",
            stats.mean, stats.std_error
        ));
    }
    if (stats.hit_left_fraction - 0.75).abs() > 3.0 * stats.hit_left_std_error {
        failures.push(format!(
            "hit-left {} vs 0.75 (se {})",
            stats.hit_left_fraction, stats.hit_left_std_error
        ));
    }

    let cantor_atoms = atomize(&IfsMeasure::cantor(0.5, 0.5).unwrap(), 8).unwrap();
    let start = cantor_atoms.atoms()[cantor_atoms.nearest_atom(1.0 / 3.0)];
    let problem =
        ExitProblem::two_sided(0.0, 1.0, start, SpeedMeasure::Atomic(cantor_atoms)).unwrap();
    let exact = expected_exit_time(&problem);
    let stats = mc_exit_stats(&problem, Simulator::JumpChain, n_paths, 31_337).unwrap();
    if (stats.mean - exact).abs() > 3.0 * stats.std_error {
        failures.push(format!(
            "Cantor chain mean {} vs {exact} (se {})",
            stats.mean, stats.std_error
        ));
    }

    let elapsed = started.elapsed().as_secs_f64();
    if elapsed >= 60.0 {
        failures.push(format!("runtime {elapsed:.1}s exceeds 60s"));
    }
    report(5, "exit-time formulas", &failures);
}

/// Criterion 6: the exit-time quadrature coincides with the Dirichlet string
/// solution of Δu = −2 at every atom to 1e-8, tying the factor 2 in the
/// Green kernel to the generator being half the operator.
#[test]
fn criterion_6_dynkin_consistency() {
    let _guard = serial();
    let mut failures = Vec::new();
    for (label, measure) in [
        ("cantor", atomize(&IfsMeasure::cantor(0.5, 0.5).unwrap(), 8).unwrap()),
        ("dyadic", atomize(&IfsMeasure::lebesgue_dyadic(), 8).unwrap()),
    ] {
        let string = build_string(&measure, &CdfView::lebesgue(), BoundaryTuple::dirichlet())
            .unwrap();
        let u = string.solve(&vec![-2.0; measure.len()]).unwrap();
        let speed = SpeedMeasure::Atomic(measure.clone());
        let mut worst = 0.0f64;
        for (k, &y) in measure.atoms().iter().enumerate() {
            let problem = ExitProblem::two_sided(0.0, 1.0, y, speed.clone()).unwrap();
            worst = worst.max((expected_exit_time(&problem) - u[k]).abs());
        }
        if worst > 1e-8 {
            failures.push(format!("{label}: max atomwise discrepancy {worst:e}"));
        }
    }
    report(6, "Dynkin consistency", &failures);
}

/// Criterion 7: the periodized Cantor speed measure has walk dimension
/// 2.00 ± 0.05 over radii 4…1024, with consistency gap at most 0.05, in
/// under 30 seconds.
#[test]
fn criterion_7_walk_dimension() {
    let _guard = serial();
    let started = Instant::now();
    let mut failures = Vec::new();

    let base = atomize(&IfsMeasure::cantor(0.5, 0.5).unwrap(), 8).unwrap();
    let speed = SpeedMeasure::Atomic(periodize(&base, 1100.0).unwrap());
    let radii: Vec<f64> = (2..=10).map(|k| 2f64.powi(k)).collect();
    let x = 0.5;
    let report_data = kflab_core::diffusion::walk_dimension(&speed, x, &radii).unwrap();

    if (report_data.exit_slope.slope - 2.0).abs() > 0.05 {
        failures.push(format!("walk dimension {}", report_data.exit_slope.slope));
    }
    if report_data.consistency_gap > 0.05 {
        failures.push(format!("consistency gap {}", report_data.consistency_gap));
    }
    let elapsed = started.elapsed().as_secs_f64();
    if elapsed >= 30.0 {
        failures.push(format!("runtime {elapsed:.1}s exceeds 30s"));
    }
    report(7, "walk dimension of the periodized measure", &failures);
}

/// Criterion 8: for the odd self-similar Cantor extension the transformed
/// walk dimension satisfies |ď_W − a·(1+t)| ≤ 0.08 with a = log2/log3.
#[test]
fn criterion_8_transformed_walk_dimension() {
    let _guard = serial();
    let mut failures = Vec::new();
    let cantor = IfsMeasure::cantor(0.5, 0.5).unwrap();
    let f_ext = extend_selfsimilar(CdfView::from_ifs(cantor.clone()), 3.0, 2.0, true).unwrap();
    let base = atomize(&cantor, 12).unwrap();
    let nu_ext = extend_atomization(&base, 3.0, 2.0, 6, true).unwrap();
    let radii: Vec<f64> = (1..=6).map(|k| 3f64.powi(k)).collect();
    let report_data =
        kflab_core::diffusion::transformed_walk_dimension(&nu_ext, &f_ext, 0.0, &radii).unwrap();

    let a = 2f64.ln() / 3f64.ln();
    if (report_data.growth_exponent.unwrap() - a).abs() > 1e-12 {
        failures.push(format!(
            "growth exponent {} vs {a}",
            report_data.growth_exponent.unwrap()
        ));
    }
    if report_data.consistency_gap > 0.08 {
        failures.push(format!("consistency gap {}", report_data.consistency_gap));
    }
    report(8, "transformed walk dimension", &failures);
}

/// Criterion 9: the property suites run standalone
/// (`cargo test -p kflab-core --test properties`); this test replays one
/// deterministic instance of each property at its stated tolerance.
#[test]
fn criterion_9_property_suites() {
    let _guard = serial();
    let mut failures = Vec::new();

    // Galois laws of the pseudo-inverse.
    let f = CdfView::from_ifs(IfsMeasure::cantor(0.3, 0.7).unwrap());
    for k in 0..=40 {
        let p = k as f64 / 40.0;
        let inv = f.pseudo_inverse(p).unwrap();
        if f.eval(inv) < p - 1e-9 {
            failures.push(format!("Galois: F(inv({p})) = {} < {p}", f.eval(inv)));
        }
        let x = k as f64 / 40.0;
        if f.pseudo_inverse(f.eval(x)).unwrap() > x + 1e-9 {
            failures.push(format!("Galois: inv(F({x})) exceeds {x}"));
        }
    }

    // Weighted matrix symmetry.
    let nu = atomize(&IfsMeasure::cantor(0.3, 0.7).unwrap(), 6).unwrap();
    let f_mu = CdfView::from_ifs(IfsMeasure::cantor(0.5, 0.5).unwrap());
    let s = build_string(&nu, &f_mu, BoundaryTuple::new(0.3, 0.6).unwrap()).unwrap();
    for k in 0..s.len() - 1 {
        let a = s.weights()[k] * s.matrix_entry(k, k + 1);
        let b = s.weights()[k + 1] * s.matrix_entry(k + 1, k);
        if ((a - b) / b).abs() > 1e-14 {
            failures.push(format!("weighted symmetry row {k}: {a} vs {b}"));
        }
    }

    // Discrete Gauss-Green under Neumann.
    let s = build_string(&nu, &f_mu, BoundaryTuple::neumann()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = nu.len();
    let fv: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let gv: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let lhs: f64 = s
        .apply(&fv)
        .iter()
        .zip(&gv)
        .zip(s.weights())
        .map(|((df, g), w)| w * df * g)
        .sum();
    let rhs: f64 = -(0..n - 1)
        .map(|k| (fv[k + 1] - fv[k]) * (gv[k + 1] - gv[k]) / s.gaps()[k + 1])
        .sum::<f64>();
    if (lhs - rhs).abs() > 1e-9 {
        failures.push(format!("Gauss-Green: {lhs} vs {rhs}"));
    }

    // Occupation identity within 2%.
    let dt = 1e-4f64;
    let eps = kflab_core::diffusion::DEFAULT_EPSILON_MULTIPLIER * dt.sqrt();
    let path = kflab_core::diffusion::sample_bm(dt, 1.0, 0.0, 7171).unwrap();
    let (lo, hi) = path
        .positions()
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
    let grid: Vec<f64> = (0..400)
        .map(|k| lo - 2.0 * eps + (hi - lo + 4.0 * eps) * k as f64 / 399.0)
        .collect();
    let profile = kflab_core::diffusion::local_time_profile(&path, &grid, eps, &[1.0]).unwrap();
    let integral = profile.occupation_integral(0);
    if (integral - 1.0).abs() > 0.02 {
        failures.push(format!("occupation integral {integral}"));
    }

    // Eigenvector orthonormality at 1e-10.
    let spec = build_string(&nu, &f_mu, BoundaryTuple::dirichlet())
        .unwrap()
        .eigensolve();
    for a in (1..=spec.len()).step_by(11) {
        for b in (a..=spec.len()).step_by(7) {
            let dot: f64 = spec
                .eigenvector(a)
                .iter()
                .zip(spec.eigenvector(b))
                .zip(spec.weights())
                .map(|((x, y), w)| w * x * y)
                .sum();
            let expect = if a == b { 1.0 } else { 0.0 };
            if (dot - expect).abs() > 1e-10 {
                failures.push(format!("orthonormality ({a},{b}): {dot}"));
            }
        }
    }

    // Two-route pushforward equality at 1e-10 (symmetric pair).
    let cantor = IfsMeasure::cantor(0.5, 0.5).unwrap();
    let f_sym = CdfView::from_ifs(cantor.clone());
    let image_ifs = kflab_core::transform::tilde_ifs(&cantor, &f_sym).unwrap();
    for depth in [4u32, 8] {
        let via_image = atomize(&image_ifs, depth).unwrap();
        let via_push = pushforward(&atomize(&cantor, depth).unwrap(), &f_sym).image;
        for (a, b) in via_image.atoms().iter().zip(via_push.atoms()) {
            if (a - b).abs() > 1e-10 {
                failures.push(format!("two-route atoms at depth {depth}: {a} vs {b}"));
            }
        }
    }

    // Bitwise reproducibility under fixed seeds.
    let speed = SpeedMeasure::Atomic(atomize(&IfsMeasure::lebesgue_dyadic(), 5).unwrap());
    let problem = ExitProblem::two_sided(0.0, 1.0, 0.515625, speed).unwrap();
    let s1 = mc_exit_stats(&problem, Simulator::JumpChain, 500, 5).unwrap();
    let s2 = mc_exit_stats(&problem, Simulator::JumpChain, 500, 5).unwrap();
    if s1.mean != s2.mean || s1.hit_left_fraction != s2.hit_left_fraction {
        failures.push("fixed seed did not reproduce Monte Carlo output".to_string());
    }

    report(9, "property suites", &failures);
}
