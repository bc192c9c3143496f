//! Dense kernels for the string eigenproblems: an implicit-shift QL
//! eigensolver for symmetric tridiagonal matrices and a Thomas solve for
//! general tridiagonal systems.

/// Eigendecomposition of a symmetric tridiagonal matrix.
pub struct TridiagEigen {
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
    /// Matching eigenvector columns (orthonormal), when requested.
    pub vectors: Option<Vec<Vec<f64>>>,
}

/// Implicit-shift QL with optional eigenvector accumulation.
///
/// `diag` holds the diagonal, `off[i]` couples rows `i` and `i+1`. The QL
/// sweep applies Givens rotations only, so accumulated eigenvectors stay
/// orthonormal to roundoff even for clustered eigenvalues. Cost is O(n²)
/// without vectors and O(n³) with them.
pub fn eigh_tridiagonal(diag: &[f64], off: &[f64], want_vectors: bool) -> TridiagEigen {
    let n = diag.len();
    assert_eq!(off.len() + 1, n.max(1), "off-diagonal length must be n-1");
    let mut d = diag.to_vec();
    if n == 0 {
        return TridiagEigen {
            values: d,
            vectors: want_vectors.then(Vec::new),
        };
    }
    let mut e = off.to_vec();
    e.push(0.0);
    // Column-major accumulation: z[j][k] is component k of column j.
    let mut z: Option<Vec<Vec<f64>>> = want_vectors.then(|| {
        (0..n)
            .map(|j| (0..n).map(|k| if j == k { 1.0 } else { 0.0 }).collect())
            .collect()
    });

    for l in 0..n {
        let mut iterations = 0usize;
        loop {
            let mut m = l;
            while m + 1 < n {
                let scale = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * scale {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iterations += 1;
            assert!(
                iterations <= 64,
                "QL iteration failed to converge at row {l}"
            );

            // Wilkinson-style shift from the leading 2x2 block.
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow_restart = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow_restart = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(z) = z.as_mut() {
                    let (left, right) = z.split_at_mut(i + 1);
                    let zi = &mut left[i];
                    let zi1 = &mut right[0];
                    for k in 0..n {
                        f = zi1[k];
                        zi1[k] = s * zi[k] + c * f;
                        zi[k] = c * zi[k] - s * f;
                    }
                }
            }
            if underflow_restart {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    // Sort ascending, carrying columns along.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let values: Vec<f64> = order.iter().map(|&j| d[j]).collect();
    let vectors = z.map(|z| order.iter().map(|&j| z[j].clone()).collect());
    TridiagEigen { values, vectors }
}

/// Thomas elimination for a general tridiagonal system.
///
/// `lower[k]` is the entry on row `k+1`, column `k`; `upper[k]` sits on row
/// `k`, column `k+1`. No pivoting; callers provide definite systems.
pub fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
) -> Option<Vec<f64>> {
    let n = diag.len();
    assert_eq!(rhs.len(), n);
    if n == 0 {
        return Some(Vec::new());
    }
    assert_eq!(lower.len() + 1, n);
    assert_eq!(upper.len() + 1, n);
    let mut scratch_upper = vec![0.0; n.saturating_sub(1)];
    let mut x = vec![0.0; n];
    if diag[0] == 0.0 {
        return None;
    }
    if n > 1 {
        scratch_upper[0] = upper[0] / diag[0];
    }
    x[0] = rhs[0] / diag[0];
    for k in 1..n {
        let denom = diag[k] - lower[k - 1] * scratch_upper.get(k - 1).copied().unwrap_or(0.0);
        if denom == 0.0 {
            return None;
        }
        if k < n - 1 {
            scratch_upper[k] = upper[k] / denom;
        }
        x[k] = (rhs[k] - lower[k - 1] * x[k - 1]) / denom;
    }
    for k in (0..n - 1).rev() {
        x[k] -= scratch_upper[k] * x[k + 1];
    }
    Some(x)
}
