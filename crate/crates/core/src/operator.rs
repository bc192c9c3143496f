//! Stieltjes-string discretization of the second-order operator `∂_ν∂_μ`
//! with Robin boundary data, together with two independent spectral routes.
//!
//! For an atomic `ν` with atoms `y₁ < … < y_N` and masses `w`, the operator
//! acts as the weighted second difference in the scale `F_μ`:
//!
//! ```text
//! (Δf)ₖ = [ (f_{k+1} − f_k)/h_k − (f_k − f_{k−1})/h_{k−1} ] / w_k
//! ```
//!
//! with `h` the `F_μ`-increments between neighbouring atoms and the domain
//! endpoints. Robin data enters only through the effective end gaps
//! `h₀ + tan α` and `h_N + tan β`: eliminating the boundary value from
//! `f(0) = tan α·∇_μf(0)` and `∇_μf(0) = (f(y₁) − f(0))/h₀` leaves
//! `∇_μf(0) = f(y₁)/(h₀ + tan α)`. A Neumann end is the `tan → ∞` limit,
//! i.e. a free end, and is kept symbolic so `tan(π/2)` is never evaluated.
//!
//! The second route goes through the closed-form resolvent kernel of the
//! classical operator: the weighted Nyström matrix of `−K_{α,β}` has
//! eigenvalues `−1/λₙ`, which cross-validates the string spectrum.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::linalg::{eigh_tridiagonal, solve_tridiagonal};
use crate::measure::{AtomicMeasure, CdfView};

/// One Robin angle in `[0, π/2]`; `π/2` (Neumann) is a symbolic variant so
/// its tangent is never formed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryCondition {
    /// Angle in `[0, π/2)`; `0` is Dirichlet.
    Robin(f64),
    Neumann,
}

impl BoundaryCondition {
    /// Classifies an angle, snapping values within `1e-12` of `π/2` to the
    /// symbolic Neumann case.
    pub fn from_angle(angle: f64) -> Result<Self> {
        if (angle - FRAC_PI_2).abs() <= 1e-12 {
            return Ok(Self::Neumann);
        }
        if !(0.0..FRAC_PI_2).contains(&angle) {
            return Err(Error::InvalidParameter(format!(
                "boundary angle {angle} outside [0, pi/2]"
            )));
        }
        Ok(Self::Robin(angle))
    }

    pub const DIRICHLET: Self = Self::Robin(0.0);

    pub fn is_neumann(&self) -> bool {
        matches!(self, Self::Neumann)
    }

    /// `tan` of the angle; `None` for Neumann.
    pub fn tan(&self) -> Option<f64> {
        match self {
            Self::Robin(a) => Some(a.tan()),
            Self::Neumann => None,
        }
    }

    /// `(cos, sin)` for boundary-condition residuals; exact at Neumann.
    pub fn cos_sin(&self) -> (f64, f64) {
        match self {
            Self::Robin(a) => (a.cos(), a.sin()),
            Self::Neumann => (0.0, 1.0),
        }
    }

    pub fn angle(&self) -> f64 {
        match self {
            Self::Robin(a) => *a,
            Self::Neumann => FRAC_PI_2,
        }
    }
}

/// Boundary tuple `γ = (α, β)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryTuple {
    pub alpha: BoundaryCondition,
    pub beta: BoundaryCondition,
}

impl BoundaryTuple {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        Ok(Self {
            alpha: BoundaryCondition::from_angle(alpha)?,
            beta: BoundaryCondition::from_angle(beta)?,
        })
    }

    pub fn dirichlet() -> Self {
        Self {
            alpha: BoundaryCondition::DIRICHLET,
            beta: BoundaryCondition::DIRICHLET,
        }
    }

    pub fn neumann() -> Self {
        Self {
            alpha: BoundaryCondition::Neumann,
            beta: BoundaryCondition::Neumann,
        }
    }

    pub fn is_neumann_pair(&self) -> bool {
        self.alpha.is_neumann() && self.beta.is_neumann()
    }
}

/// Weighted tridiagonal discretization of `∂_ν∂_μ` on an atomic `ν`.
#[derive(Debug, Clone)]
pub struct StringSystem {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `F_μ`-increments: `gaps[0]` runs from the left domain endpoint to the
    /// first atom, `gaps[k]` between atoms `k-1` and `k`, `gaps[N]` from the
    /// last atom to the right endpoint.
    gaps: Vec<f64>,
    /// Effective end gaps `h₀ + tan α`, `h_N + tan β`; `None` is a free
    /// (Neumann) end.
    eff_left: Option<f64>,
    eff_right: Option<f64>,
    gamma: BoundaryTuple,
    scale: CdfView,
    domain: (f64, f64),
}

/// Builds the string for `ν` in the scale of `μ` on the unit interval.
pub fn build_string(nu: &AtomicMeasure, f_mu: &CdfView, gamma: BoundaryTuple) -> Result<StringSystem> {
    build_string_on(nu, f_mu, gamma, (0.0, 1.0))
}

/// Same as [`build_string`] over an arbitrary domain interval; used by exit
/// problems posed on subintervals of the line.
pub fn build_string_on(
    nu: &AtomicMeasure,
    f_mu: &CdfView,
    gamma: BoundaryTuple,
    domain: (f64, f64),
) -> Result<StringSystem> {
    let (x0, x1) = domain;
    if !(x0 < x1) {
        return Err(Error::InvalidParameter(format!(
            "degenerate domain ({x0}, {x1})"
        )));
    }
    let nodes = nu.atoms().to_vec();
    if nodes[0] <= x0 || *nodes.last().unwrap() >= x1 {
        return Err(Error::SupportInclusion(format!(
            "atoms must lie strictly inside ({x0}, {x1})"
        )));
    }
    let scale_at: Vec<f64> = nodes.iter().map(|&y| f_mu.eval(y)).collect();
    let mut gaps = Vec::with_capacity(nodes.len() + 1);
    gaps.push(scale_at[0] - f_mu.eval(x0));
    for pair in scale_at.windows(2) {
        gaps.push(pair[1] - pair[0]);
    }
    gaps.push(f_mu.eval(x1) - scale_at[scale_at.len() - 1]);
    for (k, gap) in gaps.iter().enumerate().skip(1).take(nodes.len() - 1) {
        if !(*gap > 0.0) {
            return Err(Error::SupportInclusion(format!(
                "atoms {} and {} are not separated in the F_mu scale",
                k - 1,
                k
            )));
        }
    }
    let eff = |raw: f64, bc: BoundaryCondition| -> Result<Option<f64>> {
        match bc.tan() {
            None => Ok(None),
            Some(t) => {
                let e = raw + t;
                if e > 0.0 {
                    Ok(Some(e))
                } else {
                    Err(Error::SupportInclusion(
                        "boundary atom coincides with a clamped endpoint".to_string(),
                    ))
                }
            }
        }
    };
    let eff_left = eff(gaps[0], gamma.alpha)?;
    let eff_right = eff(gaps[gaps.len() - 1], gamma.beta)?;
    Ok(StringSystem {
        weights: nu.weights().to_vec(),
        nodes,
        gaps,
        eff_left,
        eff_right,
        gamma,
        scale: f_mu.clone(),
        domain,
    })
}

impl StringSystem {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn gaps(&self) -> &[f64] {
        &self.gaps
    }

    pub fn boundary(&self) -> BoundaryTuple {
        self.gamma
    }

    /// Coupling of row `k` towards the left neighbour (or the left boundary
    /// for `k = 0`; zero at a free end).
    fn left_coeff(&self, k: usize) -> f64 {
        if k == 0 {
            self.eff_left.map_or(0.0, |e| 1.0 / e)
        } else {
            1.0 / self.gaps[k]
        }
    }

    fn right_coeff(&self, k: usize) -> f64 {
        if k + 1 == self.len() {
            self.eff_right.map_or(0.0, |e| 1.0 / e)
        } else {
            1.0 / self.gaps[k + 1]
        }
    }

    /// Matrix entry `M[row][col]`; zero off the three diagonals.
    pub fn matrix_entry(&self, row: usize, col: usize) -> f64 {
        if row == col {
            -(self.left_coeff(row) + self.right_coeff(row)) / self.weights[row]
        } else if col + 1 == row {
            self.left_coeff(row) / self.weights[row]
        } else if col == row + 1 {
            self.right_coeff(row) / self.weights[row]
        } else {
            0.0
        }
    }

    /// Applies the operator matrix to node values.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let n = self.len();
        assert_eq!(f.len(), n, "sample vector length mismatch");
        (0..n)
            .map(|k| {
                let right = if k + 1 < n {
                    self.right_coeff(k) * (f[k + 1] - f[k])
                } else {
                    -self.right_coeff(k) * f[k]
                };
                let left = if k > 0 {
                    self.left_coeff(k) * (f[k] - f[k - 1])
                } else {
                    self.left_coeff(k) * f[k]
                };
                (right - left) / self.weights[k]
            })
            .collect()
    }

    /// Similarity transform `D^{1/2} M D^{-1/2}` with `D = diag(w)`;
    /// symmetric tridiagonal by the weighted symmetry `w_j M_{jk} = w_k M_{kj}`.
    fn symmetrized(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.len();
        let diag: Vec<f64> = (0..n).map(|k| self.matrix_entry(k, k)).collect();
        let off: Vec<f64> = (0..n - 1)
            .map(|k| 1.0 / (self.gaps[k + 1] * (self.weights[k] * self.weights[k + 1]).sqrt()))
            .collect();
        (diag, off)
    }

    /// All eigenvalues, non-increasing (`λ₁ ≥ λ₂ ≥ …`), without eigenvectors;
    /// O(N²), usable at depth-14 scale.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let (diag, off) = self.symmetrized();
        let mut values = eigh_tridiagonal(&diag, &off, false).values;
        values.reverse();
        self.snap_zero_mode(&mut values);
        values
    }

    /// Full spectrum with `w`-orthonormal eigenvectors.
    pub fn eigensolve(&self) -> Spectrum {
        let (diag, off) = self.symmetrized();
        let eig = eigh_tridiagonal(&diag, &off, true);
        let mut values = eig.values;
        let mut vectors = eig.vectors.unwrap();
        values.reverse();
        vectors.reverse();
        self.snap_zero_mode(&mut values);
        let inv_sqrt_w: Vec<f64> = self.weights.iter().map(|w| 1.0 / w.sqrt()).collect();
        for v in &mut vectors {
            for (x, s) in v.iter_mut().zip(&inv_sqrt_w) {
                *x *= s;
            }
            let norm: f64 = v
                .iter()
                .zip(&self.weights)
                .map(|(x, w)| w * x * x)
                .sum::<f64>()
                .sqrt();
            for x in v.iter_mut() {
                *x /= norm;
            }
        }
        Spectrum {
            eigenvalues: values,
            eigenvectors: vectors,
            nodes: self.nodes.clone(),
            weights: self.weights.clone(),
            scale: self.scale.clone(),
            gamma: self.gamma,
            domain: self.domain,
            depth: None,
        }
    }

    /// A spectral zero is exact only in the Neumann-Neumann case; snap the
    /// top eigenvalue there and clamp roundoff-positive values.
    fn snap_zero_mode(&self, values: &mut [f64]) {
        let norm = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let threshold = 1e-10 * norm.max(1.0);
        if let Some(first) = values.first_mut() {
            if self.gamma.is_neumann_pair() && first.abs() <= threshold {
                *first = 0.0;
            }
        }
        for v in values.iter_mut() {
            if *v > 0.0 && *v <= threshold {
                *v = 0.0;
            }
        }
    }

    /// Solves `M f = rhs`; `None` for the Neumann-Neumann kernel direction.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if self.gamma.is_neumann_pair() {
            return Err(Error::NotInvertible);
        }
        let n = self.len();
        let diag: Vec<f64> = (0..n).map(|k| self.matrix_entry(k, k)).collect();
        let lower: Vec<f64> = (1..n).map(|k| self.matrix_entry(k, k - 1)).collect();
        let upper: Vec<f64> = (0..n - 1).map(|k| self.matrix_entry(k, k + 1)).collect();
        solve_tridiagonal(&lower, &diag, &upper, rhs)
            .ok_or_else(|| Error::InvalidParameter("singular string system".to_string()))
    }
}

/// Eigenvalues and `w`-orthonormal eigenvectors of a string system.
#[derive(Debug, Clone)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<Vec<f64>>,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    scale: CdfView,
    gamma: BoundaryTuple,
    domain: (f64, f64),
    depth: Option<u32>,
}

impl Spectrum {
    /// Non-increasing eigenvalues `λ₁ ≥ λ₂ ≥ …` (all `≤ 0`).
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Node values of the `n`-th eigenfunction, 1-based.
    pub fn eigenvector(&self, n: usize) -> &[f64] {
        &self.eigenvectors[n - 1]
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn boundary(&self) -> BoundaryTuple {
        self.gamma
    }

    pub fn depth(&self) -> Option<u32> {
        self.depth
    }

    pub fn set_depth(&mut self, depth: u32) {
        self.depth = Some(depth);
    }

    /// Extends the `n`-th eigenfunction (1-based) from the nodes to arbitrary
    /// points through the defining integral representation with
    /// `g = λₙ fₙ`: the result is linear in `F_μ` across the gaps of
    /// `supp(ν)` and reproduces the node values.
    pub fn reconstruct(&self, n: usize, grid: &[f64]) -> Result<Vec<f64>> {
        if n == 0 || n > self.len() {
            return Err(Error::InvalidParameter(format!(
                "mode index {n} outside 1..={}",
                self.len()
            )));
        }
        let lambda = self.eigenvalues[n - 1];
        let f = &self.eigenvectors[n - 1];
        let scale0 = self.scale.eval(self.domain.0);
        let scale_at: Vec<f64> = self.nodes.iter().map(|&y| self.scale.eval(y)).collect();

        // a = f(x0), b = first derivative at x0, recovered from the boundary
        // condition and the first node value.
        let first_gap = scale_at[0] - scale0;
        let (a, b) = match self.gamma.alpha.tan() {
            None => (f[0], 0.0),
            Some(t) => {
                let b = f[0] / (t + first_gap);
                (b * t, b)
            }
        };

        // Prefix sums for sum_{y_k <= x} (F(x) - F(y_k)) * lambda * f_k * w_k.
        let n_nodes = self.nodes.len();
        let mut coeff = Vec::with_capacity(n_nodes + 1);
        let mut moment = Vec::with_capacity(n_nodes + 1);
        coeff.push(0.0);
        moment.push(0.0);
        for k in 0..n_nodes {
            let c = lambda * f[k] * self.weights[k];
            coeff.push(coeff[k] + c);
            moment.push(moment[k] + c * scale_at[k]);
        }

        Ok(grid
            .iter()
            .map(|&x| {
                let fx = self.scale.eval(x);
                let k = self.nodes.partition_point(|&y| y <= x);
                a + b * (fx - scale0) + fx * coeff[k] - moment[k]
            })
            .collect())
    }
}

/// Solution of the classical inverse problem `∂_ν∂_x f = g` under Robin data.
#[derive(Debug, Clone)]
pub struct InverseSolution {
    atoms: Vec<f64>,
    weighted_g: Vec<f64>,
    /// `f(0)` and `∇f(0)`.
    pub a: f64,
    pub b: f64,
    gamma: BoundaryTuple,
}

/// Constructive inverse for the classical scale (`μ = Λ`):
/// `f(x) = a + b·x + ∫_{[0,x]} (x−y) g(y) dν(y)` with `a`, `b` chosen so both
/// Robin conditions hold. Rejects the Neumann-Neumann pair, whose kernel is
/// the constants.
pub fn inverse_apply(g: &[f64], nu: &AtomicMeasure, gamma: BoundaryTuple) -> Result<InverseSolution> {
    if gamma.is_neumann_pair() {
        return Err(Error::NotInvertible);
    }
    if g.len() != nu.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} samples for {} atoms",
            g.len(),
            nu.len()
        )));
    }
    let weighted_g: Vec<f64> = g.iter().zip(nu.weights()).map(|(v, w)| v * w).collect();
    let total: f64 = weighted_g.iter().sum();
    let first_moment: f64 = weighted_g
        .iter()
        .zip(nu.atoms())
        .map(|(gw, y)| gw * (1.0 - y))
        .sum();
    let (a, b) = match (gamma.alpha.tan(), gamma.beta.tan()) {
        (Some(ta), Some(tb)) => {
            let b = -(tb * total + first_moment) / (1.0 + ta + tb);
            (b * ta, b)
        }
        // Neumann on the right forces the end slope to vanish.
        (Some(ta), None) => {
            let b = -total;
            (b * ta, b)
        }
        // Neumann on the left forces b = 0; the right Robin condition fixes a.
        (None, Some(tb)) => (-(first_moment + tb * total), 0.0),
        (None, None) => unreachable!("rejected above"),
    };
    Ok(InverseSolution {
        atoms: nu.atoms().to_vec(),
        weighted_g,
        a,
        b,
        gamma,
    })
}

impl InverseSolution {
    /// Evaluates `f` anywhere on `[0,1]`.
    pub fn eval(&self, x: f64) -> f64 {
        let mut acc = self.a + self.b * x;
        for (&y, &gw) in self.atoms.iter().zip(&self.weighted_g) {
            if y > x {
                break;
            }
            acc += (x - y) * gw;
        }
        acc
    }

    /// Values at the atoms.
    pub fn atom_values(&self) -> Vec<f64> {
        self.atoms.iter().map(|&y| self.eval(y)).collect()
    }

    /// Residuals of the two Robin conditions
    /// `f(0)cos α − ∇f(0)sin α` and `f(1)cos β + ∇f(1)sin β`.
    pub fn boundary_residuals(&self) -> (f64, f64) {
        let total: f64 = self.weighted_g.iter().sum();
        let f0 = self.a;
        let df0 = self.b;
        let f1 = self.eval(1.0);
        let df1 = self.b + total;
        let (ca, sa) = self.gamma.alpha.cos_sin();
        let (cb, sb) = self.gamma.beta.cos_sin();
        (f0 * ca - df0 * sa, f1 * cb + df1 * sb)
    }
}

/// Closed-form resolvent kernel `K_{α,β}` of the classical operator; at most
/// one angle may be Neumann.
#[derive(Debug, Clone, Copy)]
pub struct ResolventKernel {
    gamma: BoundaryTuple,
}

impl ResolventKernel {
    pub fn new(gamma: BoundaryTuple) -> Result<Self> {
        if gamma.is_neumann_pair() {
            return Err(Error::NotInvertible);
        }
        Ok(Self { gamma })
    }

    /// Normalizer `A_{α,β} = −1/(1 + tan α + tan β)` of the two-Robin case.
    pub fn normalizer(&self) -> Option<f64> {
        match (self.gamma.alpha.tan(), self.gamma.beta.tan()) {
            (Some(ta), Some(tb)) => Some(-1.0 / (1.0 + ta + tb)),
            _ => None,
        }
    }

    /// `K_{α,β}(x, y)`.
    ///
    /// The two-Robin and left-Neumann cases follow the published table; the
    /// right-Neumann case is derived from the constructive inverse (see
    /// `inverse_apply`): `K(x,y) = −(tan α + x) + 1_{[0,x]}(y)(x − y)`. The
    /// printed table's row for that case reproduces the Dirichlet kernel
    /// instead and fails the right boundary condition; the discrepancy is
    /// documented in this module's tests.
    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
            return Err(Error::Domain(format!(
                "kernel arguments ({x}, {y}) outside [0,1]^2"
            )));
        }
        let jump = if y <= x { x - y } else { 0.0 };
        let value = match (self.gamma.alpha.tan(), self.gamma.beta.tan()) {
            (Some(ta), Some(tb)) => {
                let norm = -1.0 / (1.0 + ta + tb);
                norm * (1.0 + tb - y) * (ta + x) + jump
            }
            (Some(ta), None) => -(ta + x) + jump,
            (None, Some(tb)) => (y - 1.0 - tb) + jump,
            (None, None) => unreachable!("rejected at construction"),
        };
        Ok(value)
    }
}

/// Evaluates the resolvent kernel for the given boundary tuple.
pub fn kernel_eval(gamma: BoundaryTuple, x: f64, y: f64) -> Result<f64> {
    ResolventKernel::new(gamma)?.eval(x, y)
}

/// Spectral route through the kernel: forms the weight-conjugated Nyström
/// matrix `−K(y_j, y_k)·√(w_j w_k)`, takes its largest `count` eigenvalues
/// `μₙ` and returns the implied operator eigenvalues `λₙ = −1/μₙ`, ordered
/// to match [`Spectrum`] (non-increasing).
pub fn kernel_spectrum(nu: &AtomicMeasure, gamma: BoundaryTuple, count: usize) -> Result<Vec<f64>> {
    let n = nu.len();
    if count > n {
        return Err(Error::InvalidParameter(format!(
            "requested {count} eigenvalues from {n} atoms"
        )));
    }
    let kernel = ResolventKernel::new(gamma)?;
    let sqrt_w: Vec<f64> = nu.weights().iter().map(|w| w.sqrt()).collect();
    let mut matrix = nalgebra::DMatrix::zeros(n, n);
    for j in 0..n {
        for k in j..n {
            let value = -kernel.eval(nu.atoms()[j], nu.atoms()[k])? * sqrt_w[j] * sqrt_w[k];
            matrix[(j, k)] = value;
            matrix[(k, j)] = value;
        }
    }
    let mut mu = matrix.symmetric_eigen().eigenvalues.as_slice().to_vec();
    mu.sort_by(|a, b| b.total_cmp(a));
    Ok(mu.into_iter().take(count).map(|m| -1.0 / m).collect())
}
