//! Phase-space transformation taking the weighted pair `(ν, μ)` to the
//! classical pair `(ν∘F_μ⁻¹, Λ)`.
//!
//! On the atomic level the transformation is a relabeling: atoms move
//! through `F_μ`, weights ride along unchanged, and function samples are
//! permuted by the same index map, which makes the weighted 2-norm isometry
//! exact by construction.

use crate::error::{Error, Result};
use crate::measure::{AffineMap, AtomicMeasure, CdfView, IfsMeasure};

/// Atoms that land within this distance of each other after mapping through
/// `F_μ` are treated as one image atom (plateaus of `F_μ` collapse
/// legitimately distinct preimage atoms).
pub const MERGE_TOL: f64 = 1e-12;

/// Result of pushing an atomic measure through a distribution function.
#[derive(Debug, Clone)]
pub struct PushforwardResult {
    /// The image measure `ν∘F_μ⁻¹`.
    pub image: AtomicMeasure,
    /// `index_map[i]` is the image-atom index that preimage atom `i` landed on.
    pub index_map: Vec<usize>,
}

/// Pushes each atom of `nu` through `f_mu`, merging images closer than
/// [`MERGE_TOL`] with summed weights.
pub fn pushforward(nu: &AtomicMeasure, f_mu: &CdfView) -> PushforwardResult {
    let mut mapped: Vec<f64> = nu.atoms().iter().map(|&y| f_mu.eval(y)).collect();
    // F is monotone; guard against sub-ulp inversions from the evaluator.
    for i in 1..mapped.len() {
        if mapped[i] < mapped[i - 1] {
            mapped[i] = mapped[i - 1];
        }
    }
    let mut atoms = Vec::with_capacity(mapped.len());
    let mut weights: Vec<f64> = Vec::with_capacity(mapped.len());
    let mut index_map = Vec::with_capacity(mapped.len());
    for (i, &z) in mapped.iter().enumerate() {
        if i > 0 && z - mapped[i - 1] <= MERGE_TOL && !atoms.is_empty() {
            let last = weights.len() - 1;
            weights[last] += nu.weights()[i];
            index_map.push(last);
        } else {
            atoms.push(z);
            weights.push(nu.weights()[i]);
            index_map.push(weights.len() - 1);
        }
    }
    let image = AtomicMeasure::new(atoms, weights)
        .expect("monotone mapping with merge keeps atoms strictly increasing");
    PushforwardResult { image, index_map }
}

/// The induced contraction system of the image measure: branch `i` becomes
/// `x ↦ σᵢ·x + F_μ(Sᵢ(0))` with `σᵢ = F_μ(Sᵢ(1)) − F_μ(Sᵢ(0))`, keeping the
/// weights of `nu`. The image measure `ν∘F_μ⁻¹` is the self-similar measure
/// of this system; construction re-checks the open set condition.
pub fn tilde_ifs(nu: &IfsMeasure, f_mu: &CdfView) -> Result<IfsMeasure> {
    let maps = nu
        .maps()
        .iter()
        .map(|map| {
            let lo = f_mu.eval(map.apply(0.0));
            let hi = f_mu.eval(map.apply(1.0));
            if !(hi > lo) {
                return Err(Error::SupportInclusion(format!(
                    "branch image [{}, {}] collapses under F_mu",
                    map.apply(0.0),
                    map.apply(1.0)
                )));
            }
            AffineMap::new(hi - lo, lo)
        })
        .collect::<Result<Vec<_>>>()?;
    IfsMeasure::new(maps, nu.weights().to_vec())
}

/// Direction of the function-space relabeling `φ(f) = f∘F̌_μ⁻¹`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiDirection {
    /// Move samples from the atoms of `ν` to the atoms of `ν∘F_μ⁻¹`.
    Forward,
    /// Move samples back from the image atoms to the `ν`-atoms.
    Inverse,
}

/// Relabels function samples along a pushforward. Forward transport of
/// atoms that merged into one image atom requires the samples to agree
/// there, mirroring functions being constant on plateaus.
pub fn phi_apply(
    samples: &[f64],
    pushforward: &PushforwardResult,
    direction: PhiDirection,
) -> Result<Vec<f64>> {
    let preimage_len = pushforward.index_map.len();
    let image_len = pushforward.image.len();
    match direction {
        PhiDirection::Forward => {
            if samples.len() != preimage_len {
                return Err(Error::ShapeMismatch(format!(
                    "expected {preimage_len} samples on the preimage atoms, got {}",
                    samples.len()
                )));
            }
            let mut out = vec![f64::NAN; image_len];
            for (i, &j) in pushforward.index_map.iter().enumerate() {
                if out[j].is_nan() {
                    out[j] = samples[i];
                } else if (out[j] - samples[i]).abs() > 1e-9 {
                    return Err(Error::ShapeMismatch(format!(
                        "samples {} and {} disagree on a merged plateau atom",
                        out[j], samples[i]
                    )));
                }
            }
            Ok(out)
        }
        PhiDirection::Inverse => {
            if samples.len() != image_len {
                return Err(Error::ShapeMismatch(format!(
                    "expected {image_len} samples on the image atoms, got {}",
                    samples.len()
                )));
            }
            Ok(pushforward.index_map.iter().map(|&j| samples[j]).collect())
        }
    }
}
