//! Input-space pictures of subspace bases.
//!
//! Each retained basis vector of an instance subspace is described by its
//! inner products with the K view embeddings. The same weights combine the K
//! raw augmented inputs into one input-space vector per basis.

use serde::{Deserialize, Serialize};

use crate::data::{make_batch, AugmentationConfig, Instance};
use crate::encoder::{embed, Mlp};
use crate::error::Result;
use crate::scalar::dot;
use crate::subspace::{build_subspace, TruncationPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisComponent {
    pub index: usize,
    pub eigenvalue: f64,
    /// `⟨w_i, v_k⟩` for each view k. Squares sum to the eigenvalue.
    pub weights: Vec<f64>,
    /// Unit-norm eigenvector of the view Gram matrix: `weights / √λ_i`.
    pub coefficients: Vec<f64>,
    /// `Σ_k weights_k · x_k / Σ_k |weights_k|` over the raw augmented inputs.
    pub synthesized: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisComposition {
    pub instance_id: u64,
    pub k_shots: usize,
    pub rho: f64,
    pub spectrum: Vec<f64>,
    pub total_eigenmass: f64,
    /// Retained weight energy over total eigenmass; at least `rho`.
    pub energy_ratio: f64,
    pub components: Vec<BasisComponent>,
}

/// Embeds K augmentations of `instance` with `encoder` and describes every
/// retained basis of the resulting subspace.
pub fn compose_basis(
    encoder: &Mlp<f64>,
    instance: &Instance,
    augmentation: &AugmentationConfig,
    policy: &TruncationPolicy<f64>,
    round: u64,
) -> Result<BasisComposition> {
    let batch = make_batch([instance], augmentation, round)?;
    let views = &batch[0].key_views;
    let embeddings = views
        .iter()
        .map(|x| embed(encoder, x))
        .collect::<Result<Vec<_>>>()?;
    let subspace = build_subspace(&embeddings, policy, instance.id)?;

    let mut energy = 0.0;
    let components = (0..subspace.rank())
        .map(|i| {
            let basis = subspace.basis_vector(i);
            let weights: Vec<f64> = embeddings
                .iter()
                .map(|v| dot(basis, v.as_slice()))
                .collect();
            let eigenvalue = subspace.retained_eigenvalues()[i];
            energy += weights.iter().map(|w| w * w).sum::<f64>();
            let root = eigenvalue.sqrt();
            let l1: f64 = weights.iter().map(|w| w.abs()).sum();
            let mut synthesized = vec![0.0; instance.features.len()];
            for (w, x) in weights.iter().zip(views) {
                for (s, xv) in synthesized.iter_mut().zip(x) {
                    *s += w / l1 * xv;
                }
            }
            BasisComponent {
                index: i,
                eigenvalue,
                coefficients: weights.iter().map(|w| w / root).collect(),
                weights,
                synthesized,
            }
        })
        .collect();

    Ok(BasisComposition {
        instance_id: instance.id,
        k_shots: augmentation.k_shots,
        rho: policy.rho,
        spectrum: subspace.spectrum().to_vec(),
        total_eigenmass: subspace.total_eigenmass(),
        energy_ratio: energy / subspace.total_eigenmass(),
        components,
    })
}
