//! Coherent-state transformation through a four-port device.
//!
//! Coherent states stay coherent under the embedding: an input with
//! amplitudes `gamma` on the four modes exits with amplitudes
//! `lambda = Lambda gamma`, and the reduced field state is the pure
//! coherent state with the first two components. The map is linear and,
//! because the embedding is unitary, preserves the total mean excitation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::embedding::LambdaEmbedding;

/// Coherent amplitudes of the four modes, light modes first.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct CoherentVector(pub [Complex64; 4]);

impl CoherentVector {
    /// Total mean excitation number across all four modes.
    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|g| g.norm_sqr()).sum()
    }

    /// The two outgoing light-mode amplitudes; the device components are
    /// dropped when the device is traced out.
    pub fn field(&self) -> (Complex64, Complex64) {
        (self.0[0], self.0[1])
    }
}

/// Map coherent amplitudes through the embedding: `lambda = Lambda gamma`.
///
/// All four components are reported. The field pair alone describes the
/// outgoing light; the device pair feeds cross-checks against the brute
/// force evolution.
pub fn transform_coherent(emb: &LambdaEmbedding, gamma: &CoherentVector) -> CoherentVector {
    let mut out = [Complex64::default(); 4];
    for (mu, slot) in out.iter_mut().enumerate() {
        *slot = (0..4).map(|nu| emb.lambda[[mu, nu]] * gamma.0[nu]).sum();
    }
    CoherentVector(out)
}

/// Serialization shape for one coherent transformation, as emitted by the
/// CLI. Amplitudes appear as `[re, im]` pairs in mode order.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoherentResult {
    pub gamma: [[f64; 2]; 4],
    pub lambda: [[f64; 2]; 4],
}

fn pairs(v: &CoherentVector) -> [[f64; 2]; 4] {
    [
        [v.0[0].re, v.0[0].im],
        [v.0[1].re, v.0[1].im],
        [v.0[2].re, v.0[2].im],
        [v.0[3].re, v.0[3].im],
    ]
}

/// Bundle an input and its image into the serialization shape.
pub fn coherent_result(gamma: &CoherentVector, lambda: &CoherentVector) -> CoherentResult {
    CoherentResult {
        gamma: pairs(gamma),
        lambda: pairs(lambda),
    }
}
