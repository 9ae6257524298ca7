//! Unitary dilation of a four-port device.
//!
//! The 2x2 input-output map `(T, A)` is not unitary on its own; the device
//! modes carry the missing quanta. Stacking two photonic modes on top of
//! two device modes gives the 4x4 unitary
//!
//! ```text
//! Lambda = [      T            A      ]
//!          [ -D S inv(C) T   D C inv(S) A ]
//! ```
//!
//! with `C = sqrt(T T†)`, `S = sqrt(A A†)` (then `C² + S² = I` and the two
//! commute) and a free unitary gauge `D` on the device rows, identity by
//! default. The inverse-carrying products are computed as polar unitary
//! factors, `inv(C) T = polar_unitary(T)` and `inv(S) A = polar_unitary(A)`,
//! which stay defined when a channel is perfectly transmitting or perfectly
//! absorbing and `C` or `S` loses rank.
//!
//! The Hermitian generator `Phi` with `exp(-i Phi) = Lambda` comes from the
//! principal unitary logarithm. In the lossless limit `A = 0`, `Lambda`
//! collapses to `block-diag(T, I)` and `Phi` to `block-diag(V, 0)` with
//! `exp(-iV) = T`.

use thiserror::Error;

use crate::device::{self, DeviceMatrices};
use crate::smallmat::{
    block_4x4, dagger, hermitian_sqrt, identity, is_unitary, polar_unitary, unitary_deviation,
    unitary_log, CMat, SmallMatError,
};

/// Devices must satisfy the energy constraint at this tolerance before
/// embedding.
pub const DEVICE_TOL: f64 = 1e-10;
/// A supplied gauge matrix must be unitary at this tolerance.
pub const GAUGE_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("device fails the energy constraint (residual {residual:.3e} > {tol:.3e})")]
    InvalidDevice { residual: f64, tol: f64 },
    #[error("gauge matrix is not unitary (max |D†D - I| = {dev:.3e})")]
    NonUnitaryGauge { dev: f64 },
    #[error("transmission matrix is not unitary (max |T†T - I| = {dev:.3e}); no lossless generator exists")]
    NotUnitary { dev: f64 },
    #[error(transparent)]
    SmallMat(#[from] SmallMatError),
}

/// The 4x4 unitary dilation of a device, with its block data and generator.
#[derive(Clone, Debug)]
pub struct LambdaEmbedding {
    /// 4x4 unitary; rows 1,2 are the photonic output modes, rows 3,4 the
    /// device modes. The upper blocks are `T` and `A` copied verbatim.
    pub lambda: CMat,
    /// `sqrt(T T†)`, positive Hermitian.
    pub c: CMat,
    /// `sqrt(A A†)`, positive Hermitian.
    pub s: CMat,
    /// Gauge actually applied to the device rows.
    pub d: CMat,
    /// Hermitian generator with `exp(-i Phi) = Lambda`, eigenvalues in
    /// (-pi, pi].
    pub phi: CMat,
    /// True when an eigenphase of `Lambda` sits within 1e-8 of pi, where
    /// the principal branch of the logarithm is discontinuous.
    pub phi_near_branch_cut: bool,
}

/// Hermitian generator of a lossless device.
#[derive(Clone, Debug)]
pub struct LosslessGenerator {
    /// 2x2 Hermitian with `exp(-iV) = T`.
    pub v: CMat,
}

/// Dilate a validated device into its 4x4 unitary.
///
/// `gauge` rotates the device rows; `None` means identity, matching the
/// convention that the free U(2) factor is omitted. The photonic blocks of
/// the result are the input matrices copied bit for bit.
pub fn embed(d: &DeviceMatrices, gauge: Option<&CMat>) -> Result<LambdaEmbedding, EmbedError> {
    let report = device::validate(d, DEVICE_TOL);
    if !report.pass {
        return Err(EmbedError::InvalidDevice {
            residual: report.residual,
            tol: report.tol,
        });
    }
    let gauge = match gauge {
        Some(g) => {
            if !is_unitary(g, GAUGE_TOL) {
                return Err(EmbedError::NonUnitaryGauge {
                    dev: unitary_deviation(g),
                });
            }
            g.clone()
        }
        None => identity(2),
    };
    let c = hermitian_sqrt(&d.t.dot(&dagger(&d.t)))?;
    let s = hermitian_sqrt(&d.a.dot(&dagger(&d.a)))?;
    let e_t = polar_unitary(&d.t);
    let e_a = polar_unitary(&d.a);
    let lower_left = gauge.dot(&s).dot(&e_t).mapv(|z| -z);
    let lower_right = gauge.dot(&c).dot(&e_a);
    let lambda = block_4x4(&d.t, &d.a, &lower_left, &lower_right);
    let log = unitary_log(&lambda)?;
    Ok(LambdaEmbedding {
        lambda,
        c,
        s,
        d: gauge,
        phi: log.matrix,
        phi_near_branch_cut: log.near_branch_cut,
    })
}

/// Hermitian generator of a lossless (unitary) transmission matrix, using
/// the same principal branch as the full embedding.
pub fn lossless_generator(t: &CMat) -> Result<LosslessGenerator, EmbedError> {
    if !is_unitary(t, GAUGE_TOL) {
        return Err(EmbedError::NotUnitary {
            dev: unitary_deviation(t),
        });
    }
    let log = unitary_log(t)?;
    Ok(LosslessGenerator { v: log.matrix })
}
