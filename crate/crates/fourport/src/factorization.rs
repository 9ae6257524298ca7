//! Decomposition of the 4x4 unitary into two-mode blocks.
//!
//! Modes are numbered 1,2 for the photonic channels and 3,4 for the device
//! channels. A chain lists its blocks left to right in operator-product
//! order: the rightmost block acts first, so composing multiplies the
//! expanded 4x4 matrices in listed order.
//!
//! Two chain shapes are produced for a lossy device:
//!
//! - the eight-block chain conjugates the block-rotation core by the
//!   constant mixer `P = (1/sqrt 2)[[1, i],[i, 1]]` on mode pairs (1,3) and
//!   (2,4); its composition equals the identity-gauge embedding for every
//!   valid device;
//! - the five-block chain diagonalizes `C` and `S` in their common
//!   eigenbasis `W` and uses plane rotations on (1,3) and (2,4). Five
//!   blocks cannot reproduce the identity-gauge embedding when `T T†` is
//!   not diagonal: every such product has a lower-left block with diagonal
//!   row Gram matrix, while the target's is `S²`. The chain therefore
//!   records the device-row gauge it does reproduce (`W†`, which is the
//!   identity whenever `T T†` is diagonal), and [`compose_chain`] of the
//!   result equals `embed(d, Some(&chain.gauge))` for every valid device.
//!
//! A lossless (unitary) transmission matrix additionally factors into five
//! elementary exponentials: a global phase, an amplitude factor on each
//! mode, and one transfer in each direction. Those factors only become
//! matrices after lifting to a photon-number sector, so they are returned
//! as generators.

use num_complex::Complex64;
use serde_json::json;
use thiserror::Error;

use crate::device::{self, DeviceMatrices};
use crate::smallmat::{
    dagger, hermitian_sqrt, identity, is_unitary, joint_eigh, phase_fix_columns, polar_unitary,
    unitary_deviation, CMat, SmallMatError,
};

/// Devices must satisfy the energy constraint at this tolerance before
/// factorization.
pub const DEVICE_TOL: f64 = 1e-10;
/// Below this transmittance magnitude the lossless factorization has no
/// finite amplitude parameter.
pub const TRANSMITTANCE_FLOOR: f64 = 1e-12;
/// Eigenvalue gaps below this count as ties when ordering the common
/// eigenbasis. Matrix products leave ulp-level asymmetry on the diagonal
/// even when `T T†` is scalar in exact arithmetic (the multiply kernels
/// accumulate with fused ops), and the descending reorder must not fire on
/// that noise: a spurious swap turns the recorded gauge into a permutation.
/// Eigenvalues of `C` live in `[0, 1]`, so an absolute window is adequate.
pub const ORDER_TIE_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum FactorError {
    #[error("device fails the energy constraint (residual {residual:.3e} > {tol:.3e})")]
    InvalidDevice { residual: f64, tol: f64 },
    #[error("matrix is not unitary (max |U†U - I| = {dev:.3e})")]
    NotUnitary { dev: f64 },
    #[error("transmittance magnitude {magnitude:.3e} is below {TRANSMITTANCE_FLOOR:.0e}; the amplitude factor diverges")]
    ZeroTransmittance { magnitude: f64 },
    #[error(transparent)]
    SmallMat(#[from] SmallMatError),
}

/// A 2x2 unitary acting on one pair of the four modes.
#[derive(Clone, Debug)]
pub struct TwoModeBlock {
    /// 1-based mode pair, each in {1, 2, 3, 4}, distinct.
    pub modes: (usize, usize),
    /// The 2x2 unitary applied to that pair.
    pub u: CMat,
    pub label: String,
}

impl TwoModeBlock {
    pub fn new(modes: (usize, usize), u: CMat, label: &str) -> Self {
        assert!(
            (1..=4).contains(&modes.0) && (1..=4).contains(&modes.1) && modes.0 != modes.1,
            "mode pair must be two distinct modes in 1..=4"
        );
        assert_eq!(u.dim(), (2, 2));
        Self {
            modes,
            u,
            label: label.to_string(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChainKind {
    Five,
    Eight,
}

/// An ordered chain of two-mode blocks factoring one device's 4x4 unitary.
#[derive(Clone, Debug)]
pub struct FactorChain {
    /// Blocks left to right in operator order; the last listed acts first.
    pub blocks: Vec<TwoModeBlock>,
    pub kind: ChainKind,
    /// Device-row gauge reproduced by this chain: [`compose_chain`] equals
    /// the embedding with this gauge. Identity for eight-block chains and
    /// for five-block chains of devices with diagonal `T T†`.
    pub gauge: CMat,
}

/// One exponential factor of the lossless decomposition, kept as a 2x2
/// generator `G`; the factor acts as `exp` of the corresponding ladder
/// operator sum, and at the one-photon level as the plain `exp(G)`.
#[derive(Clone, Debug)]
pub struct LosslessFactor {
    pub generator: CMat,
    pub label: String,
}

/// The five-exponential factorization of a lossless transmission matrix
/// `T = e^(i phi) [[t, r], [-conj(r), conj(t)]]`.
#[derive(Clone, Debug)]
pub struct LosslessChain {
    /// Exactly five factors, listed left to right in product order.
    pub factors: Vec<LosslessFactor>,
    pub phi: f64,
    pub t: Complex64,
    pub r: Complex64,
}

/// Expand a two-mode block to the full 4x4 matrix (identity on the other
/// two modes).
pub fn expand_block(b: &TwoModeBlock) -> CMat {
    let mut m = identity(4);
    let (i, j) = (b.modes.0 - 1, b.modes.1 - 1);
    m[[i, i]] = b.u[[0, 0]];
    m[[i, j]] = b.u[[0, 1]];
    m[[j, i]] = b.u[[1, 0]];
    m[[j, j]] = b.u[[1, 1]];
    m
}

/// Multiply the expanded blocks in listed order (so the last listed block
/// acts first on a state). The empty chain composes to the identity.
pub fn compose_chain(chain: &FactorChain) -> CMat {
    chain
        .blocks
        .iter()
        .fold(identity(4), |acc, b| acc.dot(&expand_block(b)))
}

/// The constant mixer `P = (1/sqrt 2) [[1, i], [i, 1]]`.
pub fn p_matrix() -> CMat {
    let u = std::f64::consts::FRAC_1_SQRT_2;
    let mut p = CMat::zeros((2, 2));
    p[[0, 0]] = Complex64::new(u, 0.0);
    p[[0, 1]] = Complex64::new(0.0, u);
    p[[1, 0]] = Complex64::new(0.0, u);
    p[[1, 1]] = Complex64::new(u, 0.0);
    p
}

struct DeviceFactors {
    c: CMat,
    s: CMat,
    e_t: CMat,
    e_a: CMat,
}

fn device_factors(d: &DeviceMatrices) -> Result<DeviceFactors, FactorError> {
    let report = device::validate(d, DEVICE_TOL);
    if !report.pass {
        return Err(FactorError::InvalidDevice {
            residual: report.residual,
            tol: report.tol,
        });
    }
    Ok(DeviceFactors {
        c: hermitian_sqrt(&d.t.dot(&dagger(&d.t)))?,
        s: hermitian_sqrt(&d.a.dot(&dagger(&d.a)))?,
        e_t: polar_unitary(&d.t),
        e_a: polar_unitary(&d.a),
    })
}

/// Factor a device into five two-mode blocks:
/// `[D† (1,2)] [rot(th1) (1,3)] [rot(th2) (2,4)] [D C^-1 T (1,2)] [D S^-1 A (3,4)]`
/// with `D = W†` for `W` the common eigenbasis of `C` and `S`, and
/// `cos(th_i), sin(th_i)` their paired eigenvalues in descending `C` order.
///
/// The composition equals the embedding with device-row gauge
/// `chain.gauge = D`; see the module docs for why the identity gauge is out
/// of reach of five blocks when `T T†` is not diagonal.
pub fn factor_five(d: &DeviceMatrices) -> Result<FactorChain, FactorError> {
    let f = device_factors(d)?;
    let mut w = joint_eigh(&f.c, &f.s);
    let cd = dagger(&w).dot(&f.c).dot(&w);
    let sd = dagger(&w).dot(&f.s).dot(&w);
    let mut pairs = [
        (cd[[0, 0]].re.max(0.0), sd[[0, 0]].re.max(0.0)),
        (cd[[1, 1]].re.max(0.0), sd[[1, 1]].re.max(0.0)),
    ];
    if pairs[1].0 > pairs[0].0 + ORDER_TIE_TOL {
        pairs.swap(0, 1);
        for row in 0..2 {
            let tmp = w[[row, 0]];
            w[[row, 0]] = w[[row, 1]];
            w[[row, 1]] = tmp;
        }
    }
    phase_fix_columns(&mut w);
    let dm = dagger(&w);

    let rot = |c: f64, s: f64| {
        let mut m = CMat::zeros((2, 2));
        m[[0, 0]] = Complex64::new(c, 0.0);
        m[[0, 1]] = Complex64::new(s, 0.0);
        m[[1, 0]] = Complex64::new(-s, 0.0);
        m[[1, 1]] = Complex64::new(c, 0.0);
        m
    };

    let blocks = vec![
        TwoModeBlock::new((1, 2), w.clone(), "Ddag"),
        TwoModeBlock::new((1, 3), rot(pairs[0].0, pairs[0].1), "R(theta1)"),
        TwoModeBlock::new((2, 4), rot(pairs[1].0, pairs[1].1), "R(theta2)"),
        TwoModeBlock::new((1, 2), dm.dot(&f.e_t), "D*CinvT"),
        TwoModeBlock::new((3, 4), dm.dot(&f.e_a), "D*SinvA"),
    ];
    Ok(FactorChain {
        blocks,
        kind: ChainKind::Five,
        gauge: dm,
    })
}

/// Factor a device into eight two-mode blocks:
/// `[P† (1,3)] [P† (2,4)] [(C+iS) (3,4)] [(C-iS) (1,2)] [P (2,4)] [P (1,3)] [S^-1 A (3,4)] [C^-1 T (1,2)]`.
///
/// The composition equals the identity-gauge embedding for every valid
/// device; no gauge bookkeeping is needed.
pub fn factor_eight(d: &DeviceMatrices) -> Result<FactorChain, FactorError> {
    let f = device_factors(d)?;
    let p = p_matrix();
    let pd = dagger(&p);
    let c_plus = &f.c + &f.s.mapv(|z| z * Complex64::new(0.0, 1.0));
    let c_minus = &f.c + &f.s.mapv(|z| z * Complex64::new(0.0, -1.0));
    let blocks = vec![
        TwoModeBlock::new((1, 3), pd.clone(), "Pdag"),
        TwoModeBlock::new((2, 4), pd, "Pdag"),
        TwoModeBlock::new((3, 4), c_plus, "C+iS"),
        TwoModeBlock::new((1, 2), c_minus, "C-iS"),
        TwoModeBlock::new((2, 4), p.clone(), "P"),
        TwoModeBlock::new((1, 3), p, "P"),
        TwoModeBlock::new((3, 4), f.e_a, "SinvA"),
        TwoModeBlock::new((1, 2), f.e_t, "CinvT"),
    ];
    Ok(FactorChain {
        blocks,
        kind: ChainKind::Eight,
        gauge: identity(2),
    })
}

/// Factor a lossless transmission matrix into five elementary exponential
/// generators, listed left to right in product order: global phase,
/// amplitude on mode 1, transfer from mode 1 to 2, transfer from mode 2 to
/// 1, amplitude on mode 2.
///
/// Writing `T = e^(i phi) [[t, r], [-conj(r), conj(t)]]` with
/// `phi = arg(det T) / 2`, the generators are `i phi I`, `ln(t) E11`,
/// `-conj(r) E21`, `r E12`, and `-ln(t) E22`. Multiplying their plain 2x2
/// exponentials in listed order reproduces `T`; lifting each generator to a
/// photon-number sector and multiplying reproduces the sector unitary of
/// the generator of `T`.
pub fn factor_lossless(t_matrix: &CMat) -> Result<LosslessChain, FactorError> {
    if !is_unitary(t_matrix, 1e-10) {
        return Err(FactorError::NotUnitary {
            dev: unitary_deviation(t_matrix),
        });
    }
    let det = t_matrix[[0, 0]] * t_matrix[[1, 1]] - t_matrix[[0, 1]] * t_matrix[[1, 0]];
    let phi = det.arg() / 2.0;
    let phase = Complex64::from_polar(1.0, -phi);
    let t = t_matrix[[0, 0]] * phase;
    let r = t_matrix[[0, 1]] * phase;
    if t.norm() < TRANSMITTANCE_FLOOR {
        return Err(FactorError::ZeroTransmittance { magnitude: t.norm() });
    }
    let ln_t = t.ln();

    let gen = |g11: Complex64, g12: Complex64, g21: Complex64, g22: Complex64| {
        let mut m = CMat::zeros((2, 2));
        m[[0, 0]] = g11;
        m[[0, 1]] = g12;
        m[[1, 0]] = g21;
        m[[1, 1]] = g22;
        m
    };
    let zero = Complex64::new(0.0, 0.0);
    let i_phi = Complex64::new(0.0, phi);
    let factors = vec![
        LosslessFactor {
            generator: gen(i_phi, zero, zero, i_phi),
            label: "phase".to_string(),
        },
        LosslessFactor {
            generator: gen(ln_t, zero, zero, zero),
            label: "amp(1)".to_string(),
        },
        LosslessFactor {
            generator: gen(zero, zero, -r.conj(), zero),
            label: "lower(2<-1)".to_string(),
        },
        LosslessFactor {
            generator: gen(zero, r, zero, zero),
            label: "raise(1<-2)".to_string(),
        },
        LosslessFactor {
            generator: gen(zero, zero, zero, -ln_t),
            label: "amp(2)".to_string(),
        },
    ];
    Ok(LosslessChain { factors, phi, t, r })
}

/// Serialize a chain as a JSON netlist: a list of
/// `{"modes": [i, j], "label": ..., "U": ...}` in chain order, matrices as
/// row-major `[re, im]` pairs.
pub fn netlist_json(chain: &FactorChain) -> serde_json::Value {
    serde_json::Value::Array(
        chain
            .blocks
            .iter()
            .map(|b| {
                json!({
                    "modes": [b.modes.0, b.modes.1],
                    "label": b.label,
                    "U": device::mat22_to_pairs(&b.u),
                })
            })
            .collect(),
    )
}
