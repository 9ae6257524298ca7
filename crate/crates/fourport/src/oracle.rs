//! Brute-force verifier for the closed-form state maps.
//!
//! The embedding's generator is quadratic in ladder operators, so it
//! conserves total quanta and acts block-diagonally across fixed-total
//! sectors of the four-mode Fock space. This module builds each sector's
//! Hamiltonian matrix from the standard ladder elements, exponentiates it,
//! and evolves states directly. Nothing here reuses the closed-form
//! amplitude machinery: agreement between the two is evidence, not
//! tautology.
//!
//! The single-quantum sector is the defining representation, so its
//! unitary must reproduce the embedding matrix entry for entry. That check
//! runs before any evolution; a transposed or conjugated operator-ordering
//! convention fails it immediately instead of producing silently mirrored
//! physics.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::coherentmap::CoherentVector;
use crate::embedding::LambdaEmbedding;
use crate::factorization::TwoModeBlock;
use crate::fockmap::{FieldDensity, FockAmplitudes, Occupation4, AMPLITUDE_DROP_TOL};
use crate::smallmat::{cx, matrix_exp, maxabs_diff, unitary_log, CMat, SmallMatError};

/// Largest allowed deviation of the single-quantum sector from the
/// embedding matrix before the convention pin trips.
pub const CONVENTION_TOL: f64 = 1e-10;
/// Total-quanta truncation used for coherent-state cross-checks; the
/// Poisson tail beyond it is far below the fidelity tolerances in use.
pub const COHERENT_TRUNCATION: usize = 12;
/// Taylor tail bound per substep of the sparse exponential apply.
const APPLY_TAIL: f64 = 1e-18;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("total quanta {total} exceeds the configured cap {cap}")]
    CapExceeded { total: usize, cap: usize },
    #[error(
        "single-quantum sector deviates from the embedding by {deviation:.3e}; the operator-ordering convention is broken"
    )]
    Convention { deviation: f64 },
    #[error(transparent)]
    SmallMat(#[from] SmallMatError),
}

/// Number of four-mode occupations with the given total.
pub fn sector_dim(total: usize) -> usize {
    (total + 1) * (total + 2) * (total + 3) / 6
}

/// Ordered basis of the fixed-total sector.
///
/// States are listed in descending lexicographic order, which puts the
/// single-quantum basis in natural mode order and thereby makes the
/// sector-1 unitary directly comparable with the embedding matrix.
#[derive(Clone, Debug)]
pub struct SectorBasis {
    pub total: usize,
    pub states: Vec<Occupation4>,
}

impl SectorBasis {
    pub fn new(total: usize) -> Self {
        let mut states = Vec::with_capacity(sector_dim(total));
        for n1 in (0..=total).rev() {
            for n2 in (0..=total - n1).rev() {
                for n3 in (0..=total - n1 - n2).rev() {
                    states.push(Occupation4([n1, n2, n3, total - n1 - n2 - n3]));
                }
            }
        }
        SectorBasis { total, states }
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    /// Position of an occupation in the basis, if its total matches.
    pub fn index(&self, k: Occupation4) -> Option<usize> {
        self.states.binary_search_by(|probe| k.cmp(probe)).ok()
    }
}

/// Matrix of the quadratic form `sum g_{mu nu} a_mu† a_nu` on a sector,
/// using `a_nu |s> = sqrt(s_nu) |s - e_nu>` and the matching raising rule.
/// Works for any complex coefficient matrix; a Hermitian input gives a
/// Hermitian output.
fn sector_matrix(g: &CMat, basis: &SectorBasis) -> CMat {
    let dim = basis.dim();
    let mut h = CMat::zeros((dim, dim));
    for (col, s) in basis.states.iter().enumerate() {
        for nu in 0..4 {
            if s.0[nu] == 0 {
                continue;
            }
            for mu in 0..4 {
                let val = g[[mu, nu]];
                if val == Complex64::default() {
                    continue;
                }
                let mut t = s.0;
                t[nu] -= 1;
                t[mu] += 1;
                let amp = (s.0[nu] as f64).sqrt() * (t[mu] as f64).sqrt();
                let row = basis.index(Occupation4(t)).expect("quanta conserved");
                h[[row, col]] += val * amp;
            }
        }
    }
    h
}

/// Sector Hamiltonian of a Hermitian generator.
pub fn sector_hamiltonian(phi: &CMat, total: usize, cap: usize) -> Result<CMat, OracleError> {
    if total > cap {
        return Err(OracleError::CapExceeded { total, cap });
    }
    Ok(sector_matrix(phi, &SectorBasis::new(total)))
}

/// The state-space unitary restricted to one sector.
#[derive(Clone, Debug)]
pub struct SectorUnitary {
    pub total: usize,
    pub u: CMat,
}

/// `exp(-i H_N)` for the sector Hamiltonian of `phi`.
pub fn sector_unitary(phi: &CMat, total: usize, cap: usize) -> Result<SectorUnitary, OracleError> {
    let h = sector_hamiltonian(phi, total, cap)?;
    let u = matrix_exp(&h.mapv(|v| v * cx(0.0, -1.0)));
    Ok(SectorUnitary { total, u })
}

/// Fail unless the single-quantum sector reproduces the embedding matrix.
fn convention_check(emb: &LambdaEmbedding) -> Result<(), OracleError> {
    let u1 = matrix_exp(
        &sector_matrix(&emb.phi, &SectorBasis::new(1)).mapv(|v| v * cx(0.0, -1.0)),
    );
    let deviation = maxabs_diff(&u1, &emb.lambda);
    if deviation > CONVENTION_TOL {
        return Err(OracleError::Convention { deviation });
    }
    Ok(())
}

/// Evolve a Fock input by direct sector exponentiation.
///
/// The amplitudes are one column of the sector unitary; the convention
/// pin runs first on every call.
pub fn evolve_fock(
    emb: &LambdaEmbedding,
    n: Occupation4,
    cap: usize,
) -> Result<FockAmplitudes, OracleError> {
    let total = n.total();
    if total > cap {
        return Err(OracleError::CapExceeded { total, cap });
    }
    convention_check(emb)?;
    let su = sector_unitary(&emb.phi, total, cap)?;
    let basis = SectorBasis::new(total);
    let col = basis.index(n).expect("input occupation lies in its sector");
    let mut amps = BTreeMap::new();
    for (row, k) in basis.states.iter().enumerate() {
        let c = su.u[[row, col]];
        if c.norm() >= AMPLITUDE_DROP_TOL {
            amps.insert(*k, c);
        }
    }
    Ok(FockAmplitudes { total, amps })
}

/// Trace out the device modes of an amplitude map, allowing mixed totals
/// so coherent superpositions can reuse it.
fn trace_map(amps: &BTreeMap<Occupation4, Complex64>) -> FieldDensity {
    let mut groups: BTreeMap<(usize, usize), Vec<((usize, usize), Complex64)>> = BTreeMap::new();
    for (k, c) in amps {
        groups
            .entry((k.0[2], k.0[3]))
            .or_default()
            .push(((k.0[0], k.0[1]), *c));
    }
    let mut entries: BTreeMap<((usize, usize), (usize, usize)), Complex64> = BTreeMap::new();
    for members in groups.values() {
        for (bra, cb) in members {
            for (ket, ck) in members {
                *entries.entry((*bra, *ket)).or_default() += cb * ck.conj();
            }
        }
    }
    entries.retain(|_, v| v.norm() >= AMPLITUDE_DROP_TOL);
    FieldDensity { entries }
}

/// Reduced field density of a pure amplitude map.
pub fn partial_trace_device(amps: &FockAmplitudes) -> FieldDensity {
    trace_map(&amps.amps)
}

/// Column-scaled sparse form of a sector matrix, for exponential applies
/// that never form the dense exponential.
struct SparseSector {
    dim: usize,
    entries: Vec<(u32, u32, Complex64)>,
}

impl SparseSector {
    fn new(g: &CMat, basis: &SectorBasis) -> Self {
        let dense = sector_matrix(g, basis);
        let mut entries = Vec::new();
        for ((r, c), v) in dense.indexed_iter() {
            if *v != Complex64::default() {
                entries.push((r as u32, c as u32, *v));
            }
        }
        SparseSector {
            dim: basis.dim(),
            entries,
        }
    }

    fn one_norm(&self) -> f64 {
        let mut col_sums = vec![0.0f64; self.dim];
        for (_, c, v) in &self.entries {
            col_sums[*c as usize] += v.norm();
        }
        col_sums.into_iter().fold(0.0, f64::max)
    }

    fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::default(); self.dim];
        for (r, c, val) in &self.entries {
            out[*r as usize] += val * v[*c as usize];
        }
        out
    }

    /// `exp(scale * M) v` by substepped Taylor summation: the step count
    /// keeps each substep's matrix small enough that the series is short
    /// and free of cancellation.
    fn exp_apply(&self, scale: Complex64, mut v: Vec<Complex64>) -> Vec<Complex64> {
        let steps = (self.one_norm() * scale.norm()).ceil().max(1.0) as usize;
        let step_scale = scale / steps as f64;
        for _ in 0..steps {
            let mut acc = v.clone();
            let mut term = v;
            for j in 1..=60 {
                term = self
                    .apply(&term)
                    .into_iter()
                    .map(|x| x * step_scale / j as f64)
                    .collect();
                for (a, t) in acc.iter_mut().zip(&term) {
                    *a += t;
                }
                if term.iter().map(|x| x.norm()).fold(0.0, f64::max) <= APPLY_TAIL {
                    break;
                }
            }
            v = acc;
        }
        v
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Evolve a truncated coherent state and trace out the device.
///
/// The input expansion is cut at `truncation` total quanta; each sector
/// evolves independently (and in parallel) under the sparse exponential
/// apply, so no dense matrix is ever built at coherent sizes. The missing
/// Poisson tail bounds the error, which stays far below 1e-6 for inputs
/// with total mean excitation at most 1 and truncation 12.
pub fn evolve_coherent(
    emb: &LambdaEmbedding,
    gamma: &CoherentVector,
    truncation: usize,
) -> Result<FieldDensity, OracleError> {
    convention_check(emb)?;
    let prefactor = (-gamma.norm_sq() / 2.0).exp();
    let sectors: Vec<Vec<(Occupation4, Complex64)>> = (0..=truncation)
        .into_par_iter()
        .map(|n| {
            let basis = SectorBasis::new(n);
            let input: Vec<Complex64> = basis
                .states
                .iter()
                .map(|s| {
                    let mut amp = Complex64::new(prefactor, 0.0);
                    for nu in 0..4 {
                        amp *= gamma.0[nu].powu(s.0[nu] as u32) / factorial(s.0[nu]).sqrt();
                    }
                    amp
                })
                .collect();
            let sparse = SparseSector::new(&emb.phi, &basis);
            let out = sparse.exp_apply(cx(0.0, -1.0), input);
            basis.states.iter().copied().zip(out).collect()
        })
        .collect();
    let mut full: BTreeMap<Occupation4, Complex64> = BTreeMap::new();
    for sector in sectors {
        for (k, c) in sector {
            if c.norm() >= AMPLITUDE_DROP_TOL {
                full.insert(k, c);
            }
        }
    }
    Ok(trace_map(&full))
}

/// Overlap of a field density with the two-mode coherent state
/// `(alpha1, alpha2)`, truncated at the same total as the evolution.
pub fn coherent_fidelity(
    d: &FieldDensity,
    alpha1: Complex64,
    alpha2: Complex64,
    truncation: usize,
) -> f64 {
    let pref = (-(alpha1.norm_sqr() + alpha2.norm_sqr()) / 2.0).exp();
    let amp = |k: (usize, usize)| -> Complex64 {
        if k.0 + k.1 > truncation {
            return Complex64::default();
        }
        pref * alpha1.powu(k.0 as u32) * alpha2.powu(k.1 as u32)
            / (factorial(k.0) * factorial(k.1)).sqrt()
    };
    d.entries
        .iter()
        .map(|((b, k), v)| (amp(*b).conj() * v * amp(*k)).re)
        .sum()
}

/// Hermitian 4x4 generator of one two-mode block, embedded at the block's
/// modes with zeros elsewhere, so that `exp(-i G)` is the block's 4x4
/// expansion.
pub fn block_generator(block: &TwoModeBlock) -> Result<CMat, OracleError> {
    let log = unitary_log(&block.u)?;
    let (i, j) = (block.modes.0 - 1, block.modes.1 - 1);
    let mut g = CMat::zeros((4, 4));
    g[[i, i]] = log.matrix[[0, 0]];
    g[[i, j]] = log.matrix[[0, 1]];
    g[[j, i]] = log.matrix[[1, 0]];
    g[[j, j]] = log.matrix[[1, 1]];
    Ok(g)
}

/// Two-mode analogue of [`sector_matrix`] for lifting 2x2 generators,
/// Hermitian or not, onto the total-`total` subspace of two modes. Basis
/// order is descending in the first mode, so index 0 is `(total, 0)`.
pub fn sector_matrix_2mode(g: &CMat, total: usize) -> CMat {
    let dim = total + 1;
    let mut m = CMat::zeros((dim, dim));
    for col in 0..dim {
        let s = [total - col, col];
        for nu in 0..2 {
            if s[nu] == 0 {
                continue;
            }
            for mu in 0..2 {
                let val = g[[mu, nu]];
                if val == Complex64::default() {
                    continue;
                }
                let mut t = s;
                t[nu] -= 1;
                t[mu] += 1;
                let amp = (s[nu] as f64).sqrt() * (t[mu] as f64).sqrt();
                let row = t[1];
                m[[row, col]] += val * amp;
            }
        }
    }
    m
}
