//! Fixed-size complex linear algebra kernel.
//!
//! Everything in this crate runs on small dense complex matrices: the 2x2
//! transmission and absorption blocks, the 4x4 unitary embedding with its
//! Hermitian generator, and the number-sector matrices built by the oracle.
//! This module owns the primitives those computations share: Hermitian
//! eigendecomposition (cyclic Jacobi), principal square root, unitary
//! logarithm with a pinned branch, polar factors with unitary completion,
//! permanents, and a Taylor scaling-and-squaring matrix exponential.
//!
//! Two behaviors matter to callers beyond plain correctness:
//!
//! - exactly diagonal inputs pass through [`eigh`] untouched (zero
//!   rotations, eigenvector matrix exactly the identity), which downstream
//!   code relies on for bit-level reproducibility of scalar-loss devices;
//! - [`unitary_log`] maps eigenphases to (-pi, pi] and flags phases within
//!   [`BRANCH_GUARD`] of pi, where the principal branch is discontinuous
//!   under perturbation.

use ndarray::Array2;
use num_complex::Complex64;
use thiserror::Error;

/// Dense complex matrix; dimensions in this crate are 2 or 4 except for
/// number-sector matrices and permanent inputs.
pub type CMat = Array2<Complex64>;

/// Symmetry tolerance for Hermitian inputs.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Unitarity tolerance for unitary inputs.
pub const UNITARY_TOL: f64 = 1e-10;
/// Eigenvalues of a nominally positive-semidefinite matrix above this are
/// treated as rounding debris and clamped to zero.
pub const PSD_CLAMP: f64 = -1e-12;
/// Below this, a negative eigenvalue of a nominally positive-semidefinite
/// matrix is a hard error rather than rounding.
pub const PSD_FAIL: f64 = -1e-9;
/// Eigenphases closer to pi than this raise the branch warning.
pub const BRANCH_GUARD: f64 = 1e-8;
/// Hard cap on permanent size (Ryser's method is O(2^n * n)).
pub const PERMANENT_CAP: usize = 12;

#[derive(Debug, Error)]
pub enum SmallMatError {
    #[error("matrix is not Hermitian (max |M - M*'| = {dev:.3e})")]
    NotHermitian { dev: f64 },
    #[error("matrix has negative eigenvalue {value:.3e}, beyond the clamp window")]
    NegativeEigenvalue { value: f64 },
    #[error("matrix is not unitary (max |U'U - I| = {dev:.3e})")]
    NotUnitary { dev: f64 },
    #[error("permanent of a {dim}x{dim} matrix exceeds the cap of {PERMANENT_CAP}")]
    TooLarge { dim: usize },
}

pub(crate) fn cx(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// n x n identity.
pub fn identity(n: usize) -> CMat {
    Array2::eye(n)
}

/// Conjugate transpose.
pub fn dagger(m: &CMat) -> CMat {
    m.t().mapv(|z| z.conj())
}

/// Largest entry magnitude.
pub fn maxabs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Largest entrywise difference magnitude.
pub fn maxabs_diff(a: &CMat, b: &CMat) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    a.iter()
        .zip(b.iter())
        .fold(0.0, |acc, (x, y)| acc.max((x - y).norm()))
}

/// Max |M - M†|.
pub fn hermitian_deviation(m: &CMat) -> f64 {
    maxabs_diff(m, &dagger(m))
}

/// Max |U†U - I|.
pub fn unitary_deviation(m: &CMat) -> f64 {
    let n = m.nrows();
    maxabs_diff(&dagger(m).dot(m), &identity(n))
}

pub fn is_hermitian(m: &CMat, tol: f64) -> bool {
    hermitian_deviation(m) <= tol
}

pub fn is_unitary(m: &CMat, tol: f64) -> bool {
    m.nrows() == m.ncols() && unitary_deviation(m) <= tol
}

/// Assemble a 4x4 matrix from four 2x2 quadrants.
pub fn block_4x4(tl: &CMat, tr: &CMat, bl: &CMat, br: &CMat) -> CMat {
    let mut out = CMat::zeros((4, 4));
    for i in 0..2 {
        for j in 0..2 {
            out[[i, j]] = tl[[i, j]];
            out[[i, j + 2]] = tr[[i, j]];
            out[[i + 2, j]] = bl[[i, j]];
            out[[i + 2, j + 2]] = br[[i, j]];
        }
    }
    out
}

/// Extract the 2x2 quadrant of a 4x4 matrix at block row `bi` and block
/// column `bj` (each 0 or 1).
pub fn quadrant(m: &CMat, bi: usize, bj: usize) -> CMat {
    debug_assert_eq!(m.dim(), (4, 4));
    CMat::from_shape_fn((2, 2), |(i, j)| m[[2 * bi + i, 2 * bj + j]])
}

/// Relative threshold below which Jacobi treats an off-diagonal entry as
/// already annihilated.
const JACOBI_EPS: f64 = 1e-15;
const JACOBI_MAX_SWEEPS: usize = 60;

/// Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.
///
/// Returns `(w, V)` with `M = V diag(w) V†` and the columns of `V`
/// orthonormal. Eigenvalues come out in the order the sweeps leave them;
/// in particular an exactly diagonal input keeps its diagonal order and
/// `V` is exactly the identity.
pub fn eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "eigh requires a square matrix");
    // Work on the Hermitian average so tiny asymmetries cannot drive the
    // rotations; an exactly Hermitian input is reproduced bit for bit.
    let mut a = (m + &dagger(m)).mapv(|z| z * 0.5);
    let mut v = identity(n);
    let scale = maxabs(&a);
    if scale == 0.0 {
        return (vec![0.0; n], v);
    }
    let thresh = JACOBI_EPS * scale;

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                let rho = apq.norm();
                if rho <= thresh {
                    continue;
                }
                rotated = true;
                let phase = apq / rho;
                let app = a[[p, p]].re;
                let aqq = a[[q, q]].re;
                // Annihilation condition in this rotation convention is
                // t^2 - 2 tau t - 1 = 0; take the root of smaller magnitude.
                let tau = (aqq - app) / (2.0 * rho);
                let t = if tau >= 0.0 {
                    -1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = phase.conj() * (t * c);
                apply_rotation(&mut a, &mut v, p, q, c, s);
                a[[p, q]] = cx(0.0, 0.0);
                a[[q, p]] = cx(0.0, 0.0);
            }
        }
        if !rotated {
            break;
        }
    }

    let w = (0..n).map(|i| a[[i, i]].re).collect();
    (w, v)
}

/// Apply the two-sided rotation G†AG and accumulate V <- VG, where G is the
/// identity except G[p,p] = G[q,q] = c, G[q,p] = s, G[p,q] = -conj(s).
fn apply_rotation(a: &mut CMat, v: &mut CMat, p: usize, q: usize, c: f64, s: Complex64) {
    let n = a.nrows();
    // Column update A <- AG.
    for k in 0..n {
        let akp = a[[k, p]];
        let akq = a[[k, q]];
        a[[k, p]] = akp * c + akq * s;
        a[[k, q]] = akq * c - akp * s.conj();
    }
    // Row update A <- G†A.
    for k in 0..n {
        let apk = a[[p, k]];
        let aqk = a[[q, k]];
        a[[p, k]] = apk * c + aqk * s.conj();
        a[[q, k]] = aqk * c - apk * s;
    }
    a[[p, p]] = cx(a[[p, p]].re, 0.0);
    a[[q, q]] = cx(a[[q, q]].re, 0.0);
    for k in 0..n {
        let vkp = v[[k, p]];
        let vkq = v[[k, q]];
        v[[k, p]] = vkp * c + vkq * s;
        v[[k, q]] = vkq * c - vkp * s.conj();
    }
}

/// Sort eigenpairs by descending eigenvalue (stable) and fix each
/// eigenvector's phase so its first component of magnitude above 1e-12 is
/// real positive. Columns already in convention are left bit-identical.
pub fn sort_eigh_desc(w: Vec<f64>, v: CMat) -> (Vec<f64>, CMat) {
    let n = w.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w[j].partial_cmp(&w[i]).expect("finite eigenvalues"));
    let mut w_sorted = Vec::with_capacity(n);
    let mut v_sorted = CMat::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        w_sorted.push(w[src]);
        for r in 0..n {
            v_sorted[[r, dst]] = v[[r, src]];
        }
    }
    phase_fix_columns(&mut v_sorted);
    (w_sorted, v_sorted)
}

/// Multiply each column by a unit phase making its first component of
/// magnitude above 1e-12 real positive.
pub fn phase_fix_columns(v: &mut CMat) {
    let (n, cols) = v.dim();
    for j in 0..cols {
        let mut pivot = None;
        for i in 0..n {
            if v[[i, j]].norm() > 1e-12 {
                pivot = Some(v[[i, j]]);
                break;
            }
        }
        let Some(x) = pivot else { continue };
        let factor = x.conj() / x.norm();
        if factor != cx(1.0, 0.0) {
            for i in 0..n {
                v[[i, j]] *= factor;
            }
        }
    }
}

/// Unique positive-semidefinite Hermitian square root.
///
/// Eigenvalues down to [`PSD_CLAMP`] are clamped to zero; anything below
/// [`PSD_FAIL`] is rejected. `R` satisfies `R R = M` to working precision.
pub fn hermitian_sqrt(m: &CMat) -> Result<CMat, SmallMatError> {
    let dev = hermitian_deviation(m);
    if dev > HERMITIAN_TOL {
        return Err(SmallMatError::NotHermitian { dev });
    }
    let (w, v) = eigh(m);
    let mut roots = Vec::with_capacity(w.len());
    for &val in &w {
        if val < PSD_FAIL {
            return Err(SmallMatError::NegativeEigenvalue { value: val });
        }
        roots.push(val.max(0.0).sqrt());
    }
    Ok(reassemble_hermitian(&roots, &v))
}

/// V diag(w) V†, re-Hermitized.
fn reassemble_hermitian(w: &[f64], v: &CMat) -> CMat {
    let n = w.len();
    let mut scaled = v.clone();
    for j in 0..n {
        for i in 0..n {
            scaled[[i, j]] *= w[j];
        }
    }
    let r = scaled.dot(&dagger(v));
    (&r + &dagger(&r)).mapv(|z| z * 0.5)
}

/// Hermitian generator of a unitary matrix, principal branch.
#[derive(Clone, Debug)]
pub struct UnitaryLog {
    /// Hermitian `H` with `exp(-iH)` reproducing the input; eigenvalues in
    /// (-pi, pi].
    pub matrix: CMat,
    /// True when some eigenphase lies within [`BRANCH_GUARD`] of pi. The
    /// generator is then discontinuous under perturbation of the input.
    pub near_branch_cut: bool,
}

/// Principal logarithm of a unitary: Hermitian `H` with `exp(-iH) = U` and
/// eigenvalues of `H` in (-pi, pi].
///
/// The eigenbasis is found by jointly diagonalizing the commuting Hermitian
/// pair `(U + U†)/2` and `(U - U†)/(2i)`; a joint Jacobi sweep handles every
/// eigenphase collision pattern (for instance the exactly equal cosines of
/// conjugate phase pairs in real orthogonal matrices) without an explicit
/// clustering pass.
pub fn unitary_log(u: &CMat) -> Result<UnitaryLog, SmallMatError> {
    let dev = unitary_deviation(u);
    if dev > UNITARY_TOL {
        return Err(SmallMatError::NotUnitary { dev });
    }
    let n = u.nrows();
    let ud = dagger(u);
    let h1 = (u + &ud).mapv(|z| z * 0.5);
    let h2 = (u - &ud).mapv(|z| z * cx(0.0, -0.5));
    let v = joint_eigh(&h1, &h2);
    let b = dagger(&v).dot(u).dot(&v);
    let mut phases = Vec::with_capacity(n);
    let mut near_branch_cut = false;
    for i in 0..n {
        let lambda = b[[i, i]];
        let phi = lambda.arg();
        if std::f64::consts::PI - phi.abs() < BRANCH_GUARD {
            near_branch_cut = true;
        }
        let mut h = -phi;
        if h <= -std::f64::consts::PI {
            h += 2.0 * std::f64::consts::PI;
        }
        phases.push(h);
    }
    Ok(UnitaryLog {
        matrix: reassemble_hermitian(&phases, &v),
        near_branch_cut,
    })
}

/// Jointly diagonalize two commuting Hermitian matrices with a joint Jacobi
/// sweep; each rotation maximizes the combined diagonal energy of both
/// matrices on the target pair (the closed-form angle comes from the top
/// eigenvector of a small 3x3 Gram matrix). Returns the common eigenvector
/// matrix; exactly diagonal pairs pass through with V = I.
///
/// Unlike diagonalizing one matrix and refining within its eigenvalue
/// clusters, the joint sweep keeps full accuracy when the first matrix is
/// nearly degenerate and the second is not.
pub fn joint_eigh(m1: &CMat, m2: &CMat) -> CMat {
    let n = m1.nrows();
    let mut a1 = m1.clone();
    let mut a2 = m2.clone();
    let mut v = identity(n);
    let scale = maxabs(&a1).max(maxabs(&a2));
    if scale == 0.0 {
        return v;
    }
    let thresh = JACOBI_EPS * scale;

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                if a1[[p, q]].norm() <= thresh && a2[[p, q]].norm() <= thresh {
                    continue;
                }
                rotated = true;
                // h(M) = [M_pp - M_qq, 2 Re M_pq, -2 Im M_pq]; the rotated
                // diagonal gap is the dot product of h with the unit vector
                // (cos 2t, sin 2t cos f, sin 2t sin f).
                let mut g = [[0.0f64; 3]; 3];
                for a in [&a1, &a2] {
                    let h = [
                        a[[p, p]].re - a[[q, q]].re,
                        2.0 * a[[p, q]].re,
                        -2.0 * a[[p, q]].im,
                    ];
                    for r in 0..3 {
                        for cdx in 0..3 {
                            g[r][cdx] += h[r] * h[cdx];
                        }
                    }
                }
                let nvec = sym3_top_eigenvector(&g);
                let c = ((1.0 + nvec[0]) * 0.5).sqrt();
                if c == 0.0 {
                    // Degenerate objective; skip rather than divide by zero.
                    continue;
                }
                let s = cx(nvec[1], nvec[2]) / (2.0 * c);
                apply_rotation(&mut a1, &mut v, p, q, c, s);
                apply_rotation_matrix_only(&mut a2, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    v
}

/// Same two-sided rotation as [`apply_rotation`] without an eigenvector
/// accumulator.
fn apply_rotation_matrix_only(a: &mut CMat, p: usize, q: usize, c: f64, s: Complex64) {
    let n = a.nrows();
    for k in 0..n {
        let akp = a[[k, p]];
        let akq = a[[k, q]];
        a[[k, p]] = akp * c + akq * s;
        a[[k, q]] = akq * c - akp * s.conj();
    }
    for k in 0..n {
        let apk = a[[p, k]];
        let aqk = a[[q, k]];
        a[[p, k]] = apk * c + aqk * s.conj();
        a[[q, k]] = aqk * c - apk * s;
    }
    a[[p, p]] = cx(a[[p, p]].re, 0.0);
    a[[q, q]] = cx(a[[q, q]].re, 0.0);
}

/// Top eigenvector of a 3x3 real symmetric positive-semidefinite matrix via
/// real Jacobi sweeps; sign-normalized so the first component of magnitude
/// above 1e-300 is positive.
fn sym3_top_eigenvector(g: &[[f64; 3]; 3]) -> [f64; 3] {
    let mut a = *g;
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |acc, x| acc.max(x.abs()));
    if scale > 0.0 {
        let thresh = 1e-16 * scale;
        for _ in 0..30 {
            let mut rotated = false;
            for p in 0..3 {
                for q in (p + 1)..3 {
                    if a[p][q].abs() <= thresh {
                        continue;
                    }
                    rotated = true;
                    let tau = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = if tau >= 0.0 {
                        -1.0 / (tau + (1.0 + tau * tau).sqrt())
                    } else {
                        1.0 / (-tau + (1.0 + tau * tau).sqrt())
                    };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;
                    for k in 0..3 {
                        let akp = a[k][p];
                        let akq = a[k][q];
                        a[k][p] = c * akp + s * akq;
                        a[k][q] = c * akq - s * akp;
                    }
                    for k in 0..3 {
                        let apk = a[p][k];
                        let aqk = a[q][k];
                        a[p][k] = c * apk + s * aqk;
                        a[q][k] = c * aqk - s * apk;
                    }
                    for k in 0..3 {
                        let vkp = v[k][p];
                        let vkq = v[k][q];
                        v[k][p] = c * vkp + s * vkq;
                        v[k][q] = c * vkq - s * vkp;
                    }
                }
            }
            if !rotated {
                break;
            }
        }
    }
    let mut best = 0;
    for i in 1..3 {
        if a[i][i] > a[best][best] {
            best = i;
        }
    }
    let mut n = [v[0][best], v[1][best], v[2][best]];
    for lead in 0..3 {
        if n[lead].abs() > 1e-300 {
            if n[lead] < 0.0 {
                n = [-n[0], -n[1], -n[2]];
            }
            break;
        }
    }
    n
}

/// Relative cutoff below which a singular value counts as zero in
/// [`polar_unitary`]'s completion step.
const POLAR_NULL_TOL: f64 = 1e-12;

/// Unitary factor `Q` of the left polar decomposition `M = sqrt(M M†) Q`.
///
/// `Q` is exactly unitary even for singular `M`: on the null space its rows
/// are completed to an orthonormal basis (the completion is a gauge choice;
/// the defining identity holds regardless). For invertible `M` the result is
/// the unique polar factor `M (M†M)^(-1/2)`.
pub fn polar_unitary(m: &CMat) -> CMat {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "polar_unitary requires a square matrix");
    let h = dagger(m).dot(m);
    let h = (&h + &dagger(&h)).mapv(|z| z * 0.5);
    let (w, v) = eigh(&h);
    let (w, v) = sort_eigh_desc(w, v);
    let sigma: Vec<f64> = w.iter().map(|&x| x.max(0.0).sqrt()).collect();
    let cutoff = POLAR_NULL_TOL * sigma.first().copied().unwrap_or(0.0).max(1.0);

    // Left singular vectors for the well-determined directions, kept
    // orthonormal by modified Gram-Schmidt (tiny singular values amplify
    // rounding in M v / sigma, so orthogonality must be restored, not
    // assumed).
    let mut u_cols: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    let mut fixed = Vec::with_capacity(n);
    for i in 0..n {
        if sigma[i] <= cutoff {
            fixed.push(false);
            u_cols.push(vec![cx(0.0, 0.0); n]);
            continue;
        }
        let mut col: Vec<Complex64> = (0..n)
            .map(|r| {
                let mut acc = cx(0.0, 0.0);
                for k in 0..n {
                    acc += m[[r, k]] * v[[k, i]];
                }
                acc / sigma[i]
            })
            .collect();
        for (j, prev) in u_cols.iter().enumerate() {
            if !fixed[j] {
                continue;
            }
            let overlap: Complex64 = prev
                .iter()
                .zip(col.iter())
                .map(|(a, b)| a.conj() * b)
                .sum();
            for (ce, pe) in col.iter_mut().zip(prev.iter()) {
                *ce -= overlap * pe;
            }
        }
        let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-8 {
            for ce in col.iter_mut() {
                *ce /= norm;
            }
            fixed.push(true);
            u_cols.push(col);
        } else {
            fixed.push(false);
            u_cols.push(vec![cx(0.0, 0.0); n]);
        }
    }
    complete_orthonormal(&mut u_cols, &fixed);

    let mut u = CMat::zeros((n, n));
    for (j, col) in u_cols.iter().enumerate() {
        for (i, z) in col.iter().enumerate() {
            u[[i, j]] = *z;
        }
    }
    u.dot(&dagger(&v))
}

/// Fill the columns not marked fixed with an orthonormal completion drawn
/// from the standard basis (first basis vector with enough residual wins).
fn complete_orthonormal(cols: &mut [Vec<Complex64>], fixed: &[bool]) {
    let n = cols.len();
    let mut done: Vec<bool> = fixed.to_vec();
    for j in 0..n {
        if done[j] {
            continue;
        }
        let mut chosen = None;
        for k in 0..n {
            let mut cand = vec![cx(0.0, 0.0); n];
            cand[k] = cx(1.0, 0.0);
            for (i, col) in cols.iter().enumerate() {
                if !done[i] {
                    continue;
                }
                let overlap: Complex64 = col
                    .iter()
                    .zip(cand.iter())
                    .map(|(a, b)| a.conj() * b)
                    .sum();
                for (ce, pe) in cand.iter_mut().zip(col.iter()) {
                    *ce -= overlap * pe;
                }
            }
            let norm = cand.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm > 0.5 {
                for ce in cand.iter_mut() {
                    *ce /= norm;
                }
                chosen = Some(cand);
                break;
            }
        }
        cols[j] = chosen.expect("standard basis always completes an orthonormal set");
        done[j] = true;
    }
}

/// Matrix permanent by Ryser's formula with Gray-code subset updates,
/// O(2^n * n). Errors above [`PERMANENT_CAP`].
pub fn permanent(m: &CMat) -> Result<Complex64, SmallMatError> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "permanent requires a square matrix");
    if n > PERMANENT_CAP {
        return Err(SmallMatError::TooLarge { dim: n });
    }
    if n == 0 {
        // Empty product convention; the Wick-pairing caller depends on it.
        return Ok(cx(1.0, 0.0));
    }
    let mut row_sums = vec![cx(0.0, 0.0); n];
    let mut total = cx(0.0, 0.0);
    let mut gray: u64 = 0;
    for k in 1u64..(1 << n) {
        let next = k ^ (k >> 1);
        let flipped = (gray ^ next).trailing_zeros() as usize;
        if next & (1 << flipped) != 0 {
            for (i, rs) in row_sums.iter_mut().enumerate() {
                *rs += m[[i, flipped]];
            }
        } else {
            for (i, rs) in row_sums.iter_mut().enumerate() {
                *rs -= m[[i, flipped]];
            }
        }
        gray = next;
        let prod: Complex64 = row_sums.iter().product();
        if next.count_ones() % 2 == 0 {
            total += prod;
        } else {
            total -= prod;
        }
    }
    if n % 2 == 1 {
        total = -total;
    }
    Ok(total)
}

/// Matrix exponential by scaling-and-squaring with a Taylor series run to
/// machine precision. The scaled norm is at most 1/2, so the series
/// terminates in under twenty terms; sizes in this crate stay small enough
/// that the simplicity beats rational approximants.
pub fn matrix_exp(a: &CMat) -> CMat {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix_exp requires a square matrix");
    let norm1 = (0..n)
        .map(|j| (0..n).map(|i| a[[i, j]].norm()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let squarings = if norm1 > 0.5 {
        (norm1 / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a.mapv(|z| z / (1u64 << squarings) as f64);

    let mut sum = identity(n) + &scaled;
    let mut term = scaled.clone();
    for k in 2..60u64 {
        term = term.dot(&scaled).mapv(|z| z / k as f64);
        sum += &term;
        if maxabs(&term) <= 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        sum = sum.dot(&sum);
    }
    sum
}
