//! Closed-form Fock-state transformation through a four-port device.
//!
//! An input Fock state `|n1; n2; n3; n4>` (photons in the two light modes,
//! quanta in the two device modes) evolves under the unitary embedding into
//! a superposition of output Fock states with the same total quanta. Each
//! output amplitude is a sum over 4x4 contingency tables: non-negative
//! integer tables whose row sums are the input occupations and whose column
//! sums are the output occupations, every cell contributing a power of one
//! entry of the embedding.
//!
//! Tracing the pure output over the device modes gives the reduced field
//! density matrix. The same density has a second, device-centric form in
//! terms of the matrix `Z` of commutators among the device rows of the
//! embedding: vacuum expectation values of device operators reduce to
//! permanents of row- and column-repeated submatrices of `Z`. The two
//! representations must agree, which makes the pair a strong internal
//! cross-check.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{self, DeviceMatrices};
use crate::embedding::LambdaEmbedding;
use crate::smallmat::{block_4x4, cx, dagger, identity, permanent, CMat, SmallMatError};

/// Devices fed to [`z_matrix`] must satisfy the energy constraint at this
/// tolerance.
pub const DEVICE_TOL: f64 = 1e-10;
/// Amplitudes and density entries below this magnitude are dropped from
/// result maps to keep them sparse. Normalization is checked before any
/// dropping happens.
pub const AMPLITUDE_DROP_TOL: f64 = 1e-15;

#[derive(Debug, Error)]
pub enum FockError {
    #[error("total quanta {total} exceeds the configured cap {cap}")]
    CapExceeded { total: usize, cap: usize },
    #[error(
        "input excites the device modes (n3 = {n3}, n4 = {n4}); this operation requires the device in vacuum"
    )]
    DeviceModesExcited { n3: usize, n4: usize },
    #[error("device fails the energy constraint (residual {residual:.3e} > {tol:.3e})")]
    InvalidDevice { residual: f64, tol: f64 },
    #[error(transparent)]
    SmallMat(#[from] SmallMatError),
}

/// Occupation numbers of the four modes, light modes first.
#[derive(
    Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct Occupation4(pub [usize; 4]);

impl Occupation4 {
    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }
}

/// Occupation of the two outgoing light modes only.
pub type FieldOccupation = (usize, usize);

/// Pure output state in the Fock basis: amplitudes keyed by output
/// occupation, all keys carrying the same total `total`.
#[derive(Clone, Debug)]
pub struct FockAmplitudes {
    /// Conserved total quanta, equal to the input total.
    pub total: usize,
    pub amps: BTreeMap<Occupation4, Complex64>,
}

impl FockAmplitudes {
    /// Amplitude at `k`, zero when absent from the map.
    pub fn get(&self, k: Occupation4) -> Complex64 {
        self.amps.get(&k).copied().unwrap_or_default()
    }

    /// Sum of squared magnitudes; 1 up to rounding and the drop threshold.
    pub fn norm_sq(&self) -> f64 {
        self.amps.values().map(|c| c.norm_sqr()).sum()
    }
}

/// Reduced density matrix of the outgoing field after tracing out the
/// device, keyed by (bra, ket) pairs of two-mode occupations.
#[derive(Clone, Debug, Default)]
pub struct FieldDensity {
    pub entries: BTreeMap<(FieldOccupation, FieldOccupation), Complex64>,
}

impl FieldDensity {
    /// Entry `<bra| D |ket>`, zero when absent.
    pub fn get(&self, bra: FieldOccupation, ket: FieldOccupation) -> Complex64 {
        self.entries.get(&(bra, ket)).copied().unwrap_or_default()
    }

    /// Sum of diagonal entries; 1 up to rounding for a physical state.
    pub fn trace(&self) -> f64 {
        self.entries
            .iter()
            .filter(|((b, k), _)| b == k)
            .map(|(_, v)| v.re)
            .sum()
    }

    /// `Tr D^2`, which is 1 exactly when the state is pure.
    pub fn purity(&self) -> f64 {
        self.entries
            .iter()
            .map(|((b, k), v)| (v * self.get(*k, *b)).re)
            .sum()
    }

    /// Largest deviation from Hermitian symmetry across stored entries.
    pub fn hermitian_deviation(&self) -> f64 {
        self.entries
            .iter()
            .map(|((b, k), v)| (v - self.get(*k, *b).conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Dense matrix over the occupations appearing in the map, in sorted
    /// order, for spectral checks.
    pub fn to_dense(&self) -> (Vec<FieldOccupation>, CMat) {
        let mut occs: Vec<FieldOccupation> = self
            .entries
            .keys()
            .flat_map(|(b, k)| [*b, *k])
            .collect();
        occs.sort_unstable();
        occs.dedup();
        let mut m = CMat::zeros((occs.len(), occs.len()));
        for (i, b) in occs.iter().enumerate() {
            for (j, k) in occs.iter().enumerate() {
                m[[i, j]] = self.get(*b, *k);
            }
        }
        (occs, m)
    }

    /// Mean total photon number `<n1 + n2>` read off the diagonal.
    pub fn mean_total_photons(&self) -> f64 {
        self.entries
            .iter()
            .filter(|((b, k), _)| b == k)
            .map(|(((k1, k2), _), v)| (k1 + k2) as f64 * v.re)
            .sum()
    }
}

/// Marginal and joint photon-number distributions read off a density
/// diagonal.
#[derive(Clone, Debug)]
pub struct PhotonStatistics {
    /// `p1[k]` is the probability of `k` photons in mode 1.
    pub p1: Vec<f64>,
    /// `p2[k]` is the probability of `k` photons in mode 2.
    pub p2: Vec<f64>,
    pub joint: BTreeMap<FieldOccupation, f64>,
}

/// Commutator matrix of the device-row linear forms of the embedding,
/// `Z = I - Lambda_field† Lambda_field` with `Lambda_field` the upper 2x4
/// block. Hermitian with eigenvalues in `[0, 1]`.
#[derive(Clone, Debug)]
pub struct ZMatrix {
    pub z: CMat,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

fn binomial(n: usize, k: usize) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// All ordered ways to split `total` quanta across the four modes.
fn compositions4(total: usize) -> Vec<[usize; 4]> {
    let mut out = Vec::new();
    for a in 0..=total {
        for b in 0..=(total - a) {
            for c in 0..=(total - a - b) {
                out.push([a, b, c, total - a - b - c]);
            }
        }
    }
    out
}

/// One cell's contribution: `Lambda_{mu nu}^e / e!`.
fn cell(lambda: &CMat, mu: usize, nu: usize, e: usize) -> Complex64 {
    lambda[[mu, nu]].powu(e as u32) / factorial(e)
}

/// Sum over contingency tables with row sums `n` and column sums `k` of the
/// product of cell contributions. Depth-first over cells in row-major
/// order; a branch dies as soon as a row remainder cannot fit into the
/// remaining column capacity, and the whole last row is forced by the
/// column remainders.
fn table_sum(lambda: &CMat, n: [usize; 4], k: [usize; 4]) -> Complex64 {
    fn rec(
        lambda: &CMat,
        n: &[usize; 4],
        nu: usize,
        mu: usize,
        row_rem: usize,
        col_rem: &mut [usize; 4],
        factor: Complex64,
        acc: &mut Complex64,
    ) {
        if nu == 3 {
            // Row sums 1..3 are exhausted, so the column remainders sum to
            // n4 and the last row is fully determined.
            let mut f = factor;
            for mu in 0..4 {
                f *= cell(lambda, mu, 3, col_rem[mu]);
            }
            *acc += f;
            return;
        }
        if mu == 3 {
            // Last column of a free row takes whatever the row still needs.
            if row_rem > col_rem[3] {
                return;
            }
            col_rem[3] -= row_rem;
            let f = factor * cell(lambda, 3, nu, row_rem);
            rec(lambda, n, nu + 1, 0, n[nu + 1], col_rem, f, acc);
            col_rem[3] += row_rem;
            return;
        }
        for e in 0..=row_rem.min(col_rem[mu]) {
            col_rem[mu] -= e;
            let f = factor * cell(lambda, mu, nu, e);
            rec(lambda, n, nu, mu + 1, row_rem - e, col_rem, f, acc);
            col_rem[mu] += e;
        }
    }

    let mut acc = Complex64::default();
    let mut col_rem = k;
    rec(
        lambda,
        &n,
        0,
        0,
        n[0],
        &mut col_rem,
        cx(1.0, 0.0),
        &mut acc,
    );
    acc
}

/// Map an input Fock state through the embedding.
///
/// The amplitude at output occupation `k` is
/// `sqrt(prod n_v!) sqrt(prod k_u!)` times [`table_sum`]. Distinct outputs
/// are independent, so they are evaluated in parallel and merged. Entries
/// below [`AMPLITUDE_DROP_TOL`] are dropped after the normalization check.
pub fn output_amplitudes(
    emb: &LambdaEmbedding,
    n: Occupation4,
    cap: usize,
) -> Result<FockAmplitudes, FockError> {
    let total = n.total();
    if total > cap {
        return Err(FockError::CapExceeded { total, cap });
    }
    let pref_n: f64 = n.0.iter().map(|&v| factorial(v)).product::<f64>().sqrt();
    let full: Vec<(Occupation4, Complex64)> = compositions4(total)
        .par_iter()
        .map(|&k| {
            let pref_k: f64 = k.iter().map(|&v| factorial(v)).product::<f64>().sqrt();
            let amp = table_sum(&emb.lambda, n.0, k) * pref_n * pref_k;
            (Occupation4(k), amp)
        })
        .collect();
    let norm: f64 = full.iter().map(|(_, c)| c.norm_sqr()).sum();
    debug_assert!(
        (norm - 1.0).abs() < 1e-9,
        "output amplitudes lost normalization ({norm}); embedding not unitary?"
    );
    let amps = full
        .into_iter()
        .filter(|(_, c)| c.norm() >= AMPLITUDE_DROP_TOL)
        .collect();
    Ok(FockAmplitudes { total, amps })
}

/// Reduced field density after the device modes are traced out:
/// `D[(k1,k2),(k1',k2')] = sum over (k3,k4) of C_k conj(C_k')`.
///
/// The trace removes every device-row gauge, so the result depends only on
/// the device, not on the gauge the embedding was built with. With
/// `device_vacuum_required` set, inputs exciting the device modes are
/// rejected; callers comparing against [`density_via_z`] want that guard.
pub fn output_density(
    emb: &LambdaEmbedding,
    n: Occupation4,
    device_vacuum_required: bool,
    cap: usize,
) -> Result<FieldDensity, FockError> {
    if device_vacuum_required && (n.0[2] != 0 || n.0[3] != 0) {
        return Err(FockError::DeviceModesExcited {
            n3: n.0[2],
            n4: n.0[3],
        });
    }
    let amps = output_amplitudes(emb, n, cap)?;
    // Group amplitudes by device occupation; each group contributes an
    // outer product of its field parts.
    let mut groups: BTreeMap<FieldOccupation, Vec<(FieldOccupation, Complex64)>> = BTreeMap::new();
    for (k, c) in &amps.amps {
        groups
            .entry((k.0[2], k.0[3]))
            .or_default()
            .push(((k.0[0], k.0[1]), *c));
    }
    let mut entries: BTreeMap<(FieldOccupation, FieldOccupation), Complex64> = BTreeMap::new();
    for members in groups.values() {
        for (bra, cb) in members {
            for (ket, ck) in members {
                *entries.entry((*bra, *ket)).or_default() += cb * ck.conj();
            }
        }
    }
    entries.retain(|_, v| v.norm() >= AMPLITUDE_DROP_TOL);
    Ok(FieldDensity { entries })
}

/// Commutator matrix of a device in block form,
/// `Z = [[I - T†T, -T†A], [-A†T, I - A†A]]`.
///
/// Because the embedding is unitary (column Gram is the identity), this
/// equals the Gram matrix of its two device rows; the test suite pins that
/// equality on random devices.
pub fn z_matrix(d: &DeviceMatrices) -> Result<ZMatrix, FockError> {
    let report = device::validate(d, DEVICE_TOL);
    if !report.pass {
        return Err(FockError::InvalidDevice {
            residual: report.residual,
            tol: report.tol,
        });
    }
    let ttt = dagger(&d.t).dot(&d.t);
    let tta = dagger(&d.t).dot(&d.a);
    let att = dagger(&d.a).dot(&d.t);
    let ata = dagger(&d.a).dot(&d.a);
    let z = block_4x4(
        &(identity(2) - &ttt),
        &tta.mapv(|v| -v),
        &att.mapv(|v| -v),
        &(identity(2) - &ata),
    );
    Ok(ZMatrix { z })
}

fn z_from_lambda(lambda: &CMat) -> CMat {
    let field = lambda.slice(ndarray::s![0..2, ..]).to_owned();
    identity(4) - dagger(&field).dot(&field)
}

/// Vacuum expectation of a product of device annihilators (row counts)
/// followed by device creators (column counts): the permanent of `Z` with
/// row `v` repeated `rows[v]` times and column `u` repeated `cols[u]`
/// times. Zero when the totals differ, since an unbalanced product cannot
/// return to vacuum; the formula leaves that implicit.
fn device_vacuum_moment(
    z: &CMat,
    rows: [usize; 4],
    cols: [usize; 4],
) -> Result<Complex64, FockError> {
    let nr: usize = rows.iter().sum();
    let nc: usize = cols.iter().sum();
    if nr != nc {
        return Ok(Complex64::default());
    }
    if nr == 0 {
        return Ok(cx(1.0, 0.0));
    }
    let row_idx: Vec<usize> = (0..4).flat_map(|v| std::iter::repeat(v).take(rows[v])).collect();
    let col_idx: Vec<usize> = (0..4).flat_map(|u| std::iter::repeat(u).take(cols[u])).collect();
    let m = CMat::from_shape_fn((nr, nr), |(i, j)| z[[row_idx[i], col_idx[j]]]);
    Ok(permanent(&m)?)
}

/// Expansion of `prod_u xhat_u†^{p_u} |vac>` in the two-mode Fock basis,
/// where `xhat_u† = Lambda_{1u} a1† + Lambda_{2u} a2†`. Only the two light
/// columns can carry excitation here.
fn field_vector(lambda: &CMat, p: [usize; 2]) -> Vec<(FieldOccupation, Complex64)> {
    let mut map: BTreeMap<FieldOccupation, Complex64> = BTreeMap::new();
    for j1 in 0..=p[0] {
        for j2 in 0..=p[1] {
            let k1 = j1 + j2;
            let k2 = (p[0] - j1) + (p[1] - j2);
            let coef = binomial(p[0], j1)
                * binomial(p[1], j2)
                * (factorial(k1) * factorial(k2)).sqrt();
            let amp = lambda[[0, 0]].powu(j1 as u32)
                * lambda[[1, 0]].powu((p[0] - j1) as u32)
                * lambda[[0, 1]].powu(j2 as u32)
                * lambda[[1, 1]].powu((p[1] - j2) as u32);
            *map.entry((k1, k2)).or_default() += coef * amp;
        }
    }
    map.into_iter().collect()
}

/// Device-centric form of the reduced field density.
///
/// The output splits each mode's creation operator into a field part and a
/// device part; binomially expanding the product and taking the device
/// vacuum expectation leaves coefficients `Y_{p,q}` built from permanents
/// of `Z` submatrices via [`device_vacuum_moment`], attached to outer
/// products of [`field_vector`] states. Valid only when the device modes
/// start in vacuum, because the vacuum expectation underlying `Y` assumes
/// it; other inputs get [`FockError::DeviceModesExcited`].
pub fn density_via_z(
    emb: &LambdaEmbedding,
    n: Occupation4,
    cap: usize,
) -> Result<FieldDensity, FockError> {
    let total = n.total();
    if total > cap {
        return Err(FockError::CapExceeded { total, cap });
    }
    if n.0[2] != 0 || n.0[3] != 0 {
        return Err(FockError::DeviceModesExcited {
            n3: n.0[2],
            n4: n.0[3],
        });
    }
    let z = z_from_lambda(&emb.lambda);
    let (n1, n2) = (n.0[0], n.0[1]);
    let inv_sqrt_nfac: f64 = 1.0 / (factorial(n1) * factorial(n2)).sqrt();

    let mut kets: Vec<([usize; 2], f64, Vec<(FieldOccupation, Complex64)>)> = Vec::new();
    for p1 in 0..=n1 {
        for p2 in 0..=n2 {
            let weight = inv_sqrt_nfac * binomial(n1, p1) * binomial(n2, p2);
            kets.push(([p1, p2], weight, field_vector(&emb.lambda, [p1, p2])));
        }
    }

    let mut entries: BTreeMap<(FieldOccupation, FieldOccupation), Complex64> = BTreeMap::new();
    for (p, wp, vp) in &kets {
        for (q, wq, vq) in &kets {
            let moment = device_vacuum_moment(
                &z,
                [n1 - q[0], n2 - q[1], 0, 0],
                [n1 - p[0], n2 - p[1], 0, 0],
            )?;
            if moment == Complex64::default() {
                continue;
            }
            let y = moment * wp * wq;
            for (kb, cb) in vp {
                for (kk, ck) in vq {
                    *entries.entry((*kb, *kk)).or_default() += y * cb * ck.conj();
                }
            }
        }
    }
    entries.retain(|_, v| v.norm() >= AMPLITUDE_DROP_TOL);
    Ok(FieldDensity { entries })
}

/// Marginal and joint photon-number distributions from a density diagonal.
pub fn photon_statistics(d: &FieldDensity) -> PhotonStatistics {
    let mut joint = BTreeMap::new();
    let mut max1 = 0;
    let mut max2 = 0;
    for ((bra, ket), v) in &d.entries {
        if bra == ket {
            joint.insert(*bra, v.re);
            max1 = max1.max(bra.0);
            max2 = max2.max(bra.1);
        }
    }
    let mut p1 = vec![0.0; max1 + 1];
    let mut p2 = vec![0.0; max2 + 1];
    for ((k1, k2), pr) in &joint {
        p1[*k1] += pr;
        p2[*k2] += pr;
    }
    PhotonStatistics { p1, p2, joint }
}

/// One amplitude of a serialized Fock result.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AmplitudeEntry {
    pub k: [usize; 4],
    pub re: f64,
    pub im: f64,
}

/// One density matrix element of a serialized Fock result.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityEntry {
    pub bra: [usize; 2],
    pub ket: [usize; 2],
    pub re: f64,
    pub im: f64,
}

/// Serialization shape for one Fock transformation, as emitted by the CLI.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FockResult {
    pub input: [usize; 4],
    pub amplitudes: Vec<AmplitudeEntry>,
    pub density: Vec<DensityEntry>,
}

/// Bundle amplitudes and a density into the serialization shape. Map order
/// is already deterministic, so repeated runs serialize identically.
pub fn fock_result(n: Occupation4, amps: &FockAmplitudes, density: &FieldDensity) -> FockResult {
    FockResult {
        input: n.0,
        amplitudes: amps
            .amps
            .iter()
            .map(|(k, c)| AmplitudeEntry {
                k: k.0,
                re: c.re,
                im: c.im,
            })
            .collect(),
        density: density
            .entries
            .iter()
            .map(|((b, k), v)| DensityEntry {
                bra: [b.0, b.1],
                ket: [k.0, k.1],
                re: v.re,
                im: v.im,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::make_lossy_bs;
    use crate::embedding::embed;
    use crate::smallmat::{eigh, maxabs_diff};
    use crate::testutil;
    use crate::DEFAULT_CAP;
    use ndarray::array;

    fn balanced_device() -> DeviceMatrices {
        let u = std::f64::consts::FRAC_1_SQRT_2;
        DeviceMatrices::new(
            0.0,
            identity(2).mapv(|z| z * u),
            identity(2).mapv(|z| z * u),
        )
    }

    fn hom_device() -> DeviceMatrices {
        let u = std::f64::consts::FRAC_1_SQRT_2;
        let t = array![[cx(u, 0.0), cx(u, 0.0)], [cx(-u, 0.0), cx(u, 0.0)]];
        DeviceMatrices::new(0.0, t, CMat::zeros((2, 2)))
    }

    fn random_input(rng: &mut rand_chacha::ChaCha8Rng, total: usize) -> Occupation4 {
        use rand::Rng;
        let mut n = [0usize; 4];
        for _ in 0..total {
            n[rng.gen_range(0..4)] += 1;
        }
        Occupation4(n)
    }

    #[test]
    fn vacuum_passes_through_unchanged() {
        let emb = embed(&balanced_device(), None).unwrap();
        let amps = output_amplitudes(&emb, Occupation4([0; 4]), DEFAULT_CAP).unwrap();
        assert_eq!(amps.amps.len(), 1);
        assert_eq!(amps.get(Occupation4([0; 4])), cx(1.0, 0.0));
        let d = output_density(&emb, Occupation4([0; 4]), true, DEFAULT_CAP).unwrap();
        assert_eq!(d.entries.len(), 1);
        assert_eq!(d.get((0, 0), (0, 0)), cx(1.0, 0.0));
    }

    #[test]
    fn single_photon_reads_one_column_of_the_embedding() {
        // One input photon in mode nu scatters into basis states with
        // amplitudes equal to column nu of the embedding.
        let mut rng = testutil::rng(7);
        for _ in 0..20 {
            let emb = embed(&testutil::random_device(&mut rng), None).unwrap();
            for nu in 0..4 {
                let mut n = [0; 4];
                n[nu] = 1;
                let amps = output_amplitudes(&emb, Occupation4(n), DEFAULT_CAP).unwrap();
                for mu in 0..4 {
                    let mut k = [0; 4];
                    k[mu] = 1;
                    let diff = (amps.get(Occupation4(k)) - emb.lambda[[mu, nu]]).norm();
                    assert!(diff < 1e-14, "column read-off drifted by {diff:.3e}");
                }
            }
        }
    }

    #[test]
    fn balanced_single_photon_splits_into_field_and_device() {
        let u = std::f64::consts::FRAC_1_SQRT_2;
        let emb = embed(&balanced_device(), None).unwrap();
        let amps = output_amplitudes(&emb, Occupation4([1, 0, 0, 0]), DEFAULT_CAP).unwrap();
        assert!((amps.get(Occupation4([1, 0, 0, 0])) - cx(u, 0.0)).norm() < 1e-15);
        assert!((amps.get(Occupation4([0, 0, 1, 0])) - cx(-u, 0.0)).norm() < 1e-15);
        assert_eq!(amps.amps.len(), 2);
    }

    #[test]
    fn hom_amplitudes_cancel_the_coincidence() {
        // Two photons meeting on a real 50:50 splitter bunch: the
        // coincidence amplitude vanishes and the pair exits together with
        // opposite signs.
        let u = std::f64::consts::FRAC_1_SQRT_2;
        let emb = embed(&hom_device(), None).unwrap();
        let amps = output_amplitudes(&emb, Occupation4([1, 1, 0, 0]), DEFAULT_CAP).unwrap();
        assert!((amps.get(Occupation4([2, 0, 0, 0])) - cx(u, 0.0)).norm() < 1e-12);
        assert!((amps.get(Occupation4([0, 2, 0, 0])) - cx(-u, 0.0)).norm() < 1e-12);
        assert!(amps.get(Occupation4([1, 1, 0, 0])).norm() < 1e-12);
    }

    #[test]
    fn hom_density_is_the_pure_noon_state() {
        let emb = embed(&hom_device(), None).unwrap();
        let d = output_density(&emb, Occupation4([1, 1, 0, 0]), true, DEFAULT_CAP).unwrap();
        assert!((d.get((2, 0), (2, 0)) - cx(0.5, 0.0)).norm() < 1e-12);
        assert!((d.get((0, 2), (0, 2)) - cx(0.5, 0.0)).norm() < 1e-12);
        assert!((d.get((2, 0), (0, 2)) - cx(-0.5, 0.0)).norm() < 1e-12);
        assert!((d.get((0, 2), (2, 0)) - cx(-0.5, 0.0)).norm() < 1e-12);
        assert!((d.purity() - 1.0).abs() < 1e-10);
        assert!((d.trace() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn balanced_single_photon_density_has_no_coherences() {
        // The transmitted and absorbed branches end in orthogonal device
        // states, so the reduced field state is an incoherent mixture.
        let emb = embed(&balanced_device(), None).unwrap();
        let d = output_density(&emb, Occupation4([1, 0, 0, 0]), true, DEFAULT_CAP).unwrap();
        assert_eq!(d.entries.len(), 2);
        assert!((d.get((1, 0), (1, 0)) - cx(0.5, 0.0)).norm() < 1e-12);
        assert!((d.get((0, 0), (0, 0)) - cx(0.5, 0.0)).norm() < 1e-12);
        assert!((d.purity() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn amplitudes_conserve_quanta_and_normalization() {
        let mut rng = testutil::rng(11);
        for _ in 0..15 {
            let emb = embed(&testutil::random_device(&mut rng), None).unwrap();
            for total in 0..=6 {
                let n = random_input(&mut rng, total);
                let amps = output_amplitudes(&emb, n, DEFAULT_CAP).unwrap();
                assert!(amps.amps.keys().all(|k| k.total() == total));
                assert!(
                    (amps.norm_sq() - 1.0).abs() < 1e-10,
                    "norm drifted to {}",
                    amps.norm_sq()
                );
            }
        }
    }

    #[test]
    fn density_invariants_hold_on_random_devices() {
        let mut rng = testutil::rng(13);
        for _ in 0..10 {
            let emb = embed(&testutil::random_device(&mut rng), None).unwrap();
            let n = random_input(&mut rng, 3);
            let d = output_density(&emb, n, false, DEFAULT_CAP).unwrap();
            assert!(d.hermitian_deviation() < 1e-12);
            assert!((d.trace() - 1.0).abs() < 1e-10);
            let (_, dense) = d.to_dense();
            let (w, _) = eigh(&dense);
            assert!(w.iter().all(|&x| x >= -1e-10));
        }
    }

    #[test]
    fn density_ignores_the_device_gauge() {
        // The partial trace removes anything unitary acting on the device
        // rows, so embeddings of the same device at different gauges give
        // the same reduced field state.
        let mut rng = testutil::rng(17);
        for _ in 0..5 {
            let dev = testutil::random_device(&mut rng);
            let gauge = testutil::random_unitary(&mut rng, 2);
            let plain = embed(&dev, None).unwrap();
            let gauged = embed(&dev, Some(&gauge)).unwrap();
            let n = Occupation4([2, 1, 0, 0]);
            let d0 = output_density(&plain, n, true, DEFAULT_CAP).unwrap();
            let d1 = output_density(&gauged, n, true, DEFAULT_CAP).unwrap();
            let keys: Vec<_> = d0.entries.keys().chain(d1.entries.keys()).collect();
            for (b, k) in keys {
                assert!((d0.get(*b, *k) - d1.get(*b, *k)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn cap_overflow_is_loud() {
        let emb = embed(&balanced_device(), None).unwrap();
        let n = Occupation4([5, 5, 1, 0]);
        match output_amplitudes(&emb, n, DEFAULT_CAP) {
            Err(FockError::CapExceeded { total: 11, cap: 10 }) => {}
            other => panic!("expected CapExceeded, got {other:?}"),
        }
    }

    #[test]
    fn z_of_lossless_device_lives_on_the_device_block() {
        let mut rng = testutil::rng(19);
        let t = testutil::random_unitary(&mut rng, 2);
        let d = DeviceMatrices::new(0.0, t, CMat::zeros((2, 2)));
        let z = z_matrix(&d).unwrap();
        let expect = CMat::from_diag(&ndarray::arr1(&[
            cx(0.0, 0.0),
            cx(0.0, 0.0),
            cx(1.0, 0.0),
            cx(1.0, 0.0),
        ]));
        assert!(maxabs_diff(&z.z, &expect) < 1e-12);
    }

    #[test]
    fn z_of_balanced_device_is_the_half_block_form() {
        let z = z_matrix(&balanced_device()).unwrap();
        let h = identity(2).mapv(|v| v * 0.5);
        let expect = block_4x4(&h, &h.mapv(|v| -v), &h.mapv(|v| -v), &h);
        assert!(maxabs_diff(&z.z, &expect) < 1e-15);
    }

    #[test]
    fn z_is_the_gram_of_the_device_rows() {
        let mut rng = testutil::rng(23);
        for _ in 0..25 {
            let dev = testutil::random_device(&mut rng);
            let z = z_matrix(&dev).unwrap();
            let emb = embed(&dev, None).unwrap();
            let device_rows = emb.lambda.slice(ndarray::s![2..4, ..]).to_owned();
            let gram = dagger(&device_rows).dot(&device_rows);
            assert!(maxabs_diff(&z.z, &gram) < 1e-12);
            assert!(crate::smallmat::hermitian_deviation(&z.z) < 1e-12);
            let (w, _) = eigh(&z.z);
            assert!(w.iter().all(|&x| x >= -1e-10 && x <= 1.0 + 1e-10));
        }
    }

    #[test]
    fn z_representation_reproduces_the_traced_density() {
        let mut rng = testutil::rng(29);
        let inputs = [[1, 0], [1, 1], [2, 1], [2, 2]];
        for _ in 0..10 {
            let emb = embed(&testutil::random_device(&mut rng), None).unwrap();
            for [n1, n2] in inputs {
                let n = Occupation4([n1, n2, 0, 0]);
                let direct = output_density(&emb, n, true, DEFAULT_CAP).unwrap();
                let via_z = density_via_z(&emb, n, DEFAULT_CAP).unwrap();
                let keys: Vec<_> = direct
                    .entries
                    .keys()
                    .chain(via_z.entries.keys())
                    .copied()
                    .collect();
                for (b, k) in keys {
                    let diff = (direct.get(b, k) - via_z.get(b, k)).norm();
                    assert!(diff < 1e-10, "representations disagree by {diff:.3e}");
                }
            }
        }
    }

    #[test]
    fn z_representation_rejects_device_excitation() {
        let emb = embed(&balanced_device(), None).unwrap();
        match density_via_z(&emb, Occupation4([1, 0, 1, 0]), DEFAULT_CAP) {
            Err(FockError::DeviceModesExcited { n3: 1, n4: 0 }) => {}
            other => panic!("expected DeviceModesExcited, got {other:?}"),
        }
        match output_density(&emb, Occupation4([0, 1, 0, 2]), true, DEFAULT_CAP) {
            Err(FockError::DeviceModesExcited { n3: 0, n4: 2 }) => {}
            other => panic!("expected DeviceModesExcited, got {other:?}"),
        }
    }

    #[test]
    fn lossless_output_is_pure_and_stays_in_the_field() {
        let mut rng = testutil::rng(31);
        for _ in 0..10 {
            let t = testutil::random_unitary(&mut rng, 2);
            let dev = DeviceMatrices::new(0.0, t, CMat::zeros((2, 2)));
            let emb = embed(&dev, None).unwrap();
            let n = random_input(&mut rng, 3);
            let n = Occupation4([n.0[0] + n.0[2], n.0[1] + n.0[3], 0, 0]);
            let amps = output_amplitudes(&emb, n, DEFAULT_CAP).unwrap();
            assert!(amps.amps.keys().all(|k| k.0[2] == 0 && k.0[3] == 0));
            let d = output_density(&emb, n, true, DEFAULT_CAP).unwrap();
            assert!((d.purity() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn single_photon_survival_matches_the_transmission_gram() {
        // One photon into mode 1: the probability that it stays in the
        // field equals the (1,1) entry of T†T.
        let mut rng = testutil::rng(37);
        for _ in 0..20 {
            let dev = testutil::random_device(&mut rng);
            let expect = dagger(&dev.t).dot(&dev.t)[[0, 0]].re;
            let emb = embed(&dev, None).unwrap();
            let d = output_density(&emb, Occupation4([1, 0, 0, 0]), true, DEFAULT_CAP).unwrap();
            assert!((d.mean_total_photons() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn statistics_sum_to_one_and_flag_the_hom_dip() {
        let emb = embed(&hom_device(), None).unwrap();
        let d = output_density(&emb, Occupation4([1, 1, 0, 0]), true, DEFAULT_CAP).unwrap();
        let stats = photon_statistics(&d);
        assert!((stats.p1.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!((stats.p2.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(stats.joint.get(&(1, 1)).copied().unwrap_or(0.0) < 1e-12);
        assert!((stats.joint[&(2, 0)] - 0.5).abs() < 1e-12);
        assert!((stats.joint[&(0, 2)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn scalar_loss_device_splits_a_photon_by_its_transmittance() {
        // |t| = 0.6 with zero reflection absorbs with amplitude 0.8; the
        // survival probability is 0.36 exactly.
        let dev = make_lossy_bs(cx(0.6, 0.0), cx(0.0, 0.0), &identity(2)).unwrap();
        let emb = embed(&dev, None).unwrap();
        let d = output_density(&emb, Occupation4([1, 0, 0, 0]), true, DEFAULT_CAP).unwrap();
        assert!((d.get((1, 0), (1, 0)).re - 0.36).abs() < 1e-12);
        assert!((d.get((0, 0), (0, 0)).re - 0.64).abs() < 1e-12);
    }

    #[test]
    fn fock_result_round_trips_through_json() {
        let emb = embed(&hom_device(), None).unwrap();
        let n = Occupation4([1, 1, 0, 0]);
        let amps = output_amplitudes(&emb, n, DEFAULT_CAP).unwrap();
        let d = output_density(&emb, n, true, DEFAULT_CAP).unwrap();
        let result = fock_result(n, &amps, &d);
        let text = serde_json::to_string(&result).unwrap();
        let back: FockResult = serde_json::from_str(&text).unwrap();
        assert_eq!(back.input, [1, 1, 0, 0]);
        assert_eq!(back.amplitudes.len(), result.amplitudes.len());
        assert_eq!(back.density.len(), result.density.len());
        let first = &back.amplitudes[0];
        assert_eq!(first.k, [0, 2, 0, 0]);
        assert!((first.re + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn device_excited_inputs_stay_normalized() {
        // Quanta may start in the device modes; the map is unitary there
        // too.
        let mut rng = testutil::rng(41);
        for _ in 0..10 {
            let emb = embed(&testutil::random_device(&mut rng), None).unwrap();
            let amps =
                output_amplitudes(&emb, Occupation4([1, 0, 2, 1]), DEFAULT_CAP).unwrap();
            assert!((amps.norm_sq() - 1.0).abs() < 1e-10);
            let d = output_density(&emb, Occupation4([0, 1, 1, 1]), false, DEFAULT_CAP).unwrap();
            assert!((d.trace() - 1.0).abs() < 1e-10);
        }
    }
}
