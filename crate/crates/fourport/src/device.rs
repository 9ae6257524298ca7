//! Four-port device representation, validation, and ingestion.
//!
//! A device at one frequency is the pair `(T, A)` of 2x2 complex matrices
//! acting on the two incoming light modes: `T` carries the coherent part of
//! the input-output map (transmission and reflection) and `A` couples the
//! absorbed excitation back out through the device modes. A physical device
//! satisfies the energy constraint `T T† + A A† = I`.
//!
//! Devices computed inside an absorbing medium come with scaled operators
//! instead; [`renormalize`] diagonalizes the misnormalized sum
//! `K = T T† + A A†` and rescales so the constraint holds again.
//!
//! Spectra are frequency-binned lists of devices loaded from JSON; bins are
//! independent of each other, so downstream processing may fan out per bin.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::smallmat::{
    self, dagger, hermitian_sqrt, identity, is_unitary, maxabs_diff, phase_fix_columns,
    sort_eigh_desc, CMat, SmallMatError,
};

/// Default tolerance for the energy constraint residual; device files may
/// come from single-precision upstream computations.
pub const DEFAULT_VALIDATION_TOL: f64 = 1e-10;
/// Eigenvalues of `T T† + A A†` at or below this make renormalization
/// singular.
pub const COMMUTATOR_FLOOR: f64 = 1e-12;
/// Slack on `|t|^2 + |r|^2 <= 1` before a beam splitter is rejected as
/// superunitary.
pub const SUPERUNITARY_SLACK: f64 = 1e-12;
/// Unitarity tolerance for the mixer matrix fed to [`make_lossy_bs`].
pub const MIXER_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("spectrum parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error(
        "bin at omega = {omega}: energy constraint residual {residual:.3e} exceeds tolerance {tol:.3e}"
    )]
    Validation { omega: f64, residual: f64, tol: f64 },
    #[error("bin at omega = {omega}: {message}")]
    Spectrum { omega: f64, message: String },
    #[error("T T† + A A† has eigenvalue {value:.3e} at or below {COMMUTATOR_FLOOR:.0e}; cannot renormalize")]
    SingularCommutator { value: f64 },
    #[error("|t|^2 + |r|^2 = {norm} exceeds 1; no absorption matrix can balance it")]
    Superunitary { norm: f64 },
    #[error("mixer matrix is not unitary (max |V†V - I| = {dev:.3e})")]
    NonUnitaryMixer { dev: f64 },
    #[error(transparent)]
    SmallMat(#[from] SmallMatError),
    #[error("failed to read spectrum file: {0}")]
    Io(#[from] std::io::Error),
}

/// One four-port device at a single frequency.
#[derive(Clone, Debug)]
pub struct DeviceMatrices {
    /// Angular frequency in rad/s. Carried as metadata only; no computation
    /// depends on its value.
    pub omega: f64,
    /// 2x2 complex transmission matrix.
    pub t: CMat,
    /// 2x2 complex absorption matrix.
    pub a: CMat,
}

impl DeviceMatrices {
    pub fn new(omega: f64, t: CMat, a: CMat) -> Self {
        assert_eq!(t.dim(), (2, 2), "T must be 2x2");
        assert_eq!(a.dim(), (2, 2), "A must be 2x2");
        Self { omega, t, a }
    }
}

/// Outcome of checking the energy constraint.
#[derive(Clone, Copy, Debug)]
pub struct ValidationReport {
    /// Max-abs-entry norm of `T T† + A A† - I`.
    pub residual: f64,
    /// Tolerance the residual was compared against.
    pub tol: f64,
    pub pass: bool,
}

/// Result of rescaling a misnormalized device.
#[derive(Clone, Debug)]
pub struct RenormalizationResult {
    /// Unitary with `X K X† = diag(lambdas)` for `K = T T† + A A†`.
    pub x: CMat,
    /// Positive eigenvalues of `K`. An exactly diagonal `K` keeps its
    /// diagonal order; otherwise they come out descending.
    pub lambdas: [f64; 2],
    /// `diag(lambdas^(-1/2)) · X · T`.
    pub t_prime: CMat,
    /// `diag(lambdas^(-1/2)) · X · A`.
    pub a_prime: CMat,
}

/// Frequency-binned device spectrum.
#[derive(Clone, Debug)]
pub struct DeviceSpectrum {
    /// Bins in strictly increasing frequency order.
    pub bins: Vec<SpectrumBin>,
}

/// One frequency bin of a spectrum.
#[derive(Clone, Debug)]
pub struct SpectrumBin {
    /// Bin width in rad/s.
    pub width: f64,
    /// The device for this bin. When renormalization was requested at load
    /// time this is already the rescaled device.
    pub device: DeviceMatrices,
    /// Rescaling record when renormalization was requested at load time.
    pub renorm: Option<RenormalizationResult>,
}

impl SpectrumBin {
    pub fn omega(&self) -> f64 {
        self.device.omega
    }
}

/// Max-abs-entry norm of `T T† + A A† - I`.
pub fn energy_residual(t: &CMat, a: &CMat) -> f64 {
    let sum = t.dot(&dagger(t)) + a.dot(&dagger(a));
    maxabs_diff(&sum, &identity(2))
}

/// Check the energy constraint at the given tolerance. Failure is reported,
/// not raised; callers decide whether to reject or renormalize.
pub fn validate(d: &DeviceMatrices, tol: f64) -> ValidationReport {
    let residual = energy_residual(&d.t, &d.a);
    ValidationReport {
        residual,
        tol,
        pass: residual <= tol,
    }
}

/// Rescale a misnormalized device so the energy constraint holds.
///
/// Diagonalizes `K = T T† + A A†` as `X K X† = diag(lambda)` and scales the
/// rows of `X T` and `X A` by `lambda^(-1/2)`. Each eigenvector's phase is
/// fixed by making its first component of magnitude above 1e-12 real
/// positive, so results are reproducible; an exactly diagonal `K` yields
/// `X = I` and keeps its diagonal order.
pub fn renormalize(t: &CMat, a: &CMat) -> Result<RenormalizationResult, DeviceError> {
    let k = t.dot(&dagger(t)) + a.dot(&dagger(a));
    let k = (&k + &dagger(&k)).mapv(|z| z * 0.5);
    let diag_exact = k[[0, 1]] == Complex64::new(0.0, 0.0) && k[[1, 0]] == Complex64::new(0.0, 0.0);
    let (w, v) = smallmat::eigh(&k);
    let (w, v) = if diag_exact {
        // Keep the natural order and the exact identity eigenbasis.
        (w, v)
    } else {
        let mut v = v;
        let (w, v_sorted) = {
            let (w_s, v_s) = sort_eigh_desc(w, v.clone());
            v = v_s;
            (w_s, v)
        };
        (w, v_sorted)
    };
    let mut v = v;
    phase_fix_columns(&mut v);
    for &val in &w {
        if val <= COMMUTATOR_FLOOR {
            return Err(DeviceError::SingularCommutator { value: val });
        }
    }
    let x = dagger(&v);
    let mut scaled_x = x.clone();
    for row in 0..2 {
        let factor = 1.0 / w[row].sqrt();
        for col in 0..2 {
            scaled_x[[row, col]] *= factor;
        }
    }
    Ok(RenormalizationResult {
        x,
        lambdas: [w[0], w[1]],
        t_prime: scaled_x.dot(t),
        a_prime: scaled_x.dot(a),
    })
}

/// Build a lossy beam splitter from a complex transmittance `t`, a complex
/// reflectance `r`, and a unitary mixer `V` distributing the absorbed
/// excitation over the two device modes.
///
/// The transmission matrix is `[[t, r], [-r*, t*]]` and the absorption
/// matrix is `sqrt(I - T T†) V`, so the energy constraint holds by
/// construction. The frequency tag is set to zero.
pub fn make_lossy_bs(t: Complex64, r: Complex64, v: &CMat) -> Result<DeviceMatrices, DeviceError> {
    let norm = t.norm_sqr() + r.norm_sqr();
    if norm > 1.0 + SUPERUNITARY_SLACK {
        return Err(DeviceError::Superunitary { norm });
    }
    if !is_unitary(v, MIXER_TOL) {
        return Err(DeviceError::NonUnitaryMixer {
            dev: smallmat::unitary_deviation(v),
        });
    }
    let mut tm = CMat::zeros((2, 2));
    tm[[0, 0]] = t;
    tm[[0, 1]] = r;
    tm[[1, 0]] = -r.conj();
    tm[[1, 1]] = t.conj();
    let defect = identity(2) - tm.dot(&dagger(&tm));
    let a = hermitian_sqrt(&defect)?.dot(v);
    Ok(DeviceMatrices::new(0.0, tm, a))
}

#[derive(Debug, Deserialize, Serialize)]
struct SpectrumFileDto {
    bins: Vec<BinDto>,
}

#[derive(Debug, Deserialize, Serialize)]
struct BinDto {
    omega: f64,
    width: f64,
    #[serde(rename = "T")]
    t: [[[f64; 2]; 2]; 2],
    #[serde(rename = "A")]
    a: [[[f64; 2]; 2]; 2],
}

/// Convert a 2x2 complex matrix to row-major `[re, im]` pairs.
pub fn mat22_to_pairs(m: &CMat) -> [[[f64; 2]; 2]; 2] {
    let mut out = [[[0.0; 2]; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = [m[[i, j]].re, m[[i, j]].im];
        }
    }
    out
}

/// Build a 2x2 complex matrix from row-major `[re, im]` pairs.
pub fn mat22_from_pairs(p: &[[[f64; 2]; 2]; 2]) -> CMat {
    CMat::from_shape_fn((2, 2), |(i, j)| Complex64::new(p[i][j][0], p[i][j][1]))
}

/// Load a frequency-binned spectrum from a JSON file.
///
/// Every bin is validated at `tol`. A failing bin rejects the whole file
/// unless `apply_renormalization` is set, in which case every bin is
/// renormalized and the rescaling recorded, keeping the output continuous
/// across the tolerance boundary. Bins must be strictly increasing in
/// frequency with positive widths.
pub fn load_spectrum(
    path: &Path,
    tol: f64,
    apply_renormalization: bool,
) -> Result<DeviceSpectrum, DeviceError> {
    let text = std::fs::read_to_string(path)?;
    let dto: SpectrumFileDto = serde_json::from_str(&text).map_err(|e| DeviceError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut bins = Vec::with_capacity(dto.bins.len());
    let mut prev_omega = f64::NEG_INFINITY;
    for bin in &dto.bins {
        if !(bin.omega > prev_omega) {
            return Err(DeviceError::Spectrum {
                omega: bin.omega,
                message: format!(
                    "bin frequencies must be strictly increasing (previous bin at {prev_omega})"
                ),
            });
        }
        prev_omega = bin.omega;
        if !(bin.width > 0.0) {
            return Err(DeviceError::Spectrum {
                omega: bin.omega,
                message: format!("bin width must be positive, got {}", bin.width),
            });
        }
        let t = mat22_from_pairs(&bin.t);
        let a = mat22_from_pairs(&bin.a);
        let device = DeviceMatrices::new(bin.omega, t, a);
        if apply_renormalization {
            let renorm = renormalize(&device.t, &device.a)?;
            let device = DeviceMatrices::new(bin.omega, renorm.t_prime.clone(), renorm.a_prime.clone());
            bins.push(SpectrumBin {
                width: bin.width,
                device,
                renorm: Some(renorm),
            });
        } else {
            let report = validate(&device, tol);
            if !report.pass {
                return Err(DeviceError::Validation {
                    omega: bin.omega,
                    residual: report.residual,
                    tol,
                });
            }
            bins.push(SpectrumBin {
                width: bin.width,
                device,
                renorm: None,
            });
        }
    }
    Ok(DeviceSpectrum { bins })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smallmat::{cx, hermitian_sqrt, is_hermitian, maxabs};
    use crate::testutil;
    use std::io::Write;

    #[test]
    fn validate_accepts_lossless_identity() {
        let d = DeviceMatrices::new(0.0, identity(2), CMat::zeros((2, 2)));
        let report = validate(&d, 1e-10);
        assert!(report.pass);
        assert_eq!(report.residual, 0.0);
    }

    #[test]
    fn validate_accepts_balanced_absorber() {
        let half = std::f64::consts::FRAC_1_SQRT_2;
        let d = DeviceMatrices::new(
            0.0,
            identity(2).mapv(|z| z * half),
            identity(2).mapv(|z| z * half),
        );
        assert!(validate(&d, 1e-12).pass);
    }

    #[test]
    fn validate_accepts_half_mixer_with_balanced_loss() {
        let t = CMat::from_shape_fn((2, 2), |(i, j)| {
            cx(0.5 * if i == 1 && j == 0 { -1.0 } else { 1.0 }, 0.0)
        });
        let a = identity(2).mapv(|z| z * std::f64::consts::FRAC_1_SQRT_2);
        let d = DeviceMatrices::new(0.0, t, a);
        assert!(validate(&d, 1e-12).pass);
    }

    #[test]
    fn validate_reports_violation_without_panicking() {
        let d = DeviceMatrices::new(0.0, identity(2), identity(2));
        let report = validate(&d, 1e-10);
        assert!(!report.pass);
        assert!((report.residual - 1.0).abs() < 1e-15);
    }

    #[test]
    fn renormalize_is_idempotent_on_valid_devices() {
        let mut rng = testutil::rng(21);
        for _ in 0..20 {
            let d = testutil::random_device(&mut rng);
            let r = renormalize(&d.t, &d.a).unwrap();
            assert!((r.lambdas[0] - 1.0).abs() < 1e-12);
            assert!((r.lambdas[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn renormalize_keeps_diagonal_order_and_identity_basis() {
        let mut rng = testutil::rng(22);
        let u = testutil::random_unitary(&mut rng, 2);
        let v = testutil::random_unitary(&mut rng, 2);
        let scale = CMat::from_shape_fn((2, 2), |(i, j)| {
            if i == j {
                cx(if i == 0 { 2.0 } else { 1.0 }, 0.0)
            } else {
                cx(0.0, 0.0)
            }
        });
        let factor = std::f64::consts::FRAC_1_SQRT_2;
        let t = scale.mapv(|z| z * factor).dot(&u);
        let a = scale.mapv(|z| z * factor).dot(&v);
        // T T† = diag(2, 0.5) and likewise for A, so K = diag(4, 1) exactly
        // up to products of representable values.
        let r = renormalize(&t, &a).unwrap();
        assert!((r.lambdas[0] - 4.0).abs() < 1e-12);
        assert!((r.lambdas[1] - 1.0).abs() < 1e-12);
        assert!(maxabs_diff(&r.x, &identity(2)) < 1e-12);
        let d = DeviceMatrices::new(0.0, r.t_prime, r.a_prime);
        assert!(validate(&d, 1e-12).pass);
    }

    #[test]
    fn renormalize_fixes_random_positive_definite_scalings() {
        let mut rng = testutil::rng(23);
        let mut checked = 0;
        while checked < 100 {
            let t = testutil::random_cmat(&mut rng, 2);
            let a = testutil::random_cmat(&mut rng, 2);
            let k = t.dot(&dagger(&t)) + a.dot(&dagger(&a));
            let (w, _) = smallmat::eigh(&k);
            if w.iter().any(|&x| x < 1e-6) {
                continue;
            }
            checked += 1;
            let r = renormalize(&t, &a).unwrap();
            let d = DeviceMatrices::new(0.0, r.t_prime, r.a_prime);
            assert!(validate(&d, 1e-12).pass);
            assert!(is_unitary(&r.x, 1e-12));
            assert!(r.lambdas[0] > 0.0 && r.lambdas[1] > 0.0);
        }
    }

    #[test]
    fn renormalize_rejects_singular_devices() {
        let t = CMat::from_shape_fn((2, 2), |(i, j)| {
            if i == 0 && j == 0 {
                cx(1.0, 0.0)
            } else {
                cx(0.0, 0.0)
            }
        });
        let a = CMat::zeros((2, 2));
        assert!(matches!(
            renormalize(&t, &a),
            Err(DeviceError::SingularCommutator { .. })
        ));
    }

    #[test]
    fn lossy_bs_with_unit_transmittance_is_lossless() {
        let d = make_lossy_bs(cx(1.0, 0.0), cx(0.0, 0.0), &identity(2)).unwrap();
        assert_eq!(maxabs_diff(&d.t, &identity(2)), 0.0);
        assert_eq!(maxabs(&d.a), 0.0);
    }

    #[test]
    fn lossy_bs_balances_pure_transmission_loss() {
        let d = make_lossy_bs(cx(0.6, 0.0), cx(0.0, 0.0), &identity(2)).unwrap();
        let expected = identity(2).mapv(|z| z * 0.8);
        assert!(maxabs_diff(&d.a, &expected) < 1e-15);
    }

    #[test]
    fn lossy_bs_with_complex_reflectance_validates() {
        let d = make_lossy_bs(cx(0.5, 0.0), cx(0.0, 0.5), &identity(2)).unwrap();
        assert!(validate(&d, 1e-12).pass);
    }

    #[test]
    fn lossy_bs_rejects_superunitary_parameters() {
        assert!(matches!(
            make_lossy_bs(cx(1.0, 0.0), cx(0.1, 0.0), &identity(2)),
            Err(DeviceError::Superunitary { .. })
        ));
    }

    #[test]
    fn lossy_bs_rejects_non_unitary_mixer() {
        let v = identity(2).mapv(|z| z * 0.5);
        assert!(matches!(
            make_lossy_bs(cx(0.5, 0.0), cx(0.0, 0.0), &v),
            Err(DeviceError::NonUnitaryMixer { .. })
        ));
    }

    #[test]
    fn lossy_bs_always_validates_for_admissible_parameters() {
        let mut rng = testutil::rng(24);
        for _ in 0..100 {
            let d = testutil::random_scalar_loss_device(&mut rng);
            assert!(validate(&d, 1e-12).pass);
        }
    }

    #[test]
    fn accepted_devices_have_commuting_balanced_roots() {
        let mut rng = testutil::rng(25);
        for i in 0..50 {
            let d = if i % 2 == 0 {
                testutil::random_device(&mut rng)
            } else {
                testutil::random_scalar_loss_device(&mut rng)
            };
            assert!(validate(&d, 1e-10).pass);
            let c = hermitian_sqrt(&d.t.dot(&dagger(&d.t))).unwrap();
            let s = hermitian_sqrt(&d.a.dot(&dagger(&d.a))).unwrap();
            assert!(maxabs_diff(&c.dot(&s), &s.dot(&c)) < 1e-9);
            let sum = c.dot(&c) + s.dot(&s);
            assert!(maxabs_diff(&sum, &identity(2)) < 1e-10);
            assert!(is_hermitian(&c, 1e-12) && is_hermitian(&s, 1e-12));
        }
    }

    fn write_spectrum(json: &serde_json::Value) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, "{}", serde_json::to_string_pretty(json).unwrap()).unwrap();
        f.flush().unwrap();
        f
    }

    fn identity_bin(omega: f64) -> serde_json::Value {
        serde_json::json!({
            "omega": omega,
            "width": 1.0,
            "T": [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [1.0, 0.0]]],
            "A": [[[0.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]],
        })
    }

    #[test]
    fn load_spectrum_reads_a_single_lossless_bin() {
        let f = write_spectrum(&serde_json::json!({ "bins": [identity_bin(1.0)] }));
        let s = load_spectrum(f.path(), 1e-10, false).unwrap();
        assert_eq!(s.bins.len(), 1);
        assert_eq!(s.bins[0].omega(), 1.0);
        assert!(s.bins[0].renorm.is_none());
        assert_eq!(maxabs_diff(&s.bins[0].device.t, &identity(2)), 0.0);
    }

    #[test]
    fn load_spectrum_reports_parse_position() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, "{{\"bins\": [\n  {{broken").unwrap();
        f.flush().unwrap();
        match load_spectrum(f.path(), 1e-10, false) {
            Err(DeviceError::Parse { line, column, .. }) => {
                assert_eq!(line, 2);
                assert!(column > 0);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn load_spectrum_names_the_failing_bin() {
        let bad = serde_json::json!({
            "omega": 7.5,
            "width": 1.0,
            "T": [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [1.0, 0.0]]],
            "A": [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [1.0, 0.0]]],
        });
        let f = write_spectrum(&serde_json::json!({ "bins": [identity_bin(1.0), bad] }));
        match load_spectrum(f.path(), 1e-10, false) {
            Err(DeviceError::Validation { omega, .. }) => assert_eq!(omega, 7.5),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn load_spectrum_renormalizes_when_requested() {
        // T T† + A A† = diag(4, 1) by the same construction as the direct
        // renormalize test.
        let factor = std::f64::consts::FRAC_1_SQRT_2;
        let mut t = CMat::zeros((2, 2));
        t[[0, 0]] = cx(2.0 * factor, 0.0);
        t[[1, 1]] = cx(factor, 0.0);
        let a = t.clone();
        let bin = serde_json::json!({
            "omega": 2.0,
            "width": 0.5,
            "T": mat22_to_pairs(&t),
            "A": mat22_to_pairs(&a),
        });
        let f = write_spectrum(&serde_json::json!({ "bins": [bin] }));
        assert!(matches!(
            load_spectrum(f.path(), 1e-10, false),
            Err(DeviceError::Validation { .. })
        ));
        let s = load_spectrum(f.path(), 1e-10, true).unwrap();
        let renorm = s.bins[0].renorm.as_ref().unwrap();
        assert!((renorm.lambdas[0] - 4.0).abs() < 1e-12);
        assert!((renorm.lambdas[1] - 1.0).abs() < 1e-12);
        assert!(validate(&s.bins[0].device, 1e-12).pass);
    }

    #[test]
    fn load_spectrum_rejects_unsorted_bins() {
        let f = write_spectrum(&serde_json::json!({
            "bins": [identity_bin(2.0), identity_bin(1.0)]
        }));
        match load_spectrum(f.path(), 1e-10, false) {
            Err(DeviceError::Spectrum { omega, .. }) => assert_eq!(omega, 1.0),
            other => panic!("expected spectrum error, got {other:?}"),
        }
    }

    #[test]
    fn load_spectrum_rejects_nonpositive_width() {
        let mut bin = identity_bin(1.0);
        bin["width"] = serde_json::json!(0.0);
        let f = write_spectrum(&serde_json::json!({ "bins": [bin] }));
        assert!(matches!(
            load_spectrum(f.path(), 1e-10, false),
            Err(DeviceError::Spectrum { .. })
        ));
    }

    #[test]
    fn matrix_pair_encoding_round_trips() {
        let mut rng = testutil::rng(26);
        let m = testutil::random_cmat(&mut rng, 2);
        let back = mat22_from_pairs(&mat22_to_pairs(&m));
        assert_eq!(maxabs_diff(&m, &back), 0.0);
    }
}
