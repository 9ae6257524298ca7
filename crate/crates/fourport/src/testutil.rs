//! Seeded random matrix and device generators shared by the unit tests.

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::device::{make_lossy_bs, DeviceMatrices};
use crate::smallmat::{dagger, eigh, hermitian_sqrt, identity, polar_unitary, CMat};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_cmat(rng: &mut ChaCha8Rng, n: usize) -> CMat {
    Array2::from_shape_fn((n, n), |_| {
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    })
}

pub fn random_unitary(rng: &mut ChaCha8Rng, n: usize) -> CMat {
    polar_unitary(&random_cmat(rng, n))
}

/// Largest singular value.
pub fn spectral_norm(m: &CMat) -> f64 {
    let (w, _) = eigh(&dagger(m).dot(m));
    w.into_iter().fold(0.0f64, f64::max).max(0.0).sqrt()
}

/// Random valid device whose transmission matrix has generically distinct
/// singular values, so `T T†` is not scalar.
pub fn random_device(rng: &mut ChaCha8Rng) -> DeviceMatrices {
    let g = random_cmat(rng, 2);
    let margin = rng.gen_range(0.2..0.95);
    let t = g.mapv(|z| z * (margin / spectral_norm(&g)));
    let defect = identity(2) - t.dot(&dagger(&t));
    let a = hermitian_sqrt(&defect).unwrap().dot(&random_unitary(rng, 2));
    DeviceMatrices::new(0.0, t, a)
}

/// Random valid device built from scalar beam splitter parameters, so
/// `T T†` is exactly scalar.
pub fn random_scalar_loss_device(rng: &mut ChaCha8Rng) -> DeviceMatrices {
    let radius = rng.gen_range(0.05..0.999f64);
    let split = rng.gen_range(0.0..std::f64::consts::FRAC_PI_2);
    let (pt, pr) = (
        rng.gen_range(0.0..std::f64::consts::TAU),
        rng.gen_range(0.0..std::f64::consts::TAU),
    );
    let t = Complex64::from_polar(radius * split.cos(), pt);
    let r = Complex64::from_polar(radius * split.sin(), pr);
    let v = random_unitary(rng, 2);
    make_lossy_bs(t, r, &v).unwrap()
}
