//! Generated desk-scale datasets for demos and tests.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::matrix::Matrix;
use crate::seed;

/// Two-dimensional Gaussian blobs, one per center, `n_per_class` rows each.
pub fn gaussian_blobs(
    n_per_class: usize,
    centers: &[(f64, f64)],
    sigma: f64,
    seed_value: u64,
) -> Dataset {
    let mut rng = seed::rng(seed_value, "blobs", &[]);
    let mut rows = Vec::with_capacity(n_per_class * centers.len());
    let mut labels = Vec::with_capacity(n_per_class * centers.len());
    for (class, &(cx, cy)) in centers.iter().enumerate() {
        for _ in 0..n_per_class {
            rows.push(vec![
                cx + sigma * normal(&mut rng),
                cy + sigma * normal(&mut rng),
            ]);
            labels.push(class);
        }
    }
    Dataset::from_numeric(Matrix::from_rows(&rows), labels).expect("blob data is valid")
}

/// The classic well-separated two-blob sanity dataset.
pub fn separable_blobs(n_per_class: usize, seed_value: u64) -> Dataset {
    gaussian_blobs(n_per_class, &[(-3.0, -3.0), (3.0, 3.0)], 0.4, seed_value)
}

/// All `2^bits` binary patterns replicated `replicas` times; the label is
/// the XOR (parity) of the bits. Noiseless and perfectly balanced.
pub fn parity_bits(bits: usize, replicas: usize) -> Dataset {
    assert!((1..=16).contains(&bits));
    let patterns = 1usize << bits;
    let mut rows = Vec::with_capacity(patterns * replicas);
    let mut labels = Vec::with_capacity(patterns * replicas);
    for pattern in 0..patterns {
        let row: Vec<f64> = (0..bits)
            .map(|b| f64::from((pattern >> b) as u32 & 1))
            .collect();
        let parity = (pattern.count_ones() % 2) as usize;
        for _ in 0..replicas {
            rows.push(row.clone());
            labels.push(parity);
        }
    }
    Dataset::from_numeric(Matrix::from_rows(&rows), labels).expect("parity data is valid")
}

/// Noiseless XOR: the four 2-bit patterns replicated `replicas` times.
pub fn xor_grid(replicas: usize) -> Dataset {
    parity_bits(2, replicas)
}

/// Standard normal draw via Box–Muller; two uniforms per call keeps the
/// stream position independent of earlier draws.
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
