use nalgebra::SymmetricEigen;

use crate::fock::{C64, CMat};

/// `exp(i t H)` for Hermitian `H` via its eigendecomposition.
pub(crate) fn exp_i_hermitian(h: &CMat, t: f64) -> CMat {
    HermitianSpectrum::new(h).exp_i(t)
}

/// Cached spectral form of a Hermitian generator so `exp(i t H)` can be
/// evaluated for many `t` with one decomposition.
#[derive(Clone, Debug)]
pub(crate) struct HermitianSpectrum {
    vectors: CMat,
    values: Vec<f64>,
}

impl HermitianSpectrum {
    pub(crate) fn new(h: &CMat) -> Self {
        let eig = SymmetricEigen::new(h.clone());
        Self {
            vectors: eig.eigenvectors,
            values: eig.eigenvalues.iter().copied().collect(),
        }
    }

    pub(crate) fn exp_i(&self, t: f64) -> CMat {
        let mut scaled = self.vectors.clone();
        for (j, lam) in self.values.iter().enumerate() {
            let ph = C64::from_polar(1.0, t * lam);
            for i in 0..scaled.nrows() {
                scaled[(i, j)] *= ph;
            }
        }
        &scaled * self.vectors.adjoint()
    }
}

pub(crate) fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = CMat::zeros(ra * rb, ca * cb);
    for i in 0..ra {
        for j in 0..ca {
            let aij = a[(i, j)];
            if aij == C64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..rb {
                for l in 0..cb {
                    out[(i * rb + k, j * cb + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Largest entry of `|A - B|` restricted to the leading `keep × keep` block.
pub(crate) fn max_abs_diff_block(a: &CMat, b: &CMat, keep: usize) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..keep.min(a.nrows()) {
        for j in 0..keep.min(a.ncols()) {
            worst = worst.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    worst
}

/// `ln n!` for `n = 0..len`.
pub(crate) fn ln_factorials(len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len.max(1));
    out.push(0.0);
    for n in 1..len {
        let prev = out[n - 1];
        out.push(prev + (n as f64).ln());
    }
    out
}

pub(crate) fn ln_binomial(ln_fact: &[f64], n: usize, k: usize) -> f64 {
    ln_fact[n] - ln_fact[k] - ln_fact[n - k]
}
