//! GKP telecorrection with the envelope replaced by random Gaussian shifts.
//!
//! Each rail then fails independently when its accumulated shift rounds to
//! the wrong lattice parity, so the whole model is two success probabilities.

use std::f64::consts::{PI, SQRT_2};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::logical_bin;
use crate::telecorrect::FidelityReport;

const LATTICE_TOL: f64 = 1e-12;
const MC_BLOCK: u64 = 65_536;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwirlParams {
    pub delta_data: f64,
    pub delta_anci: f64,
    pub eta: f64,
}

impl TwirlParams {
    pub fn new(delta_data: f64, delta_anci: f64, eta: f64) -> Result<Self> {
        let p = Self {
            delta_data,
            delta_anci,
            eta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, d) in [("delta_data", self.delta_data), ("delta_anci", self.delta_anci)] {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {d}")));
            }
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::InvalidParameter(format!("efficiency {} outside (0, 1]", self.eta)));
        }
        Ok(())
    }
}

/// Mass of `N(0, σ²)` in `[a, b]` for `0 <= a < b`, taken from the upper
/// tails so that far-out cells keep their relative precision.
fn gaussian_mass(a: f64, b: f64, sigma: f64) -> f64 {
    let s = sigma * SQRT_2;
    0.5 * (libm::erfc(a / s) - libm::erfc(b / s))
}

/// Probability that a shift `u ~ N(0, σ²)` lands in a cell
/// `[(2n - ½)√π, (2n + ½)√π]`.
pub fn p_succ(sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return 1.0;
    }
    let h = PI.sqrt();
    let s = sigma * SQRT_2;
    let mut total = libm::erf(0.5 * h / s);
    let mut n = 1u64;
    loop {
        let (lo, hi) = ((2 * n) as f64 - 0.5, (2 * n) as f64 + 0.5);
        let inc = 2.0 * gaussian_mass(lo * h, hi * h, sigma);
        total += inc;
        if inc < LATTICE_TOL && lo * h > sigma {
            return total;
        }
        n += 1;
    }
}

/// `(σ²_data, σ²_anci)`. The detector term is halved with `cc_amplification`.
pub fn effective_variances(p: &TwirlParams, cc_amplification: bool) -> (f64, f64) {
    let shared = 0.5 * (p.delta_data * p.delta_data + p.delta_anci * p.delta_anci);
    let loss = (1.0 - p.eta) / p.eta;
    let loss = if cc_amplification { 0.5 * loss } else { loss };
    (shared + loss, shared)
}

/// Without cc amplification the detector is modeled as loss followed by
/// amplification. There is no Lindblad noise here, so the break-even
/// reference is the perfect qubit.
pub fn twirl_fidelity(p: &TwirlParams, cc_amplification: bool) -> Result<FidelityReport> {
    p.validate()?;
    let (vd, va) = effective_variances(p, cc_amplification);
    let fe = p_succ(vd.sqrt()) * p_succ(va.sqrt());
    Ok(FidelityReport::new(fe, 1.0, 0.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub samples: u64,
}

fn successes(sigma: f64, rail: u64, block: u64, count: u64, seed: u64) -> Vec<bool> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream((rail << 32) | block);
    (0..count)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            logical_bin(sigma * z, 1.0) == 0
        })
        .collect()
}

/// Joint success rate of closest-integer decoding on both rails under
/// Gaussian shifts. Each rail and block of samples has its own generator
/// stream, so the estimate does not depend on the thread count.
pub fn monte_carlo_oracle(sigma_data: f64, sigma_anci: f64, samples: u64, seed: u64) -> Result<MonteCarloEstimate> {
    if samples < 10_000 {
        return Err(Error::InvalidParameter(format!("need at least 1e4 samples, got {samples}")));
    }
    if !(sigma_data >= 0.0 && sigma_anci >= 0.0) {
        return Err(Error::InvalidParameter("shift widths must be >= 0".into()));
    }
    let blocks = samples.div_ceil(MC_BLOCK);
    let hits: u64 = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let count = MC_BLOCK.min(samples - b * MC_BLOCK);
            let d = successes(sigma_data, 0, b, count, seed);
            let a = successes(sigma_anci, 1, b, count, seed);
            d.iter().zip(&a).filter(|(x, y)| **x && **y).count() as u64
        })
        .collect::<Vec<u64>>()
        .into_iter()
        .sum();
    let p = hits as f64 / samples as f64;
    Ok(MonteCarloEstimate {
        estimate: p,
        stderr: (p * (1.0 - p) / samples as f64).sqrt(),
        samples,
    })
}
