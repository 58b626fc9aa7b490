//! Phase measurements described by an `H` matrix, homodyne binning for GKP
//! readout, and the modular phase uncertainty of rotation codes.
//!
//! A covariant phase POVM has elements
//! `F(φ) = (1/2π) Σ_{mn} H_{mn} e^{iφ(m-n)} |m⟩⟨n|` with `H_{mm} = 1`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codes::CodeWords;
use crate::error::{Error, Result};
use crate::fock::{QuadratureTransform, TruncatedSpace, C64, CMat};
use crate::linalg::{ln_binomial, ln_factorials};
use crate::noise::pure_loss_channel;

/// Relative change allowed when the adaptive-homodyne series is doubled.
pub const AHD_SERIES_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Can,
    Het,
    Ahd,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Can => "can",
            Scheme::Het => "het",
            Scheme::Ahd => "ahd",
        }
    }

    pub const ALL: [Scheme; 3] = [Scheme::Can, Scheme::Ahd, Scheme::Het];
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "can" => Ok(Scheme::Can),
            "het" => Ok(Scheme::Het),
            "ahd" => Ok(Scheme::Ahd),
            other => Err(Error::InvalidParameter(format!("unknown scheme {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HMatrix {
    scheme: Scheme,
    entries: DMatrix<f64>,
}

impl HMatrix {
    /// Wraps raw entries; used for fault injection and deserialization.
    pub fn from_entries(scheme: Scheme, entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() < 2 {
            return Err(Error::InvalidDim(entries.nrows()));
        }
        Ok(Self { scheme, entries })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.entries[(m, n)]
    }

    /// Leading `dim × dim` block.
    pub fn truncated(&self, dim: usize) -> Result<HMatrix> {
        if dim > self.dim() {
            return Err(Error::DimMismatch {
                left: dim,
                right: self.dim(),
            });
        }
        Ok(HMatrix {
            scheme: self.scheme,
            entries: self.entries.view((0, 0), (dim, dim)).into_owned(),
        })
    }

    /// H matrix of the same POVM preceded by pure loss of transmissivity
    /// `eta`, i.e. the Heisenberg image of `F(φ)` under the loss channel.
    ///
    /// `H'_mn = Σ_k A_k(m) A_k(n) H_{m-k,n-k}` with
    /// `A_k(n)² = C(n,k) η^{n-k} (1-η)^k`. Stays covariant with unit diagonal.
    pub fn after_loss(&self, eta: f64) -> Result<HMatrix> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::InvalidParameter(format!("efficiency {eta} outside (0, 1]")));
        }
        if eta == 1.0 {
            return Ok(self.clone());
        }
        let dim = self.dim();
        let ln_fact = ln_factorials(dim);
        let (ln_eta, ln_loss) = (eta.ln(), (1.0 - eta).ln());
        let amp = |n: usize, k: usize| {
            (0.5 * (ln_binomial(&ln_fact, n, k) + (n - k) as f64 * ln_eta + k as f64 * ln_loss)).exp()
        };
        let entries = DMatrix::from_fn(dim, dim, |m, n| {
            (0..=m.min(n))
                .map(|k| amp(m, k) * amp(n, k) * self.entries[(m - k, n - k)])
                .sum()
        });
        Ok(HMatrix {
            scheme: self.scheme,
            entries,
        })
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.entries.clone()).eigenvalues.min()
    }

    /// `max_m |H_mm - 1|`.
    pub fn diagonal_defect(&self) -> f64 {
        (0..self.dim())
            .map(|m| (self.entries[(m, m)] - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `max |Σ_b F_b Δφ - I|` for a midpoint grid of `bins` bins.
    pub fn completeness_defect(&self, bins: usize) -> f64 {
        let grid = PhaseGrid::new(bins).expect("bins validated by caller");
        let dim = self.dim();
        let mut worst: f64 = 0.0;
        for m in 0..dim {
            for n in 0..dim {
                let d = m as f64 - n as f64;
                let s: C64 = grid
                    .centers()
                    .map(|phi| C64::from_polar(1.0, phi * d))
                    .sum::<C64>()
                    * (self.entries[(m, n)] * grid.width() / (2.0 * PI));
                let want = if m == n { 1.0 } else { 0.0 };
                worst = worst.max((s - C64::new(want, 0.0)).norm());
            }
        }
        worst
    }
}

/// Canonical phase measurement: every entry is one.
pub fn h_canonical(space: TruncatedSpace) -> HMatrix {
    HMatrix {
        scheme: Scheme::Can,
        entries: DMatrix::from_element(space.dim(), space.dim(), 1.0),
    }
}

/// Heterodyne: `H_mn = Γ((m+n)/2 + 1)/√(m! n!)`.
pub fn h_heterodyne(space: TruncatedSpace) -> HMatrix {
    let dim = space.dim();
    let ln_fact = ln_factorials(dim);
    let entries = DMatrix::from_fn(dim, dim, |m, n| {
        (libm::lgamma((m + n) as f64 / 2.0 + 1.0) - 0.5 * (ln_fact[m] + ln_fact[n])).exp()
    });
    HMatrix {
        scheme: Scheme::Het,
        entries,
    }
}

/// Moments `M_{n,m}` from the two-index recursion, `M_{n,0} = 1/(2n+1)!!`.
pub fn ahd_moments(size: usize) -> DMatrix<f64> {
    let mut m = DMatrix::<f64>::zeros(size, size);
    // (2n+1)!! is exact in f64 up to 2^53; past that divide step by step.
    let mut dfact = 1.0f64;
    let mut v = 1.0f64;
    for n in 0..size {
        if n > 0 {
            dfact *= (2 * n + 1) as f64;
            v = if dfact < 9.007_199_254_740_992e15 {
                1.0 / dfact
            } else {
                v / (2 * n + 1) as f64
            };
        }
        m[(n, 0)] = v;
        m[(0, n)] = v;
    }
    for n in 1..size {
        for k in 1..size {
            let diff = n as f64 - k as f64;
            m[(n, k)] = (n as f64 * m[(n - 1, k)] + k as f64 * m[(n, k - 1)])
                / (2.0 * diff * diff + n as f64 + k as f64);
        }
    }
    m
}

fn generalized_binomials(alpha: f64, len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len + 1);
    out.push(1.0);
    for k in 1..=len {
        let prev = out[k - 1];
        out.push(prev * (alpha - k as f64 + 1.0) / k as f64);
    }
    out
}

/// `γ_{m,p} = √m! / (2^p (m-2p)! p!)` for `p ≤ m/2`.
fn ahd_gamma(m: usize, ln_fact: &[f64]) -> Vec<f64> {
    (0..=m / 2)
        .map(|p| {
            (0.5 * ln_fact[m] - p as f64 * 2f64.ln() - ln_fact[m - 2 * p] - ln_fact[p]).exp()
        })
        .collect()
}

fn ahd_entries(dim: usize, ell_max: usize) -> DMatrix<f64> {
    let p_len = dim / 2 + 1;
    let size = p_len + ell_max + 1;
    let moments = ahd_moments(size);
    let ln_fact = ln_factorials(dim.max(2));
    let gammas: Vec<Vec<f64>> = (0..dim).map(|m| ahd_gamma(m, &ln_fact)).collect();
    let rows: Vec<Vec<(usize, usize, f64)>> = (0..dim)
        .into_par_iter()
        .map(|d| {
            let j = d as f64 / 2.0;
            let b_row = generalized_binomials(j, ell_max);
            let b_col = generalized_binomials(-j, ell_max);
            // Only p ≤ (dim-1-d)/2 and q ≤ (dim-1)/2 are needed.
            let p_need = (dim - 1 - d) / 2 + 1;
            let q_need = (dim - 1) / 2 + 1;
            // M'_{a,q} = Σ_ℓ' binom(-j,ℓ') M_{a,q+ℓ'}
            let a_need = p_need + ell_max + 1;
            let mut mp = DMatrix::<f64>::zeros(a_need, q_need);
            for a in 0..a_need {
                for q in 0..q_need {
                    let mut acc = 0.0;
                    for (l, b) in b_col.iter().enumerate() {
                        acc += b * moments[(a, q + l)];
                    }
                    mp[(a, q)] = acc;
                }
            }
            // C_{p,q} = Σ_ℓ binom(j,ℓ) M'_{p+ℓ,q}
            let mut c = DMatrix::<f64>::zeros(p_need, q_need);
            for p in 0..p_need {
                for q in 0..q_need {
                    let mut acc = 0.0;
                    for (l, b) in b_row.iter().enumerate() {
                        acc += b * mp[(p + l, q)];
                    }
                    c[(p, q)] = acc;
                }
            }
            (0..dim - d)
                .map(|m| {
                    let n = m + d;
                    let (gm, gn) = (&gammas[m], &gammas[n]);
                    let mut h = 0.0;
                    for (p, x) in gm.iter().enumerate() {
                        for (q, y) in gn.iter().enumerate() {
                            h += x * y * c[(p, q)];
                        }
                    }
                    (m, n, h)
                })
                .collect()
        })
        .collect();
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for row in rows {
        for (m, n, v) in row {
            h[(m, n)] = v;
            h[(n, m)] = v;
        }
    }
    h
}

/// Adaptive homodyne H matrix from the moment series truncated at
/// `ell_max`; fails if doubling the truncation changes any entry by more
/// than [`AHD_SERIES_TOL`].
pub fn h_adaptive_homodyne(space: TruncatedSpace, ell_max: usize) -> Result<HMatrix> {
    let dim = space.dim();
    if ell_max < dim - 1 {
        return Err(Error::InvalidParameter(format!(
            "series truncation {ell_max} below max Fock index {}",
            dim - 1
        )));
    }
    let a = ahd_entries(dim, ell_max);
    let b = ahd_entries(dim, 2 * ell_max);
    let change = a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / y.abs().max(1e-300).max(1.0))
        .fold(0.0, f64::max);
    if change > AHD_SERIES_TOL {
        return Err(Error::SeriesNonConvergence {
            change,
            tol: AHD_SERIES_TOL,
        });
    }
    Ok(HMatrix {
        scheme: Scheme::Ahd,
        entries: b,
    })
}

/// Default truncation `2 dim`, but never below 64 terms: the low-order
/// entries converge slowly enough that tiny spaces need the extra terms.
pub fn h_adaptive_homodyne_default(space: TruncatedSpace) -> Result<HMatrix> {
    h_adaptive_homodyne(space, (2 * space.dim()).max(64))
}

pub fn h_matrix(scheme: Scheme, space: TruncatedSpace) -> Result<HMatrix> {
    match scheme {
        Scheme::Can => Ok(h_canonical(space)),
        Scheme::Het => Ok(h_heterodyne(space)),
        Scheme::Ahd => h_adaptive_homodyne_default(space),
    }
}

/// `B` equal phase bins covering `[0, 2π)`; bin `b` is centered on `bΔφ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseGrid {
    bins: usize,
}

impl PhaseGrid {
    pub fn new(bins: usize) -> Result<Self> {
        if bins < 8 {
            return Err(Error::InvalidParameter(format!("need at least 8 phase bins, got {bins}")));
        }
        Ok(Self { bins })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn width(&self) -> f64 {
        2.0 * PI / self.bins as f64
    }

    pub fn center(&self, b: usize) -> f64 {
        b as f64 * self.width()
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.bins).map(|b| self.center(b))
    }
}

/// `S_d = Σ_{m-n=d} H_mn ρ_nm` for `d ∈ (-dim, dim)`, stored at `d + dim - 1`.
pub fn phase_moments(h: &HMatrix, rho: &CMat) -> Result<Vec<C64>> {
    let dim = h.dim();
    if rho.nrows() != dim || rho.ncols() != dim {
        return Err(Error::DimMismatch {
            left: rho.nrows(),
            right: dim,
        });
    }
    let mut s = vec![C64::new(0.0, 0.0); 2 * dim - 1];
    for m in 0..dim {
        for n in 0..dim {
            s[m + dim - 1 - n] += rho[(n, m)] * h.entries[(m, n)];
        }
    }
    Ok(s)
}

/// Bin weights from phase moments: `w_b = (Δφ/2π) Σ_d e^{iφ_b d} S_d`.
pub fn weights_from_moments(moments: &[C64], grid: &PhaseGrid) -> Vec<C64> {
    let dim = (moments.len() + 1) / 2;
    let scale = grid.width() / (2.0 * PI);
    grid.centers()
        .map(|phi| {
            let mut acc = C64::new(0.0, 0.0);
            for (k, s) in moments.iter().enumerate() {
                if *s != C64::new(0.0, 0.0) {
                    let d = k as f64 - (dim - 1) as f64;
                    acc += s * C64::from_polar(1.0, phi * d);
                }
            }
            acc * scale
        })
        .collect()
}

/// Midpoint-rule outcome weights `w_b = Δφ Tr[F(φ_b) ρ]`. Complex when `ρ`
/// is not Hermitian.
pub fn phase_outcome_weights(h: &HMatrix, grid: &PhaseGrid, rho: &CMat) -> Result<Vec<C64>> {
    Ok(weights_from_moments(&phase_moments(h, rho)?, grid))
}

/// `Δ = 1/|⟨e^{iNθ}⟩|² - 1` with `⟨e^{iNθ}⟩ = ½ Σ_k |f_kN f_(k+1)N H_{kN,(k+1)N}|`
/// and `f = |0⟩ + |1⟩` (unnormalized).
pub fn modular_phase_uncertainty(code: &CodeWords, order: usize, h: &HMatrix) -> Result<f64> {
    let dim = code.space().dim();
    if h.dim() < dim {
        return Err(Error::DimMismatch {
            left: h.dim(),
            right: dim,
        });
    }
    let f = code.zero().coeffs() + code.one().coeffs();
    let mut mean = 0.0;
    let mut k = 0;
    while (k + 1) * order < dim {
        let (a, b) = (k * order, (k + 1) * order);
        mean += (f[a] * f[b] * h.get(a, b)).norm();
        k += 1;
    }
    mean *= 0.5;
    if mean == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(1.0 / (mean * mean) - 1.0)
}

/// Homodyne outcome grid with closest-integer assignment to logical bins.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureBinning {
    grid: Vec<f64>,
    boundary_scale: f64,
}

impl QuadratureBinning {
    pub fn new(grid: Vec<f64>, boundary_scale: f64) -> Result<Self> {
        if grid.len() < 3 || grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("binning grid must be increasing".into()));
        }
        let (lo, hi) = (grid[0], grid[grid.len() - 1]);
        if (lo + hi).abs() > 1e-9 * hi.abs() {
            return Err(Error::InvalidParameter("binning grid must be symmetric about 0".into()));
        }
        if hi < 3.0 * PI.sqrt() * boundary_scale {
            return Err(Error::InvalidParameter("binning grid must cover 6 lattice periods".into()));
        }
        if !(boundary_scale > 0.0) {
            return Err(Error::InvalidParameter("boundary scale must be positive".into()));
        }
        Ok(Self {
            grid,
            boundary_scale,
        })
    }

    /// `points` uniform samples of `[-half_width, half_width]`.
    pub fn uniform(half_width: f64, points: usize, boundary_scale: f64) -> Result<Self> {
        let grid = (0..points)
            .map(|i| -half_width + 2.0 * half_width * i as f64 / (points - 1) as f64)
            .collect();
        Self::new(grid, boundary_scale)
    }

    /// `[-8√π, 8√π]` with 1024 points.
    pub fn default_grid(boundary_scale: f64) -> Self {
        Self::uniform(8.0 * PI.sqrt(), 1024, boundary_scale).expect("default grid is valid")
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn boundary_scale(&self) -> f64 {
        self.boundary_scale
    }

    /// Closest-integer rule: `round(p / (scale √π)) mod 2`.
    pub fn logical_bin(&self, p: f64) -> usize {
        logical_bin(p, self.boundary_scale)
    }
}

pub fn logical_bin(p: f64, boundary_scale: f64) -> usize {
    let k = (p / (boundary_scale * PI.sqrt())).round() as i64;
    k.rem_euclid(2) as usize
}

/// Homodyne mass assigned to logical bins 0 and 1.
pub fn homodyne_bin_weights(
    binning: &QuadratureBinning,
    transform: &QuadratureTransform,
    rho: &CMat,
) -> Result<[C64; 2]> {
    if transform.grid() != binning.grid() {
        return Err(Error::InvalidParameter("transform and binning grids differ".into()));
    }
    let dim = transform.dim();
    if rho.nrows() != dim || rho.ncols() != dim {
        return Err(Error::DimMismatch {
            left: rho.nrows(),
            right: dim,
        });
    }
    let amp = transform.amplitudes();
    let weights = transform.trapezoid_weights();
    let dens_mat = amp * rho;
    let mut out = [C64::new(0.0, 0.0); 2];
    let mut total = C64::new(0.0, 0.0);
    for (g, &p) in binning.grid.iter().enumerate() {
        let mut dens = C64::new(0.0, 0.0);
        for m in 0..dim {
            dens += dens_mat[(g, m)] * amp[(g, m)].conj();
        }
        let w = dens * weights[g];
        out[binning.logical_bin(p)] += w;
        total += w;
    }
    let tr: C64 = (0..dim).map(|i| rho[(i, i)]).sum();
    let missing = (tr - total).norm();
    if missing > 1e-6 {
        return Err(Error::GridTooSmall { mass: missing });
    }
    Ok(out)
}

/// Pure loss of transmissivity `η` applied before an ideal detector.
pub fn inefficient_measurement_preprocess(eta: f64, rho: &CMat) -> Result<CMat> {
    let space = TruncatedSpace::new(rho.nrows())?;
    pure_loss_channel(eta, space)?.apply(rho)
}
