//! Single-mode noise channels acting on truncated-Fock operators.
//!
//! Channels act on arbitrary `dim × dim` matrices, not only density
//! matrices; the telecorrection kernels push coherences `|i⟩⟨j|` between
//! different logical states through them.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{ladder_operators, TruncatedSpace, C64, CMat};
use crate::linalg::{ln_factorials, HermitianSpectrum};

/// Per-step absolute tolerance of the loss integrator.
pub const INTEGRATOR_TOL: f64 = 1e-10;

const MAX_STEPS: usize = 200_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LindbladParams {
    pub kappa_tau: f64,
    pub kappa_phi_tau: f64,
}

impl LindbladParams {
    pub fn new(kappa_tau: f64, kappa_phi_tau: f64) -> Result<Self> {
        let p = Self {
            kappa_tau,
            kappa_phi_tau,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn noiseless() -> Self {
        Self {
            kappa_tau: 0.0,
            kappa_phi_tau: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("kappa_tau", self.kappa_tau), ("kappa_phi_tau", self.kappa_phi_tau)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.kappa_tau == 0.0 && self.kappa_phi_tau == 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianDisplacementParams {
    pub sigma_sq: f64,
}

/// Kraus operator. Most channels here only have operators that shift the
/// photon number by a fixed amount, which are stored as one coefficient per
/// input level.
#[derive(Clone, Debug)]
pub enum KrausOp {
    /// `K|n⟩ = coeffs[n] |n + shift⟩`, dropped when `n + shift` leaves the space.
    ShiftDiag { shift: isize, coeffs: Vec<f64> },
    Dense(CMat),
}

impl KrausOp {
    pub fn to_dense(&self, dim: usize) -> CMat {
        match self {
            KrausOp::Dense(m) => m.clone(),
            KrausOp::ShiftDiag { shift, coeffs } => {
                let mut m = CMat::zeros(dim, dim);
                for (n, &c) in coeffs.iter().enumerate() {
                    let out = n as isize + shift;
                    if out >= 0 && (out as usize) < dim {
                        m[(out as usize, n)] = C64::new(c, 0.0);
                    }
                }
                m
            }
        }
    }

    /// Accumulates `K ρ K†` into `out`.
    fn accumulate(&self, rho: &CMat, out: &mut CMat) {
        match self {
            KrausOp::Dense(k) => {
                *out += k * rho * k.adjoint();
            }
            KrausOp::ShiftDiag { shift, coeffs } => {
                let (dim, shift) = (rho.nrows() as isize, *shift);
                let lo = (-shift).max(0) as usize;
                let hi = (dim - shift.max(0)).max(0) as usize;
                for m in lo..hi {
                    let cm = coeffs[m];
                    if cm == 0.0 {
                        continue;
                    }
                    let om = (m as isize + shift) as usize;
                    for n in lo..hi {
                        let c = coeffs[n] * cm;
                        if c != 0.0 {
                            out[((n as isize + shift) as usize, om)] += rho[(n, m)] * c;
                        }
                    }
                }
            }
        }
    }
}

/// Loss and number dephasing integrated over one unit of dimensionless time.
///
/// The GKSL equation keeps each diagonal `ρ_{n,n-d}` closed:
/// `dρ_{nm}/dt = κ√((n+1)(m+1)) ρ_{n+1,m+1} - [κ(n+m)/2 + κ_φ(n-m)²/2] ρ_{nm}`.
/// The dephasing term is a constant on each diagonal, so it factors out
/// exactly as `e^{-κ_φτ d²/2}`; the loss part is integrated with an adaptive
/// Dormand–Prince scheme, giving one upper-triangular transfer matrix per
/// `|d|`.
#[derive(Clone, Debug)]
pub struct LossDephasingMap {
    dim: usize,
    params: LindbladParams,
    transfers: Vec<DMatrix<f64>>,
    achieved_error: f64,
}

impl LossDephasingMap {
    pub fn new(params: LindbladParams, space: TruncatedSpace) -> Result<Self> {
        params.validate()?;
        let dim = space.dim();
        let kappa = params.kappa_tau;
        let results: Vec<Result<(DMatrix<f64>, f64)>> = (0..dim)
            .into_par_iter()
            .map(|d| loss_transfer(dim, d, kappa))
            .collect();
        let mut transfers = Vec::with_capacity(dim);
        let mut achieved_error: f64 = 0.0;
        for r in results {
            let (t, err) = r?;
            achieved_error = achieved_error.max(err);
            transfers.push(t);
        }
        Ok(Self {
            dim,
            params,
            transfers,
            achieved_error,
        })
    }

    pub fn params(&self) -> LindbladParams {
        self.params
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Largest accepted local error estimate of the integrator.
    pub fn achieved_error(&self) -> f64 {
        self.achieved_error
    }

    /// Loss transfer for diagonal offset `d`. Entry `(i, j)` maps the input
    /// element at position `j` along the diagonal to the output at `i`;
    /// position `j` is `(j + d, j)` for `d ≥ 0` and `(j, j - d)` for `d < 0`.
    pub fn transfer(&self, d: isize) -> &DMatrix<f64> {
        &self.transfers[d.unsigned_abs()]
    }

    pub fn dephasing_factor(&self, d: isize) -> f64 {
        dephasing_factor(self.params.kappa_phi_tau, d)
    }

    pub fn apply(&self, rho: &CMat) -> Result<CMat> {
        check_square(rho, self.dim)?;
        let dim = self.dim as isize;
        let mut out = CMat::zeros(self.dim, self.dim);
        for d in (1 - dim)..dim {
            let t = self.transfer(d);
            let f = self.dephasing_factor(d);
            let len = (dim - d.abs()) as usize;
            let idx = |j: usize| -> (usize, usize) {
                if d >= 0 {
                    (j + d as usize, j)
                } else {
                    (j, j + d.unsigned_abs())
                }
            };
            let input: Vec<C64> = (0..len).map(|j| rho[idx(j)]).collect();
            for i in 0..len {
                let mut acc = C64::new(0.0, 0.0);
                for (j, x) in input.iter().enumerate().skip(i) {
                    acc += x * t[(i, j)];
                }
                out[idx(i)] = acc * f;
            }
        }
        Ok(out)
    }
}

pub fn dephasing_factor(kappa_phi_tau: f64, d: isize) -> f64 {
    (-0.5 * kappa_phi_tau * (d * d) as f64).exp()
}

/// Integrates `dT/dt = A_d T`, `T(0) = I`, over `t ∈ [0, 1]` for the loss
/// part of diagonal `d`.
fn loss_transfer(dim: usize, d: usize, kappa: f64) -> Result<(DMatrix<f64>, f64)> {
    let len = dim - d;
    if kappa == 0.0 {
        return Ok((DMatrix::identity(len, len), 0.0));
    }
    // Row i is element (i + d, i).
    let feed: Vec<f64> = (0..len)
        .map(|i| kappa * (((i + d + 1) * (i + 1)) as f64).sqrt())
        .collect();
    let decay: Vec<f64> = (0..len).map(|i| 0.5 * kappa * (2 * i + d) as f64).collect();
    let rhs = |y: &[f64], dy: &mut [f64]| {
        for j in 0..len {
            let col = &y[j * len..(j + 1) * len];
            let dcol = &mut dy[j * len..(j + 1) * len];
            for i in 0..=j {
                let up = if i + 1 <= j { feed[i] * col[i + 1] } else { 0.0 };
                dcol[i] = up - decay[i] * col[i];
            }
            for v in dcol.iter_mut().skip(j + 1) {
                *v = 0.0;
            }
        }
    };
    let mut y0 = vec![0.0; len * len];
    for j in 0..len {
        y0[j * len + j] = 1.0;
    }
    let (y, err) = dormand_prince(y0, rhs, 1.0, INTEGRATOR_TOL)?;
    Ok((DMatrix::from_vec(len, len, y), err))
}

/// Adaptive Dormand–Prince 5(4) integration of `y' = f(y)` from 0 to `t_end`
/// with a mixed absolute/relative per-step tolerance. Returns the final state
/// and the largest accepted error estimate.
fn dormand_prince<F>(mut y: Vec<f64>, f: F, t_end: f64, tol: f64) -> Result<(Vec<f64>, f64)>
where
    F: Fn(&[f64], &mut [f64]),
{
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    // Difference between the 5th and embedded 4th order weights.
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    let n = y.len();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut t = 0.0;
    let mut h = 0.01 * t_end;
    let mut worst: f64 = 0.0;
    f(&y, &mut k[0]);
    let mut steps = 0;
    while t < t_end {
        if steps >= MAX_STEPS || h < 1e-14 * t_end {
            return Err(Error::Integrator {
                tol,
                achieved: worst.max(tol * 10.0),
            });
        }
        steps += 1;
        if t + h > t_end {
            h = t_end - t;
        }
        for s in 0..6 {
            for i in 0..n {
                let mut acc = y[i];
                for (r, a) in A[s].iter().enumerate().take(s + 1) {
                    if *a != 0.0 {
                        acc += h * a * k[r][i];
                    }
                }
                tmp[i] = acc;
            }
            let (_, rest) = k.split_at_mut(s + 1);
            f(&tmp, &mut rest[0]);
        }
        // tmp holds the 5th-order solution (FSAL stage input), k[6] its slope.
        let mut err: f64 = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for (r, w) in E.iter().enumerate() {
                e += w * k[r][i];
            }
            let scale = 1.0 + y[i].abs().max(tmp[i].abs());
            err = err.max((h * e).abs() / scale);
        }
        if err <= tol {
            t += h;
            y.copy_from_slice(&tmp);
            let last = k.pop().unwrap();
            k[0] = last;
            k.push(vec![0.0; n]);
            worst = worst.max(err);
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * (tol / err).powf(0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
    }
    Ok((y, worst))
}

#[derive(Clone, Debug)]
enum Repr {
    Identity,
    Kraus(Vec<KrausOp>),
    LossDephasing(Arc<LossDephasingMap>),
    Dephasing(f64),
    Sequence(Vec<ChannelAction>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelKind {
    KrausList,
    LinearMap,
}

/// A completely positive map on `dim × dim` matrices.
#[derive(Clone, Debug)]
pub struct ChannelAction {
    space: TruncatedSpace,
    repr: Repr,
}

impl ChannelAction {
    pub fn identity(space: TruncatedSpace) -> Self {
        Self {
            space,
            repr: Repr::Identity,
        }
    }

    pub fn from_kraus(space: TruncatedSpace, ops: Vec<KrausOp>) -> Self {
        Self {
            space,
            repr: Repr::Kraus(ops),
        }
    }

    pub fn space(&self) -> TruncatedSpace {
        self.space
    }

    pub fn kind(&self) -> ChannelKind {
        match &self.repr {
            Repr::Identity | Repr::Kraus(_) => ChannelKind::KrausList,
            Repr::LossDephasing(_) | Repr::Dephasing(_) => ChannelKind::LinearMap,
            Repr::Sequence(parts) => {
                if parts.iter().all(|p| p.kind() == ChannelKind::KrausList) {
                    ChannelKind::KrausList
                } else {
                    ChannelKind::LinearMap
                }
            }
        }
    }

    pub fn kraus_ops(&self) -> Option<&[KrausOp]> {
        match &self.repr {
            Repr::Kraus(ops) => Some(ops),
            _ => None,
        }
    }

    pub fn loss_dephasing_map(&self) -> Option<&LossDephasingMap> {
        match &self.repr {
            Repr::LossDephasing(m) => Some(m),
            _ => None,
        }
    }

    /// `next ∘ self`.
    pub fn then(self, next: ChannelAction) -> Result<ChannelAction> {
        self.space.ensure_same(&next.space)?;
        Ok(ChannelAction {
            space: self.space,
            repr: Repr::Sequence(vec![self, next]),
        })
    }

    pub fn apply(&self, rho: &CMat) -> Result<CMat> {
        check_square(rho, self.space.dim())?;
        match &self.repr {
            Repr::Identity => Ok(rho.clone()),
            Repr::Kraus(ops) => {
                let mut out = CMat::zeros(rho.nrows(), rho.ncols());
                for k in ops {
                    k.accumulate(rho, &mut out);
                }
                Ok(out)
            }
            Repr::LossDephasing(m) => m.apply(rho),
            Repr::Dephasing(kphi) => Ok(CMat::from_fn(rho.nrows(), rho.ncols(), |n, m| {
                rho[(n, m)] * dephasing_factor(*kphi, n as isize - m as isize)
            })),
            Repr::Sequence(parts) => {
                let mut cur = rho.clone();
                for p in parts {
                    cur = p.apply(&cur)?;
                }
                Ok(cur)
            }
        }
    }
}

fn check_square(rho: &CMat, dim: usize) -> Result<()> {
    if rho.nrows() != dim || rho.ncols() != dim {
        return Err(Error::DimMismatch {
            left: rho.nrows().max(rho.ncols()),
            right: dim,
        });
    }
    Ok(())
}

pub fn loss_dephasing_channel(p: LindbladParams, space: TruncatedSpace) -> Result<ChannelAction> {
    p.validate()?;
    if p.is_noiseless() {
        return Ok(ChannelAction::identity(space));
    }
    Ok(ChannelAction {
        space,
        repr: Repr::LossDephasing(Arc::new(LossDephasingMap::new(p, space)?)),
    })
}

/// Pure number dephasing in closed form, `ρ_{nm} → e^{-κ_φτ(n-m)²/2} ρ_{nm}`.
pub fn dephasing_channel(kappa_phi_tau: f64, space: TruncatedSpace) -> Result<ChannelAction> {
    LindbladParams::new(0.0, kappa_phi_tau)?;
    Ok(ChannelAction {
        space,
        repr: Repr::Dephasing(kappa_phi_tau),
    })
}

/// Pure-loss Kraus operators
/// `K_l|n⟩ = √C(n,l) η^{(n-l)/2} (1-η)^{l/2} |n-l⟩`.
pub fn pure_loss_kraus(eta: f64, dim: usize) -> Result<Vec<KrausOp>> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidParameter(format!("transmissivity must be in (0, 1], got {eta}")));
    }
    if eta == 1.0 {
        return Ok(vec![KrausOp::ShiftDiag {
            shift: 0,
            coeffs: vec![1.0; dim],
        }]);
    }
    let ln_fact = ln_factorials(dim);
    let (ln_eta, ln_loss) = (eta.ln(), (1.0 - eta).ln());
    Ok((0..dim)
        .map(|l| {
            let coeffs = (0..dim)
                .map(|n| {
                    if n < l {
                        0.0
                    } else {
                        (0.5 * (ln_fact[n] - ln_fact[l] - ln_fact[n - l]
                            + (n - l) as f64 * ln_eta
                            + l as f64 * ln_loss))
                            .exp()
                    }
                })
                .collect();
            KrausOp::ShiftDiag {
                shift: -(l as isize),
                coeffs,
            }
        })
        .collect())
}

pub fn pure_loss_channel(eta: f64, space: TruncatedSpace) -> Result<ChannelAction> {
    if eta == 1.0 {
        return Ok(ChannelAction::identity(space));
    }
    Ok(ChannelAction::from_kraus(space, pure_loss_kraus(eta, space.dim())?))
}

/// Quantum-limited amplifier Kraus operators
/// `A_l|n⟩ = √(1/G) ((G-1)/G)^{l/2} √C(n+l,l) G^{-n/2} |n+l⟩`.
///
/// The cutoff is rejected when the amplified vacuum already leaves more than
/// `1e-10` of its weight above `dim`.
pub fn amplification_channel(gain: f64, space: TruncatedSpace) -> Result<ChannelAction> {
    if !(gain >= 1.0 && gain.is_finite()) {
        return Err(Error::InvalidParameter(format!("gain must be >= 1, got {gain}")));
    }
    let dim = space.dim();
    if gain == 1.0 {
        return Ok(ChannelAction::identity(space));
    }
    let ratio = (gain - 1.0) / gain;
    let tail = ratio.powi(dim as i32);
    if tail > 1e-10 {
        let required = ((1e-10f64).ln() / ratio.ln()).ceil() as usize;
        return Err(Error::CutoffInadequate {
            dim,
            required,
            weight: tail,
        });
    }
    let ln_fact = ln_factorials(2 * dim);
    let ops = (0..dim)
        .map(|l| {
            let coeffs = (0..dim)
                .map(|n| {
                    (0.5 * (-gain.ln() + l as f64 * ratio.ln() + ln_fact[n + l]
                        - ln_fact[l]
                        - ln_fact[n]
                        - n as f64 * gain.ln()))
                        .exp()
                })
                .collect();
            KrausOp::ShiftDiag {
                shift: l as isize,
                coeffs,
            }
        })
        .collect();
    Ok(ChannelAction::from_kraus(space, ops))
}

/// Gauss–Hermite nodes and weights for `∫ e^{-t²} f(t) dt` (Golub–Welsch).
pub fn gauss_hermite(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jacobi = DMatrix::<f64>::zeros(order, order);
    for k in 1..order {
        let b = (k as f64 / 2.0).sqrt();
        jacobi[(k, k - 1)] = b;
        jacobi[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|i| (eig.eigenvalues[i], PI.sqrt() * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Gaussian random displacement
/// `N(ρ) = (1/πσ²) ∫ d²α e^{-|α|²/σ²} D(α) ρ D(α)†`
/// as a weighted list of displacement operators.
///
/// The Gauss–Hermite order grows until the output on a probe state moves by
/// less than `1e-9` between successive orders.
pub fn gaussian_displacement_channel(
    p: GaussianDisplacementParams,
    space: TruncatedSpace,
) -> Result<ChannelAction> {
    if !(p.sigma_sq >= 0.0 && p.sigma_sq.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma^2 must be >= 0, got {}", p.sigma_sq)));
    }
    if p.sigma_sq == 0.0 {
        return Ok(ChannelAction::identity(space));
    }
    let (a, ad, _) = ladder_operators(space);
    // exp(r(a† - a)) = exp(i r H) with H = -i(a† - a).
    let generator = (ad.matrix() - a.matrix()) * C64::new(0.0, -1.0);
    let spectrum = HermitianSpectrum::new(&generator);
    let sigma = p.sigma_sq.sqrt();
    let dim = space.dim();
    let probe = {
        let mut m = CMat::zeros(dim, dim);
        let top = space.trusted() / 2;
        for n in [0, top / 2, top] {
            m[(n, n)] += C64::new(1.0 / 3.0, 0.0);
        }
        m
    };
    let mut prev: Option<CMat> = None;
    let mut last_change = f64::INFINITY;
    for order in (8..=64).step_by(4) {
        let ops = displacement_kraus(&spectrum, sigma, order, dim);
        let ch = ChannelAction::from_kraus(space, ops);
        let out = ch.apply(&probe)?;
        if let Some(prev) = &prev {
            last_change = (&out - prev).iter().map(|z| z.norm()).fold(0.0, f64::max);
            if last_change < 1e-9 {
                return Ok(ch);
            }
        }
        prev = Some(out);
    }
    Err(Error::Quadrature(format!(
        "Gauss-Hermite displacement quadrature did not converge (last change {last_change:.2e})"
    )))
}

fn displacement_kraus(spectrum: &HermitianSpectrum, sigma: f64, order: usize, dim: usize) -> Vec<KrausOp> {
    let (nodes, weights) = gauss_hermite(order);
    let mut terms = Vec::new();
    let mut total = 0.0;
    for (i, &u) in nodes.iter().enumerate() {
        for (j, &v) in nodes.iter().enumerate() {
            let w = weights[i] * weights[j] / PI;
            if w < 1e-18 {
                continue;
            }
            total += w;
            terms.push((w, C64::new(sigma * u, sigma * v)));
        }
    }
    terms
        .into_par_iter()
        .map(|(w, alpha)| {
            let r = alpha.norm();
            let phase = alpha / r;
            let core = spectrum.exp_i(r);
            // D(α) = R(φ) exp(r(a† - a)) R(-φ), R(φ) = e^{iφn}.
            let m = CMat::from_fn(dim, dim, |row, col| {
                core[(row, col)] * phase.powi(row as i32 - col as i32) * (w / total).sqrt()
            });
            KrausOp::Dense(m)
        })
        .collect()
}
