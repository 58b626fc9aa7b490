//! Truncated Fock-space states, operators and the standard single- and
//! two-mode Gaussian unitaries.
//!
//! Operators are built on the full `dim × dim` space. Truncation artifacts
//! live near the cutoff, so physical checks (unitarity, norm) are made on the
//! leading sub-block of size `dim - buffer`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{exp_i_hermitian, kron, max_abs_diff_block};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Tail weight above which a truncation diagnostic is logged.
const TAIL_WARN: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TruncatedSpace {
    dim: usize,
}

impl TruncatedSpace {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidDim(dim));
        }
        Ok(Self { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Levels at the top of the space excluded from validity checks.
    pub fn buffer(&self) -> usize {
        (0.1 * self.dim as f64).ceil() as usize
    }

    /// Size of the leading block trusted to be free of truncation effects.
    pub fn trusted(&self) -> usize {
        self.dim - self.buffer()
    }

    pub fn ensure_same(&self, other: &TruncatedSpace) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimMismatch {
                left: self.dim,
                right: other.dim,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    space: TruncatedSpace,
    coeffs: CVec,
}

impl StateVector {
    pub fn new(space: TruncatedSpace, coeffs: CVec) -> Result<Self> {
        if coeffs.len() != space.dim() {
            return Err(Error::DimMismatch {
                left: coeffs.len(),
                right: space.dim(),
            });
        }
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidParameter("non-finite amplitude".into()));
        }
        Ok(Self { space, coeffs })
    }

    pub fn from_real(space: TruncatedSpace, coeffs: &[f64]) -> Result<Self> {
        let v = CVec::from_iterator(coeffs.len(), coeffs.iter().map(|&x| C64::new(x, 0.0)));
        Self::new(space, v)
    }

    pub fn fock(space: TruncatedSpace, n: usize) -> Result<Self> {
        if n >= space.dim() {
            return Err(Error::InvalidParameter(format!(
                "Fock level {n} outside dim {}",
                space.dim()
            )));
        }
        let mut v = CVec::zeros(space.dim());
        v[n] = ONE;
        Ok(Self { space, coeffs: v })
    }

    /// Coherent state amplitudes `e^{-|α|²/2} αⁿ/√n!`, truncated and not
    /// renormalized.
    pub fn coherent(space: TruncatedSpace, alpha: C64) -> Self {
        let dim = space.dim();
        let mut v = CVec::zeros(dim);
        let r = alpha.norm();
        let phase = if r > 0.0 { alpha / r } else { ONE };
        let mut ln_fact = 0.0;
        for n in 0..dim {
            if n > 0 {
                ln_fact += (n as f64).ln();
            }
            let mag = if r == 0.0 {
                if n == 0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                (-0.5 * r * r + n as f64 * r.ln() - 0.5 * ln_fact).exp()
            };
            v[n] = phase.powu(n as u32) * mag;
        }
        Self { space, coeffs: v }
    }

    pub fn space(&self) -> TruncatedSpace {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn coeffs(&self) -> &CVec {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> CVec {
        self.coeffs
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.norm()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::InvalidParameter("cannot normalize a zero vector".into()));
        }
        Ok(Self {
            space: self.space,
            coeffs: self.coeffs.unscale(n),
        })
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        self.space.ensure_same(&other.space)?;
        Ok(self.coeffs.dotc(&other.coeffs))
    }

    pub fn fidelity(&self, other: &StateVector) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr() / (self.norm().powi(2) * other.norm().powi(2)))
    }

    pub fn expectation(&self, op: &Operator) -> Result<C64> {
        self.space.ensure_same(&op.space)?;
        Ok(self.coeffs.dotc(&(&op.mat * &self.coeffs)))
    }

    /// `|self⟩⟨other|`.
    pub fn outer(&self, other: &StateVector) -> Result<CMat> {
        self.space.ensure_same(&other.space)?;
        Ok(&self.coeffs * other.coeffs.adjoint())
    }

    pub fn density(&self) -> CMat {
        &self.coeffs * self.coeffs.adjoint()
    }

    /// Squared weight on levels `n >= from`.
    pub fn tail_weight(&self, from: usize) -> f64 {
        self.coeffs.iter().skip(from).map(|c| c.norm_sqr()).sum()
    }

    pub fn mean_photon_number(&self) -> f64 {
        let w: f64 = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(n, c)| n as f64 * c.norm_sqr())
            .sum();
        w / self.norm().powi(2)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    space: TruncatedSpace,
    mat: CMat,
}

impl Operator {
    pub fn new(space: TruncatedSpace, mat: CMat) -> Result<Self> {
        if mat.nrows() != space.dim() || mat.ncols() != space.dim() {
            return Err(Error::DimMismatch {
                left: mat.nrows().max(mat.ncols()),
                right: space.dim(),
            });
        }
        Ok(Self { space, mat })
    }

    pub fn identity(space: TruncatedSpace) -> Self {
        Self {
            space,
            mat: CMat::identity(space.dim(), space.dim()),
        }
    }

    pub fn space(&self) -> TruncatedSpace {
        self.space
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn into_matrix(self) -> CMat {
        self.mat
    }

    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        self.space.ensure_same(&state.space)?;
        Ok(StateVector {
            space: self.space,
            coeffs: &self.mat * &state.coeffs,
        })
    }

    /// `self · other`.
    pub fn compose(&self, other: &Operator) -> Result<Operator> {
        self.space.ensure_same(&other.space)?;
        Ok(Operator {
            space: self.space,
            mat: &self.mat * &other.mat,
        })
    }

    pub fn adjoint(&self) -> Operator {
        Operator {
            space: self.space,
            mat: self.mat.adjoint(),
        }
    }

    pub fn hermiticity_defect(&self) -> f64 {
        max_abs_diff_block(&self.mat, &self.mat.adjoint(), self.space.dim())
    }

    /// `max |U†U - I|` over the leading `keep × keep` block.
    pub fn unitarity_defect(&self, keep: usize) -> f64 {
        let prod = self.mat.adjoint() * &self.mat;
        let id = CMat::identity(self.space.dim(), self.space.dim());
        max_abs_diff_block(&prod, &id, keep)
    }
}

/// Annihilation, creation and number operators.
pub fn ladder_operators(space: TruncatedSpace) -> (Operator, Operator, Operator) {
    let dim = space.dim();
    let mut a = CMat::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    let ad = a.adjoint();
    let num = CMat::from_diagonal(&CVec::from_iterator(
        dim,
        (0..dim).map(|n| C64::new(n as f64, 0.0)),
    ));
    (
        Operator { space, mat: a },
        Operator { space, mat: ad },
        Operator { space, mat: num },
    )
}

pub fn position(space: TruncatedSpace) -> Operator {
    let (a, ad, _) = ladder_operators(space);
    Operator {
        space,
        mat: (a.mat + ad.mat).unscale(2f64.sqrt()),
    }
}

pub fn momentum(space: TruncatedSpace) -> Operator {
    let (a, ad, _) = ladder_operators(space);
    Operator {
        space,
        mat: (ad.mat - a.mat) * (I / 2f64.sqrt()),
    }
}

/// Diagonal `e^{iθn}`.
pub fn rotation(theta: f64, space: TruncatedSpace) -> Operator {
    let dim = space.dim();
    let diag = CVec::from_iterator(dim, (0..dim).map(|n| C64::from_polar(1.0, theta * n as f64)));
    Operator {
        space,
        mat: CMat::from_diagonal(&diag),
    }
}

/// Probability weight of a coherent state of amplitude `|α|` beyond the
/// cutoff.
pub fn coherent_tail_weight(alpha_abs: f64, dim: usize) -> f64 {
    let space = TruncatedSpace { dim: dim.max(2) };
    let v = StateVector::coherent(space, C64::new(alpha_abs, 0.0));
    (1.0 - v.norm().powi(2)).max(0.0)
}

/// `D(α) = exp(α a† - α* a)`.
pub fn displacement(alpha: C64, space: TruncatedSpace) -> Operator {
    if alpha == ZERO {
        return Operator::identity(space);
    }
    let tail = coherent_tail_weight(alpha.norm(), space.dim());
    if tail > TAIL_WARN {
        log::warn!(
            "displacement |alpha|={:.3} leaves {:.2e} weight beyond dim {}",
            alpha.norm(),
            tail,
            space.dim()
        );
    }
    let (a, ad, _) = ladder_operators(space);
    // exp(αa† - α*a) = exp(i H) with H = -i(αa† - α*a).
    let h = (ad.mat * alpha - a.mat * alpha.conj()) * (-I);
    Operator {
        space,
        mat: exp_i_hermitian(&h, 1.0),
    }
}

/// Exact matrix elements `⟨m|D(α)|n⟩` for `m, n < dim`.
///
/// Unlike [`displacement`] this is not the exponential of a truncated
/// generator, so it stays exact for displacements far beyond the cutoff.
/// Each diagonal `m - n = k` follows the Laguerre recurrence for
/// `√(n!/(n+k)!) |α|^k e^{-|α|²/2} L_n^{(k)}(|α|²)`, run on a rescaled mantissa.
pub fn displacement_elements(alpha: C64, dim: usize) -> CMat {
    const RESCALE: f64 = 1e150;
    let r = alpha.norm();
    if r == 0.0 {
        return CMat::identity(dim, dim);
    }
    let x = r * r;
    let unit = alpha / r;
    let mut out = CMat::zeros(dim, dim);
    let mut ln_fact = 0.0;
    for k in 0..dim {
        if k > 0 {
            ln_fact += (k as f64).ln();
        }
        let kf = k as f64;
        let mut log_scale = -0.5 * x + kf * r.ln() - 0.5 * ln_fact;
        let mut prev = 0.0;
        let mut cur = 1.0;
        let upper = unit.powu(k as u32);
        let lower = (-unit.conj()).powu(k as u32);
        for n in 0..dim - k {
            if n > 0 {
                let nf = (n - 1) as f64;
                let next = ((2.0 * nf + 1.0 + kf - x) * cur - (nf * (nf + kf)).sqrt() * prev)
                    / ((nf + 1.0) * (nf + 1.0 + kf)).sqrt();
                prev = cur;
                cur = next;
                if cur.abs() > RESCALE {
                    cur /= RESCALE;
                    prev /= RESCALE;
                    log_scale += RESCALE.ln();
                }
            }
            let t = if cur == 0.0 || log_scale + cur.abs().ln() < -745.0 {
                0.0
            } else {
                cur * log_scale.exp()
            };
            out[(n + k, n)] = upper * t;
            if k > 0 {
                out[(n, n + k)] = lower * t;
            }
        }
    }
    out
}

/// Weight of the squeezed vacuum `S(r)|0⟩` beyond the cutoff.
pub fn squeezed_vacuum_tail_weight(r: f64, dim: usize) -> f64 {
    let t = r.tanh().abs();
    let c = r.cosh();
    let mut inside = 0.0;
    let mut ln_p = 0.0; // ln[(2k)! / (2^{2k} (k!)^2)]
    let mut k = 0usize;
    while 2 * k < dim {
        if k > 0 {
            let kf = k as f64;
            ln_p += ((2.0 * kf - 1.0) / (2.0 * kf)).ln();
        }
        let term = if t == 0.0 {
            if k == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            (ln_p + 2.0 * k as f64 * t.ln()).exp()
        };
        inside += term / c;
        k += 1;
    }
    (1.0 - inside).max(0.0)
}

/// `S(r) = exp[r/2 (a†² - a²)]`; the x-variance of `S(r)|0⟩` is `e^{2r}/2`.
pub fn squeeze(r: f64, space: TruncatedSpace) -> Operator {
    if r == 0.0 {
        return Operator::identity(space);
    }
    let tail = squeezed_vacuum_tail_weight(r, space.dim());
    if tail > TAIL_WARN {
        log::warn!("squeeze r={r:.3} leaves {tail:.2e} weight beyond dim {}", space.dim());
    }
    let (a, ad, _) = ladder_operators(space);
    let a2 = &a.mat * &a.mat;
    let ad2 = &ad.mat * &ad.mat;
    let h = (ad2 - a2) * C64::new(0.0, -0.5 * r);
    Operator {
        space,
        mat: exp_i_hermitian(&h, 1.0),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BeamSplitterConvention {
    /// `exp[θ(a†b - a b†)]`, so `|α⟩|0⟩ → |α cos θ⟩|-α sin θ⟩`.
    Inefficiency,
    /// `exp[iθ(a†b + b†a)]`.
    Exchange,
}

/// Two-mode operator that conserves total photon number, stored as one dense
/// block per total excitation number.
#[derive(Clone, Debug)]
pub struct TwoModeOperator {
    dim_a: usize,
    dim_b: usize,
    blocks: Vec<CMat>,
}

impl TwoModeOperator {
    fn block_range(dim_a: usize, dim_b: usize, total: usize) -> (usize, usize) {
        let lo = total.saturating_sub(dim_b - 1);
        let hi = total.min(dim_a - 1);
        (lo, hi)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.dim_a, self.dim_b)
    }

    /// Applies the operator to a two-mode amplitude matrix `ψ[(n_a, n_b)]`.
    pub fn apply(&self, psi: &CMat) -> Result<CMat> {
        if psi.nrows() != self.dim_a || psi.ncols() != self.dim_b {
            return Err(Error::DimMismatch {
                left: psi.nrows() * psi.ncols(),
                right: self.dim_a * self.dim_b,
            });
        }
        let mut out = CMat::zeros(self.dim_a, self.dim_b);
        for (total, block) in self.blocks.iter().enumerate() {
            let (lo, hi) = Self::block_range(self.dim_a, self.dim_b, total);
            let len = hi - lo + 1;
            let input: Vec<C64> = (0..len).map(|k| psi[(lo + k, total - lo - k)]).collect();
            if input.iter().all(|z| *z == ZERO) {
                continue;
            }
            for i in 0..len {
                let mut acc = ZERO;
                for (j, x) in input.iter().enumerate() {
                    acc += block[(i, j)] * x;
                }
                out[(lo + i, total - lo - i)] = acc;
            }
        }
        Ok(out)
    }

    /// Dense matrix on the joint space, index `n_a * dim_b + n_b`.
    pub fn to_dense(&self) -> CMat {
        let d = self.dim_a * self.dim_b;
        let mut out = CMat::zeros(d, d);
        for (total, block) in self.blocks.iter().enumerate() {
            let (lo, hi) = Self::block_range(self.dim_a, self.dim_b, total);
            let len = hi - lo + 1;
            for i in 0..len {
                let row = (lo + i) * self.dim_b + (total - lo - i);
                for j in 0..len {
                    let col = (lo + j) * self.dim_b + (total - lo - j);
                    out[(row, col)] = block[(i, j)];
                }
            }
        }
        out
    }
}

pub fn beamsplitter(
    theta: f64,
    convention: BeamSplitterConvention,
    space_a: TruncatedSpace,
    space_b: TruncatedSpace,
) -> TwoModeOperator {
    let (da, db) = (space_a.dim(), space_b.dim());
    let mut blocks = Vec::with_capacity(da + db - 1);
    for total in 0..(da + db - 1) {
        let (lo, hi) = TwoModeOperator::block_range(da, db, total);
        let len = hi - lo + 1;
        if theta == 0.0 {
            blocks.push(CMat::identity(len, len));
            continue;
        }
        // Hermitian H with U = exp(iH) on this block.
        let mut h = CMat::zeros(len, len);
        for j in 0..len.saturating_sub(1) {
            let na = (lo + j) as f64;
            let nb = (total - lo - j) as f64;
            // a†b |na, nb⟩ = √(na+1)√nb |na+1, nb-1⟩
            let amp = ((na + 1.0) * nb).sqrt();
            match convention {
                BeamSplitterConvention::Exchange => {
                    h[(j + 1, j)] = C64::new(theta * amp, 0.0);
                    h[(j, j + 1)] = C64::new(theta * amp, 0.0);
                }
                BeamSplitterConvention::Inefficiency => {
                    // θ(a†b - ab†) = i H, H = -iθ(a†b - ab†)
                    h[(j + 1, j)] = C64::new(0.0, -theta * amp);
                    h[(j, j + 1)] = C64::new(0.0, theta * amp);
                }
            }
        }
        blocks.push(exp_i_hermitian(&h, 1.0));
    }
    TwoModeOperator {
        dim_a: da,
        dim_b: db,
        blocks,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    X,
    P,
}

/// Normalized Hermite functions `ψ_0(x) … ψ_{count-1}(x)`.
///
/// The recurrence runs on a rescaled mantissa with a separate log scale so
/// high orders neither overflow nor lose the Gaussian factor to underflow.
pub fn hermite_functions(x: f64, count: usize) -> Vec<f64> {
    const RESCALE: f64 = 1e100;
    let mut out = vec![0.0; count];
    if count == 0 {
        return out;
    }
    let mut log_scale = -0.5 * x * x;
    let mut prev = 0.0;
    let mut cur = PI.powf(-0.25);
    out[0] = cur * log_scale.exp();
    for n in 0..count.saturating_sub(1) {
        let nf = n as f64;
        let next = (2.0 / (nf + 1.0)).sqrt() * x * cur - (nf / (nf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
        if cur.abs() > RESCALE {
            cur /= RESCALE;
            prev /= RESCALE;
            log_scale += RESCALE.ln();
        }
        out[n + 1] = if log_scale < -745.0 {
            0.0
        } else {
            cur * log_scale.exp()
        };
    }
    out
}

/// Amplitudes `⟨q|n⟩` on a quadrature grid.
///
/// `⟨x|n⟩ = ψ_n(x)` and `⟨p|n⟩ = (-i)ⁿ ψ_n(p)`.
#[derive(Clone, Debug)]
pub struct QuadratureTransform {
    grid: Vec<f64>,
    quadrature: Quadrature,
    amplitudes: CMat,
}

pub fn quadrature_transform(
    grid: &[f64],
    space: TruncatedSpace,
    quadrature: Quadrature,
) -> Result<QuadratureTransform> {
    if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("quadrature grid must be strictly increasing".into()));
    }
    let dim = space.dim();
    let mut amplitudes = CMat::zeros(grid.len(), dim);
    let phases: Vec<C64> = (0..dim)
        .map(|n| match quadrature {
            Quadrature::X => ONE,
            Quadrature::P => (-I).powu((n % 4) as u32),
        })
        .collect();
    for (g, &q) in grid.iter().enumerate() {
        for (n, h) in hermite_functions(q, dim).into_iter().enumerate() {
            amplitudes[(g, n)] = phases[n] * h;
        }
    }
    Ok(QuadratureTransform {
        grid: grid.to_vec(),
        quadrature,
        amplitudes,
    })
}

impl QuadratureTransform {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn quadrature(&self) -> Quadrature {
        self.quadrature
    }

    pub fn amplitudes(&self) -> &CMat {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.ncols()
    }

    /// Wavefunction `Σ_n ⟨q|n⟩ c_n` on the grid.
    pub fn wavefunction(&self, coeffs: &CVec) -> Result<Vec<C64>> {
        if coeffs.len() != self.dim() {
            return Err(Error::DimMismatch {
                left: coeffs.len(),
                right: self.dim(),
            });
        }
        Ok((&self.amplitudes * coeffs).iter().copied().collect())
    }

    /// Trapezoid weights of the grid.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        trapezoid_weights(&self.grid)
    }
}

pub fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let mut w = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let h = grid[i + 1] - grid[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    w
}

/// `exp(i s x₁x₂)` realized as a beam splitter, two single-mode squeezers and
/// a second beam splitter.
#[derive(Clone, Debug)]
pub struct CzGate {
    coupling: f64,
    squeezing: f64,
    mixing_angle: f64,
    first: TwoModeOperator,
    second: TwoModeOperator,
    squeeze_a: CMat,
    squeeze_b: CMat,
}

pub fn cz_gate(s: f64, space_a: TruncatedSpace, space_b: TruncatedSpace) -> CzGate {
    let r = (s / 2.0).asinh();
    let theta = (1.0 + (2.0 * r).exp()).powf(-0.5).acos();
    let first = beamsplitter(theta - PI / 2.0, BeamSplitterConvention::Exchange, space_a, space_b);
    let second = beamsplitter(theta, BeamSplitterConvention::Exchange, space_a, space_b);
    CzGate {
        coupling: s,
        squeezing: r,
        mixing_angle: theta,
        first,
        second,
        squeeze_a: squeeze(r, space_a).into_matrix(),
        squeeze_b: squeeze(r, space_b).into_matrix(),
    }
}

impl CzGate {
    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn squeezing(&self) -> f64 {
        self.squeezing
    }

    pub fn mixing_angle(&self) -> f64 {
        self.mixing_angle
    }

    pub fn apply(&self, psi: &CMat) -> Result<CMat> {
        if self.coupling == 0.0 {
            return Ok(psi.clone());
        }
        let mixed = self.first.apply(psi)?;
        let squeezed = &self.squeeze_a * mixed * self.squeeze_b.transpose();
        self.second.apply(&squeezed)
    }

    pub fn to_dense(&self) -> CMat {
        let (da, db) = self.first.dims();
        if self.coupling == 0.0 {
            return CMat::identity(da * db, da * db);
        }
        self.second.to_dense() * kron(&self.squeeze_a, &self.squeeze_b) * self.first.to_dense()
    }
}

/// Direct `exp(i s x₁x₂)` on the truncated joint space.
pub fn cz_gate_direct(s: f64, space_a: TruncatedSpace, space_b: TruncatedSpace) -> CMat {
    let xa = position(space_a).into_matrix().map(|z| z.re);
    let xb = position(space_b).into_matrix().map(|z| z.re);
    let (da, db) = (space_a.dim(), space_b.dim());
    let mut gen = DMatrix::<f64>::zeros(da * db, da * db);
    for i in 0..da {
        for j in 0..da {
            let x = xa[(i, j)];
            if x == 0.0 {
                continue;
            }
            for k in 0..db {
                for l in 0..db {
                    gen[(i * db + k, j * db + l)] = x * xb[(k, l)];
                }
            }
        }
    }
    let eig = SymmetricEigen::new(gen);
    let v = eig.eigenvectors.map(|x| C64::new(x, 0.0));
    let mut scaled = v.clone();
    for (j, lam) in eig.eigenvalues.iter().enumerate() {
        let ph = C64::from_polar(1.0, s * lam);
        for i in 0..scaled.nrows() {
            scaled[(i, j)] *= ph;
        }
    }
    scaled * v.adjoint()
}

/// Controlled rotation `exp(iπ n̂⊗n̂/(NM))`, kept in functional form.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Crot {
    control_order: usize,
    target_order: usize,
}

pub fn crot_gate(control_order: usize, target_order: usize) -> Result<Crot> {
    if control_order == 0 || target_order == 0 {
        return Err(Error::InvalidParameter("rotation orders must be >= 1".into()));
    }
    Ok(Crot {
        control_order,
        target_order,
    })
}

impl Crot {
    pub fn angle(&self, n: usize) -> f64 {
        PI * n as f64 / (self.control_order * self.target_order) as f64
    }

    pub fn phase(&self, n: usize, m: usize) -> C64 {
        let nm = (n * m) % (2 * self.control_order * self.target_order);
        C64::from_polar(1.0, PI * nm as f64 / (self.control_order * self.target_order) as f64)
    }

    /// Target state after the gate, with the control in Fock state `n`.
    pub fn apply_with_control(&self, n: usize, target: &StateVector) -> StateVector {
        let coeffs = CVec::from_iterator(
            target.dim(),
            target.coeffs.iter().enumerate().map(|(m, c)| self.phase(n, m) * c),
        );
        StateVector {
            space: target.space,
            coeffs,
        }
    }
}
