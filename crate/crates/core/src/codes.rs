//! Logical code words for cat, binomial, square-lattice GKP and the trivial
//! Fock encoding, plus the photon-shift error basis `E_k(θ)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{
    displacement, hermite_functions, rotation, squeeze, Operator, StateVector, TruncatedSpace,
    C64, CMat, CVec,
};
use crate::linalg::ln_factorials;

/// Code-word weight allowed beyond the cutoff.
pub const CUTOFF_TOL: f64 = 1e-10;

/// Relative amplitude below which GKP lattice peaks are dropped.
const GKP_PEAK_CUTOFF: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum RotationFamily {
    Cat { alpha: f64 },
    Bin { k: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationCodeSpec {
    pub family: RotationFamily,
    pub order: usize,
    pub space: TruncatedSpace,
}

impl RotationCodeSpec {
    pub fn cat(order: usize, alpha: f64, space: TruncatedSpace) -> Result<Self> {
        let spec = Self {
            family: RotationFamily::Cat { alpha },
            order,
            space,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn bin(order: usize, k: usize, space: TruncatedSpace) -> Result<Self> {
        let spec = Self {
            family: RotationFamily::Bin { k },
            order,
            space,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::InvalidParameter("rotation order must be >= 1".into()));
        }
        match self.family {
            RotationFamily::Cat { alpha } if !(alpha > 0.0 && alpha.is_finite()) => Err(
                Error::InvalidParameter(format!("cat amplitude must be positive, got {alpha}")),
            ),
            RotationFamily::Bin { k } if k < 2 => Err(Error::InvalidParameter(format!(
                "binomial K must be >= 2, got {k}"
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GkpSpec {
    pub delta: f64,
    pub space: TruncatedSpace,
}

impl GkpSpec {
    pub fn new(delta: f64, space: TruncatedSpace) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter(format!("GKP delta must be positive, got {delta}")));
        }
        Ok(Self { delta, space })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum CodeMeta {
    Cat { order: usize, alpha: f64 },
    Bin { order: usize, k: usize },
    Gkp { delta: f64 },
    Trivial,
}

impl CodeMeta {
    /// Spacing of the Fock support lattice of the dual-basis states.
    pub fn stride(&self) -> usize {
        match *self {
            CodeMeta::Cat { order, .. } | CodeMeta::Bin { order, .. } => order,
            CodeMeta::Gkp { .. } | CodeMeta::Trivial => 1,
        }
    }

    /// Rotation order for rotation-symmetric codes; the trivial code is the
    /// `N = 1` binomial-like encoding `{|0⟩, |1⟩}`.
    pub fn rotation_order(&self) -> Option<usize> {
        match *self {
            CodeMeta::Cat { order, .. } | CodeMeta::Bin { order, .. } => Some(order),
            CodeMeta::Trivial => Some(1),
            CodeMeta::Gkp { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CodeWords {
    zero: StateVector,
    one: StateVector,
    plus: StateVector,
    minus: StateVector,
    meta: CodeMeta,
}

impl CodeWords {
    /// Duals from the unnormalized words, so `|±⟩ ∝ E_δ(|0⟩ ± |1⟩)` keeps the
    /// relative weight the envelope gives the two words.
    fn from_raw_words(zero: StateVector, one: StateVector, meta: CodeMeta) -> Result<Self> {
        let plus = StateVector::new(zero.space(), zero.coeffs() + one.coeffs())?.normalized()?;
        let minus = StateVector::new(zero.space(), zero.coeffs() - one.coeffs())?.normalized()?;
        Ok(Self {
            zero: zero.normalized()?,
            one: one.normalized()?,
            plus,
            minus,
            meta,
        })
    }

    fn from_logical(zero: StateVector, one: StateVector, meta: CodeMeta) -> Result<Self> {
        let zero = zero.normalized()?;
        let one = one.normalized()?;
        let plus = StateVector::new(zero.space(), zero.coeffs() + one.coeffs())?.normalized()?;
        let minus = StateVector::new(zero.space(), zero.coeffs() - one.coeffs())?.normalized()?;
        Ok(Self {
            zero,
            one,
            plus,
            minus,
            meta,
        })
    }

    pub fn zero(&self) -> &StateVector {
        &self.zero
    }

    pub fn one(&self) -> &StateVector {
        &self.one
    }

    pub fn plus(&self) -> &StateVector {
        &self.plus
    }

    pub fn minus(&self) -> &StateVector {
        &self.minus
    }

    /// `|+⟩` for `a = 0`, `|-⟩` for `a = 1`.
    pub fn dual(&self, a: usize) -> &StateVector {
        if a == 0 {
            &self.plus
        } else {
            &self.minus
        }
    }

    /// `|0⟩` for `mu = 0`, `|1⟩` for `mu = 1`.
    pub fn logical(&self, mu: usize) -> &StateVector {
        if mu == 0 {
            &self.zero
        } else {
            &self.one
        }
    }

    pub fn meta(&self) -> CodeMeta {
        self.meta
    }

    pub fn space(&self) -> TruncatedSpace {
        self.zero.space()
    }

    pub fn stride(&self) -> usize {
        self.meta.stride()
    }

    /// Code projector `|0⟩⟨0| + |1⟩⟨1|`.
    pub fn projector(&self) -> CMat {
        self.zero.density() + self.one.density()
    }

    pub fn to_document(&self) -> CodeWordsDocument {
        let pairs = |v: &StateVector| v.coeffs().iter().map(|z| [z.re, z.im]).collect();
        CodeWordsDocument {
            meta: self.meta,
            dim: self.space().dim(),
            zero: pairs(&self.zero),
            one: pairs(&self.one),
            plus: pairs(&self.plus),
            minus: pairs(&self.minus),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CodeWordsDocument = serde_json::from_str(text)?;
        doc.into_codewords()
    }
}

/// Serialized form of [`CodeWords`]; amplitudes as `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodeWordsDocument {
    #[serde(flatten)]
    pub meta: CodeMeta,
    pub dim: usize,
    pub zero: Vec<[f64; 2]>,
    pub one: Vec<[f64; 2]>,
    pub plus: Vec<[f64; 2]>,
    pub minus: Vec<[f64; 2]>,
}

impl CodeWordsDocument {
    pub fn into_codewords(self) -> Result<CodeWords> {
        let space = TruncatedSpace::new(self.dim)?;
        let vec = |pairs: &[[f64; 2]]| {
            StateVector::new(
                space,
                CVec::from_iterator(pairs.len(), pairs.iter().map(|p| C64::new(p[0], p[1]))),
            )
        };
        Ok(CodeWords {
            zero: vec(&self.zero)?,
            one: vec(&self.one)?,
            plus: vec(&self.plus)?,
            minus: vec(&self.minus)?,
            meta: self.meta,
        })
    }
}

/// Smallest `d` such that the weight of `weights[d..]` is below `tol` of the
/// total.
fn required_dim(weights: &[f64], tol: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let mut tail = 0.0;
    for d in (0..weights.len()).rev() {
        tail += weights[d];
        if tail >= tol * total {
            return d + 1;
        }
    }
    1
}

/// Unnormalized cat coefficients `αⁿ/√n!` (times `e^{-α²/2}`) on the parity
/// class `n ≡ μN (mod 2N)`, evaluated up to `len`.
fn cat_coefficients(order: usize, alpha: f64, mu: usize, len: usize, ln_fact: &[f64]) -> Vec<f64> {
    (0..len)
        .map(|n| {
            if n % order != 0 || (n / order) % 2 != mu {
                0.0
            } else if n == 0 {
                (-0.5 * alpha * alpha).exp()
            } else {
                (-0.5 * alpha * alpha + n as f64 * alpha.ln() - 0.5 * ln_fact[n]).exp()
            }
        })
        .collect()
}

/// Cat code words from their Fock coefficients.
///
/// Summing the `2N` rotated coherent states `|α e^{imπ/N}⟩` with signs
/// `(-1)^{μm}` keeps only `n = kN` with `k ≡ μ (mod 2)`, each with weight
/// `2N αⁿ/√n!`; normalization is done numerically.
pub fn cat_codewords(spec: &RotationCodeSpec) -> Result<CodeWords> {
    spec.validate()?;
    let RotationFamily::Cat { alpha } = spec.family else {
        return Err(Error::InvalidParameter("cat_codewords needs a cat spec".into()));
    };
    let n = spec.order;
    let dim = spec.space.dim();
    // Extend well past the Poisson bulk to measure the tail.
    let ext = dim.max((alpha * alpha + 12.0 * alpha + 60.0).ceil() as usize + 2 * n);
    let ln_fact = ln_factorials(ext);
    let mut words = Vec::with_capacity(2);
    for mu in 0..2 {
        let c = cat_coefficients(n, alpha, mu, ext, &ln_fact);
        let w: Vec<f64> = c.iter().map(|x| x * x).collect();
        let need = required_dim(&w, CUTOFF_TOL);
        if need > dim {
            let tail: f64 = w[dim..].iter().sum::<f64>() / w.iter().sum::<f64>();
            return Err(Error::CutoffInadequate {
                dim,
                required: need,
                weight: tail,
            });
        }
        words.push(StateVector::from_real(spec.space, &c[..dim])?);
    }
    let one = words.pop().unwrap();
    let zero = words.pop().unwrap();
    CodeWords::from_logical(zero, one, CodeMeta::Cat { order: n, alpha })
}

/// Cat code words on the smallest truncation that meets `CUTOFF_TOL`.
pub fn cat_codewords_minimal(order: usize, alpha: f64) -> Result<CodeWords> {
    // Each logical word reports its own requirement, so this takes at most
    // two retries.
    let mut dim = 2;
    loop {
        match cat_codewords(&RotationCodeSpec::cat(order, alpha, TruncatedSpace::new(dim)?)?) {
            Err(Error::CutoffInadequate { required, .. }) if required > dim => dim = required,
            other => return other,
        }
    }
}

/// Amplitude at which the order-`order` cat code has mean photon number
/// `nbar`, by bisection.
pub fn cat_alpha_for_nbar(order: usize, nbar: f64) -> Result<f64> {
    if !(nbar > 0.0 && nbar.is_finite()) {
        return Err(Error::InvalidParameter(format!("mean photon number must be positive, got {nbar}")));
    }
    let f = |a: f64| cat_codewords_minimal(order, a).map(|w| mean_photon_number(&w) - nbar);
    let (mut lo, mut hi) = (1e-3, nbar.sqrt() + 4.0);
    if f(lo)? > 0.0 || f(hi)? < 0.0 {
        return Err(Error::InvalidParameter(format!("no order-{order} cat code with n̄ = {nbar}")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Cat code words built directly as superpositions of truncated coherent
/// states. Cross-check route for [`cat_codewords`].
pub fn cat_codewords_coherent_sum(spec: &RotationCodeSpec) -> Result<CodeWords> {
    spec.validate()?;
    let RotationFamily::Cat { alpha } = spec.family else {
        return Err(Error::InvalidParameter("cat_codewords needs a cat spec".into()));
    };
    let n = spec.order;
    let dim = spec.space.dim();
    let mut words = Vec::with_capacity(2);
    for mu in 0..2 {
        let mut acc = CVec::zeros(dim);
        for m in 0..2 * n {
            let beta = C64::from_polar(alpha, m as f64 * PI / n as f64);
            let sign = if (mu * m) % 2 == 0 { 1.0 } else { -1.0 };
            acc += StateVector::coherent(spec.space, beta).coeffs() * C64::new(sign, 0.0);
        }
        words.push(StateVector::new(spec.space, acc)?);
    }
    let one = words.pop().unwrap();
    let zero = words.pop().unwrap();
    CodeWords::from_logical(zero, one, CodeMeta::Cat { order: n, alpha })
}

/// Binomial code words: `|μ⟩ = Σ_{p ≡ μ (mod 2), 0 ≤ p ≤ K} √(C(K,p)/2^{K-1}) |pN⟩`.
pub fn bin_codewords(spec: &RotationCodeSpec) -> Result<CodeWords> {
    spec.validate()?;
    let RotationFamily::Bin { k } = spec.family else {
        return Err(Error::InvalidParameter("bin_codewords needs a bin spec".into()));
    };
    let n = spec.order;
    let dim = spec.space.dim();
    let top = k * n;
    if top >= dim {
        return Err(Error::CutoffInadequate {
            dim,
            required: top + 1,
            weight: 1.0 / 2f64.powi(k as i32 - 1),
        });
    }
    let ln_fact = ln_factorials(k + 1);
    let mut words = Vec::with_capacity(2);
    for mu in 0..2 {
        let mut c = vec![0.0; dim];
        for p in (mu..=k).step_by(2) {
            let ln_c = ln_fact[k] - ln_fact[p] - ln_fact[k - p];
            c[p * n] = (0.5 * (ln_c - (k as f64 - 1.0) * 2f64.ln())).exp();
        }
        words.push(StateVector::from_real(spec.space, &c)?);
    }
    let one = words.pop().unwrap();
    let zero = words.pop().unwrap();
    CodeWords::from_logical(zero, one, CodeMeta::Bin { order: n, k })
}

pub fn rotation_codewords(spec: &RotationCodeSpec) -> Result<CodeWords> {
    match spec.family {
        RotationFamily::Cat { .. } => cat_codewords(spec),
        RotationFamily::Bin { .. } => bin_codewords(spec),
    }
}

/// Largest `|s|` of the peaks `x = (2s + μ)√π` kept for regularization `δ`.
fn gkp_peak_range(delta: f64) -> i64 {
    let t = (delta * delta).tanh();
    let x_max = (2.0 * (1.0 / GKP_PEAK_CUTOFF).ln() / t).sqrt();
    (x_max / (2.0 * PI.sqrt())).ceil() as i64 + 1
}

/// Unnormalized `e^{-δ²(n+1/2)} Σ_s ψ_n((2s+μ)√π)` for `n < len`.
fn gkp_coefficients(delta: f64, mu: usize, len: usize) -> Vec<f64> {
    let s_max = gkp_peak_range(delta);
    let sqrt_pi = PI.sqrt();
    let mut c = vec![0.0; len];
    for s in -s_max..=s_max {
        let x = (2 * s + mu as i64) as f64 * sqrt_pi;
        for (n, h) in hermite_functions(x, len).into_iter().enumerate() {
            c[n] += h;
        }
    }
    let d2 = delta * delta;
    for (n, v) in c.iter_mut().enumerate() {
        *v *= (-d2 * (n as f64 + 0.5)).exp();
    }
    c
}

/// Regularized GKP code words `E_δ |μ⟩` in the Fock basis.
///
/// Each word is normalized on its own; with finite δ the two words overlap
/// slightly.
pub fn gkp_codewords(spec: &GkpSpec) -> Result<CodeWords> {
    let dim = spec.space.dim();
    let d2 = spec.delta * spec.delta;
    let ext = dim + (30.0 / d2).ceil() as usize;
    let mut words = Vec::with_capacity(2);
    for mu in 0..2 {
        let c = gkp_coefficients(spec.delta, mu, ext);
        let w: Vec<f64> = c.iter().map(|x| x * x).collect();
        let need = required_dim(&w, CUTOFF_TOL);
        if need > dim {
            let tail: f64 = w[dim..].iter().sum::<f64>() / w.iter().sum::<f64>();
            return Err(Error::CutoffInadequate {
                dim,
                required: need,
                weight: tail,
            });
        }
        words.push(StateVector::from_real(spec.space, &c[..dim])?);
    }
    let one = words.pop().unwrap();
    let zero = words.pop().unwrap();
    CodeWords::from_raw_words(zero, one, CodeMeta::Gkp { delta: spec.delta })
}

/// Smallest truncation holding both regularized words to `CUTOFF_TOL`.
pub fn gkp_required_dim(delta: f64) -> usize {
    let d2 = delta * delta;
    let ext = 64 + (60.0 / d2).ceil() as usize;
    (0..2)
        .map(|mu| {
            let w: Vec<f64> = gkp_coefficients(delta, mu, ext).iter().map(|x| x * x).collect();
            required_dim(&w, CUTOFF_TOL)
        })
        .max()
        .unwrap_or(2)
        .max(2)
}

/// GKP code words as a weighted sum of squeezed displaced vacua.
///
/// Applying `e^{-τ(n+1/2)}` to a position eigenstate `|x₀⟩` gives a Gaussian
/// centered at `x₀ sech τ` with x-variance `tanh(τ)/2` and amplitude
/// `e^{-x₀² tanh(τ)/2}` (τ = δ²). The construction runs on an enlarged space
/// and is projected back to `spec.space`.
pub fn gkp_codewords_squeezed_sum(spec: &GkpSpec) -> Result<CodeWords> {
    let dim = spec.space.dim();
    let tau = spec.delta * spec.delta;
    let work = TruncatedSpace::new(2 * dim + 40)?;
    let r = 0.5 * tau.tanh().ln();
    let vac = StateVector::fock(work, 0)?;
    let squeezed = squeeze(r, work).apply(&vac)?;
    let s_max = gkp_peak_range(spec.delta);
    let sqrt_pi = PI.sqrt();
    let mut words = Vec::with_capacity(2);
    for mu in 0..2i64 {
        let mut acc = CVec::zeros(work.dim());
        for s in -s_max..=s_max {
            let x0 = (2 * s + mu) as f64 * sqrt_pi;
            let weight = (-0.5 * x0 * x0 * tau.tanh()).exp();
            if weight < GKP_PEAK_CUTOFF {
                continue;
            }
            let center = x0 / tau.cosh();
            let shifted = displacement(C64::new(center / 2f64.sqrt(), 0.0), work).apply(&squeezed)?;
            acc += shifted.coeffs() * C64::new(weight, 0.0);
        }
        let head = CVec::from_iterator(dim, acc.iter().take(dim).copied());
        words.push(StateVector::new(spec.space, head)?);
    }
    let one = words.pop().unwrap();
    let zero = words.pop().unwrap();
    CodeWords::from_raw_words(zero, one, CodeMeta::Gkp { delta: spec.delta })
}

pub fn trivial_codewords(space: TruncatedSpace) -> Result<CodeWords> {
    CodeWords::from_logical(
        StateVector::fock(space, 0)?,
        StateVector::fock(space, 1)?,
        CodeMeta::Trivial,
    )
}

/// `(⟨0|n|0⟩ + ⟨1|n|1⟩)/2`.
pub fn mean_photon_number(cw: &CodeWords) -> f64 {
    0.5 * (cw.zero.mean_photon_number() + cw.one.mean_photon_number())
}

/// GKP squeezing in dB, `10 log10(1/(2δ²))`.
pub fn squeezing_db(delta: f64) -> f64 {
    10.0 * (1.0 / (2.0 * delta * delta)).log10()
}

/// Inverse of [`squeezing_db`].
pub fn delta_from_db(db: f64) -> f64 {
    (0.5 * 10f64.powf(-db / 10.0)).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorOperatorSpec {
    pub k: i64,
    pub theta: f64,
}

/// `E_k(θ) = e^{iθn} a^{|k|}` for `k < 0` and `(a†)^k e^{-iθn}` for `k ≥ 0`.
pub fn error_operator(spec: ErrorOperatorSpec, space: TruncatedSpace) -> Result<Operator> {
    let dim = space.dim();
    let shift = spec.k.unsigned_abs() as usize;
    if shift >= dim {
        return Err(Error::InvalidParameter(format!(
            "shift |k|={shift} must be below dim {dim}"
        )));
    }
    let mut m = CMat::zeros(dim, dim);
    for col in 0..dim {
        if spec.k < 0 {
            if col < shift {
                continue;
            }
            let row = col - shift;
            // a^s |col⟩ = √(col!/(col-s)!) |col-s⟩
            let amp: f64 = ((row + 1)..=col).map(|j| (j as f64).sqrt()).product();
            m[(row, col)] = C64::from_polar(amp, spec.theta * row as f64);
        } else {
            let row = col + shift;
            if row >= dim {
                continue;
            }
            let amp: f64 = ((col + 1)..=row).map(|j| (j as f64).sqrt()).product();
            m[(row, col)] = C64::from_polar(amp, -spec.theta * col as f64);
        }
    }
    Operator::new(space, m)
}

/// Logical `Z_N = e^{iπn/N}`.
pub fn logical_z(order: usize, space: TruncatedSpace) -> Operator {
    rotation(PI / order as f64, space)
}

/// Discrete rotation `R_N = e^{i2πn/N}`.
pub fn rotation_symmetry(order: usize, space: TruncatedSpace) -> Operator {
    rotation(2.0 * PI / order as f64, space)
}

/// Rotation angle picked up by mode b when `E_k` on mode a is commuted
/// through `CROT_{NM}`: `CROT E^a_k(θ) = E^a_k(θ) E^b_0(φ) CROT` with
/// `φ = -kπ/(NM)`.
pub fn crot_propagated_angle(k: i64, control_order: usize, target_order: usize) -> f64 {
    -(k as f64) * PI / (control_order * target_order) as f64
}

/// Phase and rotation angle for commuting `E_k(θ)` through `e^{iKn²}`:
/// `e^{iKn²} E_k(θ) = e^{iφ} E_k(θ') e^{iKn²}` with `(φ, θ') = (Kk², θ - 2Kk)`
/// for `k ≥ 0` and `(-Kk², θ + 2Kk)` for `k < 0`.
///
/// Returns `(φ, θ')`.
pub fn kerr_propagated_error(k: i64, theta: f64, kerr: f64) -> (f64, f64) {
    let kf = k as f64;
    if k < 0 {
        (-kerr * kf * kf, theta + 2.0 * kerr * kf)
    } else {
        (kerr * kf * kf, theta - 2.0 * kerr * kf)
    }
}

/// Kerr unitary `e^{iKn²}`.
pub fn kerr_unitary(kerr: f64, space: TruncatedSpace) -> Operator {
    let dim = space.dim();
    let diag = CVec::from_iterator(
        dim,
        (0..dim).map(|n| C64::from_polar(1.0, kerr * (n * n) as f64)),
    );
    Operator::new(space, CMat::from_diagonal(&diag)).expect("diagonal matches space")
}
