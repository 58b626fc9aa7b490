//! Knill-type telecorrection: two chained one-bit teleportations, decoded by
//! a Pauli-frame update.
//!
//! For each measurement outcome `x` the circuit acts on the logical qubit as
//! `ρ ↦ ¼ Σ_ij c_ij(x) P_i ρ P_j†` with `P_i = X^b Z^a`, `i = 2a + b`, where
//! `a` is the data-rail bit and `b` the ancilla-rail bit. The weights are
//! obtained from the conditional Choi matrix of that map.
//!
//! Choi matrices use the unnormalized layout `C = Σ_μν |μ⟩⟨ν| ⊗ Φ(|μ⟩⟨ν|)`
//! with row index `2μ + l` unless noted otherwise.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::{Matrix2, Matrix4, SymmetricEigen, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codes::{gkp_codewords, CodeWords, GkpSpec};
use crate::error::{Error, Result};
use crate::fock::{displacement_elements, StateVector, TruncatedSpace, C64, CMat};
use crate::measure::{phase_outcome_weights, HMatrix, PhaseGrid};
use crate::noise::{loss_dephasing_channel, LindbladParams};

/// Allowed CPTP violation of an assembled channel beyond what non-orthogonal
/// inputs account for.
pub const CPTP_TOL: f64 = 1e-5;

/// Magnitude below which two successive Fourier shells end the GKP series.
pub const GKP_SERIES_TOL: f64 = 1e-13;

const MAX_GKP_SHELLS: usize = 96;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// `P_i = X^b Z^a` for `i = 2a + b`: `I, X, Z, XZ`.
pub fn pauli(i: usize) -> Matrix2<C64> {
    let x = Matrix2::new(ZERO, ONE, ONE, ZERO);
    let z = Matrix2::new(ONE, ZERO, ZERO, -ONE);
    let mut p = Matrix2::identity();
    if i & 1 == 1 {
        p *= x;
    }
    if i & 2 == 2 {
        p *= z;
    }
    p
}

/// `v_i = Σ_μ |μ⟩ ⊗ A|μ⟩` in the Choi layout.
fn choi_vector(a: &Matrix2<C64>) -> Vector4<C64> {
    Vector4::new(a[(0, 0)], a[(1, 0)], a[(0, 1)], a[(1, 1)])
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogicalChannel {
    /// Normalized Choi state, `J = C/2`.
    choi: Matrix4<C64>,
}

impl LogicalChannel {
    /// From the unnormalized Choi matrix `C = Σ_μν |μ⟩⟨ν| ⊗ Φ(|μ⟩⟨ν|)`.
    pub fn from_choi(choi: Matrix4<C64>) -> Self {
        Self { choi: choi * C64::new(0.5, 0.0) }
    }

    pub fn identity() -> Self {
        Self::from_kraus(&[Matrix2::identity()])
    }

    pub fn from_kraus(ops: &[Matrix2<C64>]) -> Self {
        let mut c = Matrix4::zeros();
        for k in ops {
            let v = choi_vector(k);
            c += v * v.adjoint();
        }
        Self::from_choi(c)
    }

    /// Normalized Choi state (unit trace for trace-preserving maps).
    pub fn choi(&self) -> &Matrix4<C64> {
        &self.choi
    }

    /// Column-stacking superoperator: `vec(Φ(ρ)) = S vec(ρ)`.
    pub fn superoperator(&self) -> Matrix4<C64> {
        let mut s = Matrix4::zeros();
        for mu in 0..2 {
            for nu in 0..2 {
                for l in 0..2 {
                    for lp in 0..2 {
                        s[(l + 2 * lp, mu + 2 * nu)] = self.choi[(2 * mu + l, 2 * nu + lp)] * 2.0;
                    }
                }
            }
        }
        s
    }

    pub fn apply(&self, rho: &Matrix2<C64>) -> Matrix2<C64> {
        let mut out = Matrix2::zeros();
        for mu in 0..2 {
            for nu in 0..2 {
                for l in 0..2 {
                    for lp in 0..2 {
                        out[(l, lp)] += self.choi[(2 * mu + l, 2 * nu + lp)] * 2.0 * rho[(mu, nu)];
                    }
                }
            }
        }
        out
    }

    /// `max |Tr Φ(|μ⟩⟨ν|) - δ_μν|`.
    pub fn trace_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for mu in 0..2 {
            for nu in 0..2 {
                let tr = (self.choi[(2 * mu, 2 * nu)] + self.choi[(2 * mu + 1, 2 * nu + 1)]) * 2.0;
                let want = if mu == nu { ONE } else { ZERO };
                worst = worst.max((tr - want).norm());
            }
        }
        worst
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (self.choi - self.choi.adjoint()).iter().fold(0.0, |a, z| a.max(z.norm()))
    }

    pub fn min_choi_eigenvalue(&self) -> f64 {
        let herm = (self.choi + self.choi.adjoint()) * C64::new(0.5, 0.0);
        SymmetricEigen::new(herm).eigenvalues.min()
    }

    /// Errors when trace preservation, Hermiticity or positivity is off by
    /// more than `tol`.
    pub fn check_cptp(&self, tol: f64) -> Result<()> {
        let defect = self
            .trace_defect()
            .max(self.hermiticity_defect())
            .max(-self.min_choi_eigenvalue());
        if defect > tol {
            return Err(Error::NotCptp { defect });
        }
        Ok(())
    }

    /// Overlap of the Choi state with `(|00⟩ + |11⟩)/√2`.
    pub fn entanglement_fidelity(&self) -> f64 {
        let v = choi_vector(&Matrix2::identity()) * C64::new(FRAC_1_SQRT_2, 0.0);
        (v.adjoint() * self.choi * v)[(0, 0)].re
    }
}

/// `F̄ = (2 F_E + 1)/3` for a qubit.
pub fn avg_gate_fidelity(entanglement_fidelity: f64) -> f64 {
    (2.0 * entanglement_fidelity + 1.0) / 3.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    entanglement_fidelity: f64,
    avg_gate_fidelity: f64,
    break_even_avg_fidelity: f64,
    trace_defect: f64,
}

impl FidelityReport {
    /// Fidelities that exceed 1 by rounding (at most 1e-12) are set to 1.
    pub fn new(entanglement_fidelity: f64, break_even_avg_fidelity: f64, trace_defect: f64) -> Self {
        let snap = |f: f64| if f > 1.0 && f <= 1.0 + 1e-12 { 1.0 } else { f };
        let entanglement_fidelity = snap(entanglement_fidelity);
        let break_even_avg_fidelity = snap(break_even_avg_fidelity);
        Self {
            entanglement_fidelity,
            avg_gate_fidelity: avg_gate_fidelity(entanglement_fidelity),
            break_even_avg_fidelity,
            trace_defect,
        }
    }

    pub fn entanglement_fidelity(&self) -> f64 {
        self.entanglement_fidelity
    }

    pub fn avg_gate_fidelity(&self) -> f64 {
        self.avg_gate_fidelity
    }

    pub fn infidelity(&self) -> f64 {
        1.0 - self.avg_gate_fidelity
    }

    pub fn break_even_avg_fidelity(&self) -> f64 {
        self.break_even_avg_fidelity
    }

    pub fn break_even_infidelity(&self) -> f64 {
        1.0 - self.break_even_avg_fidelity
    }

    pub fn trace_defect(&self) -> f64 {
        self.trace_defect
    }
}

/// Outcome-resolved weights `c_ij(x)` on a grid of outcome pairs.
#[derive(Clone, Debug)]
pub struct OutcomeWeights {
    rows: usize,
    cols: usize,
    /// Index `4i + j`.
    c: Vec<CMat>,
    input_overlap: f64,
}

impl OutcomeWeights {
    /// `c` holds 16 equally shaped matrices, index `4i + j`.
    pub fn from_parts(c: Vec<CMat>, input_overlap: f64) -> Result<Self> {
        if c.len() != 16 {
            return Err(Error::InvalidParameter(format!("need 16 weight arrays, got {}", c.len())));
        }
        let (rows, cols) = c[0].shape();
        if c.iter().any(|m| m.shape() != (rows, cols)) {
            return Err(Error::InvalidParameter("weight arrays differ in shape".into()));
        }
        Ok(Self {
            rows,
            cols,
            c,
            input_overlap,
        })
    }

    /// Converts per-outcome conditional Choi entries (index `4p + q` for
    /// Choi row `p`, column `q`) to Pauli weights.
    pub fn from_conditional_choi(choi: &[CMat], input_overlap: f64) -> Result<Self> {
        if choi.len() != 16 {
            return Err(Error::InvalidParameter("conditional Choi needs 16 entries".into()));
        }
        let vs: Vec<Vector4<C64>> = (0..4).map(|i| choi_vector(&pauli(i))).collect();
        let (rows, cols) = choi[0].shape();
        let c: Vec<CMat> = (0..16)
            .into_par_iter()
            .map(|ij| {
                let (i, j) = (ij / 4, ij % 4);
                let mut out = CMat::zeros(rows, cols);
                for p in 0..4 {
                    for q in 0..4 {
                        let coef = vs[i][p].conj() * vs[j][q];
                        if coef != ZERO {
                            out.zip_apply(&choi[4 * p + q], |o, x| *o += coef * x);
                        }
                    }
                }
                out
            })
            .collect();
        Self::from_parts(c, input_overlap)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn c(&self, i: usize, j: usize) -> &CMat {
        &self.c[4 * i + j]
    }

    /// `|⟨+|−⟩|` of the data-rail inputs; zero for exactly orthogonal words.
    pub fn input_overlap(&self) -> f64 {
        self.input_overlap
    }

    /// `max |c_ij(x) - c_ji(x)*|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let (a, b) = (self.c(i, j), self.c(j, i));
                for (x, y) in a.iter().zip(b.iter()) {
                    worst = worst.max((x - y.conj()).norm());
                }
            }
        }
        worst
    }

    /// Most negative real part on the diagonal, or the largest imaginary part.
    pub fn diagonal_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..4 {
            for x in self.c(i, i).iter() {
                worst = worst.max(-x.re).max(x.im.abs());
            }
        }
        worst
    }

    /// `max_i |Σ_x c_ii(x) - 1|`.
    pub fn completeness_defect(&self) -> f64 {
        (0..4)
            .map(|i| (self.c(i, i).iter().sum::<C64>() - ONE).norm())
            .fold(0.0, f64::max)
    }
}

/// Per-outcome Pauli-frame choice.
pub type DecoderChoice = nalgebra::DMatrix<u8>;

/// `i*(x) = argmax_i c_ii(x)`, ties to the smaller index.
pub fn ml_decode(w: &OutcomeWeights) -> DecoderChoice {
    DecoderChoice::from_fn(w.rows, w.cols, |r, s| {
        let mut best = 0u8;
        let mut best_val = w.c(0, 0)[(r, s)].re;
        for i in 1..4 {
            let v = w.c(i, i)[(r, s)].re;
            if v > best_val {
                best = i as u8;
                best_val = v;
            }
        }
        best
    })
}

/// Closest-integer decoding for weights indexed by the two rounded bits.
pub fn closest_integer_decode(w: &OutcomeWeights) -> Result<DecoderChoice> {
    if w.shape() != (2, 2) {
        return Err(Error::InvalidParameter("closest-integer decoding needs 2×2 bit outcomes".into()));
    }
    Ok(DecoderChoice::from_fn(2, 2, |b1, b2| (2 * b1 + b2) as u8))
}

/// Sums the decoded outcomes into a logical channel. The CPTP check allows
/// `CPTP_TOL` on top of the data-input overlap.
pub fn assemble_logical_channel(w: &OutcomeWeights, decoder: &DecoderChoice) -> Result<LogicalChannel> {
    let ch = assemble_unchecked(w, decoder)?;
    ch.check_cptp(CPTP_TOL + w.input_overlap)?;
    Ok(ch)
}

fn assemble_unchecked(w: &OutcomeWeights, decoder: &DecoderChoice) -> Result<LogicalChannel> {
    if decoder.shape() != w.shape() {
        return Err(Error::DimMismatch {
            left: decoder.nrows() * decoder.ncols(),
            right: w.rows * w.cols,
        });
    }
    // S^k_ij = Σ_{x: i*(x)=k} c_ij(x), summed in a fixed order.
    let mut sums = [[ZERO; 16]; 4];
    for (ij, c) in w.c.iter().enumerate() {
        for s in 0..w.cols {
            for r in 0..w.rows {
                sums[decoder[(r, s)] as usize][ij] += c[(r, s)];
            }
        }
    }
    let paulis: Vec<Matrix2<C64>> = (0..4).map(pauli).collect();
    let mut choi = Matrix4::zeros();
    for (k, sk) in sums.iter().enumerate() {
        let corrected: Vec<Vector4<C64>> = (0..4)
            .map(|i| choi_vector(&(paulis[k].adjoint() * paulis[i])))
            .collect();
        for i in 0..4 {
            for j in 0..4 {
                let s = sk[4 * i + j];
                if s != ZERO {
                    choi += corrected[i] * corrected[j].adjoint() * (s * 0.25);
                }
            }
        }
    }
    Ok(LogicalChannel::from_choi(choi))
}

/// Logical channel of an unencoded qubit in Fock states `|0⟩, |1⟩`.
pub fn break_even_logical_channel(noise: LindbladParams) -> Result<LogicalChannel> {
    let space = TruncatedSpace::new(2)?;
    let ch = loss_dephasing_channel(noise, space)?;
    let mut choi = Matrix4::zeros();
    for mu in 0..2 {
        for nu in 0..2 {
            let mut e = CMat::zeros(2, 2);
            e[(mu, nu)] = ONE;
            let out = ch.apply(&e)?;
            for l in 0..2 {
                for lp in 0..2 {
                    choi[(2 * mu + l, 2 * nu + lp)] = out[(l, lp)];
                }
            }
        }
    }
    Ok(LogicalChannel::from_choi(choi))
}

pub fn break_even_channel(noise: LindbladParams) -> Result<FidelityReport> {
    let ch = break_even_logical_channel(noise)?;
    let fe = ch.entanglement_fidelity();
    Ok(FidelityReport::new(fe, avg_gate_fidelity(fe), ch.trace_defect()))
}

pub fn fidelity_report(channel: &LogicalChannel, noise: LindbladParams) -> Result<FidelityReport> {
    let be = break_even_channel(noise)?;
    Ok(FidelityReport::new(
        channel.entanglement_fidelity(),
        be.avg_gate_fidelity(),
        channel.trace_defect(),
    ))
}

/// Knill circuit for rotation codes: data (order N) and ancilla (order M)
/// coupled by `CROT = exp(iπ n⊗n/NM)`, phase measurements on both, output on
/// a noiseless Fock qubit.
#[derive(Clone, Debug)]
pub struct RsbCircuitConfig {
    pub data: CodeWords,
    pub ancilla: CodeWords,
    pub data_h: HMatrix,
    pub ancilla_h: HMatrix,
    pub data_eta: f64,
    pub noise: LindbladParams,
    pub grid: PhaseGrid,
}

pub const DEFAULT_ANCILLA_ALPHA: f64 = 10.0;

/// Order-1 cat ancilla with a large amplitude, on its minimal truncation.
pub fn default_rsb_ancilla() -> Result<CodeWords> {
    crate::codes::cat_codewords_minimal(1, DEFAULT_ANCILLA_ALPHA)
}

impl RsbCircuitConfig {
    fn orders(&self) -> Result<(usize, usize)> {
        let n = self.data.meta().rotation_order();
        let m = self.ancilla.meta().rotation_order();
        match (n, m) {
            (Some(n), Some(m)) => Ok((n, m)),
            _ => Err(Error::InvalidParameter("RSB circuit needs rotation codes on both rails".into())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.orders()?;
        self.noise.validate()?;
        if !(self.data_eta > 0.0 && self.data_eta <= 1.0) {
            return Err(Error::InvalidParameter(format!("efficiency {} outside (0, 1]", self.data_eta)));
        }
        for (code, h) in [(&self.data, &self.data_h), (&self.ancilla, &self.ancilla_h)] {
            if code.space().dim() != h.dim() {
                return Err(Error::DimMismatch {
                    left: code.space().dim(),
                    right: h.dim(),
                });
            }
            // Fewer bins than photon numbers aliases the phase moments.
            if self.grid.bins() < h.dim() {
                return Err(Error::InvalidParameter(format!(
                    "{} phase bins cannot resolve dim {}",
                    self.grid.bins(),
                    h.dim()
                )));
            }
        }
        Ok(())
    }
}

fn outer(a: &StateVector, b: &StateVector) -> CMat {
    a.coeffs() * b.coeffs().adjoint()
}

/// Weights for the rotation-code circuit.
///
/// CROT imprints `R(πn/NM)` on the ancilla, which only depends on
/// `n mod 2NM`; the data trace is therefore split by residue class and the
/// ancilla factor is a small table per outcome. Measurement inefficiency sits
/// after CROT and is folded into the data H matrix.
pub fn rsb_outcome_weights(cfg: &RsbCircuitConfig) -> Result<OutcomeWeights> {
    cfg.validate()?;
    let (n_ord, m_ord) = cfg.orders()?;
    let r = 2 * n_ord * m_ord;
    let theta = PI / (n_ord * m_ord) as f64;
    let bins = cfg.grid.bins();

    let data_space = cfg.data.space();
    let dim_d = data_space.dim();
    let channel = loss_dephasing_channel(cfg.noise, data_space)?;
    let h_data = cfg.data_h.after_loss(cfg.data_eta)?;
    let words = [cfg.data.zero(), cfg.data.one()];

    // D[μν] : bins × R², column r1·R + r2.
    let data_kernels: Vec<CMat> = (0..4)
        .into_par_iter()
        .map(|mn| -> Result<CMat> {
            let (mu, nu) = (mn / 2, mn % 2);
            let rho = channel.apply(&outer(words[mu], words[nu]))?;
            let mut k = CMat::zeros(bins, r * r);
            for r1 in 0..r {
                for r2 in 0..r {
                    let masked = CMat::from_fn(dim_d, dim_d, |a, b| {
                        if a % r == r1 && b % r == r2 {
                            rho[(a, b)]
                        } else {
                            ZERO
                        }
                    });
                    if masked.iter().all(|z| *z == ZERO) {
                        continue;
                    }
                    let w = phase_outcome_weights(&h_data, &cfg.grid, &masked)?;
                    for (b, x) in w.into_iter().enumerate() {
                        k[(b, r1 * r + r2)] = x;
                    }
                }
            }
            Ok(k)
        })
        .collect::<Result<_>>()?;

    // G[s][s'] = ⟨+|R(-θs') M_x R(θs)|+⟩ on the ancilla.
    let anc_space = cfg.ancilla.space();
    let plus = cfg.ancilla.plus();
    let rotated: Vec<StateVector> = (0..r)
        .map(|s| crate::fock::rotation(theta * s as f64, anc_space).apply(plus))
        .collect::<Result<_>>()?;
    let anc_table: Vec<Vec<C64>> = (0..r * r)
        .into_par_iter()
        .map(|ss| phase_outcome_weights(&cfg.ancilla_h, &cfg.grid, &outer(&rotated[ss / r], &rotated[ss % r])))
        .collect::<Result<_>>()?;

    // CROT to the output qubit adds N·l to the residue.
    let anc_kernels: Vec<CMat> = (0..4)
        .map(|ll| {
            let (l, lp) = (ll / 2, ll % 2);
            CMat::from_fn(r * r, bins, |row, b| {
                let (r1, r2) = (row / r, row % r);
                let s = (r1 + l * n_ord) % r;
                let sp = (r2 + lp * n_ord) % r;
                anc_table[s * r + sp][b]
            })
        })
        .collect();

    let choi: Vec<CMat> = (0..16)
        .into_par_iter()
        .map(|pq| {
            let (p, q) = (pq / 4, pq % 4);
            let (mu, l) = (p / 2, p % 2);
            let (nu, lp) = (q / 2, q % 2);
            (&data_kernels[2 * mu + nu] * &anc_kernels[2 * l + lp]) * C64::new(0.5, 0.0)
        })
        .collect();
    let overlap = cfg.data.plus().inner(cfg.data.minus())?.norm();
    OutcomeWeights::from_conditional_choi(&choi, overlap)
}

/// How a finite-efficiency homodyne detector is modeled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EfficiencyModel {
    /// Loss followed by a gain-`1/η` amplifier: Gaussian noise of variance
    /// `(1-η)/η` on the measured quadrature.
    Amplified,
    /// Loss only, with decision boundaries scaled by `√η`. Equivalent to
    /// Gaussian noise of variance `(1-η)/(2η)` with unscaled boundaries.
    LossWithRescaledBoundaries,
}

impl EfficiencyModel {
    pub fn name(&self) -> &'static str {
        match self {
            EfficiencyModel::Amplified => "amplified",
            EfficiencyModel::LossWithRescaledBoundaries => "loss-with-rescaled-boundaries",
        }
    }
}

/// Quadrature noise variance the detector model adds before decoding.
pub fn efficiency_blur_variance(model: EfficiencyModel, eta: f64) -> f64 {
    match model {
        EfficiencyModel::Amplified => (1.0 - eta) / eta,
        EfficiencyModel::LossWithRescaledBoundaries => (1.0 - eta) / (2.0 * eta),
    }
}

/// Knill circuit for GKP codes. The ancilla pair is entangled ideally and
/// regularized afterwards; the data word is regularized, then noisy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GkpCircuitConfig {
    pub data: GkpSpec,
    pub ancilla: GkpSpec,
    pub eta: f64,
    pub efficiency_model: EfficiencyModel,
    pub noise: LindbladParams,
}

impl GkpCircuitConfig {
    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::InvalidParameter(format!("efficiency {} outside (0, 1]", self.eta)));
        }
        Ok(())
    }

    pub fn blur_variance(&self) -> f64 {
        efficiency_blur_variance(self.efficiency_model, self.eta)
    }
}

/// Fourier coefficient of the bit-`beta` indicator of closest-integer
/// decoding at frequency `k√π`.
fn bit_fourier(beta: usize, k: i64) -> f64 {
    if k == 0 {
        return 0.5;
    }
    if k % 2 == 0 {
        return 0.0;
    }
    let a = (k as f64 * PI / 2.0).sin() / (k as f64 * PI);
    if beta == 0 {
        a
    } else {
        -a
    }
}

/// Frequencies `k` with Fourier rank `j`: `0` for `j = 0`, else `±(2j-1)`.
fn rank_values(j: usize) -> Vec<i64> {
    if j == 0 {
        vec![0]
    } else {
        let k = 2 * j as i64 - 1;
        vec![-k, k]
    }
}

fn shell_pairs(j: usize) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    for j1 in 0..=j {
        for j2 in 0..=j {
            if j1.max(j2) != j {
                continue;
            }
            for &k1 in &rank_values(j1) {
                for &k2 in &rank_values(j2) {
                    out.push((k1, k2));
                }
            }
        }
    }
    out
}

/// `Tr[ρ D]` for `D` given elementwise.
fn trace_product(rho: &CMat, d: &CMat) -> C64 {
    let mut acc = ZERO;
    for m in 0..d.nrows() {
        for n in 0..d.ncols() {
            acc += rho[(n, m)] * d[(m, n)];
        }
    }
    acc
}

/// Bit probabilities of a p-homodyne measurement of `rho` after Gaussian
/// quadrature noise of variance `blur`, decoded by closest integer.
pub fn homodyne_bit_probabilities(rho: &CMat, blur: f64) -> Result<[f64; 2]> {
    let dim = rho.nrows();
    let mut acc = [0.0; 2];
    let mut quiet = 0;
    for j in 0..MAX_GKP_SHELLS {
        let mut shell = [0.0f64; 2];
        for k in rank_values(j) {
            let w = k as f64 * PI.sqrt();
            // e^{iωp} = D(-ω/√2)
            let d = displacement_elements(C64::new(-w / 2f64.sqrt(), 0.0), dim);
            let chi = trace_product(rho, &d);
            let damp = (-0.5 * blur * w * w).exp();
            for (beta, s) in shell.iter_mut().enumerate() {
                *s += bit_fourier(beta, k) * damp * chi.re;
            }
        }
        acc[0] += shell[0];
        acc[1] += shell[1];
        quiet = if shell[0].abs().max(shell[1].abs()) < GKP_SERIES_TOL { quiet + 1 } else { 0 };
        if j >= 2 && quiet >= 2 {
            return Ok(acc);
        }
    }
    Err(Error::SeriesNonConvergence {
        change: f64::NAN,
        tol: GKP_SERIES_TOL,
    })
}

/// Weights for the GKP circuit, resolved by the two rounded bits.
///
/// The bit indicators are expanded in Fourier series in `p/√π`. Pulled back
/// through `CZ = exp(i x₁x₂)`, `e^{i(ω₁p₁+ω₂p₂)}` becomes the product
/// `e^{i(ω₁p₁+ω₂x₁)} ⊗ e^{i(ω₂p₂+ω₁x₂)}`, so every term is a product of two
/// single-mode displacement expectations. Detector noise damps the data-rail
/// terms by `e^{-vω₁²/2}`. The series runs in square shells until two
/// consecutive shells fall below `GKP_SERIES_TOL`.
pub fn gkp_outcome_weights(cfg: &GkpCircuitConfig) -> Result<OutcomeWeights> {
    cfg.validate()?;
    let data = gkp_codewords(&cfg.data)?;
    let anc = gkp_codewords(&cfg.ancilla)?;
    let channel = loss_dephasing_channel(cfg.noise, data.space())?;
    let dim_d = data.space().dim();
    let dim_a = anc.space().dim();
    let blur = cfg.blur_variance();

    // Data inputs in the dual basis, ρ^{aa'} = N(|a~⟩⟨a'~|).
    let rho: Vec<CMat> = (0..4)
        .map(|aa| channel.apply(&outer(data.dual(aa / 2), data.dual(aa % 2))))
        .collect::<Result<_>>()?;
    let anc_duals = [anc.dual(0).coeffs().clone(), anc.dual(1).coeffs().clone()];

    // k[β][16]: entry 4·(2a+a') + (2l+l').
    let mut kernel = [[ZERO; 16]; 4];
    let mut quiet = 0;
    let mut converged = false;
    for j in 0..MAX_GKP_SHELLS {
        let pairs = shell_pairs(j);
        let terms: Vec<([C64; 4], [C64; 4], (i64, i64))> = pairs
            .par_iter()
            .map(|&(k1, k2)| {
                let (w1, w2) = (k1 as f64 * PI.sqrt(), k2 as f64 * PI.sqrt());
                let s2 = 2f64.sqrt();
                let dd = displacement_elements(C64::new(-w1 / s2, w2 / s2), dim_d);
                let da = displacement_elements(C64::new(-w2 / s2, w1 / s2), dim_a);
                let mut chi_d = [ZERO; 4];
                for (aa, c) in chi_d.iter_mut().enumerate() {
                    *c = trace_product(&rho[aa], &dd);
                }
                let moved = [&da * &anc_duals[0], &da * &anc_duals[1]];
                let mut chi_a = [ZERO; 4];
                for (ll, c) in chi_a.iter_mut().enumerate() {
                    *c = anc_duals[ll % 2].dotc(&moved[ll / 2]);
                }
                (chi_d, chi_a, (k1, k2))
            })
            .collect();
        let mut shell = [[ZERO; 16]; 4];
        for (chi_d, chi_a, (k1, k2)) in &terms {
            let w1 = *k1 as f64 * PI.sqrt();
            let damp = (-0.5 * blur * w1 * w1).exp();
            for (beta, sb) in shell.iter_mut().enumerate() {
                let f = bit_fourier(beta / 2, *k1) * damp * bit_fourier(beta % 2, *k2);
                if f == 0.0 {
                    continue;
                }
                for aa in 0..4 {
                    for ll in 0..4 {
                        sb[4 * aa + ll] += chi_d[aa] * chi_a[ll] * f;
                    }
                }
            }
        }
        let mut size: f64 = 0.0;
        for beta in 0..4 {
            for e in 0..16 {
                kernel[beta][e] += shell[beta][e];
                size = size.max(shell[beta][e].norm());
            }
        }
        quiet = if size < GKP_SERIES_TOL { quiet + 1 } else { 0 };
        if j >= 2 && quiet >= 2 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SeriesNonConvergence {
            change: f64::NAN,
            tol: GKP_SERIES_TOL,
        });
    }

    // Output rail: (1/√2) Σ_l |l~⟩_anc |l⟩_out. Dual to computational on the
    // data input: |μ⟩ = Σ_a (-1)^{aμ}/√2 |a~⟩.
    let h = |a: usize, mu: usize| if a * mu % 2 == 1 { -FRAC_1_SQRT_2 } else { FRAC_1_SQRT_2 };
    let choi: Vec<CMat> = (0..16)
        .map(|pq| {
            let (p, q) = (pq / 4, pq % 4);
            let (mu, l) = (p / 2, p % 2);
            let (nu, lp) = (q / 2, q % 2);
            CMat::from_fn(2, 2, |b1, b2| {
                let beta = 2 * b1 + b2;
                let mut acc = ZERO;
                for a in 0..2 {
                    for ap in 0..2 {
                        acc += kernel[beta][4 * (2 * a + ap) + 2 * l + lp] * (0.5 * h(a, mu) * h(ap, nu));
                    }
                }
                acc
            })
        })
        .collect();
    let overlap = data.plus().inner(data.minus())?.norm();
    OutcomeWeights::from_conditional_choi(&choi, overlap)
}

/// Fidelity of the RSB circuit with the maximum-likelihood decoder.
pub fn rsb_fidelity(cfg: &RsbCircuitConfig) -> Result<FidelityReport> {
    let w = rsb_outcome_weights(cfg)?;
    let ch = assemble_logical_channel(&w, &ml_decode(&w))?;
    fidelity_report(&ch, cfg.noise)
}

/// Fidelity of the GKP circuit with closest-integer decoding.
pub fn gkp_fidelity(cfg: &GkpCircuitConfig) -> Result<FidelityReport> {
    let w = gkp_outcome_weights(cfg)?;
    let ch = assemble_logical_channel(&w, &closest_integer_decode(&w)?)?;
    fidelity_report(&ch, cfg.noise)
}
