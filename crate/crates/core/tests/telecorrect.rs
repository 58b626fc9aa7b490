use std::f64::consts::PI;

use bqec::codes::*;
use bqec::fock::{hermite_functions, quadrature_transform, Quadrature, StateVector, TruncatedSpace};
use bqec::measure::*;
use bqec::noise::{amplification_channel, loss_dephasing_channel, pure_loss_channel, pure_loss_kraus, LindbladParams};
use bqec::telecorrect::*;
use bqec::{C64, CMat};
use nalgebra::{Matrix2, Matrix4};
use proptest::prelude::*;
use rayon::prelude::*;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

fn space(dim: usize) -> TruncatedSpace {
    TruncatedSpace::new(dim).unwrap()
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Single outcome realizing `ρ ↦ Σ_i q_i P_i ρ P_i`.
fn pauli_mixture_weights(q: [f64; 4]) -> OutcomeWeights {
    let c = (0..16)
        .map(|ij| CMat::from_element(1, 1, if ij / 4 == ij % 4 { c(4.0 * q[ij / 4]) } else { ZERO }))
        .collect();
    OutcomeWeights::from_parts(c, 0.0).unwrap()
}

/// Ideal teleportation: outcome `k` applies `P_k` with probability ¼.
fn teleport_weights() -> OutcomeWeights {
    let c = (0..16)
        .map(|ij| CMat::from_fn(1, 4, |_, k| if ij == 5 * k { ONE } else { ZERO }))
        .collect();
    OutcomeWeights::from_parts(c, 0.0).unwrap()
}

#[test]
fn pauli_order() {
    let x = Matrix2::new(ZERO, ONE, ONE, ZERO);
    let z = Matrix2::new(ONE, ZERO, ZERO, -ONE);
    assert_eq!(pauli(0), Matrix2::identity());
    assert_eq!(pauli(1), x);
    assert_eq!(pauli(2), z);
    assert_eq!(pauli(3), x * z);
}

#[test]
fn identity_weights_give_identity_channel() {
    let w = teleport_weights();
    assert!(w.completeness_defect() < 1e-15);
    let d = ml_decode(&w);
    assert_eq!(d.as_slice(), &[0, 1, 2, 3]);
    let ch = assemble_logical_channel(&w, &d).unwrap();
    assert!((ch.entanglement_fidelity() - 1.0).abs() < 1e-15);
    assert!((ch.choi() - LogicalChannel::identity().choi()).norm() < 1e-15);
    let r = fidelity_report(&ch, LindbladParams::noiseless()).unwrap();
    assert!((r.avg_gate_fidelity() - 1.0).abs() < 1e-15);
}

#[test]
fn uniform_weights_depolarize() {
    let w = pauli_mixture_weights([0.25; 4]);
    let d = ml_decode(&w);
    assert_eq!(d[(0, 0)], 0);
    let ch = assemble_logical_channel(&w, &d).unwrap();
    assert!((ch.entanglement_fidelity() - 0.25).abs() < 1e-15);
    assert!((avg_gate_fidelity(ch.entanglement_fidelity()) - 0.5).abs() < 1e-15);

    let kraus: Vec<Matrix2<C64>> = (0..4).map(|i| pauli(i) * c(0.5)).collect();
    let dep = LogicalChannel::from_kraus(&kraus);
    assert!((dep.entanglement_fidelity() - 0.25).abs() < 1e-15);
    assert!((dep.choi() - ch.choi()).norm() < 1e-15);
}

#[test]
fn decoded_frame_undoes_pauli() {
    // All weight on X: decoding picks X and the channel is the identity again.
    let w = pauli_mixture_weights([0.0, 1.0, 0.0, 0.0]);
    let d = ml_decode(&w);
    assert_eq!(d[(0, 0)], 1);
    let ch = assemble_logical_channel(&w, &d).unwrap();
    assert!((ch.entanglement_fidelity() - 1.0).abs() < 1e-15);
    let wrong = DecoderChoice::from_element(1, 1, 0);
    let ch = assemble_logical_channel(&w, &wrong).unwrap();
    assert!(ch.entanglement_fidelity().abs() < 1e-15);
}

#[test]
fn pauli_z_channel() {
    let ch = LogicalChannel::from_kraus(&[Matrix2::identity() * c(0.9f64.sqrt()), pauli(2) * c(0.1f64.sqrt())]);
    assert!((ch.entanglement_fidelity() - 0.9).abs() < 1e-15);
    let r = fidelity_report(&ch, LindbladParams::noiseless()).unwrap();
    assert!((r.avg_gate_fidelity() - 2.8 / 3.0).abs() < 1e-15);
    assert!(ch.check_cptp(1e-12).is_ok());
}

#[test]
fn non_cptp_assembly_is_rejected() {
    let w = pauli_mixture_weights([1.2, 0.0, 0.0, 0.0]);
    assert!(matches!(
        assemble_logical_channel(&w, &ml_decode(&w)),
        Err(bqec::Error::NotCptp { .. })
    ));
}

#[test]
fn closest_integer_needs_bit_outcomes() {
    let w = teleport_weights();
    assert!(closest_integer_decode(&w).is_err());
}

fn random_kraus(seed: [f64; 16]) -> Vec<Matrix2<C64>> {
    // Two operators normalized so that Σ K†K = I.
    let a = Matrix2::new(
        C64::new(seed[0], seed[1]),
        C64::new(seed[2], seed[3]),
        C64::new(seed[4], seed[5]),
        C64::new(seed[6], seed[7]),
    );
    let b = Matrix2::new(
        C64::new(seed[8], seed[9]),
        C64::new(seed[10], seed[11]),
        C64::new(seed[12], seed[13]),
        C64::new(seed[14], seed[15]),
    );
    let s = a.adjoint() * a + b.adjoint() * b;
    let eig = s.symmetric_eigen();
    let inv_sqrt = eig.eigenvectors
        * Matrix2::from_diagonal(&eig.eigenvalues.map(|l| c(1.0 / l.sqrt())))
        * eig.eigenvectors.adjoint();
    vec![a * inv_sqrt, b * inv_sqrt]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn superoperator_matches_apply(seed in prop::array::uniform16(-1.0f64..1.0), r in prop::array::uniform4(-1.0f64..1.0)) {
        let ops = random_kraus(seed);
        prop_assume!(ops.iter().all(|k| k.iter().all(|z| z.is_finite())));
        let ch = LogicalChannel::from_kraus(&ops);
        prop_assert!(ch.check_cptp(1e-10).is_ok());
        let rho = Matrix2::new(C64::new(r[0], 0.0), C64::new(r[1], r[2]), C64::new(r[1], -r[2]), C64::new(r[3], 0.0));
        let direct: Matrix2<C64> = ops.iter().map(|k| k * rho * k.adjoint()).sum();
        let got = ch.apply(&rho);
        prop_assert!((got - direct).norm() < 1e-12);
        let vec_rho = nalgebra::Vector4::new(rho[(0, 0)], rho[(1, 0)], rho[(0, 1)], rho[(1, 1)]);
        let s = ch.superoperator() * vec_rho;
        prop_assert!((s[0] - got[(0, 0)]).norm() < 1e-12);
        prop_assert!((s[1] - got[(1, 0)]).norm() < 1e-12);
        prop_assert!((s[2] - got[(0, 1)]).norm() < 1e-12);
        prop_assert!((s[3] - got[(1, 1)]).norm() < 1e-12);
        let fe = ch.entanglement_fidelity();
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&fe));
        let r = fidelity_report(&ch, LindbladParams::noiseless()).unwrap();
        prop_assert_eq!(r.avg_gate_fidelity(), (2.0 * fe + 1.0) / 3.0);
    }

    #[test]
    fn assembly_of_pauli_mixture(p in prop::array::uniform4(0.0f64..1.0)) {
        let total: f64 = p.iter().sum();
        prop_assume!(total > 1e-3);
        let q = p.map(|x| x / total);
        let w = pauli_mixture_weights(q);
        // Undecoded frame: F_E is the identity weight.
        let ch = assemble_logical_channel(&w, &DecoderChoice::from_element(1, 1, 0)).unwrap();
        prop_assert!((ch.entanglement_fidelity() - q[0]).abs() < 1e-14);
        let best = q.iter().cloned().fold(0.0, f64::max);
        let ch = assemble_logical_channel(&w, &ml_decode(&w)).unwrap();
        prop_assert!((ch.entanglement_fidelity() - best).abs() < 1e-14);
    }
}

/// Qubit with `|1⟩ → |0⟩` at rate κ and number dephasing at rate κ_φ.
fn qubit_channel_oracle(kt: f64, kpt: f64) -> Matrix4<C64> {
    let gamma = 1.0 - (-kt).exp();
    let coh = (-(kt + kpt) / 2.0).exp();
    // Choi rows (μ, l), unnormalized.
    let mut choi = Matrix4::zeros();
    choi[(0, 0)] = ONE;
    choi[(3, 3)] = c(1.0 - gamma);
    choi[(2, 2)] = c(gamma);
    choi[(0, 3)] = c(coh);
    choi[(3, 0)] = c(coh);
    choi
}

#[test]
fn break_even_matches_closed_form_qubit_channel() {
    let grid = [0.0, 1e-3, 1e-2];
    let mut prev_row: Option<Vec<f64>> = None;
    for &kt in &grid {
        let mut row = Vec::new();
        for &kpt in &grid {
            let r = break_even_channel(LindbladParams::new(kt, kpt).unwrap()).unwrap();
            let want = LogicalChannel::from_choi(qubit_channel_oracle(kt, kpt));
            let fe = want.entanglement_fidelity();
            assert!((r.avg_gate_fidelity() - (2.0 * fe + 1.0) / 3.0).abs() < 1e-10);
            let got = break_even_logical_channel(LindbladParams::new(kt, kpt).unwrap()).unwrap();
            assert!((got.choi() - want.choi()).norm() < 1e-10);
            if let Some(&last) = row.last() {
                assert!(r.avg_gate_fidelity() < last || kpt == 0.0);
            }
            row.push(r.avg_gate_fidelity());
        }
        if let Some(p) = &prev_row {
            for (a, b) in p.iter().zip(&row) {
                assert!(b < a || kt == 0.0);
            }
        }
        prev_row = Some(row);
    }
    let r = break_even_channel(LindbladParams::noiseless()).unwrap();
    assert!((r.avg_gate_fidelity() - 1.0).abs() < 1e-15);
}

// ---------------------------------------------------------------------------
// Rotation-code circuit against a dense three-mode simulation.

fn small_ancilla() -> CodeWords {
    cat_codewords(&RotationCodeSpec::cat(1, 2.0, space(24)).unwrap()).unwrap()
}

fn rsb_config(noise: LindbladParams, data_eta: f64, bins: usize) -> RsbCircuitConfig {
    let s = space(8);
    RsbCircuitConfig {
        data: bin_codewords(&RotationCodeSpec::bin(2, 2, s).unwrap()).unwrap(),
        ancilla: small_ancilla(),
        data_h: h_heterodyne(s),
        ancilla_h: h_adaptive_homodyne_default(space(24)).unwrap(),
        data_eta,
        noise,
        grid: PhaseGrid::new(bins).unwrap(),
    }
}

/// `Δφ F(φ_b)` in the Fock basis.
fn phase_povm(h: &HMatrix, grid: &PhaseGrid, b: usize) -> CMat {
    let phi = grid.center(b);
    let dim = h.dim();
    CMat::from_fn(dim, dim, |m, n| {
        C64::from_polar(h.get(m, n) / grid.bins() as f64, phi * (m as f64 - n as f64))
    })
}

/// Conditional output `Φ_x(|μ⟩⟨ν|)` for every outcome pair, by brute force:
/// data ⊗ ancilla ⊗ output density matrix, diagonal CROT phases, Kraus loss
/// on the data before an explicit POVM.
fn rsb_brute_force(cfg: &RsbCircuitConfig, n_ord: usize, m_ord: usize) -> Vec<Vec<[[Matrix2<C64>; 2]; 2]>> {
    let dd = cfg.data.space().dim();
    let da = cfg.ancilla.space().dim();
    let inner = 2 * da;
    let total = dd * inner;
    let mut psi = nalgebra::DVector::<C64>::zeros(inner);
    for a in 0..da {
        for o in 0..2 {
            let phase = C64::from_polar(1.0, PI * (a * o) as f64 / m_ord as f64);
            psi[a * 2 + o] = cfg.ancilla.plus().coeffs()[a] * phase * c(0.5f64.sqrt());
        }
    }
    let crot: Vec<C64> = (0..total)
        .map(|i| {
            let (n, a) = (i / inner, (i % inner) / 2);
            C64::from_polar(1.0, PI * (n * a) as f64 / (n_ord * m_ord) as f64)
        })
        .collect();
    let channel = loss_dephasing_channel(cfg.noise, cfg.data.space()).unwrap();
    let kraus: Vec<CMat> = pure_loss_kraus(cfg.data_eta, dd).unwrap().iter().map(|k| k.to_dense(dd)).collect();
    let bins = cfg.grid.bins();
    let f1: Vec<CMat> = (0..bins).map(|b| phase_povm(&cfg.data_h, &cfg.grid, b)).collect();
    let f2: Vec<CMat> = (0..bins).map(|b| phase_povm(&cfg.ancilla_h, &cfg.grid, b)).collect();

    let mut out = vec![vec![[[Matrix2::zeros(); 2]; 2]; bins]; bins];
    for mu in 0..2 {
        for nu in 0..2 {
            let rho_d = channel
                .apply(&(cfg.data.logical(mu).coeffs() * cfg.data.logical(nu).coeffs().adjoint()))
                .unwrap();
            let anc = &psi * psi.adjoint();
            let mut joint = CMat::from_fn(total, total, |i, j| {
                rho_d[(i / inner, j / inner)] * anc[(i % inner, j % inner)] * crot[i] * crot[j].conj()
            });
            // Loss on the data index only.
            let mut lossy = CMat::zeros(total, total);
            for k in &kraus {
                let big = CMat::from_fn(total, total, |i, j| {
                    if i % inner == j % inner {
                        k[(i / inner, j / inner)]
                    } else {
                        ZERO
                    }
                });
                lossy += &big * &joint * big.adjoint();
            }
            joint = lossy;
            let per_b1: Vec<Vec<Matrix2<C64>>> = (0..bins)
                .into_par_iter()
                .map(|b1| {
                    // Tr_data[(F ⊗ I) ρ]
                    let mut red = CMat::zeros(inner, inner);
                    for n in 0..dd {
                        for np in 0..dd {
                            let f = f1[b1][(np, n)];
                            if f == ZERO {
                                continue;
                            }
                            for i in 0..inner {
                                for j in 0..inner {
                                    red[(i, j)] += f * joint[(n * inner + i, np * inner + j)];
                                }
                            }
                        }
                    }
                    (0..bins)
                        .map(|b2| {
                            let mut q = Matrix2::zeros();
                            for a in 0..da {
                                for ap in 0..da {
                                    let f = f2[b2][(ap, a)];
                                    for o in 0..2 {
                                        for op in 0..2 {
                                            q[(o, op)] += f * red[(a * 2 + o, ap * 2 + op)];
                                        }
                                    }
                                }
                            }
                            q
                        })
                        .collect()
                })
                .collect();
            for b1 in 0..bins {
                for b2 in 0..bins {
                    out[b1][b2][mu][nu] = per_b1[b1][b2];
                }
            }
        }
    }
    out
}

/// `Φ_x(|μ⟩⟨ν|) = ¼ Σ_ij c_ij(x) P_i |μ⟩⟨ν| P_j†`.
fn conditional_output(w: &OutcomeWeights, r: usize, s: usize, mu: usize, nu: usize) -> Matrix2<C64> {
    let mut e = Matrix2::zeros();
    e[(mu, nu)] = ONE;
    let mut out = Matrix2::zeros();
    for i in 0..4 {
        for j in 0..4 {
            out += pauli(i) * e * pauli(j).adjoint() * (w.c(i, j)[(r, s)] * 0.25);
        }
    }
    out
}

#[test]
fn rsb_weights_match_three_mode_simulation() {
    let cfg = rsb_config(LindbladParams::new(0.05, 0.03).unwrap(), 0.8, 24);
    let w = rsb_outcome_weights(&cfg).unwrap();
    assert_eq!(w.shape(), (24, 24));
    let brute = rsb_brute_force(&cfg, 2, 1);
    let mut worst: f64 = 0.0;
    for r in 0..24 {
        for s in 0..24 {
            for mu in 0..2 {
                for nu in 0..2 {
                    let got = conditional_output(&w, r, s, mu, nu);
                    worst = worst.max((got - brute[r][s][mu][nu]).norm());
                }
            }
        }
    }
    assert!(worst < 1e-13, "worst {worst:e}");
}

#[test]
fn rsb_weight_invariants() {
    let cfg = rsb_config(LindbladParams::new(0.02, 0.01).unwrap(), 0.9, 512);
    let w = rsb_outcome_weights(&cfg).unwrap();
    assert!(w.hermiticity_defect() < 1e-10);
    assert!(w.diagonal_defect() < 1e-9);
    assert!(w.completeness_defect() < 1e-6);
}

#[test]
fn rsb_rejects_too_few_bins() {
    let mut cfg = rsb_config(LindbladParams::noiseless(), 1.0, 16);
    assert!(rsb_outcome_weights(&cfg).is_err());
    cfg.grid = PhaseGrid::new(32).unwrap();
    cfg.data_eta = 0.0;
    assert!(rsb_outcome_weights(&cfg).is_err());
}

fn bin_config(k: usize, noise: LindbladParams, bins: usize) -> RsbCircuitConfig {
    let s = space(2 * k + 24);
    let anc = default_rsb_ancilla().unwrap();
    RsbCircuitConfig {
        data: bin_codewords(&RotationCodeSpec::bin(2, k, s).unwrap()).unwrap(),
        ancilla_h: h_canonical(anc.space()),
        ancilla: anc,
        data_h: h_canonical(s),
        data_eta: 1.0,
        noise,
        grid: PhaseGrid::new(bins).unwrap(),
    }
}

#[test]
fn rsb_noise_moves_some_decisions() {
    let clean = rsb_outcome_weights(&bin_config(4, LindbladParams::noiseless(), 256)).unwrap();
    let noisy = rsb_outcome_weights(&bin_config(4, LindbladParams::new(1e-3, 0.0).unwrap(), 256)).unwrap();
    let (a, b) = (ml_decode(&clean), ml_decode(&noisy));
    let differ = a.iter().zip(b.iter()).filter(|(x, y)| x != y).count();
    assert!(differ > 0 && differ < a.len() / 2, "{differ}");
}

#[test]
fn rsb_bin_refinement_is_stable() {
    let noise = LindbladParams::new(1e-3, 1e-3).unwrap();
    let coarse = rsb_fidelity(&bin_config(4, noise, 256)).unwrap();
    let fine = rsb_fidelity(&bin_config(4, noise, 512)).unwrap();
    assert!((coarse.avg_gate_fidelity() - fine.avg_gate_fidelity()).abs() < 1e-5);
    assert!(coarse.trace_defect() < 1e-10);
}

#[test]
fn rsb_noiseless_larger_codes_improve() {
    let mut prev = 1.0;
    for k in [2, 4, 6] {
        let r = rsb_fidelity(&bin_config(k, LindbladParams::noiseless(), 256)).unwrap();
        assert!(r.infidelity() < prev);
        prev = r.infidelity();
    }
}

// ---------------------------------------------------------------------------
// GKP circuit against a two-mode quadrature integral.

fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                x[i] = z;
                w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
                break;
            }
        }
    }
    (x, w)
}

/// Nodes, weights and closest-integer bit for `segments` lattice cells on
/// each side of the origin.
fn cell_rule(segments: i64, order: usize) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let (gx, gw) = gauss_legendre(order);
    let h = PI.sqrt();
    let (mut p, mut w, mut bit) = (Vec::new(), Vec::new(), Vec::new());
    for k in -segments..=segments {
        let centre = k as f64 * h;
        for (x, wt) in gx.iter().zip(&gw) {
            p.push(centre + 0.5 * h * x);
            w.push(0.5 * h * wt);
            bit.push(k.rem_euclid(2) as usize);
        }
    }
    (p, w, bit)
}

/// `P(bit of p + ξ = β)` for `ξ ~ N(0, v)`.
fn blurred_indicator(p: f64, beta: usize, v: f64) -> f64 {
    if v == 0.0 {
        return if logical_bin(p, 1.0) == beta { 1.0 } else { 0.0 };
    }
    let h = PI.sqrt();
    let s = (2.0 * v).sqrt();
    let k0 = (p / h).round() as i64;
    let mut acc = 0.0;
    for k in k0 - 20..=k0 + 20 {
        if k.rem_euclid(2) as usize != beta {
            continue;
        }
        let (lo, hi) = ((k as f64 - 0.5) * h, (k as f64 + 0.5) * h);
        acc += 0.5 * (libm::erf((hi - p) / s) - libm::erf((lo - p) / s));
    }
    acc
}

/// `Σ_n c_n (-i)ⁿ ψ_n(p)`.
fn p_wavefunction(coeffs: &nalgebra::DVector<C64>, p: f64) -> C64 {
    let h = hermite_functions(p, coeffs.len());
    let phases = [ONE, C64::new(0.0, -1.0), -ONE, C64::new(0.0, 1.0)];
    coeffs.iter().enumerate().map(|(n, cn)| cn * phases[n % 4] * h[n]).sum()
}

#[test]
fn gkp_weights_match_two_mode_wavefunction_integral() {
    let delta = 0.5;
    let dim = gkp_required_dim(delta);
    let spec = GkpSpec::new(delta, space(dim)).unwrap();
    let kt = 0.01;
    let eta = 0.9;
    let cfg = GkpCircuitConfig {
        data: spec,
        ancilla: spec,
        eta,
        efficiency_model: EfficiencyModel::Amplified,
        noise: LindbladParams::new(kt, 0.0).unwrap(),
    };
    let w = gkp_outcome_weights(&cfg).unwrap();
    assert_eq!(w.shape(), (2, 2));
    let v = (1.0 - eta) / eta;

    let words = gkp_codewords(&spec).unwrap();
    let kraus: Vec<CMat> = pure_loss_kraus((-kt).exp(), dim)
        .unwrap()
        .iter()
        .map(|k| k.to_dense(dim))
        .collect();
    let (pp, pw, pbit) = cell_rule(10, 24);
    let np = pp.len();
    let step = 0.02;
    let xs: Vec<f64> = (-650..=650).map(|i| i as f64 * step).collect();
    // Ancilla x-wavefunctions (real Fock coefficients, real amplitudes).
    let anc_x: Vec<Vec<f64>> = (0..2)
        .map(|l| {
            let coeffs = words.dual(l).coeffs();
            xs.iter()
                .map(|&x| hermite_functions(x, dim).iter().zip(coeffs.iter()).map(|(h, c)| h * c.re).sum())
                .collect()
        })
        .collect();
    // B_l[x2, p2] = step · φ_l(x2) e^{-i p2 x2} / √(2π)
    let b: Vec<CMat> = (0..2)
        .map(|l| {
            CMat::from_fn(xs.len(), np, |i, j| {
                C64::from_polar(step * anc_x[l][i] / (2.0 * PI).sqrt(), -pp[j] * xs[i])
            })
        })
        .collect();
    let p1_weight: Vec<[f64; 2]> = pp
        .iter()
        .zip(&pw)
        .map(|(&p, &wt)| [wt * blurred_indicator(p, 0, v), wt * blurred_indicator(p, 1, v)])
        .collect();

    // acc[β1][β2][a a'][l l']
    let mut acc = [[[[ZERO; 4]; 4]; 2]; 2];
    for k in &kraus {
        let damaged: Vec<_> = (0..2).map(|a| k * words.dual(a).coeffs()).collect();
        if damaged.iter().all(|d| d.norm() < 1e-9) {
            continue;
        }
        let psi: Vec<CMat> = (0..2)
            .map(|a| {
                let vals: Vec<C64> = (0..np * xs.len())
                    .into_par_iter()
                    .map(|ij| p_wavefunction(&damaged[a], pp[ij / xs.len()] - xs[ij % xs.len()]))
                    .collect();
                CMat::from_row_slice(np, xs.len(), &vals)
            })
            .collect();
        // Ψ_{a l}(p1, p2)
        let big: Vec<CMat> = (0..4).map(|al| &psi[al / 2] * &b[al % 2]).collect();
        for i in 0..np {
            for j in 0..np {
                let wt2 = pw[j];
                for aa in 0..4 {
                    for ll in 0..4 {
                        let z = big[2 * (aa / 2) + ll / 2][(i, j)] * big[2 * (aa % 2) + ll % 2][(i, j)].conj();
                        for b1 in 0..2 {
                            acc[b1][pbit[j]][aa][ll] += z * (p1_weight[i][b1] * wt2);
                        }
                    }
                }
            }
        }
    }
    let h = |a: usize, mu: usize| if a * mu == 1 { -0.5f64.sqrt() } else { 0.5f64.sqrt() };
    let mut worst: f64 = 0.0;
    for b1 in 0..2 {
        for b2 in 0..2 {
            for mu in 0..2 {
                for nu in 0..2 {
                    let mut want = Matrix2::zeros();
                    for a in 0..2 {
                        for ap in 0..2 {
                            for l in 0..2 {
                                for lp in 0..2 {
                                    want[(l, lp)] += acc[b1][b2][2 * a + ap][2 * l + lp] * (0.5 * h(a, mu) * h(ap, nu));
                                }
                            }
                        }
                    }
                    let got = conditional_output(&w, b1, b2, mu, nu);
                    worst = worst.max((got - want).norm());
                }
            }
        }
    }
    assert!(worst < 1e-7, "worst {worst:e}");
}

#[test]
fn gkp_weight_invariants() {
    let spec = GkpSpec::new(0.4, space(gkp_required_dim(0.4))).unwrap();
    let cfg = GkpCircuitConfig {
        data: spec,
        ancilla: spec,
        eta: 0.95,
        efficiency_model: EfficiencyModel::LossWithRescaledBoundaries,
        noise: LindbladParams::new(1e-3, 1e-3).unwrap(),
    };
    let w = gkp_outcome_weights(&cfg).unwrap();
    assert!(w.hermiticity_defect() < 1e-10);
    assert!(w.diagonal_defect() < 1e-9);
    assert!(w.completeness_defect() < 1e-6);
    let ch = assemble_logical_channel(&w, &closest_integer_decode(&w).unwrap()).unwrap();
    // Trace defect comes from the overlap of the two regularized duals.
    assert!((ch.trace_defect() - w.input_overlap()).abs() < 1e-8);
}

#[test]
fn gkp_small_delta_needs_larger_cutoff() {
    let spec = GkpSpec::new(0.25, space(120)).unwrap();
    let cfg = GkpCircuitConfig {
        data: spec,
        ancilla: spec,
        eta: 1.0,
        efficiency_model: EfficiencyModel::Amplified,
        noise: LindbladParams::noiseless(),
    };
    assert!(matches!(gkp_outcome_weights(&cfg), Err(bqec::Error::CutoffInadequate { .. })));
}

#[test]
fn gkp_rescaled_boundaries_beat_amplification() {
    let spec = GkpSpec::new(0.3, space(gkp_required_dim(0.3))).unwrap();
    let run = |model| {
        gkp_fidelity(&GkpCircuitConfig {
            data: spec,
            ancilla: spec,
            eta: 0.95,
            efficiency_model: model,
            noise: LindbladParams::noiseless(),
        })
        .unwrap()
        .infidelity()
    };
    assert!(run(EfficiencyModel::LossWithRescaledBoundaries) < run(EfficiencyModel::Amplified));
}

/// Closest-integer bit probabilities of `ρ`'s p-density with boundaries
/// scaled by `scale`, integrated cell by cell.
fn bits_by_cells(rho: &CMat, scale: f64) -> [f64; 2] {
    let (p, w, bit) = cell_rule(14, 48);
    let dim = rho.nrows();
    let phases = [ONE, C64::new(0.0, -1.0), -ONE, C64::new(0.0, 1.0)];
    let mut out = [0.0; 2];
    for ((&p, &w), &b) in p.iter().zip(&w).zip(&bit) {
        let h = hermite_functions(p * scale, dim);
        let a = nalgebra::DVector::from_fn(dim, |n, _| phases[n % 4] * h[n]);
        let dens = (a.transpose() * rho * a.conjugate())[(0, 0)].re;
        out[b] += w * scale * dens;
    }
    out
}

fn gkp_dual_density(delta: f64) -> CMat {
    let words = gkp_codewords(&GkpSpec::new(delta, space(gkp_required_dim(delta) + 20)).unwrap()).unwrap();
    words.plus().density()
}

#[test]
fn blur_matches_loss_with_rescaled_boundaries() {
    let rho = gkp_dual_density(0.45);
    let dim = rho.nrows();
    let eta: f64 = 0.85;
    let lossy = pure_loss_channel(eta, space(dim)).unwrap().apply(&rho).unwrap();
    let want = bits_by_cells(&lossy, eta.sqrt());
    let got = homodyne_bit_probabilities(&rho, efficiency_blur_variance(EfficiencyModel::LossWithRescaledBoundaries, eta)).unwrap();
    for b in 0..2 {
        assert!((want[b] - got[b]).abs() < 1e-10, "{b}: {} vs {}", want[b], got[b]);
    }
}

#[test]
fn blur_matches_amplified_loss() {
    let dim = 60;
    let coh = StateVector::coherent(space(dim), C64::new(0.3, 0.9));
    let rho = coh.density();
    let eta = 0.9;
    let lossy = pure_loss_channel(eta, space(dim)).unwrap().apply(&rho).unwrap();
    let amplified = amplification_channel(1.0 / eta, space(dim)).unwrap().apply(&lossy).unwrap();
    let want = bits_by_cells(&amplified, 1.0);
    let got = homodyne_bit_probabilities(&rho, efficiency_blur_variance(EfficiencyModel::Amplified, eta)).unwrap();
    for b in 0..2 {
        assert!((want[b] - got[b]).abs() < 1e-10, "{b}: {} vs {}", want[b], got[b]);
    }
}

#[test]
fn unblurred_bits_match_homodyne_grid() {
    let rho = gkp_dual_density(0.5);
    let dim = rho.nrows();
    let binning = QuadratureBinning::uniform(12.0 * PI.sqrt(), 8001, 1.0).unwrap();
    let qt = quadrature_transform(binning.grid(), space(dim), Quadrature::P).unwrap();
    let want = homodyne_bin_weights(&binning, &qt, &rho).unwrap();
    let got = homodyne_bit_probabilities(&rho, 0.0).unwrap();
    assert!((want[0].re - got[0]).abs() < 1e-4);
    assert!((got[0] + got[1] - 1.0).abs() < 1e-12);
}
