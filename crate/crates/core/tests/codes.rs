use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use bqec::codes::*;
use bqec::fock::{crot_gate, StateVector, TruncatedSpace};
use bqec::{C64, CMat};
use proptest::prelude::*;

fn space(dim: usize) -> TruncatedSpace {
    TruncatedSpace::new(dim).unwrap()
}

fn block_dev(a: &CMat, b: &CMat, keep: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..keep {
        for j in 0..keep {
            worst = worst.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    worst
}

/// Independent mean photon number: direct sum of n |c_n|² over both words.
fn brute_mean(cw: &CodeWords) -> f64 {
    let mut total = 0.0;
    for word in [cw.zero(), cw.one()] {
        let norm: f64 = word.coeffs().iter().map(|c| c.norm_sqr()).sum();
        let mut s = 0.0;
        for (n, c) in word.coeffs().iter().enumerate() {
            s += n as f64 * c.norm_sqr();
        }
        total += s / norm;
    }
    total / 2.0
}

#[test]
fn cat_routes_agree() {
    for (order, alpha) in [(1, 2.0), (2, 3.0), (3, 2.83), (4, 1.7)] {
        let spec = RotationCodeSpec::cat(order, alpha, space(60)).unwrap();
        let a = cat_codewords(&spec).unwrap();
        let b = cat_codewords_coherent_sum(&spec).unwrap();
        for (x, y) in [(a.zero(), b.zero()), (a.one(), b.one())] {
            let d = (x.coeffs() - y.coeffs()).camax();
            assert!(d < 1e-10, "N={order} α={alpha}: {d}");
        }
    }
}

#[test]
fn cat_small_alpha_and_parity() {
    let spec = RotationCodeSpec::cat(1, 1e-4, space(20)).unwrap();
    let cw = cat_codewords(&spec).unwrap();
    assert!((cw.zero().coeffs()[0].re - 1.0).abs() < 1e-6);

    let cw = cat_codewords(&RotationCodeSpec::cat(1, 2.0, space(40)).unwrap()).unwrap();
    for n in (1..40).step_by(2) {
        assert_eq!(cw.zero().coeffs()[n], C64::new(0.0, 0.0));
    }
}

#[test]
fn cat_mean_photon_number_matches_brute_sum() {
    let cw = cat_codewords(&RotationCodeSpec::cat(2, 3.0, space(60)).unwrap()).unwrap();
    assert_abs_diff_eq!(mean_photon_number(&cw), brute_mean(&cw), epsilon = 1e-9);
    let cw = cat_codewords(&RotationCodeSpec::cat(1, 3.0, space(60)).unwrap()).unwrap();
    assert_abs_diff_eq!(mean_photon_number(&cw), brute_mean(&cw), epsilon = 1e-6);
}

#[test]
fn cat_cutoff_error_names_required_dim() {
    let spec = RotationCodeSpec::cat(2, 4.0, space(20)).unwrap();
    match cat_codewords(&spec) {
        Err(bqec::Error::CutoffInadequate { required, .. }) => assert!(required > 20),
        other => panic!("expected cutoff error, got {other:?}"),
    }
}

#[test]
fn binomial_small_cases() {
    let cw = bin_codewords(&RotationCodeSpec::bin(1, 2, space(6)).unwrap()).unwrap();
    let h = 0.5f64.sqrt();
    assert_abs_diff_eq!(cw.zero().coeffs()[0].re, h, epsilon = 1e-15);
    assert_abs_diff_eq!(cw.zero().coeffs()[2].re, h, epsilon = 1e-15);
    assert_abs_diff_eq!(cw.one().coeffs()[1].re, 1.0, epsilon = 1e-15);
    assert_abs_diff_eq!(mean_photon_number(&cw), 1.0, epsilon = 1e-15);

    let cw = bin_codewords(&RotationCodeSpec::bin(1, 3, space(6)).unwrap()).unwrap();
    assert_abs_diff_eq!(cw.one().coeffs()[1].re, 3f64.sqrt() / 2.0, epsilon = 1e-15);
    assert_abs_diff_eq!(cw.one().coeffs()[3].re, 0.5, epsilon = 1e-15);
}

#[test]
fn binomial_exact_normalization() {
    // Integer check of Σ_even C(K,p) = Σ_odd C(K,p) = 2^{K-1}.
    for k in 2u64..=20 {
        let mut binom = vec![1u64];
        for _ in 0..k {
            let mut next = vec![1u64];
            for w in binom.windows(2) {
                next.push(w[0] + w[1]);
            }
            next.push(1);
            binom = next;
        }
        let even: u64 = binom.iter().step_by(2).sum();
        let odd: u64 = binom.iter().skip(1).step_by(2).sum();
        assert_eq!(even, 1 << (k - 1));
        assert_eq!(odd, 1 << (k - 1));
    }
    for (order, k) in [(2, 2), (2, 7), (3, 5), (4, 4)] {
        let cw = bin_codewords(&RotationCodeSpec::bin(order, k, space(40)).unwrap()).unwrap();
        let n0: f64 = cw.zero().coeffs().iter().map(|c| c.norm_sqr()).sum();
        let n1: f64 = cw.one().coeffs().iter().map(|c| c.norm_sqr()).sum();
        assert_abs_diff_eq!(n0, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(n1, 1.0, epsilon = 1e-14);
    }
}

#[test]
fn binomial_mean_photon_is_nk_over_two() {
    for k in 2..=8 {
        let cw = bin_codewords(&RotationCodeSpec::bin(2, k, space(40)).unwrap()).unwrap();
        assert_abs_diff_eq!(mean_photon_number(&cw), k as f64, epsilon = 1e-12);
    }
}

#[test]
fn rotation_code_structure() {
    let s = space(48);
    let codes = [
        cat_codewords(&RotationCodeSpec::cat(2, 2.5, s).unwrap()).unwrap(),
        cat_codewords(&RotationCodeSpec::cat(3, 2.0, s).unwrap()).unwrap(),
        bin_codewords(&RotationCodeSpec::bin(2, 4, s).unwrap()).unwrap(),
        bin_codewords(&RotationCodeSpec::bin(3, 3, s).unwrap()).unwrap(),
    ];
    for cw in &codes {
        let n = cw.stride();
        for (m, c) in cw.zero().coeffs().iter().enumerate() {
            if !(m % n == 0 && (m / n) % 2 == 0) {
                assert_eq!(*c, C64::new(0.0, 0.0));
            }
        }
        for (m, c) in cw.one().coeffs().iter().enumerate() {
            if !(m % n == 0 && (m / n) % 2 == 1) {
                assert_eq!(*c, C64::new(0.0, 0.0));
            }
        }
        assert_eq!(cw.zero().inner(cw.one()).unwrap(), C64::new(0.0, 0.0));
        let z = logical_z(n, s);
        let z0 = z.apply(cw.zero()).unwrap();
        let z1 = z.apply(cw.one()).unwrap();
        assert!((z0.coeffs() - cw.zero().coeffs()).camax() < 1e-10);
        assert!((z1.coeffs() + cw.one().coeffs()).camax() < 1e-10);
        let r = rotation_symmetry(n, s).into_matrix();
        let p = cw.projector();
        assert!((&r * &p - &p * &r).camax() < 1e-10);
        assert_abs_diff_eq!(cw.plus().inner(cw.minus()).unwrap().norm(), 0.0, epsilon = 1e-14);
    }
}

#[test]
fn cat_coefficients_flatten_with_alpha() {
    // Spread of neighbouring |f_kN| in the bulk shrinks as α grows.
    let mut last = f64::INFINITY;
    for alpha in [2.0, 3.0, 4.0, 5.0] {
        let cw = cat_codewords(&RotationCodeSpec::cat(2, alpha, space(120)).unwrap()).unwrap();
        let f: Vec<f64> = cw.plus().coeffs().iter().step_by(2).map(|c| c.norm()).collect();
        let peak = f.iter().cloned().fold(0.0, f64::max);
        let bulk: Vec<f64> = f.iter().cloned().filter(|x| *x > 0.1 * peak).collect();
        let spread = bulk.windows(2).map(|w| (w[0] - w[1]).abs()).fold(0.0, f64::max);
        assert!(spread < last, "α={alpha}: {spread} !< {last}");
        last = spread;
    }
}

/// `⟨0_δ|1_δ⟩` from the position-space form: Gaussians of variance
/// `tanh(δ²)/2` at `x₀ sech δ²` weighted by `e^{-x₀² tanh(δ²)/2}`.
fn gkp_overlap_oracle(delta: f64) -> f64 {
    let tau = delta * delta;
    let (t, c) = (tau.tanh(), tau.cosh());
    let sp = PI.sqrt();
    let wave = |mu: i64, x: f64| -> f64 {
        (-30i64..=30)
            .map(|s| {
                let x0 = (2 * s + mu) as f64 * sp;
                (-0.5 * x0 * x0 * t).exp() * (-(x - x0 / c).powi(2) / (2.0 * t)).exp()
            })
            .sum()
    };
    let h = 1e-3;
    let (mut n0, mut n1, mut ov) = (0.0, 0.0, 0.0);
    for i in -40000..=40000 {
        let x = i as f64 * h;
        let (a, b) = (wave(0, x), wave(1, x));
        n0 += a * a;
        n1 += b * b;
        ov += a * b;
    }
    ov / (n0 * n1).sqrt()
}

#[test]
fn gkp_basic_properties() {
    let cw = gkp_codewords(&GkpSpec::new(0.5, space(60)).unwrap()).unwrap();
    assert_abs_diff_eq!(cw.zero().norm(), 1.0, epsilon = 1e-10);
    let overlap = cw.zero().inner(cw.one()).unwrap().norm();
    assert_abs_diff_eq!(overlap, gkp_overlap_oracle(0.5), epsilon = 1e-8);
    assert!(overlap > 0.08 && overlap < 0.082);

    let cw = gkp_codewords(&GkpSpec::new(2.0, space(20)).unwrap()).unwrap();
    let vac = StateVector::fock(space(20), 0).unwrap();
    assert!(cw.zero().fidelity(&vac).unwrap() > 0.99);
}

#[test]
fn gkp_squeezed_sum_route_agrees() {
    for delta in [0.5, 0.4] {
        let spec = GkpSpec::new(delta, space(80)).unwrap();
        let a = gkp_codewords(&spec).unwrap();
        let b = gkp_codewords_squeezed_sum(&spec).unwrap();
        for mu in 0..2 {
            let f = a.logical(mu).fidelity(b.logical(mu)).unwrap();
            assert!(f > 1.0 - 1e-8, "δ={delta} μ={mu}: 1-F = {}", 1.0 - f);
        }
    }
}

#[test]
fn gkp_overlap_shrinks_with_delta() {
    let mut last = 1.0;
    for (delta, dim) in [(0.4, 80), (0.35, 110), (0.3, 140), (0.25, 200)] {
        let cw = gkp_codewords(&GkpSpec::new(delta, space(dim)).unwrap()).unwrap();
        let ov = cw.zero().inner(cw.one()).unwrap().norm();
        assert!(ov < last);
        last = ov;
        // The duals are quarter turns of the words, so they overlap equally.
        let dual_ov = cw.plus().inner(cw.minus()).unwrap().norm();
        assert!((dual_ov - ov).abs() < 1e-10 * ov.max(1e-3), "{dual_ov} vs {ov}");
    }
    assert!(last < 1e-5);
}

#[test]
fn gkp_cutoff_error() {
    assert!(matches!(
        gkp_codewords(&GkpSpec::new(0.2, space(60)).unwrap()),
        Err(bqec::Error::CutoffInadequate { .. })
    ));
}

#[test]
fn squeezing_db_values() {
    assert_abs_diff_eq!(squeezing_db(0.5f64.sqrt()), 0.0, epsilon = 1e-12);
    assert_abs_diff_eq!(squeezing_db(0.225), 9.95, epsilon = 0.01);
    assert_abs_diff_eq!(delta_from_db(squeezing_db(0.3)), 0.3, epsilon = 1e-14);
}

#[test]
fn trivial_code() {
    let cw = trivial_codewords(space(4)).unwrap();
    assert_eq!(cw.zero(), &StateVector::fock(space(4), 0).unwrap());
    assert_eq!(cw.one(), &StateVector::fock(space(4), 1).unwrap());
    assert_eq!(cw.plus().inner(cw.minus()).unwrap().norm(), 0.0);
    assert_abs_diff_eq!(mean_photon_number(&cw), 0.5);
}

#[test]
fn json_round_trip() {
    let cw = cat_codewords(&RotationCodeSpec::cat(2, 2.0, space(30)).unwrap()).unwrap();
    let text = cw.to_json().unwrap();
    assert!(text.contains("\"family\": \"cat\""));
    let back = CodeWords::from_json(&text).unwrap();
    assert_eq!(back, cw);
}

#[test]
fn error_operator_basics() {
    let s = space(10);
    let id = error_operator(ErrorOperatorSpec { k: 0, theta: 0.0 }, s).unwrap();
    assert_eq!(id.matrix(), &CMat::identity(10, 10));
    let a = error_operator(ErrorOperatorSpec { k: -1, theta: 0.0 }, s).unwrap();
    let (lower, _, _) = bqec::fock::ladder_operators(s);
    assert!((a.matrix() - lower.matrix()).camax() < 1e-15);
}

#[test]
fn z_propagation_identity() {
    let s = space(40);
    let (n, k, theta) = (2usize, -1i64, 0.3);
    let e = error_operator(ErrorOperatorSpec { k, theta }, s).unwrap().into_matrix();
    let z = logical_z(n, s).into_matrix();
    let lhs = &z * &e;
    let rhs = &e * &z * C64::from_polar(1.0, PI * k as f64 / n as f64);
    assert!(block_dev(&lhs, &rhs, s.trusted()) < 1e-10);
}

#[test]
fn crot_propagation_identity() {
    let dim = 24;
    let s = space(dim);
    let (n_ord, m_ord) = (2, 3);
    let crot = crot_gate(n_ord, m_ord).unwrap();
    for (k, theta) in [(-1i64, 0.2), (2, -0.4), (-3, 1.1)] {
        let e = error_operator(ErrorOperatorSpec { k, theta }, s).unwrap().into_matrix();
        let phi = crot_propagated_angle(k, n_ord, m_ord);
        let eb = error_operator(ErrorOperatorSpec { k: 0, theta: phi }, s).unwrap().into_matrix();
        // Compare CROT (E⊗1) and (E⊗E_0(φ)) CROT on product basis states.
        let mut worst: f64 = 0.0;
        for na in 0..dim - 4 {
            for nb in 0..dim - 4 {
                for ma in 0..dim {
                    let e_ma = e[(ma, na)];
                    if e_ma == C64::new(0.0, 0.0) {
                        continue;
                    }
                    let lhs = crot.phase(ma, nb) * e_ma;
                    let rhs = e_ma * eb[(nb, nb)] * crot.phase(na, nb);
                    worst = worst.max((lhs - rhs).norm());
                }
            }
        }
        assert!(worst < 1e-10, "k={k}: {worst}");
    }
}

#[test]
fn kerr_propagation_identity() {
    let s = space(40);
    let kerr = 0.1;
    let u = kerr_unitary(kerr, s).into_matrix();
    for (k, theta) in [(1i64, 0.3), (-1, 0.3), (2, -0.2), (-2, 0.5)] {
        let e = error_operator(ErrorOperatorSpec { k, theta }, s).unwrap().into_matrix();
        let (phase, theta2) = kerr_propagated_error(k, theta, kerr);
        let e2 = error_operator(ErrorOperatorSpec { k, theta: theta2 }, s).unwrap().into_matrix();
        let lhs = &u * &e;
        let rhs = &e2 * &u * C64::from_polar(1.0, phase);
        assert!(block_dev(&lhs, &rhs, s.trusted()) < 1e-10, "k={k}");
    }
}

proptest! {
    #[test]
    fn squeezing_db_decreasing(d1 in 0.05f64..2.0, d2 in 0.05f64..2.0) {
        prop_assume!(d1 < d2);
        prop_assert!(squeezing_db(d1) > squeezing_db(d2));
    }

    #[test]
    fn cat_words_normalized(order in 1usize..4, alpha in 0.3f64..3.0) {
        let cw = cat_codewords(&RotationCodeSpec::cat(order, alpha, space(64)).unwrap()).unwrap();
        for v in [cw.zero(), cw.one(), cw.plus(), cw.minus()] {
            prop_assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn gkp_duals_are_quarter_turns_of_computational_words() {
    for delta in [0.5, 0.35] {
        let dim = if delta > 0.4 { 60 } else { 110 };
        let cw = gkp_codewords(&GkpSpec::new(delta, TruncatedSpace::new(dim).unwrap()).unwrap()).unwrap();
        let quarter = bqec::fock::rotation(std::f64::consts::FRAC_PI_2, cw.space());
        let turned0 = quarter.apply(cw.zero()).unwrap();
        let turned1 = quarter.apply(cw.one()).unwrap();
        assert!(cw.plus().fidelity(&turned0).unwrap() > 1.0 - 1e-12);
        assert!(cw.minus().fidelity(&turned1).unwrap() > 1.0 - 1e-12);
    }
}
