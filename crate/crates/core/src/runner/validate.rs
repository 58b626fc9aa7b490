//! Self-check suite run by `bqec validate`. Every check is a small-dimension
//! instance of an invariant from one of the library modules, reported as a
//! measured defect against a tolerance.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::codes::{
    bin_codewords, cat_codewords, crot_propagated_angle, error_operator, gkp_codewords, gkp_required_dim,
    kerr_propagated_error, kerr_unitary, logical_z, mean_photon_number, ErrorOperatorSpec, GkpSpec,
    RotationCodeSpec,
};
use crate::error::Result;
use crate::fock::{
    beamsplitter, crot_gate, displacement, ladder_operators, rotation, BeamSplitterConvention, StateVector,
    TruncatedSpace,
};
use crate::measure::{
    ahd_moments, h_adaptive_homodyne_default, h_canonical, h_heterodyne, phase_outcome_weights, HMatrix,
    PhaseGrid, AHD_SERIES_TOL,
};
use crate::noise::{
    amplification_channel, gaussian_displacement_channel, loss_dephasing_channel, pure_loss_channel,
    GaussianDisplacementParams, LindbladParams,
};
use crate::telecorrect::{
    break_even_channel, default_rsb_ancilla, gkp_fidelity, rsb_fidelity, EfficiencyModel, GkpCircuitConfig,
    RsbCircuitConfig,
};
use crate::twirl::{monte_carlo_oracle, p_succ, twirl_fidelity, TwirlParams};
use crate::{CMat, C64};

/// Deliberate corruption used to confirm the suite can fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Lowers one diagonal entry of every H matrix before the completeness checks.
    PerturbHMatrix,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn render(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!(
                "{} {:width$}  measured {:.3e}  tolerance {:.1e}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.measured,
                c.tolerance,
            ));
        }
        let failed = self.failures().count();
        out.push_str(&format!("{} checks, {} failed\n", self.checks.len(), failed));
        out
    }
}

struct Suite {
    checks: Vec<Check>,
}

impl Suite {
    /// Records `measured <= tolerance`. Errors and NaN count as failures.
    fn check(&mut self, name: &str, tolerance: f64, f: impl FnOnce() -> Result<f64>) {
        let measured = match f() {
            Ok(v) => v,
            Err(e) => {
                log::warn!("{name}: {e}");
                f64::NAN
            }
        };
        self.checks.push(Check {
            name: name.to_string(),
            measured,
            tolerance,
            passed: measured <= tolerance,
        });
    }
}

fn space(dim: usize) -> Result<TruncatedSpace> {
    TruncatedSpace::new(dim)
}

fn max_dev(a: &CMat, b: &CMat, keep: usize) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..keep.min(a.nrows()) {
        for j in 0..keep.min(a.ncols()) {
            worst = worst.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    worst
}

fn random_density(dim: usize, seed: u64) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = CMat::from_fn(dim, dim, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let rho = &a * a.adjoint();
    let tr: C64 = (0..dim).map(|i| rho[(i, i)]).sum();
    rho / tr
}

fn proj(dim: usize, n: usize, m: usize) -> CMat {
    let mut p = CMat::zeros(dim, dim);
    p[(n, m)] = C64::new(1.0, 0.0);
    p
}

fn trace(m: &CMat) -> C64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

fn perturbed(h: HMatrix, fault: Option<Fault>) -> Result<HMatrix> {
    match fault {
        None => Ok(h),
        Some(Fault::PerturbHMatrix) => {
            let mut e = h.entries().clone();
            e[(3, 3)] = 0.9;
            HMatrix::from_entries(h.scheme(), e)
        }
    }
}

/// Runs every check. Individual failures are report content, not errors.
pub fn validate(fault: Option<Fault>) -> Report {
    let mut s = Suite { checks: Vec::new() };

    s.check("fock.commutator", 1e-13, || {
        let sp = space(12)?;
        let (a, ad, _) = ladder_operators(sp);
        let comm = a.matrix() * ad.matrix() - ad.matrix() * a.matrix();
        Ok(max_dev(&comm, &CMat::identity(12, 12), 11))
    });
    s.check("fock.displacement_unitarity", 1e-10, || {
        let sp = space(60)?;
        Ok(displacement(C64::new(0.7, -0.4), sp).unitarity_defect(30))
    });
    s.check("fock.rotation_period", 1e-13, || {
        let sp = space(9)?;
        let r = rotation(PI / 2.0, sp).into_matrix();
        Ok(max_dev(&(&r * &r * &r * &r), &CMat::identity(9, 9), 9))
    });
    s.check("fock.beamsplitter_unitarity", 1e-12, || {
        let u = beamsplitter(0.37, BeamSplitterConvention::Exchange, space(6)?, space(5)?).to_dense();
        Ok(max_dev(&(u.adjoint() * &u), &CMat::identity(30, 30), 30))
    });
    s.check("fock.coherent_normalization", 1e-12, || {
        Ok((StateVector::coherent(space(40)?, C64::new(2.0, 0.5)).norm() - 1.0).abs())
    });

    s.check("codes.binomial_orthonormality", 1e-14, || {
        let cw = bin_codewords(&RotationCodeSpec::bin(2, 3, space(12)?)?)?;
        Ok((cw.zero().norm() - 1.0)
            .abs()
            .max((cw.one().norm() - 1.0).abs())
            .max(cw.zero().inner(cw.one())?.norm()))
    });
    s.check("codes.binomial_mean_photon", 1e-12, || {
        let cw = bin_codewords(&RotationCodeSpec::bin(3, 4, space(16)?)?)?;
        Ok((mean_photon_number(&cw) - 6.0).abs())
    });
    s.check("codes.cat_orthogonality", 1e-12, || {
        let cw = cat_codewords(&RotationCodeSpec::cat(2, 2.0, space(40)?)?)?;
        Ok(cw.zero().inner(cw.one())?.norm().max(cw.plus().inner(cw.minus())?.norm()))
    });
    s.check("codes.gkp_normalization", 1e-10, || {
        let cw = gkp_codewords(&GkpSpec::new(0.4, space(gkp_required_dim(0.4))?)?)?;
        Ok((cw.zero().norm() - 1.0).abs().max((cw.one().norm() - 1.0).abs()))
    });
    s.check("codes.logical_z_propagation", 1e-10, || {
        let sp = space(40)?;
        let (n, k) = (2usize, -1i64);
        let e = error_operator(ErrorOperatorSpec { k, theta: 0.3 }, sp)?.into_matrix();
        let z = logical_z(n, sp).into_matrix();
        let rhs = &e * &z * C64::from_polar(1.0, PI * k as f64 / n as f64);
        Ok(max_dev(&(&z * &e), &rhs, sp.trusted()))
    });
    s.check("codes.crot_propagation", 1e-10, || {
        let dim = 24;
        let sp = space(dim)?;
        let crot = crot_gate(2, 3)?;
        let e = error_operator(ErrorOperatorSpec { k: -1, theta: 0.2 }, sp)?.into_matrix();
        let phi = crot_propagated_angle(-1, 2, 3);
        let eb = error_operator(ErrorOperatorSpec { k: 0, theta: phi }, sp)?.into_matrix();
        let mut worst = 0.0_f64;
        for na in 0..dim - 4 {
            for nb in 0..dim - 4 {
                for ma in 0..dim {
                    let e_ma = e[(ma, na)];
                    let lhs = crot.phase(ma, nb) * e_ma;
                    let rhs = e_ma * eb[(nb, nb)] * crot.phase(na, nb);
                    worst = worst.max((lhs - rhs).norm());
                }
            }
        }
        Ok(worst)
    });
    s.check("codes.kerr_propagation", 1e-10, || {
        let sp = space(40)?;
        let u = kerr_unitary(0.1, sp).into_matrix();
        let e = error_operator(ErrorOperatorSpec { k: 2, theta: -0.2 }, sp)?.into_matrix();
        let (phase, theta2) = kerr_propagated_error(2, -0.2, 0.1);
        let e2 = error_operator(ErrorOperatorSpec { k: 2, theta: theta2 }, sp)?.into_matrix();
        Ok(max_dev(&(&u * &e), &(&e2 * &u * C64::from_polar(1.0, phase)), sp.trusted()))
    });

    s.check("noise.trace_preservation", 1e-9, || {
        let ch = loss_dephasing_channel(LindbladParams::new(0.05, 0.02)?, space(20)?)?;
        let rho = random_density(20, 1);
        Ok((trace(&ch.apply(&rho)?) - trace(&rho)).norm())
    });
    s.check("noise.single_photon_decay", 1e-8, || {
        let ch = loss_dephasing_channel(LindbladParams::new(0.01, 0.01)?, space(12)?)?;
        Ok((ch.apply(&proj(12, 1, 1))?[(1, 1)].re - (-0.01f64).exp()).abs())
    });
    s.check("noise.coherence_factor", 1e-8, || {
        let ch = loss_dephasing_channel(LindbladParams::new(0.01, 0.01)?, space(12)?)?;
        Ok((ch.apply(&proj(12, 0, 1))?[(0, 1)].re - (-0.01f64).exp()).abs())
    });
    s.check("noise.loss_vs_beamsplitter", 1e-10, || {
        let dim = 20;
        let eta: f64 = 0.7;
        let bs = beamsplitter(eta.sqrt().acos(), BeamSplitterConvention::Inefficiency, space(dim)?, space(dim)?);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let psi: Vec<C64> = (0..dim).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let mut joint = CMat::zeros(dim, dim);
        for (n, z) in psi.iter().enumerate() {
            joint[(n, 0)] = z / norm;
        }
        let out = bs.apply(&joint)?;
        let reduced = &out * out.adjoint();
        let rho = &joint * joint.adjoint();
        let kraus = pure_loss_channel(eta, space(dim)?)?.apply(&rho)?;
        Ok(max_dev(&reduced, &kraus, dim))
    });
    s.check("noise.amplified_loss_composition", 1e-4, || {
        let dim = 40;
        let eta = 0.8;
        let comp = pure_loss_channel(eta, space(dim)?)?.then(amplification_channel(1.0 / eta, space(dim)?)?)?;
        let gauss = gaussian_displacement_channel(
            GaussianDisplacementParams {
                sigma_sq: (1.0 - eta) / eta,
            },
            space(dim)?,
        )?;
        let mut worst = 0.0_f64;
        for n in 0..=4 {
            let rho = proj(dim, n, n);
            worst = worst.max(max_dev(&comp.apply(&rho)?, &gauss.apply(&rho)?, 24));
        }
        Ok(worst)
    });

    for (name, build) in [
        ("measure.completeness.can", 0usize),
        ("measure.completeness.het", 1),
        ("measure.completeness.ahd", 2),
    ] {
        s.check(name, 1e-6, || {
            let sp = space(30)?;
            let h = match build {
                0 => h_canonical(sp),
                1 => h_heterodyne(sp),
                _ => h_adaptive_homodyne_default(sp)?,
            };
            Ok(perturbed(h, fault)?.completeness_defect(1024))
        });
    }
    s.check("measure.ahd_moment_base_case", 1e-16, || {
        let m = ahd_moments(12);
        let mut dfact = 1.0_f64;
        let mut worst = 0.0_f64;
        for n in 0..=10 {
            if n > 0 {
                dfact *= (2 * n + 1) as f64;
            }
            worst = worst.max((m[(n, 0)] * dfact - 1.0).abs());
        }
        Ok(worst)
    });
    s.check("measure.ahd_unit_diagonal", AHD_SERIES_TOL, || {
        Ok(h_adaptive_homodyne_default(space(31)?)?.diagonal_defect())
    });
    s.check("measure.heterodyne_closed_form", 1e-14, || {
        let h = h_heterodyne(space(8)?);
        Ok((h.get(0, 1) - PI.sqrt() / 2.0).abs().max((h.get(0, 2) - 0.5f64.sqrt()).abs()))
    });
    s.check("measure.weights_sum_to_trace", 1e-8, || {
        let rho = random_density(20, 3);
        let w = phase_outcome_weights(&h_heterodyne(space(20)?), &PhaseGrid::new(128)?, &rho)?;
        Ok((w.iter().sum::<C64>() - trace(&rho)).norm())
    });
    s.check("measure.heisenberg_loss", 1e-12, || {
        let sp = space(16)?;
        let rho = random_density(16, 4);
        let grid = PhaseGrid::new(64)?;
        let h = h_heterodyne(sp);
        let lossy = pure_loss_channel(0.7, sp)?.apply(&rho)?;
        let want = phase_outcome_weights(&h, &grid, &lossy)?;
        let got = phase_outcome_weights(&h.after_loss(0.7)?, &grid, &rho)?;
        Ok(got.iter().zip(&want).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
    });

    s.check("telecorrect.break_even_closed_form", 1e-10, || {
        let (kt, kpt) = (0.02, 0.01);
        let fe = break_even_channel(LindbladParams::new(kt, kpt)?)?.entanglement_fidelity();
        let want = (1.0 + (-kt).exp() + 2.0 * (-(kt + kpt) / 2.0).exp()) / 4.0;
        Ok((fe - want).abs())
    });
    s.check("telecorrect.rsb_trace_preservation", 1e-9, || {
        let sp = space(9)?;
        let anc = default_rsb_ancilla()?;
        let r = rsb_fidelity(&RsbCircuitConfig {
            data: bin_codewords(&RotationCodeSpec::bin(2, 4, sp)?)?,
            ancilla_h: h_canonical(anc.space()),
            ancilla: anc,
            data_h: h_heterodyne(sp),
            data_eta: 0.9,
            noise: LindbladParams::new(1e-3, 1e-3)?,
            grid: PhaseGrid::new(256)?,
        })?;
        Ok(r.trace_defect())
    });
    s.check("telecorrect.gkp_vs_twirl_relative", 0.05, || {
        let delta = 0.4;
        let spec = GkpSpec::new(delta, space(gkp_required_dim(delta))?)?;
        let fock = gkp_fidelity(&GkpCircuitConfig {
            data: spec,
            ancilla: spec,
            eta: 1.0,
            efficiency_model: EfficiencyModel::Amplified,
            noise: LindbladParams::noiseless(),
        })?;
        let tw = twirl_fidelity(&TwirlParams::new(delta, delta, 1.0)?, false)?;
        Ok((fock.infidelity() - tw.infidelity()).abs() / tw.infidelity())
    });

    s.check("twirl.p_succ_fourier", 1e-12, || {
        let sigma: f64 = 0.4;
        let mut acc = 0.5;
        for k in (1..2001).step_by(2) {
            let kf = k as f64;
            acc += 2.0 * (kf * PI / 2.0).sin() / (kf * PI) * (-PI * sigma * sigma * kf * kf / 2.0).exp();
        }
        Ok((p_succ(sigma) - acc).abs())
    });
    s.check("twirl.monte_carlo_sigmas", 4.0, || {
        let mc = monte_carlo_oracle(0.4, 0.4, 100_000, 1)?;
        Ok((mc.estimate - p_succ(0.4).powi(2)).abs() / mc.stderr)
    });

    s.check("runner.float_round_trip", 0.0, || {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut mismatches = 0.0;
        for _ in 0..1000 {
            let x: f64 = rng.random::<f64>() * 10f64.powi(rng.random_range(-20..20));
            let back: f64 = super::sweep::fmt_f64(x).parse().unwrap_or(f64::NAN);
            if back.to_bits() != x.to_bits() {
                mismatches += 1.0;
            }
        }
        Ok(mismatches)
    });

    Report { checks: s.checks }
}
