//! Exact discretization checked against quadrature and the semigroup property.

use gplfm_core::gplfm::assemble;
use gplfm_core::linalg::{expm, matrix_fraction};
use gplfm_core::realization::{discretize, realize, RealizeOptions, SsmRealization};
use gplfm_core::structural::{modal_reduce, to_statespace, OutputDescriptor, OutputKind, StructuralModel};
use gplfm_core::Kernel;
use nalgebra::DMatrix;

/// `∫₀^dt e^{Fs} W e^{Fᵀs} ds` by composite Simpson on 10⁴ intervals.
fn quadrature(r: &SsmRealization, dt: f64) -> DMatrix<f64> {
    let w = r.diffusion();
    let n = 10_000;
    let h = dt / n as f64;
    let step = expm(&(&r.f * h));
    let mut phi = DMatrix::<f64>::identity(r.dim(), r.dim());
    let mut acc = DMatrix::<f64>::zeros(r.dim(), r.dim());
    for i in 0..=n {
        let wgt = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += (&phi * &w * phi.transpose()) * wgt;
        phi = &step * &phi;
    }
    acc * (h / 3.0)
}

#[test]
fn process_noise_matches_quadrature() {
    let opts = RealizeOptions::default();
    for k in [
        Kernel::matern(0.5, 1.0, 0.5).unwrap(),
        Kernel::matern(1.5, 2.0, 0.3).unwrap(),
        Kernel::matern(2.5, 0.7, 1.1).unwrap(),
        Kernel::Wiener { sigma: 0.3 },
    ] {
        let r = realize(&k, &opts).unwrap();
        for dt in [1e-3, 0.05, 0.4] {
            let d = discretize(&r, dt).unwrap();
            let q = quadrature(&r, dt);
            let rel = (&d.qd - &q).norm() / q.norm();
            assert!(rel < 1e-8, "{k} dt={dt}: {rel:e}");
        }
    }
}

#[test]
fn halving_identity() {
    let opts = RealizeOptions::default();
    for k in [
        Kernel::matern(1.5, 1.0, 0.4).unwrap(),
        Kernel::quasiperiodic(0.5, 0.6, 0.8, 1.5, 1.2).unwrap(),
        Kernel::Wiener { sigma: 2.0 },
    ] {
        let r = realize(&k, &opts).unwrap();
        let dt = 0.02;
        let full = discretize(&r, dt).unwrap();
        let half = discretize(&r, dt / 2.0).unwrap();
        let ad2 = &half.ad * &half.ad;
        let qd2 = &half.ad * &half.qd * half.ad.transpose() + &half.qd;
        assert!((&ad2 - &full.ad).norm() <= 1e-9 * full.ad.norm());
        assert!((&qd2 - &full.qd).norm() <= 1e-9 * full.qd.norm(), "{k}");
    }
}

#[test]
fn joint_augmented_discretization_halves() {
    let m = StructuralModel::chain(&[100.0, 80.0, 80.0], &[2e5, 1.5e5, 1.5e5], 2e-2, 3e-4, &[2]).unwrap();
    let red = modal_reduce(&m, 3, &[]).unwrap();
    let ss = to_statespace(&red, &[OutputDescriptor::new(OutputKind::Acceleration, 2)], &[1e-10; 6], &[1e-4]).unwrap();
    let r = realize(&Kernel::matern(1.5, 5.0, 0.1).unwrap(), &RealizeOptions::default()).unwrap();
    let full = assemble(&ss, std::slice::from_ref(&r), 2e-3).unwrap();
    let half = assemble(&ss, &[r], 1e-3).unwrap();
    let qd2 = &half.ad * &half.qd * half.ad.transpose() + &half.qd;
    assert!((&half.ad * &half.ad - &full.ad).norm() <= 1e-9 * full.ad.norm());
    assert!((&qd2 - &full.qd).norm() <= 1e-9 * full.qd.norm());
    let (ad, qd) = matrix_fraction(&full.a, &full.q_c, 2e-3);
    assert_eq!(ad, full.ad);
    assert_eq!(qd, full.qd);
}
