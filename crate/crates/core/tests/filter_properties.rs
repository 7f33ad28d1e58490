use gplfm_core::gplfm::{assemble, initial_state};
use gplfm_core::inference::{kalman_filter, rts_smooth};
use gplfm_core::realization::{realize, RealizeOptions};
use gplfm_core::structural::{modal_reduce, to_statespace, OutputDescriptor, OutputKind, StructuralModel};
use gplfm_core::{Kernel, LatentInitPolicy};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn augmented(sigma: f64, l: f64) -> gplfm_core::AugmentedModel {
    let m = StructuralModel::chain(&[100.0, 80.0, 80.0], &[2e5, 1.5e5, 1.5e5], 2e-2, 3e-4, &[2]).unwrap();
    let red = modal_reduce(&m, 3, &[]).unwrap();
    let outs = [OutputDescriptor::new(OutputKind::Acceleration, 0), OutputDescriptor::new(OutputKind::Displacement, 2)];
    let ss = to_statespace(&red, &outs, &[1e-12; 6], &[1e-3, 1e-10]).unwrap();
    let r = realize(&Kernel::matern(1.5, sigma, l).unwrap(), &RealizeOptions::default()).unwrap();
    assemble(&ss, &[r], 1e-3).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn covariance_shrinks_at_update_and_stays_symmetric(
        sigma in 1.0f64..50.0,
        l in 0.05f64..1.0,
        freq in 1.0f64..30.0,
    ) {
        let am = augmented(sigma, l);
        let y = DMatrix::from_fn(300, 2, |k, c| {
            let t = k as f64 * 1e-3;
            if c == 0 { (freq * t).sin() } else { 1e-4 * (freq * t).cos() }
        });
        let init = initial_state(&am, None, &DMatrix::zeros(6, 6), LatentInitPolicy::Stationary).unwrap();
        let traj = kalman_filter(&am, &y, &init).unwrap();
        prop_assert!(traj.log_likelihood.is_finite());
        let mut prev = init.cov.clone();
        for (k, s) in traj.filtered.iter().enumerate() {
            let pred = if k == 0 { prev.clone() } else { &am.ad * &prev * am.ad.transpose() + &am.qd };
            prop_assert!(s.cov.trace() <= pred.trace() + 1e-12);
            prop_assert!((&s.cov - s.cov.transpose()).amax() < 1e-12);
            prev = s.cov.clone();
        }
        let sm = rts_smooth(&am, &traj).unwrap();
        for (f, s) in traj.filtered.iter().zip(sm.smoothed.as_ref().unwrap()) {
            for i in 0..am.n_aug() {
                prop_assert!(s.cov[(i, i)] <= f.cov[(i, i)] + 1e-10 * f.cov[(i, i)].abs().max(1e-10));
            }
        }
    }
}
