//! Augmented latent-force model.
//!
//! Each unknown input `u_j` is modelled as the output `H_j z_j` of a kernel
//! realization, and the latent states are appended to the structural state:
//!
//! ```text
//! A_aug = [ A  b₁H₁  …  ]      C_aug = [ C  g₁H₁  … ]
//!         [ 0  F₁       ]
//!         [ 0       ⋱   ]
//! ```

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::inference::GaussianState;
use crate::linalg;
use crate::realization::SsmRealization;
use crate::structural::StateSpaceModel;
use crate::{Error, Result};

/// Position of one latent-force block inside the augmented state.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBlock {
    pub offset: usize,
    pub len: usize,
    /// 1×len output row recovering the force from the block.
    pub h: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    /// Length of the structural block (`2 n_r`), stored first.
    pub n_struct: usize,
    pub latent: Vec<LatentBlock>,
}

impl Layout {
    pub fn n_aug(&self) -> usize {
        self.n_struct + self.latent.iter().map(|b| b.len).sum::<usize>()
    }

    /// 1×n_aug row that extracts latent force `j`.
    pub fn force_row(&self, j: usize) -> DMatrix<f64> {
        let b = &self.latent[j];
        let mut row = DMatrix::zeros(1, self.n_aug());
        row.view_mut((0, b.offset), (1, b.len)).copy_from(&b.h);
        row
    }
}

/// Initial covariance of the latent blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentInitPolicy {
    Zero,
    #[default]
    Stationary,
}

#[derive(Debug, Clone)]
pub struct AugmentedModel {
    pub structure: StateSpaceModel,
    pub realizations: Vec<SsmRealization>,
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
    /// Continuous process-noise density `blkdiag[Q, L₁Qc₁L₁ᵀ, …]`.
    pub q_c: DMatrix<f64>,
    pub ad: DMatrix<f64>,
    pub qd: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub dt: f64,
    pub layout: Layout,
}

/// Builds and jointly discretizes the augmented model.
pub fn assemble(ss: &StateSpaceModel, realizations: &[SsmRealization], dt: f64) -> Result<AugmentedModel> {
    let ni = ss.n_inputs();
    if ni == 0 || realizations.is_empty() {
        return Err(Error::NoInputs);
    }
    if realizations.len() != ni {
        return Err(Error::DimensionMismatch(format!("{} realizations for {ni} inputs", realizations.len())));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    let ns = ss.n_states();
    let no = ss.n_outputs();
    let mut latent = Vec::with_capacity(ni);
    let mut offset = ns;
    for r in realizations {
        latent.push(LatentBlock { offset, len: r.dim(), h: r.h.clone() });
        offset += r.dim();
    }
    let layout = Layout { n_struct: ns, latent };
    let n = layout.n_aug();

    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (ns, ns)).copy_from(&ss.a);
    let mut c = DMatrix::zeros(no, n);
    c.view_mut((0, 0), (no, ns)).copy_from(&ss.c);
    let mut blocks = vec![ss.q.clone()];
    for (j, (r, blk)) in realizations.iter().zip(&layout.latent).enumerate() {
        let bh = ss.b.column(j) * &r.h;
        a.view_mut((0, blk.offset), (ns, blk.len)).copy_from(&bh);
        a.view_mut((blk.offset, blk.offset), (blk.len, blk.len)).copy_from(&r.f);
        let gh = ss.g.column(j) * &r.h;
        c.view_mut((0, blk.offset), (no, blk.len)).copy_from(&gh);
        blocks.push(r.diffusion());
    }
    let q_c = linalg::block_diag(&blocks.iter().collect::<Vec<_>>());
    let (ad, qd) = linalg::matrix_fraction(&a, &q_c, dt);
    Ok(AugmentedModel {
        structure: ss.clone(),
        realizations: realizations.to_vec(),
        a,
        c,
        q_c,
        ad,
        qd,
        r: ss.r.clone(),
        dt,
        layout,
    })
}

impl AugmentedModel {
    pub fn n_aug(&self) -> usize {
        self.layout.n_aug()
    }

    /// Augmented output rows `[C_e | G_e,1 H₁ | …]` for virtual outputs of
    /// another state-space model over the same structural state.
    pub fn virtual_outputs(&self, virt: &StateSpaceModel) -> Result<DMatrix<f64>> {
        let ns = self.layout.n_struct;
        if virt.n_states() != ns || virt.n_inputs() != self.layout.latent.len() {
            return Err(Error::DimensionMismatch("virtual output model does not match the structure".into()));
        }
        let mut c = DMatrix::zeros(virt.n_outputs(), self.n_aug());
        c.view_mut((0, 0), (virt.n_outputs(), ns)).copy_from(&virt.c);
        for (j, blk) in self.layout.latent.iter().enumerate() {
            let gh = virt.g.column(j) * &blk.h;
            c.view_mut((0, blk.offset), (virt.n_outputs(), blk.len)).copy_from(&gh);
        }
        Ok(c)
    }

    /// Eigenvalues `z` of `Ad_aug` at which `[Ad_aug − zI; C_aug]` loses
    /// column rank, i.e. the modes the observations cannot see.
    pub fn unobservable_modes(&self) -> Vec<Complex64> {
        let n = self.n_aug();
        let no = self.c.nrows();
        let scale = self.ad.norm().max(self.c.norm());
        let mut out: Vec<Complex64> = Vec::new();
        for z in self.ad.complex_eigenvalues().iter() {
            if out.iter().any(|o| (o - z).norm() < 1e-9 * scale) {
                continue;
            }
            let mut pencil = DMatrix::<Complex64>::zeros(n + no, n);
            for i in 0..n {
                for k in 0..n {
                    pencil[(i, k)] = Complex64::new(self.ad[(i, k)], 0.0);
                }
                pencil[(i, i)] -= z;
            }
            for i in 0..no {
                for k in 0..n {
                    pencil[(n + i, k)] = Complex64::new(self.c[(i, k)], 0.0);
                }
            }
            let sv = pencil.singular_values();
            let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
            if smin < 1e-9 * scale {
                out.push(*z);
            }
        }
        out
    }
}

/// Prior state at the first sample: mean `x0_mean` (zero when absent),
/// structural covariance `p_struct`, latent blocks set by `policy`.
pub fn initial_state(
    am: &AugmentedModel,
    x0_mean: Option<&DVector<f64>>,
    p_struct: &DMatrix<f64>,
    policy: LatentInitPolicy,
) -> Result<GaussianState> {
    let n = am.n_aug();
    let ns = am.layout.n_struct;
    if p_struct.nrows() != ns || p_struct.ncols() != ns {
        return Err(Error::DimensionMismatch(format!("structural covariance must be {ns}x{ns}")));
    }
    let mean = match x0_mean {
        Some(m) if m.len() != n => return Err(Error::DimensionMismatch(format!("initial mean must have {n} entries"))),
        Some(m) => m.clone(),
        None => DVector::zeros(n),
    };
    let mut cov = DMatrix::zeros(n, n);
    cov.view_mut((0, 0), (ns, ns)).copy_from(p_struct);
    if policy == LatentInitPolicy::Stationary {
        for (r, blk) in am.realizations.iter().zip(&am.layout.latent) {
            let p = r.p_inf.as_ref().unwrap_or(&r.p_init);
            cov.view_mut((blk.offset, blk.offset), (blk.len, blk.len)).copy_from(p);
        }
    }
    Ok(GaussianState { mean, cov, step: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Kernel;
    use crate::realization::{realize, PeriodicExpansion, RealizeOptions};
    use crate::structural::{modal_reduce, to_statespace, OutputDescriptor, OutputKind, StructuralModel};

    fn three_dof_ss(outputs: &[OutputDescriptor]) -> StateSpaceModel {
        let m = StructuralModel::chain(&[100.0, 80.0, 80.0], &[2e5, 1.5e5, 1.5e5], 2e-2, 3e-4, &[2]).unwrap();
        let red = modal_reduce(&m, 3, &[]).unwrap();
        let q = [1e-20, 1e-20, 1e-20, 1e-10, 1e-10, 1e-10];
        to_statespace(&red, outputs, &q, &vec![1e-12; outputs.len()]).unwrap()
    }

    fn acc3() -> Vec<OutputDescriptor> {
        vec![OutputDescriptor::new(OutputKind::Acceleration, 2)]
    }

    #[test]
    fn wiener_augmentation_dimensions_and_coupling() {
        let ss = three_dof_ss(&acc3());
        let r = realize(&Kernel::Wiener { sigma: 1e-2 }, &RealizeOptions::default()).unwrap();
        let am = assemble(&ss, &[r], 1e-3).unwrap();
        assert_eq!(am.n_aug(), 7);
        assert_eq!(am.a.view((0, 6), (6, 1)), ss.b.column(0));
        assert_eq!(am.a.view((6, 0), (1, 6)).iter().filter(|v| **v != 0.0).count(), 0);
        assert_eq!(am.c[(0, 6)], ss.g[(0, 0)]);
        assert_eq!(am.q_c[(6, 6)], 1e-4);
    }

    #[test]
    fn coupling_block_is_b_times_h() {
        let ss = three_dof_ss(&acc3());
        let r = realize(&Kernel::matern(2.5, 1.0, 0.2).unwrap(), &RealizeOptions::default()).unwrap();
        let am = assemble(&ss, std::slice::from_ref(&r), 1e-3).unwrap();
        let blk = &am.layout.latent[0];
        assert_eq!(am.a.view((0, blk.offset), (6, blk.len)), ss.b.column(0) * &r.h);
        assert_eq!(am.a.view((blk.offset, blk.offset), (3, 3)), r.f);
        assert_eq!(am.layout.force_row(0)[(0, blk.offset)], 1.0);
    }

    #[test]
    fn rigid_mass_with_constant_force() {
        // m ẍ = u, u constant: velocity ramps, force is held
        let ss = StateSpaceModel {
            a: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            b: DMatrix::from_column_slice(2, 1, &[0.0, 0.5]),
            c: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            g: DMatrix::zeros(1, 1),
            outputs: vec![OutputDescriptor::new(OutputKind::Displacement, 0)],
            q: DMatrix::zeros(2, 2),
            r: DMatrix::from_element(1, 1, 1.0),
        };
        let r = realize(&Kernel::Constant { sigma: 1.0 }, &RealizeOptions::default()).unwrap();
        let am = assemble(&ss, &[r], 0.1).unwrap();
        let mut x = DVector::from_column_slice(&[0.0, 0.0, 3.0]);
        for k in 1..=50 {
            x = &am.ad * &x;
            let t = 0.1 * k as f64;
            assert!((x[2] - 3.0).abs() < 1e-12);
            assert!((x[1] - 1.5 * t).abs() < 1e-10);
            assert!((x[0] - 0.75 * t * t).abs() < 1e-9);
        }
        assert!(am.qd.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn initial_state_policies() {
        let ss = three_dof_ss(&acc3());
        let o = RealizeOptions { truncation: 2, ..Default::default() };
        let per = realize(&Kernel::periodic(0.4, 0.8, 1.0), &o).unwrap();
        let am = assemble(&ss, &[per], 1e-3).unwrap();
        let zero = initial_state(&am, None, &DMatrix::zeros(6, 6), LatentInitPolicy::Zero).unwrap();
        assert!(zero.mean.iter().all(|v| *v == 0.0) && zero.cov.iter().all(|v| *v == 0.0));
        let st = initial_state(&am, None, &DMatrix::zeros(6, 6), LatentInitPolicy::Stationary).unwrap();
        let e = PeriodicExpansion::new(0.4, 0.8, 2).unwrap();
        for j in 0..=2 {
            for d in 0..2 {
                assert_eq!(st.cov[(6 + 2 * j + d, 6 + 2 * j + d)], e.coefficients[j]);
            }
        }
        let w = realize(&Kernel::Wiener { sigma: 1.0 }, &o).unwrap();
        let am = assemble(&ss, &[w], 1e-3).unwrap();
        let st = initial_state(&am, None, &DMatrix::zeros(6, 6), LatentInitPolicy::Stationary).unwrap();
        assert_eq!(st.cov[(6, 6)], 0.0);
    }

    #[test]
    fn block_recovery_matches_direct_simulation() {
        // free response of the augmented model vs the structure driven by H z(t)
        let ss = three_dof_ss(&[OutputDescriptor::new(OutputKind::Displacement, 0)]);
        let r = realize(&Kernel::matern(1.5, 1.0, 0.3).unwrap(), &RealizeOptions::default()).unwrap();
        let dt = 1e-3;
        let am = assemble(&ss, std::slice::from_ref(&r), dt).unwrap();
        let mut x = DVector::zeros(8);
        x[6] = 50.0;
        x[7] = -20.0;
        let steps = 2000;
        let mut forces = Vec::with_capacity(steps);
        let mut aug = Vec::with_capacity(steps);
        for _ in 0..steps {
            forces.push((&r.h * x.rows(6, 2))[(0, 0)]);
            aug.push((&am.c * &x)[(0, 0)]);
            x = &am.ad * &x;
        }
        // latent force has closed form: z(t) = exp(F t) z0
        let z0 = DVector::from_column_slice(&[50.0, -20.0]);
        for (k, f) in forces.iter().enumerate().step_by(97) {
            let z = linalg::expm(&(&r.f * (k as f64 * dt))) * &z0;
            assert!((f - z[0]).abs() < 1e-8 * 50.0);
        }
        // fine-step ZOH simulation of the structure under the recovered force
        let sub = 50;
        let fine = DMatrix::from_fn(steps * sub, 1, |i, _| {
            let t = i as f64 * dt / sub as f64;
            (linalg::expm(&(&r.f * t)) * &z0)[0]
        });
        let sim = ss.simulate(&fine, dt / sub as f64, None).unwrap();
        let scale = aug.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for k in (0..steps).step_by(101) {
            assert!((sim.outputs[(k * sub, 0)] - aug[k]).abs() < 1e-3 * scale);
        }
    }

    #[test]
    fn matern_acceleration_model_is_observable() {
        let outs = vec![OutputDescriptor::new(OutputKind::Acceleration, 0), OutputDescriptor::new(OutputKind::Acceleration, 2)];
        let ss = three_dof_ss(&outs);
        let r = realize(&Kernel::matern(1.5, 1.0, 0.3).unwrap(), &RealizeOptions::default()).unwrap();
        let am = assemble(&ss, &[r], 1e-3).unwrap();
        assert!(am.unobservable_modes().iter().all(|z| z.norm() <= 1.0 - 1e-6));
    }

    #[test]
    fn random_walk_force_is_unobservable_from_accelerations() {
        let ss = three_dof_ss(&acc3());
        let r = realize(&Kernel::Wiener { sigma: 0.01 }, &RealizeOptions::default()).unwrap();
        let am = assemble(&ss, &[r], 1e-3).unwrap();
        let modes = am.unobservable_modes();
        assert_eq!(modes.len(), 1);
        assert!((modes[0] - Complex64::new(1.0, 0.0)).norm() < 1e-9);
        let disp = assemble(
            &three_dof_ss(&[OutputDescriptor::new(OutputKind::Displacement, 2)]),
            &[realize(&Kernel::Wiener { sigma: 0.01 }, &RealizeOptions::default()).unwrap()],
            1e-3,
        )
        .unwrap();
        assert!(disp.unobservable_modes().is_empty());
    }

    #[test]
    fn periodic_dc_block_has_an_unobservable_mode_on_the_unit_circle() {
        let ss = three_dof_ss(&acc3());
        let r = realize(&Kernel::periodic(1.0, 1.0, 1.0), &RealizeOptions { truncation: 2, ..Default::default() }).unwrap();
        let am = assemble(&ss, &[r], 1e-3).unwrap();
        let modes = am.unobservable_modes();
        assert!(modes.iter().any(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-9));
    }

    #[test]
    fn assemble_validates_inputs() {
        let ss = three_dof_ss(&acc3());
        assert!(matches!(assemble(&ss, &[], 1e-3), Err(Error::NoInputs)));
        let r = realize(&Kernel::Wiener { sigma: 1.0 }, &RealizeOptions::default()).unwrap();
        assert!(matches!(assemble(&ss, &[r.clone(), r.clone()], 1e-3), Err(Error::DimensionMismatch(_))));
        assert!(assemble(&ss, &[r], -1.0).is_err());
    }
}
