//! Second-order structural models and their first-order state-space form.
//!
//! `M z̈ + D ż + K z = Sᵢ u` is reduced onto a basis `Ψ = [Ψₙ Ψ_α]` of
//! mass-normalized normal modes and residual attachment modes, then written
//! as `ẋ = A x + B u`, `y = C x + G u` with mixed displacement, velocity and
//! acceleration outputs.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::{Error, Result};

/// `M z̈ + D ż + K z = Sᵢ u`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralModel {
    pub m: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub k: DMatrix<f64>,
    /// Boolean input shape matrix, one nonzero per column.
    pub si: DMatrix<f64>,
}

fn is_symmetric(a: &DMatrix<f64>) -> bool {
    let scale = a.iter().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    (a - a.transpose()).iter().all(|v| v.abs() <= 1e-12 * scale)
}

impl StructuralModel {
    pub fn new(m: DMatrix<f64>, d: DMatrix<f64>, k: DMatrix<f64>, si: DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        for (name, a) in [("M", &m), ("D", &d), ("K", &k)] {
            if a.nrows() != n || a.ncols() != n {
                return Err(Error::DimensionMismatch(format!("{name} is {}x{}, expected {n}x{n}", a.nrows(), a.ncols())));
            }
        }
        if si.nrows() != n {
            return Err(Error::DimensionMismatch(format!("Si has {} rows, expected {n}", si.nrows())));
        }
        if si.ncols() == 0 {
            return Err(Error::NoInputs);
        }
        if !is_symmetric(&m) || m.clone().cholesky().is_none() {
            return Err(Error::IndefiniteMass);
        }
        if !is_symmetric(&k) {
            return Err(Error::InvalidArgument("K must be symmetric".into()));
        }
        for col in si.column_iter() {
            let ones = col.iter().filter(|v| **v == 1.0).count();
            if ones != 1 || col.iter().any(|v| *v != 0.0 && *v != 1.0) {
                return Err(Error::InvalidArgument("Si columns must hold a single unit entry".into()));
            }
        }
        Ok(StructuralModel { m, d, k, si })
    }

    /// Chain of masses connected by springs, the first one grounded, with
    /// Rayleigh damping `D = α M + β K` and one input per entry of `input_dofs`.
    pub fn chain(masses: &[f64], springs: &[f64], alpha: f64, beta: f64, input_dofs: &[usize]) -> Result<Self> {
        let n = masses.len();
        if springs.len() != n {
            return Err(Error::DimensionMismatch(format!("{n} masses but {} springs", springs.len())));
        }
        let m = DMatrix::from_diagonal(&DVector::from_column_slice(masses));
        let mut k = DMatrix::zeros(n, n);
        for (i, ki) in springs.iter().enumerate() {
            k[(i, i)] += ki;
            if i > 0 {
                k[(i - 1, i - 1)] += ki;
                k[(i - 1, i)] -= ki;
                k[(i, i - 1)] -= ki;
            }
        }
        let d = &m * alpha + &k * beta;
        let mut si = DMatrix::zeros(n, input_dofs.len());
        for (j, &dof) in input_dofs.iter().enumerate() {
            if dof >= n {
                return Err(Error::InvalidArgument(format!("input dof {dof} out of range")));
            }
            si[(dof, j)] = 1.0;
        }
        StructuralModel::new(m, d, k, si)
    }

    pub fn n_dof(&self) -> usize {
        self.m.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.si.ncols()
    }

    /// Loads a model from a TOML descriptor naming whitespace-delimited
    /// matrix files, resolved relative to the descriptor:
    ///
    /// ```toml
    /// mass = "M.txt"
    /// stiffness = "K.txt"
    /// damping = "D.txt"        # or: rayleigh = [alpha, beta]
    /// input_shape = "Si.txt"
    /// ```
    pub fn from_descriptor(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let desc: ModelDescriptor = toml::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let m = read_matrix_file(&dir.join(&desc.mass))?;
        let k = read_matrix_file(&dir.join(&desc.stiffness))?;
        let d = match (&desc.damping, desc.rayleigh) {
            (Some(f), None) => read_matrix_file(&dir.join(f))?,
            (None, Some([a, b])) => &m * a + &k * b,
            (None, None) => DMatrix::zeros(m.nrows(), m.ncols()),
            (Some(_), Some(_)) => return Err(Error::Parse("give either `damping` or `rayleigh`, not both".into())),
        };
        let si = read_matrix_file(&dir.join(&desc.input_shape))?;
        StructuralModel::new(m, d, k, si)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDescriptor {
    mass: String,
    stiffness: String,
    damping: Option<String>,
    rayleigh: Option<[f64; 2]>,
    input_shape: String,
}

/// Parses a dense row-major matrix; blank lines and `#` comments are skipped.
pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| tok.parse::<f64>().map_err(|e| Error::Parse(format!("line {}: `{tok}`: {e}", ln + 1))))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse(format!("line {}: {} columns, expected {}", ln + 1, row.len(), first.len())));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("empty matrix".into()));
    }
    let (r, c) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_row_iterator(r, c, rows.into_iter().flatten()))
}

pub fn read_matrix_file(path: &Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path)?;
    parse_matrix(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Model projected onto `z ≈ Ψ p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedModel {
    /// `[Ψₙ Ψ_α]`, n_dof × n_r.
    pub psi: DMatrix<f64>,
    /// Number of retained normal modes `n_k`; the remaining columns are attachment modes.
    pub n_modes: usize,
    pub mr: DMatrix<f64>,
    pub dr: DMatrix<f64>,
    pub kr: DMatrix<f64>,
    pub sr: DMatrix<f64>,
    /// Undamped natural frequencies of the retained modes in Hz.
    pub frequencies_hz: Vec<f64>,
    /// Modal damping ratios `φᵀDφ / 2ω` of the retained modes.
    pub damping_ratios: Vec<f64>,
}

impl ReducedModel {
    pub fn n_r(&self) -> usize {
        self.psi.ncols()
    }

    /// Identity basis: the reduced matrices are the physical ones.
    pub fn full(model: &StructuralModel) -> Result<Self> {
        let (omega, phi) = normal_modes(model)?;
        let (frequencies_hz, damping_ratios) = modal_table(model, &omega, &phi);
        let n = model.n_dof();
        Ok(ReducedModel {
            psi: DMatrix::identity(n, n),
            n_modes: n,
            mr: model.m.clone(),
            dr: model.d.clone(),
            kr: model.k.clone(),
            sr: model.si.clone(),
            frequencies_hz,
            damping_ratios,
        })
    }
}

/// Mass-normalized undamped modes sorted by ascending frequency: (ω, Φ).
pub fn normal_modes(model: &StructuralModel) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let chol = model.m.clone().cholesky().ok_or(Error::IndefiniteMass)?;
    let l = chol.l();
    let linv = l.clone().try_inverse().ok_or(Error::IndefiniteMass)?;
    let a = linalg::symmetrize(&(&linv * &model.k * linv.transpose()));
    let eig = a.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let n = model.n_dof();
    let mut phi = DMatrix::zeros(n, n);
    let mut omega = Vec::with_capacity(n);
    let linv_t = linv.transpose();
    for (c, &i) in order.iter().enumerate() {
        let mut v = &linv_t * eig.eigenvectors.column(i);
        // sign convention: largest-magnitude entry positive
        let imax = v.iamax();
        if v[imax] < 0.0 {
            v = -v;
        }
        phi.set_column(c, &v);
        omega.push(eig.eigenvalues[i].max(0.0).sqrt());
    }
    Ok((omega, phi))
}

fn modal_table(model: &StructuralModel, omega: &[f64], phi: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let freqs = omega.iter().map(|w| w / (2.0 * std::f64::consts::PI)).collect();
    let zetas = omega
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let c = phi.column(i);
            (c.transpose() * &model.d * c)[(0, 0)] / (2.0 * w)
        })
        .collect();
    (freqs, zetas)
}

/// Projects the model onto its `n_k` lowest modes plus one residual
/// attachment mode per entry of `attachment_dofs`.
pub fn modal_reduce(model: &StructuralModel, n_k: usize, attachment_dofs: &[usize]) -> Result<ReducedModel> {
    let n = model.n_dof();
    if n_k == 0 || n_k > n {
        return Err(Error::InvalidArgument(format!("number of modes must be in 1..={n}, got {n_k}")));
    }
    if n_k + attachment_dofs.len() > n {
        return Err(Error::InvalidArgument("reduction basis larger than the model".into()));
    }
    let (omega, phi) = normal_modes(model)?;
    let phi_n = phi.columns(0, n_k).into_owned();
    let mut psi = DMatrix::zeros(n, n_k + attachment_dofs.len());
    psi.columns_mut(0, n_k).copy_from(&phi_n);
    if !attachment_dofs.is_empty() {
        let lu = model.k.clone().lu();
        let kscale = model.k.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let min_pivot = lu.u().diagonal().iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
        if !(min_pivot > 1e-12 * kscale) {
            return Err(Error::SingularStiffness);
        }
        for (c, &dof) in attachment_dofs.iter().enumerate() {
            if dof >= n {
                return Err(Error::InvalidArgument(format!("attachment dof {dof} out of range")));
            }
            let mut e = DVector::zeros(n);
            e[dof] = 1.0;
            let mut g = lu.solve(&e).ok_or(Error::SingularStiffness)?;
            let full_norm = g.norm();
            for i in 0..n_k {
                let p = phi_n.column(i);
                g -= p * (p[dof] / (omega[i] * omega[i]));
            }
            if g.norm() <= 1e-10 * full_norm {
                return Err(Error::InvalidArgument(format!("attachment mode at dof {dof} is spanned by the retained modes")));
            }
            let mass_norm = (g.transpose() * &model.m * &g)[(0, 0)].sqrt();
            psi.set_column(n_k + c, &(g / mass_norm));
        }
    }
    let (frequencies_hz, damping_ratios) = modal_table(model, &omega[..n_k], &phi_n);
    let pt = psi.transpose();
    Ok(ReducedModel {
        mr: linalg::symmetrize(&(&pt * &model.m * &psi)),
        dr: linalg::symmetrize(&(&pt * &model.d * &psi)),
        kr: linalg::symmetrize(&(&pt * &model.k * &psi)),
        sr: &pt * &model.si,
        psi,
        n_modes: n_k,
        frequencies_hz,
        damping_ratios,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Displacement,
    Velocity,
    Acceleration,
    /// User-supplied linear combination of physical displacements.
    StrainProxy,
}

impl OutputKind {
    /// Short token used in column names.
    pub fn token(self) -> &'static str {
        match self {
            OutputKind::Displacement => "disp",
            OutputKind::Velocity => "vel",
            OutputKind::Acceleration => "acc",
            OutputKind::StrainProxy => "strain",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputDescriptor {
    pub kind: OutputKind,
    /// Zero-based physical dof.
    pub dof: usize,
    /// Weights over physical displacements, only for [`OutputKind::StrainProxy`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl OutputDescriptor {
    pub fn new(kind: OutputKind, dof: usize) -> Self {
        OutputDescriptor { kind, dof, weights: None }
    }

    pub fn strain_proxy(dof: usize, weights: Vec<f64>) -> Self {
        OutputDescriptor { kind: OutputKind::StrainProxy, dof, weights: Some(weights) }
    }

    /// Column label such as `acc3` (one-based dof).
    pub fn label(&self) -> String {
        format!("{}{}", self.kind.token(), self.dof + 1)
    }
}

/// `ẋ = A x + B u + w`, `y = C x + G u + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub outputs: Vec<OutputDescriptor>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

/// Builds the first-order model of a reduced structure.
pub fn to_statespace(
    red: &ReducedModel,
    outputs: &[OutputDescriptor],
    q_diag: &[f64],
    r_diag: &[f64],
) -> Result<StateSpaceModel> {
    let nr = red.n_r();
    let ni = red.sr.ncols();
    let ndof = red.psi.nrows();
    if q_diag.len() != 2 * nr {
        return Err(Error::DimensionMismatch(format!("Q diagonal has {} entries, expected {}", q_diag.len(), 2 * nr)));
    }
    if r_diag.len() != outputs.len() {
        return Err(Error::DimensionMismatch(format!("R diagonal has {} entries, expected {}", r_diag.len(), outputs.len())));
    }
    if q_diag.iter().chain(r_diag).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument("noise variances must be positive".into()));
    }
    let mr_lu = red.mr.clone().lu();
    let minv_k = mr_lu.solve(&red.kr).ok_or(Error::IndefiniteMass)?;
    let minv_d = mr_lu.solve(&red.dr).ok_or(Error::IndefiniteMass)?;
    let minv_s = mr_lu.solve(&red.sr).ok_or(Error::IndefiniteMass)?;

    let mut a = DMatrix::zeros(2 * nr, 2 * nr);
    a.view_mut((0, nr), (nr, nr)).fill_with_identity();
    a.view_mut((nr, 0), (nr, nr)).copy_from(&(-&minv_k));
    a.view_mut((nr, nr), (nr, nr)).copy_from(&(-&minv_d));
    let mut b = DMatrix::zeros(2 * nr, ni);
    b.view_mut((nr, 0), (nr, ni)).copy_from(&minv_s);

    let no = outputs.len();
    let mut c = DMatrix::zeros(no, 2 * nr);
    let mut g = DMatrix::zeros(no, ni);
    for (i, o) in outputs.iter().enumerate() {
        if o.dof >= ndof {
            return Err(Error::DimensionMismatch(format!("output dof {} out of range", o.dof)));
        }
        let row = red.psi.row(o.dof);
        match o.kind {
            OutputKind::Displacement => c.view_mut((i, 0), (1, nr)).copy_from(&row),
            OutputKind::Velocity => c.view_mut((i, nr), (1, nr)).copy_from(&row),
            OutputKind::Acceleration => {
                c.view_mut((i, 0), (1, nr)).copy_from(&(-(row * &minv_k)));
                c.view_mut((i, nr), (1, nr)).copy_from(&(-(row * &minv_d)));
                g.row_mut(i).copy_from(&(row * &minv_s));
            }
            OutputKind::StrainProxy => {
                let w = o.weights.as_ref().ok_or_else(|| Error::InvalidArgument("strain-proxy output needs weights".into()))?;
                if w.len() != ndof {
                    return Err(Error::DimensionMismatch(format!("strain weights have {} entries, expected {ndof}", w.len())));
                }
                let wr = DMatrix::from_row_slice(1, ndof, w) * &red.psi;
                c.view_mut((i, 0), (1, nr)).copy_from(&wr);
            }
        }
    }
    Ok(StateSpaceModel {
        a,
        b,
        c,
        g,
        outputs: outputs.to_vec(),
        q: DMatrix::from_diagonal(&DVector::from_column_slice(q_diag)),
        r: DMatrix::from_diagonal(&DVector::from_column_slice(r_diag)),
    })
}

/// Time histories stored one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub states: DMatrix<f64>,
    pub outputs: DMatrix<f64>,
}

impl StateSpaceModel {
    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }

    /// Frequency response `C (iωI − A)⁻¹ B + G`.
    pub fn frf(&self, omega: f64) -> Result<DMatrix<Complex64>> {
        let n = self.n_states();
        let a = self.a.map(|v| Complex64::new(v, 0.0));
        let m = DMatrix::<Complex64>::identity(n, n) * Complex64::new(0.0, omega) - a;
        let x = m
            .lu()
            .solve(&self.b.map(|v| Complex64::new(v, 0.0)))
            .ok_or_else(|| Error::IllConditioned(format!("iω = {omega}i is a pole")))?;
        Ok(self.c.map(|v| Complex64::new(v, 0.0)) * x + self.g.map(|v| Complex64::new(v, 0.0)))
    }

    /// Zero-order-hold discretization (Ad, Bd).
    pub fn discretize_zoh(&self, dt: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        Ok(linalg::zoh(&self.a, &self.b, dt))
    }

    /// Noise-free ZOH response; `u` holds one input sample per row and
    /// `x_k = Ad x_{k−1} + Bd u_{k−1}`, `y_k = C x_k + G u_k`.
    pub fn simulate(&self, u: &DMatrix<f64>, dt: f64, x0: Option<&DVector<f64>>) -> Result<Simulation> {
        if u.ncols() != self.n_inputs() {
            return Err(Error::DimensionMismatch(format!("input has {} columns, expected {}", u.ncols(), self.n_inputs())));
        }
        let n = self.n_states();
        let mut x = match x0 {
            Some(x0) if x0.len() != n => {
                return Err(Error::DimensionMismatch(format!("x0 has {} entries, expected {n}", x0.len())))
            }
            Some(x0) => x0.clone(),
            None => DVector::zeros(n),
        };
        let (ad, bd) = self.discretize_zoh(dt)?;
        let steps = u.nrows();
        let mut states = DMatrix::zeros(steps, n);
        let mut outputs = DMatrix::zeros(steps, self.n_outputs());
        for k in 0..steps {
            let uk = u.row(k).transpose();
            if k > 0 {
                let uprev = u.row(k - 1).transpose();
                x = &ad * &x + &bd * uprev;
            }
            states.row_mut(k).copy_from(&x.transpose());
            let y = &self.c * &x + &self.g * &uk;
            outputs.row_mut(k).copy_from(&y.transpose());
        }
        Ok(Simulation { states, outputs })
    }
}

/// Root-mean-square of each column.
pub fn channel_rms(y: &DMatrix<f64>) -> Vec<f64> {
    y.column_iter().map(|c| (c.iter().map(|v| v * v).sum::<f64>() / c.len().max(1) as f64).sqrt()).collect()
}

/// Adds white Gaussian noise with per-column standard deviation `std`.
pub fn add_measurement_noise<R: Rng + ?Sized>(y: &DMatrix<f64>, std: &[f64], rng: &mut R) -> Result<DMatrix<f64>> {
    if std.len() != y.ncols() {
        return Err(Error::DimensionMismatch(format!("{} noise levels for {} channels", std.len(), y.ncols())));
    }
    let mut out = y.clone();
    for (j, s) in std.iter().enumerate() {
        for v in out.column_mut(j).iter_mut() {
            let e: f64 = StandardNormal.sample(rng);
            *v += s * e;
        }
    }
    Ok(out)
}
