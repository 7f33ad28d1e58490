//! Dense linear-algebra helpers shared by the realization, structural and
//! inference modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::{Error, Result};

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE9: [f64; 10] =
    [17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0, 2162160.0, 110880.0, 3960.0, 90.0, 1.0];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
// Backward-error thresholds on the 1-norm for each Padé degree.
const THETA: [(usize, f64); 4] =
    [(3, 1.495585217958292e-2), (5, 2.539_398_330_063_23e-1), (7, 9.504178996162932e-1), (9, 2.097847961257068)];
const THETA13: f64 = 5.371920351148152;

fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

fn pade_low(a: &DMatrix<f64>, b: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let a2 = a * a;
    let mut even = DMatrix::<f64>::identity(n, n) * b[0];
    let mut odd = DMatrix::<f64>::identity(n, n) * b[1];
    let mut power = DMatrix::<f64>::identity(n, n);
    let degree = b.len() - 1;
    let mut k = 2;
    while k <= degree {
        power = &power * &a2;
        even += &power * b[k];
        if k < degree {
            odd += &power * b[k + 1];
        }
        k += 2;
    }
    (a * odd, even)
}

fn pade13(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let b = &PADE13;
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = a * (inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1]);
    let inner_v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
    (u, v)
}

/// Matrix exponential by scaling and squaring with a diagonal Padé
/// approximant (degree 3 to 13 selected from the 1-norm).
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(a.is_square(), "expm needs a square matrix");
    let n = a.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let norm = norm1(a);
    if norm == 0.0 {
        return DMatrix::identity(n, n);
    }
    for (degree, theta) in THETA {
        if norm <= theta {
            let coeffs: &[f64] = match degree {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            let (u, v) = pade_low(a, coeffs);
            return pade_solve(&u, &v);
        }
    }
    let s = ((norm / THETA13).log2().ceil()).max(0.0) as i32;
    let scaled = a / 2f64.powi(s);
    let (u, v) = pade13(&scaled);
    let mut r = pade_solve(&u, &v);
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

fn pade_solve(u: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let p = v + u;
    let q = v - u;
    q.lu().solve(&p).expect("Padé denominator is nonsingular for norms below theta")
}

/// Exact discretization of `dx = F x dt + dβ`, `E[dβ dβᵀ] = W dt`, over a
/// step `dt`, by the matrix-fraction (block-augmented exponential) method.
///
/// Returns `(exp(F dt), ∫₀^dt exp(F s) W exp(Fᵀ s) ds)`.
pub fn matrix_fraction(f: &DMatrix<f64>, w: &DMatrix<f64>, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = f.nrows();
    if w.iter().all(|v| *v == 0.0) {
        return (expm(&(f * dt)), DMatrix::zeros(n, n));
    }
    // The block exponential carries exp(-Fᵀ dt), which cancels badly once
    // |F| dt is large; integrate a short step and double it instead.
    let norm = f.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max) * dt;
    let halvings = if norm > 1.0 { norm.log2().ceil() as i32 } else { 0 };
    let h = dt / 2f64.powi(halvings);
    let mut block = DMatrix::<f64>::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(&(f * h));
    block.view_mut((0, n), (n, n)).copy_from(&(w * h));
    block.view_mut((n, n), (n, n)).copy_from(&(-f.transpose() * h));
    let phi = expm(&block);
    let mut ad = phi.view((0, 0), (n, n)).into_owned();
    let phi12 = phi.view((0, n), (n, n)).into_owned();
    let mut qd = symmetrize(&(phi12 * ad.transpose()));
    for _ in 0..halvings {
        qd = symmetrize(&(&ad * &qd * ad.transpose() + &qd));
        ad = &ad * &ad;
    }
    (ad, qd)
}

/// Zero-order-hold input matrix `∫₀^dt exp(A s) ds · B` together with
/// `exp(A dt)`, computed from one block exponential (valid for singular `A`).
pub fn zoh(a: &DMatrix<f64>, b: &DMatrix<f64>, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let m = b.ncols();
    let mut block = DMatrix::<f64>::zeros(n + m, n + m);
    block.view_mut((0, 0), (n, n)).copy_from(&(a * dt));
    block.view_mut((0, n), (n, m)).copy_from(&(b * dt));
    let phi = expm(&block);
    (phi.view((0, 0), (n, n)).into_owned(), phi.view((0, n), (n, m)).into_owned())
}

pub fn symmetrize(p: &DMatrix<f64>) -> DMatrix<f64> {
    (p + p.transpose()) * 0.5
}

pub fn symmetrize_in_place(p: &mut DMatrix<f64>) {
    let n = p.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
    }
}

/// Factor `L` with `L Lᵀ = P`; negative eigenvalues are clipped to zero.
pub fn psd_sqrt(p: &DMatrix<f64>) -> DMatrix<f64> {
    let e = symmetrize(p).symmetric_eigen();
    let mut v = e.eigenvectors;
    for (j, lam) in e.eigenvalues.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        v.column_mut(j).scale_mut(s);
    }
    v
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

pub fn block_diag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Solves the continuous Lyapunov equation `F P + P Fᵀ + W = 0` through the
/// vectorized Kronecker-sum system. Intended for the small blocks produced
/// by kernel realizations.
pub fn lyapunov(f: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = f.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let sys = id.kronecker(f) + f.kronecker(&id);
    let rhs = DVector::from_column_slice((-w).as_slice());
    let sol = sys.lu().solve(&rhs).ok_or_else(|| Error::IllConditioned("Lyapunov operator is singular".into()))?;
    Ok(symmetrize(&DMatrix::from_column_slice(n, n, sol.as_slice())))
}

/// Cholesky factorization with escalating diagonal jitter.
pub fn cholesky_jittered(a: &DMatrix<f64>, base_jitter: f64) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch);
    }
    let n = a.nrows();
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut jitter = base_jitter.max(1e-14 * scale);
    for _ in 0..8 {
        let shifted = a + DMatrix::<f64>::identity(n, n) * jitter;
        if let Some(ch) = shifted.cholesky() {
            return Ok(ch);
        }
        jitter *= 100.0;
    }
    Err(Error::IllConditioned(format!("Cholesky failed after jitter up to {jitter:e}")))
}

/// A group of numerically coincident eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct PoleCluster {
    /// Centroid of the cluster. The mean of a perturbed multiple eigenvalue
    /// is well conditioned even when the individual members are not.
    pub value: Complex64,
    pub multiplicity: usize,
}

/// Eigenvalues of `a` grouped into clusters of coincident values.
///
/// Eigenvalues closer than `rel_tol · max(1, ρ(a))` are merged (single
/// linkage), so defective multiple eigenvalues are reported once with their
/// algebraic multiplicity.
pub fn pole_clusters(a: &DMatrix<f64>, rel_tol: f64) -> Vec<PoleCluster> {
    let eig: Vec<Complex64> = a.complex_eigenvalues().iter().map(|c| Complex64::new(c.re, c.im)).collect();
    let scale = eig.iter().map(|e| e.norm()).fold(1.0, f64::max);
    let tol = rel_tol * scale;
    let n = eig.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut i = i;
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (eig[i] - eig[j]).norm() <= tol {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[rj] = ri;
                }
            }
        }
    }
    let mut groups: Vec<(usize, Vec<Complex64>)> = Vec::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        match groups.iter_mut().find(|(root, _)| *root == r) {
            Some((_, members)) => members.push(eig[i]),
            None => groups.push((r, vec![eig[i]])),
        }
    }
    let mut clusters: Vec<PoleCluster> = groups
        .into_iter()
        .map(|(_, members)| {
            let sum: Complex64 = members.iter().sum();
            PoleCluster { value: sum / members.len() as f64, multiplicity: members.len() }
        })
        .collect();
    clusters.sort_by(|a, b| a.value.im.partial_cmp(&b.value.im).unwrap().then(a.value.re.partial_cmp(&b.value.re).unwrap()));
    clusters
}

/// Formats a matrix row-major with 17 significant digits, one row per line.
pub fn dump_matrix(a: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..a.nrows() {
        let row: Vec<String> = (0..a.ncols()).map(|j| format!("{:.16e}", a[(i, j)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}
