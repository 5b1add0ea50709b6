//! Symmetric eigensolvers and the eigenvalue counting function.
//!
//! Dense problems go through a Householder tridiagonalisation (faer). Large
//! constant-coefficient problems use a Lanczos iteration with full
//! reorthogonalisation driven by an FFT convolution matvec.

use std::sync::Arc;

use faer::{Mat, Side};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::discretize::{fft2_in_place, DirichletOperator, LatticeKernel};
use crate::domains::Grid;
use crate::error::{Error, Result};

/// Relative asymmetry tolerated by the dense solver.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SpectrumMeta {
    pub nodes: usize,
    pub dimension: Option<usize>,
    pub a: Option<f64>,
    pub h: Option<f64>,
    pub domain: Option<String>,
    pub shift: f64,
}

/// Nondecreasing eigenvalues (repeated by multiplicity) and optionally the
/// matching orthonormal eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Option<Mat<f64>>,
    pub meta: SpectrumMeta,
}

impl Spectrum {
    /// Synthetic spectrum; values are sorted.
    pub fn from_values(mut values: Vec<f64>) -> Self {
        values.sort_by(|a, b| a.total_cmp(b));
        let meta = SpectrumMeta { nodes: values.len(), ..Default::default() };
        Self { eigenvalues: values, eigenvectors: None, meta }
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `lambda_j` with `j` starting at 1.
    pub fn lambda(&self, j: usize) -> f64 {
        self.eigenvalues[j - 1]
    }

    pub fn eigenvector(&self, j: usize) -> Option<Vec<f64>> {
        let v = self.eigenvectors.as_ref()?;
        (j >= 1 && j <= v.ncols()).then(|| v.col(j - 1).iter().copied().collect())
    }

    /// Spectrum of `A + b I`.
    pub fn shifted(&self, b: f64) -> Spectrum {
        let mut out = self.clone();
        for l in &mut out.eigenvalues {
            *l += b;
        }
        out.meta.shift += b;
        out
    }

    /// `N(t) = #{j : lambda_j <= t}`.
    pub fn counting(&self, t: f64) -> usize {
        counting_function(self, t)
    }

    /// CSV with header `j,lambda`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("j,lambda\n");
        for (j, l) in self.eigenvalues.iter().enumerate() {
            s.push_str(&format!("{},{}\n", j + 1, l));
        }
        s
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "metadata": self.meta, "eigenvalues": self.eigenvalues })
    }
}

pub fn counting_function(spectrum: &Spectrum, t: f64) -> usize {
    spectrum.eigenvalues.partition_point(|l| *l <= t)
}

fn check_symmetric(m: &Mat<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::ShapeMismatch(format!("matrix is {}x{}", m.nrows(), m.ncols())));
    }
    let n = m.nrows();
    let mut scale = 0.0f64;
    let mut asym = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            let v = m[(i, j)];
            if !v.is_finite() {
                return Err(Error::Solver(format!("non-finite entry at ({i}, {j})")));
            }
            scale = scale.max(v.abs());
            if i > j {
                asym = asym.max((v - m[(j, i)]).abs());
            }
        }
    }
    let rel = if scale == 0.0 { 0.0 } else { asym / scale };
    if rel > SYMMETRY_TOLERANCE {
        return Err(Error::NotSymmetric(rel));
    }
    Ok(())
}

/// All eigenvalues of a symmetric matrix, nondecreasing.
pub fn eigenvalues_symmetric(m: &Mat<f64>) -> Result<Spectrum> {
    check_symmetric(m)?;
    let values = m.self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::Solver(format!("{e:?}")))?;
    Ok(Spectrum::from_values(values))
}

/// All eigenpairs of a symmetric matrix.
pub fn eigenpairs_symmetric(m: &Mat<f64>) -> Result<Spectrum> {
    check_symmetric(m)?;
    let evd = m.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Solver(format!("{e:?}")))?;
    let values: Vec<f64> = evd.S().column_vector().iter().copied().collect();
    let vectors = evd.U().to_owned();
    let meta = SpectrumMeta { nodes: values.len(), ..Default::default() };
    Ok(Spectrum { eigenvalues: values, eigenvectors: Some(vectors), meta })
}

impl DirichletOperator {
    /// Spectrum of `matrix + shift I` with provenance metadata.
    pub fn spectrum(&self, with_vectors: bool) -> Result<Spectrum> {
        let m = self.shifted_matrix();
        let mut s = if with_vectors { eigenpairs_symmetric(&m)? } else { eigenvalues_symmetric(&m)? };
        s.meta = SpectrumMeta {
            nodes: self.len(),
            dimension: Some(self.grid().dimension()),
            a: Some(self.a()),
            h: Some(self.spacing()),
            domain: None,
            shift: self.shift(),
        };
        Ok(s)
    }
}

/// Zero-padded FFT convolution with a lattice kernel, restricted to the
/// nodes of a grid. Equivalent to multiplying by the constant-coefficient
/// Dirichlet matrix.
pub struct ConvolutionOperator {
    dim: usize,
    padded: [usize; 2],
    origin: [i64; 2],
    offsets: Vec<usize>,
    kernel_hat: Vec<Complex<f64>>,
    forward: [Arc<dyn Fft<f64>>; 2],
    inverse: [Arc<dyn Fft<f64>>; 2],
}

impl ConvolutionOperator {
    pub fn new(kernel: &LatticeKernel, grid: &Grid) -> Result<Self> {
        let dim = grid.dimension();
        if kernel.dimension() != dim {
            return Err(Error::ShapeMismatch("kernel and grid dimensions differ".into()));
        }
        let lattice = grid.lattice();
        let mut lo = [0i64; 2];
        let mut hi = [0i64; 2];
        for k in 0..dim {
            lo[k] = lattice.iter().map(|l| l[k]).min().unwrap_or(0);
            hi[k] = lattice.iter().map(|l| l[k]).max().unwrap_or(0);
        }
        let span = grid.lattice_diameter();
        if kernel.cutoff() < span {
            return Err(Error::CutoffTooSmall { cutoff: kernel.cutoff(), diameter: span });
        }
        let mut padded = [1usize; 2];
        for k in 0..dim {
            let box_len = (hi[k] - lo[k] + 1) as usize;
            padded[k] = (2 * box_len).next_power_of_two();
        }
        let mut planner = FftPlanner::<f64>::new();
        let forward = [planner.plan_fft_forward(padded[0]), planner.plan_fft_forward(padded[1])];
        let inverse = [planner.plan_fft_inverse(padded[0]), planner.plan_fft_inverse(padded[1])];
        let (p0, p1) = (padded[0], padded[1]);
        let mut kernel_hat = vec![Complex::new(0.0, 0.0); p0 * p1];
        let reach = |k: usize| if k < dim { hi[k] - lo[k] } else { 0 };
        for m0 in -reach(0)..=reach(0) {
            for m1 in -reach(1)..=reach(1) {
                let i0 = m0.rem_euclid(p0 as i64) as usize;
                let i1 = m1.rem_euclid(p1 as i64) as usize;
                kernel_hat[i0 * p1 + i1] = Complex::new(kernel.weight([m0, m1]), 0.0);
            }
        }
        let offsets = lattice
            .iter()
            .map(|l| ((l[0] - lo[0]) as usize) * p1 + (l[1] - lo[1]) as usize)
            .collect();
        let mut op = Self { dim, padded, origin: lo, offsets, kernel_hat: Vec::new(), forward, inverse };
        op.transform(&mut kernel_hat, true);
        op.kernel_hat = kernel_hat;
        Ok(op)
    }

    fn transform(&self, buf: &mut [Complex<f64>], forward: bool) {
        let plans = if forward { &self.forward } else { &self.inverse };
        if self.dim == 1 {
            plans[0].process(buf);
        } else {
            fft2_in_place(buf, self.padded[0], self.padded[1], &plans[1], &plans[0]);
        }
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Lower-left corner of the embedding box in lattice coordinates.
    pub fn origin(&self) -> [i64; 2] {
        self.origin
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        self.apply_into(v, &mut out);
        out
    }

    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        assert_eq!(v.len(), self.offsets.len());
        let total = self.padded[0] * self.padded[1];
        let mut buf = vec![Complex::new(0.0, 0.0); total];
        for (x, &o) in v.iter().zip(&self.offsets) {
            buf[o] = Complex::new(*x, 0.0);
        }
        self.transform(&mut buf, true);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        self.transform(&mut buf, false);
        let norm = total as f64;
        for (y, &o) in out.iter_mut().zip(&self.offsets) {
            *y = buf[o].re / norm;
        }
    }
}

/// One-shot convenience wrapper around [`ConvolutionOperator`].
pub fn fast_matvec(kernel: &LatticeKernel, grid: &Grid, v: &[f64]) -> Result<Vec<f64>> {
    Ok(ConvolutionOperator::new(kernel, grid)?.apply(v))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LanczosOptions {
    /// Ritz residual tolerance relative to the largest Ritz value.
    pub tolerance: f64,
    /// Krylov dimension limit; `None` allows the full space.
    pub max_dim: Option<usize>,
    pub with_vectors: bool,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self { tolerance: 1e-11, max_dim: None, with_vectors: false }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Orthogonalises `w` against `basis` twice (classical Gram–Schmidt).
fn reorthogonalize(basis: &[Vec<f64>], w: &mut [f64]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, w);
            for (x, y) in w.iter_mut().zip(q) {
                *x -= c * y;
            }
        }
    }
}

/// The `count` smallest eigenvalues of the symmetric operator given by
/// `matvec`, via Lanczos with full reorthogonalisation.
pub fn partial_eigenvalues(
    matvec: &dyn Fn(&[f64], &mut [f64]),
    n: usize,
    count: usize,
    seed: u64,
    options: LanczosOptions,
) -> Result<Spectrum> {
    if count == 0 || count > n {
        return Err(Error::InvalidParameter(format!("requested {count} eigenvalues of a {n}-dimensional operator")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random_vector = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };

    // symmetry probe
    let v = random_vector(&mut rng);
    let w = random_vector(&mut rng);
    let mut av = vec![0.0; n];
    let mut aw = vec![0.0; n];
    matvec(&v, &mut av);
    matvec(&w, &mut aw);
    let lhs = dot(&av, &w);
    let rhs = dot(&v, &aw);
    let scale = norm(&av) * norm(&w) + norm(&v) * norm(&aw);
    if (lhs - rhs).abs() > 1e-8 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotSymmetric((lhs - rhs).abs() / scale));
    }

    let max_dim = options.max_dim.unwrap_or(n).min(n);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut q = random_vector(&mut rng);
    let q_norm = norm(&q);
    q.iter_mut().for_each(|x| *x /= q_norm);
    let mut next_check = count.max(20);
    let mut w = vec![0.0; n];
    let mut anorm = 0.0f64;

    loop {
        matvec(&q, &mut w);
        let a = dot(&q, &w);
        basis.push(q.clone());
        alpha.push(a);
        reorthogonalize(&basis, &mut w);
        let mut b = norm(&w);
        anorm = anorm.max(a.abs() + b);
        let m = basis.len();

        let exhausted = m == max_dim;
        let breakdown = b <= 1e-13 * anorm.max(f64::MIN_POSITIVE);
        if m >= next_check || exhausted || (breakdown && m >= count) {
            let (ritz, vecs) = tridiagonal_eigen(&alpha, &beta)?;
            let converged = (0..count.min(m)).all(|i| (b * vecs[(m - 1, i)]).abs() <= options.tolerance * anorm);
            if (converged && m >= count) || exhausted || (breakdown && m == n) {
                if m < count {
                    return Err(Error::Solver(format!("Krylov space exhausted at dimension {m} < {count}")));
                }
                if !converged && m < n {
                    let worst = (0..count).map(|i| (b * vecs[(m - 1, i)]).abs()).fold(0.0, f64::max);
                    return Err(Error::Solver(format!(
                        "Lanczos did not converge: {m} iterations, largest residual {worst:e} (tolerance {:e})",
                        options.tolerance * anorm
                    )));
                }
                let values = ritz[..count].to_vec();
                let eigenvectors = options.with_vectors.then(|| {
                    Mat::from_fn(n, count, |r, c| (0..m).map(|k| basis[k][r] * vecs[(k, c)]).sum::<f64>())
                });
                let meta = SpectrumMeta { nodes: n, ..Default::default() };
                return Ok(Spectrum { eigenvalues: values, eigenvectors, meta });
            }
            next_check = m + (m / 8).max(10);
        }

        if breakdown {
            // invariant subspace: restart with a fresh orthogonal direction
            let mut fresh = random_vector(&mut rng);
            reorthogonalize(&basis, &mut fresh);
            let f = norm(&fresh);
            if f < 1e-10 {
                return Err(Error::Solver(format!("Lanczos breakdown at dimension {m} with no fresh direction")));
            }
            fresh.iter_mut().for_each(|x| *x /= f);
            w = fresh;
            b = 0.0;
        } else {
            w.iter_mut().for_each(|x| *x /= b);
        }
        beta.push(b);
        std::mem::swap(&mut q, &mut w);
    }
}

/// Eigen-decomposition of the symmetric tridiagonal matrix with diagonal
/// `alpha` and off-diagonal `beta`.
fn tridiagonal_eigen(alpha: &[f64], beta: &[f64]) -> Result<(Vec<f64>, Mat<f64>)> {
    let m = alpha.len();
    let t = Mat::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let evd = t.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Solver(format!("{e:?}")))?;
    Ok((evd.S().column_vector().iter().copied().collect(), evd.U().to_owned()))
}

/// Dense matvec closure for use with [`partial_eigenvalues`].
pub fn dense_matvec(m: &Mat<f64>) -> impl Fn(&[f64], &mut [f64]) + '_ {
    move |v, out| {
        out.fill(0.0);
        for j in 0..m.ncols() {
            let vj = v[j];
            let col = m.col(j);
            for (o, a) in out.iter_mut().zip(col.iter()) {
                *o += a * vj;
            }
        }
    }
}
