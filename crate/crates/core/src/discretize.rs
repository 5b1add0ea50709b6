//! Dirichlet matrices for `P + P' + P''` on a lattice grid.
//!
//! The global operator is the lattice fractional Laplacian with Fourier
//! multiplier `h^{-2a} (sum_i 4 sin^2(theta_i / 2))^a`; its Dirichlet
//! realisation keeps only the rows and columns of interior nodes, which is
//! the same as applying the operator to functions extended by zero.

use std::io::{Read, Write};
use std::sync::Arc;

use faer::Mat;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::domains::Grid;
use crate::eigensolve;
use crate::error::{Error, Result};
use crate::exec::{map_indices, Execution};
use crate::field::ScalarField;
use crate::symbols::{PrincipalSymbol, SymbolKind};

/// Default transform length for 1D kernels.
pub const DEFAULT_TRANSFORM_LEN_1D: usize = 1 << 16;
/// Default transform length per axis for 2D kernels.
pub const DEFAULT_TRANSFORM_LEN_2D: usize = 1 << 10;

/// Magic bytes opening the dense binary matrix layout.
pub const MATRIX_MAGIC: [u8; 8] = *b"FWLMAT01";

/// Weights `c_m` of the lattice operator for offsets `|m|_inf <= cutoff`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeKernel {
    dim: usize,
    a: f64,
    h: f64,
    cutoff: usize,
    /// Row-major over `(m0, m1)`, each in `-cutoff..=cutoff`.
    weights: Vec<f64>,
}

impl LatticeKernel {
    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn exponent(&self) -> f64 {
        self.a
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    fn side(&self) -> usize {
        2 * self.cutoff + 1
    }

    /// `c_m`, zero outside the cutoff.
    pub fn weight(&self, m: [i64; 2]) -> f64 {
        let c = self.cutoff as i64;
        if m[0].abs() > c || (self.dim == 1 && m[1] != 0) || m[1].abs() > c {
            return 0.0;
        }
        if self.dim == 1 {
            self.weights[(m[0] + c) as usize]
        } else {
            self.weights[(m[0] + c) as usize * self.side() + (m[1] + c) as usize]
        }
    }

    pub fn c0(&self) -> f64 {
        self.weight([0, 0])
    }

    /// `sum_{|m| <= cutoff} c_m`; tends to zero as the cutoff grows.
    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// The same kernel at spacing `h`.
    pub fn rescaled(&self, h: f64) -> LatticeKernel {
        let factor = (self.h / h).powf(2.0 * self.a);
        LatticeKernel { h, weights: self.weights.iter().map(|w| w * factor).collect(), ..self.clone() }
    }
}

/// Lattice kernel with the default transform length.
pub fn kernel_weights(n: usize, a: f64, h: f64, cutoff: usize) -> Result<LatticeKernel> {
    let len = if n == 1 { DEFAULT_TRANSFORM_LEN_1D } else { DEFAULT_TRANSFORM_LEN_2D };
    kernel_weights_with_len(n, a, h, cutoff, len)
}

/// Fourier coefficients of the discrete multiplier, computed by an FFT of
/// length `len` per axis. Weights are averaged over the lattice symmetry
/// group so that the assembled matrices are exactly symmetric.
pub fn kernel_weights_with_len(n: usize, a: f64, h: f64, cutoff: usize, len: usize) -> Result<LatticeKernel> {
    if !(a > 0.0 && a <= 1.0) {
        return Err(Error::InvalidParameter(format!("kernel exponent a = {a} must lie in (0, 1]")));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter(format!("spacing h = {h} must be positive")));
    }
    if cutoff == 0 {
        return Err(Error::InvalidParameter("kernel cutoff must be >= 1".into()));
    }
    if len < 8 * cutoff {
        return Err(Error::Aliasing { len, cutoff });
    }
    let scale = h.powf(-2.0 * a);
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(len);
    let symbol = |k: usize| {
        let s = (std::f64::consts::PI * k as f64 / len as f64).sin();
        4.0 * s * s
    };
    let side = 2 * cutoff + 1;
    let c = cutoff as i64;
    let wrap = |m: i64| m.rem_euclid(len as i64) as usize;
    match n {
        1 => {
            let mut buf: Vec<Complex<f64>> = (0..len).map(|k| Complex::new(symbol(k).powf(a), 0.0)).collect();
            fft.process(&mut buf);
            let raw = |m: i64| buf[wrap(m)].re / len as f64;
            let weights = (-c..=c).map(|m| 0.5 * (raw(m) + raw(-m)) * scale).collect();
            Ok(LatticeKernel { dim: 1, a, h, cutoff, weights })
        }
        2 => {
            let s: Vec<f64> = (0..len).map(symbol).collect();
            let mut buf = vec![Complex::new(0.0, 0.0); len * len];
            for i in 0..len {
                for j in 0..len {
                    buf[i * len + j] = Complex::new((s[i] + s[j]).powf(a), 0.0);
                }
            }
            fft2_in_place(&mut buf, len, len, &fft, &fft);
            let norm = (len * len) as f64;
            let raw = |m0: i64, m1: i64| buf[wrap(m0) * len + wrap(m1)].re / norm;
            let mut weights = vec![0.0; side * side];
            for m0 in -c..=c {
                for m1 in -c..=c {
                    let avg = (raw(m0, m1)
                        + raw(-m0, m1)
                        + raw(m0, -m1)
                        + raw(-m0, -m1)
                        + raw(m1, m0)
                        + raw(-m1, m0)
                        + raw(m1, -m0)
                        + raw(-m1, -m0))
                        / 8.0;
                    weights[(m0 + c) as usize * side + (m1 + c) as usize] = avg * scale;
                }
            }
            Ok(LatticeKernel { dim: 2, a, h, cutoff, weights })
        }
        other => Err(Error::InvalidParameter(format!("kernel dimension {other} is not supported"))),
    }
}

/// Row-major 2D FFT: transforms every row, then every column.
pub(crate) fn fft2_in_place(
    buf: &mut [Complex<f64>],
    rows: usize,
    cols: usize,
    row_fft: &Arc<dyn rustfft::Fft<f64>>,
    col_fft: &Arc<dyn rustfft::Fft<f64>>,
) {
    row_fft.process(buf);
    let mut column = vec![Complex::new(0.0, 0.0); rows];
    for j in 0..cols {
        for i in 0..rows {
            column[i] = buf[i * cols + j];
        }
        col_fft.process(&mut column);
        for i in 0..rows {
            buf[i * cols + j] = column[i];
        }
    }
}

/// Lower-order part and potential attached to a Dirichlet operator.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Perturbation {
    pub a_prime: Option<f64>,
    pub kappa: f64,
    pub potential: Option<ScalarField>,
    /// `V(x_i)` at the grid nodes.
    pub potential_values: Option<Vec<f64>>,
}

/// Symmetric matrix of `r+ P~` on the interior nodes of a grid.
#[derive(Clone, Debug)]
pub struct DirichletOperator {
    matrix: Mat<f64>,
    grid: Arc<Grid>,
    a: f64,
    coefficient: Option<ScalarField>,
    perturbation: Perturbation,
    shift: f64,
}

impl DirichletOperator {
    /// Wraps an arbitrary symmetric matrix, e.g. for comparison tests.
    pub fn from_matrix(matrix: Mat<f64>, grid: Arc<Grid>, a: f64) -> Result<Self> {
        if matrix.nrows() != grid.len() || matrix.ncols() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "matrix is {}x{} but grid has {} nodes",
                matrix.nrows(),
                matrix.ncols(),
                grid.len()
            )));
        }
        Ok(Self { matrix, grid, a, coefficient: None, perturbation: Perturbation::default(), shift: 0.0 })
    }

    pub fn matrix(&self) -> &Mat<f64> {
        &self.matrix
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn spacing(&self) -> f64 {
        self.grid.spacing()
    }

    pub fn coefficient(&self) -> Option<&ScalarField> {
        self.coefficient.as_ref()
    }

    pub fn perturbation(&self) -> &Perturbation {
        &self.perturbation
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn with_shift(mut self, b: f64) -> Self {
        self.shift = b;
        self
    }

    /// `matrix + shift * I`.
    pub fn shifted_matrix(&self) -> Mat<f64> {
        let mut m = self.matrix.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += self.shift;
        }
        m
    }

    /// Restriction to the nodes selected by `mask`, keeping provenance.
    pub fn principal_submatrix(&self, mask: &[bool]) -> Mat<f64> {
        principal_submatrix(&self.matrix, mask)
    }

    /// Dense row-major binary layout: 8 magic bytes, `N` as little-endian
    /// `u64`, then `N * N` little-endian `f64`.
    pub fn write_binary(&self, mut out: impl Write) -> std::io::Result<()> {
        write_matrix_binary(&self.shifted_matrix(), &mut out)
    }

    /// Comma-separated rows, no header.
    pub fn to_csv(&self) -> String {
        let m = self.shifted_matrix();
        let mut s = String::new();
        for i in 0..m.nrows() {
            let row: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

pub fn write_matrix_binary(m: &Mat<f64>, out: &mut impl Write) -> std::io::Result<()> {
    out.write_all(&MATRIX_MAGIC)?;
    out.write_all(&(m.nrows() as u64).to_le_bytes())?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_matrix_binary(mut input: impl Read) -> Result<Mat<f64>> {
    let mut header = [0u8; 16];
    input.read_exact(&mut header)?;
    if header[..8] != MATRIX_MAGIC {
        return Err(Error::InvalidParameter("not a dense matrix file (bad magic)".into()));
    }
    let n = u64::from_le_bytes(header[8..].try_into().unwrap()) as usize;
    let mut bytes = vec![0u8; n * n * 8];
    input.read_exact(&mut bytes)?;
    Ok(Mat::from_fn(n, n, |i, j| {
        let k = (i * n + j) * 8;
        f64::from_le_bytes(bytes[k..k + 8].try_into().unwrap())
    }))
}

pub fn principal_submatrix(m: &Mat<f64>, mask: &[bool]) -> Mat<f64> {
    let idx: Vec<usize> = mask.iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| i).collect();
    Mat::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

fn kernel_matrix(exec: Execution, kernel: &LatticeKernel, grid: &Grid, node_weight: Option<&[f64]>) -> Mat<f64> {
    let n = grid.len();
    let lattice = grid.lattice();
    let cols = map_indices(exec, n, |j| {
        let lj = lattice[j];
        (0..n)
            .map(|i| {
                let li = lattice[i];
                let w = kernel.weight([li[0] - lj[0], li[1] - lj[1]]);
                match node_weight {
                    Some(phi) => 0.5 * (phi[i] + phi[j]) * w,
                    None => w,
                }
            })
            .collect::<Vec<f64>>()
    });
    Mat::from_fn(n, n, |i, j| cols[j][i])
}

fn check_cutoff(kernel: &LatticeKernel, grid: &Grid) -> Result<()> {
    if kernel.dimension() != grid.dimension() {
        return Err(Error::ShapeMismatch(format!(
            "kernel dimension {} differs from grid dimension {}",
            kernel.dimension(),
            grid.dimension()
        )));
    }
    if (kernel.spacing() - grid.spacing()).abs() > 1e-15 * grid.spacing() {
        return Err(Error::ShapeMismatch(format!(
            "kernel spacing {} differs from grid spacing {}",
            kernel.spacing(),
            grid.spacing()
        )));
    }
    let diameter = grid.lattice_diameter();
    if kernel.cutoff() < diameter {
        return Err(Error::CutoffTooSmall { cutoff: kernel.cutoff(), diameter });
    }
    Ok(())
}

/// `A_ij = c_{l_i - l_j}`, or `(Phi A + A Phi) / 2` with a coefficient.
pub fn assemble_dirichlet(
    kernel: &LatticeKernel,
    grid: impl Into<Arc<Grid>>,
    coefficient: Option<&ScalarField>,
) -> Result<DirichletOperator> {
    assemble_dirichlet_with(Execution::default(), kernel, grid, coefficient)
}

pub fn assemble_dirichlet_with(
    exec: Execution,
    kernel: &LatticeKernel,
    grid: impl Into<Arc<Grid>>,
    coefficient: Option<&ScalarField>,
) -> Result<DirichletOperator> {
    let grid = grid.into();
    check_cutoff(kernel, &grid)?;
    let phi = match coefficient {
        Some(f) => {
            let values = map_indices(exec, grid.len(), |i| f.eval(grid.coords(i)));
            if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidParameter(format!(
                    "coefficient is {v} at node {i} {:?}; it must be positive",
                    grid.coords(i)
                )));
            }
            Some(values)
        }
        None => None,
    };
    let matrix = kernel_matrix(exec, kernel, &grid, phi.as_deref());
    Ok(DirichletOperator {
        matrix,
        grid,
        a: kernel.exponent(),
        coefficient: coefficient.cloned(),
        perturbation: Perturbation::default(),
        shift: 0.0,
    })
}

/// Dirichlet matrix for a principal symbol on `grid`, with a kernel cutoff
/// of at least `min_cutoff` (use the largest grid of a nested family so all
/// members share one kernel). Anisotropic symbols have no lattice
/// discretization here.
pub fn assemble_for_symbol(
    exec: Execution,
    symbol: &PrincipalSymbol,
    grid: impl Into<Arc<Grid>>,
    min_cutoff: usize,
) -> Result<DirichletOperator> {
    let grid = grid.into();
    if let SymbolKind::Anisotropic(_) = symbol.kind() {
        return Err(Error::InvalidParameter("anisotropic symbols are not discretized".into()));
    }
    let cutoff = grid.lattice_diameter().max(min_cutoff).max(1);
    let kernel = kernel_weights(grid.dimension(), symbol.a(), grid.spacing(), cutoff)?;
    assemble_dirichlet_with(exec, &kernel, grid, symbol.coefficient())
}

/// Checks `0 < 2a' < min{2a, a + 1/2}`.
pub fn check_order_constraint(a: f64, a_prime: f64) -> Result<()> {
    let bound = (2.0 * a).min(a + 0.5);
    if 2.0 * a_prime > 0.0 && 2.0 * a_prime < bound {
        Ok(())
    } else {
        Err(Error::OrderConstraint { a, a_prime })
    }
}

/// `base + kappa (-Delta_h)^{a'} + diag(V(x_i))`.
pub fn assemble_perturbed(
    base: &DirichletOperator,
    a_prime: f64,
    kappa: f64,
    potential: Option<&ScalarField>,
) -> Result<DirichletOperator> {
    assemble_perturbed_with(Execution::default(), base, a_prime, kappa, potential)
}

pub fn assemble_perturbed_with(
    exec: Execution,
    base: &DirichletOperator,
    a_prime: f64,
    kappa: f64,
    potential: Option<&ScalarField>,
) -> Result<DirichletOperator> {
    check_order_constraint(base.a, a_prime)?;
    if !kappa.is_finite() {
        return Err(Error::InvalidParameter(format!("kappa = {kappa} must be finite")));
    }
    let grid = base.grid.clone();
    let mut matrix = base.matrix.clone();
    if kappa != 0.0 {
        let cutoff = grid.lattice_diameter().max(1);
        let lower = kernel_weights(grid.dimension(), a_prime, grid.spacing(), cutoff)?;
        let k = kernel_matrix(exec, &lower, &grid, None);
        matrix += kappa * k;
    }
    let mut potential_values = None;
    if let Some(v) = potential {
        let values = map_indices(exec, grid.len(), |i| v.eval(grid.coords(i)));
        if let Some((i, bad)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("potential is {bad} at node {i}")));
        }
        for (i, v) in values.iter().enumerate() {
            matrix[(i, i)] += v;
        }
        potential_values = Some(values);
    }
    Ok(DirichletOperator {
        matrix,
        grid,
        a: base.a,
        coefficient: base.coefficient.clone(),
        perturbation: Perturbation { a_prime: Some(a_prime), kappa, potential: potential.cloned(), potential_values },
        shift: base.shift,
    })
}

/// `phi * rho_{1/k}` with a Gaussian mollifier of standard deviation `1/k`.
pub fn mollify_coefficient(phi: &ScalarField, k: usize, dim: usize) -> Result<ScalarField> {
    phi.mollified(k, dim)
}

/// `b = max(0, -lambda_min) + 1` for the operator's unshifted matrix.
pub fn shift_for_positivity(op: &DirichletOperator) -> Result<f64> {
    shift_for_matrix(&op.matrix)
}

pub fn shift_for_matrix(m: &Mat<f64>) -> Result<f64> {
    let spectrum = eigensolve::eigenvalues_symmetric(m)?;
    let lambda_min = spectrum.eigenvalues.first().copied().unwrap_or(0.0);
    Ok((-lambda_min).max(0.0) + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::Domain;
    use std::f64::consts::PI;

    /// Recurrence of the 1D lattice fractional Laplacian weights,
    /// `c_{m+1} = c_m (m - a) / (m + a + 1)`, seeded with a quadrature `c_0`.
    fn closed_form_1d(a: f64, count: usize) -> Vec<f64> {
        let mut c = Vec::with_capacity(count);
        c.push(integrate_multiplier(a, 0));
        for m in 0..count - 1 {
            let mf = m as f64;
            let next = c[m] * (mf - a) / (mf + a + 1.0);
            c.push(next);
        }
        c
    }

    /// `(1/2pi) int_{-pi}^{pi} (4 sin^2(t/2))^a cos(m t) dt` by composite
    /// Gauss–Legendre on panels graded towards the singular point `t = 0`.
    fn integrate_multiplier(a: f64, m: i64) -> f64 {
        let (xs, ws) = crate::quadrature::gauss_legendre(20);
        let mut total = 0.0;
        let mut hi = PI;
        while hi > 1e-14 {
            let lo = hi * 0.5;
            for (x, w) in xs.iter().zip(&ws) {
                let t = lo + 0.5 * (hi - lo) * (x + 1.0);
                let f = (4.0 * (0.5 * t).sin().powi(2)).powf(a) * (m as f64 * t).cos();
                total += 0.5 * (hi - lo) * w * f;
            }
            hi = lo;
        }
        total / PI
    }

    #[test]
    fn classical_stencil_for_a_equal_one() {
        let k = kernel_weights(1, 1.0, 1.0, 8).unwrap();
        assert!((k.c0() - 2.0).abs() < 1e-12);
        assert!((k.weight([1, 0]) + 1.0).abs() < 1e-12);
        assert!((k.weight([-1, 0]) + 1.0).abs() < 1e-12);
        for m in 2..=8 {
            assert!(k.weight([m, 0]).abs() < 1e-12);
        }
        let k2 = kernel_weights(2, 1.0, 0.5, 4).unwrap();
        assert!((k2.c0() - 16.0).abs() < 1e-12);
        for m in [[1, 0], [-1, 0], [0, 1], [0, -1]] {
            assert!((k2.weight(m) + 4.0).abs() < 1e-12);
        }
        assert!(k2.weight([1, 1]).abs() < 1e-12);
        assert!(k2.weight([2, 0]).abs() < 1e-12);
    }

    #[test]
    fn half_power_weights_match_quadrature_oracle() {
        let k = kernel_weights(1, 0.5, 1.0, 64).unwrap();
        for m in 0..6 {
            let oracle = integrate_multiplier(0.5, m);
            assert!((k.weight([m, 0]) - oracle).abs() < 1e-9, "m = {m}");
        }
        let closed = closed_form_1d(0.5, 10);
        for (m, c) in closed.iter().enumerate() {
            assert!((k.weight([m as i64, 0]) - c).abs() < 1e-9);
        }
        assert!(k.weight([1, 0]) < 0.0);
        let small = kernel_weights(1, 0.5, 1.0, 8).unwrap().mass().abs();
        let large = kernel_weights(1, 0.5, 1.0, 512).unwrap().mass().abs();
        assert!(large < small / 10.0 && large < 2e-3);
    }

    #[test]
    fn transform_length_guard() {
        assert!(matches!(kernel_weights_with_len(1, 0.5, 1.0, 100, 512), Err(Error::Aliasing { .. })));
        assert!(kernel_weights(1, 1.5, 1.0, 4).is_err());
    }

    #[test]
    fn scaling_in_h_is_exact_power() {
        let k1 = kernel_weights(1, 0.3, 1.0, 16).unwrap();
        let kh = kernel_weights(1, 0.3, 0.125, 16).unwrap();
        for m in -16..=16 {
            let expected = 0.125f64.powf(-0.6) * k1.weight([m, 0]);
            assert!((kh.weight([m, 0]) - expected).abs() <= 1e-13 * expected.abs().max(1.0));
        }
        let r = k1.rescaled(0.125);
        assert!((r.c0() - kh.c0()).abs() < 1e-12);
    }

    #[test]
    fn tridiagonal_dirichlet_matrix_for_a_equal_one() {
        let grid = Domain::interval(0.0, 1.0).unwrap().grid(0.25).unwrap();
        let k = kernel_weights(1, 1.0, 0.25, grid.lattice_diameter()).unwrap();
        let op = assemble_dirichlet(&k, grid, None).unwrap();
        let m = op.matrix();
        for i in 0..3 {
            for j in 0..3 {
                let expected = match (i as i64 - j as i64).abs() {
                    0 => 32.0,
                    1 => -16.0,
                    _ => 0.0,
                };
                assert!((m[(i, j)] - expected).abs() < 1e-10);
            }
        }
        let ev = eigensolve::eigenvalues_symmetric(m).unwrap().eigenvalues;
        for (k, l) in ev.iter().enumerate() {
            let exact = 64.0 * (((k + 1) as f64) * PI * 0.125).sin().powi(2);
            assert!((l - exact).abs() < 1e-10 * exact);
        }
    }

    #[test]
    fn half_power_dirichlet_matrix_is_symmetric_toeplitz_and_positive() {
        let grid = Domain::interval(0.0, 1.0).unwrap().grid(0.25).unwrap();
        let k = kernel_weights(1, 0.5, 0.25, grid.lattice_diameter()).unwrap();
        let op = assemble_dirichlet(&k, grid, None).unwrap();
        let m = op.matrix();
        assert_eq!(m[(0, 1)], m[(1, 0)]);
        assert_eq!(m[(0, 1)], m[(1, 2)]);
        assert_eq!(m[(0, 0)], m[(2, 2)]);
        let ev = eigensolve::eigenvalues_symmetric(m).unwrap().eigenvalues;
        assert!(ev[0] > 0.0);
        assert_eq!(shift_for_positivity(&op).unwrap(), 1.0);
    }

    #[test]
    fn constant_coefficient_doubles_matrix() {
        let grid = Arc::new(Domain::l_shape().grid(0.25).unwrap());
        let k = kernel_weights(2, 0.4, 0.25, grid.lattice_diameter()).unwrap();
        let base = assemble_dirichlet(&k, grid.clone(), None).unwrap();
        let twice = assemble_dirichlet(&k, grid, Some(&ScalarField::Constant(2.0))).unwrap();
        assert_eq!(twice.matrix(), &(2.0 * base.matrix()));
    }

    #[test]
    fn assembly_errors() {
        let grid = Arc::new(Domain::interval(0.0, 1.0).unwrap().grid(0.125).unwrap());
        let short = kernel_weights(1, 0.5, 0.125, 2).unwrap();
        assert!(matches!(assemble_dirichlet(&short, grid.clone(), None), Err(Error::CutoffTooSmall { .. })));
        let k = kernel_weights(1, 0.5, 0.125, 8).unwrap();
        let negative = ScalarField::Affine { offset: -0.5, slope: vec![1.0] };
        assert!(assemble_dirichlet(&k, grid.clone(), Some(&negative)).is_err());
        let wrong_h = kernel_weights(1, 0.5, 0.25, 8).unwrap();
        assert!(assemble_dirichlet(&wrong_h, grid, None).is_err());
    }

    #[test]
    fn order_constraint() {
        assert!(check_order_constraint(0.5, 0.3).is_ok());
        assert!(matches!(check_order_constraint(0.5, 0.5), Err(Error::OrderConstraint { .. })));
        assert!(check_order_constraint(0.5, 0.0).is_err());
        // a + 1/2 is the binding bound for a > 1/2
        assert!(check_order_constraint(0.8, 0.64).is_ok());
        assert!(check_order_constraint(0.8, 0.66).is_err());
    }

    #[test]
    fn constant_potential_shifts_spectrum() {
        let grid = Arc::new(Domain::interval(0.0, PI).unwrap().grid(PI / 32.0).unwrap());
        let k = kernel_weights(1, 0.5, grid.spacing(), grid.lattice_diameter()).unwrap();
        let base = assemble_dirichlet(&k, grid, None).unwrap();
        let shifted = assemble_perturbed(&base, 0.3, 0.0, Some(&ScalarField::Constant(0.75))).unwrap();
        let e0 = eigensolve::eigenvalues_symmetric(base.matrix()).unwrap().eigenvalues;
        let e1 = eigensolve::eigenvalues_symmetric(shifted.matrix()).unwrap().eigenvalues;
        for (x, y) in e0.iter().zip(&e1) {
            assert!((y - x - 0.75).abs() < 1e-10);
        }
        let nan = ScalarField::custom(|_| f64::NAN);
        assert!(assemble_perturbed(&base, 0.3, 0.0, Some(&nan)).is_err());
        assert!(matches!(assemble_perturbed(&base, 0.5, 1.0, None), Err(Error::OrderConstraint { .. })));
    }

    #[test]
    fn shift_examples() {
        let m = Mat::from_fn(2, 2, |i, j| if i == j { [-3.0, 5.0][i] } else { 0.0 });
        assert_eq!(shift_for_matrix(&m).unwrap(), 4.0);
        let pd = Mat::from_fn(2, 2, |i, j| if i == j { [0.4, 2.0][i] } else { 0.0 });
        assert_eq!(shift_for_matrix(&pd).unwrap(), 1.0);
    }

    #[test]
    fn binary_layout_round_trip() {
        let grid = Arc::new(Domain::interval(0.0, 1.0).unwrap().grid(0.2).unwrap());
        let k = kernel_weights(1, 0.7, 0.2, 8).unwrap();
        let op = assemble_dirichlet(&k, grid, None).unwrap();
        let mut bytes = Vec::new();
        op.write_binary(&mut bytes).unwrap();
        assert_eq!(bytes.len(), 16 + 16 * 8);
        assert_eq!(&bytes[..8], b"FWLMAT01");
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 4);
        let back = read_matrix_binary(&bytes[..]).unwrap();
        assert_eq!(&back, op.matrix());
        assert_eq!(op.to_csv().lines().count(), 4);
    }

    #[test]
    fn mollified_kink_error_is_order_one_over_k() {
        let phi = ScalarField::Kink { offset: 0.0, slope: 1.0, center: vec![0.5] };
        for k in [2usize, 4, 8, 16] {
            let pk = mollify_coefficient(&phi, k, 1).unwrap();
            let err = pk.eval(&[0.5]) - phi.eval(&[0.5]);
            // oracle: E|sigma Z| = sigma sqrt(2/pi), by direct quadrature
            let sigma = 1.0 / k as f64;
            let oracle = direct_convolution(|y| (y - 0.5).abs(), 0.5, sigma);
            assert!((oracle - sigma * (2.0 / PI).sqrt()).abs() < 1e-7);
            assert!((err - oracle).abs() < 1e-6, "k = {k}: {err} vs {oracle}");
        }
    }

    fn direct_convolution(f: impl Fn(f64) -> f64, x: f64, sigma: f64) -> f64 {
        let n = 20000;
        let lo = -8.0;
        let step = 16.0 / n as f64;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..=n {
            let t = lo + i as f64 * step;
            let w = (-0.5 * t * t).exp() * if i == 0 || i == n { 0.5 } else { 1.0 };
            num += w * f(x - sigma * t);
            den += w;
        }
        num / den
    }
}
