//! Singular values of finite matrices, weak Schatten quasi-norms and the
//! classical inequalities between them, plus the resolvent-difference
//! study for mollified coefficients.

use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::discretize::{
    assemble_dirichlet_with, kernel_weights, mollify_coefficient, shift_for_positivity, DirichletOperator,
};
use crate::domains::Domain;
use crate::eigensolve::eigenvalues_symmetric;
use crate::error::{Error, Result};
use crate::exec::{map_indices, Execution};
use crate::field::ScalarField;
use crate::quadrature::median_iqr;

/// Relative tolerance for all inequality checks in this module.
pub const INEQUALITY_TOLERANCE: f64 = 1e-10;

/// Nonincreasing singular values `s_1 >= s_2 >= ...` of a `rows x cols`
/// matrix; there are `min(rows, cols)` of them.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SValues {
    pub values: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl SValues {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `s_j` with `j` starting at 1; zero past the end.
    pub fn s(&self, j: usize) -> f64 {
        if j == 0 {
            return f64::INFINITY;
        }
        self.values.get(j - 1).copied().unwrap_or(0.0)
    }

    /// Largest singular value (operator norm).
    pub fn norm(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }
}

fn is_exactly_symmetric(b: &Mat<f64>) -> bool {
    b.nrows() == b.ncols() && (0..b.nrows()).all(|j| (j + 1..b.nrows()).all(|i| b[(i, j)] == b[(j, i)]))
}

/// Singular values, nonincreasing. Symmetric input goes through the
/// symmetric eigensolver (`s_j` are the sorted `|lambda|`).
pub fn singular_values(b: &Mat<f64>) -> Result<SValues> {
    let (rows, cols) = (b.nrows(), b.ncols());
    if (0..cols).any(|j| (0..rows).any(|i| !b[(i, j)].is_finite())) {
        return Err(Error::Solver("matrix has non-finite entries".into()));
    }
    let mut values = if rows == 0 || cols == 0 {
        Vec::new()
    } else if is_exactly_symmetric(b) {
        eigenvalues_symmetric(b)?.eigenvalues.iter().map(|l| l.abs()).collect()
    } else {
        b.singular_values().map_err(|e| Error::Solver(format!("SVD did not converge: {e:?}")))?
    };
    values.sort_by(|x, y| y.total_cmp(x));
    Ok(SValues { values, rows, cols })
}

/// `max_j j^{1/p} s_j`, the least `C` with `s_j <= C j^{-1/p}`.
pub fn weak_schatten_quasinorm(s: &[f64], p: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::InvalidParameter(format!("quasi-norm exponent p = {p} must be positive")));
    }
    Ok(s.iter().enumerate().map(|(j, v)| ((j + 1) as f64).powf(1.0 / p) * v).fold(0.0, f64::max))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompositionReport {
    /// `max_j s_j(EBF) / (|E| s_j(B) |F|)` over indices where the bound is
    /// above the noise floor.
    pub max_ratio: f64,
    pub ok: bool,
    /// First index `j` breaking the bound.
    pub witness: Option<usize>,
}

fn product(a: &Mat<f64>, b: &Mat<f64>) -> Result<Mat<f64>> {
    if a.ncols() != b.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "cannot multiply {}x{} by {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(a * b)
}

/// Checks `s_j(EBF) <= |E| s_j(B) |F|` for every `j`.
pub fn check_composition_bound(e: &Mat<f64>, b: &Mat<f64>, f: &Mat<f64>) -> Result<CompositionReport> {
    let ebf = product(&product(e, b)?, f)?;
    let s = singular_values(&ebf)?;
    let sb = singular_values(b)?;
    let scale = singular_values(e)?.norm() * singular_values(f)?.norm();
    let floor = INEQUALITY_TOLERANCE * scale * sb.norm();
    let mut max_ratio = 0.0f64;
    let mut witness = None;
    for j in 1..=s.len() {
        let bound = scale * sb.s(j);
        if s.s(j) > bound * (1.0 + INEQUALITY_TOLERANCE) + floor && witness.is_none() {
            witness = Some(j);
        }
        if bound > floor {
            max_ratio = max_ratio.max(s.s(j) / bound);
        }
    }
    Ok(CompositionReport { max_ratio, ok: witness.is_none(), witness })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KyFanReport {
    pub ok: bool,
    /// Indices `(j, k)` of the first violation.
    pub witness: Option<(usize, usize)>,
    /// Largest `lhs - rhs` seen, relative to the scale of the right side.
    pub max_excess: f64,
}

fn kyfan_scan(combined: &SValues, first: &SValues, second: &SValues, rhs: impl Fn(f64, f64) -> f64) -> KyFanReport {
    let scale = rhs(first.norm(), second.norm()).max(f64::MIN_POSITIVE);
    let mut witness = None;
    let mut max_excess = f64::NEG_INFINITY;
    let n = combined.len();
    for j in 1..=n {
        for k in 1..=(n + 1 - j) {
            let excess = (combined.s(j + k - 1) - rhs(first.s(j), second.s(k))) / scale;
            max_excess = max_excess.max(excess);
            if excess > INEQUALITY_TOLERANCE && witness.is_none() {
                witness = Some((j, k));
            }
        }
    }
    if n == 0 {
        max_excess = 0.0;
    }
    KyFanReport { ok: witness.is_none(), witness, max_excess }
}

/// `s_{j+k-1}(B + B') <= s_j(B) + s_k(B')` for all admissible `j, k`.
pub fn kyfan_additive_check(b: &Mat<f64>, b2: &Mat<f64>) -> Result<KyFanReport> {
    if b.nrows() != b2.nrows() || b.ncols() != b2.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "cannot add {}x{} and {}x{}",
            b.nrows(),
            b.ncols(),
            b2.nrows(),
            b2.ncols()
        )));
    }
    let sum = b + b2;
    Ok(kyfan_scan(&singular_values(&sum)?, &singular_values(b)?, &singular_values(b2)?, |x, y| x + y))
}

/// `s_{j+k-1}(B B') <= s_j(B) s_k(B')` for all admissible `j, k`.
pub fn kyfan_multiplicative_check(b: &Mat<f64>, b2: &Mat<f64>) -> Result<KyFanReport> {
    let prod = product(b, b2)?;
    Ok(kyfan_scan(&singular_values(&prod)?, &singular_values(b)?, &singular_values(b2)?, |x, y| x * y))
}

/// Largest `|s_j(B^T) - s_j(B)|` relative to `s_1(B)`.
pub fn adjoint_defect(b: &Mat<f64>) -> Result<f64> {
    let s = singular_values(b)?;
    let st = singular_values(&b.transpose().to_owned())?;
    let scale = s.norm().max(f64::MIN_POSITIVE);
    Ok(s.values.iter().zip(&st.values).map(|(x, y)| (x - y).abs() / scale).fold(0.0, f64::max))
}

/// Median and interquartile range of `j^{1/p} s_j` over the index window
/// `[lo * len, hi * len]`.
pub fn rescaled_limit(s: &[f64], p: f64, window: (f64, f64)) -> Result<(f64, f64)> {
    let (j_min, j_max) = window_indices(s.len(), window)?;
    let g: Vec<f64> = (j_min..=j_max).map(|j| (j as f64).powf(1.0 / p) * s[j - 1]).collect();
    Ok(median_iqr(&g).expect("window is nonempty"))
}

/// Smallest number of indices a fit window may contain.
pub const MIN_WINDOW: usize = 8;

/// 1-based inclusive index range for a fractional window of `len` values.
pub fn window_indices(len: usize, window: (f64, f64)) -> Result<(usize, usize)> {
    let (lo, hi) = window;
    if !(lo > 0.0 && lo < hi && hi <= 1.0) {
        return Err(Error::InvalidParameter(format!("window ({lo}, {hi}) must satisfy 0 < lo < hi <= 1")));
    }
    let j_min = ((lo * len as f64).ceil() as usize).max(1);
    let j_max = ((hi * len as f64).floor() as usize).min(len);
    let count = (j_max + 1).saturating_sub(j_min);
    if count < MIN_WINDOW {
        return Err(Error::WindowTooShort { len: count, min: MIN_WINDOW });
    }
    Ok((j_min, j_max))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SplittingRow {
    pub m: usize,
    /// `sup_j j^{1/p} s_j(B'_M)`
    pub remainder_bound: f64,
    /// Fitted limit of `j^{1/p} s_j(B_M)`.
    pub main_limit: f64,
    pub main_dispersion: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SplittingReport {
    pub p: f64,
    pub rows: Vec<SplittingRow>,
    pub limit: f64,
    pub dispersion: f64,
    /// Remainder bounds are nonincreasing in `M`.
    pub remainder_decreasing: bool,
    /// The last main limit matches the limit of `B` within the fit
    /// dispersions plus the last remainder bound.
    pub consistent: bool,
}

/// For a matrix `B` and splittings `B = B_M + B'_M`, tabulates the weak
/// quasi-norm of each remainder against the fitted limit of each main part
/// and of `B` itself.
pub fn kyfan_asymptotic_demo(
    b: &Mat<f64>,
    splittings: &[(usize, Mat<f64>, Mat<f64>)],
    p: f64,
    window: (f64, f64),
) -> Result<SplittingReport> {
    let sb = singular_values(b)?;
    let (limit, dispersion) = rescaled_limit(&sb.values, p, window)?;
    let scale = sb.norm().max(f64::MIN_POSITIVE);
    let mut rows = Vec::with_capacity(splittings.len());
    for (m, main, rest) in splittings {
        if main.nrows() != b.nrows() || main.ncols() != b.ncols() || rest.nrows() != b.nrows() || rest.ncols() != b.ncols() {
            return Err(Error::ShapeMismatch(format!("splitting {m} does not match the shape of B")));
        }
        let defect = (0..b.ncols())
            .flat_map(|j| (0..b.nrows()).map(move |i| (i, j)))
            .map(|(i, j)| (b[(i, j)] - main[(i, j)] - rest[(i, j)]).abs())
            .fold(0.0, f64::max);
        if defect > 1e-12 * scale {
            return Err(Error::InvalidParameter(format!("splitting {m}: B != B_M + B'_M (defect {defect:e})")));
        }
        let remainder_bound = weak_schatten_quasinorm(&singular_values(rest)?.values, p)?;
        let (main_limit, main_dispersion) = rescaled_limit(&singular_values(main)?.values, p, window)?;
        rows.push(SplittingRow { m: *m, remainder_bound, main_limit, main_dispersion });
    }
    let remainder_decreasing = rows.windows(2).all(|w| w[1].remainder_bound <= w[0].remainder_bound);
    let consistent = rows.last().is_none_or(|r| {
        (r.main_limit - limit).abs() <= r.main_dispersion + dispersion + r.remainder_bound + 1e-12
    });
    Ok(SplittingReport { p, rows, limit, dispersion, remainder_decreasing, consistent })
}

/// Diagonal family with `s_j(B) = j^{-1/p} + j^{-2/p}`, split at each `M`
/// as `B'_M = diag(j^{-2/p}, j > M)`. The remainder bound
/// `max_i i^{1/p} (M + i)^{-2/p}` tends to zero while every main part keeps
/// the limit 1.
pub fn diagonal_splitting_family(n: usize, p: f64, cuts: &[usize]) -> (Mat<f64>, Vec<(usize, Mat<f64>, Mat<f64>)>) {
    let lead = |j: usize| (j as f64).powf(-1.0 / p);
    let tail = |j: usize| (j as f64).powf(-2.0 / p);
    let b = Mat::from_fn(n, n, |i, k| if i == k { lead(i + 1) + tail(i + 1) } else { 0.0 });
    let splittings = cuts
        .iter()
        .map(|&m| {
            let rest = Mat::from_fn(n, n, |i, k| if i == k && i + 1 > m { tail(i + 1) } else { 0.0 });
            let main = Mat::from_fn(n, n, |i, k| if i == k { b[(i, i)] - rest[(i, i)] } else { 0.0 });
            (m, main, rest)
        })
        .collect();
    (b, splittings)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolventRow {
    pub k: usize,
    /// `|D_k|`
    pub opnorm_diff: f64,
    /// `sup_j j^{1/p} s_j(D_k)`
    pub weak_norm: f64,
    /// `weak_norm / opnorm_diff`, zero when the difference vanishes.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolventTable {
    pub p: f64,
    pub shift: f64,
    pub rows: Vec<ResolventRow>,
    pub opnorm_nonincreasing: bool,
    pub weak_nonincreasing: bool,
    /// Last over first weak norm.
    pub decay: f64,
}

impl ResolventTable {
    /// CSV with header `k,opnorm_diff,weak_norm,ratio`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,opnorm_diff,weak_norm,ratio\n");
        for r in &self.rows {
            s.push_str(&format!("{},{:e},{:e},{}\n", r.k, r.opnorm_diff, r.weak_norm, r.ratio));
        }
        s
    }
}

fn shifted(m: &Mat<f64>, b: f64) -> Mat<f64> {
    let mut out = m.clone();
    for i in 0..out.nrows() {
        out[(i, i)] += b;
    }
    out
}

/// `(A + b)^{-1} - (A_k + b)^{-1}`, formed as
/// `(A_k + b)^{-1} (A_k - A) (A + b)^{-1}` from two Cholesky factors.
pub fn resolvent_difference(a: &Mat<f64>, a_k: &Mat<f64>, b: f64) -> Result<Mat<f64>> {
    if a.nrows() != a_k.nrows() || a.ncols() != a_k.ncols() {
        return Err(Error::ShapeMismatch("operators live on different grids".into()));
    }
    let base = shifted(a, b)
        .llt(Side::Lower)
        .map_err(|_| Error::Indefinite(format!("A + {b} is not positive definite")))?;
    let pert = shifted(a_k, b)
        .llt(Side::Lower)
        .map_err(|_| Error::Indefinite(format!("A_k + {b} is not positive definite")))?;
    let delta = a_k - a;
    // (A_k - A)(A + b)^{-1} is the transpose of (A + b)^{-1}(A_k - A).
    let right = base.solve(&delta).transpose().to_owned();
    Ok(pert.solve(&right))
}

/// For each `(k, A_k)` tabulates the operator norm and weak `p`-norm of
/// the resolvent difference against `A`, shift `b`.
pub fn resolvent_difference_study(
    exec: Execution,
    op: &DirichletOperator,
    mollified: &[(usize, DirichletOperator)],
    b: f64,
    p: f64,
) -> Result<ResolventTable> {
    for (k, other) in mollified {
        if other.grid().lattice() != op.grid().lattice() || other.spacing() != op.spacing() {
            return Err(Error::ShapeMismatch(format!("operator for k = {k} uses a different grid")));
        }
    }
    let rows = map_indices(exec, mollified.len(), |i| {
        let (k, other) = &mollified[i];
        let d = resolvent_difference(op.matrix(), other.matrix(), b)?;
        let s = singular_values(&d)?;
        let weak_norm = weak_schatten_quasinorm(&s.values, p)?;
        let opnorm_diff = s.norm();
        let ratio = if opnorm_diff > 0.0 { weak_norm / opnorm_diff } else { 0.0 };
        Ok(ResolventRow { k: *k, opnorm_diff, weak_norm, ratio })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let opnorm_nonincreasing = rows.windows(2).all(|w| w[1].opnorm_diff <= w[0].opnorm_diff);
    let weak_nonincreasing = rows.windows(2).all(|w| w[1].weak_norm <= w[0].weak_norm);
    let decay = match (rows.first(), rows.last()) {
        (Some(f), Some(l)) if f.weak_norm > 0.0 => l.weak_norm / f.weak_norm,
        _ => 0.0,
    };
    Ok(ResolventTable { p, shift: b, rows, opnorm_nonincreasing, weak_nonincreasing, decay })
}

/// Resolvent differences between the operator with coefficient `phi` and
/// the operators with mollified coefficients `phi * rho_{1/k}`. The shift
/// is the largest positivity shift over all operators.
pub fn mollification_study(
    exec: Execution,
    domain: &Domain,
    a: f64,
    phi: &ScalarField,
    ks: &[usize],
    h: f64,
) -> Result<ResolventTable> {
    let grid = Arc::new(domain.grid(h)?);
    let dim = grid.dimension();
    let kernel = kernel_weights(dim, a, h, grid.lattice_diameter().max(1))?;
    let base = assemble_dirichlet_with(exec, &kernel, grid.clone(), Some(phi))?;
    let mut ops = Vec::with_capacity(ks.len());
    for &k in ks {
        let phi_k = mollify_coefficient(phi, k, dim)?;
        ops.push((k, assemble_dirichlet_with(exec, &kernel, grid.clone(), Some(&phi_k))?));
    }
    let mut b = shift_for_positivity(&base)?;
    for (_, op) in &ops {
        b = b.max(shift_for_positivity(op)?);
    }
    resolvent_difference_study(exec, &base, &ops, b, dim as f64 / (2.0 * a))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SuiteFailure {
    pub seed: u64,
    pub check: String,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SuiteReport {
    pub seeds: usize,
    pub composition_violations: usize,
    pub adjoint_violations: usize,
    pub additive_violations: usize,
    pub multiplicative_violations: usize,
    pub worst_composition_ratio: f64,
    pub worst_adjoint_defect: f64,
    pub worst_additive_excess: f64,
    pub worst_multiplicative_excess: f64,
    pub failures: Vec<SuiteFailure>,
}

impl SuiteReport {
    pub fn violations(&self) -> usize {
        self.composition_violations + self.adjoint_violations + self.additive_violations + self.multiplicative_violations
    }
}

/// Uniform entries in `[-1, 1]`.
pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat<f64> {
    Mat::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

struct SeedOutcome {
    composition: CompositionReport,
    adjoint: f64,
    additive: KyFanReport,
    multiplicative: KyFanReport,
}

fn run_seed(seed: u64) -> Result<SeedOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut size = || rng.random_range(5..=50usize);
    let (m, r, s, n) = (size(), size(), size(), size());
    let e = random_matrix(&mut rng, m, r);
    let b = random_matrix(&mut rng, r, s);
    let f = random_matrix(&mut rng, s, n);
    let composition = check_composition_bound(&e, &b, &f)?;
    let adjoint = adjoint_defect(&b)?;
    let b2 = random_matrix(&mut rng, r, s);
    let additive = kyfan_additive_check(&b, &b2)?;
    let multiplicative = kyfan_multiplicative_check(&e, &b)?;
    Ok(SeedOutcome { composition, adjoint, additive, multiplicative })
}

/// Composition bound, adjoint equality and both Ky Fan inequalities on
/// random matrices with sides in `5..=50`, one independent stream per
/// seed `base_seed + i`.
pub fn snumber_suite(exec: Execution, base_seed: u64, seeds: usize) -> Result<SuiteReport> {
    let outcomes = map_indices(exec, seeds, |i| run_seed(base_seed.wrapping_add(i as u64)));
    let mut report = SuiteReport { seeds, ..Default::default() };
    for (i, outcome) in outcomes.into_iter().enumerate() {
        let seed = base_seed.wrapping_add(i as u64);
        let o = outcome?;
        let mut fail = |check: &str, detail: String| {
            report.failures.push(SuiteFailure { seed, check: check.into(), detail });
        };
        if !o.composition.ok {
            fail("composition", format!("index {:?}", o.composition.witness));
        }
        if o.adjoint > INEQUALITY_TOLERANCE {
            fail("adjoint", format!("defect {:e}", o.adjoint));
        }
        if !o.additive.ok {
            fail("additive", format!("indices {:?}", o.additive.witness));
        }
        if !o.multiplicative.ok {
            fail("multiplicative", format!("indices {:?}", o.multiplicative.witness));
        }
        report.composition_violations += usize::from(!o.composition.ok);
        report.adjoint_violations += usize::from(o.adjoint > INEQUALITY_TOLERANCE);
        report.additive_violations += usize::from(!o.additive.ok);
        report.multiplicative_violations += usize::from(!o.multiplicative.ok);
        report.worst_composition_ratio = report.worst_composition_ratio.max(o.composition.max_ratio);
        report.worst_adjoint_defect = report.worst_adjoint_defect.max(o.adjoint);
        report.worst_additive_excess = report.worst_additive_excess.max(o.additive.max_excess);
        report.worst_multiplicative_excess = report.worst_multiplicative_excess.max(o.multiplicative.max_excess);
    }
    Ok(report)
}
