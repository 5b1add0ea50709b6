//! Fitted Weyl constants from computed spectra and the studies built on
//! them: resolution sweeps, inner/outer domain sandwiches, lower-order
//! perturbations and the boundary behaviour of eigenvectors.

use std::sync::Arc;

use faer::Mat;
use serde::Serialize;

use crate::discretize::{assemble_for_symbol, assemble_perturbed_with, principal_submatrix, DirichletOperator};
use crate::domains::{Domain, Grid};
use crate::eigensolve::{eigenvalues_symmetric, Spectrum};
use crate::error::{Error, Result};
use crate::exec::{map_indices, Execution};
use crate::field::ScalarField;
use crate::quadrature::median_iqr;
use crate::symbols::PrincipalSymbol;

pub use crate::snumbers::{window_indices, MIN_WINDOW};

/// Default fit window as fractions of the spectrum length.
pub const DEFAULT_WINDOW: (f64, f64) = (0.05, 0.25);
/// Resolutions used for reference constants in the studies.
pub const REFERENCE_SPHERE_RES: usize = 64;
pub const REFERENCE_DOMAIN_RES: usize = 64;
/// Tolerance of exact eigenvalue inequalities, relative to the largest
/// eigenvalue magnitude involved.
pub const INTERLACING_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeylEstimate {
    pub c_hat: f64,
    pub j_min: usize,
    pub j_max: usize,
    /// Interquartile range of `lambda_j j^{-2a/n}` over the window.
    pub dispersion: f64,
    pub a: f64,
    pub n: usize,
    pub reference: Option<f64>,
}

fn check_exponent(a: f64, n: usize) -> Result<()> {
    if !(a > 0.0 && a.is_finite()) || n == 0 {
        return Err(Error::InvalidParameter(format!("need a > 0 and n >= 1, got a = {a}, n = {n}")));
    }
    Ok(())
}

/// Median of `g_j = lambda_j j^{-2a/n}` over the window.
pub fn weyl_fit(spectrum: &Spectrum, a: f64, n: usize, window: (f64, f64)) -> Result<WeylEstimate> {
    let (j_min, j_max) = window_indices(spectrum.len(), window)?;
    weyl_fit_range(spectrum, a, n, j_min, j_max)
}

/// [`weyl_fit`] over the fixed 1-based index range `j_min..=j_max`.
pub fn weyl_fit_range(spectrum: &Spectrum, a: f64, n: usize, j_min: usize, j_max: usize) -> Result<WeylEstimate> {
    check_exponent(a, n)?;
    if j_min == 0 || j_max > spectrum.len() || j_max + 1 < j_min + MIN_WINDOW {
        return Err(Error::WindowTooShort { len: (j_max + 1).saturating_sub(j_min.max(1)), min: MIN_WINDOW });
    }
    if let Some(j) = (j_min..=j_max).find(|&j| !(spectrum.lambda(j) > 0.0)) {
        return Err(Error::Indefinite(format!("lambda_{j} = {} is not positive; shift first", spectrum.lambda(j))));
    }
    let g: Vec<f64> = (j_min..=j_max).map(|j| scaled_eigenvalue(spectrum, a, n, j)).collect();
    let (c_hat, dispersion) = median_iqr(&g).expect("window is nonempty");
    Ok(WeylEstimate { c_hat, j_min, j_max, dispersion, a, n, reference: None })
}

fn scaled_eigenvalue(spectrum: &Spectrum, a: f64, n: usize, j: usize) -> f64 {
    spectrum.lambda(j) * (j as f64).powf(-2.0 * a / n as f64)
}

/// CSV trace with header `j,lambda,g`.
pub fn g_trace_csv(spectrum: &Spectrum, a: f64, n: usize) -> String {
    let mut s = String::from("j,lambda,g\n");
    for j in 1..=spectrum.len() {
        s.push_str(&format!("{j},{},{}\n", spectrum.lambda(j), scaled_eigenvalue(spectrum, a, n, j)));
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountingFit {
    pub c0: f64,
    pub dispersion: f64,
    pub samples: usize,
    pub t_min: f64,
    pub t_max: f64,
}

/// Fits `N(t) ~ C0 t^p`, `p = n / 2a`. Samples are geometrically spaced in
/// the eigenvalue range of the window and each is moved down to the
/// nearest eigenvalue (a jump point of `N`), where `N` is known exactly.
pub fn weyl_from_counting(
    spectrum: &Spectrum,
    a: f64,
    n: usize,
    window: (f64, f64),
    t_samples: usize,
) -> Result<CountingFit> {
    check_exponent(a, n)?;
    if t_samples == 0 {
        return Err(Error::InsufficientData("need at least one counting sample".into()));
    }
    let (j_min, j_max) = window_indices(spectrum.len(), window)?;
    let (t_min, t_max) = (spectrum.lambda(j_min), spectrum.lambda(j_max));
    if !(t_min > 0.0) {
        return Err(Error::Indefinite(format!("lambda_{j_min} = {t_min} is not positive; shift first")));
    }
    let p = n as f64 / (2.0 * a);
    let ratio = t_max / t_min;
    let values: Vec<f64> = (0..t_samples)
        .map(|i| {
            let f = if t_samples == 1 { 0.0 } else { i as f64 / (t_samples - 1) as f64 };
            let t = (t_min * ratio.powf(f)).clamp(t_min, t_max);
            let count = spectrum.counting(t);
            let jump = spectrum.lambda(count);
            count as f64 * jump.powf(-p)
        })
        .collect();
    let (c0, dispersion) = median_iqr(&values).expect("samples are nonempty");
    Ok(CountingFit { c0, dispersion, samples: t_samples, t_min, t_max })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub p: f64,
    pub shift: f64,
    pub lambda_nondecreasing: bool,
    pub mu_nonincreasing: bool,
    /// `N(lambda_j) >= j` for every `j`.
    pub counting_dominates: bool,
    /// Fitted limits of `lambda_j j^{-1/p}`, `mu_j j^{1/p}` and
    /// `N(t) t^{-p}`, with interquartile ranges.
    pub lambda_constant: f64,
    pub lambda_dispersion: f64,
    pub mu_constant: f64,
    pub mu_dispersion: f64,
    pub counting_constant: f64,
    pub counting_dispersion: f64,
    /// `C0` implied by each of the three fits.
    pub implied_c0: [f64; 3],
    /// Largest pairwise gap between the implied values of `C0`.
    pub max_gap: f64,
    /// Allowed gap, from the propagated dispersions, for the pair closest
    /// to (or furthest past) its limit.
    pub allowed_gap: f64,
    pub consistent: bool,
}

/// Checks the equivalence of the three asymptotic forms for the spectrum
/// of `A + b`: eigenvalue growth, decay of `mu_j = 1/lambda_j` and growth
/// of the counting function.
pub fn constant_equivalence_check(
    spectrum: &Spectrum,
    b: f64,
    p: f64,
    window: (f64, f64),
    t_samples: usize,
) -> Result<EquivalenceReport> {
    if !(p > 0.0) {
        return Err(Error::InvalidParameter(format!("exponent p = {p} must be positive")));
    }
    let shifted = spectrum.shifted(b);
    if let Some(l) = shifted.eigenvalues.first().filter(|l| !(**l > 0.0)) {
        return Err(Error::Indefinite(format!("shifted spectrum has lambda_1 = {l}")));
    }
    let lambda = &shifted.eigenvalues;
    let mu: Vec<f64> = lambda.iter().map(|l| 1.0 / l).collect();
    let lambda_nondecreasing = lambda.windows(2).all(|w| w[0] <= w[1]);
    let mu_nonincreasing = mu.windows(2).all(|w| w[0] >= w[1]);
    let counting_dominates = (1..=lambda.len()).all(|j| shifted.counting(shifted.lambda(j)) >= j);

    let (j_min, j_max) = window_indices(lambda.len(), window)?;
    let fit = |f: &dyn Fn(usize) -> f64| median_iqr(&(j_min..=j_max).map(f).collect::<Vec<_>>()).unwrap();
    let (lambda_constant, lambda_dispersion) = fit(&|j| lambda[j - 1] * (j as f64).powf(-1.0 / p));
    let (mu_constant, mu_dispersion) = fit(&|j| mu[j - 1] * (j as f64).powf(1.0 / p));
    let counting = counting_fit_with_exponent(&shifted, p, window, t_samples)?;
    let implied_c0 = [lambda_constant.powf(-p), mu_constant.powf(p), counting.c0];
    // Relative spreads propagate through the powers with a factor p.
    let rel = [
        p * lambda_dispersion / lambda_constant,
        p * mu_dispersion / mu_constant,
        counting.dispersion / counting.c0,
    ];
    let mut pairs_ok = true;
    let (mut max_gap, mut allowed_gap, mut worst) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    for x in 0..3 {
        for y in x + 1..3 {
            let scale = implied_c0[x].max(implied_c0[y]);
            let gap = (implied_c0[x] - implied_c0[y]).abs();
            let allowed = (rel[x] + rel[y]) * scale + 1e-12 * scale;
            pairs_ok &= gap <= allowed;
            max_gap = max_gap.max(gap);
            if gap - allowed > worst {
                worst = gap - allowed;
                allowed_gap = allowed;
            }
        }
    }
    let consistent = lambda_nondecreasing && mu_nonincreasing && counting_dominates && pairs_ok;
    Ok(EquivalenceReport {
        p,
        shift: b,
        lambda_nondecreasing,
        mu_nonincreasing,
        counting_dominates,
        lambda_constant,
        lambda_dispersion,
        mu_constant,
        mu_dispersion,
        counting_constant: counting.c0,
        counting_dispersion: counting.dispersion,
        implied_c0,
        max_gap,
        allowed_gap,
        consistent,
    })
}

fn counting_fit_with_exponent(spectrum: &Spectrum, p: f64, window: (f64, f64), t_samples: usize) -> Result<CountingFit> {
    weyl_from_counting(spectrum, 0.5 / p, 1, window, t_samples)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub ok: bool,
    /// Largest `lambda_j(full) - lambda_j(sub)`, relative to the spectral
    /// scale; negative when the inequality holds strictly everywhere.
    pub max_violation: f64,
    pub compared: usize,
}

/// `lambda_j(M restricted to mask) >= lambda_j(M)` for every `j` up to the
/// size of the restriction.
pub fn submatrix_monotonicity(m: &Mat<f64>, mask: &[bool]) -> Result<MonotonicityReport> {
    if mask.len() != m.nrows() {
        return Err(Error::ShapeMismatch(format!("mask has {} entries for {} nodes", mask.len(), m.nrows())));
    }
    if !mask.iter().any(|&k| k) {
        return Err(Error::InvalidParameter("node mask is empty".into()));
    }
    let full = eigenvalues_symmetric(m)?.eigenvalues;
    let sub = eigenvalues_symmetric(&principal_submatrix(m, mask))?.eigenvalues;
    Ok(compare_dominates(&sub, &full))
}

/// `upper_j >= lower_j` over the common indices.
fn compare_dominates(upper: &[f64], lower: &[f64]) -> MonotonicityReport {
    let compared = upper.len().min(lower.len());
    let scale = upper.iter().chain(lower).fold(0.0f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
    let max_violation =
        (0..compared).map(|j| (lower[j] - upper[j]) / scale).fold(f64::NEG_INFINITY, f64::max).max(-1.0);
    let max_violation = if compared == 0 { 0.0 } else { max_violation };
    MonotonicityReport { ok: max_violation <= INTERLACING_TOLERANCE, max_violation, compared }
}

/// Restricting the operator to fewer nodes can only raise eigenvalues.
pub fn domain_monotonicity_check(op: &DirichletOperator, mask: &[bool]) -> Result<MonotonicityReport> {
    submatrix_monotonicity(&op.shifted_matrix(), mask)
}

/// `<Av, v> / <v, v>` for the shifted operator matrix.
pub fn rayleigh_quotient(op: &DirichletOperator, v: &[f64]) -> Result<f64> {
    let m = op.matrix();
    if v.len() != m.nrows() {
        return Err(Error::ShapeMismatch(format!("vector has {} entries for {} nodes", v.len(), m.nrows())));
    }
    let vv: f64 = v.iter().map(|x| x * x).sum();
    if vv == 0.0 {
        return Err(Error::InvalidParameter("Rayleigh quotient of the zero vector".into()));
    }
    let mut vav = 0.0;
    for j in 0..v.len() {
        let col: f64 = (0..v.len()).map(|i| m[(i, j)] * v[i]).sum();
        vav += col * v[j];
    }
    Ok(vav / vv + op.shift())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundaryFit {
    pub exponent: f64,
    pub intercept: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub nodes: usize,
    /// The fit measures only the leading `d^a` rate, not membership in a
    /// weighted smoothness class.
    pub note: &'static str,
}

/// Least-squares slope of `log|u|` against `log d` over the nodes whose
/// boundary distance lies in `[2h, diameter / 10]`.
pub fn boundary_exponent_of(values: &[f64], grid: &Grid, domain: &Domain) -> Result<BoundaryFit> {
    if values.len() != grid.len() {
        return Err(Error::ShapeMismatch(format!("vector has {} entries for {} nodes", values.len(), grid.len())));
    }
    let d_min = 2.0 * grid.spacing();
    let d_max = 0.1 * domain.diameter();
    let pts: Vec<(f64, f64)> = (0..grid.len())
        .filter_map(|i| {
            let d = domain.boundary_distance(grid.coords(i));
            let u = values[i].abs();
            (d >= d_min * (1.0 - 1e-12) && d <= d_max && u > 0.0).then(|| (d.ln(), u.ln()))
        })
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} nodes with boundary distance in [{d_min}, {d_max}]",
            pts.len()
        )));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all fitted nodes share one boundary distance".into()));
    }
    let exponent = sxy / sxx;
    Ok(BoundaryFit {
        exponent,
        intercept: my - exponent * mx,
        d_min,
        d_max,
        nodes: pts.len(),
        note: "leading boundary rate only",
    })
}

/// Boundary exponent of eigenvector `which` (1-based).
pub fn boundary_exponent(spectrum: &Spectrum, grid: &Grid, domain: &Domain, which: usize) -> Result<BoundaryFit> {
    let u = spectrum
        .eigenvector(which)
        .ok_or_else(|| Error::InsufficientData(format!("eigenvector {which} is not available")))?;
    boundary_exponent_of(&u, grid, domain)
}

/// Lower-order part `kappa (-Delta_h)^{a'} + V` added to the principal
/// operator.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationSpec {
    pub a_prime: f64,
    pub kappa: f64,
    pub potential: Option<ScalarField>,
}

fn with_perturbation(exec: Execution, op: DirichletOperator, spec: Option<&PerturbationSpec>) -> Result<DirichletOperator> {
    match spec {
        Some(p) => assemble_perturbed_with(exec, &op, p.a_prime, p.kappa, p.potential.as_ref()),
        None => Ok(op),
    }
}

fn reference_constant(symbol: &PrincipalSymbol, domain: &Domain) -> Result<f64> {
    Ok(symbol.weyl_constant(domain, REFERENCE_SPHERE_RES, REFERENCE_DOMAIN_RES)?.c)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub nodes: usize,
    pub fit: WeylEstimate,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub reference: f64,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// CSV with header `h,nodes,c_hat,dispersion,reference,error`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("h,nodes,c_hat,dispersion,reference,error\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.h, r.nodes, r.fit.c_hat, r.fit.dispersion, self.reference, r.error
            ));
        }
        s
    }
}

/// Fitted constant of the Dirichlet matrix at each spacing.
pub fn convergence_study(
    exec: Execution,
    symbol: &PrincipalSymbol,
    domain: &Domain,
    spacings: &[f64],
    window: (f64, f64),
) -> Result<ConvergenceTable> {
    let reference = reference_constant(symbol, domain)?;
    let n = domain.dimension();
    let mut rows = Vec::with_capacity(spacings.len());
    for &h in spacings {
        let op = assemble_for_symbol(exec, symbol, domain.grid(h)?, 0)?;
        let spectrum = op.spectrum(false)?;
        let mut fit = weyl_fit(&spectrum, symbol.a(), n, window)?;
        fit.reference = Some(reference);
        rows.push(ConvergenceRow { h, nodes: op.len(), error: fit.c_hat - reference, fit });
    }
    Ok(ConvergenceTable { reference, rows })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Inner,
    Domain,
    Outer,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SandwichRow {
    pub role: Role,
    /// `None` for the domain itself.
    pub level: Option<usize>,
    pub radius: f64,
    pub nodes: usize,
    pub volume: f64,
    pub c_hat: f64,
    pub dispersion: f64,
    pub reference: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SandwichTable {
    pub h: f64,
    pub shift: f64,
    pub rows: Vec<SandwichRow>,
    /// Largest relative eigenvalue-inequality violation over all levels.
    pub max_violation: f64,
    pub sandwich_holds: bool,
    /// `C_hat(in) >= C_hat(domain) >= C_hat(out)` within dispersions.
    pub fits_ordered: bool,
    /// Reference constants of inner levels decrease and outer levels
    /// increase towards the domain value.
    pub references_monotone: bool,
}

impl SandwichTable {
    /// CSV with header `role,level,radius,nodes,volume,c_hat,dispersion,reference`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("role,level,radius,nodes,volume,c_hat,dispersion,reference\n");
        for r in &self.rows {
            let role = match r.role {
                Role::Inner => "inner",
                Role::Domain => "domain",
                Role::Outer => "outer",
            };
            let level = r.level.map(|l| l.to_string()).unwrap_or_default();
            s.push_str(&format!(
                "{role},{level},{},{},{},{},{},{}\n",
                r.radius, r.nodes, r.volume, r.c_hat, r.dispersion, r.reference
            ));
        }
        s
    }

    fn domain_row(&self) -> &SandwichRow {
        self.rows.iter().find(|r| r.role == Role::Domain).expect("table has a domain row")
    }

    pub fn level_row(&self, role: Role, level: usize) -> Option<&SandwichRow> {
        self.rows.iter().find(|r| r.role == role && r.level == Some(level))
    }
}

/// Inner approximants at radius `1 / (first_index * l)` and outer ones at
/// the same radius, `l = 1..=levels`. All operators are principal
/// submatrices of one matrix on the largest outer grid, so the eigenvalue
/// sandwich is an exact interlacing statement.
#[allow(clippy::too_many_arguments)]
pub fn sandwich_study(
    exec: Execution,
    symbol: &PrincipalSymbol,
    domain: &Domain,
    levels: usize,
    first_index: usize,
    h: f64,
    perturbation: Option<&PerturbationSpec>,
    window: (f64, f64),
) -> Result<SandwichTable> {
    if first_index == 0 {
        return Err(Error::InvalidParameter("first approximation index must be >= 1".into()));
    }
    let n = domain.dimension();
    let mut domains: Vec<(Role, Option<usize>, f64, Domain)> = vec![(Role::Domain, None, 0.0, domain.clone())];
    for l in 1..=levels {
        let j = first_index * l;
        domains.push((Role::Inner, Some(l), 1.0 / j as f64, domain.inner_approx(j)?));
        domains.push((Role::Outer, Some(l), 1.0 / j as f64, domain.outer_approx(j)?));
    }
    let grids = domains.iter().map(|d| d.3.grid(h)).collect::<Result<Vec<Grid>>>()?;
    let host = grids
        .iter()
        .enumerate()
        .max_by_key(|(_, g)| g.len())
        .map(|(i, _)| i)
        .expect("at least the domain grid");
    let host_grid = Arc::new(grids[host].clone());
    let masks = grids
        .iter()
        .map(|g| {
            host_grid.mask_of(g).ok_or_else(|| Error::ShapeMismatch("approximant grids are not nested".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    let base = assemble_for_symbol(exec, symbol, host_grid.clone(), 0)?;
    let full = with_perturbation(exec, base, perturbation)?;
    let matrices: Vec<Mat<f64>> = masks.iter().map(|m| principal_submatrix(full.matrix(), m)).collect();

    let spectra = map_indices(exec, matrices.len(), |i| eigenvalues_symmetric(&matrices[i]))
        .into_iter()
        .collect::<Result<Vec<Spectrum>>>()?;
    drop(matrices);
    let lowest = spectra.iter().filter_map(|s| s.eigenvalues.first().copied()).fold(f64::INFINITY, f64::min);
    let shift = if lowest > 0.0 { 0.0 } else { 1.0 - lowest };
    let spectra: Vec<Spectrum> = spectra.iter().map(|s| s.shifted(shift)).collect();

    let mut max_violation = f64::NEG_INFINITY;
    let omega = &spectra[0].eigenvalues;
    for (i, d) in domains.iter().enumerate().skip(1) {
        let r = match d.0 {
            Role::Inner => compare_dominates(&spectra[i].eigenvalues, omega),
            _ => compare_dominates(omega, &spectra[i].eigenvalues),
        };
        max_violation = max_violation.max(r.max_violation);
    }
    if domains.len() == 1 {
        max_violation = 0.0;
    }

    let references = map_indices(exec, domains.len(), |i| reference_constant(symbol, &domains[i].3))
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    let mut rows = Vec::with_capacity(domains.len());
    for (i, (role, level, radius, d)) in domains.iter().enumerate() {
        let fit = weyl_fit(&spectra[i], symbol.a(), n, window)?;
        rows.push(SandwichRow {
            role: *role,
            level: *level,
            radius: *radius,
            nodes: grids[i].len(),
            volume: d.volume(REFERENCE_DOMAIN_RES).value,
            c_hat: fit.c_hat,
            dispersion: fit.dispersion,
            reference: references[i],
        });
    }
    // Inner levels first, then the domain, then outer levels.
    rows.sort_by_key(|r| match r.role {
        Role::Inner => (0, levels - r.level.unwrap()),
        Role::Domain => (1, 0),
        Role::Outer => (2, r.level.unwrap()),
    });

    let mut table = SandwichTable {
        h,
        shift,
        rows,
        max_violation,
        sandwich_holds: max_violation <= INTERLACING_TOLERANCE,
        fits_ordered: true,
        references_monotone: true,
    };
    let dom = table.domain_row().clone();
    let (mut fits_ordered, mut references_monotone) = (true, true);
    for l in 1..=levels {
        let inner = table.level_row(Role::Inner, l).unwrap();
        let outer = table.level_row(Role::Outer, l).unwrap();
        fits_ordered &= inner.c_hat + inner.dispersion + dom.dispersion >= dom.c_hat;
        fits_ordered &= dom.c_hat + dom.dispersion + outer.dispersion >= outer.c_hat;
        if l > 1 {
            let prev_in = table.level_row(Role::Inner, l - 1).unwrap();
            let prev_out = table.level_row(Role::Outer, l - 1).unwrap();
            references_monotone &= inner.reference <= prev_in.reference && outer.reference >= prev_out.reference;
        }
        references_monotone &= inner.reference >= dom.reference && outer.reference <= dom.reference;
    }
    table.fits_ordered = fits_ordered;
    table.references_monotone = references_monotone;
    Ok(table)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerturbationReport {
    pub base: WeylEstimate,
    pub perturbed: WeylEstimate,
    pub difference: f64,
    /// `2 (dispersion(base) + dispersion(perturbed))`
    pub tolerance: f64,
    pub within_tolerance: bool,
    pub shift: f64,
}

/// Fitted constants of the principal operator with and without the
/// lower-order part, on one grid and one window.
pub fn perturbation_invariance_study(
    exec: Execution,
    symbol: &PrincipalSymbol,
    domain: &Domain,
    h: f64,
    perturbation: &PerturbationSpec,
    window: (f64, f64),
) -> Result<PerturbationReport> {
    let n = domain.dimension();
    let base = assemble_for_symbol(exec, symbol, domain.grid(h)?, 0)?;
    let perturbed = with_perturbation(exec, base.clone(), Some(perturbation))?;
    let s_base = base.spectrum(false)?;
    let s_pert = perturbed.spectrum(false)?;
    let lowest = s_base.eigenvalues[0].min(s_pert.eigenvalues[0]);
    let shift = if lowest > 0.0 { 0.0 } else { 1.0 - lowest };
    let reference = reference_constant(symbol, domain)?;
    let mut fb = weyl_fit(&s_base.shifted(shift), symbol.a(), n, window)?;
    let mut fp = weyl_fit(&s_pert.shifted(shift), symbol.a(), n, window)?;
    fb.reference = Some(reference);
    fp.reference = Some(reference);
    let difference = (fp.c_hat - fb.c_hat).abs();
    let tolerance = 2.0 * (fb.dispersion + fp.dispersion);
    Ok(PerturbationReport {
        within_tolerance: difference <= tolerance,
        base: fb,
        perturbed: fp,
        difference,
        tolerance,
        shift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn power_law(c: f64, exponent: f64, len: usize) -> Spectrum {
        Spectrum::from_values((1..=len).map(|j| c * (j as f64).powf(exponent)).collect())
    }

    #[test]
    fn fit_recovers_exact_power_laws() {
        let (a, n) = (0.75, 2);
        let s = power_law(7.0, 2.0 * a / n as f64, 400);
        let fit = weyl_fit(&s, a, n, DEFAULT_WINDOW).unwrap();
        assert!((fit.c_hat - 7.0).abs() < 1e-12);
        assert!(fit.dispersion < 1e-12);
        assert_eq!((fit.j_min, fit.j_max), (20, 100));
    }

    #[test]
    fn fit_sees_decaying_remainder() {
        let (a, n) = (0.5, 1);
        let s = Spectrum::from_values((1..=4000).map(|j| j as f64 * (1.0 + 1.0 / (j as f64).sqrt())).collect());
        let early = weyl_fit(&s, a, n, (0.01, 0.05)).unwrap();
        let late = weyl_fit(&s, a, n, (0.5, 1.0)).unwrap();
        assert!(late.c_hat < early.c_hat && late.c_hat > 1.0);
        assert!((late.c_hat - 1.0).abs() < 0.03 && late.dispersion > 0.0);
    }

    #[test]
    fn fit_scales_and_ignores_appended_values() {
        let s = Spectrum::from_values((1..=200).map(|j| j as f64 + (j as f64).sin()).collect());
        let base = weyl_fit(&s, 0.5, 1, DEFAULT_WINDOW).unwrap();
        let scaled = Spectrum::from_values(s.eigenvalues.iter().map(|l| 4.0 * l).collect());
        assert_eq!(weyl_fit(&scaled, 0.5, 1, DEFAULT_WINDOW).unwrap().c_hat, 4.0 * base.c_hat);
        assert!(weyl_fit(&s, 0.5, 1, (0.05, 0.08)).is_err());
        assert!(weyl_fit(&s, 0.5, 1, (0.3, 0.2)).is_err());
        assert!(weyl_fit(&Spectrum::from_values(vec![-1.0; 100]), 0.5, 1, DEFAULT_WINDOW).is_err());
    }

    #[test]
    fn counting_fit_examples() {
        let (a, n) = (0.25, 1);
        let s = power_law(1.0, 2.0 * a / n as f64, 500);
        let c = weyl_from_counting(&s, a, n, DEFAULT_WINDOW, 40).unwrap();
        assert!((c.c0 - 1.0).abs() < 1e-12, "{}", c.c0);
        let s = power_law(4.0, 1.0, 500);
        let c = weyl_from_counting(&s, 1.0, 2, DEFAULT_WINDOW, 40).unwrap();
        assert!((c.c0 - 0.25).abs() < 1e-12);
        assert!(weyl_from_counting(&s, 1.0, 2, DEFAULT_WINDOW, 0).is_err());
    }

    #[test]
    fn equivalence_on_linear_spectra() {
        let r = constant_equivalence_check(&power_law(1.0, 1.0, 300), 0.0, 1.0, DEFAULT_WINDOW, 50).unwrap();
        assert_eq!((r.lambda_constant, r.mu_constant, r.counting_constant), (1.0, 1.0, 1.0));
        assert!(r.consistent && r.max_gap == 0.0);
        let r = constant_equivalence_check(&power_law(2.0, 1.0, 300), 0.0, 1.0, DEFAULT_WINDOW, 50).unwrap();
        assert_eq!((r.lambda_constant, r.mu_constant, r.counting_constant), (2.0, 0.5, 0.5));
        assert!(r.consistent);
        assert!(constant_equivalence_check(&power_law(1.0, 1.0, 300), -5.0, 1.0, DEFAULT_WINDOW, 50).is_err());
    }

    fn tridiagonal(n: usize) -> Mat<f64> {
        Mat::from_fn(n, n, |i, j| match i.abs_diff(j) {
            0 => 2.0,
            1 => -1.0,
            _ => 0.0,
        })
    }

    #[test]
    fn removing_an_end_node_raises_the_tridiagonal_spectrum() {
        let n = 31;
        let mut mask = vec![true; n];
        assert!(submatrix_monotonicity(&tridiagonal(n), &mask).unwrap().ok);
        mask[n - 1] = false;
        let r = submatrix_monotonicity(&tridiagonal(n), &mask).unwrap();
        assert!(r.ok && r.compared == n - 1);
        // Closed forms: 4 sin^2(k pi / (2(m + 1))) for m interior nodes.
        let closed = |k: usize, m: usize| 4.0 * (k as f64 * PI / (2.0 * (m + 1) as f64)).sin().powi(2);
        for k in 1..n {
            assert!(closed(k, n - 1) >= closed(k, n));
        }
        assert!(submatrix_monotonicity(&tridiagonal(n), &vec![false; n]).is_err());
    }

    #[test]
    fn random_masks_interlace() {
        for seed in 0..40 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(5..30usize);
            let x = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let m = Mat::from_fn(n, n, |i, j| x[(i, j)] + x[(j, i)]);
            let mut mask: Vec<bool> = (0..n).map(|_| rng.random_range(0.0..1.0) < 0.6).collect();
            mask[0] = true;
            assert!(submatrix_monotonicity(&m, &mask).unwrap().ok);
        }
    }

    #[test]
    fn rayleigh_quotient_examples() {
        let grid = Arc::new(Domain::interval(0.0, 3.0).unwrap().grid(1.0).unwrap());
        let m = Mat::from_fn(2, 2, |i, j| if i == j { [1.0, 3.0][i] } else { 0.0 });
        let op = DirichletOperator::from_matrix(m, grid, 0.5).unwrap();
        assert_eq!(rayleigh_quotient(&op, &[0.0, 2.0]).unwrap(), 3.0);
        let q = rayleigh_quotient(&op, &[1.0, 1.0]).unwrap();
        assert!((1.0..=3.0).contains(&q));
        assert!(rayleigh_quotient(&op, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn synthetic_boundary_power_law() {
        let domain = Domain::interval(0.0, 1.0).unwrap();
        let grid = domain.grid(1.0 / 1024.0).unwrap();
        let u: Vec<f64> = (0..grid.len()).map(|i| domain.boundary_distance(grid.coords(i)).powf(0.7)).collect();
        let fit = boundary_exponent_of(&u, &grid, &domain).unwrap();
        assert!((fit.exponent - 0.7).abs() < 1e-10);
        let coarse = domain.grid(0.25).unwrap();
        assert!(boundary_exponent_of(&vec![1.0; coarse.len()], &coarse, &domain).is_err());
    }

    #[test]
    fn classical_sine_mode_has_unit_exponent() {
        let domain = Domain::interval(0.0, PI).unwrap();
        let grid = domain.grid(PI / 2048.0).unwrap();
        let u: Vec<f64> = (0..grid.len()).map(|i| grid.coords(i)[0].sin()).collect();
        let fit = boundary_exponent_of(&u, &grid, &domain).unwrap();
        assert!((fit.exponent - 1.0).abs() < 0.05, "{}", fit.exponent);
    }

    #[test]
    fn constant_potential_shifts_the_spectrum() {
        let symbol = PrincipalSymbol::isotropic(0.5).unwrap();
        let domain = Domain::interval(0.0, PI).unwrap();
        let spec = PerturbationSpec { a_prime: 0.2, kappa: 0.0, potential: Some(ScalarField::Constant(0.75)) };
        let r = perturbation_invariance_study(Execution::Sequential, &symbol, &domain, PI / 128.0, &spec, DEFAULT_WINDOW)
            .unwrap();
        assert!(r.difference > 0.0 && r.shift == 0.0);
        let spec = PerturbationSpec { a_prime: 0.2, kappa: 0.0, potential: None };
        let r = perturbation_invariance_study(Execution::Sequential, &symbol, &domain, PI / 128.0, &spec, DEFAULT_WINDOW)
            .unwrap();
        assert_eq!(r.difference, 0.0);
    }

    #[test]
    fn interval_sandwich_at_coarse_spacing() {
        let symbol = PrincipalSymbol::isotropic(0.5).unwrap();
        let domain = Domain::interval(0.0, PI).unwrap();
        let t = sandwich_study(Execution::Parallel, &symbol, &domain, 3, 1, PI / 256.0, None, DEFAULT_WINDOW).unwrap();
        assert!(t.sandwich_holds, "{}", t.max_violation);
        assert!(t.references_monotone);
        assert_eq!(t.rows.len(), 7);
        // C(in, l) = ((pi - 2/l) / pi)^{-1} C(domain) with C(domain) = 1.
        for l in 1..=3 {
            let expected = PI / (PI - 2.0 / l as f64);
            assert!((t.level_row(Role::Inner, l).unwrap().reference - expected).abs() < 1e-9);
        }
        let only = sandwich_study(Execution::Parallel, &symbol, &domain, 0, 1, PI / 256.0, None, DEFAULT_WINDOW).unwrap();
        assert_eq!(only.rows.len(), 1);
    }
}
