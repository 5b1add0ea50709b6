//! Principal symbols of order `2a`, structural hypothesis checks and the
//! Weyl constant
//!
//! ```text
//! C'(P, Omega) = 1/(n (2 pi)^n) * int_Omega int_{|xi|=1} p0(x, xi)^{-n/2a} dw(xi) dx
//! C(P, Omega)  = C'^{-2a/n}
//! ```
//!
//! evaluated by a product of a sphere rule and a domain rule.

use std::f64::consts::PI;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domains::Domain;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::quadrature::gauss_legendre;

/// Relative change between successive quadrature refinements above which
/// the Weyl constant is flagged as unconverged.
pub const WEYL_QUADRATURE_TOLERANCE: f64 = 1e-6;

const HYPOTHESIS_TOLERANCE: f64 = 1e-10;
const HYPOTHESIS_SEED: u64 = 0x5eed_0001;

/// Position-dependent symmetric positive definite matrix.
#[derive(Clone, Debug, PartialEq)]
pub enum MatrixField {
    Constant(Vec<Vec<f64>>),
    Diagonal(Vec<ScalarField>),
}

impl MatrixField {
    pub fn dimension(&self) -> usize {
        match self {
            MatrixField::Constant(m) => m.len(),
            MatrixField::Diagonal(d) => d.len(),
        }
    }

    /// `xi^T A(x) xi`
    fn quadratic_form(&self, x: &[f64], xi: &[f64]) -> f64 {
        match self {
            MatrixField::Constant(m) => {
                let mut acc = 0.0;
                for (i, row) in m.iter().enumerate() {
                    for (j, a) in row.iter().enumerate() {
                        acc += xi[i] * a * xi[j];
                    }
                }
                acc
            }
            MatrixField::Diagonal(d) => d.iter().zip(xi).map(|(f, v)| f.eval(x) * v * v).sum(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SymbolKind {
    /// `|xi|^{2a}`
    Isotropic,
    /// `phi(x) |xi|^{2a}`
    Scaled(ScalarField),
    /// `(xi^T A(x) xi)^a`
    Anisotropic(MatrixField),
}

/// An even, real, strongly elliptic principal symbol homogeneous of
/// degree `2a` in `xi`.
#[derive(Clone, Debug, PartialEq)]
pub struct PrincipalSymbol {
    order_2a: f64,
    kind: SymbolKind,
    /// Hölder class of the coefficient. Recorded, never checked.
    pub smoothness: Option<f64>,
}

impl PrincipalSymbol {
    pub fn new(order_2a: f64, kind: SymbolKind) -> Result<Self> {
        if !(order_2a > 0.0 && order_2a < 2.0) {
            return Err(Error::InvalidParameter(format!("order 2a = {order_2a} must lie in (0, 2)")));
        }
        if let SymbolKind::Anisotropic(MatrixField::Constant(m)) = &kind {
            validate_spd(m)?;
        }
        Ok(Self { order_2a, kind, smoothness: None })
    }

    pub fn isotropic(a: f64) -> Result<Self> {
        Self::new(2.0 * a, SymbolKind::Isotropic)
    }

    pub fn scaled(a: f64, phi: ScalarField) -> Result<Self> {
        Self::new(2.0 * a, SymbolKind::Scaled(phi))
    }

    pub fn anisotropic(a: f64, matrix: MatrixField) -> Result<Self> {
        Self::new(2.0 * a, SymbolKind::Anisotropic(matrix))
    }

    pub fn a(&self) -> f64 {
        0.5 * self.order_2a
    }

    pub fn order(&self) -> f64 {
        self.order_2a
    }

    pub fn kind(&self) -> &SymbolKind {
        &self.kind
    }

    /// The coefficient `phi` for scaled symbols.
    pub fn coefficient(&self) -> Option<&ScalarField> {
        match &self.kind {
            SymbolKind::Scaled(phi) => Some(phi),
            _ => None,
        }
    }

    /// `p0(x, xi)`.
    pub fn evaluate(&self, x: &[f64], xi: &[f64]) -> Result<f64> {
        let norm2: f64 = xi.iter().map(|v| v * v).sum();
        if norm2 == 0.0 || !norm2.is_finite() {
            return Err(Error::Domain("symbol evaluated at xi = 0".into()));
        }
        let a = self.a();
        Ok(match &self.kind {
            SymbolKind::Isotropic => norm2.powf(a),
            SymbolKind::Scaled(phi) => phi.eval(x) * norm2.powf(a),
            SymbolKind::Anisotropic(m) => {
                if m.dimension() != xi.len() {
                    return Err(Error::ShapeMismatch(format!(
                        "matrix symbol of size {} evaluated at xi of length {}",
                        m.dimension(),
                        xi.len()
                    )));
                }
                m.quadratic_form(x, xi).powf(a)
            }
        })
    }

    /// Samples the symbol on `samples` points of `domain x unit sphere` and
    /// reports the ellipticity constant together with evenness and
    /// homogeneity violations.
    pub fn check_hypotheses(&self, domain: &Domain, samples: usize) -> HypothesisReport {
        let n = domain.dimension();
        let samples = samples.max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(HYPOTHESIS_SEED);
        let (lo, hi) = domain.bounding_box();
        let directions = sample_directions(n, samples);
        let mut report = HypothesisReport {
            ellipticity_constant: f64::INFINITY,
            max_even_violation: 0.0,
            max_homogeneity_violation: 0.0,
            even_ok: true,
            homogeneous_ok: true,
            samples,
        };
        for xi in directions.iter().take(samples) {
            let x = loop {
                let mut p = [0.0; 2];
                for k in 0..n {
                    p[k] = rng.random_range(lo[k]..hi[k]);
                }
                if domain.contains(&p[..n]) {
                    break p;
                }
            };
            let x = &x[..n];
            let Ok(p) = self.evaluate(x, xi) else { continue };
            report.ellipticity_constant = report.ellipticity_constant.min(p);
            let neg: Vec<f64> = xi.iter().map(|v| -v).collect();
            if let Ok(pm) = self.evaluate(x, &neg) {
                report.max_even_violation = report.max_even_violation.max((pm - p).abs() / p.abs());
            }
            let t: f64 = rng.random_range(0.1..10.0);
            let scaled: Vec<f64> = xi.iter().map(|v| t * v).collect();
            if let Ok(pt) = self.evaluate(x, &scaled) {
                let expected = t.powf(self.order_2a) * p;
                report.max_homogeneity_violation =
                    report.max_homogeneity_violation.max((pt - expected).abs() / expected.abs());
            }
        }
        report.even_ok = report.max_even_violation < HYPOTHESIS_TOLERANCE;
        report.homogeneous_ok = report.max_homogeneity_violation < HYPOTHESIS_TOLERANCE;
        report
    }

    /// `C'(P, Omega)` and `C(P, Omega)`, with a convergence flag obtained
    /// by repeating the quadrature at doubled resolution.
    pub fn weyl_constant(&self, domain: &Domain, sphere_res: usize, domain_res: usize) -> Result<WeylConstant> {
        let n = domain.dimension();
        let coarse = self.weyl_integral(domain, sphere_res, domain_res)?;
        let fine = self.weyl_integral(domain, 2 * sphere_res, 2 * domain_res)?;
        let relative_change = ((fine.0 - coarse.0) / fine.0).abs();
        let c_prime = fine.0;
        Ok(WeylConstant {
            c_prime,
            c: c_prime.powf(-self.order_2a / n as f64),
            volume_used: fine.1,
            relative_change,
            converged: relative_change <= WEYL_QUADRATURE_TOLERANCE,
        })
    }

    fn weyl_integral(&self, domain: &Domain, sphere_res: usize, domain_res: usize) -> Result<(f64, f64)> {
        let n = domain.dimension();
        let sphere = SphereQuadrature::new(n, sphere_res)?;
        let rule = domain.quadrature_rule(domain_res);
        let exponent = -(n as f64) / self.order_2a;
        let mut integral = 0.0;
        let mut volume = 0.0;
        for (p, w) in &rule {
            let x = &p[..n];
            let mut inner = 0.0;
            for (node, ws) in sphere.nodes.iter().zip(&sphere.weights) {
                inner += ws * self.evaluate(x, &node[..n])?.abs().powf(exponent);
            }
            integral += w * inner;
            volume += w;
        }
        let norm = n as f64 * (2.0 * PI).powi(n as i32);
        Ok((integral / norm, volume))
    }
}

fn validate_spd(m: &[Vec<f64>]) -> Result<()> {
    let n = m.len();
    if n == 0 || m.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidParameter("coefficient matrix must be square".into()));
    }
    for i in 0..n {
        for j in 0..n {
            if (m[i][j] - m[j][i]).abs() > 1e-14 * (m[i][j].abs() + m[j][i].abs()) {
                return Err(Error::InvalidParameter("coefficient matrix must be symmetric".into()));
            }
        }
    }
    let mat = faer::Mat::<f64>::from_fn(n, n, |i, j| m[i][j]);
    mat.llt(faer::Side::Lower)
        .map(|_| ())
        .map_err(|_| Error::InvalidParameter("coefficient matrix must be positive definite".into()))
}

/// Deterministic unit directions: `+-1` in 1D, equispaced angles in 2D,
/// a Fibonacci lattice in 3D.
fn sample_directions(n: usize, count: usize) -> Vec<Vec<f64>> {
    match n {
        1 => (0..count).map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 }]).collect(),
        2 => (0..count)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / count as f64;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        _ => (0..count)
            .map(|i| {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                let r = (1.0 - z * z).sqrt();
                let phi = PI * (3.0 - 5f64.sqrt()) * i as f64;
                vec![r * phi.cos(), r * phi.sin(), z]
            })
            .collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub ellipticity_constant: f64,
    pub max_even_violation: f64,
    pub max_homogeneity_violation: f64,
    pub even_ok: bool,
    pub homogeneous_ok: bool,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeylConstant {
    pub c_prime: f64,
    pub c: f64,
    pub volume_used: f64,
    pub relative_change: f64,
    pub converged: bool,
}

/// Quadrature on the unit sphere `S^{n-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereQuadrature {
    pub dimension: usize,
    pub nodes: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl SphereQuadrature {
    /// `n = 1`: the two points `+-1`. `n = 2`: `resolution` equispaced
    /// angles. `n = 3`: Gauss–Legendre in `cos(polar)` times
    /// `2 * resolution` equispaced azimuths.
    pub fn new(n: usize, resolution: usize) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::InvalidParameter("sphere resolution must be >= 1".into()));
        }
        match n {
            1 => Ok(Self { dimension: 1, nodes: vec![[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]], weights: vec![1.0, 1.0] }),
            2 => {
                let w = 2.0 * PI / resolution as f64;
                let nodes = (0..resolution)
                    .map(|k| {
                        let t = k as f64 * w;
                        [t.cos(), t.sin(), 0.0]
                    })
                    .collect();
                Ok(Self { dimension: 2, nodes, weights: vec![w; resolution] })
            }
            3 => {
                let (zs, wz) = gauss_legendre(resolution);
                let n_phi = 2 * resolution;
                let dphi = 2.0 * PI / n_phi as f64;
                let mut nodes = Vec::with_capacity(zs.len() * n_phi);
                let mut weights = Vec::with_capacity(zs.len() * n_phi);
                for (z, w) in zs.iter().zip(&wz) {
                    let r = (1.0 - z * z).sqrt();
                    for k in 0..n_phi {
                        let p = k as f64 * dphi;
                        nodes.push([r * p.cos(), r * p.sin(), *z]);
                        weights.push(w * dphi);
                    }
                }
                Ok(Self { dimension: 3, nodes, weights })
            }
            other => Err(Error::InvalidParameter(format!("sphere quadrature in dimension {other} is not supported"))),
        }
    }

    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(&x[..self.dimension])).sum()
    }
}

/// Measure of the unit sphere `S^{n-1}`.
pub fn sphere_measure(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => f64::NAN,
    }
}

/// Closed form of `C(P, Omega)` for the isotropic symbol, which only
/// depends on the volume.
pub fn isotropic_weyl_constant(a: f64, n: usize, volume: f64) -> f64 {
    let c_prime = volume * sphere_measure(n) / (n as f64 * (2.0 * PI).powi(n as i32));
    c_prime.powf(-2.0 * a / n as f64)
}

/// Structured configuration record for a symbol.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolSpec {
    /// `isotropic`, `scaled` or `anisotropic`.
    #[serde(default)]
    pub kind: Option<String>,
    /// Coefficient of a scaled symbol, e.g. `kink:1,1,0.5`.
    #[serde(default)]
    pub coefficient: Option<String>,
    /// Constant matrix of an anisotropic symbol.
    #[serde(default)]
    pub matrix: Option<Vec<Vec<f64>>>,
    /// Coefficient smoothness, metadata only.
    #[serde(default)]
    pub tau: Option<f64>,
}

impl SymbolSpec {
    pub fn build(&self, a: f64) -> Result<PrincipalSymbol> {
        let kind = self.kind.as_deref().unwrap_or("isotropic");
        let mut symbol = match kind {
            "isotropic" => PrincipalSymbol::isotropic(a)?,
            "scaled" => {
                let text = self
                    .coefficient
                    .as_deref()
                    .ok_or_else(|| Error::Config("scaled symbol requires a coefficient".into()))?;
                PrincipalSymbol::scaled(a, text.parse()?)?
            }
            "anisotropic" => {
                let m = self
                    .matrix
                    .clone()
                    .ok_or_else(|| Error::Config("anisotropic symbol requires a matrix".into()))?;
                PrincipalSymbol::anisotropic(a, MatrixField::Constant(m))?
            }
            other => return Err(Error::Config(format!("unknown symbol kind '{other}'"))),
        };
        symbol.smoothness = self.tau;
        Ok(symbol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_disk() -> Domain {
        Domain::disk([0.0, 0.0], 1.0).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        let iso = PrincipalSymbol::isotropic(0.5).unwrap();
        assert_eq!(iso.evaluate(&[0.0], &[2.0]).unwrap(), 2.0);
        let iso = PrincipalSymbol::isotropic(0.75).unwrap();
        let v = iso.evaluate(&[0.0, 0.0], &[-3.0, 4.0]).unwrap();
        assert!((v - 5f64.powf(1.5)).abs() < 1e-12);
        assert_eq!(v, iso.evaluate(&[0.0, 0.0], &[3.0, -4.0]).unwrap());
        let scaled = PrincipalSymbol::scaled(0.5, "quadratic:1,1".parse().unwrap()).unwrap();
        assert_eq!(scaled.evaluate(&[1.0], &[1.0]).unwrap(), 2.0);
        assert!(matches!(iso.evaluate(&[0.0], &[0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn rejects_bad_orders_and_matrices() {
        assert!(PrincipalSymbol::isotropic(1.0).is_err());
        assert!(PrincipalSymbol::isotropic(0.0).is_err());
        let indefinite = MatrixField::Constant(vec![vec![1.0, 0.0], vec![0.0, -1.0]]);
        assert!(PrincipalSymbol::anisotropic(0.5, indefinite).is_err());
    }

    #[test]
    fn hypothesis_examples() {
        let r = PrincipalSymbol::isotropic(0.5).unwrap().check_hypotheses(&unit_disk(), 1000);
        assert!((r.ellipticity_constant - 1.0).abs() < 1e-14);
        assert!(r.even_ok && r.homogeneous_ok);

        let interval = Domain::interval(0.0, PI).unwrap();
        let scaled = PrincipalSymbol::scaled(0.5, "sine:2,1,1".parse().unwrap()).unwrap();
        let r = scaled.check_hypotheses(&interval, 1000);
        assert!((1.0..=3.0).contains(&r.ellipticity_constant));
        assert!(r.even_ok && r.homogeneous_ok);

        let aniso =
            PrincipalSymbol::anisotropic(0.5, MatrixField::Constant(vec![vec![1.0, 0.0], vec![0.0, 4.0]])).unwrap();
        let r = aniso.check_hypotheses(&unit_disk(), 1000);
        // oracle: brute-force minimum of sqrt(cos^2 + 4 sin^2) over the same
        // sampled directions
        let oracle = (0..1000)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / 1000.0;
                (t.cos().powi(2) + 4.0 * t.sin().powi(2)).sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        assert!((r.ellipticity_constant - oracle).abs() < 1e-14);
        assert!((r.ellipticity_constant - 1.0).abs() < 1e-14);
        assert!(r.even_ok && r.homogeneous_ok);
    }

    #[test]
    fn sphere_quadrature_examples() {
        for res in [1, 3, 17] {
            let q = SphereQuadrature::new(1, res).unwrap();
            assert_eq!(q.weights, vec![1.0, 1.0]);
        }
        let q = SphereQuadrature::new(2, 4).unwrap();
        assert_eq!(q.nodes.len(), 4);
        assert!(q.weights.iter().all(|w| *w == PI / 2.0));
        for res in 4..20 {
            let q = SphereQuadrature::new(2, res).unwrap();
            assert!((q.integrate(|x| x[0] * x[0]) - PI).abs() < 1e-12);
        }
        for (n, m) in [(1, 2.0), (2, 2.0 * PI), (3, 4.0 * PI)] {
            let q = SphereQuadrature::new(n, 7).unwrap();
            let total: f64 = q.weights.iter().sum();
            assert!(((total - m) / m).abs() < 1e-12);
        }
        let q = SphereQuadrature::new(3, 6).unwrap();
        assert!((q.integrate(|x| x[2] * x[2]) - 4.0 * PI / 3.0).abs() < 1e-12);
        assert!(SphereQuadrature::new(4, 2).is_err());
    }

    #[test]
    fn weyl_constant_examples() {
        let interval = Domain::interval(0.0, PI).unwrap();
        let w = PrincipalSymbol::isotropic(0.5).unwrap().weyl_constant(&interval, 4, 4).unwrap();
        assert!((w.c_prime - 1.0).abs() < 1e-14 && (w.c - 1.0).abs() < 1e-14);

        let w = PrincipalSymbol::isotropic(0.5).unwrap().weyl_constant(&unit_disk(), 16, 8).unwrap();
        assert!((w.c_prime - 0.25).abs() < 1e-12);
        assert!((w.c - 2.0).abs() < 1e-6);
        assert!(w.converged);

        // oracle: adaptive Simpson of 1/(1+x) on (0,1), times 2/(2 pi)
        let unit = Domain::interval(0.0, 1.0).unwrap();
        let scaled = PrincipalSymbol::scaled(0.5, "affine:1,1".parse().unwrap()).unwrap();
        let w = scaled.weyl_constant(&unit, 4, 8).unwrap();
        let integral = adaptive_simpson(&|x: f64| 1.0 / (1.0 + x), 0.0, 1.0, 1e-13);
        let oracle = integral / PI;
        assert!((w.c_prime - oracle).abs() < 1e-10);
        assert!((oracle - 2f64.ln() / PI).abs() < 1e-12);
        assert!((w.c - PI / 2f64.ln()).abs() < 1e-9);
    }

    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        let m = 0.5 * (a + b);
        let whole = (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b));
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let left = (m - a) / 6.0 * (f(a) + 4.0 * f(lm) + f(m));
        let right = (b - m) / 6.0 * (f(m) + 4.0 * f(rm) + f(b));
        if (left + right - whole).abs() < 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            adaptive_simpson(f, a, m, tol / 2.0) + adaptive_simpson(f, m, b, tol / 2.0)
        }
    }

    #[test]
    fn scaling_covariance_and_volume_dependence() {
        let l = Domain::l_shape();
        let base = PrincipalSymbol::isotropic(0.5).unwrap().weyl_constant(&l, 8, 4).unwrap();
        let scaled = PrincipalSymbol::scaled(0.5, ScalarField::Constant(3.0)).unwrap().weyl_constant(&l, 8, 4).unwrap();
        assert!((scaled.c / base.c - 3.0).abs() < 1e-12);
        assert!((base.c - isotropic_weyl_constant(0.5, 2, 3.0)).abs() < 1e-12);
        assert!((base.c - (4.0 * PI / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn additivity_and_monotonicity_over_domains() {
        let phi: ScalarField = "sine:2,1,1.3".parse().unwrap();
        let s = PrincipalSymbol::scaled(0.3, phi).unwrap();
        let whole = s.weyl_constant(&Domain::interval(0.0, 2.0).unwrap(), 4, 16).unwrap();
        let left = s.weyl_constant(&Domain::interval(0.0, 0.7).unwrap(), 4, 16).unwrap();
        let right = s.weyl_constant(&Domain::interval(0.7, 2.0).unwrap(), 4, 16).unwrap();
        assert!((whole.c_prime - left.c_prime - right.c_prime).abs() < 1e-12);
        assert!(left.c_prime < whole.c_prime && left.c > whole.c);
    }

    #[test]
    fn spec_record_builds_symbols() {
        let spec = SymbolSpec { kind: Some("scaled".into()), coefficient: Some("kink:1,1,0.5".into()), ..Default::default() };
        let s = spec.build(0.5).unwrap();
        assert_eq!(s.evaluate(&[0.0], &[1.0]).unwrap(), 1.5);
        let bad = SymbolSpec { kind: Some("scaled".into()), ..Default::default() };
        assert!(bad.build(0.5).is_err());
        assert!(toml::from_str::<SymbolSpec>("kind = \"isotropic\"\nextra = 1").is_err());
    }
}
