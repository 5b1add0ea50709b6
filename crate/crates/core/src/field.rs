//! Scalar functions of position used as variable coefficients and bounded
//! potentials. Builtin families are parseable from short text specs such
//! as `kink:1,1,0.5` (that is `1 + |x - 0.5|`).

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Half-width of the mollifier stencil in standard deviations.
pub const MOLLIFIER_TRUNCATION: f64 = 6.0;
const MOLLIFIER_HALF_POINTS_1D: usize = 2000;
const MOLLIFIER_HALF_POINTS_2D: usize = 40;

#[derive(Clone)]
pub enum ScalarField {
    /// `value`
    Constant(f64),
    /// `offset + slope . x`
    Affine { offset: f64, slope: Vec<f64> },
    /// `offset + scale |x - center|^2`
    Quadratic { offset: f64, scale: f64, center: Vec<f64> },
    /// `offset + amplitude sin(frequency x[axis])`
    Sine { offset: f64, amplitude: f64, frequency: f64, axis: usize },
    /// `offset + slope |x - center|`
    Kink { offset: f64, slope: f64, center: Vec<f64> },
    /// Convolution of `base` with a Gaussian of standard deviation
    /// `width`, truncated at six deviations and renormalised.
    Mollified { base: Box<ScalarField>, width: f64, dim: usize },
    Custom(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarField::Custom(_) => f.write_str("Custom(..)"),
            other => write!(f, "{other}"),
        }
    }
}

impl PartialEq for ScalarField {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (ScalarField::Custom(a), ScalarField::Custom(b)) => Arc::ptr_eq(a, b),
            (ScalarField::Custom(_), _) | (_, ScalarField::Custom(_)) => false,
            (a, b) => a.to_string() == b.to_string(),
        }
    }
}

fn coord(x: &[f64], k: usize) -> f64 {
    x.get(k).copied().unwrap_or(0.0)
}

impl ScalarField {
    pub fn custom(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField::Custom(Arc::new(f))
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            ScalarField::Constant(c) => *c,
            ScalarField::Affine { offset, slope } => {
                offset + slope.iter().enumerate().map(|(k, s)| s * coord(x, k)).sum::<f64>()
            }
            ScalarField::Quadratic { offset, scale, center } => {
                let r2: f64 = (0..x.len().max(center.len()))
                    .map(|k| (coord(x, k) - coord(center, k)).powi(2))
                    .sum();
                offset + scale * r2
            }
            ScalarField::Sine { offset, amplitude, frequency, axis } => {
                offset + amplitude * (frequency * coord(x, *axis)).sin()
            }
            ScalarField::Kink { offset, slope, center } => {
                let r2: f64 = (0..x.len().max(center.len()))
                    .map(|k| (coord(x, k) - coord(center, k)).powi(2))
                    .sum();
                offset + slope * r2.sqrt()
            }
            ScalarField::Mollified { base, width, dim } => mollify_at(base, *width, *dim, x),
            ScalarField::Custom(f) => f(x),
        }
    }

    /// `self * rho_{1/k}` in `dim` dimensions.
    pub fn mollified(&self, k: usize, dim: usize) -> Result<ScalarField> {
        if k == 0 {
            return Err(Error::InvalidParameter("mollification index k must be >= 1".into()));
        }
        if !(dim == 1 || dim == 2) {
            return Err(Error::InvalidParameter(format!("mollification in dimension {dim} is not supported")));
        }
        Ok(ScalarField::Mollified { base: Box::new(self.clone()), width: 1.0 / k as f64, dim })
    }
}

fn gaussian_stencil(half: usize) -> Vec<(f64, f64)> {
    let step = MOLLIFIER_TRUNCATION / half as f64;
    let raw: Vec<(f64, f64)> = (0..=2 * half)
        .map(|q| {
            let t = (q as f64 - half as f64) * step;
            (t, (-0.5 * t * t).exp())
        })
        .collect();
    let total: f64 = raw.iter().map(|(_, w)| w).sum();
    raw.into_iter().map(|(t, w)| (t, w / total)).collect()
}

fn mollify_at(base: &ScalarField, width: f64, dim: usize, x: &[f64]) -> f64 {
    if dim == 1 {
        let x0 = coord(x, 0);
        gaussian_stencil(MOLLIFIER_HALF_POINTS_1D)
            .iter()
            .map(|(t, w)| w * base.eval(&[x0 - width * t]))
            .sum()
    } else {
        let stencil = gaussian_stencil(MOLLIFIER_HALF_POINTS_2D);
        let (x0, x1) = (coord(x, 0), coord(x, 1));
        let mut acc = 0.0;
        for (s, ws) in &stencil {
            for (t, wt) in &stencil {
                acc += ws * wt * base.eval(&[x0 - width * s, x1 - width * t]);
            }
        }
        acc
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl fmt::Display for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarField::Constant(c) => write!(f, "const:{c}"),
            ScalarField::Affine { offset, slope } => write!(f, "affine:{offset},{}", join(slope)),
            ScalarField::Quadratic { offset, scale, center } => {
                write!(f, "quadratic:{offset},{scale},{}", join(center))
            }
            ScalarField::Sine { offset, amplitude, frequency, axis } => {
                write!(f, "sine:{offset},{amplitude},{frequency},{axis}")
            }
            ScalarField::Kink { offset, slope, center } => write!(f, "kink:{offset},{slope},{}", join(center)),
            ScalarField::Mollified { base, width, dim } => write!(f, "mollify({base};{width};{dim})"),
            ScalarField::Custom(_) => f.write_str("custom"),
        }
    }
}

impl FromStr for ScalarField {
    type Err = Error;

    /// Formats: `const:c`, `affine:c0,s1[,s2]`, `quadratic:c0,s[,cx[,cy]]`,
    /// `sine:c0,amp,freq[,axis]`, `kink:c0,slope,cx[,cy]`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let v: Vec<f64> = args
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad number '{t}' in '{s}'"))))
            .collect::<Result<_>>()?;
        let need = |lo: usize, hi: usize| {
            if v.len() < lo || v.len() > hi {
                Err(Error::Config(format!("function '{name}' expects {lo}..={hi} numbers, got {}", v.len())))
            } else {
                Ok(())
            }
        };
        match name.trim() {
            "const" => {
                need(1, 1)?;
                Ok(ScalarField::Constant(v[0]))
            }
            "affine" => {
                need(2, 3)?;
                Ok(ScalarField::Affine { offset: v[0], slope: v[1..].to_vec() })
            }
            "quadratic" => {
                need(2, 4)?;
                Ok(ScalarField::Quadratic { offset: v[0], scale: v[1], center: v[2..].to_vec() })
            }
            "sine" => {
                need(3, 4)?;
                let axis = v.get(3).copied().unwrap_or(0.0);
                if !(axis == 0.0 || axis == 1.0) {
                    return Err(Error::Config(format!("sine axis must be 0 or 1, got {axis}")));
                }
                Ok(ScalarField::Sine { offset: v[0], amplitude: v[1], frequency: v[2], axis: axis as usize })
            }
            "kink" => {
                need(3, 4)?;
                Ok(ScalarField::Kink { offset: v[0], slope: v[1], center: v[2..].to_vec() })
            }
            other => Err(Error::Config(format!("unknown function family '{other}'"))),
        }
    }
}
