//! Study configuration: a TOML file, command-line overrides and the
//! validation that runs before any computation.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::discretize::check_order_constraint;
use crate::domains::Domain;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::field::ScalarField;
use crate::symbols::{PrincipalSymbol, SymbolSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    WeylConstant,
    Spectrum,
    Convergence,
    Sandwich,
    Perturbation,
    Mollify,
    SnumberSuite,
    BoundaryExponent,
}

impl Study {
    pub fn name(self) -> &'static str {
        match self {
            Study::WeylConstant => "weyl-constant",
            Study::Spectrum => "spectrum",
            Study::Convergence => "convergence",
            Study::Sandwich => "sandwich",
            Study::Perturbation => "perturbation",
            Study::Mollify => "mollify",
            Study::SnumberSuite => "snumber-suite",
            Study::BoundaryExponent => "boundary-exponent",
        }
    }
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Study {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        <Study as clap::ValueEnum>::from_str(s, false).map_err(|_| Error::Config(format!("unknown study '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    #[default]
    Dense,
    Lanczos,
}

/// Fully resolved study parameters. Field names double as TOML keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    pub study: Option<Study>,
    pub a: f64,
    pub symbol: SymbolSpec,
    pub domain: String,
    /// Number of subintervals across the x-extent of the domain; sets
    /// `h = width / n` unless `h` is given.
    pub n: Option<usize>,
    pub h: Option<f64>,
    /// Subinterval counts for the convergence study.
    pub ns: Vec<usize>,
    pub a_prime: Option<f64>,
    pub kappa: f64,
    pub potential: Option<String>,
    pub window: [f64; 2],
    pub levels: usize,
    pub first_index: usize,
    pub ks: Vec<usize>,
    pub seeds: usize,
    pub seed: u64,
    /// Eigenvector index for the boundary study.
    pub which: usize,
    pub t_samples: usize,
    pub solver: Solver,
    /// Eigenvalue count for the Lanczos solver.
    pub count: Option<usize>,
    pub sphere_res: usize,
    pub domain_res: usize,
    pub threads: Option<usize>,
    pub execution: Execution,
    pub out_dir: PathBuf,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            study: None,
            a: 0.5,
            symbol: SymbolSpec::default(),
            domain: format!("interval:0,{}", std::f64::consts::PI),
            n: None,
            h: None,
            ns: vec![256, 512, 1024, 2048],
            a_prime: None,
            kappa: 0.0,
            potential: None,
            window: [0.05, 0.25],
            levels: 3,
            first_index: 1,
            ks: vec![2, 4, 8, 16, 32],
            seeds: 1000,
            seed: 0,
            which: 1,
            t_samples: 64,
            solver: Solver::Dense,
            count: None,
            sphere_res: 64,
            domain_res: 64,
            threads: None,
            execution: Execution::Parallel,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl StudyConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn study(&self) -> Result<Study> {
        self.study.ok_or_else(|| Error::Config("no study given".into()))
    }

    pub fn parsed_domain(&self) -> Result<Domain> {
        self.domain.parse()
    }

    pub fn window(&self) -> (f64, f64) {
        (self.window[0], self.window[1])
    }

    pub fn potential(&self) -> Result<Option<ScalarField>> {
        self.potential.as_deref().map(str::parse).transpose()
    }

    pub fn principal_symbol(&self) -> Result<PrincipalSymbol> {
        self.symbol.build(self.a)
    }

    /// Spacing from `h`, or from `n` subintervals across the x-extent.
    pub fn spacing(&self, domain: &Domain) -> Result<f64> {
        match (self.h, self.n) {
            (Some(h), _) => Ok(h),
            (None, Some(n)) => Ok(spacing_for(domain, n)),
            (None, None) => Err(Error::Config("set either h or n".into())),
        }
    }

    /// Checks every parameter the chosen study reads.
    pub fn validate(&self) -> Result<()> {
        let study = self.study()?;
        // The classical case a = 1 is allowed for plain spectra.
        let a_ok = if study == Study::Spectrum { self.a > 0.0 && self.a <= 1.0 } else { self.a > 0.0 && self.a < 1.0 };
        if !a_ok {
            return Err(Error::Config(format!("a = {} must satisfy 0 < a < 1", self.a)));
        }
        let domain = self.parsed_domain()?;
        if self.a < 1.0 {
            self.principal_symbol()?;
        } else if self.symbol.kind.as_deref().is_some_and(|k| k != "isotropic" && k != "scaled") {
            return Err(Error::Config("a = 1 supports isotropic and scaled symbols only".into()));
        }
        if let Some(h) = self.h {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Config(format!("h = {h} must be positive")));
            }
        }
        if self.n.is_some_and(|n| n < 2) || self.ns.iter().any(|&n| n < 2) {
            return Err(Error::Config("subinterval counts must be at least 2".into()));
        }
        let [lo, hi] = self.window;
        if !(lo > 0.0 && lo < hi && hi <= 1.0) {
            return Err(Error::Config(format!("window [{lo}, {hi}] must satisfy 0 < lo < hi <= 1")));
        }
        if let Some(ap) = self.a_prime {
            check_order_constraint(self.a, ap)?;
        }
        if !self.kappa.is_finite() {
            return Err(Error::Config("kappa must be finite".into()));
        }
        self.potential()?;
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        match study {
            Study::Spectrum | Study::Sandwich | Study::Perturbation | Study::Mollify | Study::BoundaryExponent => {
                self.spacing(&domain)?;
            }
            _ => {}
        }
        if study == Study::Perturbation && self.a_prime.is_none() {
            return Err(Error::Config("the perturbation study needs a_prime".into()));
        }
        if study == Study::Mollify {
            if self.symbol.coefficient.is_none() {
                return Err(Error::Config("the mollify study needs a symbol coefficient".into()));
            }
            if self.ks.is_empty() || self.ks.contains(&0) {
                return Err(Error::Config("mollification indices ks must be positive".into()));
            }
        }
        if self.first_index == 0 || self.which == 0 || self.t_samples == 0 {
            return Err(Error::Config("first_index, which and t_samples must be at least 1".into()));
        }
        if self.solver == Solver::Lanczos && self.count.is_none_or(|c| c == 0) {
            return Err(Error::Config("the Lanczos solver needs a positive count".into()));
        }
        Ok(())
    }
}

/// `width / n` for the x-extent of the domain's bounding box.
pub fn spacing_for(domain: &Domain, n: usize) -> f64 {
    let (lo, hi) = domain.bounding_box();
    (hi[0] - lo[0]) / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_unknown_keys() {
        let cfg = StudyConfig::from_toml("study = \"spectrum\"\na = 0.25\nn = 64\n[symbol]\nkind = \"isotropic\"\n")
            .unwrap();
        assert_eq!(cfg.study, Some(Study::Spectrum));
        assert_eq!(cfg.a, 0.25);
        cfg.validate().unwrap();
        let err = StudyConfig::from_toml("study = \"spectrum\"\nalpha = 0.5\n").unwrap_err();
        assert!(err.to_string().contains("alpha"), "{err}");
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(StudyConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        let base = StudyConfig { study: Some(Study::Convergence), ..Default::default() };
        base.validate().unwrap();
        let bad_a = StudyConfig { a: 1.5, ..base.clone() };
        assert!(matches!(bad_a.validate(), Err(Error::Config(_))));
        let bad_ap = StudyConfig { a_prime: Some(0.5), ..base.clone() };
        assert!(matches!(bad_ap.validate(), Err(Error::OrderConstraint { .. })));
        let bad_h = StudyConfig { h: Some(-1.0), ..base.clone() };
        assert!(bad_h.validate().is_err());
        let no_grid = StudyConfig { study: Some(Study::Spectrum), ..base.clone() };
        assert!(no_grid.validate().is_err());
        let classical = StudyConfig { study: Some(Study::Spectrum), a: 1.0, n: Some(16), ..base.clone() };
        classical.validate().unwrap();
        assert!("bogus".parse::<Study>().is_err());
    }
}
