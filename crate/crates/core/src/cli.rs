//! Command-line front end: argument parsing, study dispatch and output
//! files. Every run writes its tables plus a `manifest.json` holding the
//! resolved configuration.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::Parser;
use serde::Serialize;

use crate::config::{spacing_for, Solver, Study, StudyConfig};
use crate::discretize::{assemble_dirichlet_with, assemble_for_symbol, assemble_perturbed_with, kernel_weights, DirichletOperator};
use crate::domains::Domain;
use crate::eigensolve::{dense_matvec, partial_eigenvalues, ConvolutionOperator, LanczosOptions, Spectrum};
use crate::error::{Error, Result};
use crate::exec::configure_threads;
use crate::snumbers::{mollification_study, snumber_suite};
use crate::weylfit::{
    boundary_exponent, convergence_study, g_trace_csv, perturbation_invariance_study, sandwich_study, weyl_fit,
    PerturbationSpec,
};

/// Exit status for configuration errors.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status when the lower-order term violates the order bound.
pub const EXIT_CONSTRAINT: i32 = 3;
/// Exit status for numerical failures.
pub const EXIT_NUMERIC: i32 = 4;
/// Exit status for I/O failures.
pub const EXIT_IO: i32 = 5;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::OrderConstraint { .. } => EXIT_CONSTRAINT,
        Error::Io(_) => EXIT_IO,
        Error::Config(_)
        | Error::InvalidParameter(_)
        | Error::Domain(_)
        | Error::EmptyGrid { .. }
        | Error::EmptyErosion { .. }
        | Error::CutoffTooSmall { .. }
        | Error::Aliasing { .. }
        | Error::ShapeMismatch(_)
        | Error::WindowTooShort { .. } => EXIT_CONFIG,
        Error::NotSymmetric(_) | Error::Indefinite(_) | Error::Solver(_) | Error::InsufficientData(_) => EXIT_NUMERIC,
    }
}

fn parse_pair(s: &str) -> std::result::Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    match parts.as_slice() {
        [lo, hi] => Ok([
            lo.trim().parse().map_err(|_| format!("bad number '{lo}'"))?,
            hi.trim().parse().map_err(|_| format!("bad number '{hi}'"))?,
        ]),
        _ => Err(format!("expected 'lo,hi', got '{s}'")),
    }
}

/// Spectral studies of fractional-order Dirichlet operators.
#[derive(Debug, Default, Parser)]
#[command(name = "fracweyl", version, about)]
pub struct Args {
    /// Study to run.
    #[arg(value_enum)]
    pub study: Option<Study>,
    /// Study to run (alternative to the positional argument).
    #[arg(long = "study", value_enum, conflicts_with = "study")]
    pub study_flag: Option<Study>,
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Run every loop on the calling thread.
    #[arg(long)]
    pub sequential: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Order parameter of the principal symbol (order 2a).
    #[arg(long)]
    pub a: Option<f64>,
    /// Order parameter of the lower-order term.
    #[arg(long)]
    pub a_prime: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Bounded potential, e.g. `sine:0,1,3`.
    #[arg(long)]
    pub potential: Option<String>,
    /// Domain, e.g. `interval:0,1`, `disk:0,0,1`, `lshape`.
    #[arg(long)]
    pub domain: Option<String>,
    /// Symbol kind: isotropic, scaled or anisotropic.
    #[arg(long)]
    pub symbol: Option<String>,
    /// Coefficient of a scaled symbol, e.g. `kink:1,1,0.5`.
    #[arg(long)]
    pub coefficient: Option<String>,
    /// Subintervals across the x-extent of the domain.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub h: Option<f64>,
    /// Comma-separated subinterval counts for the convergence study.
    #[arg(long, value_delimiter = ',')]
    pub ns: Option<Vec<usize>>,
    /// Fit window as fractions of the spectrum length, `lo,hi`.
    #[arg(long, value_parser = parse_pair)]
    pub window: Option<[f64; 2]>,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub first_index: Option<usize>,
    /// Comma-separated mollification indices.
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub which: Option<usize>,
    #[arg(long)]
    pub t_samples: Option<usize>,
    /// `dense` or `lanczos`.
    #[arg(long)]
    pub solver: Option<String>,
    /// Number of eigenvalues for the Lanczos solver.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub sphere_res: Option<usize>,
    #[arg(long)]
    pub domain_res: Option<usize>,
}

/// Reads the config file (if any), applies flag overrides and validates.
pub fn resolve_config(args: &Args) -> Result<StudyConfig> {
    let mut cfg = match &args.config {
        Some(path) => StudyConfig::from_file(path)?,
        None => StudyConfig::default(),
    };
    macro_rules! set {
        ($($field:ident),*) => {$(
            if let Some(v) = args.$field.clone() {
                cfg.$field = v;
            }
        )*};
    }
    macro_rules! set_some {
        ($($field:ident),*) => {$(
            if let Some(v) = args.$field.clone() {
                cfg.$field = Some(v);
            }
        )*};
    }
    set!(out_dir, seed, a, kappa, domain, ns, window, levels, first_index, ks, seeds, which, t_samples, sphere_res, domain_res);
    set_some!(threads, a_prime, potential, n, h, count);
    if let Some(study) = args.study.or(args.study_flag) {
        cfg.study = Some(study);
    }
    if let Some(kind) = &args.symbol {
        cfg.symbol.kind = Some(kind.clone());
    }
    if let Some(c) = &args.coefficient {
        cfg.symbol.coefficient = Some(c.clone());
        cfg.symbol.kind.get_or_insert_with(|| "scaled".into());
    }
    if let Some(s) = &args.solver {
        cfg.solver = match s.as_str() {
            "dense" => Solver::Dense,
            "lanczos" => Solver::Lanczos,
            other => return Err(Error::Config(format!("unknown solver '{other}'"))),
        };
    }
    if args.sequential {
        cfg.execution = crate::Execution::Sequential;
    }
    if args.h.is_some() && args.n.is_none() {
        cfg.n = None;
    }
    if args.n.is_some() && args.h.is_none() {
        cfg.h = None;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// One named output file.
struct Artifact {
    name: String,
    contents: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    study: String,
    config: &'a StudyConfig,
    outputs: Vec<String>,
    threads: usize,
    wall_time_seconds: f64,
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::Config(format!("serialisation failed: {e}")))
}

/// Writes via a temporary file in the same directory and a rename.
fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(dir.join(name)).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Runs the configured study, writes its outputs and returns the lines
/// meant for standard output.
pub fn run(cfg: &StudyConfig) -> Result<Vec<String>> {
    cfg.validate()?;
    let started = Instant::now();
    let study = cfg.study()?;
    let mut lines = Vec::new();
    let artifacts = match study {
        Study::WeylConstant => weyl_constant(cfg, &mut lines)?,
        Study::Spectrum => spectrum(cfg, &mut lines)?,
        Study::Convergence => convergence(cfg, &mut lines)?,
        Study::Sandwich => sandwich(cfg, &mut lines)?,
        Study::Perturbation => perturbation(cfg, &mut lines)?,
        Study::Mollify => mollify(cfg, &mut lines)?,
        Study::SnumberSuite => suite(cfg, &mut lines)?,
        Study::BoundaryExponent => boundary(cfg, &mut lines)?,
    };
    std::fs::create_dir_all(&cfg.out_dir)?;
    for a in &artifacts {
        write_atomic(&cfg.out_dir, &a.name, &a.contents)?;
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        study: study.to_string(),
        config: cfg,
        outputs: artifacts.iter().map(|a| a.name.clone()).collect(),
        threads: effective_threads(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
    };
    write_atomic(&cfg.out_dir, "manifest.json", &json(&manifest)?)?;
    lines.push(format!("wrote {} files to {}", artifacts.len() + 1, cfg.out_dir.display()));
    Ok(lines)
}

fn effective_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

fn artifact(name: &str, contents: String) -> Artifact {
    Artifact { name: name.into(), contents }
}

fn weyl_constant(cfg: &StudyConfig, lines: &mut Vec<String>) -> Result<Vec<Artifact>> {
    let domain = cfg.parsed_domain()?;
    let symbol = cfg.principal_symbol()?;
    let w = symbol.weyl_constant(&domain, cfg.sphere_res, cfg.domain_res)?;
    let hyp = symbol.check_hypotheses(&domain, 256);
    lines.push(format!("C' = {}", w.c_prime));
    lines.push(format!("C = {}", w.c));
    if !w.converged {
        lines.push(format!("warning: quadrature changed by {:e} under refinement", w.relative_change));
    }
    let body = serde_json::json!({ "domain": domain.describe(), "constant": w, "hypotheses": hyp });
    Ok(vec![artifact("weyl_constant.json", json(&body)?)])
}

fn build_operator(cfg: &StudyConfig, domain: &Domain, h: f64) -> Result<DirichletOperator> {
    let exec = cfg.execution;
    let grid = Arc::new(domain.grid(h)?);
    let op = if cfg.a < 1.0 {
        assemble_for_symbol(exec, &cfg.principal_symbol()?, grid, 0)?
    } else {
        let kernel = kernel_weights(grid.dimension(), cfg.a, h, grid.lattice_diameter().max(1))?;
        let phi = cfg.symbol.coefficient.as_deref().map(str::parse).transpose()?;
        assemble_dirichlet_with(exec, &kernel, grid, phi.as_ref())?
    };
    match cfg.a_prime {
        Some(ap) => assemble_perturbed_with(exec, &op, ap, cfg.kappa, cfg.potential()?.as_ref()),
        None => Ok(op),
    }
}

fn solve(cfg: &StudyConfig, op: &DirichletOperator, with_vectors: bool) -> Result<Spectrum> {
    match cfg.solver {
        Solver::Dense => op.spectrum(with_vectors),
        Solver::Lanczos => {
            let count = cfg.count.unwrap_or(1).min(op.len());
            let options = LanczosOptions { with_vectors, ..Default::default() };
            let plain = op.coefficient().is_none() && op.perturbation().a_prime.is_none();
            let mut s = if plain {
                let kernel = kernel_weights(op.grid().dimension(), op.a(), op.spacing(), op.grid().lattice_diameter().max(1))?;
                let conv = ConvolutionOperator::new(&kernel, op.grid())?;
                partial_eigenvalues(&|x, y| conv.apply_into(x, y), op.len(), count, cfg.seed, options)?
            } else {
                partial_eigenvalues(&dense_matvec(op.matrix()), op.len(), count, cfg.seed, options)?
            };
            s.meta.nodes = op.len();
            s.meta.dimension = Some(op.grid().dimension());
            s.meta.a = Some(op.a());
            s.meta.h = Some(op.spacing());
            Ok(s)
        }
    }
}

fn spectrum(cfg: &StudyConfig, lines: &mut Vec<String>) -> Result<Vec<Artifact>> {
    let domain = cfg.parsed_domain()?;
    let h = cfg.spacing(&domain)?;
    let op = build_operator(cfg, &domain, h)?;
    let mut s = solve(cfg, &op, false)?;
    s.meta.domain = Some(domain.describe());
    let n = domain.dimension();
    lines.push(format!("{} eigenvalues on {} nodes, h = {h}", s.len(), op.len()));
    let fit = weyl_fit(&s, cfg.a, n, cfg.window()).ok();
    if let Some(f) = &fit {
        lines.push(format!("C_hat = {} (dispersion {}, j = {}..={})", f.c_hat, f.dispersion, f.j_min, f.j_max));
    }
    let mut body = s.to_json();
    body["fit"] = serde_json::to_value(&fit).expect("fit serialises");
    Ok(vec![
        artifact("spectrum.csv", s.to_csv()),
        artifact("g_trace.csv", g_trace_csv(&s, cfg.a, n)),
        artifact("spectrum.json", json(&body)?),
    ])
}

fn convergence(cfg: &StudyConfig, lines: &mut Vec<String>) -> Result<Vec<Artifact>> {
    let domain = cfg.parsed_domain()?;
    let spacings: Vec<f64> = cfg.ns.iter().map(|&n| spacing_for(&domain, n)).collect();
    let t = convergence_study(cfg.execution, &cfg.principal_symbol()?, &domain, &spacings, cfg.window())?;
    lines.push(format!("reference C = {}", t.reference));
    for r in &t.rows {
        lines.push(format!("h = {:<12.6e} N = {:<6} C_hat = {:.6} (+- {:.2e})", r.h, r.nodes, r.fit.c_hat, r.fit.dispersion));
    }
    Ok(vec![artifact("convergence.csv", t.to_csv()), artifact("convergence.json", json(&t)?)])
}

fn perturbation_spec(cfg: &StudyConfig) -> Result<Option<PerturbationSpec>> {
    Ok(match cfg.a_prime {
        Some(a_prime) => Some(PerturbationSpec { a_prime, kappa: cfg.kappa, potential: cfg.potential()? }),
        None => None,
    })
}

fn sandwich(cfg: &StudyConfig, lines: &mut Vec<String>) -> Result<Vec<Artifact>> {
    let domain = cfg.parsed_domain()?;
    let h = cfg.spacing(&domain)?;
    let pert = perturbation_spec(cfg)?;
    let t = sandwich_study(
        cfg.execution,
        &cfg.principal_symbol()?,
        &domain,
        cfg.levels,
        cfg.first_index,
        h,
        pert.as_ref(),
        cfg.window(),
    )?;
    lines.push(format!("sandwich holds: {} (max violation {:e})", t.sandwich_holds, t.max_violation));
    lines.push(format!("fits ordered: {}, reference constants monotone: {}", t.fits_ordered, t.references_monotone));
    Ok(vec![artifact("sandwich.csv", t.to_csv()), artifact("sandwich.json", json(&t)?)])
}

fn perturbation(cfg: &StudyConfig, lines: &mut Vec<String>) -> Result<Vec<Artifact>> {
    let domain = cfg.parsed_domain()?;
    let h = cfg.spacing(&domain)?;
    let spec = perturbation_spec(cfg)?.expect("validated");
    let r = perturbation_invariance_study(cfg.execution, &cfg.principal_symbol()?, &domain, h, &spec, cfg.window())?;
    lines.push(format!("C_hat base = {}, perturbed = {}", r.base.c_hat, r.perturbed.c_hat));
    lines.push(format!("difference {:e} vs tolerance {:e}: {}", r.difference, r.tolerance, r.within_tolerance));
    let csv = format!(
        "operator,c_hat,dispersion\nbase,{},{}\nperturbed,{},{}\n",
        r.base.c_hat, r.base.dispersion, r.perturbed.c_hat, r.perturbed.dispersion
    );
    Ok(vec![artifact("perturbation.csv", csv), artifact("perturbation.json", json(&r)?)])
}

fn mollify(cfg: &StudyConfig, lines: &mut Vec<String>) -> Result<Vec<Artifact>> {
    let domain = cfg.parsed_domain()?;
    let h = cfg.spacing(&domain)?;
    let phi = cfg.symbol.coefficient.as_deref().expect("validated").parse()?;
    let t = mollification_study(cfg.execution, &domain, cfg.a, &phi, &cfg.ks, h)?;
    for r in &t.rows {
        lines.push(format!("k = {:<4} |D_k| = {:.4e}  weak norm = {:.4e}", r.k, r.opnorm_diff, r.weak_norm));
    }
    lines.push(format!(
        "nonincreasing: {} / {}, last over first {:.3}",
        t.opnorm_nonincreasing, t.weak_nonincreasing, t.decay
    ));
    Ok(vec![artifact("resolvent.csv", t.to_csv()), artifact("resolvent.json", json(&t)?)])
}

fn suite(cfg: &StudyConfig, lines: &mut Vec<String>) -> Result<Vec<Artifact>> {
    let r = snumber_suite(cfg.execution, cfg.seed, cfg.seeds)?;
    lines.push(format!("{} seeds, {} violations", r.seeds, r.violations()));
    if r.violations() > 0 {
        return Err(Error::Solver(format!("s-number suite found {} violations", r.violations())));
    }
    Ok(vec![artifact("snumbers.json", json(&r)?)])
}

fn boundary(cfg: &StudyConfig, lines: &mut Vec<String>) -> Result<Vec<Artifact>> {
    let domain = cfg.parsed_domain()?;
    let h = cfg.spacing(&domain)?;
    let op = build_operator(cfg, &domain, h)?;
    let mut local = cfg.clone();
    local.count = Some(cfg.count.unwrap_or(cfg.which).max(cfg.which));
    let s = solve(&local, &op, true)?;
    let fit = boundary_exponent(&s, op.grid(), &domain, cfg.which)?;
    lines.push(format!("boundary exponent {} over d in [{:e}, {:e}] ({} nodes)", fit.exponent, fit.d_min, fit.d_max, fit.nodes));
    let u = s.eigenvector(cfg.which).expect("checked by the fit");
    let grid = op.grid();
    let mut csv = String::from(if grid.dimension() == 1 { "index,x,u\n" } else { "index,x,y,u\n" });
    for (i, v) in u.iter().enumerate() {
        let x = grid.coords(i);
        let coords: Vec<String> = x.iter().map(|c| c.to_string()).collect();
        csv.push_str(&format!("{i},{},{v}\n", coords.join(",")));
    }
    Ok(vec![artifact("boundary.json", json(&fit)?), artifact("eigenvector.csv", csv)])
}

/// Entry point shared by the binary: parse, configure threads, run.
pub fn main_with_args(args: Args) -> i32 {
    let cfg = match resolve_config(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    if let Some(t) = cfg.threads {
        if let Err(e) = configure_threads(t) {
            eprintln!("error: cannot configure {t} threads: {e}");
            return EXIT_CONFIG;
        }
    }
    match run(&cfg) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
