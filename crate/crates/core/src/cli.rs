//! Command-line front end for the model experiments.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};

use crate::driver::{rate_estimate, records_csv, AdaptiveConfig, Driver, RunRecord, CSV_HEADER};
use crate::error::Error;
use crate::geometry::GeometryKind;
use crate::operators::Formulation;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Slope window of `rates.txt`.
pub const RATE_WINDOW: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    HyperPacman,
    WeakPacman,
    HyperHeart,
    WeakHeart,
}

impl Preset {
    pub fn geometry(self) -> GeometryKind {
        match self {
            Preset::HyperPacman | Preset::WeakPacman => GeometryKind::Pacman,
            Preset::HyperHeart | Preset::WeakHeart => GeometryKind::Heart,
        }
    }

    pub fn is_hyper(self) -> bool {
        matches!(self, Preset::HyperPacman | Preset::HyperHeart)
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::HyperPacman => "hyper-pacman",
            Preset::WeakPacman => "weak-pacman",
            Preset::HyperHeart => "hyper-heart",
            Preset::WeakHeart => "weak-heart",
        }
    }
}

/// Adaptive isogeometric BEM for the 2D Laplacian on the model geometries.
#[derive(Debug, Clone, Parser)]
#[command(name = "igabem", version)]
pub struct Args {
    /// Experiment preset.
    #[arg(long, value_enum)]
    pub preset: Preset,
    /// Uniform bisection instead of adaptive refinement.
    #[arg(long)]
    pub uniform: bool,
    /// Dörfler parameter θ ∈ (0, 1].
    #[arg(long, default_value_t = 0.5)]
    pub theta: f64,
    /// Coarsening parameter ϑ ≥ 0.
    #[arg(long, default_value_t = 0.1)]
    pub vartheta: f64,
    /// Marking constant C_min ≥ 1 (the greedy set is always minimal).
    #[arg(long, default_value_t = 1.0)]
    pub cmin: f64,
    /// Coarsening cap C_mark > 0.
    #[arg(long, default_value_t = 1.0)]
    pub cmark: f64,
    /// Polynomial degree.
    #[arg(long, default_value_t = 2)]
    pub p: usize,
    /// Stop before the space dimension exceeds this.
    #[arg(long, default_value_t = 1000)]
    pub max_dof: usize,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (0: all cores).
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Coarsen nodes with zero μ even when ϑ = 0.
    #[arg(long)]
    pub coarsen_free: bool,
    /// Mesh-ratio constant κ̂₀ (default: ratio of the initial mesh).
    #[arg(long)]
    pub kappa0: Option<f64>,
    /// Indirect formulation (`W u = φ` or `V φ = u`).
    #[arg(long)]
    pub indirect: bool,
    /// Approximate the Dirichlet data by continuous piecewise polynomials
    /// (weakly-singular presets).
    #[arg(long)]
    pub data_approx: bool,
    /// Write per-node indicators of every step to `indicators-<ℓ>.csv`.
    #[arg(long)]
    pub dump_indicators: bool,
    /// Suppress per-step progress on stdout.
    #[arg(long, short)]
    pub quiet: bool,
}

impl Args {
    pub fn config(&self) -> AdaptiveConfig {
        let formulation = match (self.preset.is_hyper(), self.indirect) {
            (true, false) => Formulation::HyperDirect,
            (true, true) => Formulation::HyperIndirect,
            (false, false) => Formulation::WeakDirect,
            (false, true) => Formulation::WeakIndirect,
        };
        AdaptiveConfig {
            theta: if self.uniform { 1.0 } else { self.theta },
            vartheta: if self.uniform { 0.0 } else { self.vartheta },
            c_min: self.cmin,
            c_mark: self.cmark,
            formulation,
            uniform: self.uniform,
            max_dof: self.max_dof,
            geometry: self.preset.geometry(),
            degree: self.p,
            kappa0: self.kappa0,
            coarsen_free: self.coarsen_free,
            data_approximation: self.data_approx,
            keep_indicators: self.dump_indicators,
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Argument(_) | Error::UnsupportedDegree(_) => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

/// Human-readable run summary.
pub fn summary(args: &Args, records: &[RunRecord]) -> String {
    let last = records.last();
    let mut s = format!(
        "preset {}{}\n",
        args.preset.name(),
        if args.uniform { " (uniform)" } else { "" }
    );
    let c = args.config();
    s += &format!(
        "theta {} vartheta {} C_min {} C_mark {} p {} formulation {:?}\n",
        c.theta, c.vartheta, c.c_min, c.c_mark, c.degree, c.formulation
    );
    s += &format!("steps {}\n", records.len());
    if let Some(r) = last {
        s += &format!("final knots {} dim {} eta {:e}\n", r.knots, r.dim, r.eta);
    }
    match rate_estimate(records, RATE_WINDOW) {
        Some(slope) => s += &format!("slope (last {RATE_WINDOW}) {slope:.4}\n"),
        None => s += "slope unavailable\n",
    }
    s
}

fn write_outputs(dir: &Path, args: &Args, records: &[RunRecord]) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("run.csv"), records_csv(records))?;
    let rate = rate_estimate(records, RATE_WINDOW)
        .map(|s| format!("{s}\n"))
        .unwrap_or_else(|| "nan\n".into());
    fs::write(dir.join("rates.txt"), rate)?;
    for r in records {
        fs::write(dir.join(format!("step-{}.knots", r.ell)), r.histogram())?;
        if let Some(ind) = &r.indicators {
            fs::write(dir.join(format!("indicators-{}.csv", r.ell)), ind)?;
        }
    }
    fs::write(dir.join("summary.txt"), summary(args, records))?;
    Ok(())
}

/// Parses `args` (including the program name) and runs; returns the exit
/// code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    run_args(&args)
}

pub fn run_args(args: &Args) -> i32 {
    if args.threads > 0 {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(args.threads).build_global();
    }
    let driver = match Driver::new(args.config()) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("igabem: {e}");
            return exit_code(&e);
        }
    };
    if !args.quiet {
        println!("{CSV_HEADER}");
    }
    let records = match driver.run_with(|r| {
        if !args.quiet {
            println!("{}", r.csv_line());
            let _ = std::io::stdout().flush();
        }
    }) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("igabem: {e}");
            return exit_code(&e);
        }
    };
    if let Err(e) = write_outputs(&args.out, args, &records) {
        eprintln!("igabem: cannot write to {}: {e}", args.out.display());
        return EXIT_IO;
    }
    if !args.quiet {
        print!("{}", summary(args, &records));
    }
    EXIT_OK
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_map_to_configs() {
        let a = Args::try_parse_from(["igabem", "--preset", "weak-heart", "--indirect", "--vartheta", "1"]).unwrap();
        let c = a.config();
        assert_eq!(c.geometry, GeometryKind::Heart);
        assert_eq!(c.formulation, Formulation::WeakIndirect);
        assert_eq!(c.vartheta, 1.0);
        let u = Args::try_parse_from(["igabem", "--preset", "hyper-pacman", "--uniform"]).unwrap();
        let c = u.config();
        assert!(c.uniform && c.theta == 1.0 && c.vartheta == 0.0);
        assert_eq!(c.formulation, Formulation::HyperDirect);
    }

    #[test]
    fn bad_flags_are_config_errors() {
        assert_eq!(main_with_args(["igabem", "--preset", "square"]), EXIT_CONFIG);
        assert_eq!(main_with_args(["igabem"]), EXIT_CONFIG);
        assert_eq!(main_with_args(["igabem", "--help"]), EXIT_OK);
        assert_eq!(
            main_with_args(["igabem", "--preset", "hyper-pacman", "--theta", "1.5", "-q"]),
            EXIT_CONFIG
        );
    }
}
