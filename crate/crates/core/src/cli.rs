//! Command-line front end: `gen`, `fit`, `density` and `stats`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::akde::{akde_pdf, build_akde};
use crate::balloon::BalloonConfig;
use crate::error::{Error, Result};
use crate::gauss2::{log_likelihood, mixture_pdf, SampleSet, Vec2};
use crate::gem::{effective_count, fit, FitConfig, FitResult};
use crate::grid_io::{
    self, balloons_to_csv, default_spec, grid_to_csv, rasterize, read_balloons, read_model, read_samples,
    samples_to_csv, svg, trace_to_csv, write_model, write_pgm, write_text, GridSpec, ModelFile,
};
use crate::sampling::{generate, Shape};

/// Caps the number of worker threads.
pub const THREADS_ENV: &str = "BALLOON_GMM_THREADS";

pub const MODEL_FILE: &str = "model.json";
pub const BALLOONS_FILE: &str = "balloons.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const BALLOONS_SVG: &str = "balloons.svg";
pub const KERNELS_SVG: &str = "kernels.svg";
pub const MIXTURE_SVG: &str = "mixture.svg";

#[derive(Debug, Parser)]
#[command(name = "balloon-gmm", version, about = "Balloon-regularized sparse Gaussian mixtures in 2-D")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw samples and write them as `x,y` CSV.
    Gen(GenArgs),
    /// Fit a regularized mixture and write model, balloons, trace, overlays and manifest.
    Fit(FitArgs),
    /// Rasterize a fitted mixture or the adaptive KDE to PGM (and optionally CSV).
    Density(DensityArgs),
    /// Summarize a model file.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub n: usize,
    /// `unit-square` or `gmm:<model.json>`.
    #[arg(long, default_value = "unit-square")]
    pub shape: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, required_unless_present = "manifest")]
    pub samples: Option<PathBuf>,
    /// Target probability P in (0, 1], e.g. 0.015625 for 1/64.
    #[arg(long, required_unless_present = "manifest")]
    pub p: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    pub eps_rel: f64,
    /// Maximum σ² updates per balloon solve.
    #[arg(long, default_value_t = 64)]
    pub balloon_steps: usize,
    #[arg(long)]
    pub warm_start: bool,
    #[arg(long)]
    pub target_on_balloon: bool,
    #[arg(long)]
    pub early_stop_tol: Option<f64>,
    #[arg(long, default_value_t = 1e-3)]
    pub merge_tol: f64,
    #[arg(long, default_value_t = 0.01)]
    pub threshold_rel: f64,
    /// Re-run the configuration recorded in a manifest.
    #[arg(long, conflicts_with_all = ["samples", "p"])]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct DensityArgs {
    #[arg(long, required_unless_present = "akde")]
    pub model: Option<PathBuf>,
    /// Render the adaptive KDE from a balloon CSV instead of a model.
    #[arg(long, requires = "balloons")]
    pub akde: bool,
    #[arg(long)]
    pub balloons: Option<PathBuf>,
    /// Samples whose bounding box sets the default extent of a model render.
    #[arg(long)]
    pub samples: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    pub width: usize,
    #[arg(long, default_value_t = 256)]
    pub height: usize,
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    /// `xmin,ymin,xmax,ymax`; defaults to the expanded sample box.
    #[arg(long, value_delimiter = ',', num_args = 4)]
    pub bbox: Option<Vec<f64>>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub samples: Option<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    pub threshold_rel: f64,
    #[arg(long)]
    pub csv: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub model: String,
    pub balloons: String,
    pub trace: String,
    pub balloons_svg: String,
    pub kernels_svg: String,
    pub mixture_svg: String,
}

/// Everything needed to reproduce a fit. Artifact names are relative to the
/// manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub samples: PathBuf,
    pub n: usize,
    pub seed: u64,
    pub target_p: f64,
    pub outer_iters: usize,
    pub init_eps_rel: f64,
    pub prune_threshold: f64,
    pub effective_threshold_rel: f64,
    pub merge_tol: f64,
    pub early_stop_tol: Option<f64>,
    pub balloon_steps: usize,
    pub sigma2_init: f64,
    pub warm_start: bool,
    pub target_on_balloon: bool,
    pub artifacts: Artifacts,
}

impl RunManifest {
    pub fn fit_config(&self) -> FitConfig {
        let mut balloon = BalloonConfig::new(self.target_p);
        balloon.max_inner_iters = self.balloon_steps;
        balloon.sigma2_init = self.sigma2_init;
        balloon.warm_start = self.warm_start;
        balloon.target_on_balloon = self.target_on_balloon;
        FitConfig {
            target_p: self.target_p,
            outer_iters: self.outer_iters,
            init_eps_rel: self.init_eps_rel,
            prune_threshold: self.prune_threshold,
            effective_threshold_rel: self.effective_threshold_rel,
            merge_tol: self.merge_tol,
            seed: self.seed,
            early_stop_tol: self.early_stop_tol,
            balloon,
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line() as u64,
            msg: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        text
    }
}

fn manifest_from_args(args: &FitArgs, samples: &Path, n: usize, target_p: f64) -> RunManifest {
    let defaults = FitConfig::new(target_p);
    RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        samples: samples.to_path_buf(),
        n,
        seed: args.seed,
        target_p,
        outer_iters: args.iters,
        init_eps_rel: args.eps_rel,
        prune_threshold: defaults.prune_threshold,
        effective_threshold_rel: args.threshold_rel,
        merge_tol: args.merge_tol,
        early_stop_tol: args.early_stop_tol,
        balloon_steps: args.balloon_steps,
        sigma2_init: defaults.balloon.sigma2_init,
        warm_start: args.warm_start,
        target_on_balloon: args.target_on_balloon,
        artifacts: Artifacts {
            model: MODEL_FILE.into(),
            balloons: BALLOONS_FILE.into(),
            trace: TRACE_FILE.into(),
            balloons_svg: BALLOONS_SVG.into(),
            kernels_svg: KERNELS_SVG.into(),
            mixture_svg: MIXTURE_SVG.into(),
        },
    }
}

fn parse_shape(spec: &str) -> Result<Shape> {
    if spec == "unit-square" {
        return Ok(Shape::UnitSquare);
    }
    if let Some(path) = spec.strip_prefix("gmm:") {
        return Ok(Shape::Mixture(read_model(Path::new(path))?.model));
    }
    Err(Error::InvalidConfig(format!(
        "unknown shape {spec:?}; expected unit-square or gmm:<model.json>"
    )))
}

pub fn cmd_gen(args: &GenArgs) -> Result<String> {
    let shape = parse_shape(&args.shape)?;
    let points = generate(args.seed, args.n, &shape)?;
    write_text(&args.out, &samples_to_csv(&points))?;
    Ok(format!("wrote {} samples to {}\n", points.len(), args.out.display()))
}

pub fn cmd_fit(args: &FitArgs) -> Result<String> {
    let manifest = match &args.manifest {
        Some(path) => RunManifest::read(path)?,
        None => {
            let samples_path = args.samples.as_ref().expect("clap enforces --samples");
            let samples_path = std::fs::canonicalize(samples_path).map_err(|e| Error::io(samples_path, e))?;
            let samples = read_samples(&samples_path)?;
            manifest_from_args(args, &samples_path, samples.len(), args.p.expect("clap enforces --p"))
        }
    };
    let samples = read_samples(&manifest.samples)?;
    if samples.len() != manifest.n {
        return Err(Error::LengthMismatch {
            what: "samples file",
            got: samples.len(),
            expected: manifest.n,
        });
    }
    let config = manifest.fit_config();
    let result = fit(&samples, &config)?;
    write_fit_artifacts(&args.out_dir, &manifest, &samples, &result)?;

    let last = result.trace.records.last().expect("at least one iteration");
    Ok(format!(
        "iterations: {}\ncomponents: {}\neffective: {}\nlog_likelihood: {}\nsaturated_balloons: {}\nwrote artifacts to {}\n",
        result.trace.records.len(),
        result.model.len(),
        last.effective_count,
        last.log_likelihood,
        result.balloons.saturated_count(),
        args.out_dir.display()
    ))
}

/// Writes model, balloons, trace, the three overlay panels and the manifest.
pub fn write_fit_artifacts(
    dir: &Path,
    manifest: &RunManifest,
    samples: &SampleSet,
    result: &FitResult,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let names = &manifest.artifacts;
    write_model(
        &ModelFile {
            n_samples: samples.len(),
            target_p: manifest.target_p,
            model: result.model.clone(),
        },
        &dir.join(&names.model),
    )?;
    write_text(&dir.join(&names.balloons), &balloons_to_csv(samples, &result.balloons))?;
    write_text(&dir.join(&names.trace), &trace_to_csv(&result.trace))?;

    // Saturated balloons can be arbitrarily large, so only kernels and
    // components set the panel extent.
    let covs = result
        .balloons
        .kernels()
        .chain(result.model.components.iter().map(|c| c.cov));
    let spec = default_spec(samples, covs, 512, 512)?;
    write_text(&dir.join(&names.balloons_svg), &svg::balloons_svg(samples, &result.balloons, &spec))?;
    write_text(&dir.join(&names.kernels_svg), &svg::kernels_svg(samples, &result.balloons, &spec))?;
    write_text(&dir.join(&names.mixture_svg), &svg::mixture_svg(samples, &result.model, &spec))?;
    write_text(&dir.join(MANIFEST_FILE), &manifest.to_json())
}

fn explicit_spec(args: &DensityArgs) -> Result<Option<GridSpec>> {
    match &args.bbox {
        Some(b) => Ok(Some(GridSpec::new(
            Vec2::new(b[0], b[1]),
            Vec2::new(b[2], b[3]),
            args.width,
            args.height,
        )?)),
        None => Ok(None),
    }
}

pub fn cmd_density(args: &DensityArgs) -> Result<String> {
    let grid = if args.akde {
        let path = args.balloons.as_ref().expect("clap enforces --balloons");
        let (samples, field) = read_balloons(path, f64::NAN)?;
        let model = build_akde(&samples, &field)?;
        let spec = match explicit_spec(args)? {
            Some(spec) => spec,
            None => default_spec(&samples, model.kernels().iter().copied(), args.width, args.height)?,
        };
        rasterize(|x| akde_pdf(&model, x), &spec)?
    } else {
        let path = args.model.as_ref().expect("clap enforces --model");
        let file = read_model(path)?;
        let spec = match explicit_spec(args)? {
            Some(spec) => spec,
            None => {
                let extent = match &args.samples {
                    Some(p) => read_samples(p)?,
                    None => SampleSet::new(file.model.components.iter().map(|c| c.mean).collect())?,
                };
                default_spec(&extent, file.model.components.iter().map(|c| c.cov), args.width, args.height)?
            }
        };
        rasterize(|x| mixture_pdf(&file.model, x), &spec)?
    };
    write_pgm(&grid, args.gamma, &args.out)?;
    if let Some(csv) = &args.csv {
        write_text(csv, &grid_to_csv(&grid))?;
    }
    Ok(format!(
        "mass: {}\nmax: {}\nwrote {}\n",
        grid_io::grid_mass(&grid),
        grid.max_value(),
        args.out.display()
    ))
}

pub fn cmd_stats(args: &StatsArgs) -> Result<String> {
    let file = read_model(&args.model)?;
    let model = &file.model;
    let effective = effective_count(model, file.n_samples.max(1), args.threshold_rel);
    let prior_sum = model.total_weight();
    let (mut min_eig, mut max_eig) = (f64::INFINITY, 0.0f64);
    for c in &model.components {
        let e = c.cov.eigen();
        min_eig = min_eig.min(e.minor);
        max_eig = max_eig.max(e.major);
    }
    let ll = match &args.samples {
        Some(path) => Some(log_likelihood(model, &read_samples(path)?)?.value),
        None => None,
    };
    let mut out = String::new();
    if args.csv {
        out.push_str("components,effective,prior_sum,log_likelihood,min_cov_eigenvalue,max_cov_eigenvalue\n");
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            model.len(),
            effective,
            prior_sum,
            ll.map_or(String::new(), |v| v.to_string()),
            min_eig,
            max_eig
        );
    } else {
        let _ = writeln!(out, "components: {}", model.len());
        let _ = writeln!(
            out,
            "effective: {effective} (prior > {} / {})",
            args.threshold_rel, file.n_samples
        );
        let _ = writeln!(out, "prior_sum: {prior_sum}");
        if let Some(v) = ll {
            let _ = writeln!(out, "log_likelihood: {v}");
        }
        let _ = writeln!(out, "min_cov_eigenvalue: {min_eig}");
        let _ = writeln!(out, "max_cov_eigenvalue: {max_eig}");
    }
    Ok(out)
}

pub fn execute(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Density(a) => cmd_density(a),
        Command::Stats(a) => cmd_stats(a),
    }
}

/// Worker count from [`THREADS_ENV`], if set.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| Error::InvalidConfig(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

/// Runs `cli` on a pool sized by [`THREADS_ENV`].
pub fn run(cli: &Cli) -> Result<String> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap()? {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| execute(cli))
}
