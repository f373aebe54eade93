//! `wsfdk` subcommands. Every command reads its geometry from one `geo.json`
//! and maps failures onto exit codes 1 (usage), 2 (data) and 3 (numeric).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use wsfdk_core::fdk::classical_fdk;
use wsfdk_core::metrics::{slice, view_metrics, View};
use wsfdk_core::model::{FdkModel, ModelOptions};
use wsfdk_core::projector::{forward_project, DistanceWeight};
use wsfdk_core::sim::{add_poisson_noise, phantom_volume, shepp3d, shepp3d_jittered, NoiseConfig};
use wsfdk_core::training::{train_with, Sample, TrainConfig};
use wsfdk_core::{Geometry, ProjectionStack, Volume};

use crate::container::{self, ContainerError};
use crate::error::CliError;
use crate::formats;

#[derive(Debug, Parser)]
#[command(
    name = "wsfdk",
    version,
    about = "Cone-beam CT reconstruction with trainable wavelet-sparse FDK"
)]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Fixed reduction order. Always in effect; accepted for scripts.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write an ellipsoid phantom volume.
    Phantom(PhantomArgs),
    /// Forward-project a volume, optionally with Poisson noise.
    Project(ProjectArgs),
    /// Classical FDK, or the trainable model with --model.
    Reconstruct(ReconstructArgs),
    /// Train weighting and filter coefficients on paired data.
    Train(TrainArgs),
    /// PSNR/SSIM on the central slices and the whole volume.
    Eval(EvalArgs),
    /// Write one slice as a 16-bit PGM.
    ExportSlice(ExportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    Shepp3d,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["preset", "spec"])))]
pub struct PhantomArgs {
    #[arg(long)]
    pub geom: PathBuf,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// JSON list of ellipsoids (`center`, `semi_axes`, `euler_z_rotation`, `density`).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Randomly perturb the preset with this seed.
    #[arg(long, requires = "preset")]
    pub jitter: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long)]
    pub geom: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Incident photons per detector cell; omit for noiseless data.
    #[arg(long)]
    pub noise_i0: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub geom: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Trained or initial checkpoint; without it, classical FDK runs.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Backproject without the distance weight (classical only).
    #[arg(long, conflicts_with = "model")]
    pub plain_backprojection: bool,
    /// Zero-pad rows to twice their length before filtering (classical only).
    #[arg(long, conflicts_with = "model")]
    pub pad2x: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub geom: PathBuf,
    /// Directory of `<name>_proj.cbct` / `<name>_gt.cbct` pairs.
    #[arg(long)]
    pub train_dir: PathBuf,
    #[arg(long)]
    pub val_dir: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Start from this checkpoint instead of the classical initialization.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Train a model that backprojects without the distance weight.
    #[arg(long, conflicts_with = "init")]
    pub plain_backprojection: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub log: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub recon: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SliceView {
    Axial,
    Sagittal,
    Coronal,
}

impl From<SliceView> for View {
    fn from(v: SliceView) -> View {
        match v {
            SliceView::Axial => View::Axial,
            SliceView::Sagittal => View::Sagittal,
            SliceView::Coronal => View::Coronal,
        }
    }
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub view: SliceView,
    /// Slice index; defaults to the central slice.
    #[arg(long)]
    pub index: Option<usize>,
    /// Display window `lo,hi`; defaults to the slice's min–max.
    #[arg(long, value_parser = formats::parse_window, allow_hyphen_values = true)]
    pub window: Option<(f64, f64)>,
    #[arg(long)]
    pub out: PathBuf,
}

fn with_path<T>(path: &Path, r: Result<T, ContainerError>) -> Result<T, CliError> {
    r.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn read_volume(path: &Path) -> Result<Volume, CliError> {
    with_path(path, container::read_volume(path))
}

fn read_projections(path: &Path) -> Result<ProjectionStack, CliError> {
    with_path(path, container::read_projections(path))
}

fn check_volume(path: &Path, vol: &Volume, geom: &Geometry) -> Result<(), CliError> {
    if !vol.matches(geom) {
        return Err(CliError::Data(format!(
            "{}: volume {:?} at {:?} mm does not match the geometry ({:?} at {:?} mm)",
            path.display(),
            vol.shape(),
            vol.spacing(),
            geom.vol_shape,
            geom.vol_spacing
        )));
    }
    Ok(())
}

fn check_stack(path: &Path, stack: &ProjectionStack, geom: &Geometry) -> Result<(), CliError> {
    if stack.geometry() != geom {
        return Err(CliError::Data(format!(
            "{}: projections were acquired with a different geometry",
            path.display()
        )));
    }
    Ok(())
}

fn cmd_phantom(a: &PhantomArgs) -> Result<String, CliError> {
    let geom = formats::load_geometry(&a.geom)?;
    let specs = match (&a.spec, a.jitter) {
        (Some(path), _) => formats::load_specs(path)?,
        (None, Some(seed)) => shepp3d_jittered(&geom, seed),
        (None, None) => shepp3d(&geom),
    };
    let vol = phantom_volume(&geom, &specs)?;
    with_path(&a.out, container::write_volume(&a.out, &vol))?;
    Ok(format!(
        "wrote {} ({} ellipsoids)",
        a.out.display(),
        specs.len()
    ))
}

fn cmd_project(a: &ProjectArgs) -> Result<String, CliError> {
    let geom = formats::load_geometry(&a.geom)?;
    let vol = read_volume(&a.input)?;
    check_volume(&a.input, &vol, &geom)?;
    let mut stack = forward_project(&geom, &vol)?;
    if let Some(i0) = a.noise_i0 {
        stack = add_poisson_noise(&stack, &NoiseConfig { i0, seed: a.seed })?;
    }
    with_path(&a.out, container::write_projections(&a.out, &stack))?;
    Ok(format!("wrote {}", a.out.display()))
}

fn cmd_reconstruct(a: &ReconstructArgs) -> Result<String, CliError> {
    let geom = formats::load_geometry(&a.geom)?;
    let stack = read_projections(&a.input)?;
    check_stack(&a.input, &stack, &geom)?;
    let rec = match &a.model {
        Some(path) => {
            let model = with_path(path, container::read_model(path))?;
            if model.geom != geom {
                return Err(CliError::Data(format!(
                    "{}: checkpoint geometry differs from {}",
                    path.display(),
                    a.geom.display()
                )));
            }
            model.forward(&stack)?
        }
        None => classical_fdk(
            &geom,
            &stack,
            a.pad2x,
            DistanceWeight::from_plain_flag(a.plain_backprojection),
        )?,
    };
    if let Some(i) = rec.output.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(CliError::Numeric(format!("non-finite voxel at index {i}")));
    }
    with_path(&a.out, container::write_volume(&a.out, &rec.output))?;
    Ok(format!("wrote {}", a.out.display()))
}

/// Pairs `<name>_proj.cbct` with `<name>_gt.cbct`, sorted by name. Other
/// files are ignored.
pub fn load_pairs(dir: &Path, geom: &Geometry) -> Result<Vec<(String, Sample)>, CliError> {
    let entries =
        fs::read_dir(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    let mut pairs: BTreeMap<String, (Option<PathBuf>, Option<PathBuf>)> = BTreeMap::new();
    for entry in entries {
        let path = entry
            .map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?
            .path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(base) = name.strip_suffix("_proj.cbct") {
            pairs.entry(base.to_string()).or_default().0 = Some(path.clone());
        } else if let Some(base) = name.strip_suffix("_gt.cbct") {
            pairs.entry(base.to_string()).or_default().1 = Some(path.clone());
        }
    }
    if pairs.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no *_proj.cbct/*_gt.cbct pairs",
            dir.display()
        )));
    }
    let mut out = Vec::with_capacity(pairs.len());
    for (name, files) in pairs {
        let (proj, gt) = match files {
            (Some(p), Some(g)) => (p, g),
            (Some(p), None) => {
                return Err(CliError::Data(format!(
                    "{}: no matching {name}_gt.cbct",
                    p.display()
                )))
            }
            (None, Some(g)) => {
                return Err(CliError::Data(format!(
                    "{}: no matching {name}_proj.cbct",
                    g.display()
                )))
            }
            (None, None) => unreachable!(),
        };
        let stack = read_projections(&proj)?;
        check_stack(&proj, &stack, geom)?;
        let target = read_volume(&gt)?;
        check_volume(&gt, &target, geom)?;
        out.push((name, Sample { stack, target }));
    }
    Ok(out)
}

fn cmd_train(a: &TrainArgs) -> Result<String, CliError> {
    let geom = formats::load_geometry(&a.geom)?;
    let config = TrainConfig {
        epochs: a.epochs,
        learning_rate: a.lr,
        seed: a.seed,
        ..TrainConfig::default()
    };
    config
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let model = match &a.init {
        Some(path) => {
            let m = with_path(path, container::read_model(path))?;
            if m.geom != geom {
                return Err(CliError::Data(format!(
                    "{}: checkpoint geometry differs",
                    path.display()
                )));
            }
            m
        }
        None => FdkModel::init_from_classical(
            &geom,
            ModelOptions {
                plain_backprojection: a.plain_backprojection,
            },
        )?,
    };
    let strip = |v: Vec<(String, Sample)>| v.into_iter().map(|(_, s)| s).collect::<Vec<_>>();
    let train_set = strip(load_pairs(&a.train_dir, &geom)?);
    let val_set = strip(load_pairs(&a.val_dir, &geom)?);
    let outcome = train_with(&model, &train_set, &val_set, &config, |epoch, val| {
        if let Some(v) = val {
            eprintln!("epoch {epoch:>4}  val_loss {v:.6e}");
        }
    })?;
    with_path(&a.out, container::write_model(&a.out, &outcome.model))?;
    formats::write_text(&a.log, &formats::log_csv(&outcome.log))?;
    Ok(format!(
        "wrote {} (best epoch {}) and {}",
        a.out.display(),
        outcome.best_epoch,
        a.log.display()
    ))
}

fn cmd_eval(a: &EvalArgs) -> Result<String, CliError> {
    let recon = read_volume(&a.recon)?;
    let gt = read_volume(&a.gt)?;
    if recon.shape() != gt.shape() {
        return Err(CliError::Data(format!(
            "shape mismatch: {} is {:?}, {} is {:?}",
            a.recon.display(),
            recon.shape(),
            a.gt.display(),
            gt.shape()
        )));
    }
    let csv = formats::metrics_csv(&view_metrics(&recon, &gt)?);
    formats::write_text(&a.out, &csv)?;
    Ok(csv.trim_end().to_string())
}

fn cmd_export(a: &ExportArgs) -> Result<String, CliError> {
    let vol = read_volume(&a.input)?;
    let view = View::from(a.view);
    let depth = view.depth(&vol);
    let index = a.index.unwrap_or(depth / 2);
    if index >= depth {
        return Err(CliError::Data(format!(
            "{} index {index} out of range (0..{depth})",
            view.as_str()
        )));
    }
    let img = slice(&vol, view, index)?;
    let bytes = formats::encode_pgm(&img, a.window);
    fs::write(&a.out, bytes).map_err(|e| CliError::Data(format!("{}: {e}", a.out.display())))?;
    Ok(format!("wrote {}", a.out.display()))
}

pub fn run(cli: &Cli) -> Result<String, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // Fails only if a pool already exists, which keeps its size.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match &cli.command {
        Command::Phantom(a) => cmd_phantom(a),
        Command::Project(a) => cmd_project(a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::ExportSlice(a) => cmd_export(a),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(msg) => {
            println!("{msg}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
