//! `vidar`: simulate, run, evaluate and ablate detection sessions.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;

use vidar_core::ablation::{run_ablation, AblationMatrix, DEFAULT_SWITCHES};
use vidar_core::evalkit::{coco_metrics, format_table, EvalParams, GroundTruthFrame, ReportRow};
use vidar_core::io::session::{read_session, SessionFrame};
use vidar_core::io::{
    load_toml, read_results, write_map_dump, write_metrics, MetricsRecord, ResultsHeader, ResultsWriter,
    SessionReader,
};
use vidar_core::scale::{load_scale_db, DEFAULT_SCALE_DB};
use vidar_core::simulator::presets::{canonical_benchmark, preset};
use vidar_core::simulator::{generate_session, DetectorNoiseModel, SceneSpec, TrajectorySpec};
use vidar_core::{CategoryDict, Pipeline, PipelineConfig, ScaleDatabase};

#[derive(Parser)]
#[command(name = "vidar", version, about = "VIO-assisted detection refinement: simulate, run, eval, ablate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic ground-truthed session log.
    Simulate(SimulateArgs),
    /// Run the refinement pipeline over a session log.
    Run(RunArgs),
    /// Score a results file against the ground truth of its session.
    Eval(EvalArgs),
    /// Run the five-row module ablation over one or more sessions.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scene description (TOML).
    #[arg(long, required_unless_present = "preset")]
    scene: Option<PathBuf>,
    /// Camera trajectory (TOML).
    #[arg(long, required_unless_present = "preset")]
    trajectory: Option<PathBuf>,
    /// Detector noise model (TOML).
    #[arg(long, required_unless_present = "preset")]
    noise: Option<PathBuf>,
    /// Built-in benchmark case (living_room, office, kitchen); explicit files override its parts.
    #[arg(long)]
    preset: Option<String>,
    /// Overrides the noise model's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Scale database CSV used to validate the scene.
    #[arg(long)]
    scale_db: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    session: PathBuf,
    /// Pipeline configuration (TOML); defaults to all modules enabled.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_results: PathBuf,
    /// Final superpoint map dump.
    #[arg(long)]
    out_map: Option<PathBuf>,
    /// Overrides the configured scale database.
    #[arg(long)]
    scale_db: Option<PathBuf>,
    /// Disable orientation correction.
    #[arg(long)]
    no_oc: bool,
    /// Disable the scale filter.
    #[arg(long)]
    no_sf: bool,
    /// Disable the semantic map.
    #[arg(long)]
    no_osm: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    session: PathBuf,
    /// Metrics record output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    /// Session log; repeat to pool several sessions.
    #[arg(long, required = true)]
    session: Vec<PathBuf>,
    /// Base configuration whose map and threshold settings every row shares.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scale_db: Option<PathBuf>,
    /// Metrics records, one per row.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Run(a) => run(a),
        Command::Eval(a) => eval(a),
        Command::Ablate(a) => ablate(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Writes through a temporary file in the destination directory and renames
/// it into place only when `body` succeeds.
fn write_atomic<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<&mut File>) -> Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot create output directory entry in {}", dir.display()))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644))?;
    }
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        body(&mut w)?;
        w.flush().with_context(|| format!("writing {}", path.display()))?;
    }
    tmp.persist(path).with_context(|| format!("cannot move output into place at {}", path.display()))?;
    Ok(())
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        bail!("{what} file not found: {}", path.display());
    }
    Ok(())
}

/// Hex SHA-256 of a file's bytes.
fn file_digest(path: &Path) -> Result<String> {
    let mut file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut file, &mut hasher).with_context(|| format!("reading {}", path.display()))?;
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

fn load<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    require_file(path, what)?;
    load_toml(path).with_context(|| format!("invalid {what} file {}", path.display()))
}

fn scale_db(path: Option<&Path>, dict: &CategoryDict) -> Result<ScaleDatabase> {
    match path {
        Some(p) => {
            require_file(p, "scale database")?;
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            load_scale_db(&text, dict).with_context(|| format!("invalid scale database {}", p.display()))
        }
        None if dict == &CategoryDict::coco() => Ok(ScaleDatabase::default_coco()),
        None => {
            Ok(load_scale_db(DEFAULT_SCALE_DB, dict).context("binding the shipped scale database to the session categories")?)
        }
    }
}

/// Loads a pipeline config; a relative `scale_db_path` is taken relative to
/// the config file.
fn pipeline_config(path: Option<&Path>) -> Result<PipelineConfig> {
    let Some(path) = path else {
        return Ok(PipelineConfig::default());
    };
    let mut cfg: PipelineConfig = load(path, "pipeline config")?;
    if let (Some(db), Some(dir)) = (&cfg.scale_db_path, path.parent()) {
        if db.is_relative() {
            cfg.scale_db_path = Some(dir.join(db));
        }
    }
    cfg.validate().with_context(|| format!("invalid pipeline config {}", path.display()))?;
    Ok(cfg)
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let base = match &a.preset {
        Some(name) => Some(preset(name).with_context(|| {
            let names: Vec<&str> = canonical_benchmark().iter().map(|c| c.name).collect();
            format!("unknown preset {name:?}; available: {}", names.join(", "))
        })?),
        None => None,
    };
    let scene: SceneSpec = match (&a.scene, &base) {
        (Some(p), _) => load(p, "scene")?,
        (None, Some(b)) => b.scene.clone(),
        (None, None) => unreachable!("clap requires --scene without --preset"),
    };
    let traj: TrajectorySpec = match (&a.trajectory, &base) {
        (Some(p), _) => load(p, "trajectory")?,
        (None, Some(b)) => b.trajectory.clone(),
        (None, None) => unreachable!("clap requires --trajectory without --preset"),
    };
    let mut noise: DetectorNoiseModel = match (&a.noise, &base) {
        (Some(p), _) => load(p, "noise model")?,
        (None, Some(b)) => b.noise.clone(),
        (None, None) => unreachable!("clap requires --noise without --preset"),
    };
    if let Some(seed) = a.seed {
        noise.rng_seed = seed;
    }
    let db = scale_db(a.scale_db.as_deref(), &CategoryDict::coco())?;
    let session = generate_session(&scene, &traj, &noise, &db).context("simulation failed")?;
    write_atomic(&a.out, |w| {
        session.write_to(w).with_context(|| format!("writing {}", a.out.display()))?;
        Ok(())
    })?;
    eprintln!("wrote {} frames to {}", session.frames.len(), a.out.display());
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    let mut cfg = pipeline_config(a.config.as_deref())?;
    cfg.enable_oc &= !a.no_oc;
    cfg.enable_sf &= !a.no_sf;
    cfg.enable_osm &= !a.no_osm;
    if let Some(p) = &a.scale_db {
        cfg.scale_db_path = Some(p.clone());
    }

    require_file(&a.session, "session")?;
    let reader = SessionReader::open(&a.session).with_context(|| format!("invalid session {}", a.session.display()))?;
    let db = scale_db(cfg.scale_db_path.as_deref(), reader.categories())?;
    let mut pipeline = Pipeline::new(cfg.clone(), db).context("cannot build pipeline")?;

    let digest = file_digest(&a.session)?;
    let session_path = a.session.display().to_string();
    let mut frames = 0usize;
    write_atomic(&a.out_results, |w| {
        let header = ResultsHeader::new(&cfg).with_session_digest(digest);
        let mut writer = ResultsWriter::new(w, &header)?;
        for frame in reader {
            let frame = frame.with_context(|| format!("invalid session {session_path}"))?;
            let result = pipeline.process_frame(&frame.frame).context("pipeline error")?;
            writer.write(&result)?;
            frames += 1;
        }
        writer.finish()?;
        Ok(())
    })?;
    if let Some(map_path) = &a.out_map {
        let snapshot = pipeline.snapshot();
        write_atomic(map_path, |w| {
            write_map_dump(w, &snapshot)?;
            Ok(())
        })?;
    }
    eprintln!("processed {frames} frames ({}) into {}", cfg.row_label(), a.out_results.display());
    Ok(())
}

fn ground_truth(path: &Path, frames: &[SessionFrame]) -> Result<Vec<GroundTruthFrame>> {
    frames
        .iter()
        .map(|f| {
            f.ground_truth_frame()
                .with_context(|| format!("session {} has no ground truth for frame {}", path.display(), f.frame.frame_id))
        })
        .collect()
}

fn eval(a: EvalArgs) -> Result<()> {
    require_file(&a.results, "results")?;
    require_file(&a.session, "session")?;
    let (header, results) =
        read_results(&a.results).with_context(|| format!("invalid results file {}", a.results.display()))?;
    if let Some(expected) = &header.session_digest {
        if expected != &file_digest(&a.session)? {
            bail!(
                "results {} were computed from a different session than {} (session digest mismatch)",
                a.results.display(),
                a.session.display()
            );
        }
    }
    let (_, frames) = read_session(&a.session).with_context(|| format!("invalid session {}", a.session.display()))?;
    let gts = ground_truth(&a.session, &frames)?;
    let metrics = coco_metrics(&results, &gts, &EvalParams::default()).with_context(|| {
        format!("results {} do not match session {}", a.results.display(), a.session.display())
    })?;
    let row = ReportRow { label: header.row.clone(), metrics };
    print!("{}", format_table(std::slice::from_ref(&row)));
    if let Some(out) = &a.out {
        let record = MetricsRecord::new(&row, results.len());
        write_atomic(out, |w| {
            write_metrics(w, &[record])?;
            Ok(())
        })?;
    }
    Ok(())
}

fn ablate(a: AblateArgs) -> Result<()> {
    let base = pipeline_config(a.config.as_deref())?;
    let mut sessions = Vec::with_capacity(a.session.len());
    let mut categories = None;
    for path in &a.session {
        require_file(path, "session")?;
        let (header, frames) = read_session(path).with_context(|| format!("invalid session {}", path.display()))?;
        ground_truth(path, &frames)?;
        match &categories {
            Some(c) if c != &header.categories => {
                bail!("session {} uses a different category dictionary from the first session", path.display())
            }
            Some(_) => {}
            None => categories = Some(header.categories),
        }
        sessions.push(frames);
    }
    let dict = CategoryDict::new(categories.expect("clap requires at least one session"))
        .context("invalid session category dictionary")?;
    let db_path = a.scale_db.clone().or_else(|| base.scale_db_path.clone());
    let db = scale_db(db_path.as_deref(), &dict)?;

    let matrix = AblationMatrix::from_configs(&base, DEFAULT_SWITCHES);
    let views: Vec<&[SessionFrame]> = sessions.iter().map(Vec::as_slice).collect();
    let rows = run_ablation(&views, &matrix, &db, &EvalParams::default()).context("ablation failed")?;
    print!("{}", format_table(&rows));
    if let Some(out) = &a.out {
        let frames: usize = sessions.iter().map(Vec::len).sum();
        let records: Vec<MetricsRecord> = rows.iter().map(|r| MetricsRecord::new(r, frames)).collect();
        write_atomic(out, |w| {
            write_metrics(w, &records)?;
            Ok(())
        })?;
    }
    Ok(())
}
