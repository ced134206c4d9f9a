use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use keygraph::classifier::{load_index, save_index, train_with_report};
use keygraph::imaging::{load_image, write_atomic};
use keygraph::pipeline::{annotate, detect_frame, FrameResult, PipelineConfig, QueryParams};
use keygraph::synth::{model_quad, synth_scene, GroundTruth};
use keygraph::Error;

#[derive(Parser)]
#[command(name = "keygraph", version, about = "Detect a planar object by classifying keypoint triangles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a keygraph index from a model image.
    Train {
        model: PathBuf,
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Detect the model in a directory, glob, or single frame.
    Detect {
        frames: String,
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        min_votes: Option<usize>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        annotate: bool,
    },
    /// Composite the model into synthetic frames at random poses.
    Synth {
        model: PathBuf,
        n_poses: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

enum Failure {
    Input(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::OutOfBounds { .. } | Error::DegenerateTriangle | Error::LengthMismatch { .. } | Error::DegenerateInput(_) => {
                Failure::Internal(e.to_string())
            }
            _ => Failure::Input(e.to_string()),
        }
    }
}

type CliResult = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Train { model, index, config } => train(&model, &index, config.as_deref()),
        Command::Detect { frames, index, out, config, min_votes, tau, annotate } => {
            detect(&frames, &index, &out, config.as_deref(), min_votes, tau, annotate)
        }
        Command::Synth { model, n_poses, seed, out, config } => synth(&model, n_poses, seed, &out, config.as_deref()),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn configure_threads() -> CliResult {
    let Ok(value) = std::env::var("KEYGRAPH_THREADS") else { return Ok(()) };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Input(format!("KEYGRAPH_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::Internal(e.to_string()))
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, Failure> {
    match path {
        Some(p) => Ok(PipelineConfig::load(p)?),
        None => Ok(PipelineConfig::default()),
    }
}

fn to_json(value: &impl serde::Serialize) -> Result<Vec<u8>, Failure> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Failure::Internal(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn create_dir(dir: &Path) -> CliResult {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Input(format!("cannot create {}: {e}", dir.display())))
}

fn train(model: &Path, index_path: &Path, config: Option<&Path>) -> CliResult {
    let config = load_config(config)?;
    let image = load_image(model)?;
    let (index, report) = train_with_report(&image, &config.index_params())?;
    save_index(&index, index_path)?;
    let (max, median) = index.occupancy();
    println!("keypoints: {}", report.keypoints);
    println!("keygraphs: {} of {} triangles", report.keygraphs, report.triangles_examined);
    println!("buckets:   {} occupied, max {max}, median {median}", index.buckets().len());
    println!("index:     {}", index_path.display());
    Ok(())
}

/// Frame files named by `source`: every `.ppm` in a directory, a single
/// file, or the matches of a glob pattern.
fn list_frames(source: &str) -> Result<Vec<PathBuf>, Failure> {
    let path = Path::new(source);
    let mut frames: Vec<PathBuf> = if path.is_dir() {
        std::fs::read_dir(path)
            .map_err(|e| Failure::Input(format!("cannot read {source}: {e}")))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|ext| ext == "ppm"))
            .filter(|p| !p.to_string_lossy().ends_with(".annotated.ppm"))
            .collect()
    } else if path.is_file() {
        vec![path.to_path_buf()]
    } else {
        glob::glob(source)
            .map_err(|e| Failure::Input(format!("invalid frame pattern {source:?}: {e}")))?
            .filter_map(|p| p.ok())
            .filter(|p| p.is_file())
            .collect()
    };
    frames.sort();
    if frames.is_empty() {
        return Err(Failure::Input(format!("no frames found at {source}")));
    }
    Ok(frames)
}

fn frame_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

#[allow(clippy::too_many_arguments)]
fn detect(
    frames: &str,
    index_path: &Path,
    out: &Path,
    config: Option<&Path>,
    min_votes: Option<usize>,
    tau: Option<f64>,
    annotate_flag: bool,
) -> CliResult {
    let mut config = load_config(config)?;
    if let Some(v) = min_votes {
        config.min_votes = v;
    }
    if let Some(t) = tau {
        config.tau = t;
    }
    config.annotate |= annotate_flag;
    config.validate()?;
    let frames = list_frames(frames)?;
    let index = load_index(index_path)?;
    create_dir(out)?;
    let query = QueryParams::from(&config);
    let model_size = index.model_size();

    let results: Vec<Result<FrameResult, Failure>> = frames
        .par_iter()
        .map(|path| {
            let name = frame_name(path);
            let outcome = load_image(path).and_then(|img| detect_frame(&index, &img, &query).map(|o| (img, o)));
            let result = match &outcome {
                Ok((_, o)) => FrameResult::from_outcome(name.clone(), o, model_size),
                Err(e) => FrameResult::failed(name.clone(), e),
            };
            write_atomic(&out.join(format!("{name}.json")), &to_json(&result)?)?;
            if let (true, Ok((img, o))) = (config.annotate, &outcome) {
                annotate(img, o, model_size).save_ppm(out.join(format!("{name}.annotated.ppm")))?;
            }
            Ok(result)
        })
        .collect();

    println!("{:<24} {:>5} {:>6} {:>8} {:>9}", "frame", "found", "votes", "inliers", "ms");
    let (mut found, mut timed, mut total_ms) = (0, 0, 0.0);
    for result in results {
        let r = result?;
        match (&r.detection, &r.timings_ms) {
            (Some(d), Some(t)) => {
                println!("{:<24} {:>5} {:>6} {:>8} {:>9.1}", r.frame, if d.found { "yes" } else { "no" }, d.votes, d.inlier_count, t.total);
                found += d.found as usize;
                timed += 1;
                total_ms += t.total;
            }
            _ => println!("{:<24} error: {}", r.frame, r.error.as_deref().unwrap_or("unknown")),
        }
    }
    let mean = if timed > 0 { total_ms / timed as f64 } else { 0.0 };
    println!("frames: {}  detections: {found}  mean ms/frame: {mean:.1}", frames.len());
    Ok(())
}

fn synth(model: &Path, n_poses: usize, seed: u64, out: &Path, config: Option<&Path>) -> CliResult {
    let config = load_config(config)?;
    let image = load_image(model)?;
    let scene = config.scene();
    create_dir(out)?;
    let model_size = (image.width(), image.height());
    for i in 0..n_poses {
        let (frame, pose) = synth_scene(&image, &scene, seed, i as u64).ok_or_else(|| {
            Failure::Input(format!(
                "a {}x{} model does not fit a {}x{} frame at the configured scales",
                model_size.0, model_size.1, scene.frame_width, scene.frame_height
            ))
        })?;
        let name = format!("frame_{i:04}");
        frame.save_ppm(out.join(format!("{name}.ppm")))?;
        let truth = GroundTruth {
            frame: format!("{name}.ppm"),
            width: frame.width(),
            height: frame.height(),
            model_size: [model_size.0, model_size.1],
            pose,
            quad: model_quad(&pose, model_size).map(|p| [p.x, p.y]),
        };
        write_atomic(&out.join(format!("{name}.truth.json")), &to_json(&truth)?)?;
    }
    println!("wrote {n_poses} frames to {}", out.display());
    Ok(())
}
