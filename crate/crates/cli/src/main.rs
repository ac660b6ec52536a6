//! `covo` command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage and validation errors, 2 for
//! runtime failures (I/O, provider, tracking, evaluation).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use covo::cmap::{cmap_path, emap_path, write_cmap, write_error_maps};
use covo::config::{Mode, PipelineConfig, ProviderConfig};
use covo::dataset::{detect_format, load_all_frames, load_dataset, write_sequence, DatasetIndex};
use covo::metrics::{ate_rmse, rpe_trans_rmse};
use covo::pipeline::{run_frames, run_sequence, with_mode, FrameReport, PipelineEvent, SequenceResult};
use covo::provider::{ConsistencyProvider, GroundTruthSource, OracleConfig, OracleProvider};
use covo::quality::{QualityMap, QualityPrior};
use covo::suite::make_provider;
use covo::synth::{render_sequence, SceneSpec};
use covo::trajectory::{read_trajectory, write_trajectory, Trajectory};

#[derive(Parser)]
#[command(name = "covo", version, about = "Consistency-weighted direct RGB-D visual odometry")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic scene description to a dataset directory.
    Synth {
        /// Scene description (TOML).
        #[arg(long)]
        spec: PathBuf,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the scene description.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Track a sequence and write its trajectory and a run report.
    Track {
        /// Dataset directory (TUM layout or synthetic manifest).
        #[arg(long)]
        data: PathBuf,
        /// Pipeline configuration (TOML) [default: built-in defaults].
        #[arg(long)]
        config: Option<PathBuf>,
        /// baseline, select or full [default: from the config].
        #[arg(long)]
        mode: Option<Mode>,
        /// oracle, constant or file:<dir> [default: from the config].
        #[arg(long)]
        provider: Option<ProviderConfig>,
        /// Overrides the selection seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Output trajectory (TUM format).
        #[arg(long)]
        out: PathBuf,
        /// Run report [default: <out>.report.txt].
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Compare an estimated trajectory with a reference.
    Eval {
        /// Estimated trajectory (TUM format).
        #[arg(long)]
        est: PathBuf,
        /// Reference trajectory (TUM format), matched by timestamp.
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Frame offset for the relative pose error.
        #[arg(long, default_value_t = 1)]
        rpe_delta: usize,
    },
    /// Track a sequence in all three modes and print a mode/ATE/RPE table.
    Ablate {
        /// Dataset directory with groundtruth.txt.
        #[arg(long)]
        data: PathBuf,
        /// Pipeline configuration (TOML) [default: built-in defaults].
        #[arg(long)]
        config: Option<PathBuf>,
        /// oracle, constant or file:<dir> [default: from the config].
        #[arg(long)]
        provider: Option<ProviderConfig>,
        /// Overrides the selection seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write the quality prior of one frame as 16-bit PGM images.
    PriorDump {
        /// Dataset directory.
        #[arg(long)]
        data: PathBuf,
        /// oracle, constant or file:<dir>.
        #[arg(long, default_value = "oracle")]
        provider: ProviderConfig,
        /// Frame index.
        #[arg(long)]
        frame: usize,
        /// Output directory for q_photo_<frame>.pgm and q_geo_<frame>.pgm.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write oracle log-covariance (.cmap) and error (.emap) maps for every
    /// adjacent pair of a sequence with ground truth.
    OracleExport {
        /// Dataset directory with ground-truth poses and ego_flow/.
        #[arg(long)]
        data: PathBuf,
        /// Output directory for <j>_<i>.cmap and <j>_<i>.emap.
        #[arg(long)]
        out: PathBuf,
        /// Error floor inside the logarithm.
        #[arg(long, default_value_t = OracleConfig::default().floor)]
        floor: f64,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<covo::Error> for Failure {
    fn from(e: covo::Error) -> Self {
        match e {
            covo::Error::SpecValidation(_) | covo::Error::Config(_) | covo::Error::InvalidArgument(_) => {
                Failure::usage(e.to_string())
            }
            _ => Failure::runtime(e.to_string()),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Synth { spec, out, seed } => synth(&spec, &out, seed),
        Command::Track {
            data,
            config,
            mode,
            provider,
            seed,
            out,
            report,
        } => {
            let config = load_config(config.as_deref(), mode, provider, seed)?;
            let report = report.unwrap_or_else(|| {
                let mut name = out.clone().into_os_string();
                name.push(".report.txt");
                PathBuf::from(name)
            });
            track(&data, &config, &out, &report)
        }
        Command::Eval {
            est,
            reference,
            rpe_delta,
        } => eval(&est, &reference, rpe_delta),
        Command::Ablate {
            data,
            config,
            provider,
            seed,
        } => ablate(&data, &load_config(config.as_deref(), None, provider, seed)?),
        Command::PriorDump {
            data,
            provider,
            frame,
            out,
        } => prior_dump(&data, &provider, frame, &out),
        Command::OracleExport { data, out, floor } => oracle_export(&data, &out, floor),
    }
}

fn load_config(
    path: Option<&Path>,
    mode: Option<Mode>,
    provider: Option<ProviderConfig>,
    seed: Option<u64>,
) -> CliResult<PipelineConfig> {
    let mut config = match path {
        Some(p) => PipelineConfig::load(p).map_err(|e| Failure::usage(e.to_string()))?,
        None => PipelineConfig::default(),
    };
    if let Some(m) = mode {
        config.mode = m;
    }
    if let Some(p) = provider {
        config.provider = p;
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate()?;
    Ok(config)
}

fn open_dataset(dir: &Path) -> CliResult<DatasetIndex> {
    Ok(load_dataset(dir, detect_format(dir))?)
}

fn provider_for(config: &ProviderConfig, dataset: &DatasetIndex) -> CliResult<Box<dyn ConsistencyProvider>> {
    Ok(make_provider(config, || {
        Ok(Box::new(dataset.ground_truth()?) as Box<dyn GroundTruthSource>)
    })?)
}

fn create_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| Failure::runtime(format!("{}: {e}", dir.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult {
    fs::write(path, bytes).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))
}

fn synth(spec_path: &Path, out: &Path, seed: Option<u64>) -> CliResult {
    let text = fs::read_to_string(spec_path).map_err(|e| Failure::usage(format!("{}: {e}", spec_path.display())))?;
    let mut spec = SceneSpec::from_toml(&text)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let seq = render_sequence(&spec)?;
    create_dir(out)?;
    write_sequence(out, &seq)?;
    write_file(&out.join("scene.toml"), spec.to_toml().as_bytes())?;
    println!("wrote {} frames to {}", seq.frames.len(), out.display());
    Ok(())
}

fn describe(event: &PipelineEvent) -> String {
    match event {
        PipelineEvent::KeyframeCreated { id, frame, support } => {
            format!("keyframe {id} created from frame {frame} with {support} points")
        }
        PipelineEvent::KeyframeEvicted { id } => format!("keyframe {id} evicted"),
        PipelineEvent::PriorFinalized { keyframe } => format!("keyframe {keyframe} prior finalized"),
        PipelineEvent::ProviderFallback { j, i, message } => format!("provider fallback on ({j}, {i}): {message}"),
        PipelineEvent::TrackingFallback { frame, message } => format!("tracking fallback on frame {frame}: {message}"),
    }
}

fn report_line(r: &FrameReport) -> String {
    let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
    let iterations = if r.iterations.is_empty() {
        "-".to_string()
    } else {
        r.iterations.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",")
    };
    let events: Vec<String> = r.events.iter().map(describe).collect();
    format!(
        "{}\t{:.6}\t{}\t{}\t{}\t{}\t{}\t{}",
        r.index,
        r.timestamp,
        opt(r.host_frame.map(|h| h.to_string())),
        u8::from(r.new_keyframe),
        iterations,
        opt(r.valid_fraction.map(|v| format!("{v:.4}"))),
        opt(r.normal_equations.as_ref().map(|n| format!("{:.6e}", n.mean_energy()))),
        events.join("; "),
    )
}

fn render_report(config: &PipelineConfig, result: &SequenceResult) -> String {
    let mut out = String::new();
    let provider = match &config.provider {
        ProviderConfig::Constant => "constant".to_string(),
        ProviderConfig::Oracle { .. } => "oracle".to_string(),
        ProviderConfig::File { dir } => format!("file:{}", dir.display()),
    };
    let _ = writeln!(out, "# mode {}", config.mode);
    let _ = writeln!(out, "# provider {provider}");
    let _ = writeln!(out, "# frames {}", result.reports.len());
    let _ = writeln!(out, "# keyframes {}", result.keyframe_count());
    let _ = writeln!(
        out,
        "# frame\ttimestamp\thost\tkeyframe\titerations\tvalid_fraction\tmean_energy\tevents"
    );
    for r in &result.reports {
        let _ = writeln!(out, "{}", report_line(r));
    }
    out
}

fn track(data: &Path, config: &PipelineConfig, out: &Path, report: &Path) -> CliResult {
    let dataset = open_dataset(data)?;
    let provider = provider_for(&config.provider, &dataset)?;
    let result = run_sequence(&dataset, config, provider)?;
    write_trajectory(out, &result.trajectory)?;
    write_file(report, render_report(config, &result).as_bytes())?;
    println!(
        "tracked {} frames, {} keyframes, mode {}",
        result.reports.len(),
        result.keyframe_count(),
        config.mode
    );
    Ok(())
}

fn eval(est: &Path, reference: &Path, delta: usize) -> CliResult {
    let est = read_trajectory(est)?;
    let reference = read_trajectory(reference)?;
    let ate = ate_rmse(&est, &reference)?;
    let rpe = rpe_trans_rmse(&est, &reference, delta)?;
    println!("ATE_RMSE {ate:.12}");
    println!("RPE_T_RMSE {rpe:.12}");
    Ok(())
}

fn ablate(data: &Path, config: &PipelineConfig) -> CliResult {
    let dataset = open_dataset(data)?;
    let reference = read_trajectory(&dataset.ground_truth_path())?;
    let frames = load_all_frames(&dataset)?;
    let runs: Vec<CliResult<Trajectory>> = std::thread::scope(|s| {
        let handles: Vec<_> = Mode::ALL
            .iter()
            .map(|&mode| {
                let (dataset, frames) = (&dataset, &frames);
                s.spawn(move || -> CliResult<Trajectory> {
                    let config = with_mode(config, mode);
                    let provider = provider_for(&config.provider, dataset)?;
                    Ok(run_frames(frames, &config, provider)?.trajectory)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(Failure::runtime("ablation run panicked")))
            })
            .collect()
    });
    let mut table = String::new();
    for (mode, run) in Mode::ALL.iter().zip(runs) {
        let trajectory = run?;
        let ate = ate_rmse(&trajectory, &reference)?;
        let rpe = rpe_trans_rmse(&trajectory, &reference, 1)?;
        let _ = writeln!(table, "{mode}\t{ate:.9}\t{rpe:.9}");
    }
    print!("{table}");
    Ok(())
}

fn write_pgm16(path: &Path, q: &QualityMap) -> CliResult {
    let (w, h) = q.dims();
    let mut bytes = format!("P5\n{w} {h}\n65535\n").into_bytes();
    for &v in q.values.as_slice() {
        let level = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        bytes.extend_from_slice(&level.to_be_bytes());
    }
    write_file(path, &bytes)
}

/// Prior of frame `t` as the pipeline would build it: the pair ending at `t`
/// (or the first pair for frame 0), fused with the pair starting at `t`.
fn frame_prior(dataset: &DatasetIndex, provider: &mut dyn ConsistencyProvider, t: usize) -> CliResult<QualityPrior> {
    let n = dataset.len();
    if n < 2 {
        return Err(Failure::usage("a prior needs at least two frames"));
    }
    if t >= n {
        return Err(Failure::usage(format!("frame {t} out of range ({n} frames)")));
    }
    let mut pair = |j: usize, i: usize| -> CliResult<(QualityMap, QualityMap)> {
        let (a, b) = (dataset.load_frame(j)?, dataset.load_frame(i)?);
        Ok(provider.get_uncertainty(&a, &b)?.qualities()?)
    };
    let (first_j, first_i) = if t == 0 { (0, 1) } else { (t - 1, t) };
    let (photo, geo) = pair(first_j, first_i)?;
    let mut prior = QualityPrior::provisional(photo, geo, t)?;
    if t > 0 && t + 1 < n {
        let (photo, geo) = pair(t, t + 1)?;
        prior.finalize(&photo, &geo)?;
    }
    Ok(prior)
}

fn prior_dump(data: &Path, provider: &ProviderConfig, t: usize, out: &Path) -> CliResult {
    let dataset = open_dataset(data)?;
    let mut provider = provider_for(provider, &dataset)?;
    let prior = frame_prior(&dataset, provider.as_mut(), t)?;
    create_dir(out)?;
    write_pgm16(&out.join(format!("q_photo_{t}.pgm")), &prior.photo)?;
    write_pgm16(&out.join(format!("q_geo_{t}.pgm")), &prior.geo)?;
    println!("wrote prior of frame {t} to {}", out.display());
    Ok(())
}

fn oracle_export(data: &Path, out: &Path, floor: f64) -> CliResult {
    if floor.is_nan() || floor <= 0.0 {
        return Err(Failure::usage("--floor must be positive"));
    }
    let dataset = open_dataset(data)?;
    let mut oracle = OracleProvider::new(
        Box::new(dataset.ground_truth()?),
        OracleConfig {
            floor,
            ..OracleConfig::default()
        },
    );
    create_dir(out)?;
    let mut previous = None;
    for n in 0..dataset.len() {
        let frame = dataset.load_frame(n)?;
        if let Some(prev) = previous {
            let (photo, geo) = oracle.error_maps(&prev, &frame)?;
            write_error_maps(&emap_path(out, n - 1, n), &photo, &geo)?;
            write_cmap(&cmap_path(out, n - 1, n), &oracle.get_uncertainty(&prev, &frame)?)?;
        }
        previous = Some(frame);
    }
    println!(
        "exported {} pairs to {}",
        dataset.len().saturating_sub(1),
        out.display()
    );
    Ok(())
}
