use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use limfb::eval::{emit_csv, parse_csv, write_csv, write_raw_dump, Experiment, ExperimentConfig, PrecoderKind, RHO};
use limfb::feedback::{
    build_dft_codebook, build_pilot_matrix, gmm_feedback_index, oversampled_dictionary, sample_moments,
    select_codebook_index, GmmEstimator, LmmseEstimator, OmpEstimator, OmpStop,
};
use limfb::gmm::{fit_em, load_model, project_to_observation, save_model, Constraint, EmOptions};
use limfb::rng::{complex_normal_vector, derived_rng, stream};
use limfb::scene::{generate_channels, load_dataset, normalize_dataset, save_dataset, ArrayGeometry, ChannelDataset};
use limfb::{Error, Result};

#[derive(Parser)]
#[command(name = "limfb", version, about = "Limited-feedback multi-user MIMO simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Desk,
    Paper,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConstraintArg {
    Full,
    Toeplitz,
}

#[derive(Subcommand)]
enum Command {
    /// Draw channels from the synthetic scene and write a dataset file.
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "desk")]
        profile: Profile,
        #[arg(long)]
        count: usize,
        /// Scene seed; overrides the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Skip this many leading samples, e.g. to draw an evaluation set disjoint from a training set.
        #[arg(long, default_value_t = 0)]
        offset: usize,
        #[arg(long)]
        normalize: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a mixture model with 2^B components.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        bits: u32,
        #[arg(long, value_enum, default_value = "full")]
        constraint: ConstraintArg,
        /// Vertical array size; needed for the Toeplitz constraint.
        #[arg(long, default_value_t = 1)]
        n_vert: usize,
        #[arg(long, default_value_t = 100)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute feedback indices for the channels of a dataset.
    Feedback {
        #[arg(long)]
        model: Option<PathBuf>,
        /// gmm, tgmm, dft:gmm, dft:tgmm, dft:lmmse or dft:omp
        #[arg(long)]
        scheme: String,
        #[arg(long)]
        pilots: usize,
        #[arg(long, default_value_t = 10.0)]
        snr_db: f64,
        #[arg(long)]
        data: PathBuf,
        /// Array layout for codebook schemes without a model.
        #[arg(long)]
        n_vert: Option<usize>,
        #[arg(long)]
        bits: Option<u32>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a Monte-Carlo sweep and write the CSV.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "desk")]
        profile: Profile,
        #[arg(long)]
        axis: Option<String>,
        /// Comma-separated axis values.
        #[arg(long)]
        values: Option<String>,
        #[arg(long, value_enum)]
        precoder: Option<PrecoderArg>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-constellation rates: dataset container plus `<path>.jsonl`.
        #[arg(long)]
        dump_raw: Option<PathBuf>,
        /// SWMMSE trajectory of the first constellation as CSV (iteration, sum-rate, power).
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Print a sweep CSV as an aligned table.
    Report {
        #[arg(long)]
        csv: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecoderArg {
    Rci,
    Swmmse,
}

fn base_config(config: Option<PathBuf>, profile: Profile) -> Result<ExperimentConfig> {
    match (config, profile) {
        (Some(path), _) => ExperimentConfig::load(path),
        (None, Profile::Desk) => Ok(ExperimentConfig::desk()),
        (None, Profile::Paper) => Ok(ExperimentConfig::paper()),
    }
}

fn generate(cfg: ExperimentConfig, count: usize, offset: usize, normalize: bool, out: PathBuf) -> Result<()> {
    let scene = cfg.scene()?;
    let all = generate_channels(&scene, count + offset)?;
    let (_, mut ds) = all.split_at(offset);
    if normalize {
        ds = normalize_dataset(&ds)?;
    }
    save_dataset(&ds, &out)?;
    println!("wrote {} channels of dimension {} to {}", ds.len(), ds.dim(), out.display());
    Ok(())
}

fn train(data: PathBuf, bits: u32, constraint: Constraint, n_vert: usize, iters: usize, seed: u64, out: PathBuf) -> Result<()> {
    let mut ds = load_dataset(&data)?;
    if !ds.normalized {
        ds = normalize_dataset(&ds)?;
    }
    let n = ds.dim();
    if n_vert == 0 || n % n_vert != 0 {
        return Err(Error::Config(format!("n_vert = {n_vert} does not divide N = {n}")));
    }
    let opts = EmOptions { max_iters: iters, seed, layout: Some((n_vert, n / n_vert)), ..EmOptions::default() };
    let fit = fit_em(&ds, 1usize << bits, constraint, &opts)?;
    save_model(&fit.model, &out)?;
    let r = &fit.report;
    println!(
        "trained {} model: K = {}, {} iterations, converged = {}, mean log-likelihood {:.6}, {} reseeds",
        constraint.name(),
        fit.model.num_components(),
        r.iterations,
        r.converged,
        r.loglik.last().copied().unwrap_or(f64::NAN),
        r.reseeded.len()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn feedback(
    model: Option<PathBuf>,
    scheme: &str,
    pilots: usize,
    snr_db: f64,
    data: PathBuf,
    n_vert: Option<usize>,
    bits: Option<u32>,
    seed: u64,
) -> Result<()> {
    let mut ds: ChannelDataset = load_dataset(&data)?;
    if !ds.normalized {
        ds = normalize_dataset(&ds)?;
    }
    let model = model.map(load_model).transpose()?;
    let n = ds.dim();
    let n_vert = n_vert.or(model.as_ref().map(|m| m.n_vert())).unwrap_or(1);
    if !n.is_multiple_of(n_vert) {
        return Err(Error::Config(format!("n_vert = {n_vert} does not divide N = {n}")));
    }
    let geometry = ArrayGeometry::new(n_vert, n / n_vert, 1.0, 0.5)?;
    let setup = build_pilot_matrix(&geometry, pilots, RHO)?.with_snr_db(snr_db);
    let bits = bits.or(model.as_ref().and_then(|m| m.bits()).map(u32::from));
    let needs_model = || model.as_ref().ok_or_else(|| Error::Config(format!("scheme {scheme} needs --model")));
    let mut noise = derived_rng(seed, stream::PILOT_NOISE, 0);
    let mut out = BufWriter::new(std::io::stdout().lock());
    writeln!(out, "sample,index")?;
    let observe = |h, rng: &mut _| setup.observe_with(h, &complex_normal_vector(rng, pilots));
    match scheme {
        "gmm" | "tgmm" => {
            let obs = project_to_observation(needs_model()?, &setup)?;
            for (i, h) in ds.samples.iter().enumerate() {
                let r = gmm_feedback_index(&obs, &observe(h, &mut noise))?;
                writeln!(out, "{i},{}", r.index)?;
            }
        }
        "dft:gmm" | "dft:tgmm" | "dft:lmmse" | "dft:omp" => {
            let bits = bits.ok_or_else(|| Error::Config("codebook schemes need --bits or --model".into()))?;
            let codebook = build_dft_codebook(&geometry, bits)?;
            let estimate: Box<dyn Fn(&limfb::linalg::CVector) -> Result<limfb::linalg::CVector>> = match scheme {
                "dft:lmmse" => {
                    let (mean, cov) = sample_moments(&ds)?;
                    let e = LmmseEstimator::new(&mean, &cov, &setup)?;
                    Box::new(move |y| e.estimate(y))
                }
                "dft:omp" => {
                    let e = OmpEstimator::new(&setup, oversampled_dictionary(n_vert, n / n_vert, 2), OmpStop::for_setup(&setup))?;
                    Box::new(move |y| e.estimate(y))
                }
                _ => {
                    let e = GmmEstimator::new(needs_model()?, &setup)?;
                    Box::new(move |y| e.estimate(y))
                }
            };
            for (i, h) in ds.samples.iter().enumerate() {
                let r = select_codebook_index(&codebook, &estimate(&observe(h, &mut noise))?)?;
                writeln!(out, "{i},{}", r.index)?;
            }
        }
        other => return Err(Error::Config(format!("unknown scheme {other:?}"))),
    }
    out.flush()?;
    Ok(())
}

fn report(csv: PathBuf) -> Result<()> {
    let parsed = parse_csv(&std::fs::read_to_string(&csv)?)?;
    let width = parsed.schemes.iter().map(|s| s.len()).max().unwrap_or(0).max(8);
    print!("{:>12}", parsed.axis);
    for s in &parsed.schemes {
        print!("  {s:>width$}");
    }
    println!();
    for (i, v) in parsed.values.iter().enumerate() {
        print!("{v:>12}");
        for s in 0..parsed.schemes.len() {
            let cell = format!("{:.3} ± {:.3}", parsed.mean[i][s], parsed.se[i][s]);
            print!("  {cell:>width$}");
        }
        println!();
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { config, profile, count, seed, offset, normalize, out } => {
            let mut cfg = base_config(config, profile)?;
            if let Some(s) = seed {
                cfg.scene_seed = s;
            }
            generate(cfg, count, offset, normalize, out)
        }
        Command::Train { data, bits, constraint, n_vert, iters, seed, out } => {
            let c = match constraint {
                ConstraintArg::Full => Constraint::Full,
                ConstraintArg::Toeplitz => Constraint::Toeplitz,
            };
            train(data, bits, c, n_vert, iters, seed, out)
        }
        Command::Feedback { model, scheme, pilots, snr_db, data, n_vert, bits, seed } => {
            feedback(model, &scheme, pilots, snr_db, data, n_vert, bits, seed)
        }
        Command::Sweep { config, profile, axis, values, precoder, iters, seed, out, dump_raw, trajectory } => {
            // Command-line overrides go through the config text so they are hashed like file content.
            let mut text = base_config(config, profile)?.to_text();
            let mut set = |k: &str, v: String| text.push_str(&format!("{k} = {v}\n"));
            if let Some(a) = axis {
                set("axis", a);
            }
            if let Some(v) = values {
                set("axis_values", v);
            }
            if let Some(i) = iters {
                set("max_iters", i.to_string());
            }
            if let Some(s) = seed {
                set("seed", s.to_string());
            }
            let mut cfg = parse_overrides(&text)?;
            if let Some(p) = precoder {
                let kind = match p {
                    PrecoderArg::Rci => PrecoderKind::Rci,
                    PrecoderArg::Swmmse => PrecoderKind::Swmmse,
                };
                for s in cfg.schemes.iter_mut().filter(|s| s.required_model().is_some()) {
                    s.precoder = kind;
                }
                cfg.precoder = kind;
            }
            let experiment = Experiment::prepare(cfg)?;
            let result = experiment.run_sweep()?;
            match &out {
                Some(path) => emit_csv(&result, path)?,
                None => write_csv(&result, std::io::stdout().lock())?,
            }
            for e in &result.metadata.errors {
                log::warn!("{e}");
            }
            eprintln!(
                "config {} seed {} finished in {:.1} s",
                result.metadata.config_hash, result.metadata.seed, result.metadata.runtime_secs
            );
            if let Some(path) = dump_raw {
                let side = write_raw_dump(&result, &path)?;
                eprintln!("raw rates in {} and {}", path.display(), side.display());
            }
            if let Some(path) = trajectory {
                let point = experiment.prepare_point(experiment.base_params())?;
                let (name, rows) = experiment.swmmse_trajectory(&point, 0)?;
                let mut w = BufWriter::new(File::create(&path)?);
                writeln!(w, "iteration,sum_rate,power")?;
                for (t, rate, power) in rows {
                    writeln!(w, "{t},{rate:.16e},{power:.16e}")?;
                }
                w.flush()?;
                eprintln!("{name} trajectory in {}", path.display());
            }
            Ok(())
        }
        Command::Report { csv } => report(csv),
    }
}

/// Later lines override earlier ones.
fn parse_overrides(text: &str) -> Result<ExperimentConfig> {
    let mut lines: Vec<(String, String)> = Vec::new();
    for line in text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            let k = k.trim().to_string();
            lines.retain(|(key, _)| *key != k);
            lines.push((k, v.trim().to_string()));
        }
    }
    let merged: String = lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    ExperimentConfig::parse(&merged)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
