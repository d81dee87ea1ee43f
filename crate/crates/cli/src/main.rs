use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use tdstream::bench::{
    estimate_capacity, load_alignments, measure_latency, measure_throughput, sweep, write_csv, ChunkCost,
    LatencySettings, SweepAxis, SweepSettings, Utterance, Workload,
};
use tdstream::decoder::MergeRule;
use tdstream::engine::{Engine, EngineConfig, Pacing, RunConfig};
use tdstream::features::wav::read_wav;
use tdstream::model::{file, ModelSpec};
use tdstream::toy::{letter_tokens, synthetic_audio, toy_assets};

#[derive(Parser)]
#[command(name = "tdstream", version, about = "Streaming TDS speech recognizer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Transcribe a WAV file as a live stream; prints one JSON event per line.
    Transcribe {
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long)]
        audio: PathBuf,
    },
    /// Measure RTF, throughput or latency, or sweep them.
    Bench(BenchArgs),
    /// Print a model's layers and derived context sizes.
    Inspect {
        /// Model file; omit to inspect a built-in layout.
        model: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "reference")]
        layout: Layout,
        #[arg(long, default_value_t = 5000)]
        token_count: usize,
    },
    /// Write a seeded random-weight model with matching tokens, lexicon, LM
    /// and engine.toml.
    Init {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, value_enum, default_value = "toy")]
        layout: Layout,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 40)]
        words: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Layout {
    Reference,
    Toy,
}

impl Layout {
    fn spec(self, token_count: usize) -> ModelSpec {
        match self {
            Layout::Reference => ModelSpec::reference(token_count),
            Layout::Toy => ModelSpec::toy(token_count),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Merge {
    Max,
    LogSumExp,
}

/// Engine settings; flags override the config file.
#[derive(Args)]
struct EngineArgs {
    /// TOML file with the same keys as these flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    tokens: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    lm: Option<PathBuf>,
    #[arg(long)]
    chunk_ms: Option<u32>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    beam_size: Option<usize>,
    #[arg(long)]
    topk: Option<usize>,
    #[arg(long)]
    blank_threshold: Option<f64>,
    #[arg(long)]
    lm_weight: Option<f64>,
    #[arg(long)]
    word_score: Option<f64>,
    #[arg(long)]
    history_prune_interval: Option<usize>,
    #[arg(long, value_enum)]
    merge: Option<Merge>,
    #[arg(long)]
    norm_window: Option<usize>,
    #[arg(long)]
    max_streams: Option<usize>,
}

impl EngineArgs {
    fn config(&self) -> Result<EngineConfig> {
        let mut c = match &self.config {
            Some(p) => EngineConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
            None => EngineConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => { $(if let Some(v) = &self.$field { c.$field = v.clone().into(); })* };
        }
        set!(model, tokens, lexicon, lm);
        macro_rules! copy {
            ($($field:ident),*) => { $(if let Some(v) = self.$field { c.$field = v; })* };
        }
        copy!(chunk_ms, workers, beam_size, topk, blank_threshold, lm_weight, word_score, history_prune_interval, norm_window, max_streams);
        if let Some(m) = self.merge {
            c.merge = match m {
                Merge::Max => MergeRule::Max,
                Merge::LogSumExp => MergeRule::LogSumExp,
            };
        }
        c.validate()?;
        Ok(c)
    }

    fn engine(&self) -> Result<Engine> {
        Engine::from_config(self.config()?).context("loading engine")
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Rtf,
    Throughput,
    Latency,
    Sweep,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Streams,
    ChunkMs,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    engine: EngineArgs,
    #[arg(long, value_enum)]
    mode: Mode,
    #[arg(long, default_value_t = 1)]
    streams: usize,
    /// WAV files; synthetic audio when omitted.
    #[arg(long)]
    audio_dir: Option<PathBuf>,
    /// Directory of `<wav stem>.txt` files with `word start_ms end_ms`
    /// lines. Without it, references come from the engine's offline output.
    #[arg(long)]
    alignments: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "streams")]
    axis: Axis,
    /// Swept values, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1usize, 2, 4, 8, 16])]
    values: Vec<usize>,
    /// Release chunks on a clock this many times faster than real time;
    /// 0 releases all audio at once.
    #[arg(long, default_value_t = 0.0)]
    speed: f64,
    /// Wall-clock runs per measurement; the median is reported.
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    /// Synthetic utterances and their length, when no audio is given.
    #[arg(long, default_value_t = 8)]
    synthetic_count: usize,
    #[arg(long, default_value_t = 6.0)]
    synthetic_seconds: f64,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Transcribe { engine, audio } => transcribe(&engine, &audio),
        Command::Bench(args) => bench(&args),
        Command::Inspect {
            model,
            layout,
            token_count,
        } => inspect(model.as_deref(), layout, token_count),
        Command::Init {
            dir,
            layout,
            seed,
            words,
        } => init(&dir, layout, seed, words),
    }
}

fn transcribe(args: &EngineArgs, audio: &Path) -> Result<()> {
    let engine = args.engine()?;
    let (samples, rate) = read_wav(audio).with_context(|| format!("reading {}", audio.display()))?;
    if rate != engine.config().sample_rate {
        bail!("{} is {rate} Hz but the engine expects {} Hz", audio.display(), engine.config().sample_rate);
    }
    let (events, _) = engine.transcribe_stream(&samples)?;
    let mut out = BufWriter::new(io::stdout().lock());
    for e in events {
        writeln!(out, "{}", serde_json::to_string(&e)?)?;
    }
    out.flush()?;
    Ok(())
}

fn workload(args: &BenchArgs, engine: &Engine) -> Result<Workload> {
    let rate = engine.config().sample_rate;
    let Some(dir) = &args.audio_dir else {
        let audio = (0..args.synthetic_count as u64)
            .map(|s| synthetic_audio(s, args.synthetic_seconds, rate))
            .collect();
        return Ok(Workload::closed_loop(engine, audio)?);
    };
    let mut wavs: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<io::Result<_>>()?;
    wavs.retain(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")));
    wavs.sort();
    if wavs.is_empty() {
        bail!("no .wav files in {}", dir.display());
    }
    let mut audio = Vec::new();
    for p in &wavs {
        let (samples, r) = read_wav(p).with_context(|| format!("reading {}", p.display()))?;
        if r != rate {
            bail!("{} is {r} Hz but the engine expects {rate} Hz", p.display());
        }
        audio.push(samples);
    }
    let Some(ali_dir) = &args.alignments else {
        return Ok(Workload::closed_loop(engine, audio)?);
    };
    let utterances = wavs
        .iter()
        .zip(audio)
        .map(|(p, audio)| {
            let stem = p.file_stem().expect("wav files have names");
            let ali = ali_dir.join(stem).with_extension("txt");
            let alignment = load_alignments(&ali).with_context(|| format!("reading {}", ali.display()))?;
            Ok(Utterance { audio, alignment })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Workload::new(rate, utterances)?)
}

fn bench(args: &BenchArgs) -> Result<()> {
    let engine = args.engine.engine()?;
    let cfg = engine.config().clone();
    let work = workload(args, &engine)?;
    let pacing = if args.speed > 0.0 {
        Pacing::RealTime { speed: args.speed }
    } else {
        Pacing::Unpaced
    };
    let run = RunConfig {
        chunk_ms: cfg.chunk_ms,
        sample_rate: cfg.sample_rate,
        workers: cfg.workers,
        pacing,
    };
    let report = match args.mode {
        Mode::Rtf | Mode::Throughput => {
            serde_json::to_value(measure_throughput(&engine, &work, args.streams, &run)?)?
        }
        Mode::Latency => {
            let r = measure_latency(
                &engine,
                &work,
                &LatencySettings {
                    chunk_ms: cfg.chunk_ms,
                    streams: args.streams,
                    workers: cfg.workers,
                    cost: ChunkCost::Measured,
                },
            )?;
            json!({
                "streams": args.streams,
                "chunk_ms": cfg.chunk_ms,
                "workers": cfg.workers,
                "words": r.per_word_ms.len(),
                "mean_latency_ms": r.mean_ms,
            })
        }
        Mode::Sweep => {
            let axis = match args.axis {
                Axis::Streams => SweepAxis::Streams,
                Axis::ChunkMs => SweepAxis::ChunkMs,
            };
            let pacing = if args.speed > 0.0 || axis == SweepAxis::ChunkMs {
                pacing
            } else {
                // live-like streams at a quarter of single-pool capacity, so
                // the curve rises before it saturates
                let capacity = estimate_capacity(&engine, &work, cfg.chunk_ms, cfg.workers, args.repeats)?;
                eprintln!("capacity {capacity:.1} audio s/s; pacing at {:.1}x", capacity / 4.0);
                Pacing::RealTime { speed: capacity / 4.0 }
            };
            let rows = sweep(
                &engine,
                &work,
                &SweepSettings {
                    axis,
                    values: args.values.clone(),
                    streams: args.streams,
                    chunk_ms: cfg.chunk_ms,
                    workers: cfg.workers,
                    pacing,
                    latency_cost: ChunkCost::Measured,
                    repeats: args.repeats,
                },
            )?;
            match &args.out {
                Some(p) => write_csv(&rows, File::create(p).with_context(|| format!("creating {}", p.display()))?)?,
                None => write_csv(&rows, io::stdout().lock())?,
            }
            return Ok(());
        }
    };
    let line = serde_json::to_string(&report)?;
    match &args.out {
        Some(p) => fs::write(p, line + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => println!("{line}"),
    }
    Ok(())
}

fn inspect(model: Option<&Path>, layout: Layout, token_count: usize) -> Result<()> {
    let spec = match model {
        Some(p) => file::load(p).with_context(|| format!("loading {}", p.display()))?.spec().clone(),
        None => layout.spec(token_count),
    };
    spec.validate()?;
    println!("input: {} features every {} ms", spec.input_dim, spec.frame_ms);
    for (i, layer) in spec.layers.iter().enumerate() {
        println!("{i:>3}  {layer}");
    }
    println!("tokens: {}", spec.token_count);
    println!("parameters: {}", spec.parameter_count()?);
    println!(
        "subsampling: {} ({} ms per output frame)",
        spec.total_stride(),
        spec.output_stride_ms()
    );
    println!(
        "receptive field: {} frames ({} ms)",
        spec.receptive_field_frames(),
        spec.receptive_field_ms()
    );
    println!(
        "future context: {} frames ({} ms)",
        spec.future_context_frames(),
        spec.future_context_ms()
    );
    Ok(())
}

fn init(dir: &Path, layout: Layout, seed: u64, words: usize) -> Result<()> {
    let spec = layout.spec(letter_tokens().len());
    let assets = toy_assets(spec, seed, words)?;
    assets.write(dir).with_context(|| format!("writing to {}", dir.display()))?;
    println!("wrote model, tokens, lexicon, LM and engine.toml to {}", dir.display());
    Ok(())
}
