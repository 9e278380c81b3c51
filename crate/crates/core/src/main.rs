//! Command-line surface for the synthesis harness.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error, 3 assertion or
//! ordering failure (gradcheck / ablate).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mftts::corpus::{generate_synthetic_corpus, SyntheticCorpus};
use mftts::error::{Error, Result};
use mftts::flow::{OdeConfig, OdeMethod};
use mftts::frontend::Frontend;
use mftts::metrics::{f0_rmse, mcd, mel_spectrogram, wav, MelConfig, MelSpectrogram};
use mftts::model::{Model, SynthesisRequest};
use mftts::train::ablation::run_ablation;
use mftts::train::{train, TrainConfig};
use mftts::verify::run_gradient_suite;

#[derive(Parser)]
#[command(name = "mftts", version, about = "Flow-matching speech synthesis for Manchu (desk scale)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the three-tier analysis of romanized Manchu text
    Frontend {
        /// Romanized text, e.g. "šunggira?"
        text: String,
    },
    /// Generate the deterministic synthetic corpus
    GenCorpus(GenCorpusArgs),
    /// Train on the synthetic corpus
    Train {
        /// `key = value` config file
        #[arg(long)]
        config: PathBuf,
    },
    /// Synthesize a mel matrix from text
    Synthesize(SynthesizeArgs),
    /// Compare two mels or waveforms (prints MCD and F0-RMSE)
    Eval(EvalArgs),
    /// Run the full finite-difference gradient suite
    Gradcheck,
    /// Train the tier-ablation variants and check the ordering
    Ablate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct GenCorpusArgs {
    #[arg(long)]
    seed: u64,
    /// Number of items
    #[arg(long)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 16)]
    bins: usize,
}

#[derive(Args)]
struct SynthesizeArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    text: String,
    /// Reference waveform (16-bit PCM mono WAV); requires --ref-text
    #[arg(long)]
    ref_wav: Option<PathBuf>,
    #[arg(long)]
    ref_text: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 32)]
    steps: usize,
    #[arg(long, default_value = "euler")]
    method: String,
    #[arg(long, default_value_t = 0)]
    speaker: usize,
    /// Output file: `.f32` raw floats or `.csv` text
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Reference `.wav` or raw `.f32` mel
    #[arg(long, name = "ref")]
    reference: PathBuf,
    /// Hypothesis `.wav` or raw `.f32` mel
    #[arg(long)]
    hyp: PathBuf,
    /// Mel bins for raw `.f32` inputs (and wav analysis)
    #[arg(long, default_value_t = 16)]
    bins: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints its own help/usage; force the documented exit code
            let _ = e.print();
            let is_help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            return if is_help { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Frontend { text } => {
            let fe = Frontend::builtin();
            let ht = fe.build_hierarchical_representation(&text)?;
            println!("{}", fe.dump(&ht));
            for w in &ht.harmony_warnings {
                eprintln!("warning: vowel harmony: {w}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::GenCorpus(args) => {
            let corpus = generate_synthetic_corpus(args.seed, args.n, args.bins)?;
            corpus.save(&args.out)?;
            println!(
                "wrote {} items ({} mel bins, seed {}) to {}",
                corpus.items.len(),
                corpus.mel_bins,
                corpus.seed,
                args.out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Train { config } => {
            let cfg = TrainConfig::from_file(&config)?;
            let corpus = load_or_generate_corpus(&cfg)?;
            let outcome = train(&cfg, &corpus)?;
            println!(
                "trained {} steps: cfm {} -> {} (ratio {:.4})",
                cfg.steps,
                outcome.initial_cfm,
                outcome.final_cfm,
                outcome.final_cfm / outcome.initial_cfm
            );
            println!("metrics: {}", cfg.metrics_csv.display());
            println!("checkpoint: {}", outcome.final_checkpoint.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Synthesize(args) => synthesize_cmd(args),
        Command::Eval(args) => eval_cmd(args),
        Command::Gradcheck => {
            let entries = run_gradient_suite()?;
            let mut ok = true;
            for e in &entries {
                let pass = e.passed();
                ok &= pass;
                println!(
                    "{:28} max rel err {:9.3e}  (tol {:>7.0e})  {}",
                    e.report.op,
                    e.report.max_rel_err,
                    e.tolerance,
                    if pass { "PASS" } else { "FAIL" }
                );
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(3) })
        }
        Command::Ablate { config } => {
            let cfg = TrainConfig::from_file(&config)?;
            let corpus = load_or_generate_corpus(&cfg)?;
            let report = run_ablation(&cfg, &corpus)?;
            print!("{}", report.render());
            Ok(if report.ordering_ok() {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: tier ablation ordering violated");
                ExitCode::from(3)
            })
        }
    }
}

fn load_or_generate_corpus(cfg: &TrainConfig) -> Result<SyntheticCorpus> {
    if cfg.corpus_dir.join("meta.txt").exists() {
        let corpus = SyntheticCorpus::load(&cfg.corpus_dir)?;
        if corpus.mel_bins != cfg.model.mel_bins {
            return Err(Error::Corpus(format!(
                "corpus has {} mel bins, model wants {}",
                corpus.mel_bins, cfg.model.mel_bins
            )));
        }
        Ok(corpus)
    } else {
        let corpus = generate_synthetic_corpus(cfg.seed, cfg.corpus_items, cfg.model.mel_bins)?;
        corpus.save(&cfg.corpus_dir)?;
        Ok(corpus)
    }
}

fn mel_cfg_for(sample_rate: u32, bins: usize) -> MelConfig {
    let mut cfg = MelConfig {
        sample_rate_hz: sample_rate,
        mel_bins: bins,
        fmax_hz: sample_rate as f64 / 2.0,
        ..MelConfig::default()
    };
    let mut fft = 64usize;
    while fft < cfg.frame_samples() {
        fft *= 2;
    }
    cfg.fft_size = fft;
    cfg
}

fn synthesize_cmd(args: SynthesizeArgs) -> Result<ExitCode> {
    let model = Model::<f32>::load_checkpoint_auto(&args.ckpt)?;
    let fe = Frontend::builtin();
    let mut req = SynthesisRequest::plain(&args.text, args.speaker);
    if let Some(wav_path) = &args.ref_wav {
        let ref_text = args.ref_text.clone().ok_or_else(|| {
            Error::contract("synthesize", "--ref-wav requires --ref-text")
        })?;
        let (samples, sr) = wav::read_wav(wav_path)?;
        let mel = mel_spectrogram(&samples, &mel_cfg_for(sr, model.cfg.mel_bins))?;
        req.reference_frames = mel.frames;
        req.reference_mel = Some(mel.data);
        req.reference_text = Some(ref_text);
    } else if args.ref_text.is_some() {
        return Err(Error::contract(
            "synthesize",
            "--ref-text requires --ref-wav",
        ));
    }
    let ode = OdeConfig {
        steps: args.steps,
        method: OdeMethod::parse(&args.method)?,
        seed: args.seed,
    };
    let out = model.synthesize(fe, &req, &ode)?;
    let frames = out.shape()[0];
    let bins = out.shape()[1];
    let data = out.to_vec();
    match args.out.extension().and_then(|e| e.to_str()) {
        Some("f32") => wav::write_raw_f32(&args.out, &data)?,
        Some("csv") => {
            let mel = MelSpectrogram::new(data, frames, bins, mel_cfg_for(16_000, bins))?;
            std::fs::write(&args.out, mel.to_csv())?;
        }
        _ => {
            return Err(Error::contract(
                "synthesize",
                format!("--out must end in .f32 or .csv, got {}", args.out.display()),
            ))
        }
    }
    println!(
        "synthesized {frames}×{bins} mel for {:?} -> {}",
        args.text,
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

enum EvalInput {
    Wav(Vec<f32>, u32),
    RawMel(Vec<f32>),
}

fn load_eval_input(path: &Path) -> Result<EvalInput> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("wav") => {
            let (samples, sr) = wav::read_wav(path)?;
            Ok(EvalInput::Wav(samples, sr))
        }
        Some("f32") | Some("raw") => Ok(EvalInput::RawMel(wav::read_raw_f32(path)?)),
        other => Err(Error::contract(
            "eval",
            format!("unsupported input extension {other:?} (need .wav or .f32)"),
        )),
    }
}

fn eval_cmd(args: EvalArgs) -> Result<ExitCode> {
    let a = load_eval_input(&args.reference)?;
    let b = load_eval_input(&args.hyp)?;
    match (a, b) {
        (EvalInput::Wav(wa, sra), EvalInput::Wav(wb, srb)) => {
            if sra != srb {
                return Err(Error::contract(
                    "eval",
                    format!("sample rates differ: {sra} vs {srb}"),
                ));
            }
            let cfg = mel_cfg_for(sra, args.bins);
            let ma = mel_spectrogram(&wa, &cfg)?;
            let mb = mel_spectrogram(&wb, &cfg)?;
            println!("MCD: {:.6} dB", mcd(&ma, &mb)?);
            let f0 = f0_rmse(&wa, &wb, &cfg)?;
            if f0.no_voicing_warning {
                println!("F0-RMSE: 0.000000 Hz (warning: no co-voiced frames)");
            } else {
                println!(
                    "F0-RMSE: {:.6} Hz ({} co-voiced frames)",
                    f0.rmse_hz, f0.co_voiced_frames
                );
            }
        }
        (EvalInput::RawMel(da), EvalInput::RawMel(db)) => {
            let bins = args.bins;
            if da.len() % bins != 0 || db.len() % bins != 0 {
                return Err(Error::contract(
                    "eval",
                    format!("raw mel size not divisible by {bins} bins"),
                ));
            }
            let cfg = mel_cfg_for(16_000, bins);
            let ma = MelSpectrogram::new(da.clone(), da.len() / bins, bins, cfg)?;
            let mb = MelSpectrogram::new(db.clone(), db.len() / bins, bins, cfg)?;
            println!("MCD: {:.6} dB", mcd(&ma, &mb)?);
            println!("F0-RMSE: n/a (raw mel inputs)");
        }
        _ => {
            return Err(Error::contract(
                "eval",
                "reference and hypothesis must both be .wav or both be .f32",
            ))
        }
    }
    Ok(ExitCode::SUCCESS)
}
