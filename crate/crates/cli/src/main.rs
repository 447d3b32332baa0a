//! Command-line front-end: train, evaluate, selfcheck and gen-data.

use clap::{Parser, Subcommand};
use rawspoof_core::data::{serialize_protocol, write_wav, Partition};
use rawspoof_core::metrics::{write_score_file, TdcfParams};
use rawspoof_core::selfcheck::{format_report, run_selfcheck};
use rawspoof_core::trainer::{self, build_corpus, TrainConfig, TrainReport};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "rawspoof",
    about = "Raw-waveform audio anti-spoofing: training, scoring and detection metrics",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model from a flat key-value config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated seed sweep; keeps the checkpoint of the best
        /// dev-EER run.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Score a data partition with a checkpoint and print the breakdown.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Config file describing the data source (synthetic keys or
        /// protocol paths).
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "eval")]
        partition: String,
        /// Score file destination.
        #[arg(long, default_value = "scores.txt")]
        scores: PathBuf,
        /// Breakdown CSV destination.
        #[arg(long, default_value = "breakdown.csv")]
        csv: PathBuf,
    },
    /// Run the oracle suite (gradients, closed forms, metric sweeps).
    Selfcheck,
    /// Generate a synthetic corpus and export it as WAV + protocol files.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn report_lines(report: &TrainReport) {
    println!("epoch,loss_aam,loss_mse,loss_total,dev_eer,lr");
    for log in &report.epochs {
        println!("{}", log.to_line());
    }
    println!(
        "best epoch {} (dev EER {:.4}); checkpoint written to {}",
        report.best_epoch,
        report.best_dev_eer,
        report.checkpoint_path.display()
    );
}

fn run() -> rawspoof_core::Result<bool> {
    match Cli::parse().cmd {
        Cmd::Train {
            config,
            seed,
            seeds,
        } => {
            let mut cfg = TrainConfig::from_file(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            match seeds {
                Some(list) if !list.is_empty() => {
                    let base = cfg.checkpoint_out.clone();
                    let mut best: Option<(f64, u64, TrainReport)> = None;
                    for s in list {
                        let mut run_cfg = cfg.clone();
                        run_cfg.seed = s;
                        run_cfg.checkpoint_out = base.with_extension(format!("seed{s}.ckpt"));
                        println!("== seed {s} ==");
                        let report = trainer::train(&run_cfg)?;
                        report_lines(&report);
                        let better = match &best {
                            None => true,
                            Some((eer, _, _)) => report.best_dev_eer < *eer,
                        };
                        if better {
                            best = Some((report.best_dev_eer, s, report));
                        }
                    }
                    let (eer, s, report) = best.expect("at least one seed");
                    std::fs::copy(&report.checkpoint_path, &base)?;
                    println!(
                        "best seed {s} (dev EER {eer:.4}); checkpoint copied to {}",
                        base.display()
                    );
                }
                _ => {
                    let report = trainer::train(&cfg)?;
                    report_lines(&report);
                }
            }
            Ok(true)
        }
        Cmd::Evaluate {
            checkpoint,
            data,
            partition,
            scores,
            csv,
        } => {
            let data_cfg = TrainConfig::from_file(&data)?;
            let part = Partition::parse(&partition)?;
            let out = trainer::evaluate(&checkpoint, &data_cfg, part, &TdcfParams::default())?;
            write_score_file(&scores, &out.scores)?;
            std::fs::write(&csv, out.report.to_csv())?;
            print!("{}", out.report.to_table());
            println!(
                "{} trials scored; scores in {}, breakdown in {}",
                out.scores.trials.len(),
                scores.display(),
                csv.display()
            );
            Ok(true)
        }
        Cmd::Selfcheck => {
            let results = run_selfcheck()?;
            print!("{}", format_report(&results));
            let ok = results.iter().all(|r| r.pass);
            println!(
                "{} of {} checks passed",
                results.iter().filter(|r| r.pass).count(),
                results.len()
            );
            Ok(ok)
        }
        Cmd::GenData { config, out } => {
            let cfg = TrainConfig::from_file(&config)?;
            let corpus = build_corpus(&cfg)?;
            let wav_dir = out.join("wav");
            std::fs::create_dir_all(&wav_dir)?;
            for (i, rec) in corpus.records.iter().enumerate() {
                let wave = corpus.waveform(i)?;
                write_wav(&wav_dir.join(format!("{}.wav", rec.trial_id)), &wave)?;
            }
            for part in [Partition::Train, Partition::Dev, Partition::Eval] {
                let recs: Vec<_> = corpus
                    .records
                    .iter()
                    .filter(|r| r.partition == part)
                    .cloned()
                    .collect();
                std::fs::write(
                    out.join(format!("{}.txt", part.as_str())),
                    serialize_protocol(&recs),
                )?;
            }
            println!(
                "wrote {} utterances to {} (protocols: train.txt, dev.txt, eval.txt)",
                corpus.records.len(),
                out.display()
            );
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
