use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::rngs::StdRng;
use rand::SeedableRng;

use convasr::checkpoint::{self, EmissionFile};
use convasr::decoder::{
    decode, parse_lexicon, tune_grid, DecoderOptions, LexiconTrie, TuneGrid, TuneStage,
};
use convasr::frontend::analyze_filters;
use convasr::lm::{read_corpus, GcnnConfig, GcnnLm, GcnnModel, GcnnTrainer, LanguageModel, NGramModel, Vocabulary};
use convasr::pipeline::config::{self as cfgfile, Config};
use convasr::pipeline::eval::{compute_emissions, evaluate_emissions};
use convasr::pipeline::manifest::Manifest;
use convasr::pipeline::studies::{
    context_wer_csv, context_wer_study, perplexity_wer_study, ppl_wer_csv, StudySetup,
};
use convasr::pipeline::synth::{synthesize_dataset, synthesize_text, SyntheticTaskSpec};
use convasr::pipeline::train::{train_acoustic_with, AsrModel, FrontendKind};
use convasr::pipeline::wav::read_wav;
use convasr::pipeline::{load_utterances, metrics};

#[derive(Parser)]
#[command(name = "convasr", version, about = "Fully convolutional speech recognition toolkit")]
struct Cli {
    /// key = value file with model, training and decoder settings; flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct DecodeFlags {
    /// LM weight
    #[arg(long)]
    alpha: Option<f64>,
    /// word insertion reward
    #[arg(long)]
    beta: Option<f64>,
    /// penalty per silence frame
    #[arg(long)]
    gamma: Option<f64>,
    /// hypotheses kept per frame
    #[arg(long)]
    beam_size: Option<usize>,
    /// drop hypotheses this far below the best
    #[arg(long)]
    beam_score: Option<f64>,
    /// log-softmax the emissions before decoding
    #[arg(long)]
    normalize: bool,
}

#[derive(Args, Clone)]
struct DecodeInputs {
    /// word<TAB>letters lexicon
    #[arg(long)]
    lexicon: PathBuf,
    /// ARPA file (.arpa) or GCNN checkpoint (.json)
    #[arg(long)]
    lm: PathBuf,
    #[command(flatten)]
    flags: DecodeFlags,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic spoken-letters dataset
    SynthData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 500)]
        train: usize,
        #[arg(long, default_value_t = 50)]
        dev: usize,
        #[arg(long, default_value_t = 50)]
        test: usize,
        /// sentences of LM training text
        #[arg(long, default_value_t = 2000)]
        lm_text: usize,
        /// add white noise at this SNR in dB
        #[arg(long)]
        snr: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the front-end, acoustic model and transitions with ASG
    TrainAm {
        /// JSONL manifest
        #[arg(long)]
        train: PathBuf,
        /// JSONL manifest for the per-epoch validation loss
        #[arg(long)]
        valid: Option<PathBuf>,
        /// checkpoint to write
        #[arg(long)]
        out: PathBuf,
        /// learnable or mel
        #[arg(long)]
        frontend: Option<FrontendKind>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// also save a checkpoint after every epoch
        #[arg(long)]
        keep_epochs: bool,
    },
    /// Train an n-gram (ARPA) or GCNN language model on text
    TrainLm {
        /// one sentence per line
        #[arg(long)]
        text: PathBuf,
        /// .arpa for n-gram, .json for GCNN
        #[arg(long)]
        out: PathBuf,
        /// ngram or gcnn
        #[arg(long, default_value = "ngram")]
        kind: String,
        #[arg(long, default_value_t = 3)]
        order: usize,
        #[arg(long, default_value_t = 0.5)]
        discount: f64,
        #[arg(long)]
        valid: Option<PathBuf>,
        #[arg(long, default_value_t = 6)]
        epochs: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(long, default_value_t = 2)]
        blocks: usize,
        /// GCNN: save every epoch as {out stem}.epochN.json
        #[arg(long)]
        keep_epochs: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Decode one WAV file or emission dump
    Decode {
        /// acoustic checkpoint, needed for --audio
        #[arg(long)]
        am: Option<PathBuf>,
        /// 16 kHz mono PCM16 WAV
        #[arg(long, conflicts_with = "emissions")]
        audio: Option<PathBuf>,
        /// emission file written by --dump-emissions
        #[arg(long)]
        emissions: Option<PathBuf>,
        /// write the emissions of --audio to this file
        #[arg(long)]
        dump_emissions: Option<PathBuf>,
        #[command(flatten)]
        inputs: DecodeInputs,
    },
    /// Decode a manifest and report WER/CER
    Evaluate {
        #[arg(long)]
        am: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// per-utterance CSV
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        inputs: DecodeInputs,
    },
    /// Grid-search alpha, beta, gamma on a validation manifest
    Tune {
        #[arg(long)]
        am: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,2")]
        alphas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        betas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        gammas: Vec<f64>,
        #[command(flatten)]
        inputs: DecodeInputs,
    },
    /// Center frequencies and filter power spectra of a learned front-end
    AnalyzeFrontend {
        #[arg(long)]
        am: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Perplexity and WER for a series of LM checkpoints
    PplWer {
        #[arg(long)]
        am: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// held-out text for perplexity
        #[arg(long)]
        text: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        lms: Vec<PathBuf>,
        #[arg(long)]
        lexicon: PathBuf,
        #[command(flatten)]
        flags: DecodeFlags,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// WER as a function of LM context length
    ContextWer {
        #[arg(long)]
        am: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
        limits: Vec<usize>,
        #[command(flatten)]
        inputs: DecodeInputs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let config = match &cli.config {
        Some(p) => {
            let c = Config::load(p)?;
            c.check_keys(cfgfile::KNOWN_KEYS)?;
            c
        }
        None => Config::default(),
    };
    match cli.command {
        Command::SynthData {
            out,
            train,
            dev,
            test,
            lm_text,
            snr,
            seed,
        } => synth_data(&out, [train, dev, test], lm_text, snr, seed),
        Command::TrainAm {
            train,
            valid,
            out,
            frontend,
            epochs,
            lr,
            seed,
            keep_epochs,
        } => {
            let mut config = config;
            if let Some(f) = frontend {
                config.set("frontend", f);
            }
            if let Some(e) = epochs {
                config.set("epochs", e);
            }
            if let Some(l) = lr {
                config.set("lr", l);
            }
            if let Some(s) = seed {
                config.set("seed", s);
            }
            train_am(&config, &train, valid.as_deref(), &out, keep_epochs)
        }
        Command::TrainLm {
            text,
            out,
            kind,
            order,
            discount,
            valid,
            epochs,
            lr,
            blocks,
            keep_epochs,
            seed,
        } => {
            let corpus = fs::read_to_string(&text).with_context(|| text.display().to_string())?;
            let sentences = read_corpus(&corpus);
            let words: Vec<&str> = sentences.iter().flatten().map(String::as_str).collect();
            let vocab = Vocabulary::new(&words);
            let encode = |s: &[Vec<String>]| -> Vec<Vec<usize>> {
                s.iter().map(|w| w.iter().map(|t| vocab.id(t)).collect()).collect()
            };
            let train = encode(&sentences);
            match kind.as_str() {
                "ngram" => {
                    let lm = NGramModel::estimate(&train, &vocab, order, discount)?;
                    fs::write(&out, lm.to_arpa())?;
                    log::info!("wrote {}-gram model to {}", order, out.display());
                }
                "gcnn" => {
                    let valid = match valid {
                        Some(p) => encode(&read_corpus(&fs::read_to_string(&p)?)),
                        None => Vec::new(),
                    };
                    let cfg = GcnnConfig {
                        num_blocks: blocks,
                        embed_dim: 32,
                        bottleneck_dim: 16,
                        mid_kernel_width: 3,
                        ..GcnnConfig::default()
                    };
                    let mut model = GcnnModel::new(cfg, vocab.clone(), &mut StdRng::seed_from_u64(seed))?;
                    let trainer = GcnnTrainer {
                        epochs,
                        lr,
                        seed,
                        ..GcnnTrainer::default()
                    };
                    let stem = out.with_extension("");
                    if keep_epochs {
                        checkpoint::save_gcnn(&stem.with_extension("epoch0.json"), &model)?;
                    }
                    trainer.train_with(&mut model, &train, &valid, |e, m| {
                        if keep_epochs {
                            checkpoint::save_gcnn(&stem.with_extension(format!("epoch{}.json", e.epoch + 1)), m)?;
                        }
                        Ok(())
                    })?;
                    checkpoint::save_gcnn(&out, &model)?;
                }
                other => bail!("unknown LM kind {other:?} (expected ngram or gcnn)"),
            }
            Ok(())
        }
        Command::Decode {
            am,
            audio,
            emissions,
            dump_emissions,
            inputs,
        } => {
            let opts = decoder_options(&config, &inputs.flags)?;
            let file = match (audio, emissions) {
                (Some(audio), None) => {
                    let am = am.context("--audio needs --am")?;
                    let model = checkpoint::load_acoustic(&am)?;
                    let wave = read_wav(&audio)?;
                    EmissionFile {
                        emissions: model.emissions(&wave, false)?,
                        alphabet: model.alphabet.clone(),
                        transitions: Some(model.transitions.clone()),
                    }
                }
                (None, Some(path)) => EmissionFile::load(&path)?,
                _ => bail!("give exactly one of --audio or --emissions"),
            };
            if let Some(p) = dump_emissions {
                file.save(&p)?;
            }
            let n = file.alphabet.len();
            let transitions = file
                .transitions
                .clone()
                .unwrap_or_else(|| convasr::math::Table::zeros(n, n));
            let trie = load_trie(&inputs.lexicon, &file.alphabet)?;
            let lm = load_lm(&inputs.lm)?;
            let r = decode(&file.emissions, &transitions, &file.alphabet, &trie, lm.as_ref(), &opts)?;
            println!("{}", r.transcript());
            log::info!(
                "objective {:.4} (am {:.4}, lm {:.4}, {} silence frames)",
                r.objective,
                r.am_component,
                r.lm_component,
                r.silence_count
            );
            Ok(())
        }
        Command::Evaluate {
            am,
            manifest,
            report,
            inputs,
        } => {
            let opts = decoder_options(&config, &inputs.flags)?;
            let model = checkpoint::load_acoustic(&am)?;
            let data = load_utterances(&Manifest::load(&manifest)?)?;
            let trie = load_trie(&inputs.lexicon, &model.alphabet)?;
            let lm = load_lm(&inputs.lm)?;
            let items = compute_emissions(&model, &data, false)?;
            let r = evaluate_emissions(&items, &model.transitions, &model.alphabet, &trie, lm.as_ref(), &opts)?;
            println!(
                "WER {:.2}% CER {:.2}% (S {} D {} I {} over {} words, {} failed)",
                r.wer, r.cer, r.substitutions, r.deletions, r.insertions, r.reference_words, r.failures
            );
            if let Some(p) = report {
                fs::write(&p, r.to_csv())?;
            }
            Ok(())
        }
        Command::Tune {
            am,
            manifest,
            alphas,
            betas,
            gammas,
            inputs,
        } => {
            let base = decoder_options(&config, &inputs.flags)?;
            let model = checkpoint::load_acoustic(&am)?;
            let data = load_utterances(&Manifest::load(&manifest)?)?;
            let trie = load_trie(&inputs.lexicon, &model.alphabet)?;
            let lm = load_lm(&inputs.lm)?;
            let dev: Vec<_> = compute_emissions(&model, &data, false)?
                .into_iter()
                .map(|(_, em, text)| (em, text))
                .collect();
            let grid = TuneGrid {
                alphas,
                betas,
                gammas,
            };
            let r = tune_grid(
                &dev,
                &model.transitions,
                &model.alphabet,
                &trie,
                lm.as_ref(),
                &grid,
                &base,
                [TuneStage::SEARCH, TuneStage::FINAL],
            )?;
            println!("alpha,beta,gamma,wer");
            for row in &r.rows {
                println!("{},{},{},{}", row.alpha, row.beta, row.gamma, row.wer);
            }
            println!(
                "# best alpha={} beta={} gamma={}: {:.2}% at search beam, {:.2}% at final beam",
                r.best.alpha, r.best.beta, r.best.gamma, r.search_wer, r.final_wer
            );
            Ok(())
        }
        Command::AnalyzeFrontend { am, out } => {
            let model = checkpoint::load_acoustic(&am)?;
            let fe = model
                .frontend
                .as_learnable()
                .context("the checkpoint uses the fixed mel front-end")?;
            let a = analyze_filters(fe);
            fs::create_dir_all(&out)?;
            let mut centers = String::from("filter,rank,center_hz\n");
            for (rank, &f) in a.order.iter().enumerate() {
                centers.push_str(&format!("{f},{rank},{}\n", a.center_frequencies[rank]));
            }
            fs::write(out.join("center_frequencies.csv"), centers)?;
            let mut heat = String::from("rank,filter");
            for hz in &a.bin_hz {
                heat.push_str(&format!(",{hz}"));
            }
            heat.push('\n');
            for (rank, &f) in a.order.iter().enumerate() {
                heat.push_str(&format!("{rank},{f}"));
                for v in a.power_spectra.row(rank) {
                    heat.push_str(&format!(",{v}"));
                }
                heat.push('\n');
            }
            fs::write(out.join("filter_heatmap.csv"), heat)?;
            println!("wrote {} filters to {}", a.order.len(), out.display());
            Ok(())
        }
        Command::PplWer {
            am,
            manifest,
            text,
            lms,
            lexicon,
            flags,
            out,
        } => {
            let opts = decoder_options(&config, &flags)?;
            let model = checkpoint::load_acoustic(&am)?;
            let data = load_utterances(&Manifest::load(&manifest)?)?;
            let items = compute_emissions(&model, &data, false)?;
            let trie = load_trie(&lexicon, &model.alphabet)?;
            let loaded = lms.iter().map(|p| load_lm(p)).collect::<Result<Vec<_>>>()?;
            let vocab = loaded.first().context("no language models given")?.vocab().clone();
            let held: Vec<Vec<usize>> = read_corpus(&fs::read_to_string(&text)?)
                .iter()
                .map(|s| s.iter().map(|w| vocab.id(w)).collect())
                .collect();
            let checkpoints: Vec<(String, &dyn LanguageModel)> = lms
                .iter()
                .zip(&loaded)
                .map(|(p, lm)| (p.display().to_string(), lm.as_ref()))
                .collect();
            let setup = StudySetup {
                items: &items,
                transitions: &model.transitions,
                alphabet: &model.alphabet,
                trie: &trie,
                opts,
            };
            let rows = perplexity_wer_study(&checkpoints, &held, &setup)?;
            let (p, w): (Vec<f64>, Vec<f64>) = rows.iter().map(|r| (r.perplexity, r.wer)).unzip();
            emit(&ppl_wer_csv(&rows), out.as_deref())?;
            match metrics::spearman(&p, &w) {
                Some(rho) => log::info!("Spearman correlation between perplexity and WER: {rho:.3}"),
                None => log::info!("Spearman correlation undefined (constant column)"),
            }
            Ok(())
        }
        Command::ContextWer {
            am,
            manifest,
            limits,
            inputs,
            out,
        } => {
            let opts = decoder_options(&config, &inputs.flags)?;
            let model = checkpoint::load_acoustic(&am)?;
            let data = load_utterances(&Manifest::load(&manifest)?)?;
            let items = compute_emissions(&model, &data, false)?;
            let trie = load_trie(&inputs.lexicon, &model.alphabet)?;
            let lm = load_lm(&inputs.lm)?;
            let setup = StudySetup {
                items: &items,
                transitions: &model.transitions,
                alphabet: &model.alphabet,
                trie: &trie,
                opts,
            };
            let rows = context_wer_study(&lm.as_ref(), &limits, &setup)?;
            emit(&context_wer_csv(&rows), out.as_deref())
        }
    }
}

fn emit(csv: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => fs::write(p, csv).with_context(|| p.display().to_string()),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn decoder_options(config: &Config, flags: &DecodeFlags) -> Result<DecoderOptions> {
    let mut o = cfgfile::decoder_options(config)?;
    if let Some(v) = flags.alpha {
        o.alpha = v;
    }
    if let Some(v) = flags.beta {
        o.beta = v;
    }
    if let Some(v) = flags.gamma {
        o.gamma = v;
    }
    if let Some(v) = flags.beam_size {
        o.beam_size = v;
    }
    if let Some(v) = flags.beam_score {
        o.beam_score = v;
    }
    o.normalize_emissions |= flags.normalize;
    o.validate()?;
    Ok(o)
}

fn load_trie(path: &Path, alphabet: &convasr::criterion::Alphabet) -> Result<LexiconTrie> {
    let text = fs::read_to_string(path).with_context(|| path.display().to_string())?;
    Ok(LexiconTrie::build(&parse_lexicon(&text)?, alphabet)?)
}

fn load_lm(path: &Path) -> Result<Box<dyn LanguageModel>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("arpa") => {
            let text = fs::read_to_string(path).with_context(|| path.display().to_string())?;
            Ok(Box::new(NGramModel::from_arpa_str(&text)?))
        }
        Some("json") => Ok(Box::new(GcnnLm::new(checkpoint::load_gcnn(path)?))),
        _ => bail!("{}: expected a .arpa or .json language model", path.display()),
    }
}

fn synth_data(out: &Path, sizes: [usize; 3], lm_text: usize, snr: Option<f64>, seed: u64) -> Result<()> {
    let spec = SyntheticTaskSpec {
        snr_db: snr,
        ..SyntheticTaskSpec::default()
    };
    fs::create_dir_all(out)?;
    for (i, (split, n)) in ["train", "dev", "test"].iter().zip(sizes).enumerate() {
        let m = synthesize_dataset(&spec, n, seed.wrapping_mul(10).wrapping_add(i as u64), out, split)?;
        log::info!("{split}: {} utterances", m.len());
    }
    let text = synthesize_text(&spec, lm_text, seed.wrapping_mul(10).wrapping_add(3))?;
    fs::write(out.join("lm_train.txt"), text.join("\n") + "\n")?;
    let held = synthesize_text(&spec, lm_text / 5 + 1, seed.wrapping_mul(10).wrapping_add(4))?;
    fs::write(out.join("lm_valid.txt"), held.join("\n") + "\n")?;
    fs::write(
        out.join("lexicon.txt"),
        convasr::decoder::format_lexicon(&spec.lexicon_entries()),
    )?;
    Ok(())
}

fn train_am(config: &Config, train: &Path, valid: Option<&Path>, out: &Path, keep_epochs: bool) -> Result<()> {
    let model_cfg = cfgfile::model_config(config)?;
    let train_cfg = cfgfile::train_config(config)?;
    let train_set = load_utterances(&Manifest::load(train)?)?;
    let valid_set = match valid {
        Some(p) => load_utterances(&Manifest::load(p)?)?,
        None => Vec::new(),
    };
    let mut letters: Vec<String> = train_set
        .iter()
        .flat_map(|u| u.text.chars())
        .filter(|c| !c.is_whitespace())
        .map(|c| c.to_string())
        .collect();
    letters.sort();
    letters.dedup();
    let alphabet = convasr::criterion::Alphabet::with_letters(&letters)?;
    let mut rng = StdRng::seed_from_u64(train_cfg.seed);
    let mut model = AsrModel::new(alphabet, model_cfg, &mut rng)?;
    let report = train_acoustic_with(&mut model, &train_set, &valid_set, &train_cfg, |e, m| {
        if keep_epochs {
            checkpoint::save_acoustic(&out.with_extension(format!("epoch{}.json", e.epoch)), m)?;
        }
        Ok(())
    })?;
    checkpoint::save_acoustic(out, &model)?;
    println!("epoch,lr,train_loss,valid_loss");
    for e in &report.epochs {
        println!(
            "{},{},{},{}",
            e.epoch,
            e.lr,
            e.train_loss,
            e.valid_loss.map_or(String::new(), |v| v.to_string())
        );
    }
    if report.skipped > 0 {
        log::warn!("{} utterances skipped as infeasible", report.skipped);
    }
    Ok(())
}
