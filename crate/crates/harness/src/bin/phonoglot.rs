//! Command-line front end: text processing, tokenizers, LMs, decode graphs,
//! training, decoding, scoring, synthetic worlds and experiments.

use std::io::Read as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use phonoglot::acoustic::{
    embeddings_to_tsv, export_embeddings, forward, load_features, InitMode, ModelCheckpoint,
};
use phonoglot::bpe::{decode_tokens, train_bpe, BpeModel};
use phonoglot::ctc::prefix_beam_search;
use phonoglot::eval::{edit_distance, rate_percent, ErrorCounts};
use phonoglot::inventory::{build_union_alphabet, Alphabet, LanguageInventory, UnitKind};
use phonoglot::text::{apply_g2p, build_prolex, normalize, NormRules, Normalized, Prolex};
use phonoglot::wfst::{
    build_decode_graph, decode, train_ngram, DecodeOptions, Fst, NGramModel, Semiring, Smoothing,
    SymbolTable,
};
use phonoglot_harness::config::{load_toml, Scale};
use phonoglot_harness::experiment::load_bpe;
use phonoglot_harness::{
    gen_world, load_world, run_experiment, run_study, write_world, ExperimentConfig, Mode, Supervision,
    WorldConfig,
};

#[derive(Parser)]
#[command(name = "phonoglot", version, about = "Phoneme-supervised multilingual CTC toolkit")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Random seed (overrides the config's seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file or directory (stdout when omitted for text outputs).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize text, one sentence per line; rejected lines are dropped.
    Normalize {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Print G2P pronunciations of words (one per line).
    G2p {
        #[arg(long)]
        fst: PathBuf,
        #[arg(long)]
        words: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        nbest: usize,
    },
    /// Build a pronunciation lexicon (TSV) from a word list and a G2P FST.
    Lexicon {
        #[arg(long)]
        fst: PathBuf,
        #[arg(long)]
        words: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        nbest: usize,
    },
    #[command(subcommand)]
    Tokenizer(TokenizerCmd),
    #[command(subcommand)]
    Lm(LmCmd),
    #[command(subcommand)]
    Graph(GraphCmd),
    /// Train a monolingual or multilingual model on a world.
    Train {
        #[arg(long)]
        world: PathBuf,
        #[arg(long, value_enum, default_value_t = TrainMode::Monolingual)]
        mode: TrainMode,
        #[arg(long, value_enum)]
        supervision: Option<SupervisionArg>,
        /// Target language of monolingual training.
        #[arg(long)]
        language: Option<String>,
    },
    /// Finetune a pretrained checkpoint on a world language.
    Finetune {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        pretrained: PathBuf,
        #[arg(long)]
        language: Option<String>,
        /// Finetuning utterances (default: the whole training split).
        #[arg(long)]
        utterances: Option<usize>,
        #[arg(long, value_enum)]
        init_mode: Option<InitModeArg>,
    },
    /// Decode a feature archive, one hypothesis per line.
    Decode(DecodeArgs),
    /// Score hypotheses against references (line-aligned).
    Eval {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        hyp: PathBuf,
        /// Score characters instead of whitespace-separated tokens.
        #[arg(long)]
        chars: bool,
    },
    #[command(subcommand)]
    World(WorldCmd),
    #[command(subcommand)]
    Experiment(ExperimentCmd),
    #[command(subcommand)]
    Embeddings(EmbeddingsCmd),
}

#[derive(Subcommand)]
enum TokenizerCmd {
    /// Learn BPE merges from text.
    Train {
        #[arg(long)]
        text: PathBuf,
        #[arg(long)]
        vocab_size: usize,
    },
    /// Segment text into subword tokens.
    Encode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        text: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum LmCmd {
    /// Train a Witten-Bell word n-gram LM and write ARPA.
    Train {
        #[arg(long)]
        text: PathBuf,
        #[arg(long, default_value_t = 3)]
        order: usize,
    },
}

#[derive(Subcommand)]
enum GraphCmd {
    /// Build a T∘L∘G decode graph.
    Build {
        /// Phoneme inventory (one unit per line) ...
        #[arg(long, conflicts_with = "bpe", required_unless_present = "bpe")]
        inventory: Option<PathBuf>,
        /// ... or a BPE model whose tokens spell the lexicon words.
        #[arg(long)]
        bpe: Option<PathBuf>,
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long)]
        lm: PathBuf,
    },
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("search").required(true).args(["graph", "lexicon_free"]))]
struct DecodeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    feats: PathBuf,
    /// T∘L∘G graph built for the model's alphabet.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Prefix beam search without lexicon or LM.
    #[arg(long)]
    lexicon_free: bool,
    #[arg(long, default_value_t = phonoglot::ctc::DEFAULT_BEAM)]
    beam: usize,
    #[arg(long, default_value_t = 30.0)]
    score_beam: f64,
    #[arg(long, default_value_t = 1.0)]
    acoustic_scale: f64,
}

#[derive(Subcommand)]
enum WorldCmd {
    /// Generate a synthetic world directory.
    Gen,
}

#[derive(Subcommand)]
enum ExperimentCmd {
    /// Run an experiment config against a world directory.
    Run {
        #[arg(long)]
        world: PathBuf,
    },
    /// Run the comparison study for several seeds and print one CSV row each.
    Study {
        #[arg(long)]
        world: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [1u64, 2, 3, 4, 5])]
        seeds: Vec<u64>,
    },
}

#[derive(Subcommand)]
enum EmbeddingsCmd {
    /// Write a checkpoint's output-layer unit embeddings as TSV.
    Export {
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TrainMode {
    Monolingual,
    MultilingualPhoneme,
    MultilingualSubword,
}

#[derive(Clone, Copy, ValueEnum)]
enum SupervisionArg {
    Phoneme,
    Subword,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitModeArg {
    CopyShared,
    RandomAll,
}

fn read_input(path: Option<&Path>) -> Result<String> {
    match path {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())),
        None => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s)?;
            Ok(s)
        }
    }
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn require_out(common: &Common) -> Result<&Path> {
    common.out.as_deref().context("--out is required for this command")
}

fn load_g2p(path: &Path) -> Result<Fst> {
    Ok(Fst::from_text(&read_file(path)?, Semiring::Tropical, SymbolTable::new(), SymbolTable::new())?)
}

fn experiment_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg: ExperimentConfig = match &common.config {
        Some(p) => load_toml(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    let out = common.out.as_deref();
    match cli.command {
        Command::Normalize { input } => {
            let rules = NormRules::default();
            let mut text = String::new();
            for line in read_input(input.as_deref())?.lines() {
                match normalize(line, &rules) {
                    Normalized::Normalized(s) => {
                        text.push_str(&s);
                        text.push('\n');
                    }
                    Normalized::Rejected(why) => log::info!("dropped {line:?}: {why}"),
                }
            }
            emit(out, &text)
        }
        Command::G2p { fst, words, nbest } => {
            let g2p = load_g2p(&fst)?;
            let rules = NormRules::default();
            let mut text = String::new();
            for w in read_input(words.as_deref())?.split_whitespace() {
                for (phones, cost) in apply_g2p(&g2p, w, nbest, &rules)? {
                    text.push_str(&format!("{w}\t{}\t{cost}\n", phones.join(" ")));
                }
            }
            emit(out, &text)
        }
        Command::Lexicon { fst, words, nbest } => {
            let g2p = load_g2p(&fst)?;
            let input = read_input(words.as_deref())?;
            let words: Vec<&str> = input.split_whitespace().collect();
            let (lex, missing) = build_prolex(&words, &g2p, nbest, &NormRules::default())?;
            for m in &missing {
                log::warn!("no pronunciation for {m:?}");
            }
            emit(out, &lex.to_tsv())
        }
        Command::Tokenizer(TokenizerCmd::Train { text, vocab_size }) => {
            let corpus = read_file(&text)?;
            let lines: Vec<&str> = corpus.lines().collect();
            emit(out, &train_bpe(&lines, vocab_size)?.to_file_string())
        }
        Command::Tokenizer(TokenizerCmd::Encode { model, text }) => {
            let bpe = BpeModel::from_file_string(&read_file(&model)?)?;
            let mut res = String::new();
            for line in read_input(text.as_deref())?.lines() {
                res.push_str(&bpe.encode(line).join(" "));
                res.push('\n');
            }
            emit(out, &res)
        }
        Command::Lm(LmCmd::Train { text, order }) => {
            let corpus = read_file(&text)?;
            let sents: Vec<Vec<&str>> = corpus
                .lines()
                .map(|l| l.split_whitespace().collect::<Vec<_>>())
                .filter(|s| !s.is_empty())
                .collect();
            emit(out, &train_ngram(&sents, order, Smoothing::WittenBell)?.to_arpa())
        }
        Command::Graph(GraphCmd::Build { inventory, bpe, lexicon, lm }) => {
            let lex = Prolex::from_tsv(&read_file(&lexicon)?)?;
            let lm = NGramModel::from_arpa(&read_file(&lm)?)?;
            let (alphabet, lex) = match (inventory, bpe) {
                (Some(inv), _) => {
                    let inv = LanguageInventory::read("lang", &inv)?;
                    (build_union_alphabet(&[inv])?, lex)
                }
                (None, Some(b)) => {
                    let bpe = load_bpe(&b)?;
                    let mut spelled = Prolex::new();
                    for w in lex.words() {
                        spelled.insert(w, bpe.encode(w), 0.0)?;
                    }
                    (bpe.vocab().clone(), spelled)
                }
                (None, None) => bail!("--inventory or --bpe is required"),
            };
            let graph = build_decode_graph(&alphabet, &lex, &lm)?;
            emit(out, &graph.to_text()?)
        }
        Command::Train { world, mode, supervision, language } => {
            let w = load_world(&world)?;
            let mut cfg = experiment_config(common)?;
            cfg.mode = match mode {
                TrainMode::Monolingual => Mode::Monolingual,
                TrainMode::MultilingualPhoneme => Mode::MultilingualPhoneme,
                TrainMode::MultilingualSubword => Mode::MultilingualSubword,
            };
            cfg.supervision = match (mode, supervision) {
                (TrainMode::MultilingualPhoneme, _) => Supervision::Phoneme,
                (TrainMode::MultilingualSubword, _) => Supervision::Subword,
                (_, Some(SupervisionArg::Subword)) => Supervision::Subword,
                (_, Some(SupervisionArg::Phoneme)) => Supervision::Phoneme,
                (_, None) => cfg.supervision,
            };
            cfg.language = language.or(cfg.language);
            let report = run_experiment(&w, &cfg)?;
            print!("{}", report.results_csv());
            Ok(())
        }
        Command::Finetune { world, pretrained, language, utterances, init_mode } => {
            let w = load_world(&world)?;
            let mut cfg = experiment_config(common)?;
            let ckpt = ModelCheckpoint::load(&pretrained)?;
            cfg.mode = Mode::CrosslingualFt;
            cfg.supervision = match ckpt.alphabet.kind() {
                UnitKind::Phoneme => Supervision::Phoneme,
                UnitKind::Subword => Supervision::Subword,
            };
            cfg.pretrained = Some(pretrained);
            cfg.language = language.or(cfg.language);
            cfg.ft_data_scales = vec![match utterances {
                Some(n) => Scale::Utterances(n),
                None => Scale::All(phonoglot_harness::config::AllMarker::All),
            }];
            if let Some(m) = init_mode {
                cfg.init_mode = Some(match m {
                    InitModeArg::CopyShared => InitMode::CopyShared,
                    InitModeArg::RandomAll => InitMode::RandomAll,
                });
            }
            let report = run_experiment(&w, &cfg)?;
            print!("{}", report.results_csv());
            Ok(())
        }
        Command::Decode(args) => decode_cmd(&args, out),
        Command::Eval { reference, hyp, chars } => {
            let r = read_file(&reference)?;
            let h = read_file(&hyp)?;
            let (rl, hl): (Vec<&str>, Vec<&str>) = (r.lines().collect(), h.lines().collect());
            if rl.len() != hl.len() {
                bail!("{} reference lines but {} hypothesis lines", rl.len(), hl.len());
            }
            let mut total = ErrorCounts::default();
            for (a, b) in rl.iter().zip(&hl) {
                total += if chars {
                    let a: Vec<char> = a.chars().filter(|c| !c.is_whitespace()).collect();
                    let b: Vec<char> = b.chars().filter(|c| !c.is_whitespace()).collect();
                    edit_distance(&a, &b)
                } else {
                    let a: Vec<&str> = a.split_whitespace().collect();
                    let b: Vec<&str> = b.split_whitespace().collect();
                    edit_distance(&a, &b)
                };
            }
            println!(
                "{:.2}% (S={} D={} I={} N={})",
                rate_percent(&total)?,
                total.substitutions,
                total.deletions,
                total.insertions,
                total.reference_length
            );
            Ok(())
        }
        Command::World(WorldCmd::Gen) => {
            let mut cfg: WorldConfig = match &common.config {
                Some(p) => load_toml(p)?,
                None => WorldConfig::default(),
            };
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            let dir = require_out(common)?;
            let world = gen_world(&cfg)?;
            write_world(&world, dir)?;
            eprintln!("wrote {} languages to {}", world.languages.len(), dir.display());
            Ok(())
        }
        Command::Experiment(ExperimentCmd::Run { world }) => {
            let w = load_world(&world)?;
            let cfg = experiment_config(common)?;
            let report = run_experiment(&w, &cfg)?;
            print!("{}", report.results_csv());
            Ok(())
        }
        Command::Experiment(ExperimentCmd::Study { world, seeds }) => {
            let w = load_world(&world)?;
            let cfg = experiment_config(common)?;
            let dir = require_out(common)?;
            println!("seed,multilingual_per,monolingual_per,transfer_wer,scratch_wer,ward_phoneme,ward_subword");
            for seed in seeds {
                let o = run_study(&w, &cfg, seed, &dir.join(format!("seed-{seed}")))?;
                println!(
                    "{seed},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
                    o.multilingual_per, o.monolingual_per, o.transfer_wer, o.scratch_wer, o.ward_phoneme, o.ward_subword
                );
            }
            Ok(())
        }
        Command::Embeddings(EmbeddingsCmd::Export { model }) => {
            let ckpt = ModelCheckpoint::load(&model)?;
            emit(out, &embeddings_to_tsv(&export_embeddings(&ckpt)))
        }
    }
}

fn decode_cmd(args: &DecodeArgs, out: Option<&Path>) -> Result<()> {
    let ckpt = ModelCheckpoint::load(&args.model)?;
    let feats = load_features(&args.feats)?;
    let alphabet: &Alphabet = &ckpt.alphabet;
    let graph = match &args.graph {
        Some(g) => Some(Fst::from_text(
            &read_file(g)?,
            Semiring::Tropical,
            SymbolTable::from_symbols(alphabet.symbols()),
            SymbolTable::new(),
        )?),
        None => None,
    };
    let opts = DecodeOptions {
        beam: args.beam,
        score_beam: args.score_beam,
        acoustic_scale: args.acoustic_scale,
    };
    let mut text = String::new();
    let mut failures = 0;
    for (i, f) in feats.iter().enumerate() {
        let grid = forward(&ckpt, f)?;
        let line = match &graph {
            Some(g) => match decode(&grid, g, &opts) {
                Ok(r) => r.words.join(" "),
                Err(e) => {
                    eprintln!("utterance {i}: {e}");
                    failures += 1;
                    String::new()
                }
            },
            None => {
                let best = prefix_beam_search(&grid, args.beam)
                    .into_iter()
                    .next()
                    .map(|h| h.0)
                    .unwrap_or_default();
                let units = alphabet.decode(&best)?;
                match alphabet.kind() {
                    UnitKind::Phoneme => units.join(" "),
                    UnitKind::Subword => decode_tokens(&units),
                }
            }
        };
        text.push_str(&line);
        text.push('\n');
    }
    if failures > 0 {
        eprintln!("{failures} of {} utterances failed to decode", feats.len());
    }
    emit(out, &text)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
