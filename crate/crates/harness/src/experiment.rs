//! Experiment pipelines: text → units, training or transfer + finetuning,
//! decoding with prefix beam search and with a T∘L∘G graph, and scoring.

use std::path::{Path, PathBuf};

use phonoglot::acoustic::{
    forward, train, transfer_init, union_alphabet, History, ModelCheckpoint, TrainSchedule,
    Utterance as TrainUtterance,
};
use phonoglot::bpe::{decode_tokens, sample_corpus, train_bpe, BpeModel, LanguageStats};
use phonoglot::ctc::prefix_beam_search;
use phonoglot::eval::{edit_distance, macro_average, rate_percent, ward, ErrorCounts};
use phonoglot::inventory::{build_union_alphabet, Alphabet, UnitKind};
use phonoglot::text::Prolex;
use phonoglot::wfst::{
    build_decode_graph, decode, train_ngram, DecodeOptions, Fst, NGramModel, Smoothing,
};

use crate::config::{DecodeConfig, ExperimentConfig, Mode, Supervision};
use crate::report::{
    ForgettingReport, LanguageForgetting, Report, ResultRow, StageReport, MACRO_AVG, POOLED_AVG,
};
use crate::world::{Language, Utterance, World};
use crate::HarnessError;

/// How a language's text turns into model units.
#[derive(Debug, Clone, Copy)]
pub enum Units<'a> {
    /// Best lexicon pronunciation of every word.
    Phoneme(&'a Prolex),
    Subword(&'a BpeModel),
}

impl Units<'_> {
    pub fn sequence(&self, text: &str) -> Result<Vec<String>, HarnessError> {
        match self {
            Units::Phoneme(lex) => {
                let mut out = Vec::new();
                for w in text.split_whitespace() {
                    let p = lex
                        .best(w)
                        .ok_or_else(|| HarnessError::Config(format!("word {w:?} missing from lexicon")))?;
                    out.extend(p.phones.iter().cloned());
                }
                Ok(out)
            }
            Units::Subword(bpe) => Ok(bpe.encode(text)),
        }
    }

    /// Decoding lexicon: the pronunciation lexicon itself, or every lexicon
    /// word spelled in subword tokens.
    pub fn lexicon(&self, lang: &Language) -> Result<Prolex, HarnessError> {
        match self {
            Units::Phoneme(lex) => Ok((*lex).clone()),
            Units::Subword(bpe) => {
                let mut out = Prolex::new();
                for w in lang.lexicon.words() {
                    out.insert(w, bpe.encode(w), 0.0)?;
                }
                Ok(out)
            }
        }
    }
}

/// Mixes a stage tag into the experiment seed so every stage draws from
/// its own stream.
pub fn sub_seed(seed: u64, tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes().chain(seed.to_le_bytes()) {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn training_set(
    utts: &[Utterance],
    units: Units,
    alphabet: &Alphabet,
) -> Result<Vec<TrainUtterance>, HarnessError> {
    utts.iter()
        .map(|u| {
            let seq = units.sequence(&u.text)?;
            Ok(TrainUtterance {
                features: u.features.clone(),
                labels: alphabet.encode(&seq)?,
            })
        })
        .collect()
}

pub fn phoneme_alphabet(lang: &Language) -> Result<Alphabet, HarnessError> {
    Ok(build_union_alphabet(std::slice::from_ref(&lang.inventory))?)
}

pub fn train_texts(lang: &Language) -> Vec<&str> {
    lang.train.iter().map(|u| u.text.as_str()).collect()
}

/// Word n-gram LM over a language's training text.
pub fn language_model(lang: &Language, order: usize) -> Result<NGramModel, HarnessError> {
    let sents: Vec<Vec<&str>> = lang
        .train
        .iter()
        .map(|u| u.text.split_whitespace().collect())
        .collect();
    Ok(train_ngram(&sents, order, Smoothing::WittenBell)?)
}

/// T∘L∘G for one language under a model's alphabet.
pub fn language_graph(
    alphabet: &Alphabet,
    lang: &Language,
    units: Units,
    lm_order: usize,
) -> Result<Fst, HarnessError> {
    let lex = units.lexicon(lang)?;
    let lm = language_model(lang, lm_order)?;
    Ok(build_decode_graph(alphabet, &lex, &lm)?)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LanguageScores {
    /// Prefix-beam phoneme errors (phoneme models only).
    pub per: Option<ErrorCounts>,
    /// Word errors of T∘L∘G decoding.
    pub wer: ErrorCounts,
    /// Word errors of lexicon-free prefix-beam decoding (subword models only).
    pub wer_lexfree: Option<ErrorCounts>,
    pub decode_failures: usize,
}

impl LanguageScores {
    fn add(&mut self, o: &LanguageScores) {
        fn opt(a: &mut Option<ErrorCounts>, b: Option<ErrorCounts>) {
            if let Some(b) = b {
                *a.get_or_insert_with(ErrorCounts::default) += b;
            }
        }
        opt(&mut self.per, o.per);
        opt(&mut self.wer_lexfree, o.wer_lexfree);
        self.wer += o.wer;
        self.decode_failures += o.decode_failures;
    }

    /// `(metric, percent)` pairs.
    pub fn metrics(&self) -> Result<Vec<(&'static str, f64)>, HarnessError> {
        let mut out = Vec::new();
        if let Some(p) = &self.per {
            out.push(("per", rate_percent(p)?));
        }
        out.push(("wer", rate_percent(&self.wer)?));
        if let Some(w) = &self.wer_lexfree {
            out.push(("wer_lexfree", rate_percent(w)?));
        }
        Ok(out)
    }
}

/// Decodes and scores `utts`. A T∘L∘G decode failure is logged and scored
/// as an empty hypothesis.
pub fn score_utterances(
    ckpt: &ModelCheckpoint,
    utts: &[Utterance],
    units: Units,
    graph: &Fst,
    decode_cfg: &DecodeConfig,
) -> Result<LanguageScores, HarnessError> {
    let opts = DecodeOptions {
        beam: decode_cfg.graph_beam,
        score_beam: decode_cfg.score_beam,
        acoustic_scale: decode_cfg.acoustic_scale,
    };
    let alphabet = &ckpt.alphabet;
    let mut s = LanguageScores::default();
    for (i, u) in utts.iter().enumerate() {
        let grid = forward(ckpt, &u.features)?;
        let ref_words: Vec<&str> = u.text.split_whitespace().collect();
        let hyp_words = match decode(&grid, graph, &opts) {
            Ok(r) => r.words,
            Err(e) => {
                log::warn!("utterance {i}: decode failed: {e}");
                s.decode_failures += 1;
                Vec::new()
            }
        };
        s.wer += edit_distance(&ref_words, &hyp_words.iter().map(String::as_str).collect::<Vec<_>>());
        let best = prefix_beam_search(&grid, decode_cfg.beam)
            .into_iter()
            .next()
            .map(|h| h.0)
            .unwrap_or_default();
        match units {
            Units::Phoneme(_) => {
                let reference = alphabet.encode(&units.sequence(&u.text)?)?;
                *s.per.get_or_insert_with(ErrorCounts::default) += edit_distance(&reference, &best);
            }
            Units::Subword(_) => {
                let tokens = alphabet.decode(&best)?;
                let text = decode_tokens(&tokens);
                let hyp: Vec<&str> = text.split_whitespace().collect();
                *s.wer_lexfree.get_or_insert_with(ErrorCounts::default) += edit_distance(&ref_words, &hyp);
            }
        }
    }
    Ok(s)
}

/// Scores one language on one split, building its decode graph.
pub fn score_language(
    ckpt: &ModelCheckpoint,
    lang: &Language,
    split: &str,
    units: Units,
    decode_cfg: &DecodeConfig,
) -> Result<LanguageScores, HarnessError> {
    let graph = language_graph(&ckpt.alphabet, lang, units, decode_cfg.lm_order)?;
    score_utterances(ckpt, lang.split(split), units, &graph, decode_cfg)
}

struct Run<'a> {
    world: &'a World,
    cfg: &'a ExperimentConfig,
    report: Report,
}

impl Run<'_> {
    fn out(&self, name: &str) -> PathBuf {
        self.cfg.output_dir.join(name)
    }

    fn push_scores(
        &mut self,
        mode: &str,
        scale: &str,
        language: &str,
        split: &str,
        scores: &LanguageScores,
    ) -> Result<(), HarnessError> {
        for (metric, value) in scores.metrics()? {
            self.report.results.push(ResultRow {
                experiment: self.cfg.id.clone(),
                mode: mode.into(),
                scale: scale.into(),
                language: language.into(),
                split: split.into(),
                metric: metric.into(),
                value,
            });
        }
        Ok(())
    }

    fn push_value(&mut self, mode: &str, scale: &str, language: &str, split: &str, metric: &str, value: f64) {
        self.report.results.push(ResultRow {
            experiment: self.cfg.id.clone(),
            mode: mode.into(),
            scale: scale.into(),
            language: language.into(),
            split: split.into(),
            metric: metric.into(),
            value,
        });
    }

    #[allow(clippy::too_many_arguments)]
    fn push_stage(
        &mut self,
        stage: &str,
        mode: &str,
        scale: &str,
        train_utterances: usize,
        history: History,
        decode_failures: usize,
        checkpoint: Option<&Path>,
    ) {
        self.report.stages.push(StageReport {
            stage: stage.into(),
            mode: mode.into(),
            scale: scale.into(),
            train_utterances,
            epochs_to_converge: history.epochs_to_converge,
            epochs_run: history.epochs.len(),
            early_stopped: history.early_stopped,
            initial_train_loss: history.initial_train_loss,
            final_train_loss: history.final_train_loss,
            final_val_loss: history.final_val_loss,
            skipped_utterances: history.skipped_utterances,
            decode_failures,
            checkpoint: checkpoint.map(|p| p.display().to_string()),
            history: history.epochs,
        });
    }

    /// Evaluates `ckpt` on several languages over the configured splits,
    /// adding per-language rows plus macro and pooled averages when more
    /// than one language is scored. Returns the total decode failures.
    fn evaluate_languages(
        &mut self,
        ckpt: &ModelCheckpoint,
        langs: &[(&Language, Units)],
        mode: &str,
        scale: &str,
    ) -> Result<usize, HarnessError> {
        let mut failures = 0;
        let splits = self.cfg.eval_splits.clone();
        for split in &splits {
            let mut pooled = LanguageScores::default();
            let mut per_lang: Vec<Vec<(&'static str, f64)>> = Vec::new();
            for &(lang, units) in langs {
                let s = score_language(ckpt, lang, split, units, &self.cfg.decode)?;
                self.push_scores(mode, scale, &lang.code, split, &s)?;
                failures += s.decode_failures;
                per_lang.push(s.metrics()?);
                pooled.add(&s);
            }
            if langs.len() > 1 {
                self.push_scores(mode, scale, POOLED_AVG, split, &pooled)?;
                for (k, (metric, _)) in per_lang[0].iter().enumerate() {
                    let rates: Vec<f64> = per_lang.iter().map(|m| m[k].1).collect();
                    let avg = macro_average(&rates).expect("non-empty");
                    self.push_value(mode, scale, MACRO_AVG, split, metric, avg);
                }
            }
        }
        Ok(failures)
    }
}

fn save_model(ckpt: &ModelCheckpoint, bpe: Option<&BpeModel>, path: &Path) -> Result<(), HarnessError> {
    ckpt.save(path)?;
    if let Some(b) = bpe {
        let p = bpe_sidecar(path);
        std::fs::write(&p, b.to_file_string())
            .map_err(|e| HarnessError::Io(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

/// Subword checkpoints keep their tokenizer next to them as `<stem>.bpe`.
pub fn bpe_sidecar(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("bpe")
}

pub fn load_bpe(path: &Path) -> Result<BpeModel, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Config(format!("tokenizer {}: {e}", path.display())))?;
    Ok(BpeModel::from_file_string(&text)?)
}

fn fit(
    init: ModelCheckpoint,
    train_set: &[TrainUtterance],
    valid: &[TrainUtterance],
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<(ModelCheckpoint, History), HarnessError> {
    Ok(train(init, train_set, valid, schedule, seed)?)
}

/// Runs one experiment on an in-memory world, writes its checkpoints and
/// reports into `cfg.output_dir`, and returns the report.
pub fn run_experiment(world: &World, cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    cfg.validate()?;
    if cfg.model.encoder.input_dim != world.config.feature_dim {
        return Err(HarnessError::Config(format!(
            "encoder input_dim {} does not match the world's feature_dim {}",
            cfg.model.encoder.input_dim, world.config.feature_dim
        )));
    }
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| HarnessError::Io(format!("{}: {e}", cfg.output_dir.display())))?;
    let mut run = Run {
        world,
        cfg,
        report: Report {
            experiment: cfg.id.clone(),
            world_seed: world.config.seed,
            config: cfg.clone(),
            results: Vec::new(),
            stages: Vec::new(),
            forgetting: None,
        },
    };
    match cfg.mode {
        Mode::Monolingual => monolingual(&mut run)?,
        Mode::MultilingualPhoneme => multilingual_phoneme(&mut run)?,
        Mode::MultilingualSubword => multilingual_subword(&mut run)?,
        Mode::CrosslingualFt => crosslingual(&mut run)?,
    }
    run.report.write(&cfg.output_dir)?;
    Ok(run.report)
}

fn target_language<'w>(run: &Run<'w>, default: Option<&'w Language>) -> Result<&'w Language, HarnessError> {
    match &run.cfg.language {
        Some(code) => run.world.language(code),
        None => default.ok_or_else(|| HarnessError::Config("world has no language for this mode".into())),
    }
}

fn monolingual(run: &mut Run) -> Result<(), HarnessError> {
    let cfg = run.cfg;
    let lang = target_language(run, Some(run.world.lowest_resource_seen()))?;
    let bpe = match cfg.supervision {
        Supervision::Phoneme => None,
        Supervision::Subword => Some(train_bpe(&train_texts(lang), cfg.model.bpe_vocab_size)?),
    };
    let (alphabet, units) = match &bpe {
        None => (phoneme_alphabet(lang)?, Units::Phoneme(&lang.lexicon)),
        Some(b) => (b.vocab().clone(), Units::Subword(b)),
    };
    let tr = training_set(&lang.train, units, &alphabet)?;
    let dv = training_set(&lang.dev, units, &alphabet)?;
    let init = ModelCheckpoint::init(cfg.model.encoder.clone(), alphabet, sub_seed(cfg.seed, "init"))?;
    let (ckpt, hist) = fit(init, &tr, &dv, &cfg.model.schedule, sub_seed(cfg.seed, "train"))?;
    let path = run.out("model.ckpt");
    save_model(&ckpt, bpe.as_ref(), &path)?;
    let fails = run.evaluate_languages(&ckpt, &[(lang, units)], "monolingual", "all")?;
    run.push_stage("train", "monolingual", "all", tr.len(), hist, fails, Some(&path));
    Ok(())
}

fn multilingual_phoneme(run: &mut Run) -> Result<(), HarnessError> {
    let cfg = run.cfg;
    let seen: Vec<&Language> = run.world.seen().collect();
    let inventories: Vec<_> = seen.iter().map(|l| l.inventory.clone()).collect();
    let alphabet = build_union_alphabet(&inventories)?;
    let mut tr = Vec::new();
    let mut dv = Vec::new();
    for l in &seen {
        tr.extend(training_set(&l.train, Units::Phoneme(&l.lexicon), &alphabet)?);
        dv.extend(training_set(&l.dev, Units::Phoneme(&l.lexicon), &alphabet)?);
    }
    let init = ModelCheckpoint::init(cfg.model.encoder.clone(), alphabet, sub_seed(cfg.seed, "init"))?;
    let (ckpt, hist) = fit(init, &tr, &dv, &cfg.model.schedule, sub_seed(cfg.seed, "train"))?;
    let path = run.out("model.ckpt");
    save_model(&ckpt, None, &path)?;
    let targets: Vec<_> = seen.iter().map(|&l| (l, Units::Phoneme(&l.lexicon))).collect();
    let fails = run.evaluate_languages(&ckpt, &targets, "multilingual_phoneme", "all")?;
    run.push_stage("pretrain", "multilingual_phoneme", "all", tr.len(), hist, fails, Some(&path));
    Ok(())
}

/// Tokenizer shared by all seen languages, trained on a language-balanced
/// resample of their training text.
pub fn multilingual_bpe(world: &World, vocab_size: usize, beta: f64, seed: u64) -> Result<BpeModel, HarnessError> {
    let corpora: Vec<Vec<&str>> = world.seen().map(train_texts).collect();
    let counts: Vec<u64> = corpora.iter().map(|c| c.len() as u64).collect();
    let total = counts.iter().sum::<u64>() as usize;
    let sample = sample_corpus(&corpora, &LanguageStats::new(counts, beta), total, seed)?;
    let sentences: Vec<&str> = sample.iter().map(|(_, s)| s.as_str()).collect();
    Ok(train_bpe(&sentences, vocab_size)?)
}

fn multilingual_subword(run: &mut Run) -> Result<(), HarnessError> {
    let cfg = run.cfg;
    let seen: Vec<&Language> = run.world.seen().collect();
    let bpe = multilingual_bpe(
        run.world,
        cfg.model.bpe_multilingual_vocab_size,
        cfg.model.bpe_beta,
        sub_seed(cfg.seed, "bpe"),
    )?;
    let alphabet = bpe.vocab().clone();
    let mut tr = Vec::new();
    let mut dv = Vec::new();
    for l in &seen {
        tr.extend(training_set(&l.train, Units::Subword(&bpe), &alphabet)?);
        dv.extend(training_set(&l.dev, Units::Subword(&bpe), &alphabet)?);
    }
    let init = ModelCheckpoint::init(cfg.model.encoder.clone(), alphabet, sub_seed(cfg.seed, "init"))?;
    let (ckpt, hist) = fit(init, &tr, &dv, &cfg.model.schedule, sub_seed(cfg.seed, "train"))?;
    let path = run.out("model.ckpt");
    save_model(&ckpt, Some(&bpe), &path)?;
    let targets: Vec<_> = seen.iter().map(|&l| (l, Units::Subword(&bpe))).collect();
    let fails = run.evaluate_languages(&ckpt, &targets, "multilingual_subword", "all")?;
    run.push_stage("pretrain", "multilingual_subword", "all", tr.len(), hist, fails, Some(&path));
    Ok(())
}

fn crosslingual(run: &mut Run) -> Result<(), HarnessError> {
    let cfg = run.cfg;
    let lang = target_language(run, run.world.unseen().next())?;
    let pt_path = cfg.pretrained.as_ref().expect("validated");
    let pretrained = ModelCheckpoint::load(pt_path)?;
    let expected = match cfg.supervision {
        Supervision::Phoneme => UnitKind::Phoneme,
        Supervision::Subword => UnitKind::Subword,
    };
    if pretrained.alphabet.kind() != expected {
        return Err(HarnessError::Config(format!(
            "pretrained checkpoint has {} units but supervision is {:?}",
            pretrained.alphabet.kind(),
            cfg.supervision
        )));
    }
    let pt_bpe = match cfg.supervision {
        Supervision::Phoneme => None,
        Supervision::Subword => Some(load_bpe(&bpe_sidecar(pt_path))?),
    };
    // target-language units: its phoneme inventory or its own tokenizer
    let cross_bpe = match cfg.supervision {
        Supervision::Phoneme => None,
        Supervision::Subword => Some(train_bpe(&train_texts(lang), cfg.model.bpe_vocab_size)?),
    };
    let (cross_alphabet, units) = match &cross_bpe {
        None => (phoneme_alphabet(lang)?, Units::Phoneme(&lang.lexicon)),
        Some(b) => (b.vocab().clone(), Units::Subword(b)),
    };
    let init_mode = cfg.init_mode();
    let dv = training_set(&lang.dev, units, &cross_alphabet)?;

    for scale in &cfg.ft_data_scales {
        let label = scale.label();
        let n = scale.take(lang.train.len());
        let tr = training_set(&lang.train[..n], units, &cross_alphabet)?;
        let init = transfer_init(&pretrained, &cross_alphabet, init_mode, sub_seed(cfg.seed, &format!("init-{label}")))?;
        let (ckpt, hist) = fit(init, &tr, &dv, &cfg.model.finetune, sub_seed(cfg.seed, &format!("ft-{label}")))?;
        let path = run.out(&format!("ft-{label}.ckpt"));
        save_model(&ckpt, cross_bpe.as_ref(), &path)?;
        let fails = run.evaluate_languages(&ckpt, &[(lang, units)], "crosslingual_ft", &label)?;
        run.push_stage(&format!("ft-{label}"), "crosslingual_ft", &label, n, hist, fails, Some(&path));
    }

    if cfg.from_scratch_baseline {
        for scale in &cfg.ft_data_scales {
            let label = scale.label();
            let n = scale.take(lang.train.len());
            let tr = training_set(&lang.train[..n], units, &cross_alphabet)?;
            let init = ModelCheckpoint::init(
                cfg.model.encoder.clone(),
                cross_alphabet.clone(),
                sub_seed(cfg.seed, &format!("scratch-init-{label}")),
            )?;
            let (ckpt, hist) = fit(init, &tr, &dv, &cfg.model.schedule, sub_seed(cfg.seed, &format!("scratch-{label}")))?;
            let fails = run.evaluate_languages(&ckpt, &[(lang, units)], "from_scratch", &label)?;
            run.push_stage(&format!("scratch-{label}"), "from_scratch", &label, n, hist, fails, None);
        }
    }

    if cfg.forgetting {
        forgetting(run, lang, &pretrained, pt_bpe.as_ref(), &cross_alphabet, units)?;
    }
    Ok(())
}

/// Finetunes on a few target-language utterances over the union of the
/// pretrained and target units, then measures how much the seen languages'
/// test WER degrades.
fn forgetting(
    run: &mut Run,
    lang: &Language,
    pretrained: &ModelCheckpoint,
    pt_bpe: Option<&BpeModel>,
    cross_alphabet: &Alphabet,
    units: Units,
) -> Result<(), HarnessError> {
    let cfg = run.cfg;
    let seen: Vec<&Language> = run.world.seen().collect();
    let n = cfg.forgetting_ft_utterances.min(lang.train.len());
    let scale = format!("forgetting-{n}");
    let target = union_alphabet(&pretrained.alphabet, cross_alphabet)?;
    let tr = training_set(&lang.train[..n], units, &target)?;
    let dv = training_set(&lang.dev, units, &target)?;
    let init = transfer_init(pretrained, &target, cfg.init_mode(), sub_seed(cfg.seed, "forget-init"))?;
    let (ckpt, hist) = fit(init, &tr, &dv, &cfg.model.finetune, sub_seed(cfg.seed, "forget-ft"))?;
    let path = run.out(&format!("{scale}.ckpt"));
    ckpt.save(&path)?;

    let mut failures = 0;
    let ft = score_language(&ckpt, lang, "test", units, &cfg.decode)?;
    failures += ft.decode_failures;
    run.push_scores("forgetting", &scale, &lang.code, "test", &ft)?;
    let mut per_lang = Vec::new();
    for l in &seen {
        let u = match pt_bpe {
            None => Units::Phoneme(&l.lexicon),
            Some(b) => Units::Subword(b),
        };
        let before = score_language(pretrained, l, "test", u, &cfg.decode)?;
        let after = score_language(&ckpt, l, "test", u, &cfg.decode)?;
        failures += before.decode_failures + after.decode_failures;
        let (b, a) = (rate_percent(&before.wer)?, rate_percent(&after.wer)?);
        run.push_value("pretrained", "none", &l.code, "test", "wer", b);
        run.push_value("forgetting", &scale, &l.code, "test", "wer", a);
        per_lang.push(LanguageForgetting {
            language: l.code.clone(),
            wer_before: b,
            wer_after: a,
        });
    }
    let before: Vec<f64> = per_lang.iter().map(|p| p.wer_before).collect();
    let after: Vec<f64> = per_lang.iter().map(|p| p.wer_after).collect();
    let avg_before = macro_average(&before).expect("seen languages");
    let avg_after = macro_average(&after).expect("seen languages");
    let w = ward(avg_after, avg_before)?;
    run.push_value("pretrained", "none", MACRO_AVG, "test", "wer", avg_before);
    run.push_value("forgetting", &scale, MACRO_AVG, "test", "wer", avg_after);
    run.push_value("forgetting", &scale, MACRO_AVG, "test", "ward", w);
    run.report.forgetting = Some(ForgettingReport {
        ft_language: lang.code.clone(),
        ft_utterances: n,
        ft_wer: rate_percent(&ft.wer)?,
        languages: per_lang,
        avg_wer_before: avg_before,
        avg_wer_after: avg_after,
        ward: w,
    });
    run.push_stage(&scale, "forgetting", &scale, n, hist, failures, Some(&path));
    Ok(())
}
