use std::path::Path;

use phonoglot_harness::config::{AllMarker, Scale};
use phonoglot_harness::{
    gen_world, run_experiment, write_world, ExperimentConfig, Mode, Report, Supervision, WorldConfig,
};

fn small_world() -> WorldConfig {
    WorldConfig {
        num_seen_languages: 2,
        num_unseen: 1,
        seen_utterances: (60, 30),
        unseen_utterances: 40,
        lexicon_size: (15, 20),
        seed: 5,
        ..Default::default()
    }
}

fn quick(mode: Mode, supervision: Supervision, out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        id: "t".into(),
        mode,
        supervision,
        output_dir: out.to_path_buf(),
        ..Default::default()
    };
    cfg.model.schedule.total_steps = 60;
    cfg.model.finetune.total_steps = 30;
    cfg.model.bpe_vocab_size = 60;
    cfg.model.bpe_multilingual_vocab_size = 80;
    cfg
}

fn rows<'a>(r: &'a Report, mode: &str, lang: &str) -> Vec<&'a phonoglot_harness::report::ResultRow> {
    r.results.iter().filter(|x| x.mode == mode && x.language == lang).collect()
}

#[test]
fn same_seed_gives_identical_worlds_and_results() {
    let tmp = tempfile::tempdir().unwrap();
    let world = gen_world(&small_world()).unwrap();
    write_world(&world, &tmp.path().join("w1")).unwrap();
    write_world(&gen_world(&small_world()).unwrap(), &tmp.path().join("w2")).unwrap();
    for entry in walk(&tmp.path().join("w1")) {
        let rel = entry.strip_prefix(tmp.path().join("w1")).unwrap();
        let a = std::fs::read(&entry).unwrap();
        let b = std::fs::read(tmp.path().join("w2").join(rel)).unwrap();
        assert_eq!(a, b, "{} differs", rel.display());
    }
    let a = run_experiment(&world, &quick(Mode::Monolingual, Supervision::Phoneme, &tmp.path().join("a"))).unwrap();
    let b = run_experiment(&world, &quick(Mode::Monolingual, Supervision::Phoneme, &tmp.path().join("b"))).unwrap();
    assert_eq!(a.results_csv(), b.results_csv());
    let other = WorldConfig {
        seed: 6,
        ..small_world()
    };
    write_world(&gen_world(&other).unwrap(), &tmp.path().join("w3")).unwrap();
    assert_ne!(
        std::fs::read(tmp.path().join("w1/lang-sa/lexicon.tsv")).unwrap(),
        std::fs::read(tmp.path().join("w3/lang-sa/lexicon.tsv")).unwrap()
    );
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn monolingual_reports_one_row_per_split_and_metric() {
    let tmp = tempfile::tempdir().unwrap();
    let world = gen_world(&small_world()).unwrap();
    let low = world.lowest_resource_seen().code.clone();
    let report = run_experiment(&world, &quick(Mode::Monolingual, Supervision::Phoneme, tmp.path())).unwrap();
    let r = rows(&report, "monolingual", &low);
    for split in ["dev", "test"] {
        for metric in ["per", "wer"] {
            let n = r.iter().filter(|x| x.split == split && x.metric == metric).count();
            assert_eq!(n, 1, "{split}/{metric}");
        }
    }
    for file in ["results.csv", "report.json", "history.csv", "model.ckpt"] {
        assert!(tmp.path().join(file).is_file(), "{file}");
    }
    let csv = std::fs::read_to_string(tmp.path().join("results.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "experiment,mode,scale,language,split,metric,value");
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("report.json")).unwrap()).unwrap();
    for key in ["experiment", "world_seed", "config", "results", "stages"] {
        assert!(json.get(key).is_some(), "report.json lacks {key}");
    }
    assert!(report.stages.iter().all(|s| s.epochs_run >= 1 && s.final_train_loss.is_finite()));
}

#[test]
fn crosslingual_reports_a_block_per_scale() {
    let tmp = tempfile::tempdir().unwrap();
    let world = gen_world(&small_world()).unwrap();
    let pt = run_experiment(&world, &quick(Mode::MultilingualPhoneme, Supervision::Phoneme, &tmp.path().join("pt"))).unwrap();
    assert!(!pt.results.is_empty());
    let mut cfg = quick(Mode::CrosslingualFt, Supervision::Phoneme, &tmp.path().join("ft"));
    cfg.pretrained = Some(tmp.path().join("pt/model.ckpt"));
    cfg.ft_data_scales = vec![Scale::Utterances(5), Scale::Utterances(15), Scale::All(AllMarker::All)];
    let report = run_experiment(&world, &cfg).unwrap();
    let unseen = world.unseen().next().unwrap().code.clone();
    let mut scales: Vec<&str> = rows(&report, "crosslingual_ft", &unseen).iter().map(|r| r.scale.as_str()).collect();
    scales.dedup();
    assert_eq!(scales, ["5", "15", "all"]);
    for label in ["5", "15", "all"] {
        assert!(tmp.path().join(format!("ft/ft-{label}.ckpt")).is_file());
        assert!(report.value("crosslingual_ft", label, &unseen, "test", "wer").is_some());
    }
}

#[test]
fn noise_free_world_is_learned_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let world = gen_world(&WorldConfig {
        noise_std: 0.0,
        ..small_world()
    })
    .unwrap();
    let mut cfg = quick(Mode::Monolingual, Supervision::Phoneme, tmp.path());
    cfg.model.schedule = ExperimentConfig::default().model.schedule;
    cfg.eval_splits = vec!["train".into()];
    let low = world.lowest_resource_seen().code.clone();
    let report = run_experiment(&world, &cfg).unwrap();
    let per = report.value("monolingual", "all", &low, "train", "per").unwrap();
    assert_eq!(per, 0.0);
}
