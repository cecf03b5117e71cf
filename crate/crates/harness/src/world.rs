//! Synthetic multilingual worlds.
//!
//! Every universal phoneme owns a Gaussian feature prototype shared by all
//! languages; an utterance's features are the prototypes of its phonemes,
//! each repeated for a jittered number of frames, plus white noise. That
//! shared acoustic space is what makes crosslingual transfer learnable.
//!
//! On-disk layout:
//!
//! ```text
//! world.toml                       generating config
//! languages.tsv                    code, seen|unseen, script
//! lang-<code>/inventory.txt        one phoneme per line
//! lang-<code>/g2p.fst.txt          grapheme → phoneme transducer
//! lang-<code>/lexicon.tsv          G2P-derived pronunciation lexicon
//! lang-<code>/text.{train,dev,test}.txt
//! lang-<code>/feats.{train,dev,test}.bin
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use ndarray::Array2;
use phonoglot::acoustic::{load_features, save_features, FeatureMatrix};
use phonoglot::inventory::LanguageInventory;
use phonoglot::text::{build_prolex, NormRules, Prolex};
use phonoglot::wfst::{Arc, Fst, Semiring, SymbolTable};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::WorldConfig;
use crate::HarnessError;

/// Plain IPA symbols the universal inventory is drawn from, in order.
const UNIVERSAL: &[&str] = &[
    "a", "e", "i", "o", "u", "p", "t", "k", "m", "n", "s", "l", "b", "d", "ɡ", "f", "v", "z",
    "ʃ", "j", "w", "r", "h", "ɛ", "ɔ", "ə", "ŋ", "x", "ʒ", "ɪ", "ʊ", "y", "ɲ", "ts", "tʃ", "dʒ",
    "θ", "ð", "ɾ", "ʁ", "æ", "ø", "ɨ", "ʌ", "ɯ", "œ", "ɑ", "ç", "χ", "ʎ", "ɬ", "q", "ʔ", "ɕ",
    "ʑ", "ɳ", "ʈ", "ɖ", "β", "ɸ",
];

const LATIN: &str = "abcdefghijklmnopqrstuvwxyzàáâäçèéêëíîïñóôöúûüý";
const CYRILLIC: &str = "абвгдежзийклмнопрстуфхцчшщъыьэюяёіїєґўјљњћџ";

pub const SPLITS: [&str; 3] = ["train", "dev", "test"];

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub text: String,
    pub features: FeatureMatrix,
}

#[derive(Debug, Clone)]
pub struct Language {
    pub code: String,
    pub seen: bool,
    pub script: String,
    pub inventory: LanguageInventory,
    pub g2p: Fst,
    pub lexicon: Prolex,
    pub train: Vec<Utterance>,
    pub dev: Vec<Utterance>,
    pub test: Vec<Utterance>,
}

impl Language {
    pub fn split(&self, name: &str) -> &[Utterance] {
        match name {
            "train" => &self.train,
            "dev" => &self.dev,
            "test" => &self.test,
            _ => panic!("unknown split {name}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct World {
    pub config: WorldConfig,
    pub languages: Vec<Language>,
}

impl World {
    pub fn language(&self, code: &str) -> Result<&Language, HarnessError> {
        self.languages
            .iter()
            .find(|l| l.code == code)
            .ok_or_else(|| HarnessError::Config(format!("no language {code:?} in world")))
    }

    pub fn seen(&self) -> impl Iterator<Item = &Language> {
        self.languages.iter().filter(|l| l.seen)
    }

    pub fn unseen(&self) -> impl Iterator<Item = &Language> {
        self.languages.iter().filter(|l| !l.seen)
    }

    /// Seen language with the fewest training utterances (last on ties).
    pub fn lowest_resource_seen(&self) -> &Language {
        self.seen()
            .min_by_key(|l| l.train.len())
            .expect("at least one seen language")
    }
}

fn language_code(seen: bool, i: usize) -> String {
    let letter = (b'a' + (i % 26) as u8) as char;
    format!("{}{letter}", if seen { 's' } else { 'u' })
}

/// Geometric spacing from `max` down to `min` over `k` languages.
fn resource_levels(max: usize, min: usize, k: usize) -> Vec<usize> {
    if k == 1 {
        return vec![max];
    }
    (0..k)
        .map(|i| {
            let f = i as f64 / (k - 1) as f64;
            (max as f64 * (min as f64 / max as f64).powf(f)).round() as usize
        })
        .collect()
}

struct Orthography {
    primary: BTreeMap<String, char>,
    alternate: BTreeMap<String, char>,
}

impl Orthography {
    fn spell(&self, pron: &[String], use_alternates: bool) -> String {
        pron.iter()
            .map(|p| match (use_alternates, self.alternate.get(p)) {
                (true, Some(&c)) => c,
                _ => self.primary[p],
            })
            .collect()
    }

    fn g2p(&self) -> Fst {
        let mut f = Fst::new(Semiring::Tropical, SymbolTable::new(), SymbolTable::new());
        let s = f.add_state();
        f.set_start(s);
        f.set_final(s, 0.0);
        let pairs = self.primary.iter().chain(self.alternate.iter());
        let mut arcs: Vec<(char, &String)> = pairs.map(|(p, &c)| (c, p)).collect();
        arcs.sort();
        for (c, p) in arcs {
            let il = f.isyms.add(&c.to_string());
            let ol = f.osyms.add(p);
            f.add_arc(s, Arc::new(il, ol, 0.0, s));
        }
        f
    }
}

fn sample_range<R: Rng>(rng: &mut R, r: (usize, usize)) -> usize {
    rng.random_range(r.0..=r.1)
}

/// Generates a world entirely determined by `config` (including its seed).
pub fn gen_world(config: &WorldConfig) -> Result<World, HarnessError> {
    config.validate()?;
    if config.universal_inventory_size > UNIVERSAL.len() {
        return Err(HarnessError::Config(format!(
            "universal_inventory_size {} exceeds the {} available symbols",
            config.universal_inventory_size,
            UNIVERSAL.len()
        )));
    }
    let mut root = ChaCha8Rng::seed_from_u64(config.seed);
    let universal: Vec<&str> = UNIVERSAL[..config.universal_inventory_size].to_vec();
    let proto_dist = Normal::new(0.0, config.prototype_std).expect("positive std");
    let prototypes: BTreeMap<&str, Vec<f64>> = universal
        .iter()
        .map(|&p| {
            (
                p,
                (0..config.feature_dim)
                    .map(|_| proto_dist.sample(&mut root))
                    .collect(),
            )
        })
        .collect();
    let mut shuffled = universal.clone();
    shuffled.shuffle(&mut root);
    let (reserved, seen_pool) = shuffled.split_at(config.reserved_novel_phonemes);

    let seen_sizes = resource_levels(
        config.seen_utterances.0,
        config.seen_utterances.1,
        config.num_seen_languages,
    );
    let specs: Vec<(bool, usize, usize)> = seen_sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| (true, i, n))
        .chain((0..config.num_unseen).map(|i| (false, i, config.unseen_utterances)))
        .collect();

    let mut languages = Vec::new();
    for (k, (seen, i, n_utts)) in specs.into_iter().enumerate() {
        let lang_seed: u64 = root.random();
        let mut rng = ChaCha8Rng::seed_from_u64(lang_seed);
        let size = sample_range(&mut rng, config.inventory_size);
        let mut phones: BTreeSet<String> = BTreeSet::new();
        if !seen {
            let mut r = reserved.to_vec();
            r.shuffle(&mut rng);
            phones.extend(r[..config.novel_per_unseen].iter().map(|s| s.to_string()));
        }
        let mut pool = seen_pool.to_vec();
        pool.shuffle(&mut rng);
        phones.extend(pool.iter().take(size - phones.len()).map(|s| s.to_string()));
        let inventory = LanguageInventory::new(language_code(seen, i), phones.iter().cloned())?;

        let script = if k % 2 == 0 { "latin" } else { "cyrillic" };
        let mut letters: Vec<char> = if k % 2 == 0 { LATIN } else { CYRILLIC }.chars().collect();
        letters.shuffle(&mut rng);
        let n_alt = if config.homophone_rate > 0.0 {
            (phones.len() / 4).max(1)
        } else {
            0
        };
        if letters.len() < phones.len() + n_alt {
            return Err(HarnessError::Config("inventory too large for the script".into()));
        }
        let mut letters = letters.into_iter();
        let primary: BTreeMap<String, char> = phones
            .iter()
            .map(|p| (p.clone(), letters.next().unwrap()))
            .collect();
        let mut alt_phones: Vec<&String> = phones.iter().collect();
        alt_phones.shuffle(&mut rng);
        let alternate: BTreeMap<String, char> = alt_phones
            .into_iter()
            .take(n_alt)
            .map(|p| (p.clone(), letters.next().unwrap()))
            .collect();
        let ortho = Orthography { primary, alternate };

        // words: distinct pronunciations without adjacent repeats (a doubled
        // phoneme would sound exactly like one long phoneme), then homophone
        // spelling variants
        let phone_list: Vec<&String> = phones.iter().collect();
        let lex_size = sample_range(&mut rng, config.lexicon_size);
        let n_homo = (config.homophone_rate * lex_size as f64).round() as usize;
        let mut prons: BTreeSet<Vec<String>> = BTreeSet::new();
        let mut words: Vec<(String, Vec<String>)> = Vec::new();
        while words.len() < lex_size - n_homo {
            let len = sample_range(&mut rng, config.word_length);
            let mut pron: Vec<String> = Vec::with_capacity(len);
            while pron.len() < len {
                let p = phone_list[rng.random_range(0..phone_list.len())];
                if pron.last() != Some(p) {
                    pron.push(p.clone());
                }
            }
            if prons.insert(pron.clone()) {
                words.push((ortho.spell(&pron, false), pron));
            }
        }
        let mut candidates: Vec<usize> = (0..words.len())
            .filter(|&w| words[w].1.iter().any(|p| ortho.alternate.contains_key(p)))
            .collect();
        candidates.shuffle(&mut rng);
        for &w in candidates.iter().take(n_homo) {
            let pron = words[w].1.clone();
            words.push((ortho.spell(&pron, true), pron));
        }

        // Zipfian sentences over a random word ranking
        let mut ranking: Vec<usize> = (0..words.len()).collect();
        ranking.shuffle(&mut rng);
        let weights: Vec<f64> = (1..=words.len())
            .map(|r| (r as f64).powf(-config.zipf_exponent))
            .collect();
        let zipf = rand::distr::weighted::WeightedIndex::new(&weights)
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        let noise = Normal::new(0.0, config.noise_std.max(f64::MIN_POSITIVE)).expect("finite");
        let mut utts = Vec::with_capacity(n_utts);
        for _ in 0..n_utts {
            let len = sample_range(&mut rng, config.sentence_length);
            let mut chosen: Vec<usize> = Vec::with_capacity(len);
            while chosen.len() < len {
                let w = ranking[zipf.sample(&mut rng)];
                // same rule across word boundaries
                if chosen.last().is_none_or(|&v| words[v].1.last() != words[w].1.first()) {
                    chosen.push(w);
                }
            }
            let text = chosen
                .iter()
                .map(|&w| words[w].0.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            let mut rows: Vec<f64> = Vec::new();
            for &w in &chosen {
                for p in &words[w].1 {
                    let dur = sample_range(&mut rng, config.frames_per_phoneme);
                    for _ in 0..dur {
                        for &c in &prototypes[p.as_str()] {
                            let n = if config.noise_std > 0.0 {
                                noise.sample(&mut rng)
                            } else {
                                0.0
                            };
                            rows.push(c + n);
                        }
                    }
                }
            }
            let t = rows.len() / config.feature_dim;
            let features = FeatureMatrix::new(
                Array2::from_shape_vec((t, config.feature_dim), rows).expect("consistent shape"),
            )?;
            utts.push(Utterance { text, features });
        }
        let n_train = ((config.split.0 * n_utts as f64).round() as usize).max(1);
        let n_dev = (config.split.1 * n_utts as f64).round() as usize;
        let test = utts.split_off((n_train + n_dev).min(utts.len()));
        let dev = utts.split_off(n_train.min(utts.len()));

        let g2p = ortho.g2p();
        let spellings: Vec<&str> = words.iter().map(|w| w.0.as_str()).collect();
        let (lexicon, missing) = build_prolex(&spellings, &g2p, 1, &NormRules::default())?;
        debug_assert!(missing.is_empty());
        languages.push(Language {
            code: inventory.language_code.clone(),
            seen,
            script: script.into(),
            inventory,
            g2p,
            lexicon,
            train: utts,
            dev,
            test,
        });
    }
    Ok(World {
        config: config.clone(),
        languages,
    })
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn read(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

pub fn write_world(world: &World, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let cfg = toml::to_string(&world.config).map_err(|e| HarnessError::Config(e.to_string()))?;
    write(&dir.join("world.toml"), &cfg)?;
    let mut index = String::new();
    for l in &world.languages {
        index.push_str(&format!(
            "{}\t{}\t{}\n",
            l.code,
            if l.seen { "seen" } else { "unseen" },
            l.script
        ));
        let ld = dir.join(format!("lang-{}", l.code));
        std::fs::create_dir_all(&ld).map_err(|e| io_err(&ld, e))?;
        write(&ld.join("inventory.txt"), &l.inventory.to_file_string())?;
        write(&ld.join("g2p.fst.txt"), &l.g2p.to_text()?)?;
        write(&ld.join("lexicon.tsv"), &l.lexicon.to_tsv())?;
        for split in SPLITS {
            let utts = l.split(split);
            let mut text = String::new();
            for u in utts {
                text.push_str(&u.text);
                text.push('\n');
            }
            write(&ld.join(format!("text.{split}.txt")), &text)?;
            let feats: Vec<FeatureMatrix> = utts.iter().map(|u| u.features.clone()).collect();
            save_features(&ld.join(format!("feats.{split}.bin")), &feats)?;
        }
    }
    write(&dir.join("languages.tsv"), &index)
}

pub fn load_world(dir: &Path) -> Result<World, HarnessError> {
    let config: WorldConfig = toml::from_str(&read(&dir.join("world.toml"))?)
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let mut languages = Vec::new();
    for line in read(&dir.join("languages.tsv"))?.lines().filter(|l| !l.is_empty()) {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(HarnessError::Config(format!("bad languages.tsv line {line:?}")));
        }
        let code = f[0].to_string();
        let ld = dir.join(format!("lang-{code}"));
        let inventory = LanguageInventory::parse(&code, &read(&ld.join("inventory.txt"))?)?;
        let g2p = Fst::from_text(
            &read(&ld.join("g2p.fst.txt"))?,
            Semiring::Tropical,
            SymbolTable::new(),
            SymbolTable::new(),
        )?;
        let lexicon = Prolex::from_tsv(&read(&ld.join("lexicon.tsv"))?)?;
        let mut splits = Vec::new();
        for split in SPLITS {
            let texts: Vec<String> = read(&ld.join(format!("text.{split}.txt")))?
                .lines()
                .map(str::to_string)
                .collect();
            let feats = load_features(&ld.join(format!("feats.{split}.bin")))?;
            if feats.len() != texts.len() {
                return Err(HarnessError::Config(format!(
                    "{code}/{split}: {} texts but {} feature matrices",
                    texts.len(),
                    feats.len()
                )));
            }
            splits.push(
                texts
                    .into_iter()
                    .zip(feats)
                    .map(|(text, features)| Utterance { text, features })
                    .collect::<Vec<_>>(),
            );
        }
        let test = splits.pop().unwrap();
        let dev = splits.pop().unwrap();
        let train = splits.pop().unwrap();
        languages.push(Language {
            code,
            seen: f[1] == "seen",
            script: f[2].to_string(),
            inventory,
            g2p,
            lexicon,
            train,
            dev,
            test,
        });
    }
    Ok(World { config, languages })
}

#[cfg(test)]
mod tests {
    use super::*;
    use phonoglot::inventory::ipa_registry;
    use phonoglot::text::lexicon_stats;

    fn small() -> WorldConfig {
        WorldConfig {
            num_seen_languages: 3,
            num_unseen: 1,
            seen_utterances: (40, 20),
            unseen_utterances: 20,
            lexicon_size: (20, 30),
            ..Default::default()
        }
    }

    #[test]
    fn universal_symbols_are_registered() {
        let reg = ipa_registry();
        for s in UNIVERSAL {
            assert!(reg.contains(*s), "{s}");
        }
        assert_eq!(UNIVERSAL.iter().collect::<BTreeSet<_>>().len(), UNIVERSAL.len());
    }

    #[test]
    fn structure() {
        let w = gen_world(&small()).unwrap();
        assert_eq!(w.seen().count(), 3);
        assert_eq!(w.unseen().count(), 1);
        assert_eq!(w.lowest_resource_seen().code, "sc");
        let reg = ipa_registry();
        for l in &w.languages {
            l.inventory.validate_against(&reg).unwrap();
            l.lexicon.validate(&l.inventory).unwrap();
            let n = l.train.len() + l.dev.len() + l.test.len();
            assert_eq!(l.train.len(), (0.8 * n as f64).round() as usize);
        }
        let seen_units: BTreeSet<_> = w.seen().flat_map(|l| l.inventory.units.iter()).collect();
        let u = w.unseen().next().unwrap();
        let novel = u.inventory.units.iter().filter(|p| !seen_units.contains(p)).count();
        assert!(novel >= 2);
    }

    #[test]
    fn homophones_follow_rate() {
        let w = gen_world(&WorldConfig {
            homophone_rate: 0.0,
            ..small()
        })
        .unwrap();
        for l in &w.languages {
            assert_eq!(lexicon_stats(&l.lexicon).unwrap().homophone_rate, 0.0);
        }
        let w = gen_world(&WorldConfig {
            homophone_rate: 0.2,
            ..small()
        })
        .unwrap();
        assert!(w
            .languages
            .iter()
            .all(|l| lexicon_stats(&l.lexicon).unwrap().homophone_rate > 0.0));
    }

    #[test]
    fn noise_free_features_repeat() {
        let w = gen_world(&WorldConfig {
            noise_std: 0.0,
            frames_per_phoneme: (3, 3),
            ..small()
        })
        .unwrap();
        let l = &w.languages[0];
        let all: Vec<&Utterance> = l.train.iter().chain(&l.dev).chain(&l.test).collect();
        let mut found = false;
        for (i, a) in all.iter().enumerate() {
            for b in &all[i + 1..] {
                if a.text == b.text {
                    assert_eq!(a.features, b.features);
                    found = true;
                }
            }
        }
        assert!(found, "expected at least one repeated sentence");
    }

    #[test]
    fn round_trip_on_disk() {
        let w = gen_world(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_world(&w, dir.path()).unwrap();
        let back = load_world(dir.path()).unwrap();
        assert_eq!(back.config, w.config);
        assert_eq!(back.languages.len(), w.languages.len());
        for (a, b) in back.languages.iter().zip(&w.languages) {
            assert_eq!(a.lexicon, b.lexicon);
            assert_eq!(a.inventory, b.inventory);
            assert_eq!(a.train.len(), b.train.len());
            assert_eq!(a.test[0].text, b.test[0].text);
        }
    }
}
