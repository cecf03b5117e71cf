//! Unit inventories and alphabets.
//!
//! An [`Alphabet`] is the output label set of a CTC model: the blank symbol
//! at index 0 followed by the units in codepoint order. Per-language phoneme
//! sets are [`LanguageInventory`] values; the multilingual label set is the
//! union of the seen languages' inventories.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Symbol reserved for the CTC blank.
pub const BLANK: &str = "<b>";

#[derive(Debug, Error, PartialEq)]
pub enum InventoryError {
    #[error("invalid inventory: {0}")]
    Invalid(String),
    #[error("unknown symbol {0:?}")]
    UnknownSymbol(String),
    #[error("index {index} out of range for alphabet of size {size}")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("io error: {0}")]
    Io(String),
}

/// A single output unit: an IPA phoneme, a subword token or the blank.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Unit(String);

impl Unit {
    pub fn new(symbol: impl Into<String>) -> Result<Self, InventoryError> {
        let symbol = symbol.into();
        if symbol.is_empty() {
            return Err(InventoryError::Invalid("empty unit symbol".into()));
        }
        if symbol.chars().any(char::is_whitespace) {
            return Err(InventoryError::Invalid(format!(
                "unit {symbol:?} contains whitespace"
            )));
        }
        Ok(Unit(symbol))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKind {
    Phoneme,
    Subword,
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UnitKind::Phoneme => f.write_str("phoneme"),
            UnitKind::Subword => f.write_str("subword"),
        }
    }
}

/// The phoneme set of one language. Never contains the blank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LanguageInventory {
    pub language_code: String,
    pub units: BTreeSet<Unit>,
}

impl LanguageInventory {
    pub fn new<I, S>(language_code: impl Into<String>, symbols: I) -> Result<Self, InventoryError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let units = symbols
            .into_iter()
            .map(Unit::new)
            .collect::<Result<BTreeSet<_>, _>>()?;
        Ok(LanguageInventory {
            language_code: language_code.into(),
            units,
        })
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn contains(&self, symbol: &str) -> bool {
        self.units.iter().any(|u| u.as_str() == symbol)
    }

    /// Checks every unit against a registry of admissible symbols.
    pub fn validate_against(&self, registry: &BTreeSet<String>) -> Result<(), InventoryError> {
        match self.units.iter().find(|u| !registry.contains(u.as_str())) {
            Some(u) => Err(InventoryError::Invalid(format!(
                "{}: symbol {u} not in registry",
                self.language_code
            ))),
            None => Ok(()),
        }
    }

    /// Parses an inventory file: one symbol per line, blank lines ignored.
    pub fn parse(language_code: &str, text: &str) -> Result<Self, InventoryError> {
        let inv = Self::new(
            language_code,
            text.lines().map(str::trim).filter(|l| !l.is_empty()),
        )?;
        if inv.contains(BLANK) {
            return Err(InventoryError::Invalid(format!(
                "{language_code}: inventory file lists the blank symbol"
            )));
        }
        Ok(inv)
    }

    pub fn read(language_code: &str, path: &Path) -> Result<Self, InventoryError> {
        let text = std::fs::read_to_string(path).map_err(|e| InventoryError::Io(e.to_string()))?;
        Self::parse(language_code, &text)
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for u in &self.units {
            out.push_str(u.as_str());
            out.push('\n');
        }
        out
    }
}

/// Blank-first, dense, bidirectional unit table.
#[derive(Debug, Clone)]
pub struct Alphabet {
    kind: UnitKind,
    units: Vec<Unit>,
    index: HashMap<String, usize>,
}

impl PartialEq for Alphabet {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.units == other.units
    }
}

impl Alphabet {
    /// Builds an alphabet from non-blank symbols. The blank is prepended and
    /// the remaining units are sorted by codepoint; duplicates collapse.
    pub fn from_units<I, S>(kind: UnitKind, symbols: I) -> Result<Self, InventoryError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut set = BTreeSet::new();
        for s in symbols {
            let unit = Unit::new(s)?;
            if unit.as_str() == BLANK {
                return Err(InventoryError::Invalid(
                    "blank symbol may not appear among units".into(),
                ));
            }
            set.insert(unit);
        }
        let mut units = Vec::with_capacity(set.len() + 1);
        units.push(Unit(BLANK.to_string()));
        units.extend(set);
        Ok(Self::from_ordered(kind, units))
    }

    /// Rebuilds an alphabet from a serialized ordered listing (blank first).
    pub fn from_listing<I, S>(kind: UnitKind, listing: I) -> Result<Self, InventoryError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let units = listing
            .into_iter()
            .map(Unit::new)
            .collect::<Result<Vec<_>, _>>()?;
        if units.first().map(Unit::as_str) != Some(BLANK) {
            return Err(InventoryError::Invalid("listing must start with blank".into()));
        }
        let alphabet = Self::from_ordered(kind, units);
        if alphabet.index.len() != alphabet.units.len() {
            return Err(InventoryError::Invalid("duplicate unit in listing".into()));
        }
        Ok(alphabet)
    }

    fn from_ordered(kind: UnitKind, units: Vec<Unit>) -> Self {
        let index = units
            .iter()
            .enumerate()
            .map(|(i, u)| (u.0.clone(), i))
            .collect();
        Alphabet { kind, units, index }
    }

    pub fn kind(&self) -> UnitKind {
        self.kind
    }

    pub fn blank_index(&self) -> usize {
        0
    }

    /// Number of entries including the blank.
    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    /// All symbols in index order, blank first.
    pub fn symbols(&self) -> impl Iterator<Item = &str> {
        self.units.iter().map(Unit::as_str)
    }

    /// Non-blank symbols as a set.
    pub fn non_blank(&self) -> BTreeSet<Unit> {
        self.units[1..].iter().cloned().collect()
    }

    pub fn contains(&self, symbol: &str) -> bool {
        self.index.contains_key(symbol)
    }

    pub fn index_of(&self, symbol: &str) -> Result<usize, InventoryError> {
        self.index
            .get(symbol)
            .copied()
            .ok_or_else(|| InventoryError::UnknownSymbol(symbol.to_string()))
    }

    pub fn symbol_at(&self, index: usize) -> Result<&str, InventoryError> {
        self.units
            .get(index)
            .map(Unit::as_str)
            .ok_or(InventoryError::IndexOutOfRange {
                index,
                size: self.units.len(),
            })
    }

    /// Maps a sequence of symbols to indices.
    pub fn encode<S: AsRef<str>>(&self, symbols: &[S]) -> Result<Vec<usize>, InventoryError> {
        symbols.iter().map(|s| self.index_of(s.as_ref())).collect()
    }

    pub fn decode(&self, indices: &[usize]) -> Result<Vec<String>, InventoryError> {
        indices
            .iter()
            .map(|&i| self.symbol_at(i).map(str::to_string))
            .collect()
    }
}

/// Blank plus the union of all inventories, in codepoint order.
pub fn build_union_alphabet(inventories: &[LanguageInventory]) -> Result<Alphabet, InventoryError> {
    if inventories.is_empty() {
        return Err(InventoryError::Invalid("no inventories given".into()));
    }
    if let Some(inv) = inventories.iter().find(|inv| inv.contains(BLANK)) {
        return Err(InventoryError::Invalid(format!(
            "{} contains the blank symbol",
            inv.language_code
        )));
    }
    Alphabet::from_units(
        UnitKind::Phoneme,
        inventories
            .iter()
            .flat_map(|inv| inv.units.iter().map(|u| u.as_str().to_string())),
    )
}

/// Splits a target inventory into units already present in `multi` and novel ones.
pub fn split_shared_novel(
    multi: &Alphabet,
    cross: &LanguageInventory,
) -> Result<(BTreeSet<Unit>, BTreeSet<Unit>), InventoryError> {
    if multi.kind() != UnitKind::Phoneme {
        return Err(InventoryError::Invalid(
            "shared/novel split requires a phoneme alphabet".into(),
        ));
    }
    Ok(cross
        .units
        .iter()
        .cloned()
        .partition(|u| multi.contains(u.as_str())))
}

/// Base IPA symbols accepted in inventories: plain letters, affricates and a
/// handful of common multi-codepoint phonemes. Diacritics and
/// suprasegmentals are stripped before inventories are built, so they are
/// deliberately absent.
pub fn ipa_registry() -> BTreeSet<String> {
    const SYMBOLS: &[&str] = &[
        "a", "b", "c", "d", "e", "f", "h", "i", "j", "k", "l", "m", "n", "o", "p", "q", "r", "s",
        "t", "u", "v", "w", "x", "y", "z", "æ", "ɐ", "ɑ", "ɒ", "ɓ", "ʙ", "β", "ɔ", "ɕ", "ç", "ɗ",
        "ɖ", "ð", "ʤ", "ə", "ɘ", "ɚ", "ɛ", "ɜ", "ɝ", "ɞ", "ɟ", "ʄ", "ɡ", "ɠ", "ɢ", "ʛ", "ɦ", "ɧ",
        "ħ", "ɥ", "ʜ", "ɨ", "ɪ", "ʝ", "ɭ", "ɬ", "ɫ", "ɮ", "ʟ", "ɱ", "ɯ", "ɰ", "ŋ", "ɳ", "ɲ", "ɴ",
        "ø", "ɵ", "ɸ", "θ", "œ", "ɶ", "ʘ", "ɹ", "ɺ", "ɾ", "ɻ", "ʀ", "ʁ", "ɽ", "ʂ", "ʃ", "ʈ", "ʧ",
        "ʉ", "ʊ", "ʋ", "ⱱ", "ʌ", "ɣ", "ɤ", "ʍ", "χ", "ʎ", "ʏ", "ʑ", "ʐ", "ʒ", "ʔ", "ʡ", "ʕ", "ʢ",
        "ǀ", "ǁ", "ǂ", "ǃ", "g", "ts", "dz", "tʃ", "dʒ", "tɕ", "dʑ", "ʈʂ", "ɖʐ", "pf", "kx", "ɨ̞",
    ];
    SYMBOLS.iter().map(|s| s.to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inv(code: &str, syms: &[&str]) -> LanguageInventory {
        LanguageInventory::new(code, syms.iter().copied()).unwrap()
    }

    #[test]
    fn single_inventory_gets_blank() {
        let a = build_union_alphabet(&[inv("x", &["a", "b"])]).unwrap();
        assert_eq!(a.symbols().collect::<Vec<_>>(), vec!["<b>", "a", "b"]);
        assert_eq!(a.len(), 3);
    }

    #[test]
    fn union_of_overlapping_sets() {
        let a = build_union_alphabet(&[inv("x", &["a", "b"]), inv("y", &["b", "c"])]).unwrap();
        assert_eq!(a.symbols().collect::<Vec<_>>(), vec!["<b>", "a", "b", "c"]);
    }

    #[test]
    fn blank_in_input_is_rejected() {
        let bad = inv("x", &["a", BLANK]);
        assert!(matches!(
            build_union_alphabet(&[bad]),
            Err(InventoryError::Invalid(_))
        ));
        assert!(build_union_alphabet(&[]).is_err());
    }

    #[test]
    fn lookups() {
        let a = build_union_alphabet(&[inv("x", &["b", "a"])]).unwrap();
        assert_eq!(a.symbol_at(0).unwrap(), "<b>");
        assert_eq!(a.index_of("b").unwrap(), 2);
        assert_eq!(
            a.index_of("ZZZ"),
            Err(InventoryError::UnknownSymbol("ZZZ".into()))
        );
        assert!(matches!(
            a.symbol_at(3),
            Err(InventoryError::IndexOutOfRange { index: 3, size: 3 })
        ));
    }

    #[test]
    fn units_reject_whitespace_and_empty() {
        assert!(Unit::new("").is_err());
        assert!(Unit::new("a b").is_err());
        assert!(Unit::new("tʃ").is_ok());
    }

    #[test]
    fn self_split_has_no_novel_units() {
        let i = inv("x", &["a", "b", "c"]);
        let a = build_union_alphabet(std::slice::from_ref(&i)).unwrap();
        let (shared, novel) = split_shared_novel(&a, &i).unwrap();
        assert_eq!(shared.len(), 3);
        assert!(novel.is_empty());
    }

    #[test]
    fn split_requires_phoneme_alphabet() {
        let a = Alphabet::from_units(UnitKind::Subword, ["ab"]).unwrap();
        assert!(split_shared_novel(&a, &inv("x", &["a"])).is_err());
    }

    #[test]
    fn inventory_file_round_trip() {
        let i = inv("pl", &["ʃ", "a", "tʃ"]);
        let back = LanguageInventory::parse("pl", &i.to_file_string()).unwrap();
        assert_eq!(back, i);
        assert!(LanguageInventory::parse("pl", "a\n<b>\n").is_err());
    }

    #[test]
    fn listing_round_trip() {
        let a = Alphabet::from_units(UnitKind::Phoneme, ["z", "a", "ʃ"]).unwrap();
        let back = Alphabet::from_listing(UnitKind::Phoneme, a.symbols()).unwrap();
        assert_eq!(a, back);
        assert!(Alphabet::from_listing(UnitKind::Phoneme, ["a", "<b>"]).is_err());
    }

    #[test]
    fn registry_validation() {
        let reg = ipa_registry();
        assert!(inv("x", &["a", "ʃ", "tʃ"]).validate_against(&reg).is_ok());
        assert!(inv("x", &["a", "Q!"]).validate_against(&reg).is_err());
    }
}
