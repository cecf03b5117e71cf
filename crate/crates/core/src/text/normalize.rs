use std::collections::BTreeSet;

use regex::Regex;

use super::TextError;

/// Text normalization rules for one language.
#[derive(Debug, Clone)]
pub struct NormRules {
    /// Punctuation that affects pronunciation and therefore survives.
    pub keep_chars: BTreeSet<char>,
    pub lowercase: bool,
    /// Diacritics and suprasegmentals removed from G2P output phonemes.
    pub strip_marks: BTreeSet<char>,
    /// Sentences matching any of these are discarded.
    pub reject_patterns: Vec<Regex>,
}

impl Default for NormRules {
    fn default() -> Self {
        NormRules {
            keep_chars: BTreeSet::from(['\'']),
            lowercase: true,
            strip_marks: default_strip_marks(),
            reject_patterns: Vec::new(),
        }
    }
}

/// Stress, length, tone and the combining diacritics commonly emitted by G2P models.
pub fn default_strip_marks() -> BTreeSet<char> {
    let mut marks: BTreeSet<char> = ['ˈ', 'ˌ', 'ː', 'ˑ', '˞', 'ʰ', 'ʲ', 'ʷ', 'ˠ', 'ˤ', '.', '|', '‖', '↗', '↘']
        .into_iter()
        .collect();
    marks.extend((0x0300u32..=0x036F).filter_map(char::from_u32));
    marks.extend((0x02E5u32..=0x02E9).filter_map(char::from_u32));
    marks
}

impl NormRules {
    pub fn new(
        keep_chars: BTreeSet<char>,
        lowercase: bool,
        strip_marks: BTreeSet<char>,
        reject_patterns: &[&str],
    ) -> Result<Self, TextError> {
        if let Some(c) = keep_chars.intersection(&strip_marks).next() {
            return Err(TextError::InvalidRules(format!(
                "{c:?} is both kept and stripped"
            )));
        }
        let reject_patterns = reject_patterns
            .iter()
            .map(|p| Regex::new(p).map_err(|e| TextError::InvalidRules(e.to_string())))
            .collect::<Result<_, _>>()?;
        Ok(NormRules {
            keep_chars,
            lowercase,
            strip_marks,
            reject_patterns,
        })
    }

    /// Removes strip marks from a phoneme symbol.
    pub fn strip(&self, phoneme: &str) -> String {
        phoneme
            .chars()
            .filter(|c| !self.strip_marks.contains(c))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Normalized {
    Normalized(String),
    Rejected(String),
}

impl Normalized {
    pub fn text(&self) -> Option<&str> {
        match self {
            Normalized::Normalized(s) => Some(s),
            Normalized::Rejected(_) => None,
        }
    }
}

fn is_combining_mark(c: char) -> bool {
    matches!(c as u32,
        0x0300..=0x036F | 0x0483..=0x0489 | 0x0591..=0x05BD | 0x0610..=0x061A
        | 0x064B..=0x065F | 0x0900..=0x0903 | 0x093A..=0x094F | 0x1AB0..=0x1AFF
        | 0x1DC0..=0x1DFF | 0x20D0..=0x20FF | 0xFE20..=0xFE2F)
}

/// Lowercases, removes punctuation other than `keep_chars`, collapses
/// whitespace and applies the reject patterns.
pub fn normalize(text: &str, rules: &NormRules) -> Normalized {
    if let Some(p) = rules.reject_patterns.iter().find(|p| p.is_match(text)) {
        return Normalized::Rejected(format!("matches reject pattern {}", p.as_str()));
    }
    let mut cleaned = String::with_capacity(text.len());
    for c in text.chars() {
        if c.is_alphanumeric() || is_combining_mark(c) || rules.keep_chars.contains(&c) {
            if rules.lowercase {
                cleaned.extend(c.to_lowercase());
            } else {
                cleaned.push(c);
            }
        } else {
            cleaned.push(' ');
        }
    }
    Normalized::Normalized(cleaned.split_whitespace().collect::<Vec<_>>().join(" "))
}
