//! Phone inventory and grapheme-to-phoneme lookup.
//!
//! The inventory is a word-boundary token, the 39 ARPAbet phones (stress
//! removed), then lowercase letters and the apostrophe as fallback tokens for
//! words missing from the lexicon. Ids fit in a byte, which is also the wire
//! format of a serialized sequence.

use std::collections::HashMap;
use std::sync::OnceLock;

use crate::error::{Error, Result};

pub const WORD_BOUNDARY: &str = "_";

pub const PHONES: [&str; 39] = [
    "AA", "AE", "AH", "AO", "AW", "AY", "B", "CH", "D", "DH", "EH", "ER", "EY", "F", "G", "HH", "IH", "IY", "JH",
    "K", "L", "M", "N", "NG", "OW", "OY", "P", "R", "S", "SH", "T", "TH", "UH", "UW", "V", "W", "Y", "Z", "ZH",
];

const FALLBACK_CHARS: &str = "abcdefghijklmnopqrstuvwxyz'";

const LEXICON: &[(&str, &str)] = &[
    ("a", "AH"),
    ("about", "AH B AW T"),
    ("afternoon", "AE F T ER N UW N"),
    ("and", "AH N D"),
    ("are", "AA R"),
    ("away", "AH W EY"),
    ("be", "B IY"),
    ("call", "K AO L"),
    ("cold", "K OW L D"),
    ("degrees", "D IH G R IY Z"),
    ("earth", "ER TH"),
    ("eighty", "EY T IY"),
    ("enjoy", "EH N JH OY"),
    ("far", "F AA R"),
    ("for", "F AO R"),
    ("from", "F R AH M"),
    ("good", "G UH D"),
    ("hello", "HH AH L OW"),
    ("here", "HH IY R"),
    ("how", "HH AW"),
    ("hundred", "HH AH N D R AH D"),
    ("i", "AY"),
    ("in", "IH N"),
    ("is", "IH Z"),
    ("it", "IH T"),
    ("kilometers", "K IH L AA M AH T ER Z"),
    ("lights", "L AY T S"),
    ("living", "L IH V IH NG"),
    ("might", "M AY T"),
    ("minutes", "M IH N AH T S"),
    ("moon", "M UW N"),
    ("morning", "M AO R N IH NG"),
    ("mother", "M AH DH ER"),
    ("music", "M Y UW Z IH K"),
    ("my", "M AY"),
    ("no", "N OW"),
    ("now", "N AW"),
    ("of", "AH V"),
    ("off", "AO F"),
    ("okay", "OW K EY"),
    ("play", "P L EY"),
    ("playlist", "P L EY L IH S T"),
    ("rain", "R EY N"),
    ("room", "R UW M"),
    ("set", "S EH T"),
    ("some", "S AH M"),
    ("starting", "S T AA R T IH NG"),
    ("stop", "S T AA P"),
    ("sunny", "S AH N IY"),
    ("sure", "SH UH R"),
    ("ten", "T EH N"),
    ("the", "DH AH"),
    ("there", "DH EH R"),
    ("thousand", "TH AW Z AH N D"),
    ("three", "TH R IY"),
    ("timer", "T AY M ER"),
    ("to", "T UW"),
    ("today", "T AH D EY"),
    ("tomorrow", "T AH M AA R OW"),
    ("turn", "T ER N"),
    ("want", "W AA N T"),
    ("warm", "W AO R M"),
    ("weather", "W EH DH ER"),
    ("weekend", "W IY K EH N D"),
    ("what", "W AH T"),
    ("what's", "W AH T S"),
    ("while", "W AY L"),
    ("will", "W IH L"),
    ("work", "W ER K"),
    ("yes", "Y EH S"),
    ("you", "Y UW"),
    ("your", "Y AO R"),
];

pub fn vocab_size() -> usize {
    1 + PHONES.len() + FALLBACK_CHARS.len()
}

fn symbol_table() -> &'static (Vec<String>, HashMap<String, u8>) {
    static TABLE: OnceLock<(Vec<String>, HashMap<String, u8>)> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut symbols = vec![WORD_BOUNDARY.to_string()];
        symbols.extend(PHONES.iter().map(|p| p.to_string()));
        symbols.extend(FALLBACK_CHARS.chars().map(|c| c.to_string()));
        let index = symbols.iter().enumerate().map(|(i, s)| (s.clone(), i as u8)).collect();
        (symbols, index)
    })
}

fn lexicon() -> &'static HashMap<&'static str, &'static str> {
    static LEX: OnceLock<HashMap<&'static str, &'static str>> = OnceLock::new();
    LEX.get_or_init(|| LEXICON.iter().copied().collect())
}

pub fn symbol(id: u8) -> Option<&'static str> {
    symbol_table().0.get(id as usize).map(String::as_str)
}

pub fn id_of(symbol: &str) -> Option<u8> {
    symbol_table().1.get(symbol).copied()
}

/// Token ids of a source text (the TTS transcript).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PhonemeSequence {
    ids: Vec<u8>,
}

impl PhonemeSequence {
    pub fn from_ids(ids: Vec<u8>) -> Result<Self> {
        let vocab = vocab_size();
        if let Some(bad) = ids.iter().find(|&&i| i as usize >= vocab) {
            return Err(Error::Malformed(format!("phoneme id {bad} outside inventory of {vocab}")));
        }
        Ok(Self { ids })
    }

    pub fn from_symbols<S: AsRef<str>>(symbols: &[S]) -> Result<Self> {
        symbols
            .iter()
            .map(|s| id_of(s.as_ref()).ok_or_else(|| Error::Malformed(format!("unknown phone symbol {:?}", s.as_ref()))))
            .collect::<Result<Vec<_>>>()
            .map(|ids| Self { ids })
    }

    /// Lexicon lookup per word; unknown words fall back to letter tokens.
    pub fn from_text(text: &str) -> Self {
        let mut ids = Vec::new();
        let words = text
            .split_whitespace()
            .map(|w| w.to_lowercase().chars().filter(|c| FALLBACK_CHARS.contains(*c)).collect::<String>())
            .filter(|w| !w.is_empty());
        for (n, word) in words.enumerate() {
            if n > 0 {
                ids.push(0);
            }
            match lexicon().get(word.as_str()) {
                Some(phones) => ids.extend(phones.split(' ').map(|p| id_of(p).expect("lexicon phone in inventory"))),
                None => ids.extend(word.chars().map(|c| id_of(&c.to_string()).expect("fallback char in inventory"))),
            }
        }
        Self { ids }
    }

    /// Accepts either space-separated inventory symbols or a plain transcript.
    pub fn parse(input: &str) -> Self {
        let toks: Vec<&str> = input.split_whitespace().collect();
        let all_phones = !toks.is_empty()
            && toks.iter().all(|t| *t == WORD_BOUNDARY || PHONES.contains(t));
        if all_phones {
            Self::from_symbols(&toks).expect("symbols checked against inventory")
        } else {
            Self::from_text(input)
        }
    }

    pub fn ids(&self) -> &[u8] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn symbols(&self) -> Vec<String> {
        self.ids.iter().map(|&i| symbol(i).expect("id in inventory").to_string()).collect()
    }

    /// Wire form: one byte per token.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.ids.clone()
    }
}
