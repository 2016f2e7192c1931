//! Position-dependent wordpiece inventory.
//!
//! Word-initial pieces carry [`WORD_BEGIN`] as a prefix; every other piece is
//! word-internal. Segmentation is greedy longest-match per word, so a word
//! always segments the same way regardless of its neighbours.

mod train;

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

pub use train::{corpus_log_likelihood, train_wpm, TrainOutcome};

use crate::error::{Error, Result};

/// Word-begin marker (U+2581).
pub const WORD_BEGIN: char = '\u{2581}';

pub const SOS: usize = 0;
pub const EOS: usize = 1;
/// Fallback for an unknown word-internal character.
pub const UNK: usize = 2;
/// Fallback for an unknown word-initial character.
pub const UNK_BEGIN: usize = 3;

const RESERVED: [&str; 4] = ["<s>", "</s>", "<unk>", "\u{2581}<unk>"];

/// Surface form emitted for unknown characters by [`WordpieceVocab::detokenize`].
pub const UNK_SURFACE: &str = "<unk>";

/// Ordered piece inventory with dense ids.
#[derive(Clone, Debug, PartialEq)]
pub struct WordpieceVocab {
    pieces: Vec<String>,
    index: HashMap<String, usize>,
    charset: BTreeSet<char>,
    max_piece_chars: usize,
}

/// Output of [`WordpieceVocab::segment`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segmentation {
    /// Piece ids, terminated by a single [`EOS`].
    pub ids: Vec<usize>,
    /// Characters outside the training charset, in order of appearance.
    pub unknown: Vec<char>,
}

/// Output of [`WordpieceVocab::detokenize`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Detokenized {
    pub text: String,
    /// Set when the sequence started with a word-internal piece or held an invalid id.
    pub malformed: bool,
}

impl WordpieceVocab {
    /// Build from a piece list whose first entries are the reserved symbols.
    pub fn from_pieces(pieces: Vec<String>) -> Result<Self> {
        if pieces.len() < RESERVED.len() || pieces.iter().zip(RESERVED).any(|(p, r)| p != r) {
            return Err(Error::Parse(format!("vocab must start with reserved symbols {RESERVED:?}")));
        }
        let mut index = HashMap::with_capacity(pieces.len());
        for (i, p) in pieces.iter().enumerate() {
            if p.is_empty() || p.chars().any(char::is_whitespace) {
                return Err(Error::Parse(format!("invalid piece {p:?} at line {}", i + 1)));
            }
            if index.insert(p.clone(), i).is_some() {
                return Err(Error::Parse(format!("duplicate piece {p:?}")));
            }
        }
        let mut charset = BTreeSet::new();
        for p in &pieces[RESERVED.len()..] {
            let mut cs = p.chars();
            if let (Some(c), None) = (cs.next(), cs.clone().next()) {
                if c != WORD_BEGIN && index.contains_key(&format!("{WORD_BEGIN}{c}")) {
                    charset.insert(c);
                }
            }
        }
        let max_piece_chars = pieces[RESERVED.len()..]
            .iter()
            .map(|p| p.chars().filter(|&c| c != WORD_BEGIN).count())
            .max()
            .unwrap_or(1);
        Ok(WordpieceVocab { pieces, index, charset, max_piece_chars })
    }

    pub(crate) fn from_charset_and_merges(charset: &BTreeSet<char>, merged: &[String]) -> Result<Self> {
        let mut pieces: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        for &c in charset {
            pieces.push(format!("{WORD_BEGIN}{c}"));
            pieces.push(c.to_string());
        }
        pieces.extend(merged.iter().cloned());
        Self::from_pieces(pieces)
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn piece(&self, id: usize) -> Option<&str> {
        self.pieces.get(id).map(String::as_str)
    }

    pub fn id(&self, piece: &str) -> Option<usize> {
        self.index.get(piece).copied()
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    pub fn charset(&self) -> &BTreeSet<char> {
        &self.charset
    }

    /// Greedy longest-match segmentation, one word at a time, plus a final [`EOS`].
    pub fn segment(&self, text: &str) -> Segmentation {
        let mut ids = Vec::new();
        let mut unknown = Vec::new();
        let mut key = String::new();
        for word in text.split_whitespace() {
            let chars: Vec<char> = word.chars().collect();
            let mut i = 0;
            while i < chars.len() {
                let initial = i == 0;
                if !self.charset.contains(&chars[i]) {
                    unknown.push(chars[i]);
                    ids.push(if initial { UNK_BEGIN } else { UNK });
                    i += 1;
                    continue;
                }
                let longest = (chars.len() - i).min(self.max_piece_chars);
                let mut matched = None;
                for len in (1..=longest).rev() {
                    key.clear();
                    if initial {
                        key.push(WORD_BEGIN);
                    }
                    key.extend(&chars[i..i + len]);
                    if let Some(&id) = self.index.get(&key) {
                        matched = Some((id, len));
                        break;
                    }
                }
                let (id, len) = matched.expect("single characters of the charset are always pieces");
                ids.push(id);
                i += len;
            }
        }
        ids.push(EOS);
        Segmentation { ids, unknown }
    }

    /// Concatenate pieces, starting a new word at each marked piece.
    pub fn detokenize(&self, ids: &[usize]) -> Detokenized {
        let mut text = String::new();
        let mut malformed = false;
        let mut first = true;
        for &id in ids {
            if id == EOS || id == SOS {
                continue;
            }
            let (begins, surface) = match id {
                UNK => (false, UNK_SURFACE),
                UNK_BEGIN => (true, UNK_SURFACE),
                _ => match self.pieces.get(id) {
                    Some(p) => match p.strip_prefix(WORD_BEGIN) {
                        Some(rest) => (true, rest),
                        None => (false, p.as_str()),
                    },
                    None => {
                        malformed = true;
                        continue;
                    }
                },
            };
            if begins && !first {
                text.push(' ');
            }
            if !begins && first {
                malformed = true;
            }
            text.push_str(surface);
            first = false;
        }
        if malformed {
            log::debug!("malformed wordpiece sequence {ids:?}");
        }
        Detokenized { text, malformed }
    }

    /// One piece per line, line number = id.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut s = self.pieces.join("\n");
        s.push('\n');
        fs::write(path, s)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path)?;
        Self::from_pieces(s.lines().map(str::to_string).collect())
    }
}

/// Degenerate vocabulary of single characters (the grapheme baseline).
pub fn grapheme_vocab(charset: impl IntoIterator<Item = char>) -> Result<WordpieceVocab> {
    let set: BTreeSet<char> = charset.into_iter().collect();
    if let Some(c) = set.iter().find(|c| c.is_whitespace() || **c == WORD_BEGIN) {
        return Err(Error::Config(format!("character {c:?} cannot be a grapheme unit")));
    }
    WordpieceVocab::from_charset_and_merges(&set, &[])
}

/// Collapse runs of whitespace into single spaces and trim the ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}
