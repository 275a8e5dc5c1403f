//! Character-level text tokenizer.
//!
//! Vocabulary: `0` = UNK, `1` = space, `2` = apostrophe, `3..=28` = `a..=z`,
//! `29..=38` = `0..=9`.

use serde::{Deserialize, Serialize};

pub const TEXT_VOCAB_SIZE: usize = 39;
pub const UNK: u32 = 0;
const SPACE: u32 = 1;
const APOSTROPHE: u32 = 2;
const LETTERS: u32 = 3;
const DIGITS: u32 = 29;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TextTokenSeq {
    pub ids: Vec<u32>,
}

impl TextTokenSeq {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Lowercases, drops ASCII punctuation other than apostrophes, and collapses
/// whitespace. Characters outside the vocabulary survive here and become UNK
/// on encoding.
pub fn normalize_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
        } else if c.is_ascii_punctuation() && c != '\'' {
            continue;
        } else {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.push(c);
        }
    }
    out
}

fn char_id(c: char) -> u32 {
    match c {
        ' ' => SPACE,
        '\'' => APOSTROPHE,
        'a'..='z' => LETTERS + (c as u32 - 'a' as u32),
        '0'..='9' => DIGITS + (c as u32 - '0' as u32),
        _ => UNK,
    }
}

fn id_char(id: u32) -> char {
    match id {
        SPACE => ' ',
        APOSTROPHE => '\'',
        i if (LETTERS..LETTERS + 26).contains(&i) => char::from(b'a' + (i - LETTERS) as u8),
        i if (DIGITS..DIGITS + 10).contains(&i) => char::from(b'0' + (i - DIGITS) as u8),
        _ => '?',
    }
}

pub fn encode_text(text: &str) -> TextTokenSeq {
    TextTokenSeq {
        ids: normalize_text(text).chars().map(char_id).collect(),
    }
}

/// UNK decodes to `?`.
pub fn decode_text(tokens: &TextTokenSeq) -> String {
    tokens.ids.iter().map(|&i| id_char(i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert!(encode_text("").is_empty());
        assert_eq!(
            encode_text("Ab c").ids,
            vec![char_id('a'), char_id('b'), SPACE, char_id('c')]
        );
        assert_eq!(normalize_text("  Hello,   World! it's "), "hello world it's");
        assert_eq!(encode_text("é").ids, vec![UNK]);
    }

    proptest! {
        #[test]
        fn in_vocab_round_trip(s in "[a-zA-Z0-9' ,.!?]{0,40}") {
            let norm = normalize_text(&s);
            prop_assert_eq!(decode_text(&encode_text(&s)), norm);
            prop_assert!(encode_text(&s).ids.iter().all(|&i| (i as usize) < TEXT_VOCAB_SIZE));
        }
    }
}
