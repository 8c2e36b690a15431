use std::collections::HashMap;

use super::{Tokenizer, TokenizerHandle};
use crate::error::{Error, Result};

/// Number of byte-fallback ids; `BYTE_VOCAB` is BOS and `BYTE_VOCAB + 1` is EOS.
pub const BYTE_VOCAB: u32 = 256;

/// Byte-level tokenizer with optional multi-character pieces.
///
/// Ids `0..256` are raw bytes, 256 is BOS, 257 is EOS, and ids from 258 on
/// are the configured pieces in order. Encoding is greedy longest-match over
/// the pieces with byte fallback, so `detokenize(tokenize(t)) == t` for every
/// string.
#[derive(Debug, Clone)]
pub struct PieceTokenizer {
    pieces: Vec<String>,
    lookup: HashMap<String, u32>,
    max_piece_len: usize,
}

impl Default for PieceTokenizer {
    fn default() -> Self {
        Self::bytes()
    }
}

impl PieceTokenizer {
    pub const BOS: u32 = BYTE_VOCAB;
    pub const EOS: u32 = BYTE_VOCAB + 1;
    const FIRST_PIECE: u32 = BYTE_VOCAB + 2;

    /// Pure byte tokenizer.
    pub fn bytes() -> Self {
        Self {
            pieces: Vec::new(),
            lookup: HashMap::new(),
            max_piece_len: 0,
        }
    }

    pub fn with_pieces<I, S>(pieces: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tok = Self::bytes();
        for piece in pieces {
            let piece = piece.into();
            if piece.is_empty() {
                return Err(Error::invalid("tokenizer pieces must be non-empty"));
            }
            if tok.lookup.contains_key(&piece) {
                return Err(Error::invalid(format!("duplicate tokenizer piece {piece:?}")));
            }
            let id = Self::FIRST_PIECE + tok.pieces.len() as u32;
            tok.max_piece_len = tok.max_piece_len.max(piece.len());
            tok.lookup.insert(piece.clone(), id);
            tok.pieces.push(piece);
        }
        Ok(tok)
    }

    pub fn vocab_size(&self) -> usize {
        Self::FIRST_PIECE as usize + self.pieces.len()
    }

    pub fn piece_id(&self, piece: &str) -> Option<u32> {
        self.lookup.get(piece).copied()
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        if self.pieces.is_empty() {
            return text.bytes().map(u32::from).collect();
        }
        let mut out = Vec::with_capacity(text.len() / 2);
        let mut i = 0;
        while i < text.len() {
            let rest = &text[i..];
            let mut matched = None;
            let mut len = self.max_piece_len.min(rest.len());
            while len > 0 {
                if rest.is_char_boundary(len) {
                    if let Some(&id) = self.lookup.get(&rest[..len]) {
                        matched = Some((id, len));
                        break;
                    }
                }
                len -= 1;
            }
            match matched {
                Some((id, len)) => {
                    out.push(id);
                    i += len;
                }
                None => {
                    let ch = rest.chars().next().expect("non-empty remainder");
                    let n = ch.len_utf8();
                    out.extend(rest.as_bytes()[..n].iter().map(|&b| u32::from(b)));
                    i += n;
                }
            }
        }
        out
    }

    pub fn decode(&self, tokens: &[u32]) -> Result<String> {
        let mut bytes = Vec::with_capacity(tokens.len());
        for &t in tokens {
            match t {
                b if b < BYTE_VOCAB => bytes.push(b as u8),
                Self::BOS | Self::EOS => {}
                p => {
                    let piece = self
                        .pieces
                        .get((p - Self::FIRST_PIECE) as usize)
                        .ok_or(Error::TokenOutOfRange {
                            token: p,
                            vocab_size: self.vocab_size(),
                        })?;
                    bytes.extend_from_slice(piece.as_bytes());
                }
            }
        }
        Ok(match String::from_utf8(bytes) {
            Ok(s) => s,
            Err(e) => String::from_utf8_lossy(e.as_bytes()).into_owned(),
        })
    }
}

impl Tokenizer for PieceTokenizer {
    fn handle(&self) -> TokenizerHandle {
        TokenizerHandle {
            vocab_size: self.vocab_size(),
            bos_token: Some(Self::BOS),
            eos_token: Some(Self::EOS),
        }
    }

    fn tokenize(&self, text: &str) -> Result<Vec<u32>> {
        Ok(self.encode(text))
    }

    fn detokenize(&self, tokens: &[u32]) -> Result<String> {
        self.decode(tokens)
    }
}
