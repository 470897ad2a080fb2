//! Model files: the trained chain plus its Huffman code, shared out of band
//! between encoder and decoder and identified in containers by SHA-256.
//!
//! ```text
//! encore-model v1 <width>
//! mc v1 <n> <tau>        chain block (stationary distribution, then rows)
//! huff v1 <n>            code block
//! ```
//!
//! `width` is the number of bytes per symbol for byte-oriented data
//! (`n = 256^width`), or 0 for abstract symbol alphabets.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::huffman::HuffmanCode;
use crate::markov::{MarkovModel, MAX_STATES};

pub type ModelHash = [u8; 32];

#[derive(Debug, Clone)]
pub struct ModelFile {
    width: u32,
    chain: MarkovModel,
    code: HuffmanCode,
    hash: ModelHash,
}

impl ModelFile {
    /// Wrap a chain, building its Huffman code from the stationary
    /// distribution.
    pub fn new(chain: MarkovModel, width: u32) -> Result<Self> {
        let code = HuffmanCode::build(chain.stationary())?;
        Self::from_parts(chain, code, width)
    }

    pub fn from_parts(chain: MarkovModel, code: HuffmanCode, width: u32) -> Result<Self> {
        if code.alphabet_size() != chain.alphabet_size() {
            return Err(Error::AlphabetMismatch(code.alphabet_size(), chain.alphabet_size()));
        }
        if width > 0 && Some(chain.alphabet_size()) != 256usize.checked_pow(width) {
            return Err(Error::InvalidModel(format!(
                "width {width} needs {} states",
                256u64.pow(width.min(4))
            )));
        }
        let mut m = ModelFile {
            width,
            chain,
            code,
            hash: [0; 32],
        };
        m.hash = Sha256::digest(m.to_text().as_bytes()).into();
        Ok(m)
    }

    /// Fit a chain to a byte corpus read as big-endian `width`-byte words.
    pub fn train(corpus: &[u8], width: u32, smoothing: f64) -> Result<Self> {
        let n = symbol_count_for_width(width)?;
        let symbols = bytes_to_symbols(corpus, width)?;
        if symbols.is_empty() {
            return Err(Error::InvalidArgument("training corpus is empty".into()));
        }
        Self::new(MarkovModel::estimate(&symbols, n, smoothing)?, width)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn chain(&self) -> &MarkovModel {
        &self.chain
    }

    pub fn code(&self) -> &HuffmanCode {
        &self.code
    }

    /// SHA-256 of the file bytes.
    pub fn hash(&self) -> &ModelHash {
        &self.hash
    }

    pub fn to_text(&self) -> String {
        format!(
            "encore-model v1 {}\n{}{}",
            self.width,
            self.chain.to_text(),
            self.code.to_text()
        )
    }

    /// Parse a model file; the hash covers exactly the given bytes.
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let text = std::str::from_utf8(bytes).map_err(|_| Error::parse(0, "model file is not UTF-8"))?;
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines
            .next()
            .ok_or_else(|| Error::parse(0, "missing `encore-model v1` header"))?;
        let width = match header.split_whitespace().collect::<Vec<_>>()[..] {
            ["encore-model", "v1", w] => w.parse::<u32>().map_err(|_| Error::parse(hline, "bad width"))?,
            _ => return Err(Error::parse(hline, "expected `encore-model v1 <width>`")),
        };
        let chain = MarkovModel::parse_lines(&mut lines)?;
        let code = HuffmanCode::parse_lines(&mut lines)?;
        if let Some((line, _)) = lines.next() {
            return Err(Error::parse(line, "trailing content after code table"));
        }
        let mut m = Self::from_parts(chain, code, width)?;
        m.hash = Sha256::digest(bytes).into();
        Ok(m)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read(path)?)
    }
}

/// Alphabet size for byte blocking width `w`, rejecting models the dense
/// chain representation cannot hold.
pub fn symbol_count_for_width(width: u32) -> Result<usize> {
    if width == 0 {
        return Err(Error::InvalidArgument("symbol width must be at least 1".into()));
    }
    match 256usize.checked_pow(width) {
        Some(n) if n <= MAX_STATES => Ok(n),
        _ => Err(Error::InvalidArgument(format!(
            "symbol width {width} gives more than {MAX_STATES} states"
        ))),
    }
}

/// Big-endian `width`-byte words.
pub fn bytes_to_symbols(bytes: &[u8], width: u32) -> Result<Vec<u32>> {
    let w = width as usize;
    if w == 0 || w > 4 {
        return Err(Error::InvalidArgument(format!("unsupported symbol width {width}")));
    }
    if !bytes.len().is_multiple_of(w) {
        return Err(Error::LengthMismatch(format!(
            "{} bytes is not a whole number of {w}-byte symbols",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks(w)
        .map(|c| c.iter().fold(0u32, |acc, &b| (acc << 8) | b as u32))
        .collect())
}

pub fn symbols_to_bytes(symbols: &[u32], width: u32) -> Vec<u8> {
    let w = width as usize;
    let mut out = Vec::with_capacity(symbols.len() * w);
    for &s in symbols {
        out.extend_from_slice(&s.to_be_bytes()[4 - w..]);
    }
    out
}
