//! The reconstruction stream: which coder-side symbols were produced by a
//! transformation, and what they were before it.
//!
//! Only underrepresented outputs can have been transformed (overrepresented
//! states never receive mass from other states), so a frame's stream carries
//! one flag per underrepresented output and nothing for the rest.
//!
//! Frame layout, most significant bit first:
//!
//! ```text
//! mode (1 bit)   0 = raw flags, 1 = Elias-gamma gaps
//! flags          raw: one bit per U-valued output (1 = transformed)
//!                gamma: gaps between flagged positions starting from -1,
//!                       then a final gap landing exactly on the U count
//! preimages      one posterior prefix code per flagged output, in order
//! ```
//!
//! The mode is a function of the outputs and the model (gamma iff the mean
//! posterior transform rate over the frame's U outputs is below
//! [`GAMMA_THRESHOLD`]); decoders recompute it and reject a mismatch.

use std::collections::HashMap;
use std::fmt;

use crate::bits::{push_bits, BitCursor, BitStr, Bits};
use crate::dist::SymbolDistribution;
use crate::error::{Error, Result};
use crate::huffman::HuffmanCode;
use crate::transform::{xorshift64_star, TransformMatrix};

/// Gamma gap coding is used when the expected fraction of flagged outputs
/// is below this, i.e. when the expected gap exceeds 8.
pub const GAMMA_THRESHOLD: f64 = 1.0 / 8.0;

/// One transformed symbol of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ReconRecord {
    /// Index among the frame's underrepresented-valued outputs.
    pub position: u32,
    /// Symbol before the transformation.
    pub preimage: u32,
}

/// Posterior code for the preimage of one underrepresented output value.
#[derive(Debug, Clone)]
struct PreimageTable {
    candidates: Vec<u32>,
    /// `None` when there is a single candidate (zero-bit code).
    code: Option<HuffmanCode>,
    /// Probability that an output with this value was transformed.
    rate: f64,
}

/// Per-model recon coding tables, rebuilt identically by encoder and decoder
/// from `(σ, B)`.
#[derive(Debug, Clone)]
pub struct ReconTables {
    under: Vec<bool>,
    tables: HashMap<u32, PreimageTable>,
    gamma_threshold: f64,
}

impl ReconTables {
    pub fn new(sigma: &SymbolDistribution, b: &TransformMatrix<f64>) -> Result<Self> {
        Self::with_threshold(sigma, b, GAMMA_THRESHOLD)
    }

    pub fn with_threshold(
        sigma: &SymbolDistribution,
        b: &TransformMatrix<f64>,
        gamma_threshold: f64,
    ) -> Result<Self> {
        let n = sigma.alphabet_size();
        if b.alphabet_size() != n {
            return Err(Error::AlphabetMismatch(n, b.alphabet_size()));
        }
        let part = b.partition();
        let under: Vec<bool> = (0..n).map(|s| !part.is_over(s)).collect();
        let mut incoming: HashMap<u32, Vec<(u32, f64)>> = HashMap::new();
        for (from, row) in b.rows().iter().enumerate() {
            for &(to, p) in row {
                if to as usize != from && p > 0.0 {
                    incoming
                        .entry(to)
                        .or_default()
                        .push((from as u32, sigma.prob(from) * p));
                }
            }
        }
        let mut tables = HashMap::new();
        for u in part.under() {
            let mut cands = incoming.remove(&u).unwrap_or_default();
            cands.sort_by_key(|c| c.0);
            let moved: f64 = cands.iter().map(|c| c.1).sum();
            let rate = moved / (moved + sigma.prob(u as usize));
            let code = if cands.len() > 1 {
                let weights = cands.iter().map(|c| c.1 / moved).collect();
                Some(HuffmanCode::build(&SymbolDistribution::new(weights)?)?)
            } else {
                None
            };
            tables.insert(
                u,
                PreimageTable {
                    candidates: cands.into_iter().map(|c| c.0).collect(),
                    code,
                    rate,
                },
            );
        }
        Ok(ReconTables {
            under,
            tables,
            gamma_threshold,
        })
    }

    pub fn is_under(&self, symbol: u32) -> bool {
        self.under.get(symbol as usize).copied().unwrap_or(false)
    }

    /// Posterior probability that an output equal to `symbol` was produced
    /// by a transformation.
    pub fn transform_rate(&self, symbol: u32) -> f64 {
        self.tables.get(&symbol).map_or(0.0, |t| t.rate)
    }

    /// Preimages that can produce `symbol`, in increasing order.
    pub fn candidates(&self, symbol: u32) -> &[u32] {
        self.tables.get(&symbol).map_or(&[], |t| &t.candidates)
    }

    /// Whether a frame with these outputs uses gamma gap coding.
    pub fn gamma_mode(&self, outputs: &[u32]) -> bool {
        let (count, total) = outputs
            .iter()
            .filter(|&&s| self.is_under(s))
            .fold((0usize, 0.0), |(c, t), &s| (c + 1, t + self.transform_rate(s)));
        count == 0 || total / (count as f64) < self.gamma_threshold
    }

    fn table(&self, symbol: u32) -> Result<&PreimageTable> {
        self.tables
            .get(&symbol)
            .ok_or_else(|| Error::Inconsistent(format!("symbol {symbol} cannot be a transform target")))
    }
}

/// Elias gamma code of `n ≥ 1`: `⌊log₂ n⌋` zeros then `n` in binary.
pub fn elias_gamma_encode(out: &mut Bits, n: u64) {
    assert!(n >= 1, "Elias gamma needs a positive integer");
    let width = 64 - n.leading_zeros();
    push_bits(out, 0, width - 1);
    push_bits(out, n, width);
}

pub fn elias_gamma_decode(cursor: &mut BitCursor<'_>) -> Option<u64> {
    let mut zeros = 0;
    while !cursor.read_bit()? {
        zeros += 1;
        if zeros > 63 {
            return None;
        }
    }
    Some((1 << zeros) | cursor.read_bits(zeros)?)
}

fn under_outputs(outputs: &[u32], tables: &ReconTables) -> Vec<u32> {
    outputs.iter().copied().filter(|&s| tables.is_under(s)).collect()
}

/// Encode a frame's records. `outputs` are the transformed symbols the coder
/// saw.
pub fn encode_recon(outputs: &[u32], records: &[ReconRecord], tables: &ReconTables) -> Result<Bits> {
    let mut out = Bits::new();
    encode_recon_into(&mut out, outputs, records, tables)?;
    Ok(out)
}

pub fn encode_recon_into(
    out: &mut Bits,
    outputs: &[u32],
    records: &[ReconRecord],
    tables: &ReconTables,
) -> Result<()> {
    let values = under_outputs(outputs, tables);
    let count = values.len() as u64;
    let mut prev: i64 = -1;
    for r in records {
        if r.position as i64 <= prev {
            return Err(Error::Inconsistent("record positions must increase".into()));
        }
        if r.position as u64 >= count {
            return Err(Error::Inconsistent(format!(
                "record position {} but frame has {count} underrepresented outputs",
                r.position
            )));
        }
        prev = r.position as i64;
    }

    let gamma = tables.gamma_mode(outputs);
    out.push(gamma);
    if gamma {
        let mut prev: i64 = -1;
        for r in records {
            elias_gamma_encode(out, (r.position as i64 - prev) as u64);
            prev = r.position as i64;
        }
        elias_gamma_encode(out, (count as i64 - prev) as u64);
    } else {
        let mut next = records.iter().map(|r| r.position).peekable();
        for p in 0..count as u32 {
            let hit = next.peek() == Some(&p);
            if hit {
                next.next();
            }
            out.push(hit);
        }
    }
    for r in records {
        let table = tables.table(values[r.position as usize])?;
        let Ok(idx) = table.candidates.binary_search(&r.preimage) else {
            return Err(Error::Inconsistent(format!(
                "{} cannot be transformed into {}",
                r.preimage, values[r.position as usize]
            )));
        };
        if let Some(code) = &table.code {
            let (word, len) = code.codeword(idx as u32)?;
            push_bits(out, word, len);
        }
    }
    Ok(())
}

/// Inverse of [`encode_recon`]. Returns the records and the number of bits
/// read.
pub fn decode_recon(
    bits: &BitStr,
    outputs: &[u32],
    tables: &ReconTables,
) -> Result<(Vec<ReconRecord>, usize)> {
    let values = under_outputs(outputs, tables);
    let count = values.len() as u64;
    let mut cursor = BitCursor::new(bits);
    let truncated = |decoded: usize, c: &BitCursor<'_>| Error::Truncated {
        decoded,
        consumed: c.position(),
    };
    let gamma = cursor.read_bit().ok_or_else(|| truncated(0, &cursor))?;
    if gamma != tables.gamma_mode(outputs) {
        return Err(Error::Corrupt("recon mode bit disagrees with the model".into()));
    }
    let mut positions = Vec::new();
    if gamma {
        let mut pos: i64 = -1;
        loop {
            let gap = elias_gamma_decode(&mut cursor).ok_or_else(|| truncated(positions.len(), &cursor))?;
            pos += gap as i64;
            match (pos as u64).cmp(&count) {
                std::cmp::Ordering::Less => positions.push(pos as u32),
                std::cmp::Ordering::Equal => break,
                std::cmp::Ordering::Greater => {
                    return Err(Error::Corrupt("recon gap runs past the frame".into()))
                }
            }
        }
    } else {
        for p in 0..count as u32 {
            if cursor.read_bit().ok_or_else(|| truncated(positions.len(), &cursor))? {
                positions.push(p);
            }
        }
    }
    let mut records = Vec::with_capacity(positions.len());
    for position in positions {
        let table = tables.table(values[position as usize])?;
        let idx = match &table.code {
            None => 0,
            Some(code) => code
                .decode_one(&mut cursor)
                .ok_or_else(|| truncated(records.len(), &cursor))? as usize,
        };
        let Some(&preimage) = table.candidates.get(idx) else {
            return Err(Error::Corrupt("preimage index outside the posterior table".into()));
        };
        records.push(ReconRecord { position, preimage });
    }
    Ok((records, cursor.position()))
}

/// Undo the transformations described by `records`.
pub fn reconstruct(outputs: &[u32], records: &[ReconRecord], tables: &ReconTables) -> Result<Vec<u32>> {
    let mut out = outputs.to_vec();
    let mut records = records.iter().peekable();
    let mut u_index = 0u32;
    for slot in out.iter_mut() {
        if !tables.is_under(*slot) {
            continue;
        }
        if let Some(r) = records.next_if(|r| r.position == u_index) {
            if tables.candidates(*slot).binary_search(&r.preimage).is_err() {
                return Err(Error::Inconsistent(format!(
                    "{} is not a possible preimage of {}",
                    r.preimage, *slot
                )));
            }
            *slot = r.preimage;
        }
        u_index += 1;
    }
    if let Some(r) = records.next() {
        return Err(Error::Inconsistent(format!(
            "record at position {} does not match any underrepresented output",
            r.position
        )));
    }
    Ok(out)
}

/// Keystream provider for the reconstruction stream.
///
/// Keystreams must be deterministic in `(key, nonce, frame_index, offset)`
/// and random access, so frames can be decrypted independently.
pub trait Cipher: Send + Sync {
    fn id(&self) -> u16;
    fn keystream(&self, frame_index: u64, offset: u64, out: &mut [u8]);
}

impl fmt::Debug for dyn Cipher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Cipher(id={})", self.id())
    }
}

pub const NULL_CIPHER_ID: u16 = 0;
pub const TEST_CIPHER_ID: u16 = 1;
/// Lowest id available to production ciphers.
pub const FIRST_EXTERNAL_CIPHER_ID: u16 = 16;

/// All-zero keystream.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullCipher;

impl Cipher for NullCipher {
    fn id(&self) -> u16 {
        NULL_CIPHER_ID
    }

    fn keystream(&self, _frame_index: u64, _offset: u64, out: &mut [u8]) {
        out.fill(0);
    }
}

/// xorshift64* keyed by `key ⊕ nonce ⊕ frame_index` (each byte string folded
/// into a word by XOR of little-endian 8-byte chunks). Output words are
/// emitted little-endian. For testing only: it offers no security.
#[derive(Clone)]
pub struct TestCipher {
    key_word: u64,
}

impl fmt::Debug for TestCipher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("TestCipher")
    }
}

pub(crate) fn fold_bytes(bytes: &[u8]) -> u64 {
    bytes.chunks(8).fold(0, |acc, chunk| {
        let mut word = [0u8; 8];
        word[..chunk.len()].copy_from_slice(chunk);
        acc ^ u64::from_le_bytes(word)
    })
}

impl TestCipher {
    pub fn new(key: &[u8], nonce: &[u8]) -> Self {
        TestCipher {
            key_word: fold_bytes(key) ^ fold_bytes(nonce),
        }
    }
}

impl Cipher for TestCipher {
    fn id(&self) -> u16 {
        TEST_CIPHER_ID
    }

    fn keystream(&self, frame_index: u64, offset: u64, out: &mut [u8]) {
        let mut state = self.key_word ^ frame_index;
        if state == 0 {
            state = 0x9E37_79B9_7F4A_7C15;
        }
        let mut word = [0u8; 8];
        for _ in 0..offset / 8 {
            state = xorshift64_star(state).0;
        }
        let mut skip = (offset % 8) as usize;
        let mut filled = 0;
        while filled < out.len() {
            let (next, w) = xorshift64_star(state);
            state = next;
            word.copy_from_slice(&w.to_le_bytes());
            let take = (8 - skip).min(out.len() - filled);
            out[filled..filled + take].copy_from_slice(&word[skip..skip + take]);
            filled += take;
            skip = 0;
        }
    }
}

/// XOR `payload` with the frame's keystream. Applying it twice is the
/// identity.
pub fn apply_cipher(cipher: &dyn Cipher, frame_index: u64, payload: &[u8]) -> Vec<u8> {
    let mut ks = vec![0u8; payload.len()];
    cipher.keystream(frame_index, 0, &mut ks);
    ks.iter_mut().zip(payload).for_each(|(k, p)| *k ^= p);
    ks
}

pub type CipherFactory = fn(key: &[u8], nonce: &[u8]) -> Box<dyn Cipher>;

/// Maps container cipher ids to constructors.
#[derive(Clone)]
pub struct CipherRegistry {
    factories: HashMap<u16, CipherFactory>,
}

impl Default for CipherRegistry {
    fn default() -> Self {
        let mut factories: HashMap<u16, CipherFactory> = HashMap::new();
        factories.insert(NULL_CIPHER_ID, |_, _| Box::new(NullCipher));
        factories.insert(TEST_CIPHER_ID, |k, n| Box::new(TestCipher::new(k, n)));
        CipherRegistry { factories }
    }
}

impl CipherRegistry {
    /// Register a production cipher; ids below 16 are reserved.
    pub fn register(&mut self, id: u16, factory: CipherFactory) -> Result<()> {
        if id < FIRST_EXTERNAL_CIPHER_ID {
            return Err(Error::InvalidArgument(format!("cipher id {id} is reserved")));
        }
        self.factories.insert(id, factory);
        Ok(())
    }

    pub fn create(&self, id: u16, key: &[u8], nonce: &[u8]) -> Result<Box<dyn Cipher>> {
        self.factories
            .get(&id)
            .map(|f| f(key, nonce))
            .ok_or(Error::UnknownCipher(id))
    }
}
