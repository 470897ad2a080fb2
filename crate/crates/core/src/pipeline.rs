//! End-to-end encoder and decoder, and the framed container format.
//!
//! Each frame of up to `F` symbols is transformed, Huffman coded into X,
//! its reconstruction stream Y is encoded and encrypted, and the two are
//! interleaved (or stored side by side in split mode). Frames are
//! byte-aligned and listed in a trailing directory, so any frame can be
//! decoded from the header, the directory and its own bytes. See
//! `FORMAT.md` for the byte layout.

use std::io::{Read, Seek, SeekFrom, Write};

use sha2::{Digest, Sha256};

use crate::bits::{from_bytes, to_bytes};
use crate::error::{Error, Result};
use crate::huffman::HuffmanCode;
use crate::interleave::{deinterleave, interleave_relaxed, InterleavePlan};
use crate::model::{ModelFile, ModelHash};
use crate::recon::{apply_cipher, decode_recon, encode_recon, reconstruct, Cipher, ReconRecord, ReconTables};
use crate::transform::{sample_transform, BuilderKind, EntropyBudget, EntropySource, TransformMatrix};

pub const MAGIC: [u8; 4] = *b"ENC1";
pub const END_MAGIC: [u8; 4] = *b"1CNE";
pub const VERSION: u16 = 1;
pub const DEFAULT_FRAME_SIZE: u32 = 4096;
pub const FIXED_HEADER_LEN: usize = 64;
pub const DIRECTORY_ENTRY_LEN: usize = 20;
pub const TRAILER_LEN: usize = 28;
const FLAG_SPLIT: u16 = 1;

/// A model together with everything derived from it at setup.
#[derive(Debug, Clone)]
pub struct Encore {
    model: ModelFile,
    builder: BuilderKind,
    transform: TransformMatrix,
    tables: ReconTables,
    budget: EntropyBudget,
}

impl Encore {
    pub fn new(model: ModelFile, builder: BuilderKind) -> Result<Self> {
        let sigma = model.chain().stationary();
        let pi = model.code().implied();
        let transform = TransformMatrix::build(builder, sigma, &pi)?;
        let tables = ReconTables::new(sigma, &transform)?;
        let budget = transform.entropy_budget(sigma)?;
        Ok(Encore {
            model,
            builder,
            transform,
            tables,
            budget,
        })
    }

    pub fn model(&self) -> &ModelFile {
        &self.model
    }

    pub fn code(&self) -> &HuffmanCode {
        self.model.code()
    }

    pub fn builder(&self) -> BuilderKind {
        self.builder
    }

    pub fn transform(&self) -> &TransformMatrix {
        &self.transform
    }

    pub fn tables(&self) -> &ReconTables {
        &self.tables
    }

    pub fn budget(&self) -> &EntropyBudget {
        &self.budget
    }

    /// Transform, code, encrypt and lay out one frame.
    pub fn encode_frame(
        &self,
        symbols: &[u32],
        frame_index: u64,
        cipher: &dyn Cipher,
        layout: Layout,
        source: &mut EntropySource,
    ) -> Result<EncodedFrame> {
        let start_bits = source.bits_consumed();
        let n = self.transform.alphabet_size();
        let mut outputs = Vec::with_capacity(symbols.len());
        let mut records = Vec::new();
        let mut u_index = 0;
        for &s in symbols {
            if s as usize >= n {
                return Err(Error::UnknownSymbol { symbol: s, size: n });
            }
            let o = sample_transform(&self.transform, s, source)?;
            if self.tables.is_under(o) {
                if o != s {
                    records.push(ReconRecord {
                        position: u_index,
                        preimage: s,
                    });
                }
                u_index += 1;
            }
            outputs.push(o);
        }
        let x = self.code().encode_stream(&outputs)?;
        let y = encode_recon(&outputs, &records, &self.tables)?;
        let y = from_bytes(&apply_cipher(cipher, frame_index, &to_bytes(&y)), y.len())?;
        let bytes = match layout {
            Layout::Interleaved(plan) => to_bytes(&interleave_relaxed(&plan, &x, &y)?),
            Layout::Split => {
                let mut b = to_bytes(&x);
                b.extend(to_bytes(&y));
                b
            }
        };
        Ok(EncodedFrame {
            entry: FrameEntry {
                x_bits: x.len() as u64,
                y_bits: y.len() as u64,
                symbols: symbols.len() as u32,
            },
            bytes,
            transformed: records.len() as u64,
            entropy_bits: source.bits_consumed() - start_bits,
        })
    }

    /// Inverse of [`encode_frame`](Self::encode_frame).
    pub fn decode_frame_bytes(
        &self,
        entry: &FrameEntry,
        bytes: &[u8],
        frame_index: u64,
        cipher: &dyn Cipher,
        layout: Layout,
    ) -> Result<Vec<u32>> {
        if bytes.len() as u64 != entry.byte_len(layout.is_split()) {
            return Err(Error::LengthMismatch(format!(
                "frame {frame_index} has {} bytes, directory says {}",
                bytes.len(),
                entry.byte_len(layout.is_split())
            )));
        }
        let (xl, yl) = (entry.x_bits as usize, entry.y_bits as usize);
        let (x, y) = match layout {
            Layout::Interleaved(plan) => deinterleave(&plan, &from_bytes(bytes, xl + yl)?, xl, yl)?,
            Layout::Split => {
                let xb = xl.div_ceil(8);
                (from_bytes(&bytes[..xb], xl)?, from_bytes(&bytes[xb..], yl)?)
            }
        };
        let (outputs, used) = self.code().decode_stream(&x, entry.symbols as usize)?;
        if used != xl {
            return Err(Error::Corrupt(format!(
                "frame {frame_index}: coded stream has {} unused bits",
                xl - used
            )));
        }
        let y = from_bytes(&apply_cipher(cipher, frame_index, &to_bytes(&y)), yl)?;
        let (records, used) = decode_recon(&y, &outputs, &self.tables)?;
        if used != yl {
            return Err(Error::Corrupt(format!(
                "frame {frame_index}: reconstruction stream has {} unused bits",
                yl - used
            )));
        }
        reconstruct(&outputs, &records, &self.tables)
    }
}

/// How a frame's two streams share its bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Interleaved(InterleavePlan),
    /// X bytes then Y bytes, each byte-aligned. Experimental.
    Split,
}

impl Layout {
    pub fn is_split(&self) -> bool {
        matches!(self, Layout::Split)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodeOptions {
    pub plan: InterleavePlan,
    pub frame_size: u32,
    pub split: bool,
    /// Frames encoded or decoded concurrently.
    pub jobs: usize,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        EncodeOptions {
            plan: InterleavePlan::default(),
            frame_size: DEFAULT_FRAME_SIZE,
            split: false,
            jobs: 1,
        }
    }
}

impl EncodeOptions {
    pub fn layout(&self) -> Layout {
        if self.split {
            Layout::Split
        } else {
            Layout::Interleaved(self.plan)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FrameEntry {
    pub x_bits: u64,
    pub y_bits: u64,
    pub symbols: u32,
}

impl FrameEntry {
    pub fn byte_len(&self, split: bool) -> u64 {
        if split {
            self.x_bits.div_ceil(8) + self.y_bits.div_ceil(8)
        } else {
            (self.x_bits + self.y_bits).div_ceil(8)
        }
    }
}

#[derive(Debug, Clone)]
pub struct EncodedFrame {
    pub entry: FrameEntry,
    pub bytes: Vec<u8>,
    pub transformed: u64,
    pub entropy_bits: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EncodeStats {
    pub symbols: u64,
    pub frames: u64,
    pub x_bits: u64,
    pub y_bits: u64,
    pub entropy_bits_consumed: u64,
    pub transformed: u64,
    pub container_bytes: u64,
}

impl EncodeStats {
    fn add(&mut self, f: &EncodedFrame) {
        self.symbols += f.entry.symbols as u64;
        self.frames += 1;
        self.x_bits += f.entry.x_bits;
        self.y_bits += f.entry.y_bits;
        self.entropy_bits_consumed += f.entropy_bits;
        self.transformed += f.transformed;
    }

    fn per_symbol(&self, v: u64) -> f64 {
        if self.symbols == 0 {
            0.0
        } else {
            v as f64 / self.symbols as f64
        }
    }

    /// `(x_bits + y_bits) / symbols`.
    pub fn bits_per_symbol(&self) -> f64 {
        self.per_symbol(self.x_bits + self.y_bits)
    }

    pub fn x_bits_per_symbol(&self) -> f64 {
        self.per_symbol(self.x_bits)
    }

    pub fn recon_bits_per_symbol(&self) -> f64 {
        self.per_symbol(self.y_bits)
    }

    /// Fraction of symbols rewritten by the transformation.
    pub fn transform_rate(&self) -> f64 {
        self.per_symbol(self.transformed)
    }

    pub fn entropy_per_symbol(&self) -> f64 {
        self.per_symbol(self.entropy_bits_consumed)
    }

    /// Whole container, headers and padding included.
    pub fn container_bits_per_symbol(&self) -> f64 {
        self.per_symbol(self.container_bytes * 8)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub version: u16,
    pub split: bool,
    pub builder: BuilderKind,
    pub cipher_id: u16,
    pub plan: InterleavePlan,
    pub frame_size: u32,
    pub model_hash: ModelHash,
    pub kcv: [u8; 8],
    pub nonce: Vec<u8>,
}

impl Header {
    pub fn new(encore: &Encore, cipher: &dyn Cipher, nonce: &[u8], opts: &EncodeOptions) -> Result<Self> {
        if nonce.len() > 255 {
            return Err(Error::InvalidArgument("nonce longer than 255 bytes".into()));
        }
        if opts.frame_size == 0 {
            return Err(Error::InvalidArgument("frame size must be positive".into()));
        }
        Ok(Header {
            version: VERSION,
            split: opts.split,
            builder: encore.builder(),
            cipher_id: cipher.id(),
            plan: opts.plan,
            frame_size: opts.frame_size,
            model_hash: *encore.model().hash(),
            kcv: key_check_value(cipher),
            nonce: nonce.to_vec(),
        })
    }

    pub fn layout(&self) -> Layout {
        if self.split {
            Layout::Split
        } else {
            Layout::Interleaved(self.plan)
        }
    }

    pub fn encoded_len(&self) -> usize {
        FIXED_HEADER_LEN + self.nonce.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(self.encoded_len());
        b.extend_from_slice(&MAGIC);
        b.extend_from_slice(&self.version.to_le_bytes());
        b.extend_from_slice(&(if self.split { FLAG_SPLIT } else { 0 }).to_le_bytes());
        b.push(self.builder.id());
        b.push(self.nonce.len() as u8);
        b.extend_from_slice(&self.cipher_id.to_le_bytes());
        b.extend_from_slice(&self.plan.k().to_le_bytes());
        b.extend_from_slice(&self.plan.l().to_le_bytes());
        b.extend_from_slice(&self.frame_size.to_le_bytes());
        b.extend_from_slice(&self.model_hash);
        b.extend_from_slice(&self.kcv);
        b.extend_from_slice(&self.nonce);
        b
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut fixed = [0u8; FIXED_HEADER_LEN];
        r.read_exact(&mut fixed).map_err(short_read)?;
        if fixed[..4] != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let u16_at = |i: usize| u16::from_le_bytes([fixed[i], fixed[i + 1]]);
        let u32_at = |i: usize| u32::from_le_bytes(fixed[i..i + 4].try_into().unwrap());
        let version = u16_at(4);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let flags = u16_at(6);
        if flags & !FLAG_SPLIT != 0 {
            return Err(Error::Format(format!("unknown flags {flags:#x}")));
        }
        let builder =
            BuilderKind::from_id(fixed[8]).ok_or_else(|| Error::Format(format!("unknown builder {}", fixed[8])))?;
        let plan = InterleavePlan::new(u32_at(12), u32_at(16)).map_err(|e| Error::Format(e.to_string()))?;
        let frame_size = u32_at(20);
        if frame_size == 0 {
            return Err(Error::Format("zero frame size".into()));
        }
        let mut nonce = vec![0u8; fixed[9] as usize];
        r.read_exact(&mut nonce).map_err(short_read)?;
        Ok(Header {
            version,
            split: flags & FLAG_SPLIT != 0,
            builder,
            cipher_id: u16_at(10),
            plan,
            frame_size,
            model_hash: fixed[24..56].try_into().unwrap(),
            kcv: fixed[56..64].try_into().unwrap(),
            nonce,
        })
    }
}

fn short_read(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("container is truncated".into())
    } else {
        Error::Io(e)
    }
}

/// Eight bytes identifying the keystream, so a wrong key or nonce is
/// rejected before any frame is decoded.
pub fn key_check_value(cipher: &dyn Cipher) -> [u8; 8] {
    let mut ks = [0u8; 32];
    cipher.keystream(u64::MAX, 0, &mut ks);
    let digest = Sha256::new_with_prefix(b"encore key check").chain_update(ks).finalize();
    digest[..8].try_into().unwrap()
}

/// Streaming container writer: header first, frames as they come, directory
/// and trailer on [`finish`](Self::finish).
pub struct ContainerWriter<W: Write> {
    inner: W,
    header: Header,
    directory: Vec<FrameEntry>,
    payload_bytes: u64,
    total_symbols: u64,
}

impl<W: Write> ContainerWriter<W> {
    pub fn new(mut inner: W, header: Header) -> Result<Self> {
        inner.write_all(&header.to_bytes())?;
        Ok(ContainerWriter {
            inner,
            header,
            directory: Vec::new(),
            payload_bytes: 0,
            total_symbols: 0,
        })
    }

    pub fn header(&self) -> &Header {
        &self.header
    }

    pub fn write_frame(&mut self, frame: &EncodedFrame) -> Result<()> {
        if frame.entry.symbols > self.header.frame_size {
            return Err(Error::InvalidArgument("frame larger than the declared frame size".into()));
        }
        debug_assert_eq!(frame.bytes.len() as u64, frame.entry.byte_len(self.header.split));
        self.inner.write_all(&frame.bytes)?;
        self.payload_bytes += frame.bytes.len() as u64;
        self.total_symbols += frame.entry.symbols as u64;
        self.directory.push(frame.entry);
        Ok(())
    }

    /// Total bytes written once finished.
    pub fn finished_len(&self) -> u64 {
        (self.header.encoded_len() + self.directory.len() * DIRECTORY_ENTRY_LEN + TRAILER_LEN) as u64
            + self.payload_bytes
    }

    pub fn finish(mut self) -> Result<W> {
        let dir_offset = self.header.encoded_len() as u64 + self.payload_bytes;
        for e in &self.directory {
            self.inner.write_all(&e.x_bits.to_le_bytes())?;
            self.inner.write_all(&e.y_bits.to_le_bytes())?;
            self.inner.write_all(&e.symbols.to_le_bytes())?;
        }
        self.inner.write_all(&(self.directory.len() as u64).to_le_bytes())?;
        self.inner.write_all(&self.total_symbols.to_le_bytes())?;
        self.inner.write_all(&dir_offset.to_le_bytes())?;
        self.inner.write_all(&END_MAGIC)?;
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Random-access container reader. Opening reads the header, trailer and
/// directory; frames are read on demand.
pub struct ContainerReader<R: Read + Seek> {
    inner: R,
    header: Header,
    directory: Vec<FrameEntry>,
    offsets: Vec<u64>,
    total_symbols: u64,
}

impl<R: Read + Seek> ContainerReader<R> {
    pub fn open(mut inner: R) -> Result<Self> {
        let file_len = inner.seek(SeekFrom::End(0))?;
        inner.seek(SeekFrom::Start(0))?;
        let header = Header::read_from(&mut inner)?;
        let header_len = header.encoded_len() as u64;
        if file_len < header_len + TRAILER_LEN as u64 {
            return Err(Error::Format("container is truncated".into()));
        }
        inner.seek(SeekFrom::Start(file_len - TRAILER_LEN as u64))?;
        let mut t = [0u8; TRAILER_LEN];
        inner.read_exact(&mut t)?;
        if t[24..] != END_MAGIC {
            return Err(Error::Format("bad trailer magic".into()));
        }
        let u64_at = |b: &[u8], i: usize| u64::from_le_bytes(b[i..i + 8].try_into().unwrap());
        let (count, total_symbols, dir_offset) = (u64_at(&t, 0), u64_at(&t, 8), u64_at(&t, 16));
        let dir_len = count
            .checked_mul(DIRECTORY_ENTRY_LEN as u64)
            .filter(|d| dir_offset.checked_add(*d) == Some(file_len - TRAILER_LEN as u64))
            .ok_or_else(|| Error::Format("directory does not fit the file".into()))?;
        if dir_offset < header_len {
            return Err(Error::Format("directory overlaps the header".into()));
        }
        inner.seek(SeekFrom::Start(dir_offset))?;
        let mut raw = vec![0u8; dir_len as usize];
        inner.read_exact(&mut raw)?;
        let mut directory = Vec::with_capacity(count as usize);
        let mut offsets = Vec::with_capacity(count as usize + 1);
        let (mut offset, mut symbols) = (header_len, 0u64);
        offsets.push(offset);
        for chunk in raw.chunks_exact(DIRECTORY_ENTRY_LEN) {
            let e = FrameEntry {
                x_bits: u64_at(chunk, 0),
                y_bits: u64_at(chunk, 8),
                symbols: u32::from_le_bytes(chunk[16..20].try_into().unwrap()),
            };
            if e.symbols > header.frame_size || e.x_bits.checked_add(e.y_bits).is_none() {
                return Err(Error::Format("invalid directory entry".into()));
            }
            offset = offset
                .checked_add(e.byte_len(header.split))
                .ok_or_else(|| Error::Format("invalid directory entry".into()))?;
            symbols += e.symbols as u64;
            offsets.push(offset);
            directory.push(e);
        }
        if offset != dir_offset {
            return Err(Error::Format("frame lengths do not add up to the payload".into()));
        }
        if symbols != total_symbols {
            return Err(Error::Format("symbol counts do not add up".into()));
        }
        Ok(ContainerReader {
            inner,
            header,
            directory,
            offsets,
            total_symbols,
        })
    }

    pub fn header(&self) -> &Header {
        &self.header
    }

    pub fn frame_count(&self) -> usize {
        self.directory.len()
    }

    pub fn total_symbols(&self) -> u64 {
        self.total_symbols
    }

    pub fn entry(&self, index: usize) -> Result<&FrameEntry> {
        self.directory.get(index).ok_or(Error::FrameOutOfRange {
            index,
            count: self.directory.len(),
        })
    }

    /// The byte range of one frame.
    pub fn read_frame(&mut self, index: usize) -> Result<(FrameEntry, Vec<u8>)> {
        let entry = *self.entry(index)?;
        let (start, end) = (self.offsets[index], self.offsets[index + 1]);
        self.inner.seek(SeekFrom::Start(start))?;
        let mut bytes = vec![0u8; (end - start) as usize];
        self.inner.read_exact(&mut bytes)?;
        Ok((entry, bytes))
    }
}

/// Frame-batching encoder writing a container as it goes. At most
/// `jobs` frames are resident.
pub struct Encoder<'a, W: Write> {
    encore: &'a Encore,
    cipher: &'a dyn Cipher,
    writer: ContainerWriter<W>,
    opts: EncodeOptions,
    source: EntropySource,
    pending: Vec<u32>,
    next_frame: u64,
    stats: EncodeStats,
}

impl<'a, W: Write> Encoder<'a, W> {
    pub fn new(
        encore: &'a Encore,
        cipher: &'a dyn Cipher,
        nonce: &[u8],
        opts: EncodeOptions,
        source: EntropySource,
        out: W,
    ) -> Result<Self> {
        let header = Header::new(encore, cipher, nonce, &opts)?;
        Ok(Encoder {
            encore,
            cipher,
            writer: ContainerWriter::new(out, header)?,
            opts,
            source,
            pending: Vec::new(),
            next_frame: 0,
            stats: EncodeStats::default(),
        })
    }

    pub fn push(&mut self, symbols: &[u32]) -> Result<()> {
        self.pending.extend_from_slice(symbols);
        let batch = self.opts.frame_size as usize * self.opts.jobs.max(1);
        if self.pending.len() >= batch {
            let whole = self.pending.len() / self.opts.frame_size as usize * self.opts.frame_size as usize;
            let rest = self.pending.split_off(whole);
            let ready = std::mem::replace(&mut self.pending, rest);
            self.encode_frames(&ready)?;
        }
        Ok(())
    }

    fn encode_frames(&mut self, symbols: &[u32]) -> Result<()> {
        let layout = self.opts.layout();
        let chunks: Vec<&[u32]> = symbols.chunks(self.opts.frame_size as usize).collect();
        for group in chunks.chunks(self.opts.jobs.max(1)) {
            let work: Vec<(u64, &[u32], EntropySource)> = group
                .iter()
                .map(|c| {
                    let idx = self.next_frame;
                    self.next_frame += 1;
                    (idx, *c, self.source.for_frame(idx))
                })
                .collect();
            let (encore, cipher) = (self.encore, self.cipher);
            let frames: Vec<Result<EncodedFrame>> = if work.len() == 1 {
                work.into_iter()
                    .map(|(i, c, mut s)| encore.encode_frame(c, i, cipher, layout, &mut s))
                    .collect()
            } else {
                std::thread::scope(|scope| {
                    let handles: Vec<_> = work
                        .into_iter()
                        .map(|(i, c, mut s)| scope.spawn(move || encore.encode_frame(c, i, cipher, layout, &mut s)))
                        .collect();
                    handles.into_iter().map(|h| h.join().expect("encoder thread panicked")).collect()
                })
            };
            for f in frames {
                let f = f?;
                self.stats.add(&f);
                self.writer.write_frame(&f)?;
            }
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<(W, EncodeStats)> {
        let rest = std::mem::take(&mut self.pending);
        self.encode_frames(&rest)?;
        self.stats.container_bytes = self.writer.finished_len();
        Ok((self.writer.finish()?, self.stats))
    }
}

/// Decoder over an opened container. Checks the model hash, cipher id and
/// key check value up front.
pub struct Decoder<'a, R: Read + Seek> {
    encore: &'a Encore,
    cipher: &'a dyn Cipher,
    reader: ContainerReader<R>,
}

impl<'a, R: Read + Seek> Decoder<'a, R> {
    pub fn new(encore: &'a Encore, cipher: &'a dyn Cipher, inner: R) -> Result<Self> {
        let reader = ContainerReader::open(inner)?;
        check_header(encore, cipher, reader.header())?;
        Ok(Decoder { encore, cipher, reader })
    }

    pub fn header(&self) -> &Header {
        self.reader.header()
    }

    pub fn frame_count(&self) -> usize {
        self.reader.frame_count()
    }

    pub fn total_symbols(&self) -> u64 {
        self.reader.total_symbols()
    }

    pub fn decode_frame(&mut self, index: usize) -> Result<Vec<u32>> {
        let (entry, bytes) = self.reader.read_frame(index)?;
        let layout = self.reader.header().layout();
        self.encore
            .decode_frame_bytes(&entry, &bytes, index as u64, self.cipher, layout)
    }

    /// Decode every frame in order, handing each to `sink`. Up to `jobs`
    /// frames are decoded concurrently.
    pub fn decode_all(&mut self, jobs: usize, mut sink: impl FnMut(Vec<u32>) -> Result<()>) -> Result<()> {
        let layout = self.reader.header().layout();
        let count = self.frame_count();
        let jobs = jobs.max(1);
        let mut start = 0;
        while start < count {
            let end = (start + jobs).min(count);
            let raw = (start..end)
                .map(|i| self.reader.read_frame(i))
                .collect::<Result<Vec<_>>>()?;
            let (encore, cipher) = (self.encore, self.cipher);
            let decoded: Vec<Result<Vec<u32>>> = if raw.len() == 1 {
                raw.iter()
                    .map(|(e, b)| encore.decode_frame_bytes(e, b, start as u64, cipher, layout))
                    .collect()
            } else {
                std::thread::scope(|scope| {
                    let handles: Vec<_> = raw
                        .iter()
                        .enumerate()
                        .map(|(j, (e, b))| {
                            scope.spawn(move || encore.decode_frame_bytes(e, b, (start + j) as u64, cipher, layout))
                        })
                        .collect();
                    handles.into_iter().map(|h| h.join().expect("decoder thread panicked")).collect()
                })
            };
            for d in decoded {
                sink(d?)?;
            }
            start = end;
        }
        Ok(())
    }
}

pub fn check_header(encore: &Encore, cipher: &dyn Cipher, header: &Header) -> Result<()> {
    if header.model_hash != *encore.model().hash() {
        return Err(Error::HashMismatch);
    }
    if header.builder != encore.builder() {
        return Err(Error::Format(format!(
            "container was built with the {:?} transform, decoder uses {:?}",
            header.builder,
            encore.builder()
        )));
    }
    if header.cipher_id != cipher.id() {
        return Err(Error::UnknownCipher(header.cipher_id));
    }
    if header.kcv != key_check_value(cipher) {
        return Err(Error::BadKey);
    }
    Ok(())
}

/// Encode a whole symbol sequence into an in-memory container.
pub fn encode(
    encore: &Encore,
    cipher: &dyn Cipher,
    nonce: &[u8],
    opts: EncodeOptions,
    symbols: &[u32],
    source: EntropySource,
) -> Result<(Vec<u8>, EncodeStats)> {
    let mut enc = Encoder::new(encore, cipher, nonce, opts, source, Vec::new())?;
    enc.push(symbols)?;
    enc.finish()
}

pub fn decode(encore: &Encore, cipher: &dyn Cipher, container: &[u8]) -> Result<Vec<u32>> {
    let mut dec = Decoder::new(encore, cipher, std::io::Cursor::new(container))?;
    let mut out = Vec::with_capacity(dec.total_symbols() as usize);
    dec.decode_all(1, |frame| {
        out.extend(frame);
        Ok(())
    })?;
    Ok(out)
}

/// Decode one frame, reading only the header, the directory and that
/// frame's bytes.
pub fn decode_frame<R: Read + Seek>(encore: &Encore, cipher: &dyn Cipher, container: R, index: usize) -> Result<Vec<u32>> {
    Decoder::new(encore, cipher, container)?.decode_frame(index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::SymbolDistribution;
    use crate::markov::MarkovModel;
    use crate::recon::{NullCipher, TestCipher};
    use std::io::Cursor;

    fn encore_for(sigma: &[f64]) -> Encore {
        let chain = MarkovModel::iid(&SymbolDistribution::new(sigma.to_vec()).unwrap()).unwrap();
        Encore::new(ModelFile::new(chain, 0).unwrap(), BuilderKind::Greedy).unwrap()
    }

    fn iid_symbols(e: &Encore, n: usize, seed: u64) -> Vec<u32> {
        e.model().chain().sample_path(n, &mut EntropySource::test(seed)).unwrap()
    }

    #[test]
    fn dyadic_source_has_no_transforms() {
        let e = encore_for(&[0.5, 0.25, 0.125, 0.125]);
        let symbols = iid_symbols(&e, 10_000, 1);
        let opts = EncodeOptions {
            frame_size: 1000,
            ..Default::default()
        };
        let (bytes, stats) = encode(&e, &NullCipher, b"", opts, &symbols, EntropySource::test(2)).unwrap();
        assert_eq!(stats.transformed, 0);
        assert_eq!(stats.entropy_bits_consumed, 0);
        let coded: u64 = symbols.iter().map(|&s| e.code().len_of(s as usize) as u64).sum();
        assert_eq!(stats.x_bits, coded);
        // mode bit plus the gamma terminator per frame
        assert_eq!(stats.y_bits, 2 * 10);
        assert_eq!(decode(&e, &NullCipher, &bytes).unwrap(), symbols);
    }

    #[test]
    fn uniform_three_rates() {
        let e = encore_for(&[1.0 / 3.0; 3]);
        let n = 100_000;
        let symbols = iid_symbols(&e, n, 3);
        let cipher = TestCipher::new(b"key", b"nonce");
        let (bytes, stats) =
            encode(&e, &cipher, b"nonce", EncodeOptions::default(), &symbols, EntropySource::test(4)).unwrap();
        let p = 1.0 / 6.0;
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        assert!((stats.transform_rate() - p).abs() <= 3.0 * sd, "{}", stats.transform_rate());
        // the coder sees π-distributed symbols, so X costs H(π) = 3/2 bits
        // per symbol rather than the H(σ, π) = 5/3 of coding σ directly
        assert!((stats.x_bits_per_symbol() - 1.5).abs() < 0.01);
        // Y: one flag per U output (π(U) = 1/2) plus one preimage bit per
        // transformed symbol (1/6), plus a mode bit per frame
        assert!((stats.recon_bits_per_symbol() - 2.0 / 3.0).abs() < 0.01);
        assert!(stats.entropy_per_symbol() <= e.budget().m_prime);
        assert_eq!(stats.bits_per_symbol(), (stats.x_bits + stats.y_bits) as f64 / n as f64);
        assert_eq!(stats.container_bytes, bytes.len() as u64);
        assert_eq!(decode(&e, &cipher, &bytes).unwrap(), symbols);
    }

    #[test]
    fn frames_decode_independently() {
        let chain = MarkovModel::new(vec![vec![0.9, 0.05, 0.05], vec![0.3, 0.4, 0.3], vec![0.1, 0.1, 0.8]]).unwrap();
        let e = Encore::new(ModelFile::new(chain, 0).unwrap(), BuilderKind::Proportional).unwrap();
        let symbols = e.model().chain().sample_path(5000, &mut EntropySource::test(5)).unwrap();
        let cipher = TestCipher::new(b"k", b"n");
        for split in [false, true] {
            let opts = EncodeOptions {
                frame_size: 256,
                split,
                plan: InterleavePlan::new(4, 4).unwrap(),
                jobs: 3,
            };
            let (bytes, _) = encode(&e, &cipher, b"n", opts, &symbols, EntropySource::test(6)).unwrap();
            let full = decode(&e, &cipher, &bytes).unwrap();
            assert_eq!(full, symbols);
            for i in [0usize, 7, 19] {
                let frame = decode_frame(&e, &cipher, Cursor::new(&bytes), i).unwrap();
                assert_eq!(frame, symbols[i * 256..(i * 256 + 256).min(5000)]);
            }
            assert!(matches!(
                decode_frame(&e, &cipher, Cursor::new(&bytes), 20),
                Err(Error::FrameOutOfRange { index: 20, count: 20 })
            ));
        }
    }

    #[test]
    fn parallel_encoding_matches_serial() {
        let e = encore_for(&[0.4, 0.3, 0.2, 0.1]);
        let symbols = iid_symbols(&e, 3000, 9);
        let run = |jobs| {
            let opts = EncodeOptions {
                frame_size: 100,
                jobs,
                ..Default::default()
            };
            encode(&e, &NullCipher, b"", opts, &symbols, EntropySource::test(10)).unwrap().0
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn empty_input() {
        let e = encore_for(&[0.4, 0.6]);
        let (bytes, stats) = encode(&e, &NullCipher, b"", EncodeOptions::default(), &[], EntropySource::test(1)).unwrap();
        assert_eq!(stats.frames, 0);
        assert_eq!(bytes.len(), FIXED_HEADER_LEN + TRAILER_LEN);
        assert!(decode(&e, &NullCipher, &bytes).unwrap().is_empty());
    }

    #[test]
    fn header_checks() {
        let e = encore_for(&[0.4, 0.6]);
        let other = encore_for(&[0.3, 0.7]);
        let cipher = TestCipher::new(b"right", b"n");
        let symbols = iid_symbols(&e, 500, 1);
        let (bytes, _) = encode(&e, &cipher, b"n", EncodeOptions::default(), &symbols, EntropySource::test(1)).unwrap();
        assert!(matches!(decode(&other, &cipher, &bytes), Err(Error::HashMismatch)));
        assert!(matches!(
            decode(&e, &TestCipher::new(b"wrong", b"n"), &bytes),
            Err(Error::BadKey)
        ));
        assert!(matches!(decode(&e, &NullCipher, &bytes), Err(Error::UnknownCipher(1))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&e, &cipher, &bad), Err(Error::Format(_))));
        assert!(matches!(decode(&e, &cipher, &bytes[..bytes.len() - 1]), Err(Error::Format(_))));
        assert!(matches!(decode(&e, &cipher, &bytes[..10]), Err(Error::Format(_))));
    }

    #[test]
    fn header_round_trip() {
        let e = encore_for(&[0.4, 0.6]);
        let h = Header::new(&e, &TestCipher::new(b"a", b"b"), b"nonce", &EncodeOptions::default()).unwrap();
        let bytes = h.to_bytes();
        assert_eq!(bytes.len(), FIXED_HEADER_LEN + 5);
        assert_eq!(Header::read_from(&mut Cursor::new(bytes)).unwrap(), h);
    }

    #[test]
    fn unknown_symbols_are_rejected() {
        let e = encore_for(&[0.4, 0.6]);
        assert!(matches!(
            encode(&e, &NullCipher, b"", EncodeOptions::default(), &[0, 2], EntropySource::test(1)),
            Err(Error::UnknownSymbol { symbol: 2, size: 2 })
        ));
    }
}
