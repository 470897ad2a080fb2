//! C ABI for the encore compressor.
//!
//! Every function returns an [`EncoreStatus`]; on failure a message is
//! available from [`encore_last_error`] on the same thread until the next
//! call. Models, byte buffers and symbol arrays are opaque handles owned
//! by the caller and released with the matching `_free` function.
//!
//! Pointer arguments may be null only where noted; a null data pointer
//! with a zero length is accepted everywhere as an empty input.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::io::Cursor;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use encore::model::{bytes_to_symbols, symbols_to_bytes};
use encore::pipeline::{ContainerReader, Encoder};
use encore::recon::NULL_CIPHER_ID;
use encore::{BuilderKind, CipherRegistry, EncodeOptions, Encore, EntropySource, Error, InterleavePlan, ModelFile};

/// Transform builder that spreads excess in proportion to deficits.
pub const ENCORE_BUILDER_PROPORTIONAL: u32 = 0;
/// Transform builder that saturates the largest deficits first.
pub const ENCORE_BUILDER_GREEDY: u32 = 1;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoreStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidModel = 3,
    /// Malformed, truncated or corrupt container.
    Format = 4,
    /// The container was written with a different model or builder.
    ModelMismatch = 5,
    /// Wrong or missing key or nonce.
    BadKey = 6,
    UnknownCipher = 7,
    FrameOutOfRange = 8,
    UnknownSymbol = 9,
    Io = 10,
    Internal = 11,
    Panic = 12,
}

impl From<&Error> for EncoreStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::LengthMismatch(_) => EncoreStatus::InvalidArgument,
            Error::InvalidModel(_)
            | Error::Parse { .. }
            | Error::InvalidDistribution(_)
            | Error::NotErgodic(_)
            | Error::NoConvergence(_)
            | Error::MixingCapExceeded(_)
            | Error::CodeTooLong(_)
            | Error::Infeasible(_) => EncoreStatus::InvalidModel,
            Error::Format(_)
            | Error::Corrupt(_)
            | Error::Truncated { .. }
            | Error::Inconsistent(_)
            | Error::Exhausted(_) => EncoreStatus::Format,
            Error::HashMismatch => EncoreStatus::ModelMismatch,
            Error::BadKey => EncoreStatus::BadKey,
            Error::UnknownCipher(_) => EncoreStatus::UnknownCipher,
            Error::FrameOutOfRange { .. } => EncoreStatus::FrameOutOfRange,
            Error::UnknownSymbol { .. } => EncoreStatus::UnknownSymbol,
            Error::Io(_) => EncoreStatus::Io,
            Error::AlphabetMismatch(..) | Error::SupportMismatch(_) => EncoreStatus::Internal,
        }
    }
}

/// Encoding parameters. Fill with [`encore_encode_params_default`] and
/// override fields as needed.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct EncoreEncodeParams {
    /// 0 for no encryption, 1 for the built-in test keystream, or a
    /// registered id.
    pub cipher_id: u16,
    pub key: *const u8,
    pub key_len: usize,
    pub nonce: *const u8,
    pub nonce_len: usize,
    /// X bits per Y bit in the interleaving plan.
    pub k: u32,
    pub l: u32,
    pub frame_size: u32,
    /// Store X and Y side by side instead of interleaving them.
    pub split: bool,
    pub jobs: u32,
    /// When `deterministic` is set, the transform randomness comes from
    /// a seeded generator. Reproducible, and only for testing.
    pub deterministic: bool,
    pub seed: u64,
}

/// A loaded model with its transform and reconstruction tables.
pub struct EncoreModel(Encore);

/// An owned byte buffer.
pub struct EncoreBuffer(Vec<u8>);

/// An owned array of symbols.
pub struct EncoreSymbols(Vec<u32>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(EncoreStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(EncoreStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(EncoreStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, records any error or panic, and maps it to a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EncoreStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EncoreStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            EncoreStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(data: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        Ok(&[])
    } else if data.is_null() {
        Err(null(what))
    } else {
        Ok(std::slice::from_raw_parts(data, len))
    }
}

unsafe fn model_ref<'a>(model: *const EncoreModel) -> Result<&'a Encore, Failure> {
    model.as_ref().map(|m| &m.0).ok_or_else(|| null("model"))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn builder_kind(builder: u32) -> Result<BuilderKind, Failure> {
    match builder {
        ENCORE_BUILDER_PROPORTIONAL => Ok(BuilderKind::Proportional),
        ENCORE_BUILDER_GREEDY => Ok(BuilderKind::Greedy),
        b => Err(Failure(EncoreStatus::InvalidArgument, format!("unknown builder {b}"))),
    }
}

fn byte_width(encore: &Encore) -> Result<u32, Failure> {
    match encore.model().width() {
        0 => Err(Failure(
            EncoreStatus::InvalidArgument,
            "model has an abstract alphabet and cannot code bytes".into(),
        )),
        w => Ok(w),
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn encore_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version string"),
    };
    VERSION.as_ptr()
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn encore_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parse a model file held in memory.
///
/// # Safety
/// `data` must point to `len` readable bytes and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn encore_model_from_bytes(
    data: *const u8,
    len: usize,
    builder: u32,
    out: *mut *mut EncoreModel,
) -> EncoreStatus {
    guard(|| {
        let bytes = slice(data, len, "data")?;
        let encore = Encore::new(ModelFile::parse(bytes)?, builder_kind(builder)?)?;
        put(out, EncoreModel(encore))
    })
}

/// Load a model file from a UTF-8 path.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn encore_model_from_file(
    path: *const c_char,
    builder: u32,
    out: *mut *mut EncoreModel,
) -> EncoreStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Failure(EncoreStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let encore = Encore::new(ModelFile::load(Path::new(path))?, builder_kind(builder)?)?;
        put(out, EncoreModel(encore))
    })
}

/// Train a first-order model on a byte corpus read as big-endian
/// `width`-byte symbols.
///
/// # Safety
/// `corpus` must point to `len` readable bytes and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn encore_model_train(
    corpus: *const u8,
    len: usize,
    width: u32,
    smoothing: f64,
    builder: u32,
    out: *mut *mut EncoreModel,
) -> EncoreStatus {
    guard(|| {
        let corpus = slice(corpus, len, "corpus")?;
        let encore = Encore::new(ModelFile::train(corpus, width, smoothing)?, builder_kind(builder)?)?;
        put(out, EncoreModel(encore))
    })
}

/// Serialize a model to its file format, for saving a trained model.
///
/// # Safety
/// `model` must be a live handle and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn encore_model_to_bytes(model: *const EncoreModel, out: *mut *mut EncoreBuffer) -> EncoreStatus {
    guard(|| {
        let encore = model_ref(model)?;
        put(out, EncoreBuffer(encore.model().to_text().into_bytes()))
    })
}

/// Number of symbols in the model's alphabet, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn encore_model_alphabet_size(model: *const EncoreModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.model().chain().alphabet_size())
}

/// Bytes per symbol for byte input, 0 for an abstract alphabet.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn encore_model_width(model: *const EncoreModel) -> u32 {
    model.as_ref().map_or(0, |m| m.0.model().width())
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn encore_model_free(model: *mut EncoreModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Defaults: no cipher, plan (8, 1), 4096-symbol frames, one job, OS
/// randomness.
///
/// # Safety
/// `params` must be writable.
#[no_mangle]
pub unsafe extern "C" fn encore_encode_params_default(params: *mut EncoreEncodeParams) -> EncoreStatus {
    guard(|| {
        let params = params.as_mut().ok_or_else(|| null("params"))?;
        let opts = EncodeOptions::default();
        *params = EncoreEncodeParams {
            cipher_id: NULL_CIPHER_ID,
            key: ptr::null(),
            key_len: 0,
            nonce: ptr::null(),
            nonce_len: 0,
            k: opts.plan.k(),
            l: opts.plan.l(),
            frame_size: opts.frame_size,
            split: opts.split,
            jobs: opts.jobs as u32,
            deterministic: false,
            seed: 0,
        };
        Ok(())
    })
}

unsafe fn encode_symbols(encore: &Encore, params: *const EncoreEncodeParams, symbols: &[u32]) -> Result<Vec<u8>, Failure> {
    let p = params.as_ref().ok_or_else(|| null("params"))?;
    let key = slice(p.key, p.key_len, "key")?;
    let nonce = slice(p.nonce, p.nonce_len, "nonce")?;
    if p.cipher_id != NULL_CIPHER_ID && p.key.is_null() {
        return Err(Failure(
            EncoreStatus::BadKey,
            format!("cipher {} needs a key", p.cipher_id),
        ));
    }
    let cipher = CipherRegistry::default().create(p.cipher_id, key, nonce)?;
    let opts = EncodeOptions {
        plan: InterleavePlan::new(p.k, p.l)?,
        frame_size: p.frame_size,
        split: p.split,
        jobs: p.jobs.max(1) as usize,
    };
    let source = if p.deterministic {
        EntropySource::test(p.seed)
    } else {
        EntropySource::os()
    };
    let mut enc = Encoder::new(encore, cipher.as_ref(), nonce, opts, source, Vec::new())?;
    enc.push(symbols)?;
    Ok(enc.finish()?.0)
}

/// Encode `len` symbols into a new container.
///
/// # Safety
/// `model` must be a live handle, `params` readable, `symbols` must point
/// to `len` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn encore_encode(
    model: *const EncoreModel,
    params: *const EncoreEncodeParams,
    symbols: *const u32,
    len: usize,
    out: *mut *mut EncoreBuffer,
) -> EncoreStatus {
    guard(|| {
        let encore = model_ref(model)?;
        let container = encode_symbols(encore, params, slice(symbols, len, "symbols")?)?;
        put(out, EncoreBuffer(container))
    })
}

/// Encode raw bytes with a byte model (big-endian `width`-byte symbols).
///
/// # Safety
/// As for [`encore_encode`], with `data` pointing to `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn encore_encode_bytes(
    model: *const EncoreModel,
    params: *const EncoreEncodeParams,
    data: *const u8,
    len: usize,
    out: *mut *mut EncoreBuffer,
) -> EncoreStatus {
    guard(|| {
        let encore = model_ref(model)?;
        let symbols = bytes_to_symbols(slice(data, len, "data")?, byte_width(encore)?)?;
        put(out, EncoreBuffer(encode_symbols(encore, params, &symbols)?))
    })
}

/// Decodes with the cipher and nonce named in the container's header.
unsafe fn decode_with(
    encore: &Encore,
    key: *const u8,
    key_len: usize,
    container: *const u8,
    len: usize,
    frame: Option<usize>,
) -> Result<Vec<u32>, Failure> {
    let bytes = slice(container, len, "container")?;
    let key = if key.is_null() { None } else { Some(slice(key, key_len, "key")?) };
    let header = ContainerReader::open(Cursor::new(bytes))?.header().clone();
    if header.cipher_id != NULL_CIPHER_ID && key.is_none() {
        return Err(Error::BadKey.into());
    }
    let cipher = CipherRegistry::default().create(header.cipher_id, key.unwrap_or(&[]), &header.nonce)?;
    Ok(match frame {
        None => encore::decode(encore, cipher.as_ref(), bytes)?,
        Some(i) => encore::decode_frame(encore, cipher.as_ref(), Cursor::new(bytes), i)?,
    })
}

/// Decode a whole container. `key` may be null for an unencrypted one.
///
/// # Safety
/// `model` must be a live handle, `key` null or `key_len` bytes,
/// `container` `len` bytes, and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn encore_decode(
    model: *const EncoreModel,
    key: *const u8,
    key_len: usize,
    container: *const u8,
    len: usize,
    out: *mut *mut EncoreSymbols,
) -> EncoreStatus {
    guard(|| {
        let encore = model_ref(model)?;
        put(out, EncoreSymbols(decode_with(encore, key, key_len, container, len, None)?))
    })
}

/// Decode a whole container back to bytes with a byte model.
///
/// # Safety
/// As for [`encore_decode`].
#[no_mangle]
pub unsafe extern "C" fn encore_decode_bytes(
    model: *const EncoreModel,
    key: *const u8,
    key_len: usize,
    container: *const u8,
    len: usize,
    out: *mut *mut EncoreBuffer,
) -> EncoreStatus {
    guard(|| {
        let encore = model_ref(model)?;
        let width = byte_width(encore)?;
        let symbols = decode_with(encore, key, key_len, container, len, None)?;
        put(out, EncoreBuffer(symbols_to_bytes(&symbols, width)))
    })
}

/// Decode the single frame `index` without touching the other frames.
///
/// # Safety
/// As for [`encore_decode`].
#[no_mangle]
pub unsafe extern "C" fn encore_decode_frame(
    model: *const EncoreModel,
    key: *const u8,
    key_len: usize,
    container: *const u8,
    len: usize,
    index: usize,
    out: *mut *mut EncoreSymbols,
) -> EncoreStatus {
    guard(|| {
        let encore = model_ref(model)?;
        put(out, EncoreSymbols(decode_with(encore, key, key_len, container, len, Some(index))?))
    })
}

/// Frame and symbol counts from a container's directory. Either output
/// pointer may be null.
///
/// # Safety
/// `container` must point to `len` bytes; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn encore_container_info(
    container: *const u8,
    len: usize,
    frames: *mut usize,
    symbols: *mut u64,
) -> EncoreStatus {
    guard(|| {
        let reader = ContainerReader::open(Cursor::new(slice(container, len, "container")?))?;
        if let Some(f) = frames.as_mut() {
            *f = reader.frame_count();
        }
        if let Some(s) = symbols.as_mut() {
            *s = reader.total_symbols();
        }
        Ok(())
    })
}

/// # Safety
/// `buffer` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn encore_buffer_data(buffer: *const EncoreBuffer) -> *const u8 {
    buffer.as_ref().map_or(ptr::null(), |b| b.0.as_ptr())
}

/// # Safety
/// `buffer` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn encore_buffer_len(buffer: *const EncoreBuffer) -> usize {
    buffer.as_ref().map_or(0, |b| b.0.len())
}

/// # Safety
/// `buffer` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn encore_buffer_free(buffer: *mut EncoreBuffer) {
    if !buffer.is_null() {
        drop(Box::from_raw(buffer));
    }
}

/// # Safety
/// `symbols` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn encore_symbols_data(symbols: *const EncoreSymbols) -> *const u32 {
    symbols.as_ref().map_or(ptr::null(), |s| s.0.as_ptr())
}

/// # Safety
/// `symbols` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn encore_symbols_len(symbols: *const EncoreSymbols) -> usize {
    symbols.as_ref().map_or(0, |s| s.0.len())
}

/// # Safety
/// `symbols` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn encore_symbols_free(symbols: *mut EncoreSymbols) {
    if !symbols.is_null() {
        drop(Box::from_raw(symbols));
    }
}
