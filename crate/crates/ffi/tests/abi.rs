use std::ffi::{CStr, CString};
use std::ptr;

use encore_ffi::*;

const CORPUS: &[u8] = b"the quick brown fox jumps over the lazy dog while the cat sleeps by the door. \
a bird sings in the tree and the dog barks back at it until the sun goes down.";

fn trained() -> *mut EncoreModel {
    let mut model = ptr::null_mut();
    let status = unsafe { encore_model_train(CORPUS.as_ptr(), CORPUS.len(), 1, 0.5, ENCORE_BUILDER_GREEDY, &mut model) };
    assert_eq!(status, EncoreStatus::Ok);
    assert!(!model.is_null());
    model
}

fn params() -> EncoreEncodeParams {
    let mut p = std::mem::MaybeUninit::uninit();
    assert_eq!(unsafe { encore_encode_params_default(p.as_mut_ptr()) }, EncoreStatus::Ok);
    let mut p = unsafe { p.assume_init() };
    p.deterministic = true;
    p.seed = 7;
    p
}

fn buffer(b: *mut EncoreBuffer) -> Vec<u8> {
    let v = unsafe { std::slice::from_raw_parts(encore_buffer_data(b), encore_buffer_len(b)) }.to_vec();
    unsafe { encore_buffer_free(b) };
    v
}

fn symbols(s: *mut EncoreSymbols) -> Vec<u32> {
    let v = unsafe { std::slice::from_raw_parts(encore_symbols_data(s), encore_symbols_len(s)) }.to_vec();
    unsafe { encore_symbols_free(s) };
    v
}

fn last_error() -> String {
    let p = encore_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn encrypted_bytes_round_trip() {
    let model = trained();
    assert_eq!(unsafe { encore_model_width(model) }, 1);
    assert_eq!(unsafe { encore_model_alphabet_size(model) }, 256);
    let key = b"0123456789abcdef";
    let nonce = [9u8; 8];
    let mut p = params();
    p.cipher_id = 1;
    p.key = key.as_ptr();
    p.key_len = key.len();
    p.nonce = nonce.as_ptr();
    p.nonce_len = nonce.len();
    p.frame_size = 32;
    let input = CORPUS.repeat(3);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { encore_encode_bytes(model, &p, input.as_ptr(), input.len(), &mut out) }, EncoreStatus::Ok);
    let container = buffer(out);

    let (mut frames, mut total) = (0usize, 0u64);
    assert_eq!(
        unsafe { encore_container_info(container.as_ptr(), container.len(), &mut frames, &mut total) },
        EncoreStatus::Ok
    );
    assert_eq!(total, input.len() as u64);
    assert_eq!(frames, input.len().div_ceil(32));

    let mut back = ptr::null_mut();
    let status = unsafe {
        encore_decode_bytes(model, key.as_ptr(), key.len(), container.as_ptr(), container.len(), &mut back)
    };
    assert_eq!(status, EncoreStatus::Ok);
    assert_eq!(buffer(back), input);

    let mut frame = ptr::null_mut();
    let status = unsafe {
        encore_decode_frame(model, key.as_ptr(), key.len(), container.as_ptr(), container.len(), 2, &mut frame)
    };
    assert_eq!(status, EncoreStatus::Ok);
    let expected: Vec<u32> = input[64..96].iter().map(|&b| b as u32).collect();
    assert_eq!(symbols(frame), expected);

    let wrong = b"fedcba9876543210";
    let mut nothing = ptr::null_mut();
    let status = unsafe {
        encore_decode(model, wrong.as_ptr(), wrong.len(), container.as_ptr(), container.len(), &mut nothing)
    };
    assert_eq!(status, EncoreStatus::BadKey);
    assert!(nothing.is_null());
    assert!(last_error().contains("key"));
    let status = unsafe { encore_decode(model, ptr::null(), 0, container.as_ptr(), container.len(), &mut nothing) };
    assert_eq!(status, EncoreStatus::BadKey);
    unsafe { encore_model_free(model) };
}

#[test]
fn symbol_round_trip_with_a_saved_model() {
    let model = trained();
    let mut text = ptr::null_mut();
    assert_eq!(unsafe { encore_model_to_bytes(model, &mut text) }, EncoreStatus::Ok);
    let text = buffer(text);
    let mut reloaded = ptr::null_mut();
    let status = unsafe { encore_model_from_bytes(text.as_ptr(), text.len(), ENCORE_BUILDER_PROPORTIONAL, &mut reloaded) };
    assert_eq!(status, EncoreStatus::Ok);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.model");
    std::fs::write(&path, &text).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut from_file = ptr::null_mut();
    assert_eq!(
        unsafe { encore_model_from_file(cpath.as_ptr(), ENCORE_BUILDER_GREEDY, &mut from_file) },
        EncoreStatus::Ok
    );

    let input: Vec<u32> = CORPUS.iter().map(|&b| b as u32).collect();
    let p = params();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { encore_encode(reloaded, &p, input.as_ptr(), input.len(), &mut out) }, EncoreStatus::Ok);
    let container = buffer(out);
    let mut back = ptr::null_mut();
    let status = unsafe { encore_decode(reloaded, ptr::null(), 0, container.as_ptr(), container.len(), &mut back) };
    assert_eq!(status, EncoreStatus::Ok);
    assert_eq!(symbols(back), input);

    // Same model text, different transform builder.
    let status = unsafe { encore_decode(from_file, ptr::null(), 0, container.as_ptr(), container.len(), &mut back) };
    assert_eq!(status, EncoreStatus::Format);
    unsafe {
        encore_model_free(reloaded);
        encore_model_free(from_file);
        encore_model_free(model);
    }
}

#[test]
fn seeded_encodes_are_reproducible() {
    let model = trained();
    let p = params();
    let run = || {
        let mut out = ptr::null_mut();
        assert_eq!(unsafe { encore_encode_bytes(model, &p, CORPUS.as_ptr(), CORPUS.len(), &mut out) }, EncoreStatus::Ok);
        buffer(out)
    };
    assert_eq!(run(), run());
    unsafe { encore_model_free(model) };
}

#[test]
fn bad_arguments_return_error_codes() {
    let model = trained();
    let p = params();
    let mut out = ptr::null_mut();
    unsafe {
        assert_eq!(encore_encode(ptr::null(), &p, ptr::null(), 0, &mut out), EncoreStatus::NullPointer);
        assert_eq!(encore_encode(model, ptr::null(), ptr::null(), 0, &mut out), EncoreStatus::NullPointer);
        assert_eq!(encore_encode(model, &p, ptr::null(), 5, &mut out), EncoreStatus::NullPointer);
        assert_eq!(encore_encode(model, &p, ptr::null(), 0, ptr::null_mut()), EncoreStatus::NullPointer);
        assert!(last_error().contains("output"));

        let bad = [300u32];
        assert_eq!(encore_encode(model, &p, bad.as_ptr(), 1, &mut out), EncoreStatus::UnknownSymbol);
        let mut q = p;
        q.k = 0;
        assert_eq!(encore_encode(model, &q, bad.as_ptr(), 0, &mut out), EncoreStatus::InvalidArgument);
        let mut q = p;
        q.cipher_id = 1;
        assert_eq!(encore_encode(model, &q, ptr::null(), 0, &mut out), EncoreStatus::BadKey);
        q.key = b"k".as_ptr();
        q.key_len = 1;
        q.cipher_id = 99;
        assert_eq!(encore_encode(model, &q, ptr::null(), 0, &mut out), EncoreStatus::UnknownCipher);

        let mut m = ptr::null_mut();
        assert_eq!(encore_model_from_bytes(b"nonsense".as_ptr(), 8, 1, &mut m), EncoreStatus::InvalidModel);
        assert!(m.is_null());
        assert_eq!(encore_model_train(CORPUS.as_ptr(), CORPUS.len(), 1, 0.5, 7, &mut m), EncoreStatus::InvalidArgument);
        let missing = CString::new("/nonexistent/encore.model").unwrap();
        assert_eq!(encore_model_from_file(missing.as_ptr(), 1, &mut m), EncoreStatus::Io);

        let garbage = [0u8; 100];
        let mut s = ptr::null_mut();
        assert_eq!(encore_decode(model, ptr::null(), 0, garbage.as_ptr(), 100, &mut s), EncoreStatus::Format);
        assert_eq!(encore_container_info(garbage.as_ptr(), 100, ptr::null_mut(), ptr::null_mut()), EncoreStatus::Format);

        assert_eq!(encore_encode(model, &p, ptr::null(), 0, &mut out), EncoreStatus::Ok);
        assert!(encore_last_error().is_null());
        let empty = buffer(out);
        assert_eq!(
            encore_decode_frame(model, ptr::null(), 0, empty.as_ptr(), empty.len(), 0, &mut s),
            EncoreStatus::FrameOutOfRange
        );

        // Null handles are tolerated by accessors and destructors.
        assert_eq!(encore_model_alphabet_size(ptr::null()), 0);
        assert_eq!(encore_buffer_len(ptr::null()), 0);
        assert!(encore_symbols_data(ptr::null()).is_null());
        encore_model_free(ptr::null_mut());
        encore_buffer_free(ptr::null_mut());
        encore_symbols_free(ptr::null_mut());
        encore_model_free(model);
    }
}

#[test]
fn version_matches_the_package() {
    let v = unsafe { CStr::from_ptr(encore_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
