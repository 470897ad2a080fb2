use std::cell::RefCell;
use std::io::{Cursor, Read, Seek, SeekFrom};
use std::rc::Rc;

use encore::pipeline::{ContainerReader, Encoder, FIXED_HEADER_LEN};
use encore::{
    decode, decode_frame, encode, BuilderKind, EncodeOptions, Encore, EntropySource, Error, InterleavePlan,
    MarkovModel, ModelFile, NullCipher, TestCipher,
};
use proptest::prelude::*;

fn chain(n: usize, stay: f64) -> MarkovModel {
    let rows = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { stay } else { (1.0 - stay) / (n - 1) as f64 })
                .collect()
        })
        .collect();
    MarkovModel::new(rows).unwrap()
}

/// Rows favour low symbols, so the marginal is far from uniform.
fn skewed(n: usize) -> MarkovModel {
    let rows = (0..n)
        .map(|i| {
            let w: Vec<f64> = (0..n)
                .map(|j| 1.0 / (1.0 + j as f64).powi(2) + if i == j { 0.5 } else { 0.0 })
                .collect();
            let t: f64 = w.iter().sum();
            w.into_iter().map(|x| x / t).collect()
        })
        .collect();
    MarkovModel::new(rows).unwrap()
}

fn arb_case() -> impl Strategy<Value = (usize, f64, u32, u32, u32, bool, bool, u64, usize, bool)> {
    (
        2usize..12,
        0.05f64..0.95,
        1u32..9,
        1u32..9,
        1u32..300,
        any::<bool>(),
        any::<bool>(),
        any::<u64>(),
        0usize..2000,
        any::<bool>(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn round_trip(case in arb_case()) {
        let (n, stay, k, l, frame_size, keyed, split, seed, len, proportional) = case;
        let model = ModelFile::new(chain(n, stay), 0).unwrap();
        let builder = if proportional { BuilderKind::Proportional } else { BuilderKind::Greedy };
        let encore = Encore::new(model, builder).unwrap();
        let symbols = if len == 0 {
            vec![]
        } else {
            encore.model().chain().sample_path(len, &mut EntropySource::test(seed)).unwrap()
        };
        let opts = EncodeOptions {
            plan: InterleavePlan::new(k, l).unwrap(),
            frame_size,
            split,
            jobs: 1 + (seed % 4) as usize,
        };
        let test_cipher = TestCipher::new(&seed.to_le_bytes(), b"nonce");
        let cipher: &dyn encore::Cipher = if keyed { &test_cipher } else { &NullCipher };
        let (bytes, stats) = encode(&encore, cipher, b"nonce", opts, &symbols, EntropySource::test(seed ^ 1)).unwrap();
        prop_assert_eq!(stats.symbols, symbols.len() as u64);
        prop_assert_eq!(decode(&encore, cipher, &bytes).unwrap(), symbols.clone());
        if stats.symbols > 0 {
            prop_assert!(stats.entropy_per_symbol() <= encore.budget().m_prime + 1e-9);
        }
        let frames = symbols.len().div_ceil(frame_size as usize);
        prop_assert_eq!(stats.frames, frames as u64);
        if frames > 0 {
            let last = frames - 1;
            let got = decode_frame(&encore, cipher, Cursor::new(&bytes), last).unwrap();
            prop_assert_eq!(&got[..], &symbols[last * frame_size as usize..]);
        }
    }

    #[test]
    fn streaming_pushes_match_one_shot(chunks in prop::collection::vec(0usize..500, 1..8), seed in any::<u64>()) {
        let encore = Encore::new(ModelFile::new(chain(5, 0.7), 0).unwrap(), BuilderKind::Greedy).unwrap();
        let total: usize = chunks.iter().sum::<usize>().max(1);
        let symbols = encore.model().chain().sample_path(total, &mut EntropySource::test(seed)).unwrap();
        let cipher = TestCipher::new(b"k", b"n");
        let opts = EncodeOptions { frame_size: 97, ..Default::default() };
        let (whole, _) = encode(&encore, &cipher, b"n", opts, &symbols, EntropySource::test(seed)).unwrap();
        let mut enc = Encoder::new(&encore, &cipher, b"n", opts, EntropySource::test(seed), Vec::new()).unwrap();
        let mut at = 0;
        for c in chunks {
            let end = (at + c).min(symbols.len());
            enc.push(&symbols[at..end]).unwrap();
            at = end;
        }
        enc.push(&symbols[at..]).unwrap();
        let (pieces, _) = enc.finish().unwrap();
        prop_assert_eq!(whole, pieces);
    }
}

/// Records the byte ranges read through it.
struct Spy {
    inner: Cursor<Vec<u8>>,
    reads: Rc<RefCell<Vec<(u64, u64)>>>,
}

impl Read for Spy {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let at = self.inner.position();
        let n = self.inner.read(buf)?;
        if n > 0 {
            self.reads.borrow_mut().push((at, at + n as u64));
        }
        Ok(n)
    }
}

impl Seek for Spy {
    fn seek(&mut self, pos: SeekFrom) -> std::io::Result<u64> {
        self.inner.seek(pos)
    }
}

#[test]
fn one_frame_reads_only_its_own_bytes() {
    let encore = Encore::new(ModelFile::new(skewed(6), 0).unwrap(), BuilderKind::Greedy).unwrap();
    let symbols = encore.model().chain().sample_path(10_000, &mut EntropySource::test(2)).unwrap();
    let cipher = TestCipher::new(b"key", b"nonce");
    let opts = EncodeOptions { frame_size: 1000, ..Default::default() };
    let (bytes, _) = encode(&encore, &cipher, b"nonce", opts, &symbols, EntropySource::test(3)).unwrap();

    let reader = ContainerReader::open(Cursor::new(bytes.clone())).unwrap();
    let header_len = (FIXED_HEADER_LEN + reader.header().nonce.len()) as u64;
    let mut starts = vec![header_len];
    for i in 0..reader.frame_count() {
        let len = reader.entry(i).unwrap().byte_len(false);
        starts.push(starts[i] + len);
    }
    let directory = starts[reader.frame_count()];

    let reads = Rc::new(RefCell::new(Vec::new()));
    let spy = Spy {
        inner: Cursor::new(bytes),
        reads: reads.clone(),
    };
    let got = decode_frame(&encore, &cipher, spy, 4).unwrap();
    assert_eq!(got, symbols[4000..5000]);
    for &(a, b) in reads.borrow().iter() {
        let header = b <= header_len;
        let own = a >= starts[4] && b <= starts[5];
        let tail = a >= directory;
        assert!(header || own || tail, "read {a}..{b} outside frame 4 ({}..{})", starts[4], starts[5]);
    }
}

#[test]
fn markov_corpus_beats_fixed_width() {
    // 16 states, so the fixed-width code spends 4 bits per symbol
    let model = ModelFile::new(skewed(16), 0).unwrap();
    let h = encore::dist::entropy(model.chain().stationary());
    let encore = Encore::new(model, BuilderKind::Greedy).unwrap();
    let symbols = encore.model().chain().sample_path(1_000_000, &mut EntropySource::test(9)).unwrap();
    let cipher = TestCipher::new(b"k", b"n");
    let opts = EncodeOptions { jobs: 4, ..Default::default() };
    let (bytes, stats) = encode(&encore, &cipher, b"n", opts, &symbols, EntropySource::test(10)).unwrap();
    assert!(h < 3.0, "H(sigma) {h}");
    assert!(stats.bits_per_symbol() < 4.0, "{}", stats.bits_per_symbol());
    assert!(stats.container_bits_per_symbol() < 4.0);
    assert!(stats.entropy_per_symbol() <= encore.budget().m_prime);
    eprintln!(
        "{:.4} bits/symbol, X {:.4}, entropy {:.4} per symbol",
        stats.bits_per_symbol(),
        stats.x_bits_per_symbol(),
        stats.entropy_per_symbol()
    );
    assert!(stats.entropy_per_symbol() < stats.x_bits_per_symbol());
    assert_eq!(decode(&encore, &cipher, &bytes).unwrap(), symbols);
}

#[test]
fn damaged_containers_are_rejected() {
    let encore = Encore::new(ModelFile::new(chain(3, 0.5), 0).unwrap(), BuilderKind::Greedy).unwrap();
    let symbols = encore.model().chain().sample_path(3000, &mut EntropySource::test(4)).unwrap();
    let cipher = TestCipher::new(b"k", b"n");
    let (bytes, _) = encode(&encore, &cipher, b"n", EncodeOptions::default(), &symbols, EntropySource::test(5)).unwrap();
    for cut in [0, 10, 63, bytes.len() / 2, bytes.len() - 1] {
        assert!(decode(&encore, &cipher, &bytes[..cut]).is_err(), "cut at {cut}");
    }
    let mut bad = bytes.clone();
    bad[0] ^= 1;
    assert!(matches!(decode(&encore, &cipher, &bad), Err(Error::Format(_))));
    let wrong = TestCipher::new(b"other", b"n");
    assert!(matches!(decode(&encore, &wrong, &bytes), Err(Error::BadKey)));
    let other = Encore::new(ModelFile::new(chain(3, 0.6), 0).unwrap(), BuilderKind::Greedy).unwrap();
    assert!(matches!(decode(&other, &cipher, &bytes), Err(Error::HashMismatch)));
}
