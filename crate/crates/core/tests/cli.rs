use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use encore::{HuffmanCode, MarkovModel, ModelFile, SymbolDistribution};
use tempfile::TempDir;

fn encore(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_encore"))
        .args(args)
        .env_remove("ENCORE_KEY")
        .env_remove("ENCORE_NONCE")
        .output()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn corpus() -> Vec<u8> {
    let text = "It was the best of times, it was the worst of times, it was the age of wisdom, \
                it was the age of foolishness, it was the epoch of belief, it was the epoch of incredulity. ";
    let mut v = text.repeat(300).into_bytes();
    v.extend(0u8..=255);
    v
}

struct Fixture {
    dir: TempDir,
    model: PathBuf,
    input: PathBuf,
}

fn fixture() -> Fixture {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("input.txt");
    std::fs::write(&input, corpus()).unwrap();
    let model = dir.path().join("text.model");
    let out = encore(&["train", "-i", p(&input), "-o", p(&model), "-w", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    Fixture { dir, model, input }
}

fn abstract_model(dir: &Path, name: &str, chain: MarkovModel) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, ModelFile::new(chain, 0).unwrap().to_text()).unwrap();
    path
}

#[test]
fn train_is_deterministic_and_rejects_empty_corpora() {
    let f = fixture();
    let again = f.dir.path().join("again.model");
    assert!(encore(&["train", "-i", p(&f.input), "-o", p(&again)]).status.success());
    let a = std::fs::read(&f.model).unwrap();
    assert_eq!(a, std::fs::read(&again).unwrap());
    assert!(a.starts_with(b"encore-model v1 1\nmc v1 256 "));

    let empty = f.dir.path().join("empty");
    std::fs::write(&empty, b"").unwrap();
    let out = encore(&["train", "-i", p(&empty), "-o", p(&again)]);
    assert!(!out.status.success());
    let out = encore(&["train", "-i", p(&f.input), "-o", p(&again), "-w", "2"]);
    assert!(!out.status.success());
}

#[test]
fn encode_decode_round_trip() {
    let f = fixture();
    let d = f.dir.path();
    for (extra, key) in [
        (vec!["-k", "1", "-l", "1"], Some("00112233445566778899")),
        (vec!["--split", "--frame-size", "256"], None),
        (vec!["-k", "4", "-l", "4", "--jobs", "3", "--builder", "proportional"], Some("ff")),
    ] {
        let enc = d.join("c.enc");
        let dec = d.join("c.out");
        let mut args = vec!["encode", "-i", p(&f.input), "-o", p(&enc), "-m", p(&f.model), "--seed", "7"];
        args.extend(extra.iter().copied());
        if let Some(k) = key {
            args.extend(["--key", k]);
        }
        let out = encore(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let builder = if extra.contains(&"proportional") { "proportional" } else { "greedy" };
        let mut args = vec!["decode", "-i", p(&enc), "-o", p(&dec), "-m", p(&f.model), "--jobs", "2", "--builder", builder];
        if let Some(k) = key {
            args.extend(["--key", k]);
        }
        let out = encore(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(std::fs::read(&dec).unwrap(), corpus());
    }
}

#[test]
fn seeded_encoding_is_reproducible_and_key_comes_from_env() {
    let f = fixture();
    let d = f.dir.path();
    let (a, b) = (d.join("a.enc"), d.join("b.enc"));
    for out in [&a, &b] {
        let status = Command::new(env!("CARGO_BIN_EXE_encore"))
            .args(["encode", "-i", p(&f.input), "-o", p(out), "-m", p(&f.model), "--seed", "3"])
            .env("ENCORE_KEY", "a1b2c3")
            .status()
            .unwrap();
        assert!(status.success());
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    assert!(!bytes.windows(3).any(|w| w == [0xa1, 0xb2, 0xc3]));
    // the key from the environment decodes, a missing key does not
    let out = d.join("a.out");
    let status = Command::new(env!("CARGO_BIN_EXE_encore"))
        .args(["decode", "-i", p(&a), "-o", p(&out), "-m", p(&f.model)])
        .env("ENCORE_KEY", "a1b2c3")
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(std::fs::read(&out).unwrap(), corpus());
    let res = encore(&["decode", "-i", p(&a), "-o", p(&out), "-m", p(&f.model)]);
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn exit_codes() {
    let f = fixture();
    let d = f.dir.path();
    let enc = d.join("c.enc");
    let out = d.join("c.out");
    assert!(encore(&["encode", "-i", p(&f.input), "-o", p(&enc), "-m", p(&f.model), "--key", "01"]).status.success());

    let res = encore(&["decode", "-i", p(&enc), "-o", p(&out), "-m", p(&f.model), "--key", "02"]);
    assert_eq!(res.status.code(), Some(3), "wrong key");

    let other = d.join("other.model");
    let mut text = corpus();
    text.reverse();
    let other_corpus = d.join("other.txt");
    std::fs::write(&other_corpus, text).unwrap();
    assert!(encore(&["train", "-i", p(&other_corpus), "-o", p(&other)]).status.success());
    let res = encore(&["decode", "-i", p(&enc), "-o", p(&out), "-m", p(&other), "--key", "01"]);
    assert_eq!(res.status.code(), Some(3), "wrong model");

    let garbage = d.join("garbage");
    std::fs::write(&garbage, vec![7u8; 200]).unwrap();
    let res = encore(&["decode", "-i", p(&garbage), "-o", p(&out), "-m", p(&f.model)]);
    assert_eq!(res.status.code(), Some(2), "not a container");

    let res = encore(&["decode", "-i", p(&d.join("missing")), "-o", p(&out), "-m", p(&f.model)]);
    assert_eq!(res.status.code(), Some(4), "missing file");
}

#[test]
fn empty_file_gives_empty_container() {
    let f = fixture();
    let d = f.dir.path();
    let (empty, enc, out) = (d.join("empty"), d.join("e.enc"), d.join("e.out"));
    std::fs::write(&empty, b"").unwrap();
    assert!(encore(&["encode", "-i", p(&empty), "-o", p(&enc), "-m", p(&f.model), "--seed", "1"]).status.success());
    assert!(encore(&["decode", "-i", p(&enc), "-o", p(&out), "-m", p(&f.model)]).status.success());
    assert_eq!(std::fs::read(&out).unwrap(), b"");
}

#[test]
fn decode_frame_returns_that_frame() {
    let f = fixture();
    let d = f.dir.path();
    let (enc, out) = (d.join("c.enc"), d.join("frame"));
    let args = ["encode", "-i", p(&f.input), "-o", p(&enc), "-m", p(&f.model), "--key", "abcd", "--frame-size", "1000"];
    assert!(encore(&args).status.success());
    let res = encore(&["decode-frame", "-i", p(&enc), "-o", p(&out), "-m", p(&f.model), "--key", "abcd", "--frame", "3"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(std::fs::read(&out).unwrap(), corpus()[3000..4000]);
    let res = encore(&["decode-frame", "-i", p(&enc), "-o", p(&out), "-m", p(&f.model), "--key", "abcd", "--frame", "999"]);
    assert!(!res.status.success());
}

#[test]
fn analyze_prints_the_bound_quantities() {
    let dir = TempDir::new().unwrap();
    let uniform = abstract_model(dir.path(), "u3", MarkovModel::iid(&SymbolDistribution::uniform(3).unwrap()).unwrap());
    let out = encore(&["analyze", "-m", p(&uniform)]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("||B||_1 greedy         1.5\n"), "{text}");
    assert!(text.contains("||B||_1 proportional   1.5\n"));
    assert!(text.contains("|O| / |U|              2 / 1\n"));

    let dyadic = abstract_model(
        dir.path(),
        "dy",
        MarkovModel::iid(&SymbolDistribution::new(vec![0.5, 0.25, 0.25]).unwrap()).unwrap(),
    );
    let text = stdout(&encore(&["analyze", "-m", p(&dyadic)]));
    assert!(text.contains("budget greedy          0\n"), "{text}");
    assert!(text.contains("budget proportional    0\n"));

    let fitted = fixture();
    let text = stdout(&encore(&["analyze", "-m", p(&fitted.model)]));
    let value = |key: &str| -> f64 {
        text.lines()
            .find(|l| l.starts_with(key))
            .and_then(|l| l.split_whitespace().last())
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!(value("budget greedy") <= value("M' greedy"));
    assert!(value("budget proportional") <= value("M' proportional"));
}

#[test]
fn verify_passes_and_fails_as_it_should() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let small = ["--bits", "200000", "--paths", "5000", "--path-len", "32"];

    let dyadic_sigma = SymbolDistribution::new(vec![0.5, 0.25, 0.125, 0.125]).unwrap();
    assert_eq!(HuffmanCode::build(&dyadic_sigma).unwrap().implied(), dyadic_sigma);
    let dyadic = abstract_model(d, "dy", MarkovModel::iid(&dyadic_sigma).unwrap());
    let mut args = vec!["verify", "-m", p(&dyadic)];
    args.extend(small);
    let out = encore(&args);
    assert!(out.status.success(), "{}", stdout(&out));

    let sticky = MarkovModel::new(vec![vec![0.9, 0.1], vec![0.1, 0.9]]).unwrap();
    let sticky = abstract_model(d, "sticky", sticky);
    let reports = d.join("reports");
    let mut args = vec!["verify", "-m", p(&sticky), "--report", p(&reports)];
    args.extend(small);
    let out = encore(&args);
    assert!(out.status.success(), "{}", stdout(&out));
    let csv = std::fs::read_to_string(reports.join("bias-curve-raw.csv")).unwrap();
    assert!(csv.starts_with("index,empirical,ci,envelope,pass\n"));
    assert_eq!(csv.lines().count(), 1 + 32);

    args.extend(["--envelope-scale", "0.01"]);
    let out = encore(&args);
    assert_eq!(out.status.code(), Some(1), "{}", stdout(&out));
    assert!(stdout(&out).contains("bias-curve-raw: FAIL"));
}
