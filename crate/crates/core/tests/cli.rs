mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use cryptompress::cli::{run, EXIT_INTEGRITY, EXIT_IO, EXIT_OK, EXIT_USAGE};
use cryptompress::container::{read_cipher, read_key, write_key};
use cryptompress::keyschedule::{BaseKey, KeyChain};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

fn cli(args: &[&str]) -> Outcome {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("cryptompress").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    Outcome { code, stdout: String::from_utf8(out).unwrap(), stderr: String::from_utf8(err).unwrap() }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_chain(path: &Path, chain: &KeyChain) {
    fs::write(path, write_key(chain).unwrap()).unwrap();
}

struct Files {
    _dir: TempDir,
    key: PathBuf,
    plain: PathBuf,
    cipher: PathBuf,
    out: PathBuf,
}

fn files() -> Files {
    let dir = TempDir::new().unwrap();
    let at = |name: &str| dir.path().join(name);
    Files { key: at("key"), plain: at("plain"), cipher: at("cipher"), out: at("out"), _dir: dir }
}

#[test]
fn eight_byte_round_trip() {
    let f = files();
    fs::write(&f.plain, b"8 bytes!").unwrap();
    assert_eq!(cli(&["keygen", "--out", p(&f.key)]).code, EXIT_OK);
    assert_eq!(fs::read(&f.key).unwrap().len(), 21);
    assert_eq!(
        cli(&["encrypt", "--key", p(&f.key), "--in", p(&f.plain), "--out", p(&f.cipher)]).code,
        EXIT_OK
    );
    assert_eq!(read_cipher(&fs::read(&f.cipher).unwrap()).unwrap().grids.len(), 3);
    assert_eq!(cli(&["decrypt", "--key", p(&f.key), "--in", p(&f.cipher), "--out", p(&f.out)]).code, EXIT_OK);
    assert_eq!(fs::read(&f.out).unwrap(), b"8 bytes!");
}

#[test]
fn flipped_last_key_bit_exits_two() {
    let f = files();
    let mut rng = ChaCha8Rng::seed_from_u64(0xF11B);
    let wrong_key = f.key.with_extension("wrong");
    let mut rejected = 0;
    for _ in 0..200 {
        let base: u128 = rng.gen();
        let plain: [u8; 8] = rng.gen();
        write_chain(&f.key, &KeyChain::new(BaseKey::from_u128(base)));
        write_chain(&wrong_key, &KeyChain::new(BaseKey::from_u128(base ^ 1)));
        fs::write(&f.plain, plain).unwrap();
        assert_eq!(cli(&["encrypt", "--key", p(&f.key), "--in", p(&f.plain), "--out", p(&f.cipher)]).code, 0);
        let r = cli(&["decrypt", "--key", p(&wrong_key), "--in", p(&f.cipher), "--out", p(&f.out)]);
        if r.code == EXIT_INTEGRITY {
            assert!(r.stderr.contains("integrity failure"), "{}", r.stderr);
            rejected += 1;
        } else {
            assert_eq!(r.code, EXIT_OK);
        }
    }
    assert!(rejected >= 190, "only {rejected} of 200 rejected");
}

#[test]
fn harden_grows_key_and_keeps_ciphertext_decryptable() {
    let f = files();
    fs::write(&f.plain, b"hardening").unwrap();
    cli(&["keygen", "--out", p(&f.key)]);
    cli(&["encrypt", "--key", p(&f.key), "--in", p(&f.plain), "--out", p(&f.cipher)]);
    let stale = f.key.with_extension("stale");
    fs::copy(&f.key, &stale).unwrap();
    let before = read_cipher(&fs::read(&f.cipher).unwrap()).unwrap();

    assert_eq!(cli(&["harden", "--key", p(&f.key), "--cipher", p(&f.cipher)]).code, EXIT_OK);
    let key_bytes = fs::read(&f.key).unwrap();
    assert_eq!(key_bytes.len(), 25);
    assert_eq!(read_key(&key_bytes).unwrap().effective_bits(), 160);
    let after = read_cipher(&fs::read(&f.cipher).unwrap()).unwrap();
    assert_eq!(after.sticky_rounds, 1);
    for (a, b) in before.grids.iter().zip(&after.grids) {
        for (x, y) in a.cells.iter().flatten().zip(b.cells.iter().flatten()) {
            if !x.is_sm_list() {
                assert_eq!(x, y);
            }
        }
    }

    assert_eq!(cli(&["decrypt", "--key", p(&f.key), "--in", p(&f.cipher), "--out", p(&f.out)]).code, EXIT_OK);
    assert_eq!(fs::read(&f.out).unwrap(), b"hardening");
    let r = cli(&["decrypt", "--key", p(&stale), "--in", p(&f.cipher), "--out", p(&f.out)]);
    assert_eq!(r.code, EXIT_INTEGRITY);
    assert!(r.stderr.contains("sticky rounds"), "{}", r.stderr);

    // Harden with the stale key must not touch either file.
    let snapshot = (fs::read(&stale).unwrap(), fs::read(&f.cipher).unwrap());
    assert_eq!(cli(&["harden", "--key", p(&stale), "--cipher", p(&f.cipher)]).code, EXIT_INTEGRITY);
    assert_eq!((fs::read(&stale).unwrap(), fs::read(&f.cipher).unwrap()), snapshot);
}

#[test]
fn trace_prints_the_walk() {
    let w = common::worked();
    let f = files();
    write_chain(&f.key, &w.chain());
    let block = format!("0x{}", w.block);
    let text = cli(&["trace", "--key", p(&f.key), "--block", &block]);
    assert_eq!(text.code, EXIT_OK, "{}", text.stderr);
    assert!(text.stdout.contains("5.13"));
    assert!(text.stdout.contains("1|2 ; 8|1 ; 12|1"));
    assert_eq!(text.stdout.matches("<- RM").count(), 4);

    let json = cli(&["trace", "--key", p(&f.key), "--block", &block, "--json"]);
    let value: serde_json::Value = serde_json::from_str(&json.stdout).unwrap();
    let steps = value["steps"].as_array().unwrap();
    assert_eq!(steps.len(), 25);
    let values: Vec<i32> = steps.iter().map(|s| s["value"].as_i64().unwrap() as i32).collect();
    assert_eq!(values, w.trace);
    let outcomes: Vec<_> = value["compressed"]["rm"].as_array().unwrap().iter().map(|v| v.as_i64()).collect();
    assert_eq!(outcomes, [Some(4), Some(4), Some(31), Some(42)]);
}

#[test]
fn inspect_renders_grids() {
    let f = files();
    write_chain(&f.key, &common::worked().chain());
    fs::write(&f.plain, b"inspect me").unwrap();
    cli(&["encrypt", "--key", p(&f.key), "--in", p(&f.plain), "--out", p(&f.cipher)]);
    let text = cli(&["inspect", "--cipher", p(&f.cipher)]);
    assert_eq!(text.code, EXIT_OK);
    assert!(text.stdout.contains("ASM (hort.)"));
    assert!(text.stdout.contains("0010"));
    let json = cli(&["inspect", "--cipher", p(&f.cipher), "--json"]);
    let value: serde_json::Value = serde_json::from_str(&json.stdout).unwrap();
    assert_eq!(value["grids"].as_array().unwrap().len(), 3);
    assert_eq!(value["grids"][0]["orders"], serde_json::json!([2, 3, 5, 7]));
}

#[test]
fn exit_codes() {
    let f = files();
    assert_eq!(cli(&[]).code, EXIT_USAGE);
    assert_eq!(cli(&["frobnicate"]).code, EXIT_USAGE);
    assert_eq!(cli(&["--help"]).code, EXIT_OK);
    assert_eq!(cli(&["trace", "--key", "k", "--block", "0x40000000"]).code, EXIT_USAGE);
    assert_eq!(cli(&["trace", "--key", "k", "--block", "zz"]).code, EXIT_USAGE);
    let missing = cli(&["encrypt", "--key", p(&f.key), "--in", p(&f.plain), "--out", p(&f.cipher)]);
    assert_eq!(missing.code, EXIT_IO);
    assert!(missing.stderr.contains("error:"));
    fs::write(&f.key, b"not a key").unwrap();
    assert_eq!(cli(&["inspect", "--cipher", p(&f.key)]).code, EXIT_IO);
    assert_eq!(cli(&["analyze", "bruteforce", "--restricted-bits", "30"]).code, EXIT_USAGE);
    assert_eq!(cli(&["analyze", "avalanche", "--samples", "5"]).code, EXIT_USAGE);
}

#[test]
fn analyze_emits_csv_and_json() {
    let csv =
        cli(&["analyze", "bruteforce", "--restricted-bits", "8", "--harden-every", "50", "--format", "csv"]);
    assert_eq!(csv.code, EXIT_OK, "{}", csv.stderr);
    let lines: Vec<_> = csv.stdout.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("seed,run,"));

    let json = cli(&["analyze", "compression", "--samples", "300", "--seed", "4"]);
    let value: serde_json::Value = serde_json::from_str(&json.stdout).unwrap();
    assert!(value["random_mean_events"].as_f64().unwrap() > value["biased_mean_events"].as_f64().unwrap());

    let json = cli(&["analyze", "avalanche", "--samples", "100"]);
    let value: serde_json::Value = serde_json::from_str(&json.stdout).unwrap();
    assert_eq!(value["samples"], 100);
}

#[test]
fn binary_reports_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_cryptompress");
    assert_eq!(Command::new(bin).arg("nope").output().unwrap().status.code(), Some(EXIT_USAGE));
    let f = files();
    let status = Command::new(bin).args(["keygen", "--out", p(&f.key)]).status().unwrap();
    assert_eq!(status.code(), Some(EXIT_OK));
    assert!(f.key.exists());
}
