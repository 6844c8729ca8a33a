mod common;

use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use cjmap::model::{Coinjoin, Design};
use serde_json::Value;

fn cjmap(args: &[&str], stdin: Option<&[u8]>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_cjmap"))
        .args(args)
        .env_remove("CJMAP_THREADS")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stdin.unwrap_or_default()).unwrap();
    child.wait_with_output().unwrap()
}

fn ok(args: &[&str], stdin: Option<&[u8]>) -> Vec<u8> {
    let out = cjmap(args, stdin);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

fn write_tx(dir: &Path, name: &str, tx: &Coinjoin) -> String {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_vec(tx).unwrap()).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn nine_coin_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let tx = write_tx(dir.path(), "nine_coin.json", &common::nine_coin());
    let res = ok(&["-q", "enumerate", "--tx", &tx], None);
    let v = json(&res);
    assert_eq!(v["total_concrete"], "24");
    assert_eq!(v["numeric_count"], 10);

    let m = json(&ok(&["-q", "metrics", "--user", "i0,i1"], Some(&res)));
    assert!((m["entropy_bits"].as_f64().unwrap() - 24f64.log2()).abs() < 1e-12);
    assert_eq!(m["max_link"].as_array().unwrap().len(), 5);
}

#[test]
fn generated_truth_is_reported() {
    let gt = ok(&["-q", "--seed", "3", "gen", "--design", "wasabi2", "--users", "4"], None);
    let v = json(&ok(&["-q", "enumerate"], Some(&gt)));
    assert_eq!(v["truth_included"], true);
    assert_eq!(gt, ok(&["-q", "--seed", "3", "gen", "--design", "wasabi2", "--users", "4"], None));
}

#[test]
fn output_independent_of_threads() {
    let gt = ok(&["-q", "--seed", "8", "gen", "--design", "generic", "--size", "12"], None);
    let a = ok(&["-q", "--threads", "1", "enumerate"], Some(&gt));
    let b = ok(&["-q", "--threads", "4", "enumerate"], Some(&gt));
    assert_eq!(a, b);
    let ma = ok(&["-q", "--threads", "1", "metrics"], Some(&a));
    let mb = ok(&["-q", "--threads", "4", "metrics"], Some(&b));
    assert_eq!(ma, mb);
}

#[test]
fn trend_then_fit() {
    let csv = ok(&["-q", "--seed", "1", "gen", "trend", "--sizes", "6..9", "--per-size", "3"], None);
    let text = String::from_utf8(csv.clone()).unwrap();
    assert!(text.starts_with("size,count\n"));
    assert_eq!(text.lines().count(), 13);
    let fit = json(&ok(&["-q", "fit", "--predict", "400", "--loss", "0.2"], Some(&csv)));
    assert_eq!(fit["prediction"]["effective_size"], 320.0);
    let slope = fit["fit"]["slope"].as_f64().unwrap();
    let intercept = fit["fit"]["intercept"].as_f64().unwrap();
    let got = fit["prediction"]["log2_count"].as_f64().unwrap();
    assert!((got - (intercept + 320.0 * slope)).abs() < 1e-9);
}

#[test]
fn linked_set_with_paths() {
    let dir = tempfile::tempdir().unwrap();
    write_tx(dir.path(), "a.json", &Coinjoin::from_values("a", Design::Generic, &[4, 2], &[4, 2]));
    write_tx(dir.path(), "b.json", &Coinjoin::from_values("b", Design::Generic, &[4, 1], &[4, 1]));
    let set = dir.path().join("set.json");
    std::fs::write(
        &set,
        r#"{"txs": ["a.json", "b.json"],
            "internal_coins": [{"from": "a", "output": "o0", "to": "b", "input": "i0"}]}"#,
    )
    .unwrap();
    let v = json(&ok(&["-q", "linked", "--set", set.to_str().unwrap()], None));
    assert!(v["result"]["numeric_count"].as_u64().unwrap() >= 1);
    assert_eq!(v["artificial"]["tx"]["inputs"].as_array().unwrap().len(), 3);
}

#[test]
fn anonymity_loss_report() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("g.json");
    std::fs::write(
        &graph,
        r#"{"coinjoin_ids": ["cj"],
            "transactions": [
              {"txid": "cj", "timestamp": 0,
               "inputs": [{"txid": "x", "vout": 0}, {"txid": "y", "vout": 0}],
               "outputs": [{"value": 5000000}, {"value": 5000000}, {"value": 5000000}]},
              {"txid": "spend", "timestamp": 3600,
               "inputs": [{"txid": "cj", "vout": 0}, {"txid": "cj", "vout": 1}],
               "outputs": [{"value": 9990000}]}]}"#,
    )
    .unwrap();
    let v = json(&ok(&["-q", "anonloss", "--graph", graph.to_str().unwrap(), "--horizons", "0,1,inf"], None));
    assert!(v.to_string().contains("cj"));
}

#[test]
fn errors_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_tx(dir.path(), "bad.json", &Coinjoin::from_values("bad", Design::Generic, &[3], &[5]));
    let out = cjmap(&["enumerate", "--tx", &bad], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: OutputsExceedInputs:"));

    let out = cjmap(&["fit"], Some(b"size,count\n5,3\n5,4\n"));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: DegenerateData:"));

    let out = cjmap(&["enumerate", "--design", "nope"], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: Usage:"));

    let out = cjmap(&["--seed", "1", "gen", "--design", "generic", "--size", "1"], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: InfeasibleParams:"));
}

#[test]
fn config_file_overrides_policy() {
    let dir = tempfile::tempdir().unwrap();
    let tx = write_tx(dir.path(), "nine_coin.json", &common::nine_coin());
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "threads = 2\n[constraints]\nmax_inputs_per_user = 1\n").unwrap();
    let v = json(&ok(&["-q", "--config", cfg.to_str().unwrap(), "enumerate", "--tx", &tx], None));
    let all = json(&ok(&["-q", "enumerate", "--tx", &tx], None));
    assert!(v["numeric_count"].as_u64().unwrap() < all["numeric_count"].as_u64().unwrap());

    std::fs::write(&cfg, "bogus = 1\n").unwrap();
    let out = cjmap(&["--config", cfg.to_str().unwrap(), "enumerate", "--tx", &tx], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: Parse:"));
}
