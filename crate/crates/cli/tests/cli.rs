//! End-to-end tests of the `ats` binary: fixture emission, the paired
//! attack evaluation, sweep determinism across execution modes, exhaustive
//! config validation, and the sanitize/report utilities.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn ats() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ats"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary launches");
    assert!(
        out.status.success(),
        "command failed\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
    out
}

fn make_fixtures(dir: &Path) {
    run_ok(ats().arg("fixtures").arg("--out").arg(dir));
}

fn input_args(cmd: &mut Command, fixtures: &Path) {
    cmd.arg("--prices")
        .arg(fixtures.join("prices"))
        .arg("--headlines")
        .arg(fixtures.join("headlines.jsonl"))
        .arg("--config")
        .arg(fixtures.join("config.json"));
}

fn read_json(path: &Path) -> Value {
    let bytes = fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()));
    serde_json::from_slice(&bytes).unwrap_or_else(|e| panic!("parse {}: {e}", path.display()))
}

fn is_sha256_hex(s: &str) -> bool {
    s.len() == 64 && s.chars().all(|c| c.is_ascii_hexdigit())
}

#[test]
fn help_lists_every_subcommand() {
    let out = run_ok(ats().arg("--help"));
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["fixtures", "backtest", "attack", "sweep", "sanitize", "report"] {
        assert!(text.contains(sub), "--help does not mention `{sub}`:\n{text}");
    }
}

#[test]
fn fixtures_then_backtest_writes_books_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let fixtures = tmp.path().join("fixtures");
    make_fixtures(&fixtures);

    for expected in ["prices/NVDA.csv", "headlines.jsonl", "corpus.jsonl", "config.json"] {
        assert!(fixtures.join(expected).exists(), "fixtures missing {expected}");
    }

    let out_dir = tmp.path().join("backtest");
    let mut cmd = ats();
    cmd.arg("backtest");
    input_args(&mut cmd, &fixtures);
    cmd.arg("--out").arg(&out_dir);
    run_ok(&mut cmd);

    for expected in ["equity.csv", "trades.csv", "actions.csv", "summary.json", "manifest.json"] {
        assert!(out_dir.join(expected).exists(), "backtest missing {expected}");
    }

    let summary = read_json(&out_dir.join("summary.json"));
    let final_equity = summary["final_equity"].as_f64().expect("final_equity");
    assert!(final_equity > 0.0, "final equity {final_equity} not positive");
    assert!(summary["cumulative_return_pct"].is_number());

    let manifest = read_json(&out_dir.join("manifest.json"));
    assert_eq!(manifest["tool"], "ats");
    assert_eq!(manifest["command"], "backtest");
    assert!(
        is_sha256_hex(manifest["config_sha256"].as_str().expect("config_sha256")),
        "config_sha256 is not a sha-256 hex digest"
    );
    let inputs = manifest["inputs"].as_object().expect("inputs map");
    assert!(!inputs.is_empty(), "manifest inputs empty");
    for (path, digest) in inputs {
        let digest = digest.as_str().expect("digest string");
        assert!(is_sha256_hex(digest), "input {path} digest {digest} malformed");
    }
    let outputs: Vec<&str> = manifest["outputs"]
        .as_array()
        .expect("outputs array")
        .iter()
        .map(|v| v.as_str().expect("output name"))
        .collect();
    assert!(outputs.contains(&"equity.csv"), "outputs lack equity.csv: {outputs:?}");
    // Reruns must be reproducible down to the manifest, so no timestamps.
    assert!(manifest.get("timestamp").is_none());

    let equity = fs::read_to_string(out_dir.join("equity.csv")).unwrap();
    let mut lines = equity.lines();
    assert_eq!(lines.next(), Some("date,equity"));
    assert!(lines.next().is_some(), "equity.csv has no data rows");
}

#[test]
fn hidden_text_attack_flips_the_showcase_decision() {
    let tmp = TempDir::new().unwrap();
    let fixtures = tmp.path().join("fixtures");
    make_fixtures(&fixtures);

    let out_dir = tmp.path().join("attack");
    let mut cmd = ats();
    cmd.arg("attack");
    input_args(&mut cmd, &fixtures);
    cmd.arg("--out")
        .arg(&out_dir)
        .arg("--kind")
        .arg("hidden_text")
        .arg("--ticker")
        .arg("NVDA")
        .arg("--date")
        .arg("2024-03-14");
    run_ok(&mut cmd);

    let record = read_json(&out_dir.join("record.json"));
    assert_eq!(record["kind"], "hidden_text");
    assert_eq!(record["ticker"], "NVDA");
    assert_eq!(record["action_flip"], Value::Bool(true), "showcase decision did not flip");
    let delta = record["delta_cr_pp"].as_f64().expect("delta_cr_pp");
    assert!(delta < 0.0, "attack did not lose money (delta {delta} pp)");
    let dollars = record["dollar_impact"].as_f64().expect("dollar_impact");
    let expected = 1_000_000.0 * delta / 100.0;
    assert!(
        (dollars - expected).abs() <= 1e-6 * expected.abs(),
        "dollar impact {dollars} inconsistent with {delta} pp on $1M"
    );

    for expected in [
        "clean_trades.csv",
        "attacked_trades.csv",
        "clean_actions.csv",
        "attacked_actions.csv",
        "equity_pair.csv",
        "touched.json",
        "manifest.json",
    ] {
        assert!(out_dir.join(expected).exists(), "attack missing {expected}");
    }
    let touched = read_json(&out_dir.join("touched.json"));
    assert!(
        !touched.as_array().expect("touched array").is_empty(),
        "hidden-text attack touched no headlines"
    );
}

#[test]
fn identity_attack_is_a_verified_no_op() {
    let tmp = TempDir::new().unwrap();
    let fixtures = tmp.path().join("fixtures");
    make_fixtures(&fixtures);

    let out_dir = tmp.path().join("identity");
    let mut cmd = ats();
    cmd.arg("attack");
    input_args(&mut cmd, &fixtures);
    cmd.arg("--out")
        .arg(&out_dir)
        .arg("--kind")
        .arg("identity")
        .arg("--ticker")
        .arg("NVDA")
        .arg("--date")
        .arg("2024-03-14");
    run_ok(&mut cmd);

    let record = read_json(&out_dir.join("record.json"));
    assert_eq!(record["delta_cr_pp"].as_f64(), Some(0.0));
    assert_eq!(record["dollar_impact"].as_f64(), Some(0.0));
    assert_eq!(record["action_flip"], Value::Bool(false));
    assert_eq!(record["downstream_divergence"], Value::Bool(false));
    let clean = fs::read(out_dir.join("clean_trades.csv")).unwrap();
    let attacked = fs::read(out_dir.join("attacked_trades.csv")).unwrap();
    assert_eq!(clean, attacked, "identity transform changed the trade log");
}

#[test]
fn sweep_records_are_identical_across_execution_modes() {
    let tmp = TempDir::new().unwrap();
    let fixtures = tmp.path().join("fixtures");
    make_fixtures(&fixtures);

    let run_sweep = |dir: &Path, extra: &[&str]| {
        let mut cmd = ats();
        cmd.arg("sweep");
        input_args(&mut cmd, &fixtures);
        cmd.arg("--out").arg(dir).arg("--kinds").arg("hidden_text,identity");
        for arg in extra {
            cmd.arg(arg);
        }
        run_ok(&mut cmd);
    };

    let seq = tmp.path().join("seq");
    let par = tmp.path().join("par");
    let capped = tmp.path().join("capped");
    run_sweep(&seq, &["--sequential"]);
    run_sweep(&par, &[]);
    run_sweep(&capped, &["--jobs", "2"]);

    let seq_records = fs::read(seq.join("records.csv")).unwrap();
    assert_eq!(seq_records, fs::read(par.join("records.csv")).unwrap(), "parallel != sequential");
    assert_eq!(seq_records, fs::read(capped.join("records.csv")).unwrap(), "--jobs 2 != sequential");

    let report = read_json(&seq.join("report.json"));
    let records = report["records"].as_array().expect("records array");
    assert!(!records.is_empty(), "sweep produced no records");
    assert!(
        records.iter().filter(|r| r["kind"] == "identity").all(|r| r["delta_cr_pp"] == 0.0),
        "identity sweep rows must all be zero-delta"
    );
    let table = fs::read_to_string(seq.join("table.txt")).unwrap();
    assert!(table.contains("hidden_text"), "rendered table lacks the attack kind:\n{table}");
}

#[test]
fn invalid_config_reports_every_problem_at_once() {
    let tmp = TempDir::new().unwrap();
    let fixtures = tmp.path().join("fixtures");
    make_fixtures(&fixtures);

    let bad = tmp.path().join("bad_config.json");
    fs::write(
        &bad,
        r#"{
  "strategy": {
    "mode": "hybrid",
    "w_price": 0.7,
    "w_news": 0.2,
    "threshold": -0.1,
    "capital_fraction": 0.0,
    "hold_keeps_position": true
  },
  "costs": { "commission_per_share": -1.0, "slippage_frac": 1.5 },
  "initial_capital": 0.0,
  "smoothing": { "window": 0, "undefined": "skip" }
}"#,
    )
    .unwrap();

    let mut cmd = ats();
    cmd.arg("backtest")
        .arg("--prices")
        .arg(fixtures.join("prices"))
        .arg("--headlines")
        .arg(fixtures.join("headlines.jsonl"))
        .arg("--config")
        .arg(&bad)
        .arg("--out")
        .arg(tmp.path().join("never"));
    let out = cmd.output().expect("binary launches");
    assert!(!out.status.success(), "invalid config was accepted");

    let stderr = String::from_utf8_lossy(&out.stderr);
    let report: Value = serde_json::from_str(stderr.trim())
        .unwrap_or_else(|e| panic!("stderr is not JSON ({e}):\n{stderr}"));
    assert!(
        report["error"].as_str().expect("error string").contains("invalid configuration"),
        "unexpected error field: {}",
        report["error"]
    );
    let problems: Vec<&str> = report["problems"]
        .as_array()
        .expect("problems array")
        .iter()
        .map(|p| p.as_str().expect("problem string"))
        .collect();
    for needle in [
        "initial_capital",
        "smoothing.window",
        "commission_per_share",
        "slippage_frac",
        "threshold",
    ] {
        assert!(
            problems.iter().any(|p| p.contains(needle)),
            "no problem mentions `{needle}`: {problems:#?}"
        );
    }
    assert!(problems.len() >= 5, "expected every problem listed, got {problems:#?}");
}

#[test]
fn sanitize_strips_hidden_text_and_normalizes_glyphs() {
    let tmp = TempDir::new().unwrap();
    let headlines = tmp.path().join("headlines.jsonl");
    fs::write(
        &headlines,
        concat!(
            r#"{"id":"h1","date":"2024-03-14","raw_html":"NVDA beats expectations<span style=\"display:none\">losses and layoffs</span>","source":"wire"}"#,
            "\n",
            // GOOGL with a Cyrillic О (U+041E) in place of the Latin O.
            r#"{"id":"h2","date":"2024-03-14","raw_html":"GОOGL rallies on upbeat guidance","source":"wire"}"#,
            "\n",
            r#"{"id":"h3","date":"2024-03-14","raw_html":"Apple announces dividend increase","source":"wire"}"#,
            "\n",
        ),
    )
    .unwrap();

    let out_dir = tmp.path().join("sanitized");
    run_ok(ats().arg("sanitize").arg("--headlines").arg(&headlines).arg("--out").arg(&out_dir));

    let cleaned = fs::read_to_string(out_dir.join("sanitized.jsonl")).unwrap();
    assert!(!cleaned.contains("losses and layoffs"), "hidden payload survived:\n{cleaned}");
    assert!(cleaned.contains("GOOGL rallies"), "homoglyph not normalized:\n{cleaned}");
    assert!(cleaned.contains("Apple announces dividend increase"), "clean text mangled");

    let reports = read_json(&out_dir.join("detection_reports.json"));
    let reports = reports.as_array().expect("reports array");
    assert_eq!(reports.len(), 3, "one report per headline");
    let by_id = |id: &str| {
        reports
            .iter()
            .find(|r| r["headline_id"] == id)
            .unwrap_or_else(|| panic!("no report for {id}"))
    };
    assert!(by_id("h1")["hidden_elements_removed"].as_u64().unwrap() >= 1);
    assert_eq!(by_id("h1")["suspicious"], Value::Bool(true));
    assert!(by_id("h2")["homoglyphs_normalized"].as_u64().unwrap() >= 1);
    assert_eq!(by_id("h2")["suspicious"], Value::Bool(true));
    assert_eq!(by_id("h3")["suspicious"], Value::Bool(false), "clean headline flagged");
}

#[test]
fn report_rerenders_the_sweep_table() {
    let tmp = TempDir::new().unwrap();
    let fixtures = tmp.path().join("fixtures");
    make_fixtures(&fixtures);

    let sweep_dir = tmp.path().join("sweep");
    let mut cmd = ats();
    cmd.arg("sweep");
    input_args(&mut cmd, &fixtures);
    cmd.arg("--out").arg(&sweep_dir).arg("--kinds").arg("identity").arg("--sequential");
    run_ok(&mut cmd);

    let report_dir = tmp.path().join("report");
    run_ok(
        ats()
            .arg("report")
            .arg("--report")
            .arg(sweep_dir.join("report.json"))
            .arg("--out")
            .arg(&report_dir),
    );

    let original = fs::read(sweep_dir.join("table.txt")).unwrap();
    let rerendered = fs::read(report_dir.join("table.txt")).unwrap();
    assert_eq!(original, rerendered, "re-rendered table differs from the sweep's");
}
