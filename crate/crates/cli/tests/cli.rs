// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sevforge_core::keyderive::{derive_secret_set, derive_vcek, ChipSecrets, TcbVersion};
use sevforge_core::scenario::{derive_vceks, extract_secrets, scenario_debug_override, ScenarioConfig};
use sevforge_core::sim::SimConfig;
use sevforge_core::svi2::{encode_command, Domain, Svi2Command};
use sevforge_core::trace::{count_cs_pulses, CsTrace};

const RK: &str = "000102030405060708090a0b0c0d0e0f";

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(rel)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sevforge")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert_eq!(o.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_str(&stdout(o)).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn svi2_encode_matches_library_and_decodes_back() {
    let frame = stdout(&run(&["svi2", "encode", "--domain", "soc", "--vid", "0x98"]));
    let want = encode_command(&Svi2Command::set_vid(Domain::Soc, 0x98, true));
    assert_eq!(frame.trim(), want.to_string());
    let decoded = json(&run(&["--json", "svi2", "decode", frame.trim()]));
    assert_eq!(decoded["vid"], 0x98);
}

#[test]
fn chip_id_of_one_is_the_generator() {
    let secret = format!("{}01", "00".repeat(31));
    let v = json(&run(&["--json", "keys", "id", "--secret", &secret]));
    assert_eq!(
        v["id"],
        "79be667ef9dcbbac55a06295ce870b07029bfcdb2dce28d959f2815b16f81798\
         483ada7726a3c4655da4fbfc0e1108a8fd17b448a68554199c47d08ffb10d4b8"
    );
}

#[test]
fn vcek_matches_library() {
    let sec = "0b".repeat(48);
    let tcb: TcbVersion = "03:00:00:00:00:00:08:73".parse().unwrap();
    let v = json(&run(&["--json", "keys", "vcek", "--sec255", &sec, "--tcb", &tcb.to_string()]));
    let key = derive_vcek(&derive_secret_set(&[0x0b; 48], tcb).final_secret).unwrap();
    assert_eq!(v["x"], hex::encode(key.public_x));
    assert_eq!(v["y"], hex::encode(key.public_y));
}

#[test]
fn ladder_then_downgrade_matches_direct_derivation() {
    let dir = tempfile::tempdir().unwrap();
    let sec = "5a".repeat(48);
    let set = stdout(&run(&["keys", "ladder", "--sec255", &sec, "--tcb", "09:00:00:00:00:00:10:20"]));
    let set_path = dir.path().join("set.json");
    std::fs::write(&set_path, set).unwrap();
    let low = "04:00:00:00:00:00:ff:fe";
    let down = json(&run(&["--json", "keys", "downgrade", "--set", path(&set_path), "--target", low]));
    let direct = json(&run(&["--json", "keys", "vcek", "--sec255", &sec, "--tcb", low]));
    assert_eq!(down, direct);
}

#[test]
fn extract_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let fuses = ChipSecrets { cek_secret: [7; 32], vcek_secret_255: [9; 48] };
    let fuses_path = dir.path().join("fuses.json");
    std::fs::write(&fuses_path, serde_json::to_string(&fuses).unwrap()).unwrap();
    let tcb = "02:00:00:00:00:00:08:73";
    let v = json(&run(&["--json", "keys", "extract", "--fuses", path(&fuses_path), "--tcb", tcb]));
    let extracted = extract_secrets(&fuses, 255);
    let vceks = derive_vceks(&extracted.rom_stage, &[tcb.parse().unwrap()]).unwrap();
    assert_eq!(v["vceks"], serde_json::to_value(vceks).unwrap());
    assert_eq!(v["extracted"], serde_json::to_value(extracted).unwrap());
}

#[test]
fn verify_reports_the_ark_mismatch() {
    let img = fixture("images/payload_svn255.bin");
    let v = json(&run(&["--json", "image", "verify", path(&img), "--profile", "72F3", "--rk", RK]));
    assert_eq!(v["passed"], false);
    assert_eq!(v["steps"][0]["status"], "fail");
    let img = fixture("images/genuine_zen3.bin");
    let v = json(&run(&["--json", "image", "verify", path(&img), "--profile", "72F3", "--rk", RK]));
    assert_eq!(v["passed"], true);
}

#[test]
fn sim_trace_counts_agree() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("trace.csv");
    let img = fixture("images/payload_svn255.bin");
    let v = json(&run(&["--json", "sim", "boot", "--image", path(&img), "--profile", "7272", "--trace-out", path(&csv)]));
    assert_eq!(v["kind"], "key-rejected");
    let trace = CsTrace::from_csv(&std::fs::read_to_string(&csv).unwrap()).unwrap();
    let counted = json(&run(&["--json", "trace", "count", path(&csv)]));
    assert_eq!(counted["pulses"], count_cs_pulses(&trace, trace.duration_ticks()));
}

#[test]
fn missing_input_exits_with_input_error() {
    let o = run(&["image", "info", "/nonexistent/image.bin"]);
    assert_eq!(o.status.code(), Some(3));
    let o = run(&["keys", "id", "--secret", "zz"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn fruitless_campaign_exits_with_budget_exhausted() {
    let img = fixture("images/payload_svn255.bin");
    let o = run(&["campaign", "run", "--image", path(&img), "--budget", "5", "--window", "1000,1000,0,0"]);
    assert_eq!(o.status.code(), Some(2));
    let lines: Vec<_> = String::from_utf8(o.stdout).unwrap().lines().map(str::to_owned).collect();
    assert_eq!(lines.len(), 6);
    let last: serde_json::Value = serde_json::from_str(&lines[5]).unwrap();
    assert_eq!(last["stats"]["attempts"], 5);
    assert_eq!(last["stats"]["successes"], 0);
}

#[test]
fn zero_budget_scenario_exits_with_budget_exhausted() {
    let o = run(&[
        "scenario",
        "debug-override",
        "--image",
        path(&fixture("images/genuine_zen3.bin")),
        "--key",
        path(&fixture("keys/attacker_ark.pem")),
        "--rk",
        RK,
        "--budget",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn debug_override_report_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig {
        profile: "72F3".into(),
        original_image: fixture("images/genuine_zen3.bin"),
        attacker_key: fixture("keys/attacker_ark.pem"),
        root_key: Some(RK.into()),
        fuses: None,
        budget: 1_000_000,
        seed: 5,
        window: None,
        tcb_versions: vec![],
        output_dir: Some(dir.path().join("out")),
    };
    let cfg_path = dir.path().join("scenario.json");
    std::fs::write(&cfg_path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let printed = json(&run(&["--seed", "5", "scenario", "debug-override", "--scenario", path(&cfg_path)]));
    let written: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(printed, written);
    let report = scenario_debug_override(&cfg.load(&SimConfig::default()).unwrap()).unwrap();
    assert_eq!(printed, serde_json::to_value(&report).unwrap());
    assert!(dir.path().join("out/payload.bin").exists());
}
