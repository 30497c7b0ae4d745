//! Replays the checked-in fuzz seeds through the same entry points as the fuzz targets.

use std::fs;
use std::path::{Path, PathBuf};

use llc_core::harmonic::LtiModel;
use llc_core::harness::protocol::{parse_client_frame, ServerMessage};
use llc_core::harness::{FrequencyResponse, Scenario, SimTrace};
use llc_core::plant::{LtpModel, SurrogateParams};
use llc_core::reduction::ReducedLti;

fn seeds(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .map(|p| {
            let bytes = fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn text(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).unwrap()
}

#[test]
fn plant_params_seeds() {
    let mut accepted = 0;
    for (p, b) in seeds("plant_params_json") {
        if let Ok(params) = SurrogateParams::from_json_str(text(&b)) {
            params.to_json_string().unwrap();
            accepted += 1;
        } else {
            assert!(!p.ends_with("default.json"), "default plant rejected");
        }
    }
    assert_eq!(accepted, 1);
}

#[test]
fn scenario_seeds() {
    let base = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let ok = seeds("scenario_json")
        .iter()
        .filter(|(_, b)| Scenario::from_json_str(text(b), &base).is_ok())
        .count();
    // every shipped scenario parses; the dangling path reference does not
    assert_eq!(ok, seeds("scenario_json").len() - 1);
}

#[test]
fn model_seeds() {
    for (p, b) in seeds("lti_model_json") {
        let t = text(&b);
        let lti = LtiModel::from_json_str(t).is_ok();
        let red = ReducedLti::from_json_str(t).is_ok();
        let ltp = LtpModel::from_json_str(t).is_ok();
        let name = p.file_name().unwrap().to_str().unwrap();
        match name {
            "reduced.json" => assert!(red && !ltp),
            "ltp.json" => assert!(ltp && !red && !lti),
            _ => assert!(!lti && !red && !ltp, "{name} parsed"),
        }
    }
}

#[test]
fn trace_seeds() {
    for (p, b) in seeds("trace_csv") {
        let t = SimTrace::read_csv(&b[..]).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        let expected = if p.ends_with("header_only.csv") { 0 } else { 3 };
        assert_eq!(t.len(), expected);
    }
}

#[test]
fn freq_seeds() {
    for (_, b) in seeds("freq_csv") {
        let fr = FrequencyResponse::read_csv(&b[..]).unwrap();
        assert_eq!(fr.pairs.len(), 1);
    }
}

#[test]
fn wire_seeds() {
    for (p, b) in seeds("wire_message") {
        let t = text(&b);
        let name = p.file_name().unwrap().to_str().unwrap();
        let client = parse_client_frame(t);
        let server = ServerMessage::parse(t);
        match name {
            "stick.jsonl" => assert!(client.len() == 1 && client[0].is_ok()),
            "multi.jsonl" => assert!(client.len() == 2 && client.iter().all(|m| m.is_ok())),
            "overflow.jsonl" => assert!(client.iter().all(|m| m.is_err())),
            _ => assert!(server.is_ok(), "{name}: {server:?}"),
        }
    }
}
