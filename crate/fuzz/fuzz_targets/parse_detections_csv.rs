#![no_main]

use std::sync::OnceLock;

use driftwatch::harness::{parse_detections_csv, parse_manifest, RunManifest};
use libfuzzer_sys::fuzz_target;

const MANIFEST: &[u8] = include_bytes!("../corpus/parse_manifest/run.json");

fuzz_target!(|data: &[u8]| {
    static M: OnceLock<RunManifest> = OnceLock::new();
    let manifest = M.get_or_init(|| parse_manifest(MANIFEST).expect("seed manifest"));
    let _ = parse_detections_csv(data, manifest);
});
