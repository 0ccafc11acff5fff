#![no_main]

use affectbench::config::{parse_override, ExperimentConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let lines: Vec<&str> = text.lines().collect();
    for line in &lines {
        let _ = parse_override(line);
    }
    let mut cfg = ExperimentConfig::default();
    if cfg.apply_overrides(&lines).is_err() || cfg.validate().is_err() {
        return;
    }
    let back: ExperimentConfig = serde_json::from_str(&cfg.canonical_json()).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.hash(), cfg.hash());
});
