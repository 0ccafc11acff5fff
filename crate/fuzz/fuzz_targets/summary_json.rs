#![no_main]

use affectbench::protocols::{render_bar_chart_svg, summary_from_json, summary_to_csv, summary_to_json, Metric};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(summary) = summary_from_json(text) else {
        return;
    };
    let json = summary_to_json(&summary).unwrap();
    assert_eq!(summary_from_json(&json).unwrap(), summary);
    summary_to_csv(&summary).unwrap();
    render_bar_chart_svg(&summary, Metric::F1).unwrap();
});
