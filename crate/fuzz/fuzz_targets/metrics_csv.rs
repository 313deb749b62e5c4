#![no_main]

use csa_core::experiment::report::parse_metrics_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_metrics_csv(text);
    }
});
