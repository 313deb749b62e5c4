#![no_main]

use csa_core::experiment::report::{parse_plot_csv, plot_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(points) = parse_plot_csv(text) {
        let again = parse_plot_csv(&plot_csv(&points)).expect("written csv parses");
        assert_eq!(again.len(), points.len());
    }
});
