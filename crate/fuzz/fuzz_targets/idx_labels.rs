#![no_main]

use csa_core::experiment::idx::{encode_idx_labels, parse_idx_labels};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(labels) = parse_idx_labels(data) {
        let wide: Vec<usize> = labels.iter().map(|&l| usize::from(l)).collect();
        assert_eq!(encode_idx_labels(&wide), data);
    }
});
