#![no_main]

use csa_core::experiment::idx::parse_idx_images;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(images) = parse_idx_images(data) {
        assert_eq!(images.pixels.len(), images.count * images.rows * images.cols);
        assert_eq!(data.len(), 16 + images.pixels.len());
    }
});
