#![no_main]

use csa_core::experiment::idx::{decode_idx_dataset, encode_idx_images, encode_idx_labels};
use libfuzzer_sys::fuzz_target;

// Input: a little-endian u16 split point, then the image file followed by
// the label file.
fuzz_target!(|data: &[u8]| {
    if data.len() < 2 {
        return;
    }
    let split = usize::from(u16::from_le_bytes([data[0], data[1]])).min(data.len() - 2);
    let (images, labels) = data[2..].split_at(split);
    if let Ok(batch) = decode_idx_dataset(images, labels, usize::MAX) {
        assert_eq!(encode_idx_images(&batch), images);
        assert_eq!(encode_idx_labels(batch.labels()), labels);
    }
});
