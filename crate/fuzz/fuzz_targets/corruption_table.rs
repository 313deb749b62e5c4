#![no_main]

use csa_core::augment::CorruptionTable;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(table) = CorruptionTable::parse(text) {
        assert_eq!(CorruptionTable::parse(&table.to_toml()).expect("round trip"), table);
    }
});
