#![no_main]

use annealnet::harness::SweepAxis;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(axis) = SweepAxis::parse(s) {
            assert!(!axis.values.is_empty());
        }
    }
});
