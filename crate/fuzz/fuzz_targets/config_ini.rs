#![no_main]

use annealnet::config::{parse_ini, ExperimentConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(doc) = parse_ini(text) {
        let again = parse_ini(&doc.to_canonical_string()).expect("canonical text reparses");
        assert_eq!(doc.sections.len(), again.sections.len());
        let _ = ExperimentConfig::from_ini(&doc);
    }
});
