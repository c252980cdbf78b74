#![no_main]

use annealnet::record::{read_series_csv, write_series_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = read_series_csv(data) {
        let mut buf = Vec::new();
        write_series_csv(&mut buf, &table.config_hash, table.coords, &table.rows).unwrap();
        let again = read_series_csv(buf.as_slice()).expect("written series reparses");
        assert_eq!(again.rows.len(), table.rows.len());
    }
});
