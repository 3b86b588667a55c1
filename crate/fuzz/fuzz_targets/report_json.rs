#![no_main]

use gw_cli::Report;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(report) = Report::from_json(text) {
        let json = report.to_json().expect("report serializes");
        let back = Report::from_json(&json).expect("serialized report parses");
        assert_eq!(back.to_json().expect("report serializes"), json);
        let _ = back.to_table();
    }
});
