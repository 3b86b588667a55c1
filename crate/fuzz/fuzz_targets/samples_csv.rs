#![no_main]

use gw_cli::io::{format_samples_csv, parse_samples_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(s) = parse_samples_csv(text, "fuzz") {
        let back = parse_samples_csv(&format_samples_csv(&s), "fuzz").expect("formatted samples parse");
        assert_eq!(back.rows(), s.rows());
    }
});
