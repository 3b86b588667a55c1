#![no_main]

use gw_cli::io::{format_gaussian, parse_gaussian};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(g) = parse_gaussian(text, "fuzz") {
        let back = parse_gaussian(&format_gaussian(&g), "fuzz").expect("formatted parameters parse");
        assert_eq!(back, g);
    }
});
