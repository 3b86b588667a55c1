#![no_main]

use gw_cli::io::{format_site_bundle, parse_site_bundle};
use libfuzzer_sys::fuzz_target;

// Input is the observation file and the reference file separated by a NUL byte.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let (obs, refs) = text.split_once('\0').unwrap_or((text, ""));
    if let Ok(sites) = parse_site_bundle(obs, refs) {
        let (obs, refs) = format_site_bundle(&sites);
        let back = parse_site_bundle(&obs, &refs).expect("formatted bundle parses");
        assert_eq!(back.len(), sites.len());
    }
});
