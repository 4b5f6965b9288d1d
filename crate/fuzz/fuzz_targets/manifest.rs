#![no_main]

use libfuzzer_sys::fuzz_target;
use wxdiag::io::manifest::{build_forecast_set, parse_manifest};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(entries) = parse_manifest(text) {
        let set = build_forecast_set(&entries, &entries);
        let _ = set.lead_mismatches();
        let _ = set.missing_verification();
    }
});
