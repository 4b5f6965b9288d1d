#![no_main]

use libfuzzer_sys::fuzz_target;
use wxdiag::pipeline::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::parse(text) {
        let _ = cfg.selected_metrics();
        let again = serde_json::to_string(&cfg).expect("parsed config serializes");
        RunConfig::parse(&again).expect("serialized config parses");
    }
});
