#![no_main]

use libfuzzer_sys::fuzz_target;
use wxdiag::composite::{parse_metrics_csv, WeightScheme};
use wxdiag::pipeline::{build_hmas_tables, HmasCell};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rows) = parse_metrics_csv(text) {
        let cells: Vec<HmasCell> = rows.iter().map(HmasCell::from).collect();
        let _ = build_hmas_tables(&cells, &WeightScheme::standard_set());
    }
});
