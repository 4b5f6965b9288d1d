#![no_main]

use libfuzzer_sys::fuzz_target;
use wxdiag::io::wxg1;

fuzz_target!(|data: &[u8]| {
    if let Ok(g) = wxg1::decode(data) {
        // Anything that decodes must re-encode to the same bytes.
        let again = wxg1::encode(&g.grid, &g.values).expect("decoded grid re-encodes");
        assert_eq!(again, data);
    }
});
