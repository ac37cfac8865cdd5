#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        // joint diagonalization runs on whatever parses
        let _ = collapse_cli::parse_quantity_set(text);
    }
});
