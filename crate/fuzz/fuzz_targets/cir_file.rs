#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // CIR files come from arbitrary measurement pipelines; the parser
    // must reject garbage without panicking
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = epshort::model::parse_cir_str(text);
    }
});
