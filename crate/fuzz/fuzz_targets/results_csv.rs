#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // --append re-reads previously written results; a corrupted file
    // must surface as a parse error, never a panic
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(records) = epshort::metrics::parse_results_csv(text) {
            for rec in records {
                let _ = rec.csv_row();
                let _ = rec.cell_key();
            }
        }
    }
});
