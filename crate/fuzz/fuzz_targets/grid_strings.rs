#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = epshort::config::parse_snr_grid(text);
        let _ = epshort::config::parse_f64_list(text);
        let _ = epshort::config::parse_usize_list(text);
        let _ = epshort::config::parse_constellation_name(text);
        let _ = epshort::config::parse_shorten_mode(text);
        let _ = epshort::config::parse_detector(text);
    }
});
