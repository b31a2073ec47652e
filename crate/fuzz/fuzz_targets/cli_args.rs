#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // whitespace-split fuzz input stands in for an argv; parsing must
    // never panic no matter how the flags are mangled
    if let Ok(text) = std::str::from_utf8(data) {
        let args: Vec<String> = text.split_whitespace().map(str::to_string).collect();
        if args.len() > 64 {
            return;
        }
        let _ = epshort::cli::parse_sweep_args(&args);
    }
});
