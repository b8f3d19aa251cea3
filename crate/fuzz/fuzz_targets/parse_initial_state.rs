#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(terms) = ionkerr_cli::config::parse_initial_state(text) {
            assert!(!terms.is_empty());
            assert!(terms.iter().all(|(c, _, m, n)| c.is_finite() && *m <= 1000 && *n <= 1000));
            assert!(terms.iter().any(|(c, _, _, _)| *c != 0.0));
        }
    }
});
