#![no_main]

use libfuzzer_sys::fuzz_target;

// The config loader must reject arbitrary text gracefully: no panics, no
// unbounded work. Resolution errors are expected outcomes.
fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        match ionkerr_cli::config::parse_config(text) {
            Ok(ionkerr_cli::config::ConfigFile::Scenario(cfg)) => {
                // the echoed header must itself re-parse to the same shape
                let rebuilt: String = cfg
                    .echo
                    .iter()
                    .map(|(k, v)| format!("{k} = {v}\n"))
                    .collect();
                let reparsed = ionkerr_cli::config::parse_config(&rebuilt);
                assert!(reparsed.is_ok(), "echo of a valid config failed to re-parse");
            }
            Ok(ionkerr_cli::config::ConfigFile::Sweep(sweep)) => {
                let _ = sweep.point_count();
            }
            Err(e) => {
                let _ = e.to_string();
            }
        }
    }
});
