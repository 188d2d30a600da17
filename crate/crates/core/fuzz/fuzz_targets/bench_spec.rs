#![no_main]

use libfuzzer_sys::fuzz_target;
use trust_core::bench::BenchSpec;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(spec) = BenchSpec::from_json(s, None) {
            spec.validate().expect("parsed specs are valid");
        }
    }
});
