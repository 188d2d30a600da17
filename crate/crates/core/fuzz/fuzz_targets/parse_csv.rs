#![no_main]

use libfuzzer_sys::fuzz_target;
use trust_core::data::{one_hot_encode, parse_csv, write_csv};

fuzz_target!(|data: &[u8]| {
    let target = if data.first().is_some_and(|b| b % 2 == 0) { Some("y") } else { None };
    if let Ok(d) = parse_csv(data, target) {
        let _ = one_hot_encode(&d);
        let mut out = Vec::new();
        write_csv(&d, &mut out).expect("a parsed dataset writes back");
        let again = parse_csv(out.as_slice(), target).expect("written CSV parses");
        assert_eq!(again.n_rows, d.n_rows);
        assert_eq!(again.feature_names, d.feature_names);
    }
});
