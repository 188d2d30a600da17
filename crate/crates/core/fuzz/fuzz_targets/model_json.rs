#![no_main]

use libfuzzer_sys::fuzz_target;
use trust_core::tree::TrustModel;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(model) = TrustModel::from_json(s) {
        let row = vec![0.0; model.schema.features.len()];
        let _ = model.predict_row(&row);
        let json = model.to_json().expect("a loaded model serializes");
        TrustModel::from_json(&json).expect("serialized model reloads");
    }
});
