#![no_main]

use graphcast::models::{decode_params, encode_params};
use libfuzzer_sys::fuzz_target;

// Input layout: manifest text, a NUL byte, then the raw blob.
fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|&b| b == 0).unwrap_or(data.len());
    let Ok(manifest) = std::str::from_utf8(&data[..split]) else { return };
    let blob = data.get(split + 1..).unwrap_or(&[]);
    if let Ok(params) = decode_params(manifest, blob) {
        let (m, b) = encode_params(&params);
        assert_eq!(decode_params(&m, &b).expect("roundtrip"), params);
    }
});
