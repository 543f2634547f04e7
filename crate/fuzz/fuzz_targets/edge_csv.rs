#![no_main]

use graphcast::dataset::{normalize_adjacency, parse_edges};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let roster: Vec<String> = ["P1", "P2", "P3", "P4"].map(String::from).to_vec();
    if let Ok(topo) = parse_edges(text, &roster) {
        let a = normalize_adjacency(&topo).expect("parsed graphs normalize");
        assert!(a.matrix().is_finite());
    }
});
