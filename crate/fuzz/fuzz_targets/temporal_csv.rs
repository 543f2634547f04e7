#![no_main]

use graphcast::dataset::{dedup_rows, drop_missing, filter_low_quality, parse_temporal_csv, Feature};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(table) = parse_temporal_csv(text, Feature::SalesOrder) else { return };
    // a parsed table must survive its own serialization
    let again = parse_temporal_csv(&table.to_csv(), Feature::SalesOrder).expect("reparse");
    assert_eq!(again.num_products(), table.num_products());
    if let Ok(t) = dedup_rows(&table) {
        let (t, _) = drop_missing(&t);
        let _ = filter_low_quality(&t, 0.5);
    }
});
