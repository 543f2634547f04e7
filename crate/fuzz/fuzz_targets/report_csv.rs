#![no_main]

use graphcast::evaluation::{parse_report_csv, render_table, TableFormat};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(report) = parse_report_csv(text) {
        let _ = render_table(&report, TableFormat::Markdown);
        let csv = render_table(&report, TableFormat::Csv);
        assert_eq!(parse_report_csv(&csv).expect("reparse").rows.len(), report.rows.len());
    }
});
