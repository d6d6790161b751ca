#![no_main]

use libfuzzer_sys::fuzz_target;
use zoosel::zoo::PerformanceTable;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = PerformanceTable::read_jsonl(data) {
        let _ = t.oracle_mean_gap();
    }
});
