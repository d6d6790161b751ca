#![no_main]

use libfuzzer_sys::fuzz_target;
use zoosel::strategy::read_decisions_jsonl;

fuzz_target!(|data: &[u8]| {
    let ids: Vec<String> = ["nn-2opt", "greedy-edge", "farthest-insertion"].map(String::from).to_vec();
    let _ = read_decisions_jsonl(data, &ids);
});
