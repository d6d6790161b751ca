#![no_main]

use libfuzzer_sys::fuzz_target;
use zoosel::experiment::ExperimentConfig;

fuzz_target!(|data: &str| {
    let _ = ExperimentConfig::from_toml(data);
});
