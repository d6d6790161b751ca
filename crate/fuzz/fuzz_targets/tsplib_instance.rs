#![no_main]

use libfuzzer_sys::fuzz_target;
use zoosel::instance::{parse_instance_file, serialize_instance};

fuzz_target!(|data: &str| {
    let Ok(inst) = parse_instance_file(data) else {
        return;
    };
    // Anything we accept must survive its own serializer.
    let again = parse_instance_file(&serialize_instance(&inst)).expect("reparse");
    assert_eq!(again.scale(), inst.scale());
});
