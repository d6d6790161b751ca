#![no_main]

use libfuzzer_sys::fuzz_target;
use zoosel::encoder::checkpoint::Checkpoint;

fuzz_target!(|data: &[u8]| {
    let Ok(ck) = Checkpoint::from_bytes(data) else {
        return;
    };
    assert_eq!(Checkpoint::from_bytes(&ck.to_bytes()).expect("round trip"), ck);
});
