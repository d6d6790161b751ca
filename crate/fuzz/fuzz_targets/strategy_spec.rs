#![no_main]

use libfuzzer_sys::fuzz_target;
use zoosel::strategy::Strategy;

fuzz_target!(|data: &str| {
    if let Ok(s) = data.parse::<Strategy>() {
        assert_eq!(s.to_string().parse::<Strategy>().expect("display reparses"), s);
    }
});
