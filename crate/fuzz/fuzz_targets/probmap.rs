#![no_main]

use libfuzzer_sys::fuzz_target;
use openpixel::openset::ProbabilityMap;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = ProbabilityMap::decode(data) {
        assert_eq!(m.encode(), data);
    }
});
