#![no_main]

use libfuzzer_sys::fuzz_target;
use openpixel::experiment::Legend;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(legend) = Legend::from_csv(text) {
        assert_eq!(Legend::from_csv(&legend.to_csv()).unwrap(), legend);
    }
});
