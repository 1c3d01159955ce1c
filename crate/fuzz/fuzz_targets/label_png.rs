#![no_main]

use libfuzzer_sys::fuzz_target;
use openpixel::labels::LabelMap;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = LabelMap::from_png_bytes(data) {
        let again = LabelMap::from_png_bytes(&m.to_png_bytes().unwrap()).unwrap();
        assert_eq!(again, m);
    }
});
