#![no_main]

use libfuzzer_sys::fuzz_target;
use openpixel::dataset::Palette;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(p) = Palette::parse(text) {
        assert_eq!(Palette::parse(&p.to_text()).unwrap(), p);
    }
});
