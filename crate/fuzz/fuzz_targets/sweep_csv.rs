#![no_main]

use libfuzzer_sys::fuzz_target;
use openpixel::openset::SweepCurve;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(curve) = SweepCurve::from_csv(text) {
        let csv = curve.to_csv();
        assert_eq!(SweepCurve::from_csv(&csv).unwrap().to_csv(), csv);
    }
});
