#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(p) = curvirom::geometry::GeometryParams::parse(text) {
        let _ = p.validate(&curvirom::geometry::ParamBounds::default());
    }
});
