#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok((h, w)) = curvirom::config::parse_dims(text) {
        assert!(h >= 3 && w >= 3);
    }
});
