#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(s) = curvirom::config::RunSettings::from_toml(text) {
        s.generation().unwrap();
        let again = curvirom::config::RunSettings::from_toml(&s.to_toml()).unwrap();
        assert_eq!(again.levels, s.levels);
    }
});
