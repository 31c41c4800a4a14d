#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(arrays) = curvirom::binio::decode(data) {
        let refs: Vec<_> = arrays.iter().collect();
        assert_eq!(curvirom::binio::encode(&refs), data);
    }
});
