#![no_main]

use libfuzzer_sys::fuzz_target;

// byte 0 picks 1..=4 levels, bytes 1-2 the base dims, the rest is the blob
fuzz_target!(|data: &[u8]| {
    if data.len() < 3 {
        return;
    }
    let levels = (data[0] % 4) as usize + 1;
    let base = (3 + (data[1] % 8) as usize, 3 + (data[2] % 8) as usize);
    let dims = curvirom::multilevel::level_dims(base, levels);
    if let Ok(s) = curvirom::dataset::Sample::from_blob(&data[3..], 0, &dims) {
        assert_eq!(s.solutions.len(), levels);
        let again = curvirom::dataset::Sample::from_blob(&s.to_blob(), 0, &dims).unwrap();
        assert_eq!(again.solutions.len(), levels);
    }
});
