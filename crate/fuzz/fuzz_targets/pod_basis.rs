#![no_main]

use libfuzzer_sys::fuzz_target;

// u32 LE length of the binary part, the binary part, then the JSON header
fuzz_target!(|data: &[u8]| {
    let Some((bin, json)) = split(data) else { return };
    if let Ok(b) = curvirom::pod::PodBasis::from_parts(bin, json) {
        let c = curvirom::pod::CoeffVector { c: vec![1.0; b.dim()], level: b.level() };
        let _ = b.reconstruct(&c);
    }
});

fn split(data: &[u8]) -> Option<(&[u8], &[u8])> {
    let n = u32::from_le_bytes(data.get(..4)?.try_into().ok()?) as usize;
    let rest = &data[4..];
    (n <= rest.len()).then(|| rest.split_at(n))
}
