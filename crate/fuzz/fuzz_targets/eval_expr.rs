#![no_main]

use divdiff::expr::{eval_delta, parse};
use libfuzzer_sys::fuzz_target;

// Leading 32 bytes: x0, x1, s0, s1 as little-endian f64. The rest is the expression.
fuzz_target!(|data: &[u8]| {
    if data.len() < 32 {
        return;
    }
    let (nums, text) = data.split_at(32);
    let v: Vec<f64> = nums
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let Ok(src) = std::str::from_utf8(text) else { return };
    let Ok(e) = parse(src, 2) else { return };
    let (x, s) = ([v[0], v[1]], [v[2], v[3]]);
    if let Ok((value, delta)) = eval_delta(&e, &x, &s) {
        assert!(value.is_finite() && delta.is_finite());
    }
    if let Ok((_, delta)) = eval_delta(&e, &x, &[0.0, 0.0]) {
        assert_eq!(delta.to_bits(), 0);
    }
});
