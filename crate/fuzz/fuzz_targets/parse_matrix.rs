#![no_main]

use divdiff::linalg::{parse_matrix_text, solve_delta, DeltaVector};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else { return };
    let Ok(a) = parse_matrix_text(src) else { return };
    let n = a.dim();
    if n == 0 || n > 32 {
        return;
    }
    let b = DeltaVector::new(vec![1.0; n], vec![0.0; n]).unwrap();
    let _ = solve_delta(&a, &b);
});
