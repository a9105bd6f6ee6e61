#![no_main]

use divdiff::scalar::DeltaScalar;
use divdiff::spline::{spline_eval_delta, CubicSpline};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else { return };
    let Ok(sp) = CubicSpline::parse(src) else { return };
    let again = CubicSpline::parse(&sp.to_text()).expect("written spline reparses");
    assert_eq!(again, sp);
    let first = sp.knots()[0];
    if let Ok(x) = DeltaScalar::seed(first - 0.5, 1.0) {
        let _ = spline_eval_delta(&sp, x);
    }
});
