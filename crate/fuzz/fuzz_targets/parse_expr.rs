#![no_main]

use divdiff::expr::parse;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else { return };
    if let Ok(e) = parse(src, 10) {
        // Printing and reparsing must be stable.
        let text = e.to_string();
        let again = parse(&text, 10).expect("printed expression reparses");
        assert_eq!(again.to_string(), text);
    }
});
