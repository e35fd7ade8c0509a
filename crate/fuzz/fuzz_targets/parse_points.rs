//! Fuzzes the point-file parser: arbitrary bytes must either parse or
//! return a structured error — never panic — and every successful parse
//! must survive the emit/re-parse round trip bit-exactly.

#![no_main]

use libfuzzer_sys::fuzz_target;

use kdelinalg::{format_points, parse_points};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(points) = parse_points(text) else {
        return;
    };
    // Coordinates are finite by construction, so exact comparison is sound.
    let reparsed = parse_points(&format_points(&points)).expect("round trip must parse");
    assert_eq!(reparsed.len(), points.len());
    assert_eq!(reparsed.dim(), points.dim());
    for i in 0..points.len() {
        assert_eq!(reparsed.point(i), points.point(i), "point {i} changed");
    }
});
