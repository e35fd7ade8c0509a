//! Fuzzes the generator-spec parser: arbitrary strings must either parse
//! or return a structured error — never panic. Parsed specs that are small
//! enough to materialize cheaply are also fed through the generator, which
//! must likewise never panic (it may reject bad numeric parameters).

#![no_main]

use libfuzzer_sys::fuzz_target;

use kdelinalg::{generate, parse_gen_spec, KernelSpec};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(spec) = parse_gen_spec(text) else {
        return;
    };
    // Keep materialization cheap: the dp kind allocates n^2 floats and the
    // others n * dim, so a size guard keeps the fuzzer fast without
    // narrowing the parser coverage above.
    if spec.n <= 64 && spec.dim <= 8 && spec.clusters <= 64 {
        let kernel = KernelSpec::gaussian(1.0).expect("fixed kernel");
        if let Ok(points) = generate(&spec, &kernel, 1) {
            assert_eq!(points.len(), spec.n);
        }
    }
});
