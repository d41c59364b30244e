#![no_main]

use libfuzzer_sys::fuzz_target;
use patchbeam_experiments::expr::Expr;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(e) = Expr::parse(src) {
        // Evaluation must be total, NaN included.
        let _ = e.eval(0.25, -0.5);
    }
});
