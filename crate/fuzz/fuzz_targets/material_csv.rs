#![no_main]

use libfuzzer_sys::fuzz_target;
use patchbeam::hetero::read_material_csv;
use patchbeam::micro::MicroGridSpec;

fuzz_target!(|data: &[u8]| {
    let grid = MicroGridSpec::new(3, 4, 0.1, 0.1).unwrap();
    if let Ok(mat) = read_material_csv(data, &grid) {
        assert!(mat.lambda_n.iter().all(|v| v.is_finite()));
    }
});
