// Replays the checked-in fuzz seeds on stable so they stay meaningful.

use std::fs;
use std::path::PathBuf;

use patchbeam::hetero::read_material_csv;
use patchbeam::micro::MicroGridSpec;
use patchbeam_experiments::expr::Expr;
use patchbeam_experiments::ScenarioConfig;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn expr_seeds() {
    for (name, data) in seeds("expr") {
        let src = String::from_utf8(data).unwrap();
        let e = Expr::parse(&src).unwrap_or_else(|err| panic!("{name}: {err}"));
        let _ = e.eval(0.25, -0.5);
    }
    assert_eq!(Expr::parse("2^3^2").unwrap().eval(0.0, 0.0), 512.0);
}

#[test]
fn config_seeds() {
    for (name, data) in seeds("config_toml") {
        let text = String::from_utf8(data).unwrap();
        let mut body = String::new();
        let mut overrides = Vec::new();
        for line in text.lines() {
            match line.strip_prefix('@').and_then(|l| l.split_once('=')) {
                Some((k, v)) => overrides.push((k.to_string(), v.to_string())),
                None => {
                    body.push_str(line);
                    body.push('\n');
                }
            }
        }
        let res = ScenarioConfig::from_toml_str(&body, &overrides);
        assert_eq!(res.is_ok(), !name.starts_with("bad_"), "{name}: {res:?}");
    }
}

#[test]
fn material_seeds() {
    let grid = MicroGridSpec::new(3, 4, 0.1, 0.1).unwrap();
    for (name, data) in seeds("material_csv") {
        let res = read_material_csv(data.as_slice(), &grid);
        assert_eq!(res.is_ok(), name == "full_grid.csv", "{name}: {:?}", res.err());
    }
}
