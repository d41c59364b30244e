#![no_main]

use libfuzzer_sys::fuzz_target;
use patchbeam_experiments::ScenarioConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // Trailing lines of the form `@key=value` are fed through the override path.
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
    let _ = ScenarioConfig::from_toml_str(&body, &overrides);
});
