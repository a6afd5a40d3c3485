#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use lmn::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let base = Path::new("/base");
    let Ok(cfg) = RunConfig::parse(text, base) else { return };
    let again = RunConfig::parse(&cfg.to_text(), base).expect("re-parse of serialized config");
    assert_eq!(again, cfg);
});
