#![no_main]

use libfuzzer_sys::fuzz_target;
use lmn::checkpoint::Checkpoint;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(ck) = Checkpoint::parse(text) else { return };
    // anything that parses must survive its own serialization
    let again = Checkpoint::parse(&ck.to_text()).expect("re-parse of serialized checkpoint");
    assert_eq!(again.to_text(), ck.to_text());
    let _ = ck.predict_raw(&ck.meta.medians);
    let _ = lmn::verify::certify(ck.model.core());
});
