#![no_main]

use csm_core::runner::Snapshot;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(snap) = Snapshot::decode(data) else {
        return;
    };
    let bytes = snap.encode();
    assert_eq!(bytes.as_slice(), data);
    assert_eq!(Snapshot::decode(&bytes).expect("re-decode"), snap);
});
