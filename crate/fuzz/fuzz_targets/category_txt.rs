#![no_main]

use camprompt::ClassCatalog;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cat) = ClassCatalog::parse(text) {
        // whatever parses must survive a write/parse round trip
        let again = ClassCatalog::parse(&cat.to_text()).expect("re-parse of written catalog");
        assert_eq!(cat, again);
    }
});
