//! Every bundled scenario file parses and validates.

use std::path::Path;

use slide_core::Scenario;

#[test]
fn bundled_scenarios_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_none_or(|e| e != "json") {
            continue;
        }
        let sc = Scenario::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let params = sc.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(Some(sc.name.as_str()), path.file_stem().and_then(|s| s.to_str()));
        assert!(params.modulus > 3 * params.n as u64 * params.d);
        seen += 1;
    }
    assert!(seen >= 10, "only {seen} scenarios");
}
