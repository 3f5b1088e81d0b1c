use std::collections::BTreeSet;

use serde_json::Value;
use spinrelax::deck;

fn schema() -> Value {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/schema/deck.schema.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Object schema at a section path such as `coupling[].stevens_derivatives[]`.
fn section<'a>(root: &'a Value, path: &str) -> &'a Value {
    let mut node = root;
    for part in path.split('.').filter(|p| !p.is_empty()) {
        let (name, array) = match part.strip_suffix("[]") {
            Some(n) => (n, true),
            None => (part, false),
        };
        node = &node["properties"][name];
        if array {
            node = &node["items"];
        }
        assert!(node.is_object(), "schema has no section {path}");
    }
    node
}

#[test]
fn schema_lists_exactly_the_accepted_keys() {
    let root = schema();
    for (path, keys) in deck::known_keys() {
        let node = section(&root, path);
        assert_eq!(node["additionalProperties"], Value::Bool(false), "{path} must reject unknown keys");
        let listed: BTreeSet<&str> = node["properties"].as_object().unwrap().keys().map(String::as_str).collect();
        let accepted: BTreeSet<&str> = keys.iter().copied().collect();
        assert_eq!(listed, accepted, "keys of `{path}`");
    }
}

#[test]
fn schema_defaults_match_resolved_defaults() {
    let root = schema();
    let cfg = deck::parse_str(
        "[spin]\ntwo_j = 1\ng_j = 2.0\n[bath]\nmodes_cm1 = [5.0]\n[sweep]\ntemperatures_K = [1.0]\n",
        std::path::Path::new("."),
    )
    .unwrap();
    let num = |path: &str, key: &str| section(&root, path)["properties"][key]["default"].as_f64().unwrap();
    assert_eq!(num("numerics", "secular_tol_cm1"), cfg.numerics.secular_tol_cm1);
    assert_eq!(num("numerics", "regularizer_cm1"), cfg.numerics.regularizer_cm1);
    assert_eq!(num("numerics", "drop_threshold_per_s"), cfg.numerics.drop_threshold_per_s);
    assert_eq!(num("numerics", "workers") as usize, cfg.numerics.workers);
    assert_eq!(num("bath.broadening", "width_cm1"), cfg.bath.broadening.width_cm1);
    assert_eq!(num("bath.broadening", "cutoff_sigmas"), cfg.bath.broadening.cutoff_sigmas);
    let s = |path: &str, key: &str| section(&root, path)["properties"][key]["default"].clone();
    assert_eq!(s("bath.broadening", "kind"), Value::from(cfg.bath.broadening.kind.as_str()));
    assert_eq!(s("output", "dir"), Value::from(deck::DEFAULT_OUTPUT_DIR));
    assert_eq!(s("output", "dir"), Value::from(cfg.output.dir.as_str()));
    assert_eq!(s("numerics", "channels"), Value::from(cfg.numerics.channels.clone()));
    assert_eq!(s("fit", "quantities"), Value::from(cfg.fit.quantities.clone()));
    assert_eq!(cfg.sweep.orders, vec![2, 4]);
    assert_eq!(s("sweep", "orders"), Value::from("both"));
    let fit_enum = &section(&root, "fit")["properties"]["quantities"]["items"]["enum"];
    assert_eq!(fit_enum, &Value::from(deck::FIT_QUANTITIES.to_vec()));
}
