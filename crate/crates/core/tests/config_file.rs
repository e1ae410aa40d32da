use sis_core::config::RunConfig;

#[test]
fn shipped_unicycle_config_matches_builtin_defaults() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/unicycle.json")).unwrap();
    assert_eq!(RunConfig::from_json(&text).unwrap(), RunConfig::default());
}
