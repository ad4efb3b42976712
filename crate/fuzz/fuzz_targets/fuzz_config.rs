#![no_main]

use libfuzzer_sys::fuzz_target;
use sensopt::config::AnalysisConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = AnalysisConfig::from_toml_str(text) {
        // a validated config resolves and survives a round trip
        let roles = cfg.roles.roles().unwrap();
        assert_eq!(roles.x().len(), cfg.roles.xdot.len() + cfg.roles.xtilde.len());
        cfg.sensitivity_model().unwrap();
        let again = AnalysisConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(again.roles, cfg.roles);
    }
});
