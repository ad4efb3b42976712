//! The checks of the fuzz targets, run on the checked-in corpus and on
//! generated inputs.

use std::fs;
use std::path::Path;

use proptest::prelude::*;
use sensopt::config::AnalysisConfig;
use sensopt::data::{covariance_from_csv, covariance_to_csv, Dataset};

fn check_csv(data: &[u8]) {
    if let Ok(ds) = Dataset::from_csv(data, None) {
        let n = ds.n_rows();
        for name in ds.names() {
            let col = ds.column(name).unwrap();
            assert_eq!(col.len(), n);
            assert!(col.iter().all(|v| v.is_finite()));
        }
        if let Ok(cov) = ds.covariance() {
            assert_eq!(cov.dim(), ds.names().len());
        }
    }
}

fn check_config(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = AnalysisConfig::from_toml_str(text) {
        let roles = cfg.roles.roles().unwrap();
        assert_eq!(roles.x().len(), cfg.roles.xdot.len() + cfg.roles.xtilde.len());
        cfg.sensitivity_model().unwrap();
        let again = AnalysisConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(again.roles, cfg.roles);
    }
}

fn check_covariance(data: &[u8]) {
    if let Ok(cov) = covariance_from_csv(data) {
        let again = covariance_from_csv(covariance_to_csv(&cov).as_bytes()).unwrap();
        assert_eq!(again.names(), cov.names());
        assert_eq!(again.sigma(), cov.sigma());
    }
}

fn corpus(target: &str) -> Vec<Vec<u8>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut files: Vec<_> = fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert!(!files.is_empty(), "empty corpus {}", dir.display());
    files.iter().map(|p| fs::read(p).unwrap()).collect()
}

#[test]
fn corpus_replays_cleanly() {
    corpus("fuzz_csv_ingest").iter().for_each(|d| check_csv(d));
    corpus("fuzz_config").iter().for_each(|d| check_config(d));
    corpus("fuzz_covariance_file").iter().for_each(|d| check_covariance(d));
}

#[test]
fn corpus_seeds_parse_as_intended() {
    assert!(Dataset::from_csv(&corpus("fuzz_csv_ingest")[0][..], None).is_ok());
    let cfgs = corpus("fuzz_config");
    assert_eq!(cfgs.iter().filter(|c| AnalysisConfig::from_toml_str(std::str::from_utf8(c).unwrap()).is_ok()).count(), 4);
}

#[test]
fn awkward_names_round_trip() {
    let cov = covariance_from_csv("\"a,b\",\"q\"\"uote\"\n1,0.5\n0.5,2\n".as_bytes()).unwrap();
    assert_eq!(cov.names(), ["a,b", "q\"uote"]);
    check_covariance(covariance_to_csv(&cov).as_bytes());
}

/// Text built from CSV-ish fragments reaches deeper than uniform bytes.
fn csv_text() -> impl Strategy<Value = String> {
    let cell = prop_oneof![
        Just(String::new()),
        any::<f64>().prop_map(|v| v.to_string()),
        (-1e3f64..1e3).prop_map(|v| format!("{v:e}")),
        "[a-z\" ,.-]{0,4}",
    ];
    prop::collection::vec(prop::collection::vec(cell, 1..4), 1..6).prop_map(|rows| {
        rows.iter().map(|r| r.join(",")).collect::<Vec<_>>().join("\n")
    })
}

fn toml_text() -> impl Strategy<Value = String> {
    let names = |pat: &'static str| prop::collection::vec(pat, 0..3).prop_map(|v| format!("{v:?}"));
    let data = prop_oneof![
        4 => Just("csv = \"d.csv\"".to_string()),
        2 => (0usize..500).prop_map(|n| format!("covariance = \"c.csv\"\nn = {n}")),
        1 => Just(String::new()),
    ];
    let roles = (prop::option::of("[ZX]"), names("[XW]"), names("[SW]")).prop_map(|(z, xd, xt)| {
        let z = z.map(|z| format!("instrument = \"{z}\"\n")).unwrap_or_default();
        format!("outcome = \"Y\"\ntreatment = \"D\"\n{z}xdot = {xd}\nxtilde = {xt}\n")
    });
    let direct = ("direct_(ud|uy|uz|zy)", -1.2f64..1.2, -1.2f64..1.2)
        .prop_map(|(k, lo, hi)| format!("kind = \"{k}\"\nlo = {lo:?}\nhi = {hi:?}\n"));
    let comp = ("comp_(ud|uy|uy_cond_d)", names("[XW]"), names("[XW]"), -1.0f64..6.0)
        .prop_map(|(k, c, g, b)| format!("kind = \"{k}\"\ncompare = {c}\ngiven = {g}\nb = {b:?}\n"));
    let comp_iv = ("comp_(uz|zy)", "[XWS]", -1.0f64..6.0)
        .prop_map(|(k, c, b)| format!("kind = \"{k}\"\ncovariate = \"{c}\"\nb = {b:?}\n"));
    let junk = ("[a-z_]{1,10}", "[a-z]{1,6}", "[0-9.e-]{1,5}").prop_map(|(k, f, v)| format!("kind = \"{k}\"\n{f} = {v}\n"));
    let bound = prop_oneof![3 => direct, 3 => comp, 2 => comp_iv, 1 => junk].prop_map(|b| format!("[[bounds]]\n{b}"));
    let tail = prop_oneof![
        Just(String::new()),
        (0usize..50).prop_map(|n| format!("[grid]\nn_a = {n}\n")),
        ("(percentile|basic|bca|heuristic|oracle)", 0.0f64..1.2)
            .prop_map(|(m, l)| format!("[bootstrap]\nmethods = [\"{m}\"]\nlevel = {l:?}\nseed = 1\n")),
    ];
    (data, roles, prop::collection::vec(bound, 0..4), tail)
        .prop_map(|(d, r, b, t)| format!("[data]\n{d}\n[roles]\n{r}{}{t}", b.concat()))
}

proptest! {
    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
        check_csv(&bytes);
        check_config(&bytes);
        check_covariance(&bytes);
    }

    #[test]
    fn csv_like_text_never_panics(text in csv_text()) {
        check_csv(text.as_bytes());
        check_covariance(text.as_bytes());
    }

    #[test]
    fn config_like_text_never_panics(text in toml_text()) {
        check_config(text.as_bytes());
    }
}

#[test]
fn generated_configs_are_sometimes_valid() {
    use proptest::strategy::ValueTree;
    use proptest::test_runner::TestRunner;
    let mut runner = TestRunner::deterministic();
    let strat = toml_text();
    let valid = (0..2000)
        .filter(|_| AnalysisConfig::from_toml_str(&strat.new_tree(&mut runner).unwrap().current()).is_ok())
        .count();
    assert!(valid >= 20, "only {valid} of 2000 generated configs are valid");
}
