#![no_main]

use libfuzzer_sys::fuzz_target;
use sensopt::data::Dataset;

fuzz_target!(|data: &[u8]| {
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
});
