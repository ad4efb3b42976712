#![no_main]

use libfuzzer_sys::fuzz_target;
use sensopt::data::{covariance_from_csv, covariance_to_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(cov) = covariance_from_csv(data) {
        let text = covariance_to_csv(&cov);
        let again = covariance_from_csv(text.as_bytes()).unwrap();
        assert_eq!(again.names(), cov.names());
        assert_eq!(again.sigma(), cov.sigma());
    }
});
