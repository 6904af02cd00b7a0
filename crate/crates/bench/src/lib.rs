//! Shared inputs for the benchmarks.

use apifk_core::log_model::ApiCallRecord;
use apifk_core::simulator::{generate, Scenario};

/// Deterministic SMS-scenario log of `n` records.
pub fn sms_log(n: usize) -> Vec<ApiCallRecord> {
    generate(&Scenario::sms(42), n).expect("built-in scenario is valid")
}

/// Values of one parameter across `records`.
pub fn values_of<'a>(records: &'a [ApiCallRecord], api: &str, param: &str) -> Vec<&'a str> {
    records
        .iter()
        .filter(|r| r.api == api)
        .filter_map(|r| r.param(param))
        .collect()
}
