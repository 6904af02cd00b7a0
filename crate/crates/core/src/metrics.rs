//! Call success rate: successful calls over all calls.

use serde::{Deserialize, Serialize};

use crate::log_model::{ApiCallRecord, OutcomeLabel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessRateReport {
    pub call_number: u64,
    pub call_success: u64,
    pub sr: f64,
}

impl SuccessRateReport {
    pub fn from_counts(call_success: u64, call_number: u64) -> Self {
        debug_assert!(call_success <= call_number);
        let sr = if call_number == 0 {
            0.0
        } else {
            call_success as f64 / call_number as f64
        };
        SuccessRateReport {
            call_number,
            call_success,
            sr,
        }
    }
}

pub fn compute_sr_labels<'a, I>(outcomes: I) -> SuccessRateReport
where
    I: IntoIterator<Item = &'a OutcomeLabel>,
{
    let (mut ok, mut total) = (0, 0);
    for o in outcomes {
        total += 1;
        ok += u64::from(o.is_right());
    }
    SuccessRateReport::from_counts(ok, total)
}

pub fn compute_sr<'a, I>(records: I) -> SuccessRateReport
where
    I: IntoIterator<Item = &'a ApiCallRecord>,
{
    compute_sr_labels(records.into_iter().map(|r| &r.outcome))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcomes(right: usize, total: usize) -> Vec<OutcomeLabel> {
        (0..total)
            .map(|i| if i < right { OutcomeLabel::Right } else { OutcomeLabel::ErrorCode("E".into()) })
            .collect()
    }

    #[test]
    fn baseline_fixture() {
        let r = compute_sr_labels(&outcomes(232, 1000));
        assert_eq!((r.call_success, r.call_number), (232, 1000));
        assert_eq!(r.sr, 0.232);
    }

    #[test]
    fn edges() {
        assert_eq!(compute_sr_labels(&[]).sr, 0.0);
        assert_eq!(compute_sr_labels(&outcomes(5, 5)).sr, 1.0);
        assert_eq!(compute_sr_labels(&outcomes(3, 4)).sr, 0.75);
    }
}
