use std::ops::Range;

use serde::{Deserialize, Serialize};

/// Training interval followed by the position to forecast.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalWindow {
    pub train: Range<usize>,
    pub test: usize,
}

/// Every placement of a `window`-hour training interval followed by a test
/// point `horizon` hours after its end, advancing one hour at a time.
pub fn sliding_windows(series_length: usize, window: usize, horizon: usize) -> Vec<EvalWindow> {
    sliding_windows_from(series_length, window, horizon, 0)
}

/// Like [`sliding_windows`], restricted to test positions `>= first_test`.
/// Using the same `first_test` for several window sizes makes them forecast
/// the same points.
pub fn sliding_windows_from(
    series_length: usize,
    window: usize,
    horizon: usize,
    first_test: usize,
) -> Vec<EvalWindow> {
    if window == 0 || horizon == 0 {
        return Vec::new();
    }
    let lead = window + horizon - 1;
    (lead.max(first_test)..series_length)
        .map(|test| {
            let end = test + 1 - horizon;
            EvalWindow {
                train: end - window..end,
                test,
            }
        })
        .collect()
}
