//! Post-processing, event decoding and event-based collar F1.

mod events;
mod median;
mod metric;

pub use events::{decode_events, Event, EventList};
pub use median::{binarize, median_filter, median_filter_binary, median_kernel_size};
pub use metric::{
    collar_f1, match_greedy, match_optimal, ClassMetrics, CollarParams, CountAccumulator, MetricReport,
};
