//! Input statistics, realignment and the boundary/input alignment diagnostic.

mod align;
mod reservoir;
mod running;

pub use align::{
    compute_iou, percentile_interval, realign_reset, AlignmentReport, AlignmentRow, Interval,
    ALIGNMENT_CSV_HEADER, MIN_PERCENTILE_SAMPLES, MIN_REALIGN_STD, SIGMA_MULTIPLIER,
};
pub use reservoir::{Reservoir, DEFAULT_CAPACITY};
pub use running::{batch_moments, update_stats, RunningStats, DEFAULT_MOMENTUM};
