//! Reference controllers used for comparison runs.

mod bbr_lite;
mod cubic;
mod fixed;

pub use bbr_lite::{BbrLite, BbrLiteParams, PACING_GAIN_CYCLE};
pub use cubic::{cubic_window, Cubic, CubicParams};
pub use fixed::FixedWindow;
