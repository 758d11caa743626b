use alloc::string::String;

/// Errors raised by the core pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("channel mismatch between layer {layer} ({found}) and its input ({expected})")]
    ChannelMismatch {
        layer: usize,
        expected: usize,
        found: usize,
    },
    #[error("input width {width} px is not a multiple of the total stride {multiple}")]
    IndivisibleInput { width: usize, multiple: usize },
    #[error("window of width {width_m} m exceeds the grid extent {extent_m} m")]
    WindowTooLarge { width_m: f64, extent_m: f64 },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("unknown sensor id {0}")]
    UnknownSensor(u32),
    #[error("dataset access failed: {0}")]
    Dataset(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
