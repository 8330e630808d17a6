//! Raw records to scaled, masked, windowed samples.

pub mod batch;
pub mod dataset;
pub mod record;
pub mod regular;
pub mod scaler;
pub mod schema;
pub mod split;
pub mod window;

pub use batch::Batch;
pub use dataset::{prepare, PipelineOptions, PreparedDataset, Rejection, WindowedDataset};
pub use record::{read_records, write_records, DynamicRecord, IrregularDefectSeries, RejectReason, Visit};
pub use regular::{extract_features, filter_anomalies, regularize, RegularSeries};
pub use scaler::ScalerParams;
pub use schema::{FeatureLayout, FeatureSchema};
pub use split::{split_by_defect, Split, SplitAssignment};
pub use window::{apply_last_measured_replacement, make_windows, replace_after_last_measured, WindowSample};
