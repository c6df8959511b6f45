//! Case input/output: MATPOWER case parsing, partition files, CSV and
//! plot-data serialization.

mod matpower;
mod partition;
mod report;

pub use matpower::{parse_case, parse_case_file, write_case, CaseError, GenCostRow, RawBranch,
    RawBus, RawCase, RawGen};
pub use partition::{fallback_partition, parse_partition, write_partition, PartitionError,
    PartitionSpec};
pub use report::{write_plot_data, write_report, PlotSeries, ReportRow};
