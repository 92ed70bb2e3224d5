//! Case files, time-series CSV and plot output.

pub mod case;
pub mod csv;
pub mod plot;

pub use self::csv::write_timeseries_csv;
pub use case::{assemble, load_case_file, parse_case, write_case_file, CaseFile, Model};
pub use plot::emit_plots;
