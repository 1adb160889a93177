pub mod config;
pub mod dump;
pub mod runlog;
pub mod tables;

pub use config::{parse_config, Command, OffsetPolicy, RunConfig};
pub use dump::{read_field_dump, write_field_dump, FieldDump};
pub use runlog::RunLog;
pub use tables::{
    emit_convergence_csv, emit_convergence_plot_data, emit_fit_table_csv, emit_history_csv, emit_slice_csv,
    read_convergence_csv, read_history_csv, read_slice_csv, ConvergenceRow, ConvergenceTable,
};
