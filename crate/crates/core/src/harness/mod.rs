//! Data ingestion, preprocessing, experiment orchestration and reporting.

mod data;
mod experiment;
mod plot;

pub use data::{
    apply_scale, ensemble_reduced_intervals, evaluate_mae, load_csv, load_csv_auto, load_features,
    load_uci_abalone, network_mae, read_header, rescale_targets, split, std_dev,
    write_interval_csv, write_labeled_csv, write_trace_csv, CsvSchema, RescaleParams, SplitSpec,
    TargetColumns,
};
pub use experiment::{
    aggregate, mean_ste, read_aggregate_csv, read_results_csv, run_and_write, run_experiment,
    write_aggregate_csv, write_results_csv, AggregateRow, ExperimentConfig, ExperimentReport,
    HyperSearch, ResultsRow, Split, AGGREGATE_COLUMNS, RESULTS_COLUMNS, RESULTS_FORMAT_VERSION,
};
pub use plot::render_svg;
