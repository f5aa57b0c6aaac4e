//! Accuracy, inverse-rank precision, superclass merging, stratified
//! subsets and reports.

mod metrics;
mod predictions;
mod report;

pub use crate::linker::VideoScores as Prediction;
pub use metrics::{
    average_precision, confusion_matrix, global_topk, mean_average_precision,
    mean_class_accuracy, mean_class_topk, rank_of, remap_to_superclasses, superclass_remap, top1,
    topk_hit, ClassMean, Confusion, NoTubeAp,
};
pub use predictions::{
    late_fusion, load_predictions, save_predictions, PredictionSet, PROB_SUM_TOLERANCE,
};
pub use report::{
    evaluate, load_report, percent, render_summary, render_table, save_report, stratified_report,
    EvalOptions, EvalReport, Stratum, StratumResult,
};
