//! Post-hoc analytics over trajectories: behavior labels, ineffective
//! communication, batch statistics and communication graphs.

mod behavior;
mod classify;
mod graph;
mod ineffective;
mod report;
mod stats;

pub use behavior::{behavior_stats, label_messages, messages, RolePartition, RoleRow};
pub use classify::{
    classify_message, evaluate_classifier, parse_labels, score, Accuracy, BehaviorLabels, Classified, ClassifyError,
    Corpus, Evaluation, LabeledSample, Mismatch,
};
pub use graph::{comm_graph, CommGraph, GraphEdge, GraphNode};
pub use ineffective::{detect_ineffective, IneffectiveCounts, WINDOW_STEPS};
pub use report::{compare_steps, read_csv, steps_of, summarize, write_csv, ConditionSummary, CsvRow};
pub use stats::{t_upper_tail, two_sample_t, StatsSummary, TTestResult, TooFewSamples};
