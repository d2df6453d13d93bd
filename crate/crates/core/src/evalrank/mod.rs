//! Held-out evaluation and date ranking: exact Mann-Whitney AUC, thresholded
//! accuracy, per-class reports, and the all-pairs soft-Borda ranking.

mod export;
mod metrics;
mod ranking;
mod report;

pub use export::{
    export_ranking, export_report, parse_ranking_csv, parse_report_csv, ranking_to_csv,
    ranking_to_svg, report_to_csv, ExportFormat, OVERALL_ROW, RANKING_HEADER, REPORT_HEADER,
};
pub use metrics::{accuracy, auc};
pub use ranking::{rank_dates, rank_from_pairwise, tag_periods, weekday_tag, RankingEntry};
pub use report::{
    evaluate_scores, evaluate_split, score_pairs, ClassMetrics, EvalReport, ScoredPairs,
};
