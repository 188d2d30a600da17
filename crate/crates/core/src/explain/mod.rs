//! Global and local interpretability for trained models.

mod ale;
mod importance;
mod local;
mod render;

pub use ale::{ale_curve, AleCurve, DEFAULT_ALE_BINS};
pub use importance::{
    contaminate_response, contaminate_response_with, debias_scores, debias_scores_with, ghost_column, ghost_scores,
    ghost_scores_flagged, importance_report, kendall_tau, null_band, null_scores, FeatureImportance, ImportanceConfig,
    ImportanceReport, KendallTau, NullQuantiles, TauSign, MSE_FLOOR,
};
pub use local::{
    describe_condition, leaf_pvalues, local_explanation, shap_from_means, shap_linear, CoefficientTest, ExtremeRow,
    Extremes, LeafCoefficient, LeafPValues, LocalExplanation, PathCondition, ShapValues,
};
pub use render::{
    ale_csv, ale_svg, explanation_report, importance_csv, importance_svg, path_svg, render_tree, render_tree_svg,
    render_tree_text, ImportancePlot, TreeFormat,
};
