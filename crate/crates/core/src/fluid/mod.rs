//! Fluid reasoning: text-rendered progressive matrices and four-term
//! verbal analogies.

pub mod analogy;
pub mod rpm;

pub use analogy::{
    analogy_accuracy, analogy_candidate_scores, analogy_prompt_accuracy, load_analogy_items,
    parse_analogy_choice, parse_analogy_items, surprisal_text, AnalogyItem, AnalogyMethod,
    AnalogyScore, COS_MUL_EPSILON,
};
pub use rpm::{
    check_rules, generate_rpm_items, load_rpm_items, parse_rendered_context, parse_rpm_items,
    render_rpm_prompt, render_rpm_candidates, score_rpm, score_rpm_with, write_rpm_items,
    Attribute, Cell, RenderOptions, Rule, RuleSet, RpmItem, RpmScore, RpmVerdict,
    DEFAULT_RPM_INSTRUCTION,
};

/// Index of the largest score; ties resolve to the lowest index and are
/// reported. `None` if any score is missing or non-finite.
pub(crate) fn argmax_lowest(scores: &[f64]) -> Option<(usize, bool)> {
    if scores.is_empty() || scores.iter().any(|s| !s.is_finite()) {
        return None;
    }
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    let tied = scores.iter().filter(|&&s| s == scores[best]).count() > 1;
    Some((best, tied))
}
