//! Prompt templates, embedded from `templates/` at compile time.
//!
//! Substitution is literal and single-pass: placeholder tokens are replaced
//! with their values exactly once and substituted text is never rescanned,
//! so payloads containing `{{ ... }}` pass through untouched.
//!
//! The appendix templates are transcribed verbatim, including their quirks:
//! the zero-shot template heads blocks with `##` while the few-shot demo
//! blocks use `#`, and the few-shot preamble joins two sentences without a
//! space ("assistant.You"). Goldens follow each template's own text.

pub const ZERO_SHOT: &str = include_str!("../../templates/zero_shot.txt");
pub const URIAL_FEWSHOT: &str = include_str!("../../templates/urial_fewshot.txt");
pub const FEWSHOT_DEMO: &str = include_str!("../../templates/fewshot_demo.txt");
pub const URIAL_SUMMARY: &str = include_str!("../../templates/urial_summary.txt");
pub const SUMMARY_DEMO: &str = include_str!("../../templates/summary_demo.txt");

pub const JUDGE_QUALITY: &str = include_str!("../../templates/judge_quality.txt");
pub const JUDGE_MISSINGNESS: &str = include_str!("../../templates/judge_missingness.txt");
pub const JUDGE_STANCE: &str = include_str!("../../templates/judge_stance.txt");
pub const JUDGE_SUMMARIZE: &str = include_str!("../../templates/judge_summarize.txt");
pub const JUDGE_STRUCTURAL: &str = include_str!("../../templates/judge_structural.txt");

/// Replace `{{ name }}` tokens in a single left-to-right pass.
pub fn fill(template: &str, substitutions: &[(&str, &str)]) -> String {
    let tokens: Vec<(String, &str)> = substitutions
        .iter()
        .map(|(name, value)| (format!("{{{{ {name} }}}}"), *value))
        .collect();
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    loop {
        let next = tokens
            .iter()
            .filter_map(|(token, value)| rest.find(token).map(|pos| (pos, token, *value)))
            .min_by_key(|(pos, _, _)| *pos);
        match next {
            Some((pos, token, value)) => {
                out.push_str(&rest[..pos]);
                out.push_str(value);
                rest = &rest[pos + token.len()..];
            }
            None => {
                out.push_str(rest);
                return out;
            }
        }
    }
}
