//! Default prompt templates. Each can be replaced at run time by a file
//! with the same `{placeholder}` slots.

/// Judge prompt: `{question}`, `{prediction}`, `{ground_truth}`.
pub const JUDGE: &str = include_str!("../assets/judge_prompt.txt");

/// Chain-of-thought completion prompt: `{question}`, `{answer}`, `{steps}`.
pub const COT: &str = include_str!("../assets/cot_prompt.txt");

/// Inference-time instruction appended to user questions: `{question}`.
pub const THINK: &str = include_str!("../assets/think_prompt.txt");

/// Substitutes every `{key}` in a single pass; substituted values are not
/// re-scanned, and unknown placeholders are left as they are.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let hit = after.find('}').and_then(|close| {
            let key = &after[..close];
            vars.iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| (close, *v))
        });
        match hit {
            Some((close, value)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}
