//! Judge prompt rendering and `<answer>` parsing.
//!
//! The model reasons inside `<think>` tags and then answers with one JSON
//! object inside `<answer>` tags. Pointwise answers map every dimension to a
//! two-decimal score; pairwise answers map it to `"A"`, `"B"` or `"TIE"`.

use std::fmt::Write as _;

use prefscore_core::calibration::ScoreSpan;
use prefscore_core::judge::{ParseError, Verdict};
use prefscore_core::{DimensionSet, Outcome};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    Pointwise,
    Pairwise,
}

/// How forgiving [`parse_response`] is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strictness {
    /// Requires the `<answer>` block; used for the reward's format term.
    #[default]
    Strict,
    /// Falls back to the last `{...}` object when the tags are missing.
    Lenient,
}

const ROLE: &str = "You are an experienced critic of traditional painting and its aesthetics.";

fn fmt_score(v: f64) -> String {
    format!("{v:.2}")
}

fn criteria_line(dims: &DimensionSet) -> String {
    let mut s = String::new();
    for (i, d) in dims.iter().enumerate() {
        if i > 0 {
            s.push_str("  ");
        }
        let _ = write!(s, "{}) {}", i + 1, d);
    }
    s
}

fn schema(mode: PromptMode, dims: &DimensionSet, span: ScoreSpan) -> String {
    let value = match mode {
        PromptMode::Pointwise => format!("<{}-{}>", fmt_score(span.low), fmt_score(span.high)),
        PromptMode::Pairwise => "\"A\"/\"B\"/\"TIE\"".to_string(),
    };
    let body: Vec<String> = dims.iter().map(|d| format!("\"{d}\": {value}")).collect();
    format!("{{{}}}", body.join(", "))
}

/// Prompt text for one query. The pairwise variant shows the two images in
/// order, the first as A and the second as B.
pub fn render_prompt(mode: PromptMode, dims: &DimensionSet, span: ScoreSpan) -> String {
    let n = dims.len();
    let task = match mode {
        PromptMode::Pointwise => format!(
            "Score this painting on {n} criteria. Each score is a float between {lo} and {hi} with two decimal places ({lo} = poor, {mid} = moderate, {hi} = excellent).",
            lo = fmt_score(span.low),
            mid = fmt_score(0.5 * (span.low + span.high)),
            hi = fmt_score(span.high),
        ),
        PromptMode::Pairwise => format!(
            "Compare two paintings (A is the first image, B is the second image) on {n} criteria. For every criterion answer \"A\" when the first painting is better, \"B\" when the second is better, or \"TIE\" when neither is better."
        ),
    };
    format!(
        "{ROLE}\n{task}\n{}\nReason step by step inside <think> </think> tags, then give the final answer as valid JSON inside <answer> </answer> tags:\n{}",
        criteria_line(dims),
        schema(mode, dims, span)
    )
}

/// Renders a user-supplied template. `{criteria}`, `{schema}`, `{low}`,
/// `{high}` and `{count}` are substituted; everything else is kept verbatim.
pub fn render_template(template: &str, mode: PromptMode, dims: &DimensionSet, span: ScoreSpan) -> String {
    template
        .replace("{criteria}", &criteria_line(dims))
        .replace("{schema}", &schema(mode, dims, span))
        .replace("{low}", &fmt_score(span.low))
        .replace("{high}", &fmt_score(span.high))
        .replace("{count}", &dims.len().to_string())
}

fn answer_block(raw: &str) -> Option<&str> {
    let start = raw.rfind("<answer>")? + "<answer>".len();
    let end = raw[start..].find("</answer>")? + start;
    Some(&raw[start..end])
}

fn last_object(raw: &str) -> Option<&str> {
    let end = raw.rfind('}')?;
    let mut depth = 0i32;
    for (i, c) in raw[..=end].char_indices().rev() {
        match c {
            '}' => depth += 1,
            '{' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&raw[i..=end]);
                }
            }
            _ => {}
        }
    }
    None
}

fn number(key: &str, v: &Value) -> Result<f64, ParseError> {
    let x = match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse::<f64>().ok(),
        _ => None,
    };
    x.filter(|x| x.is_finite()).ok_or_else(|| ParseError::NonNumeric { key: key.to_string() })
}

fn label(key: &str, v: &Value) -> Result<Outcome, ParseError> {
    let text = match v {
        Value::String(s) => s.trim().to_ascii_uppercase(),
        other => other.to_string(),
    };
    match text.as_str() {
        "A" => Ok(Outcome::AWins),
        "B" => Ok(Outcome::BWins),
        "TIE" => Ok(Outcome::Tie),
        _ => Err(ParseError::BadLabel { key: key.to_string(), value: text }),
    }
}

/// Extracts the last `<answer>` block and validates it against `dims`.
/// Extra keys are ignored.
pub fn parse_response(
    raw: &str,
    mode: PromptMode,
    dims: &DimensionSet,
    span: ScoreSpan,
    strictness: Strictness,
) -> Result<Verdict, ParseError> {
    let body = match (answer_block(raw), strictness) {
        (Some(b), _) => b,
        (None, Strictness::Lenient) => last_object(raw).ok_or(ParseError::MissingAnswer)?,
        (None, Strictness::Strict) => return Err(ParseError::MissingAnswer),
    };
    let value: Value = serde_json::from_str(body.trim()).map_err(|e| ParseError::InvalidJson(e.to_string()))?;
    let Value::Object(map) = value else {
        return Err(ParseError::InvalidJson("answer is not a JSON object".into()));
    };
    let get = |d: &str| map.get(d).ok_or_else(|| ParseError::MissingKey(d.to_string()));
    match mode {
        PromptMode::Pointwise => {
            let mut scores = Vec::with_capacity(dims.len());
            for d in dims.iter() {
                let v = number(d.as_str(), get(d.as_str())?)?;
                if !span.contains(v) {
                    return Err(ParseError::OutOfRange { key: d.to_string(), value: v, low: span.low, high: span.high });
                }
                scores.push(v);
            }
            Ok(Verdict::Pointwise(scores))
        }
        PromptMode::Pairwise => {
            let outcomes = dims.iter().map(|d| label(d.as_str(), get(d.as_str())?)).collect::<Result<_, _>>()?;
            Ok(Verdict::Pairwise(outcomes))
        }
    }
}
