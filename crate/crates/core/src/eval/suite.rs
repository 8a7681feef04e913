//! Loading test suites: JSONL or concatenated pretty-printed objects.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{CaseKind, GroundTruth, TestCase};
use crate::envelope::DEFAULT_HISTORY_CAP;
use crate::guardrails::ViolationCategory;
use crate::intent::IntentCategory;
use crate::payment::TransferDraft;

#[derive(Debug, thiserror::Error)]
pub enum SuiteError {
    #[error("cannot read suite file {path}: {source}")]
    FileUnreadable { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RejectedCase {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadedSuite {
    pub cases: Vec<TestCase>,
    pub rejected: Vec<RejectedCase>,
}

pub fn load_suite(path: &Path) -> Result<LoadedSuite, SuiteError> {
    let text = std::fs::read_to_string(path).map_err(|source| SuiteError::FileUnreadable {
        path: path.display().to_string(),
        source,
    })?;
    Ok(parse_suite(&text))
}

fn line_at(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

fn skip_ws(text: &str, mut pos: usize) -> usize {
    let bytes = text.as_bytes();
    while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
        pos += 1;
    }
    pos
}

fn offset_of(text: &str, line: usize, column: usize) -> usize {
    let start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (start + column.saturating_sub(1)).min(text.len())
}

/// Parses every case it can; the rest are reported with their line numbers.
pub fn parse_suite(text: &str) -> LoadedSuite {
    let text = repair_bracketed_objects(text);
    let mut out = LoadedSuite::default();
    let mut pos = 0;
    while pos < text.len() {
        let start = skip_ws(&text, pos);
        if start >= text.len() {
            break;
        }
        let rest = &text[start..];
        let mut stream = serde_json::Deserializer::from_str(rest).into_iter::<Value>();
        let line = line_at(&text, start);
        match stream.next() {
            Some(Ok(value)) => {
                pos = start + stream.byte_offset();
                match case_from_value(value, line) {
                    Ok(case) => out.cases.push(case),
                    Err(reason) => out.rejected.push(RejectedCase { line, reason }),
                }
            }
            Some(Err(e)) => {
                let err_line = line + e.line().saturating_sub(1);
                out.rejected.push(RejectedCase {
                    line: err_line,
                    reason: format!("malformed JSON: {e}"),
                });
                let err_at = start + offset_of(rest, e.line(), e.column());
                pos = text[err_at..].find('\n').map_or(text.len(), |i| err_at + i + 1);
            }
            None => break,
        }
    }
    out
}

fn string_end(bytes: &[u8], open: usize) -> Option<usize> {
    let mut i = open + 1;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            b'"' => return Some(i),
            _ => i += 1,
        }
    }
    None
}

/// Index of the `]` closing the `[` at `open`, skipping string contents.
fn matching_bracket(bytes: &[u8], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut i = open;
    while i < bytes.len() {
        match bytes[i] {
            b'"' => i = string_end(bytes, i)?,
            b'[' | b'{' => depth += 1,
            b']' | b'}' => {
                depth -= 1;
                if depth == 0 {
                    return (bytes[i] == b']').then_some(i);
                }
            }
            _ => {}
        }
        i += 1;
    }
    None
}

/// Rewrites `"transfers": [ "k": v, ... ]` into `"transfers": [ { "k": v, ... } ]`.
///
/// Published sample cases write a single transfer as bare members inside the
/// list. That is not JSON, so it is wrapped into an object before parsing.
pub fn repair_bracketed_objects(text: &str) -> String {
    let bytes = text.as_bytes();
    let mut out = String::with_capacity(text.len() + 8);
    let mut copied = 0;
    let mut search = 0;
    while let Some(found) = text[search..].find("\"transfers\"") {
        let key_end = search + found + "\"transfers\"".len();
        search = key_end;
        let colon = skip_ws(text, key_end);
        if bytes.get(colon) != Some(&b':') {
            continue;
        }
        let open = skip_ws(text, colon + 1);
        if bytes.get(open) != Some(&b'[') {
            continue;
        }
        let first = skip_ws(text, open + 1);
        if bytes.get(first) != Some(&b'"') {
            continue;
        }
        let Some(first_end) = string_end(bytes, first) else { continue };
        if bytes.get(skip_ws(text, first_end + 1)) != Some(&b':') {
            continue;
        }
        let Some(close) = matching_bracket(bytes, open) else { continue };
        out.push_str(&text[copied..=open]);
        out.push('{');
        out.push_str(&text[open + 1..close]);
        out.push('}');
        copied = close;
        search = close;
    }
    out.push_str(&text[copied..]);
    out
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawPrompt {
    message: String,
    #[serde(default)]
    language: crate::envelope::Language,
    #[serde(default)]
    past_message_histories: Vec<super::PastExchange>,
}

fn case_from_value(value: Value, line: usize) -> Result<TestCase, String> {
    let Value::Object(mut obj) = value else {
        return Err("case must be a JSON object".into());
    };
    let prompt: RawPrompt = serde_json::from_value(obj.remove("prompt").ok_or("missing `prompt`")?)
        .map_err(|e| format!("invalid prompt: {e}"))?;
    if prompt.past_message_histories.len() > DEFAULT_HISTORY_CAP {
        return Err(format!(
            "pastMessageHistories has {} turns; at most {DEFAULT_HISTORY_CAP} allowed",
            prompt.past_message_histories.len()
        ));
    }
    let Some(Value::Object(gt)) = obj.remove("ground_truth").or_else(|| obj.remove("groundTruth")) else {
        return Err("missing `ground_truth` object".into());
    };
    let kinds: Vec<CaseKind> = [
        (gt.contains_key("transfers"), CaseKind::Transfer),
        (gt.contains_key("intent"), CaseKind::Intent),
        (gt.contains_key("isSafe"), CaseKind::Guardrail),
        (gt.contains_key("expectedDocIds"), CaseKind::Faq),
    ]
    .into_iter()
    .filter_map(|(present, k)| present.then_some(k))
    .collect();
    let ground_truth = match kinds.as_slice() {
        [CaseKind::Transfer] => GroundTruth::Transfers(
            serde_json::from_value::<Vec<TransferDraft>>(gt["transfers"].clone())
                .map_err(|e| format!("invalid transfers: {e}"))?,
        ),
        [CaseKind::Intent] => {
            let label = gt["intent"].as_str().ok_or("intent must be a string")?;
            GroundTruth::Intent(label.parse::<IntentCategory>().map_err(|e| e.to_string())?)
        }
        [CaseKind::Guardrail] => {
            let is_safe = gt["isSafe"].as_bool().ok_or("isSafe must be a boolean")?;
            let violation: Option<ViolationCategory> = match gt.get("violation") {
                None | Some(Value::Null) => None,
                Some(v) => Some(serde_json::from_value(v.clone()).map_err(|e| format!("invalid violation: {e}"))?),
            };
            if is_safe == violation.is_some() {
                return Err("isSafe and violation disagree".into());
            }
            GroundTruth::Guardrail { is_safe, violation }
        }
        [CaseKind::Faq] => {
            let ids: Vec<String> = serde_json::from_value(gt["expectedDocIds"].clone())
                .map_err(|e| format!("invalid expectedDocIds: {e}"))?;
            if ids.is_empty() {
                return Err("expectedDocIds is empty".into());
            }
            GroundTruth::Faq { expected_doc_ids: ids }
        }
        [] => return Err("ground_truth names no known kind".into()),
        _ => return Err("ground_truth names more than one kind".into()),
    };
    let case_id = obj
        .get("caseId")
        .and_then(Value::as_str)
        .map(str::to_string)
        .unwrap_or_else(|| format!("line-{line}"));
    Ok(TestCase {
        case_id,
        line,
        message: prompt.message,
        language: prompt.language,
        history: prompt.past_message_histories,
        ground_truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repair_wraps_bare_members() {
        let fixed = repair_bracketed_objects(r#"{"transfers": [ "a": 1, "b": "x]" ]}"#);
        assert_eq!(fixed, r#"{"transfers": [{ "a": 1, "b": "x]" }]}"#);
        let v: Value = serde_json::from_str(&fixed).unwrap();
        assert_eq!(v["transfers"][0]["b"], "x]");
    }

    #[test]
    fn repair_leaves_valid_lists_alone() {
        for s in [r#"{"transfers": []}"#, r#"{"transfers": [{"a": 1}]}"#, r#"{"transfers": ["a", "b"]}"#] {
            assert_eq!(repair_bracketed_objects(s), s);
        }
    }

    #[test]
    fn malformed_line_is_reported_and_rest_kept() {
        let text = concat!(
            r#"{"prompt":{"message":"hi"},"ground_truth":{"intent":"CHAT"}}"#,
            "\n{not json\n",
            r#"{"prompt":{"message":"yo"},"ground_truth":{"intent":"CHAT"}}"#,
            "\n"
        );
        let s = parse_suite(text);
        assert_eq!(s.cases.len(), 2);
        assert_eq!(s.rejected.len(), 1);
        assert_eq!(s.rejected[0].line, 2);
        assert_eq!(s.cases[1].line, 3);
    }

    #[test]
    fn two_ground_truth_kinds_are_rejected() {
        let s = parse_suite(r#"{"prompt":{"message":"hi"},"ground_truth":{"intent":"CHAT","isSafe":true}}"#);
        assert!(s.cases.is_empty());
        assert!(s.rejected[0].reason.contains("more than one"));
    }

    #[test]
    fn unknown_intent_label_is_rejected() {
        let s = parse_suite(r#"{"prompt":{"message":"hi"},"ground_truth":{"intent":"SMALLTALK"}}"#);
        assert_eq!(s.rejected.len(), 1);
    }
}
