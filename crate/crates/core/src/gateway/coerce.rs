//! Structured-output coercion: ask for a JSON object, parse leniently.

use serde_json::{Map, Value};
use std::collections::BTreeMap;

use super::{DecisionRequest, Record};

/// System message asking the model to answer with one JSON object.
pub fn system_prompt(req: &DecisionRequest) -> String {
    let mut out = String::new();
    out.push_str(&format!("You are a {}.\n\n", req.persona_role));
    out.push_str("Reply with a single JSON object and nothing else. The object must contain exactly these keys:\n");
    for key in &req.return_keys {
        out.push_str(&format!("- \"{key}\"\n"));
    }
    out.push_str("Every value must be a string unless a key explicitly asks for a list.\n");
    if !req.requirements.trim().is_empty() {
        out.push_str("\nRequirements:\n");
        out.push_str(req.requirements.trim());
        out.push('\n');
    }
    out
}

/// Extracts the outermost JSON object from free-form model output.
pub fn extract_object(text: &str) -> Option<Map<String, Value>> {
    if let Ok(Value::Object(map)) = serde_json::from_str::<Value>(text.trim()) {
        return Some(map);
    }
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    if end <= start {
        return None;
    }
    match serde_json::from_str::<Value>(&text[start..=end]) {
        Ok(Value::Object(map)) => Some(map),
        _ => None,
    }
}

/// Projects a parsed object onto the requested keys; absent keys become
/// empty strings and are listed in `missing`.
pub fn to_record(object: &Map<String, Value>, return_keys: &[String]) -> Record {
    let mut fields = BTreeMap::new();
    let mut missing = Vec::new();
    for key in return_keys {
        match object.get(key) {
            Some(Value::Null) | None => {
                fields.insert(key.clone(), String::new());
                missing.push(key.clone());
            }
            Some(value) => {
                fields.insert(key.clone(), value_to_string(value));
            }
        }
    }
    Record { fields, missing }
}

/// A record for output that could not be parsed at all.
pub fn empty_record(return_keys: &[String]) -> Record {
    Record {
        fields: return_keys
            .iter()
            .map(|k| (k.clone(), String::new()))
            .collect(),
        missing: return_keys.to_vec(),
    }
}

fn value_to_string(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extracts_object_wrapped_in_prose_and_fences() {
        let text = "Sure!\n```json\n{\"answer\": \"42\", \"reasoning\": \"6*7\"}\n```\nDone.";
        let obj = extract_object(text).unwrap();
        assert_eq!(obj["answer"], "42");
    }

    #[test]
    fn rejects_text_without_object() {
        assert!(extract_object("the answer is 42").is_none());
        assert!(extract_object("} {").is_none());
        assert!(extract_object("[1, 2]").is_none());
    }

    #[test]
    fn missing_keys_are_filled_and_flagged() {
        let obj = extract_object(r#"{"answer": 7}"#).unwrap();
        let keys = vec!["reasoning".to_string(), "answer".to_string()];
        let rec = to_record(&obj, &keys);
        assert_eq!(rec.fields["answer"], "7");
        assert_eq!(rec.fields["reasoning"], "");
        assert_eq!(rec.missing, vec!["reasoning".to_string()]);
    }

    #[test]
    fn non_string_values_are_rendered_as_json() {
        let obj = extract_object(r#"{"actions": [{"kind": "interact"}]}"#).unwrap();
        let rec = to_record(&obj, &["actions".to_string()]);
        assert_eq!(rec.fields["actions"], r#"[{"kind":"interact"}]"#);
    }
}
