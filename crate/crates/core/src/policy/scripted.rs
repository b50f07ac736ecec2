use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::molgraph::{canonical_smiles, parse_smiles};

use super::{PolicyError, PolicyProvider, PolicyRequest, RequestContext, RequestKind, SearchState};

/// One canned reply. String payloads are sent as-is inside a fence; other
/// JSON values are serialized first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRecord {
    pub kind: RequestKind,
    pub payload: serde_json::Value,
    /// For expand records: the state the search must be at. Molecules are
    /// compared canonically, feature sets as comma-joined names.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_state: Option<String>,
}

impl ScriptRecord {
    pub fn new(kind: RequestKind, payload: serde_json::Value) -> Self {
        ScriptRecord {
            kind,
            payload,
            expect_state: None,
        }
    }

    pub fn expecting(mut self, state: &str) -> Self {
        self.expect_state = Some(state.to_string());
        self
    }
}

/// Replays a fixed list of replies strictly in order and fails at the first
/// request that does not fit.
#[derive(Debug)]
pub struct ScriptedProvider {
    name: String,
    records: Vec<ScriptRecord>,
    cursor: Mutex<usize>,
}

fn normalize_state(text: &str) -> String {
    parse_smiles(text)
        .map(|m| canonical_smiles(&m))
        .unwrap_or_else(|_| text.to_string())
}

impl ScriptedProvider {
    pub fn from_records(records: Vec<ScriptRecord>) -> Self {
        ScriptedProvider {
            name: "scripted".to_string(),
            records,
            cursor: Mutex::new(0),
        }
    }

    /// Reads a JSON array of records.
    pub fn from_file(path: &Path) -> Result<Self, PolicyError> {
        let text = std::fs::read_to_string(path).map_err(|e| PolicyError::Script(format!("{}: {e}", path.display())))?;
        let records: Vec<ScriptRecord> =
            serde_json::from_str(&text).map_err(|e| PolicyError::Script(format!("{}: {e}", path.display())))?;
        let mut p = Self::from_records(records);
        p.name = format!(
            "scripted:{}",
            path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
        );
        Ok(p)
    }

    /// Records consumed so far.
    pub fn consumed(&self) -> usize {
        *self.cursor.lock().expect("script cursor")
    }

    pub fn remaining(&self) -> usize {
        self.records.len() - self.consumed()
    }
}

impl PolicyProvider for ScriptedProvider {
    fn id(&self) -> String {
        self.name.clone()
    }

    fn complete(&self, request: &PolicyRequest) -> Result<String, PolicyError> {
        let mut cursor = self.cursor.lock().expect("script cursor");
        let index = *cursor;
        let rec = self.records.get(index).ok_or(PolicyError::ScriptExhausted(index))?;
        if rec.kind != request.kind() {
            return Err(PolicyError::ScriptKindMismatch {
                index,
                expected: request.kind(),
                found: rec.kind,
            });
        }
        if let (Some(want), RequestContext::Expand { state, .. }) = (&rec.expect_state, &request.context) {
            let found = match state {
                SearchState::Optimization { smiles } => normalize_state(smiles),
                SearchState::Prediction { features } => features.join(","),
            };
            let want = match state {
                SearchState::Optimization { .. } => normalize_state(want),
                SearchState::Prediction { .. } => want.clone(),
            };
            if want != found {
                return Err(PolicyError::ScriptStateMismatch {
                    index,
                    expected: want,
                    found,
                });
            }
        }
        *cursor += 1;
        let body = match &rec.payload {
            serde_json::Value::String(s) => s.clone(),
            other => serde_json::to_string(other).expect("json value"),
        };
        Ok(format!("```\n{body}\n```\n"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::Policy;
    use std::sync::Arc;

    #[test]
    fn replays_in_order_then_fails() {
        let p = Arc::new(ScriptedProvider::from_records(vec![
            ScriptRecord::new(RequestKind::Ground, "desc(logp)".into()),
            ScriptRecord::new(RequestKind::Ground, "desc(tpsa)".into()),
        ]));
        let policy = Policy::new(p.clone());
        assert_eq!(policy.ground("a").unwrap(), "desc(logp)");
        assert_eq!(policy.ground("b").unwrap(), "desc(tpsa)");
        assert_eq!(policy.ground("c"), Err(PolicyError::ScriptExhausted(2)));
        assert_eq!(p.remaining(), 0);
    }

    #[test]
    fn kind_mismatch_is_loud() {
        let p = ScriptedProvider::from_records(vec![ScriptRecord::new(RequestKind::Expand, "[]".into())]);
        let err = Policy::new(Arc::new(p)).ground("a").unwrap_err();
        assert!(matches!(err, PolicyError::ScriptKindMismatch { index: 0, .. }));
    }
}
