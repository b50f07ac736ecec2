//! Line-oriented parameter tables: `type-id<TAB>pattern<TAB>value`.
//!
//! `# source:` and `# version:` comment lines set the provenance attached to
//! every following row; a row seen before both are set is an error.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamRow {
    pub id: String,
    pub pattern: String,
    pub value: f64,
    pub source: String,
    pub version: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamTable {
    pub name: String,
    pub rows: Vec<ParamRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TableError {
    #[error("{table}:{line}: {msg}")]
    Malformed {
        table: String,
        line: usize,
        msg: String,
    },
    #[error("{table}: missing parameter '{id}'")]
    Missing { table: String, id: String },
}

impl ParamTable {
    pub fn parse(name: &str, text: &str) -> Result<ParamTable, TableError> {
        let bad = |line: usize, msg: &str| TableError::Malformed {
            table: name.to_string(),
            line,
            msg: msg.to_string(),
        };
        let mut source = None;
        let mut version = None;
        let mut rows = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let trimmed = raw.trim_end();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(comment) = trimmed.strip_prefix('#') {
                let comment = comment.trim();
                if let Some(s) = comment.strip_prefix("source:") {
                    source = Some(s.trim().to_string());
                } else if let Some(v) = comment.strip_prefix("version:") {
                    version = Some(v.trim().to_string());
                }
                continue;
            }
            let fields: Vec<&str> = trimmed.split('\t').collect();
            if fields.len() != 3 {
                return Err(bad(line, "expected three tab-separated fields"));
            }
            let value: f64 = fields[2]
                .trim()
                .parse()
                .map_err(|_| bad(line, "value is not a number"))?;
            if !value.is_finite() {
                return Err(bad(line, "value is not finite"));
            }
            let (Some(source), Some(version)) = (&source, &version) else {
                return Err(bad(line, "row before '# source:' and '# version:' headers"));
            };
            rows.push(ParamRow {
                id: fields[0].trim().to_string(),
                pattern: fields[1].trim().to_string(),
                value,
                source: source.clone(),
                version: version.clone(),
                line,
            });
        }
        Ok(ParamTable {
            name: name.to_string(),
            rows,
        })
    }

    /// One value per id; repeated ids must agree.
    pub fn values_by_id(&self) -> Result<BTreeMap<String, f64>, TableError> {
        let mut out: BTreeMap<String, f64> = BTreeMap::new();
        for row in &self.rows {
            if let Some(&prev) = out.get(&row.id) {
                if prev != row.value {
                    return Err(TableError::Malformed {
                        table: self.name.clone(),
                        line: row.line,
                        msg: format!("conflicting values for '{}'", row.id),
                    });
                }
            }
            out.insert(row.id.clone(), row.value);
        }
        Ok(out)
    }

    pub fn get(&self, id: &str) -> Result<f64, TableError> {
        self.rows
            .iter()
            .find(|r| r.id == id)
            .map(|r| r.value)
            .ok_or_else(|| TableError::Missing {
                table: self.name.clone(),
                id: id.to_string(),
            })
    }
}
