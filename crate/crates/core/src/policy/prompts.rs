use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PolicyError;

pub const RULE_GRAMMAR: &str = "\
rule    := or
or      := and ('or' and)*
and     := not ('and' not)*
not     := 'not' not | cmp
cmp     := sum (('<' | '<=' | '=' | '!=' | '>=' | '>') sum)?
sum     := product (('+' | '-') product)*
product := unary (('*' | '/') unary)*
unary   := '-' unary | primary
primary := number | 'true' | 'false' | 'desc(' name ')' | 'count(' pattern ')' | '(' rule ')'
pattern := SMILES-like substructure, e.g. [O;H1]c, C(=O)[O;H1], [N;+1](=O)[O;-1]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TemplateId {
    P0,
    Ground,
    Pfix,
    Expand,
}

impl TemplateId {
    fn file_name(self) -> &'static str {
        match self {
            TemplateId::P0 => "p0.txt",
            TemplateId::Ground => "ground.txt",
            TemplateId::Pfix => "pfix.txt",
            TemplateId::Expand => "expand.txt",
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TemplateId::P0 => "P0",
            TemplateId::Ground => "Ground",
            TemplateId::Pfix => "Pfix",
            TemplateId::Expand => "Expand",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Hole(String),
}

/// Prompt text with `{name}` placeholders; `{{` and `}}` are literal braces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    segments: Vec<Segment>,
}

impl PromptTemplate {
    pub fn parse(id: TemplateId, text: &str) -> Result<Self, PolicyError> {
        let err = |msg: String| PolicyError::Template { id, msg };
        let mut segments = Vec::new();
        let mut buf = String::new();
        let mut chars = text.char_indices().peekable();
        while let Some((i, c)) = chars.next() {
            match c {
                '{' if chars.peek().map(|p| p.1) == Some('{') => {
                    chars.next();
                    buf.push('{');
                }
                '}' if chars.peek().map(|p| p.1) == Some('}') => {
                    chars.next();
                    buf.push('}');
                }
                '{' => {
                    let mut name = String::new();
                    loop {
                        match chars.next() {
                            Some((_, '}')) => break,
                            Some((_, ch)) if ch.is_ascii_alphanumeric() || ch == '_' => name.push(ch),
                            _ => return Err(err(format!("bad placeholder at byte {i}"))),
                        }
                    }
                    if name.is_empty() {
                        return Err(err(format!("empty placeholder at byte {i}")));
                    }
                    segments.push(Segment::Text(std::mem::take(&mut buf)));
                    segments.push(Segment::Hole(name));
                }
                '}' => return Err(err(format!("unmatched '}}' at byte {i}"))),
                _ => buf.push(c),
            }
        }
        segments.push(Segment::Text(buf));
        Ok(PromptTemplate { id, segments })
    }

    pub fn placeholders(&self) -> BTreeSet<&str> {
        self.segments
            .iter()
            .filter_map(|s| match s {
                Segment::Hole(n) => Some(n.as_str()),
                Segment::Text(_) => None,
            })
            .collect()
    }

    /// Fills every placeholder; a placeholder without a value is an error.
    /// Values are inserted verbatim and never re-scanned.
    pub fn render(&self, vars: &[(&str, &str)]) -> Result<String, PolicyError> {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => out.push_str(t),
                Segment::Hole(name) => {
                    let value = vars
                        .iter()
                        .find(|(k, _)| k == name)
                        .map(|(_, v)| *v)
                        .ok_or_else(|| PolicyError::Template {
                            id: self.id,
                            msg: format!("no value for placeholder '{name}'"),
                        })?;
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub p0: PromptTemplate,
    pub ground: PromptTemplate,
    pub pfix: PromptTemplate,
    pub expand: PromptTemplate,
}

impl PromptSet {
    /// The templates shipped under `prompts/`.
    pub fn standard() -> Self {
        let t = |id, text| PromptTemplate::parse(id, text).expect("shipped template");
        PromptSet {
            p0: t(TemplateId::P0, include_str!("../../prompts/p0.txt")),
            ground: t(TemplateId::Ground, include_str!("../../prompts/ground.txt")),
            pfix: t(TemplateId::Pfix, include_str!("../../prompts/pfix.txt")),
            expand: t(TemplateId::Expand, include_str!("../../prompts/expand.txt")),
        }
    }

    /// Loads edited templates from `dir`; missing files fall back to the
    /// shipped text.
    pub fn from_dir(dir: &Path) -> Result<Self, PolicyError> {
        let mut set = Self::standard();
        for id in [TemplateId::P0, TemplateId::Ground, TemplateId::Pfix, TemplateId::Expand] {
            let path = dir.join(id.file_name());
            if !path.exists() {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|e| PolicyError::Template {
                id,
                msg: format!("{}: {e}", path.display()),
            })?;
            let tpl = PromptTemplate::parse(id, &text)?;
            match id {
                TemplateId::P0 => set.p0 = tpl,
                TemplateId::Ground => set.ground = tpl,
                TemplateId::Pfix => set.pfix = tpl,
                TemplateId::Expand => set.expand = tpl,
            }
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_and_escape() {
        let t = PromptTemplate::parse(TemplateId::P0, "a {x} {{literal}} {y}").unwrap();
        assert_eq!(t.placeholders().into_iter().collect::<Vec<_>>(), ["x", "y"]);
        assert_eq!(t.render(&[("x", "1"), ("y", "{z}")]).unwrap(), "a 1 {literal} {z}");
        assert!(t.render(&[("x", "1")]).is_err());
        assert!(PromptTemplate::parse(TemplateId::P0, "{bad name}").is_err());
        assert!(PromptTemplate::parse(TemplateId::P0, "}").is_err());
    }

    #[test]
    fn shipped_templates_leave_no_holes() {
        let set = PromptSet::standard();
        for t in [&set.p0, &set.ground, &set.pfix, &set.expand] {
            let vars: Vec<(&str, &str)> = t.placeholders().into_iter().map(|n| (n, "v")).collect();
            let text = t.render(&vars).unwrap();
            let holes = text
                .match_indices('{')
                .filter(|(i, _)| {
                    let rest = &text[i + 1..];
                    let name: String = rest.chars().take_while(|c| c.is_ascii_alphanumeric() || *c == '_').collect();
                    !name.is_empty() && rest[name.len()..].starts_with('}')
                })
                .count();
            assert_eq!(holes, 0, "{}", t.id);
        }
        assert!(set.pfix.placeholders().contains("error"));
        assert!(set.pfix.placeholders().contains("position"));
    }
}
