//! `{{name}}` placeholder scanning and exact-token substitution.

use std::collections::BTreeSet;

use super::{ParameterValuation, TemplateError};

/// A placeholder occurrence: byte span of the whole `{{ name }}` token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Placeholder {
    pub name: String,
    pub start: usize,
    pub end: usize,
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// All placeholders in `text`, in order. Whitespace inside the braces is
/// tolerated; `{{` not followed by an identifier and `}}` is left alone.
pub fn placeholders(text: &str) -> Vec<Placeholder> {
    let mut out = Vec::new();
    let mut cursor = 0;
    while let Some(rel) = text[cursor..].find("{{") {
        let start = cursor + rel;
        let inner_start = start + 2;
        match text[inner_start..].find("}}") {
            Some(close_rel) => {
                let inner = &text[inner_start..inner_start + close_rel];
                let name = inner.trim();
                if is_identifier(name) {
                    let end = inner_start + close_rel + 2;
                    out.push(Placeholder {
                        name: name.to_string(),
                        start,
                        end,
                    });
                    cursor = end;
                } else {
                    cursor = start + 1;
                }
            }
            None => break,
        }
    }
    out
}

pub fn placeholder_names(text: &str) -> BTreeSet<String> {
    placeholders(text).into_iter().map(|p| p.name).collect()
}

/// True when the text still carries a `{{` or `}}` marker.
pub fn has_markers(text: &str) -> bool {
    text.contains("{{") || text.contains("}}")
}

/// Substitute every placeholder by the canonical rendering of its value.
/// Text outside placeholders is copied byte for byte.
pub fn render(text: &str, valuation: &ParameterValuation) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(text.len() + 16);
    let mut last = 0;
    for p in placeholders(text) {
        let value = valuation
            .get(&p.name)
            .ok_or_else(|| TemplateError::UndeclaredPlaceholder {
                name: p.name.clone(),
                location: "render".into(),
            })?;
        out.push_str(&text[last..p.start]);
        out.push_str(&value.to_string());
        last = p.end;
    }
    out.push_str(&text[last..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::template::Value;

    #[test]
    fn scans_in_order() {
        let ps = placeholders("a {{p1}} b {{ p2 }} c {{p1}}");
        let names: Vec<_> = ps.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, ["p1", "p2", "p1"]);
    }

    #[test]
    fn ignores_non_identifier_braces() {
        assert!(placeholders("{{1, 2}} and {{}}").is_empty());
        assert!(placeholders("{{p1").is_empty());
    }

    #[test]
    fn placeholder_free_text_is_identity() {
        let v = ParameterValuation::from_iter([("p".to_string(), Value::Int(3))]);
        let text = "def f(x):\n    return {x: 1}[x]\n";
        assert_eq!(render(text, &v).unwrap(), text);
    }

    #[test]
    fn renders_negative_and_strings() {
        let v = ParameterValuation::from_iter([
            ("n".to_string(), Value::Int(-4)),
            ("s".to_string(), Value::Str("ab c".into())),
        ]);
        assert_eq!(render("[{{n}}|{{s}}]", &v).unwrap(), "[-4|ab c]");
    }

    #[test]
    fn missing_value_is_an_error() {
        let v = ParameterValuation::new();
        assert!(matches!(
            render("{{p3}}", &v),
            Err(TemplateError::UndeclaredPlaceholder { .. })
        ));
    }
}
