use crate::exec::pyscan;

/// Contents of every triple-backtick block in order. An opening fence may
/// carry a language tag; an unterminated final block runs to end of text.
pub fn fenced_blocks(text: &str) -> Vec<&str> {
    let mut blocks = Vec::new();
    let mut open: Option<usize> = None;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        let trimmed = line.trim();
        match open {
            None if trimmed.starts_with("```") => open = Some(offset),
            Some(body) if trimmed == "```" => {
                blocks.push(strip_final_newline(&text[body..start]));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(body) = open {
        blocks.push(strip_final_newline(&text[body.min(text.len())..]));
    }
    blocks
}

fn strip_final_newline(s: &str) -> &str {
    let s = s.strip_suffix('\n').unwrap_or(s);
    s.strip_suffix('\r').unwrap_or(s)
}

/// Candidate source from a model response, or `None` when there is no code.
///
/// Preference order: the first fenced block defining `expected_name`; the
/// first fenced block defining any function; the whole response when it has
/// no fences at all but contains a function definition.
pub fn extract_code<'a>(text: &'a str, expected_name: Option<&str>) -> Option<&'a str> {
    let blocks = fenced_blocks(text);
    let defs: Vec<Vec<pyscan::FunctionDef>> = blocks.iter().map(|b| pyscan::function_defs(b)).collect();
    if let Some(name) = expected_name {
        if let Some(i) = defs.iter().position(|d| d.iter().any(|f| f.name == name)) {
            return Some(blocks[i]);
        }
    }
    if let Some(i) = defs.iter().position(|d| !d.is_empty()) {
        return Some(blocks[i]);
    }
    (blocks.is_empty() && pyscan::has_function(text)).then_some(text)
}
