//! Lightweight structural scan of Python source: finds `def` headers and
//! their parameter lists without a full parser.
//!
//! String literals and comments are masked first so that `def` inside a
//! docstring, or a comma inside a default string, is never misread.

use std::fmt;

/// Parameter shape of a function header.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Signature {
    pub positional_required: usize,
    pub positional_optional: usize,
    pub var_positional: bool,
    pub keyword_only_required: usize,
}

impl Signature {
    /// Whether a call with `n` positional arguments binds.
    pub fn accepts(&self, n: usize) -> bool {
        self.keyword_only_required == 0
            && n >= self.positional_required
            && (self.var_positional || n <= self.positional_required + self.positional_optional)
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let max = self.positional_required + self.positional_optional;
        if self.var_positional {
            write!(f, "{}+ arguments", self.positional_required)?;
        } else if max == self.positional_required {
            write!(f, "{max} argument(s)")?;
        } else {
            write!(f, "{}..={max} arguments", self.positional_required)?;
        }
        if self.keyword_only_required > 0 {
            write!(f, " plus {} required keyword-only", self.keyword_only_required)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionDef {
    pub name: String,
    pub signature: Signature,
    /// 1-based line of the `def` keyword.
    pub line: usize,
    pub top_level: bool,
}

/// Replace string-literal contents and comments by spaces, keeping quotes,
/// newlines, and byte offsets intact.
pub fn mask(source: &str) -> String {
    let bytes = source.as_bytes();
    let mut out = bytes.to_vec();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'#' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    out[i] = b' ';
                    i += 1;
                }
            }
            q @ (b'\'' | b'"') => {
                let triple = i + 2 < bytes.len() && bytes[i + 1] == q && bytes[i + 2] == q;
                let open = if triple { 3 } else { 1 };
                i += open;
                loop {
                    if i >= bytes.len() {
                        break;
                    }
                    let b = bytes[i];
                    if b == b'\\' {
                        out[i] = b' ';
                        if i + 1 < bytes.len() && bytes[i + 1] != b'\n' {
                            out[i + 1] = b' ';
                        }
                        i += 2;
                        continue;
                    }
                    if triple {
                        if b == q && i + 2 < bytes.len() && bytes[i + 1] == q && bytes[i + 2] == q {
                            i += 3;
                            break;
                        }
                    } else if b == q {
                        i += 1;
                        break;
                    } else if b == b'\n' {
                        // Unterminated single-line string; the parser stage reports it.
                        break;
                    }
                    if b != b'\n' {
                        out[i] = b' ';
                    }
                    i += 1;
                }
            }
            _ => i += 1,
        }
    }
    // Only ASCII bytes were overwritten with ASCII spaces, except inside
    // literals where multi-byte chars are blanked byte-wise; recover lossily.
    String::from_utf8_lossy(&out).into_owned()
}

fn ident_at(s: &str) -> Option<&str> {
    let end = s
        .char_indices()
        .find(|(_, c)| !(c.is_ascii_alphanumeric() || *c == '_'))
        .map(|(i, _)| i)
        .unwrap_or(s.len());
    let ident = &s[..end];
    match ident.chars().next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => Some(ident),
        _ => None,
    }
}

fn parse_params(inner: &str) -> Signature {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in inner.char_indices() {
        match c {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(&inner[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&inner[start..]);

    let mut sig = Signature::default();
    let mut keyword_only = false;
    for raw in parts {
        let p = raw.trim();
        if p.is_empty() || p == "/" {
            continue;
        }
        if p.starts_with("**") {
            continue;
        }
        if let Some(rest) = p.strip_prefix('*') {
            keyword_only = true;
            if !rest.trim().is_empty() {
                sig.var_positional = true;
            }
            continue;
        }
        let has_default = {
            // `=` not part of `==`, `<=`, `>=`, `!=` (only possible in annotations/defaults).
            let b = p.as_bytes();
            (0..b.len()).any(|i| {
                b[i] == b'='
                    && (i == 0 || !matches!(b[i - 1], b'=' | b'<' | b'>' | b'!'))
                    && b.get(i + 1) != Some(&b'=')
            })
        };
        match (keyword_only, has_default) {
            (false, false) => sig.positional_required += 1,
            (false, true) => sig.positional_optional += 1,
            (true, false) => sig.keyword_only_required += 1,
            (true, true) => {}
        }
    }
    sig
}

/// Every `def` header in source order.
pub fn function_defs(source: &str) -> Vec<FunctionDef> {
    let masked = mask(source);
    let mut defs = Vec::new();
    let mut depth = 0i32;
    let mut offset = 0;
    for (line_no, line) in masked.split_inclusive('\n').enumerate() {
        let line_start = offset;
        offset += line.len();
        if depth == 0 {
            let stripped = line.trim_start_matches([' ', '\t']);
            let indent = line.len() - stripped.len();
            let after_async = stripped
                .strip_prefix("async")
                .filter(|r| r.starts_with([' ', '\t']))
                .map(|r| r.trim_start())
                .unwrap_or(stripped);
            if let Some(rest) = after_async.strip_prefix("def") {
                if rest.starts_with([' ', '\t']) {
                    let rest_trim = rest.trim_start();
                    if let Some(name) = ident_at(rest_trim) {
                        let after_name = rest_trim[name.len()..].trim_start();
                        if after_name.starts_with('(') {
                            let open_abs = line_start
                                + (line.len() - after_name.len());
                            if let Some(close) = matching_paren(&masked, open_abs) {
                                defs.push(FunctionDef {
                                    name: name.to_string(),
                                    signature: parse_params(&masked[open_abs + 1..close]),
                                    line: line_no + 1,
                                    top_level: indent == 0,
                                });
                            }
                        }
                    }
                }
            }
        }
        for c in line.chars() {
            match c {
                '(' | '[' | '{' => depth += 1,
                ')' | ']' | '}' => depth = (depth - 1).max(0),
                _ => {}
            }
        }
    }
    defs
}

fn matching_paren(masked: &str, open: usize) -> Option<usize> {
    let mut depth = 0i32;
    for (i, c) in masked[open..].char_indices() {
        match c {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(open + i);
                }
            }
            _ => {}
        }
    }
    None
}

/// True when the source contains at least one `def`.
pub fn has_function(source: &str) -> bool {
    !function_defs(source).is_empty()
}

/// The definition stages 2-3 judge: the first top-level function with the
/// expected name, else the first top-level function, else the first one.
pub fn select<'a>(defs: &'a [FunctionDef], expected: &str) -> Option<&'a FunctionDef> {
    defs.iter()
        .find(|d| d.top_level && d.name == expected)
        .or_else(|| defs.iter().find(|d| d.top_level))
        .or_else(|| defs.first())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(src: &str) -> Signature {
        function_defs(src).remove(0).signature
    }

    #[test]
    fn finds_top_level_and_nested() {
        let src = "import math\n\ndef outer(a, b=2):\n    def inner(x):\n        return x\n    return inner(a)\n\nclass K:\n    def method(self):\n        pass\n";
        let defs = function_defs(src);
        let names: Vec<_> = defs.iter().map(|d| (d.name.as_str(), d.top_level)).collect();
        assert_eq!(names, [("outer", true), ("inner", false), ("method", false)]);
        assert_eq!(defs[0].line, 3);
    }

    #[test]
    fn ignores_defs_in_strings_and_comments() {
        let src = "x = '''\ndef fake(a):\n'''\n# def nope(b):\ny = \"def also_fake(c):\"\n";
        assert!(function_defs(src).is_empty());
    }

    #[test]
    fn multiline_header_and_annotations() {
        let src = "def f(\n    lst: list[int],\n    sep: str = \", \",\n) -> int:\n    return 0\n";
        let s = sig(src);
        assert_eq!(s.positional_required, 1);
        assert_eq!(s.positional_optional, 1);
        assert!(s.accepts(1) && s.accepts(2) && !s.accepts(3) && !s.accepts(0));
    }

    #[test]
    fn variadic_and_keyword_only() {
        assert!(sig("def f(*args):\n  pass\n").accepts(3));
        assert!(sig("def f(a, *args, **kw):\n  pass\n").accepts(1));
        assert!(!sig("def f(a, *, key):\n  pass\n").accepts(1));
        assert!(sig("def f(a, *, key=1):\n  pass\n").accepts(1));
        assert!(sig("def f(a, b, /):\n  pass\n").accepts(2));
    }

    #[test]
    fn default_with_comparison_in_annotation_is_not_confused() {
        let s = sig("def f(a: 'x == y', b=(1 <= 2)):\n  pass\n");
        assert_eq!(s.positional_required, 1);
        assert_eq!(s.positional_optional, 1);
    }

    #[test]
    fn async_def_counts() {
        let defs = function_defs("async def go(x):\n    return x\n");
        assert_eq!(defs[0].name, "go");
    }

    #[test]
    fn def_inside_brackets_is_not_a_header() {
        assert!(function_defs("x = [\ndef_thing(1)\n]\n").is_empty());
    }

    #[test]
    fn select_prefers_expected_top_level() {
        let defs = function_defs("def a(x):\n  pass\ndef b(x):\n  pass\n");
        assert_eq!(select(&defs, "b").unwrap().name, "b");
        assert_eq!(select(&defs, "zzz").unwrap().name, "a");
        assert!(select(&[], "a").is_none());
    }

    #[test]
    fn masks_escapes_and_unicode() {
        let src = "s = 'it\\'s def x(): é'\ndef real(a):\n    pass\n";
        let defs = function_defs(src);
        assert_eq!(defs.len(), 1);
        assert_eq!(defs[0].name, "real");
    }
}
