//! Lexical def/use analysis of single statements.
//!
//! No type resolution, aliasing or field sensitivity: an identifier is any
//! name token that is not a keyword, a member name after `.`, a called
//! function name, or a type in a declaration.

use std::collections::{BTreeSet, HashSet};

use crate::lexer::{Token, TokenKind};

const JAVA_KEYWORDS: &[&str] = &[
    "abstract",
    "assert",
    "boolean",
    "break",
    "byte",
    "case",
    "catch",
    "char",
    "class",
    "const",
    "continue",
    "default",
    "do",
    "double",
    "else",
    "enum",
    "extends",
    "final",
    "finally",
    "float",
    "for",
    "goto",
    "if",
    "implements",
    "import",
    "instanceof",
    "int",
    "interface",
    "long",
    "native",
    "new",
    "package",
    "private",
    "protected",
    "public",
    "return",
    "short",
    "static",
    "strictfp",
    "super",
    "switch",
    "synchronized",
    "this",
    "throw",
    "throws",
    "transient",
    "try",
    "void",
    "volatile",
    "while",
    "true",
    "false",
    "null",
    "var",
];

const JAVA_CONTROL: &[&str] = &[
    "if", "for", "while", "switch", "case", "do", "else", "try", "catch", "default", "finally",
];

/// Keywords that may precede a declared name or a method name.
const JAVA_TYPE_LIKE: &[&str] = &[
    "boolean",
    "byte",
    "char",
    "double",
    "float",
    "int",
    "long",
    "short",
    "void",
    "var",
    "abstract",
    "final",
    "native",
    "private",
    "protected",
    "public",
    "static",
    "synchronized",
    "transient",
    "volatile",
];

const ASSIGN_OPS: &[&str] = &[
    "=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>=", ">>>=",
];

/// Keyword configuration of the analysed language.
#[derive(Debug, Clone)]
pub struct LanguageProfile {
    keywords: HashSet<String>,
    control: HashSet<String>,
    type_like: HashSet<String>,
}

impl Default for LanguageProfile {
    fn default() -> Self {
        Self::java()
    }
}

impl LanguageProfile {
    pub fn java() -> Self {
        let set = |words: &[&str]| words.iter().map(|w| w.to_string()).collect();
        LanguageProfile {
            keywords: set(JAVA_KEYWORDS),
            control: set(JAVA_CONTROL),
            type_like: set(JAVA_TYPE_LIKE),
        }
    }

    pub fn with_keywords<I, S>(mut self, extra: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.keywords.extend(extra.into_iter().map(Into::into));
        self
    }

    pub fn is_keyword(&self, word: &str) -> bool {
        self.keywords.contains(word)
    }

    pub fn is_control_keyword(&self, word: &str) -> bool {
        self.control.contains(word)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DefUse {
    pub defs: BTreeSet<String>,
    pub uses: BTreeSet<String>,
}

/// Syntactic shape of a statement line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineShape {
    Control,
    BraceOnly,
    Signature,
    Plain,
}

fn is_name(t: &Token, profile: &LanguageProfile) -> bool {
    t.kind == TokenKind::Ident && !profile.is_keyword(&t.text)
}

/// Index of the first token after leading closing braces.
fn head(tokens: &[Token]) -> usize {
    tokens.iter().take_while(|t| t.is("}")).count()
}

pub fn shape(tokens: &[Token], profile: &LanguageProfile) -> LineShape {
    if tokens
        .iter()
        .all(|t| matches!(t.text.as_str(), "{" | "}" | ";" | "(" | ")"))
    {
        return LineShape::BraceOnly;
    }
    if let Some(first) = tokens.get(head(tokens)) {
        if first.is_ident() && profile.is_control_keyword(&first.text) {
            return LineShape::Control;
        }
    }
    if is_signature(tokens, profile) {
        return LineShape::Signature;
    }
    LineShape::Plain
}

/// `modifiers Type name(params) [throws X] [{]` with no assignment.
fn is_signature(tokens: &[Token], profile: &LanguageProfile) -> bool {
    if tokens.last().is_some_and(|t| t.is(";")) {
        return false;
    }
    if tokens
        .iter()
        .any(|t| ASSIGN_OPS.contains(&t.text.as_str()) || t.is("->"))
    {
        return false;
    }
    if let Some(first) = tokens.first() {
        if matches!(first.text.as_str(), "return" | "new" | "throw" | "." | "@") {
            return false;
        }
    }
    (1..tokens.len().saturating_sub(1)).any(|i| {
        let prev = &tokens[i - 1];
        is_name(&tokens[i], profile)
            && tokens[i + 1].is("(")
            && (is_name(prev, profile)
                || profile.type_like.contains(&prev.text)
                || prev.is(">")
                || prev.is("]"))
    })
}

/// Analyse one statement's tokens. Signature and brace-only lines have empty
/// sets.
pub fn analyse(tokens: &[Token], line_shape: LineShape, profile: &LanguageProfile) -> DefUse {
    let mut out = DefUse::default();
    if matches!(line_shape, LineShape::BraceOnly | LineShape::Signature) {
        return out;
    }
    let n = tokens.len();
    let text = |i: usize| tokens.get(i).map_or("", |t| t.text.as_str());

    // `this.x` / `super.x` name the field x
    let this_field =
        |i: usize| i >= 2 && text(i - 1) == "." && matches!(text(i - 2), "this" | "super");

    let mut is_type = vec![false; n];
    for i in 0..n {
        if !is_name(&tokens[i], profile) {
            continue;
        }
        if i > 0 && (text(i - 1) == "new" || text(i - 1) == "@") {
            is_type[i] = true;
        }
        if tokens.get(i + 1).is_some_and(|t| is_name(t, profile)) {
            is_type[i] = true;
        }
        // Type[] name
        if text(i + 1) == "[" && text(i + 2) == "]" {
            let mut j = i + 1;
            while text(j) == "[" && text(j + 1) == "]" {
                j += 2;
            }
            if tokens.get(j).is_some_and(|t| is_name(t, profile)) {
                is_type[i] = true;
            }
        }
        // Type<Args> name, new Type<>(...)
        if text(i + 1) == "<" {
            if let Some(close) = generic_close(tokens, i + 1) {
                let after = tokens.get(close + 1);
                if after.is_some_and(|t| is_name(t, profile) || t.is("(") || t.is("::")) {
                    for flag in &mut is_type[i..=close] {
                        *flag = true;
                    }
                }
            }
        }
    }

    let mut is_var = vec![false; n];
    for i in 0..n {
        if !is_name(&tokens[i], profile) || is_type[i] {
            continue;
        }
        let member = i > 0 && (text(i - 1) == "." || text(i - 1) == "::") && !this_field(i);
        let called = text(i + 1) == "(";
        is_var[i] = !member && !called;
    }

    let mut def_only = vec![false; n];
    let define = |i: usize, out: &mut DefUse| {
        out.defs.insert(tokens[i].text.clone());
    };

    for p in 0..n {
        if !ASSIGN_OPS.contains(&text(p)) {
            continue;
        }
        if let Some((root, simple)) = lvalue_root(tokens, p, &is_var) {
            define(root, &mut out);
            if simple && text(p) == "=" {
                def_only[root] = true;
            }
        }
    }

    for i in 0..n {
        if !is_var[i] {
            continue;
        }
        // receiver of a method invocation
        if text(i + 1) == "."
            && tokens.get(i + 2).is_some_and(|t| t.is_ident())
            && text(i + 3) == "("
        {
            define(i, &mut out);
        }
        if matches!(text(i + 1), "++" | "--") || (i > 0 && matches!(text(i - 1), "++" | "--")) {
            define(i, &mut out);
        }
    }

    // for (Type name : iterable)
    if text(head(tokens)) == "for" {
        let mut depth = 0i32;
        for i in 0..n {
            match text(i) {
                "(" => depth += 1,
                ")" => depth -= 1,
                ":" if depth == 1 && i > 0 && is_var[i - 1] => {
                    define(i - 1, &mut out);
                    def_only[i - 1] = true;
                }
                _ => {}
            }
        }
    }

    // `Type name;` and `Type a, b;` declare without defining
    for i in 1..n {
        if !is_var[i] || def_only[i] {
            continue;
        }
        let prev = &tokens[i - 1];
        let declared_after = is_type[i - 1]
            || profile.type_like.contains(&prev.text)
            || prev.is(">")
            || prev.is("]");
        if declared_after && matches!(text(i + 1), ";" | "," | ")") {
            def_only[i] = true;
        }
    }

    for i in 0..n {
        if is_var[i] && !def_only[i] {
            out.uses.insert(tokens[i].text.clone());
        }
    }
    out
}

/// Matching `>` of a generic argument list opened at `open`, if the list
/// only holds type-like tokens.
fn generic_close(tokens: &[Token], open: usize) -> Option<usize> {
    let mut depth = 0i32;
    for (j, t) in tokens.iter().enumerate().skip(open) {
        match t.text.as_str() {
            "<" => depth += 1,
            ">" => depth -= 1,
            ">>" => depth -= 2,
            ">>>" => depth -= 3,
            "," | "?" | "." | "[" | "]" | "&" => {}
            _ if t.is_ident() => {}
            _ => return None,
        }
        if depth <= 0 {
            return (depth == 0).then_some(j);
        }
    }
    None
}

/// Root variable of the assignment target left of `op`, and whether the
/// target is a bare name.
fn lvalue_root(tokens: &[Token], op: usize, is_var: &[bool]) -> Option<(usize, bool)> {
    let text = |i: usize| tokens[i].text.as_str();
    let mut j = op.checked_sub(1)?;
    let mut simple = true;
    loop {
        // skip index expressions
        while text(j) == "]" {
            simple = false;
            let mut depth = 0i32;
            loop {
                match text(j) {
                    "]" => depth += 1,
                    "[" => depth -= 1,
                    _ => {}
                }
                if depth == 0 {
                    break;
                }
                j = j.checked_sub(1)?;
            }
            j = j.checked_sub(1)?;
        }
        if !tokens[j].is_ident() {
            return None;
        }
        if j >= 2 && text(j - 1) == "." {
            if matches!(text(j - 2), "this" | "super") {
                return is_var[j].then_some((j, simple));
            }
            simple = false;
            j -= 2;
            continue;
        }
        return is_var[j].then_some((j, simple));
    }
}
