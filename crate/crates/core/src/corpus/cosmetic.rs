//! Detection of blank and comment-only lines.

/// Block-comment state carried from one line to the next.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CommentState {
    in_block: bool,
}

impl CommentState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn in_block_comment(&self) -> bool {
        self.in_block
    }

    /// Classify one line and advance the state past it. Returns true when the
    /// line holds no code: it is blank, or all of it is comment text.
    pub fn classify(&mut self, line: &str) -> bool {
        self.strip(line).trim().is_empty()
    }

    /// Return the code of one line with comment text replaced by spaces, and
    /// advance the state past it.
    pub fn strip(&mut self, line: &str) -> String {
        let chars: Vec<char> = line.chars().collect();
        let mut code = String::with_capacity(line.len());
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            if self.in_block {
                if c == '*' && chars.get(i + 1) == Some(&'/') {
                    self.in_block = false;
                    code.push(' ');
                    i += 2;
                } else {
                    i += 1;
                }
                continue;
            }
            if c == '/' && chars.get(i + 1) == Some(&'/') {
                break;
            } else if c == '/' && chars.get(i + 1) == Some(&'*') {
                self.in_block = true;
                code.push(' ');
                i += 2;
            } else if c == '"' || c == '\'' {
                code.push(c);
                i += 1;
                while i < chars.len() && chars[i] != c {
                    if chars[i] == '\\' && i + 1 < chars.len() {
                        code.push(chars[i]);
                        i += 1;
                    }
                    code.push(chars[i]);
                    i += 1;
                }
                if i < chars.len() {
                    code.push(c);
                }
                i += 1;
            } else {
                code.push(c);
                i += 1;
            }
        }
        code
    }
}

/// Stateless check of a single line. Without the preceding lines an open
/// block comment is unknown, so a bare `*` continuation line (Javadoc style)
/// also counts as cosmetic.
pub fn is_cosmetic_line(text: &str) -> bool {
    let t = text.trim_start();
    if let Some(rest) = t.strip_prefix('*') {
        if rest.is_empty() || rest.starts_with(char::is_whitespace) || rest.starts_with('/') {
            return true;
        }
    }
    CommentState::new().classify(text)
}
