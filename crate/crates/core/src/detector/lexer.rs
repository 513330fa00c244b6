//! Total lexer for the JavaScript subset the detector cares about.
//!
//! It never fails: unterminated constructs become error-kind tokens and the
//! scan continues on the next line. Comments are preserved but flagged so
//! dataflow never reads them. Tokens inside template interpolations are
//! surfaced with the `in_template` flag set.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenKind {
    Identifier,
    Keyword,
    Number,
    Str,
    Regex,
    TemplateChunk,
    Punct,
    Comment,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub kind: TokenKind,
    /// For `Str` the quotes are stripped; for `Comment` the marker is kept.
    pub lexeme: String,
    /// 1-based line of the token's first character.
    pub line: u32,
    pub in_template: bool,
}

const KEYWORDS: &[&str] = &[
    "await",
    "break",
    "case",
    "catch",
    "class",
    "const",
    "continue",
    "debugger",
    "default",
    "delete",
    "do",
    "else",
    "export",
    "extends",
    "false",
    "finally",
    "for",
    "function",
    "if",
    "import",
    "in",
    "instanceof",
    "let",
    "new",
    "null",
    "of",
    "return",
    "static",
    "super",
    "switch",
    "this",
    "throw",
    "true",
    "try",
    "typeof",
    "undefined",
    "var",
    "void",
    "while",
    "with",
    "yield",
];

// Longest-match first.
const MULTI_PUNCT: &[&str] = &[
    ">>>=", "===", "!==", "**=", "...", ">>>", "<<=", ">>=", "&&=", "||=", "??=", "=>", "==", "!=",
    "<=", ">=", "&&", "||", "??", "?.", "++", "--", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=",
    "<<", ">>", "**",
];

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
    tokens: Vec<Token>,
    template_depth: u32,
}

pub fn tokenize_js(source: &str) -> Vec<Token> {
    let mut lx = Lexer {
        src: source.as_bytes(),
        pos: 0,
        line: 1,
        tokens: Vec::new(),
        template_depth: 0,
    };
    lx.run();
    lx.tokens
}

impl<'a> Lexer<'a> {
    fn run(&mut self) {
        while self.pos < self.src.len() {
            let c = self.src[self.pos];
            match c {
                b'\n' => {
                    self.line += 1;
                    self.pos += 1;
                }
                b' ' | b'\t' | b'\r' => self.pos += 1,
                b'/' if self.peek(1) == Some(b'/') => self.line_comment(),
                b'/' if self.peek(1) == Some(b'*') => self.block_comment(),
                b'\'' | b'"' => self.string(c),
                b'`' => self.template(),
                b'/' if self.regex_can_start() => self.regex(),
                c if c.is_ascii_digit() => self.number(),
                c if is_ident_start(c) => self.ident(),
                _ => self.punct(),
            }
        }
    }

    fn peek(&self, ahead: usize) -> Option<u8> {
        self.src.get(self.pos + ahead).copied()
    }

    fn push(&mut self, kind: TokenKind, lexeme: String, line: u32) {
        self.tokens.push(Token {
            kind,
            lexeme,
            line,
            in_template: self.template_depth > 0,
        });
    }

    fn line_comment(&mut self) {
        let start = self.pos;
        let line = self.line;
        while self.pos < self.src.len() && self.src[self.pos] != b'\n' {
            self.pos += 1;
        }
        let text = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
        self.push(TokenKind::Comment, text, line);
    }

    fn block_comment(&mut self) {
        let start = self.pos;
        let line = self.line;
        self.pos += 2;
        while self.pos < self.src.len() {
            if self.src[self.pos] == b'\n' {
                self.line += 1;
            }
            if self.src[self.pos] == b'*' && self.peek(1) == Some(b'/') {
                self.pos += 2;
                let text = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
                self.push(TokenKind::Comment, text, line);
                return;
            }
            self.pos += 1;
        }
        // unterminated: swallow to EOF, still a comment
        let text = String::from_utf8_lossy(&self.src[start..]).into_owned();
        self.push(TokenKind::Comment, text, line);
    }

    fn string(&mut self, quote: u8) {
        let line = self.line;
        self.pos += 1;
        let start = self.pos;
        while self.pos < self.src.len() {
            let c = self.src[self.pos];
            if c == b'\\' {
                // escape at EOF must not run past the buffer
                self.pos = (self.pos + 2).min(self.src.len());
                continue;
            }
            if c == quote {
                let text = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
                self.pos += 1;
                self.push(TokenKind::Str, text, line);
                return;
            }
            if c == b'\n' {
                // unterminated string: error token up to EOL
                break;
            }
            self.pos += 1;
        }
        let end = self.pos.min(self.src.len());
        let text = String::from_utf8_lossy(&self.src[start..end]).into_owned();
        self.push(TokenKind::Error, text, line);
    }

    fn template(&mut self) {
        self.pos += 1; // consume backtick
        let mut chunk = Vec::new();
        let mut chunk_line = self.line;
        loop {
            if self.pos >= self.src.len() {
                let text = String::from_utf8_lossy(&chunk).into_owned();
                self.push(TokenKind::Error, text, chunk_line);
                return;
            }
            let c = self.src[self.pos];
            if c == b'\\' {
                chunk.push(c);
                if let Some(n) = self.peek(1) {
                    chunk.push(n);
                }
                self.pos += 2;
                continue;
            }
            if c == b'`' {
                self.pos += 1;
                let text = String::from_utf8_lossy(&chunk).into_owned();
                self.push(TokenKind::TemplateChunk, text, chunk_line);
                return;
            }
            if c == b'$' && self.peek(1) == Some(b'{') {
                let text = String::from_utf8_lossy(&chunk).into_owned();
                self.push(TokenKind::TemplateChunk, text, chunk_line);
                chunk = Vec::new();
                self.pos += 2;
                // lex the interpolation body with the template flag raised
                self.template_depth += 1;
                let mut brace = 0u32;
                while self.pos < self.src.len() {
                    let ic = self.src[self.pos];
                    if ic == b'}' && brace == 0 {
                        self.pos += 1;
                        break;
                    }
                    match ic {
                        b'{' => {
                            brace += 1;
                            self.punct();
                        }
                        b'}' => {
                            brace -= 1;
                            self.punct();
                        }
                        b'\n' => {
                            self.line += 1;
                            self.pos += 1;
                        }
                        b' ' | b'\t' | b'\r' => self.pos += 1,
                        b'\'' | b'"' => self.string(ic),
                        b'`' => self.template(),
                        c if c.is_ascii_digit() => self.number(),
                        c if is_ident_start(c) => self.ident(),
                        _ => self.punct(),
                    }
                }
                self.template_depth -= 1;
                chunk_line = self.line;
                continue;
            }
            if c == b'\n' {
                self.line += 1;
            }
            chunk.push(c);
            self.pos += 1;
        }
    }

    /// A `/` starts a regex only where an expression may begin.
    fn regex_can_start(&self) -> bool {
        for tok in self.tokens.iter().rev() {
            if tok.kind == TokenKind::Comment {
                continue;
            }
            return match tok.kind {
                TokenKind::Identifier | TokenKind::Number | TokenKind::Str => false,
                TokenKind::Keyword => tok.lexeme != "this",
                TokenKind::Punct => !matches!(tok.lexeme.as_str(), ")" | "]"),
                _ => true,
            };
        }
        true
    }

    fn regex(&mut self) {
        let line = self.line;
        let start = self.pos;
        self.pos += 1;
        let mut in_class = false;
        while self.pos < self.src.len() {
            let c = self.src[self.pos];
            match c {
                b'\\' => self.pos = (self.pos + 1).min(self.src.len().saturating_sub(1)),
                b'[' => in_class = true,
                b']' => in_class = false,
                b'/' if !in_class => {
                    self.pos += 1;
                    while self.pos < self.src.len() && is_ident_part(self.src[self.pos]) {
                        self.pos += 1; // flags
                    }
                    let text = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
                    self.push(TokenKind::Regex, text, line);
                    return;
                }
                b'\n' => break,
                _ => {}
            }
            self.pos += 1;
        }
        let text = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
        self.push(TokenKind::Error, text, line);
    }

    fn number(&mut self) {
        let line = self.line;
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric()
                || self.src[self.pos] == b'.'
                || self.src[self.pos] == b'_')
        {
            // stop at member access after the literal (`8080 .toString` is not corpus code)
            if self.src[self.pos] == b'.' && self.pos > start && !peek_digit(self.src, self.pos + 1)
            {
                break;
            }
            self.pos += 1;
        }
        let text = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
        self.push(TokenKind::Number, text, line);
    }

    fn ident(&mut self) {
        let line = self.line;
        let start = self.pos;
        while self.pos < self.src.len() && is_ident_part(self.src[self.pos]) {
            self.pos += 1;
        }
        let text = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
        let kind = if KEYWORDS.contains(&text.as_str()) {
            TokenKind::Keyword
        } else {
            TokenKind::Identifier
        };
        self.push(kind, text, line);
    }

    fn punct(&mut self) {
        let line = self.line;
        for op in MULTI_PUNCT {
            if self.src[self.pos..].starts_with(op.as_bytes()) {
                self.pos += op.len();
                self.push(TokenKind::Punct, (*op).to_string(), line);
                return;
            }
        }
        let c = self.src[self.pos];
        self.pos += 1;
        let text = if c.is_ascii() {
            (c as char).to_string()
        } else {
            // non-ASCII byte outside a string; replace and move on
            '\u{fffd}'.to_string()
        };
        self.push(TokenKind::Punct, text, line);
    }
}

fn is_ident_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_' || c == b'$'
}

fn is_ident_part(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_' || c == b'$'
}

fn peek_digit(src: &[u8], pos: usize) -> bool {
    src.get(pos).is_some_and(|c| c.is_ascii_digit())
}
