//! A small C tokenizer: enough to find declaration boundaries, not a full
//! C lexer. Comments are dropped, preprocessor directives are kept whole.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Ident,
    Number,
    Str,
    Char,
    Punct,
}

#[derive(Debug, Clone, Copy)]
pub struct Token {
    pub kind: TokenKind,
    pub start: usize,
    pub end: usize,
    /// 1-based line of the first byte.
    pub line: u32,
}

impl Token {
    pub fn text<'a>(&self, src: &'a str) -> &'a str {
        &src[self.start..self.end]
    }

    pub fn is_punct(&self, src: &str, c: char) -> bool {
        self.kind == TokenKind::Punct && src.as_bytes()[self.start] == c as u8
    }
}

/// A preprocessor directive, including backslash continuations.
#[derive(Debug, Clone)]
pub struct Directive {
    pub start: usize,
    pub end: usize,
    pub line: u32,
    pub end_line: u32,
    /// Tokens of the directive body (after the `#`).
    pub tokens: Vec<Token>,
}

#[derive(Debug, Default)]
pub struct Lexed {
    /// Ordinary tokens, directives excluded.
    pub tokens: Vec<Token>,
    pub directives: Vec<Directive>,
}

pub fn is_ident_start(b: u8) -> bool {
    b.is_ascii_alphabetic() || b == b'_'
}

pub fn is_ident_char(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// True if `s` is a valid C identifier.
pub fn is_c_identifier(s: &str) -> bool {
    let b = s.as_bytes();
    !b.is_empty() && is_ident_start(b[0]) && b.iter().all(|&c| is_ident_char(c))
}

struct Cursor<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn peek_at(&self, off: usize) -> Option<u8> {
        self.src.get(self.pos + off).copied()
    }

    fn bump(&mut self) {
        if self.src[self.pos] == b'\n' {
            self.line += 1;
        }
        self.pos += 1;
    }

    fn skip_block_comment(&mut self) {
        self.pos += 2;
        while self.pos < self.src.len() {
            if self.peek() == Some(b'*') && self.peek_at(1) == Some(b'/') {
                self.pos += 2;
                return;
            }
            self.bump();
        }
    }

    fn skip_line_comment(&mut self) {
        while let Some(c) = self.peek() {
            if c == b'\n' {
                break;
            }
            self.pos += 1;
        }
    }

    fn quoted(&mut self, quote: u8) {
        self.pos += 1;
        while let Some(c) = self.peek() {
            match c {
                b'\\' => {
                    self.bump();
                    if self.pos < self.src.len() {
                        self.bump();
                    }
                }
                b'\n' => return, // unterminated; stop at end of line
                _ if c == quote => {
                    self.pos += 1;
                    return;
                }
                _ => self.bump(),
            }
        }
    }

    /// Lex one token at the current position (whitespace and comments
    /// already skipped). `in_directive` makes newlines terminate.
    fn token(&mut self) -> Token {
        let start = self.pos;
        let line = self.line;
        let c = self.src[self.pos];
        let kind = if is_ident_start(c) {
            while self.peek().is_some_and(is_ident_char) {
                self.pos += 1;
            }
            TokenKind::Ident
        } else if c.is_ascii_digit() {
            while self.peek().is_some_and(|b| is_ident_char(b) || b == b'.') {
                self.pos += 1;
            }
            TokenKind::Number
        } else if c == b'"' {
            self.quoted(b'"');
            TokenKind::Str
        } else if c == b'\'' {
            self.quoted(b'\'');
            TokenKind::Char
        } else {
            // multi-byte UTF-8 sequences in code are treated as one punct each
            let width = utf8_width(c);
            self.pos += width;
            TokenKind::Punct
        };
        Token {
            kind,
            start,
            end: self.pos,
            line,
        }
    }
}

fn utf8_width(b: u8) -> usize {
    match b {
        0xC0..=0xDF => 2,
        0xE0..=0xEF => 3,
        0xF0..=0xF7 => 4,
        _ => 1,
    }
}

/// Tokenize C source.
pub fn lex(src: &str) -> Lexed {
    let mut cur = Cursor {
        src: src.as_bytes(),
        pos: 0,
        line: 1,
    };
    let mut out = Lexed::default();
    // true while only whitespace has been seen since the last newline
    let mut at_line_start = true;

    while let Some(c) = cur.peek() {
        match c {
            b'\n' => {
                cur.bump();
                at_line_start = true;
            }
            b' ' | b'\t' | b'\r' | b'\x0c' | b'\x0b' => cur.pos += 1,
            b'/' if cur.peek_at(1) == Some(b'*') => cur.skip_block_comment(),
            b'/' if cur.peek_at(1) == Some(b'/') => cur.skip_line_comment(),
            b'#' if at_line_start => {
                out.directives.push(lex_directive(&mut cur));
                at_line_start = true;
            }
            _ => {
                at_line_start = false;
                let tok = cur.token();
                out.tokens.push(tok);
            }
        }
    }
    out
}

fn lex_directive(cur: &mut Cursor<'_>) -> Directive {
    let start = cur.pos;
    let line = cur.line;
    cur.pos += 1; // '#'
    let mut tokens = Vec::new();
    let mut end = cur.pos;
    while let Some(c) = cur.peek() {
        match c {
            b'\n' => break,
            b'\\' if cur.peek_at(1) == Some(b'\n') => {
                cur.pos += 1;
                cur.bump();
            }
            b'\\' if cur.peek_at(1) == Some(b'\r') && cur.peek_at(2) == Some(b'\n') => {
                cur.pos += 2;
                cur.bump();
            }
            b' ' | b'\t' | b'\r' | b'\x0c' | b'\x0b' => cur.pos += 1,
            b'/' if cur.peek_at(1) == Some(b'*') => {
                cur.skip_block_comment();
                end = cur.pos;
            }
            b'/' if cur.peek_at(1) == Some(b'/') => cur.skip_line_comment(),
            _ => {
                let tok = cur.token();
                end = tok.end;
                tokens.push(tok);
            }
        }
    }
    Directive {
        start,
        end: end.max(start + 1),
        line,
        end_line: cur.line,
        tokens,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_strings_are_not_identifiers() {
        let src = "int a; /* b */ // c\nchar *s = \"d e\"; char q = '\\'';";
        let lx = lex(src);
        let idents: Vec<_> = lx
            .tokens
            .iter()
            .filter(|t| t.kind == TokenKind::Ident)
            .map(|t| t.text(src))
            .collect();
        assert_eq!(idents, ["int", "a", "char", "s", "char", "q"]);
    }

    #[test]
    fn directive_with_continuation() {
        let src = "#define FOO(x) \\\n  ((x) + 1)\nint y;\n";
        let lx = lex(src);
        assert_eq!(lx.directives.len(), 1);
        let d = &lx.directives[0];
        assert_eq!((d.line, d.end_line), (1, 2));
        assert_eq!(d.tokens[0].text(src), "define");
        assert_eq!(lx.tokens[0].text(src), "int");
        assert_eq!(lx.tokens[0].line, 3);
    }

    #[test]
    fn hash_inside_line_is_punct() {
        let src = "a # b";
        assert!(lex(src).directives.is_empty());
    }

    #[test]
    fn identifier_check() {
        assert!(is_c_identifier("_ctl_fops"));
        assert!(!is_c_identifier("1abc"));
        assert!(!is_c_identifier("struct foo"));
        assert!(!is_c_identifier(""));
    }
}
