//! MiniLang tokenizer. Line comments start with `//`.

use crate::diag::{Diagnostic, Span};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(u64),
    Str(String),
    Kw(&'static str),
    Punct(&'static str),
    Eof,
}

impl std::fmt::Display for Tok {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Int(v) => write!(f, "integer `{v}`"),
            Tok::Str(_) => write!(f, "string literal"),
            Tok::Kw(k) => write!(f, "`{k}`"),
            Tok::Punct(p) => write!(f, "`{p}`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

const KEYWORDS: [&str; 21] = [
    "fn", "int", "bool", "void", "if", "else", "while", "for", "switch", "case", "default",
    "break", "continue", "return", "throw", "try", "catch", "true", "false", "null", "new",
];

pub fn lex(text: &str) -> Result<Vec<Token>, Vec<Diagnostic>> {
    let mut out = Vec::new();
    let mut diags = Vec::new();
    let mut line: u32 = 1;
    let mut col: u32 = 1;
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0usize;

    let punct2 = ["==", "!=", "<=", ">=", "&&", "||", "->"];
    let punct1 = ["(", ")", "{", "}", "[", "]", ",", ";", ":", "=", "<", ">", "+", "-", "*", "/", "%", "!", "^", "|"];

    while i < chars.len() {
        let c = chars[i];
        let span = Span::new(line, col);
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            col += 1;
            i += 1;
            continue;
        }
        if c == '/' && i + 1 < chars.len() && chars[i + 1] == '/' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_digit() {
            let mut v: u64 = 0;
            let mut overflow = false;
            let mut n = 0u32;
            while i < chars.len() && chars[i].is_ascii_digit() {
                let d = chars[i] as u64 - '0' as u64;
                v = match v.checked_mul(10).and_then(|x| x.checked_add(d)) {
                    Some(x) => x,
                    None => {
                        overflow = true;
                        v
                    }
                };
                i += 1;
                n += 1;
            }
            col += n;
            if overflow {
                diags.push(Diagnostic::at(span, "integer literal out of range"));
            } else {
                out.push(Token { tok: Tok::Int(v), span });
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            let mut n = 0u32;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
                n += 1;
            }
            col += n;
            let word: String = chars[start..i].iter().collect();
            let tok = match KEYWORDS.iter().find(|k| **k == word) {
                Some(k) => Tok::Kw(k),
                None => Tok::Ident(word),
            };
            out.push(Token { tok, span });
            continue;
        }
        if c == '"' {
            i += 1;
            col += 1;
            let mut s = String::new();
            let mut closed = false;
            while i < chars.len() {
                let ch = chars[i];
                i += 1;
                col += 1;
                match ch {
                    '"' => {
                        closed = true;
                        break;
                    }
                    '\\' => {
                        let esc = chars.get(i).copied();
                        i += 1;
                        col += 1;
                        match esc {
                            Some('n') => s.push('\n'),
                            Some('"') => s.push('"'),
                            Some('\\') => s.push('\\'),
                            _ => diags.push(Diagnostic::at(span, "unknown escape in string literal")),
                        }
                    }
                    '\n' => {
                        diags.push(Diagnostic::at(span, "unterminated string literal"));
                        line += 1;
                        col = 1;
                        closed = true;
                        break;
                    }
                    ch => s.push(ch),
                }
            }
            if !closed {
                diags.push(Diagnostic::at(span, "unterminated string literal"));
            }
            out.push(Token { tok: Tok::Str(s), span });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        if let Some(p) = punct2.iter().find(|p| rest.starts_with(**p)) {
            out.push(Token { tok: Tok::Punct(p), span });
            i += 2;
            col += 2;
            continue;
        }
        let one: String = c.to_string();
        if let Some(p) = punct1.iter().find(|p| **p == one) {
            out.push(Token { tok: Tok::Punct(p), span });
            i += 1;
            col += 1;
            continue;
        }
        diags.push(Diagnostic::at(span, format!("unexpected character `{c}`")));
        i += 1;
        col += 1;
    }

    out.push(Token { tok: Tok::Eof, span: Span::new(line, col) });
    if diags.is_empty() {
        Ok(out)
    } else {
        Err(diags)
    }
}
