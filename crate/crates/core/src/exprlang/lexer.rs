use super::{ExprError, Func, Scope};

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Number(f64),
    /// A resolved state variable (0-based index).
    Var(usize),
    Func(Func),
    Op(char),
    LParen,
    RParen,
    Comma,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    /// Byte offset into the source text.
    pub offset: usize,
    pub text: String,
}

/// Splits `text` into tokens. Identifiers must be function names or
/// variables declared in `scope`.
pub fn tokenize(text: &str, scope: &Scope) -> Result<Vec<Token>, ExprError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let single = |kind| Token {
            kind,
            offset: start,
            text: (c as char).to_string(),
        };
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
            }
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                tokens.push(single(TokenKind::Op(c as char)));
                i += 1;
            }
            b'(' => {
                tokens.push(single(TokenKind::LParen));
                i += 1;
            }
            b')' => {
                tokens.push(single(TokenKind::RParen));
                i += 1;
            }
            b',' => {
                tokens.push(single(TokenKind::Comma));
                i += 1;
            }
            b'0'..=b'9' | b'.' => {
                i = scan_number(bytes, i);
                let lit = &text[start..i];
                let value: f64 = lit.parse().map_err(|_| ExprError::Lex {
                    offset: start,
                    message: format!("malformed number `{lit}`"),
                })?;
                if !value.is_finite() {
                    return Err(ExprError::Lex {
                        offset: start,
                        message: format!("number `{lit}` overflows"),
                    });
                }
                tokens.push(Token {
                    kind: TokenKind::Number(value),
                    offset: start,
                    text: lit.to_string(),
                });
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                let name = &text[start..i];
                let kind = if let Some(func) = Func::from_name(name) {
                    TokenKind::Func(func)
                } else if let Some(index) = scope.resolve(name) {
                    TokenKind::Var(index)
                } else {
                    return Err(ExprError::Lex {
                        offset: start,
                        message: format!("undeclared identifier `{name}`"),
                    });
                };
                tokens.push(Token {
                    kind,
                    offset: start,
                    text: name.to_string(),
                });
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(ExprError::Lex {
                    offset: start,
                    message: format!("unexpected character `{ch}`"),
                });
            }
        }
    }
    Ok(tokens)
}

fn scan_number(bytes: &[u8], mut i: usize) -> usize {
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    if i < bytes.len() && bytes[i] == b'.' {
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
    }
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        if j < bytes.len() && bytes[j].is_ascii_digit() {
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            i = j;
        }
    }
    i
}
