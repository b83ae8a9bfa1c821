//! Per-line tokenizer. Columns are 1-based character offsets.

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Number(f64),
    Str(String),
    Punct(char),
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Token {
    pub tok: Tok,
    pub col: u32,
    pub end_col: u32,
}

#[derive(Debug, PartialEq)]
pub(crate) struct LexError {
    pub col: u32,
    pub message: String,
}

const PUNCT: &[char] = &['(', ')', '[', ']', ',', '=', ';', ':', '*', '/', '-', '+'];

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_continue(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-'
}

/// Tokenizes one line, dropping a trailing `#` comment.
pub(crate) fn lex_line(line: &str) -> Result<Vec<Token>, LexError> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0usize;
    while i < chars.len() {
        let c = chars[i];
        let col = i as u32 + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c == '#' {
            break;
        } else if c == '"' {
            let mut s = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None => {
                        return Err(LexError {
                            col,
                            message: "unterminated string literal".into(),
                        })
                    }
                    Some('"') => {
                        i += 1;
                        break;
                    }
                    Some('\\') => {
                        let esc = chars.get(i + 1).copied();
                        match esc {
                            Some('"') => s.push('"'),
                            Some('\\') => s.push('\\'),
                            Some('n') => s.push('\n'),
                            Some('t') => s.push('\t'),
                            _ => {
                                return Err(LexError {
                                    col: i as u32 + 1,
                                    message: "invalid escape sequence".into(),
                                })
                            }
                        }
                        i += 2;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                    }
                }
            }
            out.push(Token {
                tok: Tok::Str(s),
                col,
                end_col: i as u32 + 1,
            });
        } else if c.is_ascii_digit()
            || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()))
            || ((c == '-' || c == '+') && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit() || *d == '.'))
        {
            let start = i;
            i += 1;
            while i < chars.len() {
                let d = chars[i];
                let prev = chars[i - 1];
                if d.is_ascii_digit()
                    || d == '.'
                    || d == 'e'
                    || d == 'E'
                    || ((d == '-' || d == '+') && (prev == 'e' || prev == 'E'))
                {
                    i += 1;
                } else {
                    break;
                }
            }
            let text: String = chars[start..i].iter().collect();
            let value: f64 = text.parse().map_err(|_| LexError {
                col,
                message: format!("invalid number `{text}`"),
            })?;
            if !value.is_finite() {
                return Err(LexError {
                    col,
                    message: format!("number `{text}` is not finite"),
                });
            }
            out.push(Token {
                tok: Tok::Number(value),
                col,
                end_col: i as u32 + 1,
            });
        } else if is_ident_start(c) {
            let start = i;
            while i < chars.len() && is_ident_continue(chars[i]) {
                i += 1;
            }
            // A trailing '-' belongs to the next token (e.g. `pi-1` is not
            // meaningful, but `a-` is never a valid identifier).
            while i > start + 1 && chars[i - 1] == '-' {
                i -= 1;
            }
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                col,
                end_col: i as u32 + 1,
            });
        } else if PUNCT.contains(&c) {
            out.push(Token {
                tok: Tok::Punct(c),
                col,
                end_col: col + 1,
            });
            i += 1;
        } else {
            return Err(LexError {
                col,
                message: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}
