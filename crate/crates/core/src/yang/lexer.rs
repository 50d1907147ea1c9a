//! Tokenizer for the YANG subset.

use super::YangError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Str(String),
    LBrace,
    RBrace,
    Semi,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Str(_) => "string literal".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Semi => "`;`".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Lexed {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | ':')
}

/// Lexes `text` into tokens with 1-based line/column positions.
pub(crate) fn lex(text: &str) -> Result<Vec<Lexed>, YangError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let mut line = 1usize;
    let mut col = 1usize;

    macro_rules! bump {
        ($c:expr) => {{
            if $c == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
        }};
    }

    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            bump!(c);
            continue;
        }
        if c == '/' {
            let (start_line, start_col) = (line, col);
            chars.next();
            bump!(c);
            match chars.peek() {
                Some('/') => {
                    for c in chars.by_ref() {
                        bump!(c);
                        if c == '\n' {
                            break;
                        }
                    }
                }
                Some('*') => {
                    chars.next();
                    bump!('*');
                    let mut closed = false;
                    let mut prev = '\0';
                    for c in chars.by_ref() {
                        bump!(c);
                        if prev == '*' && c == '/' {
                            closed = true;
                            break;
                        }
                        prev = c;
                    }
                    if !closed {
                        return Err(YangError::SyntaxError {
                            line: start_line,
                            col: start_col,
                            expected: "closing `*/` for block comment".into(),
                        });
                    }
                }
                _ => {
                    return Err(YangError::SyntaxError {
                        line: start_line,
                        col: start_col,
                        expected: "`//` or `/*` to start a comment".into(),
                    })
                }
            }
            continue;
        }
        if c == '"' {
            let (start_line, start_col) = (line, col);
            chars.next();
            bump!(c);
            let mut s = String::new();
            let mut closed = false;
            while let Some(&c) = chars.peek() {
                chars.next();
                bump!(c);
                if c == '"' {
                    closed = true;
                    break;
                }
                s.push(c);
            }
            if !closed {
                return Err(YangError::SyntaxError {
                    line: start_line,
                    col: start_col,
                    expected: "closing `\"`".into(),
                });
            }
            out.push(Lexed { tok: Tok::Str(s), line: start_line, col: start_col });
            continue;
        }
        let single = match c {
            '{' => Some(Tok::LBrace),
            '}' => Some(Tok::RBrace),
            ';' => Some(Tok::Semi),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Lexed { tok, line, col });
            chars.next();
            bump!(c);
            continue;
        }
        if is_ident_start(c) {
            let (start_line, start_col) = (line, col);
            let mut s = String::new();
            while let Some(&c) = chars.peek() {
                if !is_ident_char(c) {
                    break;
                }
                s.push(c);
                chars.next();
                bump!(c);
            }
            out.push(Lexed { tok: Tok::Ident(s), line: start_line, col: start_col });
            continue;
        }
        return Err(YangError::SyntaxError {
            line,
            col,
            expected: format!("token, found unexpected character `{c}`"),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_positions_and_comments() {
        let toks = lex("module m { // hi\n  /* multi\nline */ namespace \"u\"; }").unwrap();
        let kinds: Vec<_> = toks.iter().map(|t| t.tok.clone()).collect();
        assert_eq!(
            kinds,
            vec![
                Tok::Ident("module".into()),
                Tok::Ident("m".into()),
                Tok::LBrace,
                Tok::Ident("namespace".into()),
                Tok::Str("u".into()),
                Tok::Semi,
                Tok::RBrace,
            ]
        );
        assert_eq!((toks[0].line, toks[0].col), (1, 1));
        // `namespace` sits on line 3 after the block comment.
        assert_eq!(toks[3].line, 3);
    }

    #[test]
    fn unterminated_block_comment_errors() {
        let err = lex("module m { /* oops").unwrap_err();
        match err {
            YangError::SyntaxError { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
    }
}
