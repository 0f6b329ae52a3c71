use std::fmt;

use super::ast::Span;
use super::FrontendError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    // keywords
    Class,
    Interface,
    Extends,
    Implements,
    Abstract,
    KwInt,
    KwBoolean,
    KwString,
    Void,
    Free,
    If,
    Else,
    Return,
    Fail,
    Println,
    New,
    Instanceof,
    True,
    False,
    This,
    Null,
    // punctuation
    LBrace,
    RBrace,
    LParen,
    RParen,
    Semi,
    Comma,
    Dot,
    Assign,
    EqEq,
    NotEq,
    HashEq,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    Bang,
    Eof,
}

impl Tok {
    fn keyword(word: &str) -> Option<Tok> {
        Some(match word {
            "class" => Tok::Class,
            "interface" => Tok::Interface,
            "extends" => Tok::Extends,
            "implements" => Tok::Implements,
            "abstract" => Tok::Abstract,
            "int" => Tok::KwInt,
            "boolean" => Tok::KwBoolean,
            "String" => Tok::KwString,
            "void" => Tok::Void,
            "free" => Tok::Free,
            "if" => Tok::If,
            "else" => Tok::Else,
            "return" => Tok::Return,
            "fail" => Tok::Fail,
            "println" => Tok::Println,
            "new" => Tok::New,
            "instanceof" => Tok::Instanceof,
            "true" => Tok::True,
            "false" => Tok::False,
            "this" => Tok::This,
            "null" => Tok::Null,
            _ => return None,
        })
    }
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tok::Ident(_) => "identifier",
            Tok::Int(_) => "integer literal",
            Tok::Str(_) => "string literal",
            Tok::Class => "`class`",
            Tok::Interface => "`interface`",
            Tok::Extends => "`extends`",
            Tok::Implements => "`implements`",
            Tok::Abstract => "`abstract`",
            Tok::KwInt => "`int`",
            Tok::KwBoolean => "`boolean`",
            Tok::KwString => "`String`",
            Tok::Void => "`void`",
            Tok::Free => "`free`",
            Tok::If => "`if`",
            Tok::Else => "`else`",
            Tok::Return => "`return`",
            Tok::Fail => "`fail`",
            Tok::Println => "`println`",
            Tok::New => "`new`",
            Tok::Instanceof => "`instanceof`",
            Tok::True => "`true`",
            Tok::False => "`false`",
            Tok::This => "`this`",
            Tok::Null => "`null`",
            Tok::LBrace => "`{`",
            Tok::RBrace => "`}`",
            Tok::LParen => "`(`",
            Tok::RParen => "`)`",
            Tok::Semi => "`;`",
            Tok::Comma => "`,`",
            Tok::Dot => "`.`",
            Tok::Assign => "`=`",
            Tok::EqEq => "`==`",
            Tok::NotEq => "`!=`",
            Tok::HashEq => "`#=`",
            Tok::Lt => "`<`",
            Tok::Le => "`<=`",
            Tok::Gt => "`>`",
            Tok::Ge => "`>=`",
            Tok::Plus => "`+`",
            Tok::Minus => "`-`",
            Tok::Star => "`*`",
            Tok::Bang => "`!`",
            Tok::Eof => "end of input",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, FrontendError> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);

    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        let span = Span::new(line, col);
        if c.is_whitespace() {
            bump!();
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                bump!();
            }
            let word: String = chars[start..i].iter().collect();
            let tok = Tok::keyword(&word).unwrap_or(Tok::Ident(word));
            out.push(Token { tok, span });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                bump!();
            }
            let digits: String = chars[start..i].iter().collect();
            let value = digits.parse::<i64>().map_err(|_| FrontendError::Lex {
                span,
                message: format!("integer literal `{digits}` out of range"),
            })?;
            out.push(Token {
                tok: Tok::Int(value),
                span,
            });
            continue;
        }
        if c == '"' {
            bump!();
            let mut text = String::new();
            loop {
                match chars.get(i) {
                    None | Some('\n') => {
                        return Err(FrontendError::Lex {
                            span,
                            message: "unterminated string literal".into(),
                        })
                    }
                    Some('"') => {
                        bump!();
                        break;
                    }
                    Some('\\') => {
                        bump!();
                        let esc = match chars.get(i) {
                            Some('n') => '\n',
                            Some('t') => '\t',
                            Some('"') => '"',
                            Some('\\') => '\\',
                            _ => {
                                return Err(FrontendError::Lex {
                                    span: Span::new(line, col),
                                    message: "invalid escape sequence".into(),
                                })
                            }
                        };
                        text.push(esc);
                        bump!();
                    }
                    Some(&ch) => {
                        text.push(ch);
                        bump!();
                    }
                }
            }
            out.push(Token {
                tok: Tok::Str(text),
                span,
            });
            continue;
        }
        let next = chars.get(i + 1).copied();
        let (tok, len) = match (c, next) {
            ('=', Some('=')) => (Tok::EqEq, 2),
            ('!', Some('=')) => (Tok::NotEq, 2),
            ('#', Some('=')) => (Tok::HashEq, 2),
            ('<', Some('=')) => (Tok::Le, 2),
            ('>', Some('=')) => (Tok::Ge, 2),
            ('=', _) => (Tok::Assign, 1),
            ('!', _) => (Tok::Bang, 1),
            ('<', _) => (Tok::Lt, 1),
            ('>', _) => (Tok::Gt, 1),
            ('{', _) => (Tok::LBrace, 1),
            ('}', _) => (Tok::RBrace, 1),
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            (';', _) => (Tok::Semi, 1),
            (',', _) => (Tok::Comma, 1),
            ('.', _) => (Tok::Dot, 1),
            ('+', _) => (Tok::Plus, 1),
            ('-', _) => (Tok::Minus, 1),
            ('*', _) => (Tok::Star, 1),
            _ => {
                return Err(FrontendError::Lex {
                    span,
                    message: format!("unexpected character `{c}`"),
                })
            }
        };
        for _ in 0..len {
            bump!();
        }
        out.push(Token { tok, span });
    }
    out.push(Token {
        tok: Tok::Eof,
        span: Span::new(line, col),
    });
    Ok(out)
}
