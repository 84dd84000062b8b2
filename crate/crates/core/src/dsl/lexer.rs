use alloc::string::String;
use alloc::vec::Vec;

use super::DslError;
use crate::symbol::is_symbol_char;

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Tok {
    LBrace,
    RBrace,
    LParen,
    RParen,
    Caret,
    Arrow,
    Minus,
    Plus,
    Equals,
    Less,
    LessEq,
    Greater,
    GreaterEq,
    NotEq,
    /// `<name>` or `?name`
    Var(String),
    /// `@name` or `@"name"`
    Ident(String),
    /// Quoted with `"`, `'` or `|`.
    Str(String),
    Number(f64),
    Symbol(String),
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        use alloc::format;
        match self {
            Tok::LBrace => "'{'".into(),
            Tok::RBrace => "'}'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Caret => "'^'".into(),
            Tok::Arrow => "'-->'".into(),
            Tok::Minus => "'-'".into(),
            Tok::Plus => "'+'".into(),
            Tok::Equals => "'='".into(),
            Tok::Less => "'<'".into(),
            Tok::LessEq => "'<='".into(),
            Tok::Greater => "'>'".into(),
            Tok::GreaterEq => "'>='".into(),
            Tok::NotEq => "'<>'".into(),
            Tok::Var(v) => format!("variable <{}>", v),
            Tok::Ident(i) => format!("identifier @{}", i),
            Tok::Str(s) => format!("string {:?}", s),
            Tok::Number(n) => format!("number {}", n),
            Tok::Symbol(s) => format!("symbol '{}'", s),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

struct Cursor<'a> {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    col: usize,
    _src: &'a str,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, offset: usize) -> Option<char> {
        self.chars.get(self.pos + offset).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.pos).copied()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn error(&self, expected: &str) -> DslError {
        DslError::Syntax { line: self.line, col: self.col, expected: expected.into() }
    }
}

fn is_name_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-'
}

pub(crate) fn tokenize(src: &str) -> Result<Vec<Token>, DslError> {
    let mut cur = Cursor { chars: src.chars().collect(), pos: 0, line: 1, col: 1, _src: src };
    let mut out = Vec::new();
    while let Some(c) = cur.peek() {
        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        if c == '#' || c == ';' {
            while let Some(c) = cur.peek() {
                if c == '\n' {
                    break;
                }
                cur.bump();
            }
            continue;
        }
        let (line, col) = (cur.line, cur.col);
        let tok = match c {
            '{' => single(&mut cur, Tok::LBrace),
            '}' => single(&mut cur, Tok::RBrace),
            '(' => single(&mut cur, Tok::LParen),
            ')' => single(&mut cur, Tok::RParen),
            '^' => single(&mut cur, Tok::Caret),
            '+' => single(&mut cur, Tok::Plus),
            '=' => single(&mut cur, Tok::Equals),
            '>' => {
                cur.bump();
                if cur.peek() == Some('=') {
                    cur.bump();
                    Tok::GreaterEq
                } else {
                    Tok::Greater
                }
            }
            '<' => lex_angle(&mut cur)?,
            '?' => {
                cur.bump();
                match cur.peek() {
                    Some(c) if is_name_start(c) => Tok::Var(read_name(&mut cur)),
                    _ => return Err(cur.error("variable name after '?'")),
                }
            }
            '@' => {
                cur.bump();
                match cur.peek() {
                    Some('"') | Some('|') | Some('\'') => Tok::Ident(read_quoted(&mut cur)?),
                    Some(c) if is_symbol_char(c) => Tok::Ident(read_symbol(&mut cur)),
                    _ => return Err(cur.error("identifier name after '@'")),
                }
            }
            '"' | '|' | '\'' => Tok::Str(read_quoted(&mut cur)?),
            '-' => {
                if cur.peek_at(1) == Some('-') && cur.peek_at(2) == Some('>') {
                    cur.bump();
                    cur.bump();
                    cur.bump();
                    Tok::Arrow
                } else if starts_number(cur.peek_at(1), cur.peek_at(2)) {
                    lex_number(&mut cur)?
                } else {
                    single(&mut cur, Tok::Minus)
                }
            }
            c if c.is_ascii_digit() || (c == '.' && cur.peek_at(1).is_some_and(|d| d.is_ascii_digit())) => {
                lex_number(&mut cur)?
            }
            c if is_name_start(c) || c == ':' || c == '*' => Tok::Symbol(read_symbol(&mut cur)),
            _ => return Err(cur.error("a token")),
        };
        out.push(Token { tok, line, col });
    }
    Ok(out)
}

fn single(cur: &mut Cursor<'_>, tok: Tok) -> Tok {
    cur.bump();
    tok
}

fn starts_number(next: Option<char>, after: Option<char>) -> bool {
    match next {
        Some(d) if d.is_ascii_digit() => true,
        Some('.') => after.is_some_and(|d| d.is_ascii_digit()),
        _ => false,
    }
}

fn lex_angle(cur: &mut Cursor<'_>) -> Result<Tok, DslError> {
    // A variable is `<` [spaces] name [spaces] `>`, anything else is a relation.
    let mut i = 1;
    while cur.peek_at(i).is_some_and(|c| c == ' ' || c == '\t') {
        i += 1;
    }
    if cur.peek_at(i).is_some_and(is_name_start) {
        let mut j = i;
        while cur.peek_at(j).is_some_and(is_name_char) {
            j += 1;
        }
        let name_end = j;
        while cur.peek_at(j).is_some_and(|c| c == ' ' || c == '\t') {
            j += 1;
        }
        if cur.peek_at(j) == Some('>') {
            let name: String = cur.chars[cur.pos + i..cur.pos + name_end].iter().collect();
            for _ in 0..=j {
                cur.bump();
            }
            return Ok(Tok::Var(name));
        }
    }
    cur.bump();
    Ok(match cur.peek() {
        Some('=') => {
            cur.bump();
            Tok::LessEq
        }
        Some('>') => {
            cur.bump();
            Tok::NotEq
        }
        _ => Tok::Less,
    })
}

fn read_name(cur: &mut Cursor<'_>) -> String {
    let mut s = String::new();
    while let Some(c) = cur.peek() {
        if !is_name_char(c) {
            break;
        }
        s.push(c);
        cur.bump();
    }
    s
}

fn read_symbol(cur: &mut Cursor<'_>) -> String {
    let mut s = String::new();
    while let Some(c) = cur.peek() {
        if !is_symbol_char(c) {
            break;
        }
        s.push(c);
        cur.bump();
    }
    s
}

fn read_quoted(cur: &mut Cursor<'_>) -> Result<String, DslError> {
    let quote = cur.bump().expect("caller peeked a quote");
    let mut s = String::new();
    loop {
        match cur.bump() {
            None => return Err(cur.error("closing quote")),
            Some(c) if c == quote => return Ok(s),
            Some('\\') => match cur.bump() {
                Some('n') => s.push('\n'),
                Some('t') => s.push('\t'),
                Some('r') => s.push('\r'),
                Some(other) => s.push(other),
                None => return Err(cur.error("escaped character")),
            },
            Some(c) => s.push(c),
        }
    }
}

fn lex_number(cur: &mut Cursor<'_>) -> Result<Tok, DslError> {
    let mut s = String::new();
    if cur.peek() == Some('-') {
        s.push('-');
        cur.bump();
    }
    while let Some(c) = cur.peek() {
        let exponent_sign = (c == '+' || c == '-') && matches!(s.chars().last(), Some('e') | Some('E'));
        if c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || exponent_sign {
            s.push(c);
            cur.bump();
        } else {
            break;
        }
    }
    if cur.peek().is_some_and(|c| is_symbol_char(c)) {
        return Err(cur.error("a number (symbols may not start with a digit; quote them)"));
    }
    s.parse::<f64>().map(Tok::Number).map_err(|_| cur.error("a valid number"))
}
