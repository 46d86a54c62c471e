//! Minimal s-expression reader shared by the model and report formats.
//!
//! The grammar is parenthesized lists of bare atoms. `;` starts a comment
//! that runs to the end of the line. Every node carries its source
//! position so callers can report errors precisely.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

#[derive(Debug, Clone)]
pub enum Sexpr {
    Atom { text: String, pos: Pos },
    List { items: Vec<Sexpr>, pos: Pos },
}

impl Sexpr {
    pub fn pos(&self) -> Pos {
        match self {
            Sexpr::Atom { pos, .. } | Sexpr::List { pos, .. } => *pos,
        }
    }

    pub fn as_atom(&self) -> Option<&str> {
        match self {
            Sexpr::Atom { text, .. } => Some(text),
            Sexpr::List { .. } => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Sexpr]> {
        match self {
            Sexpr::List { items, .. } => Some(items),
            Sexpr::Atom { .. } => None,
        }
    }

    /// First element of a list when it is an atom: the form's head symbol.
    pub fn head(&self) -> Option<&str> {
        self.as_list().and_then(|items| items.first()).and_then(Sexpr::as_atom)
    }
}

pub fn err_at(pos: Pos, message: impl Into<String>) -> Error {
    Error::Parse {
        line: pos.line,
        col: pos.col,
        message: message.into(),
    }
}

/// Parses every top-level form in `text`.
pub fn parse_all(text: &str) -> Result<Vec<Sexpr>> {
    Parser::new(text).parse_all()
}

/// Parses a document that must consist of exactly one top-level form.
pub fn parse_one(text: &str) -> Result<Sexpr> {
    let mut forms = parse_all(text)?;
    match forms.len() {
        1 => Ok(forms.pop().unwrap()),
        0 => Err(err_at(Pos { line: 1, col: 1 }, "empty document")),
        _ => Err(err_at(forms[1].pos(), "expected a single top-level form")),
    }
}

struct Parser<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    col: u32,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser {
            chars: text.chars().peekable(),
            line: 1,
            col: 1,
        }
    }

    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            col: self.col,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) {
        while let Some(&c) = self.chars.peek() {
            if c == ';' {
                while let Some(&c) = self.chars.peek() {
                    self.bump();
                    if c == '\n' {
                        break;
                    }
                }
            } else if c.is_whitespace() {
                self.bump();
            } else {
                break;
            }
        }
    }

    fn parse_all(&mut self) -> Result<Vec<Sexpr>> {
        let mut forms = Vec::new();
        loop {
            self.skip_trivia();
            if self.chars.peek().is_none() {
                return Ok(forms);
            }
            forms.push(self.parse_form()?);
        }
    }

    fn parse_form(&mut self) -> Result<Sexpr> {
        self.skip_trivia();
        let pos = self.pos();
        match self.chars.peek() {
            None => Err(err_at(pos, "unexpected end of input")),
            Some('(') => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    self.skip_trivia();
                    match self.chars.peek() {
                        None => return Err(err_at(pos, "unclosed '('")),
                        Some(')') => {
                            self.bump();
                            return Ok(Sexpr::List { items, pos });
                        }
                        Some(_) => items.push(self.parse_form()?),
                    }
                }
            }
            Some(')') => Err(err_at(pos, "unexpected ')'")),
            Some(_) => {
                let mut text = String::new();
                while let Some(&c) = self.chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                        break;
                    }
                    text.push(c);
                    self.bump();
                }
                Ok(Sexpr::Atom { text, pos })
            }
        }
    }
}

/// Canonical rendering for reals: integral values keep one decimal digit
/// so `1.0` round-trips as written; everything else uses the shortest
/// representation that parses back to the same bits.
pub fn fmt_real(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        format!("{x:.1}")
    } else {
        format!("{x}")
    }
}
