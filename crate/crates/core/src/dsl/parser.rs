//! Lexer and recursive-descent parser for the law language.

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

use super::ast::{BinOp, Body, CmpOp, Cond, Expr, LawAst, ParamSpec, Stmt};
use super::builtins::is_builtin_fn;

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    Syntax { expected: Vec<String>, found: String },
    UnknownIdentifier(String),
    DuplicateParam(String),
    ReservedName(String),
    InvalidParam(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: ", self.line, self.col)?;
        match &self.kind {
            ParseErrorKind::Syntax { expected, found } => {
                write!(f, "syntax error: expected ")?;
                if expected.len() == 1 {
                    write!(f, "{}", expected[0])?;
                } else {
                    write!(f, "one of {}", expected.join(", "))?;
                }
                write!(f, ", found {found}")
            }
            ParseErrorKind::UnknownIdentifier(n) => write!(f, "unknown identifier `{n}`"),
            ParseErrorKind::DuplicateParam(n) => write!(f, "duplicate parameter `{n}`"),
            ParseErrorKind::ReservedName(n) => write!(f, "`{n}` is a reserved name"),
            ParseErrorKind::InvalidParam(m) => write!(f, "{m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Comma,
    Semi,
    Assign,
    Plus,
    Minus,
    Star,
    Slash,
    Lt,
    Le,
    Gt,
    Ge,
    EqEq,
    Ne,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Num(n) => format!("number {n}"),
            Tok::Eof => "end of input".to_string(),
            other => format!("`{}`", other.symbol()),
        }
    }

    fn symbol(&self) -> &'static str {
        match self {
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::Comma => ",",
            Tok::Semi => ";",
            Tok::Assign => "=",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::EqEq => "==",
            Tok::Ne => "!=",
            _ => "?",
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

const KEYWORDS: &[&str] = &[
    "param", "elastic", "plastic", "let", "return", "if", "then", "else", "F", "I",
];

fn lex(src: &str) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let advance = |n: usize, i: &mut usize, col: &mut usize| {
            *i += n;
            *col += n;
        };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            advance(1, &mut i, &mut col);
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            col += i - start;
            out.push(Spanned { tok: Tok::Ident(s), line: tl, col: tc });
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            col += i - start;
            let v: f64 = s.parse().map_err(|_| ParseError {
                kind: ParseErrorKind::Syntax {
                    expected: vec!["number".into()],
                    found: format!("`{s}`"),
                },
                line: tl,
                col: tc,
            })?;
            out.push(Spanned { tok: Tok::Num(v), line: tl, col: tc });
            continue;
        }
        let next = chars.get(i + 1).copied();
        let (tok, n) = match (c, next) {
            ('<', Some('=')) => (Tok::Le, 2),
            ('>', Some('=')) => (Tok::Ge, 2),
            ('=', Some('=')) => (Tok::EqEq, 2),
            ('!', Some('=')) => (Tok::Ne, 2),
            ('<', _) => (Tok::Lt, 1),
            ('>', _) => (Tok::Gt, 1),
            ('=', _) => (Tok::Assign, 1),
            ('{', _) => (Tok::LBrace, 1),
            ('}', _) => (Tok::RBrace, 1),
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            (',', _) => (Tok::Comma, 1),
            (';', _) => (Tok::Semi, 1),
            ('+', _) => (Tok::Plus, 1),
            ('-', _) => (Tok::Minus, 1),
            ('*', _) => (Tok::Star, 1),
            ('/', _) => (Tok::Slash, 1),
            _ => {
                return Err(ParseError {
                    kind: ParseErrorKind::Syntax {
                        expected: vec!["a token".into()],
                        found: format!("character `{c}`"),
                    },
                    line: tl,
                    col: tc,
                })
            }
        };
        advance(n, &mut i, &mut col);
        out.push(Spanned { tok, line: tl, col: tc });
    }
    out.push(Spanned { tok: Tok::Eof, line, col });
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    params: Vec<String>,
    locals: Vec<String>,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn bump(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn err_here(&self, kind: ParseErrorKind) -> ParseError {
        let t = &self.toks[self.pos];
        ParseError { kind, line: t.line, col: t.col }
    }

    fn expected(&self, expected: &[&str]) -> ParseError {
        self.err_here(ParseErrorKind::Syntax {
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().describe(),
        })
    }

    fn expect(&mut self, tok: Tok) -> PResult<()> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.expected(&[&format!("`{}`", tok.symbol())]))
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.is_kw(kw) {
            self.bump();
            Ok(())
        } else {
            Err(self.expected(&[&format!("`{kw}`")]))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.expected(&["identifier"])),
        }
    }

    fn binding_name(&mut self) -> PResult<String> {
        let at = self.pos;
        let name = self.ident()?;
        if KEYWORDS.contains(&name.as_str()) || is_builtin_fn(&name) {
            let t = &self.toks[at];
            return Err(ParseError {
                kind: ParseErrorKind::ReservedName(name),
                line: t.line,
                col: t.col,
            });
        }
        Ok(name)
    }

    fn signed_number(&mut self) -> PResult<f64> {
        let neg = if *self.peek() == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(if neg { -v } else { v })
            }
            _ => Err(self.expected(&["number"])),
        }
    }

    fn law(&mut self, source: &str) -> PResult<LawAst> {
        let mut params = Vec::new();
        let mut seen = HashSet::new();
        while self.is_kw("param") {
            let start = self.pos;
            self.bump();
            let name_at = self.pos;
            let name = self.binding_name()?;
            if !seen.insert(name.clone()) {
                let t = &self.toks[name_at];
                return Err(ParseError {
                    kind: ParseErrorKind::DuplicateParam(name),
                    line: t.line,
                    col: t.col,
                });
            }
            self.expect_kw("init")?;
            self.expect(Tok::Assign)?;
            let init = self.signed_number()?;
            self.expect_kw("min")?;
            self.expect(Tok::Assign)?;
            let lo = self.signed_number()?;
            self.expect_kw("max")?;
            self.expect(Tok::Assign)?;
            let hi = self.signed_number()?;
            let log_scale = if self.is_kw("log") && *self.peek_at(1) != Tok::LParen {
                self.bump();
                true
            } else {
                false
            };
            let spec = ParamSpec { name: name.clone(), init, lo, hi, log_scale };
            if let Err(msg) = spec.validate() {
                let t = &self.toks[start];
                return Err(ParseError {
                    kind: ParseErrorKind::InvalidParam(msg),
                    line: t.line,
                    col: t.col,
                });
            }
            self.params.push(name);
            params.push(spec);
        }
        if !self.is_kw("elastic") {
            return Err(self.expected(&["`param`", "`elastic`"]));
        }
        self.bump();
        let elastic = self.block()?;
        self.expect_kw("plastic")?;
        let plastic = self.block()?;
        if *self.peek() != Tok::Eof {
            return Err(self.expected(&["end of input"]));
        }
        Ok(LawAst { params, elastic, plastic, source_text: source.to_string() })
    }

    fn block(&mut self) -> PResult<Body> {
        self.expect(Tok::LBrace)?;
        self.locals.clear();
        let mut stmts = Vec::new();
        loop {
            if self.is_kw("let") {
                self.bump();
                if *self.peek() == Tok::LParen {
                    self.bump();
                    let a = self.binding_name()?;
                    self.expect(Tok::Comma)?;
                    let b = self.binding_name()?;
                    self.expect(Tok::Comma)?;
                    let c = self.binding_name()?;
                    self.expect(Tok::RParen)?;
                    self.expect(Tok::Assign)?;
                    let e = self.expr()?;
                    self.expect(Tok::Semi)?;
                    self.locals.extend([a.clone(), b.clone(), c.clone()]);
                    stmts.push(Stmt::LetSvd([a, b, c], e));
                } else {
                    let name = self.binding_name()?;
                    self.expect(Tok::Assign)?;
                    let e = self.expr()?;
                    self.expect(Tok::Semi)?;
                    self.locals.push(name.clone());
                    stmts.push(Stmt::Let(name, e));
                }
            } else if self.is_kw("return") {
                self.bump();
                let ret = self.expr()?;
                self.expect(Tok::RBrace)?;
                return Ok(Body { stmts, ret });
            } else {
                return Err(self.expected(&["`let`", "`return`"]));
            }
        }
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.additive()
    }

    fn cond(&mut self) -> PResult<Cond> {
        let lhs = self.additive()?;
        let op = match self.peek() {
            Tok::Lt => CmpOp::Lt,
            Tok::Le => CmpOp::Le,
            Tok::Gt => CmpOp::Gt,
            Tok::Ge => CmpOp::Ge,
            Tok::EqEq => CmpOp::Eq,
            Tok::Ne => CmpOp::Ne,
            _ => return Err(self.expected(&["`<`", "`<=`", "`>`", "`>=`", "`==`", "`!=`"])),
        };
        self.bump();
        let rhs = self.additive()?;
        Ok(Cond { op, lhs, rhs })
    }

    fn additive(&mut self) -> PResult<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        if *self.peek() == Tok::Minus {
            self.bump();
            let e = self.unary()?;
            return Ok(Expr::Neg(Box::new(e)));
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) if name == "if" => {
                self.bump();
                let cond = self.cond()?;
                self.expect_kw("then")?;
                let then = self.expr()?;
                self.expect_kw("else")?;
                let otherwise = self.expr()?;
                Ok(Expr::If {
                    cond: Box::new(cond),
                    then: Box::new(then),
                    otherwise: Box::new(otherwise),
                })
            }
            Tok::Ident(name) => {
                if *self.peek_at(1) == Tok::LParen {
                    if !is_builtin_fn(&name) {
                        return Err(self.err_here(ParseErrorKind::UnknownIdentifier(name)));
                    }
                    self.bump();
                    self.bump();
                    let mut args = vec![self.expr()?];
                    while *self.peek() == Tok::Comma {
                        self.bump();
                        args.push(self.expr()?);
                    }
                    self.expect(Tok::RParen)?;
                    return Ok(Expr::Call(name, args));
                }
                let known = name == "F"
                    || name == "I"
                    || self.locals.contains(&name)
                    || self.params.contains(&name);
                if !known {
                    return Err(self.err_here(ParseErrorKind::UnknownIdentifier(name)));
                }
                self.bump();
                Ok(Expr::Var(name))
            }
            _ => Err(self.expected(&["number", "identifier", "`(`", "`if`"])),
        }
    }
}

/// Parses law source text into an AST, resolving every identifier.
pub fn parse_law(source: &str) -> Result<LawAst, ParseError> {
    let toks = lex(source)?;
    let mut p = Parser { toks, pos: 0, params: Vec::new(), locals: Vec::new() };
    p.law(source)
}
