//! Arithmetic expression language for problem coefficients.
//!
//! Coefficients like `f(t, x, y, z)` are written as plain text, for example
//! `"-y + 0.5*sin(3.14*x1) - z1^2"`. The grammar:
//!
//! - variables `t`, `y`, `x1..xd`, `z1..zd`;
//! - operators `+ - * / ^` plus unary minus and parentheses;
//! - functions `sin cos exp sqrt abs tanh` (one argument) and
//!   `min max` (two arguments);
//! - decimal literals with optional exponent (`2`, `0.5`, `1e-3`).
//!
//! Binding: `^` is right-associative and binds tighter than unary minus, so
//! `-y^2` means `-(y^2)` and `2^3^2` means `2^(3^2)`. Unary minus binds
//! tighter than `*` and `/`.
//!
//! Parsing happens once per configuration; a parsed [`Expr`] is then compiled
//! against a variable context (dimension plus which of `t, x, y, z` are in
//! scope), which resolves names to slot indices for cheap evaluation inside
//! the Monte Carlo loops. Evaluation itself never fails: out-of-range math
//! yields IEEE specials, which the problem validator rejects when it samples
//! the coefficient.

use crate::error::{Error, Result};
use std::fmt;

/// Named variable as written in the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    T,
    Y,
    /// `x<i>`, 1-based index.
    X(usize),
    /// `z<i>`, 1-based index.
    Z(usize),
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::T => write!(f, "t"),
            Var::Y => write!(f, "y"),
            Var::X(i) => write!(f, "x{i}"),
            Var::Z(i) => write!(f, "z{i}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func1 {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func2 {
    Min,
    Max,
}

/// Parsed expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call1(Func1, Box<Expr>),
    Call2(Func2, Box<Expr>, Box<Expr>),
}

/// Which variables are legal for a particular coefficient.
#[derive(Debug, Clone, Copy)]
pub struct VarScope {
    pub t: bool,
    pub x: bool,
    pub y: bool,
    pub z: bool,
}

impl VarScope {
    /// `h(x)`.
    pub fn space_only() -> Self {
        VarScope {
            t: false,
            x: true,
            y: false,
            z: false,
        }
    }
    /// `b(t,x)`, `sigma(t,x)`.
    pub fn time_space() -> Self {
        VarScope {
            t: true,
            x: true,
            y: false,
            z: false,
        }
    }
    /// `g(t,x,y)`.
    pub fn time_space_y() -> Self {
        VarScope {
            t: true,
            x: true,
            y: true,
            z: false,
        }
    }
    /// `f(t,x,y,z)`.
    pub fn full() -> Self {
        VarScope {
            t: true,
            x: true,
            y: true,
            z: true,
        }
    }
}

/// Expression compiled against a dimension and scope: variables are slot
/// indices into the evaluation buffer `[t, x1..xd, y, z1..zd]`.
#[derive(Debug, Clone)]
pub struct Compiled {
    node: Node,
    pub dim: usize,
}

#[derive(Debug, Clone)]
enum Node {
    Const(f64),
    Slot(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call1(Func1, Box<Node>),
    Call2(Func2, Box<Node>, Box<Node>),
}

/// Evaluation buffer layout helper for a given dimension.
#[derive(Debug, Clone, Copy)]
pub struct SlotLayout {
    pub dim: usize,
}

impl SlotLayout {
    pub fn new(dim: usize) -> Self {
        SlotLayout { dim }
    }
    #[inline]
    pub fn len(&self) -> usize {
        2 + 2 * self.dim
    }
    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }
    #[inline]
    pub fn t(&self) -> usize {
        0
    }
    #[inline]
    pub fn x(&self, i: usize) -> usize {
        debug_assert!(i < self.dim);
        1 + i
    }
    #[inline]
    pub fn y(&self) -> usize {
        1 + self.dim
    }
    #[inline]
    pub fn z(&self, i: usize) -> usize {
        debug_assert!(i < self.dim);
        2 + self.dim + i
    }
}

impl Expr {
    /// Every variable occurring in the tree.
    pub fn variables(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut Vec<Var>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => {
                if !out.contains(v) {
                    out.push(*v);
                }
            }
            Expr::Neg(e) => e.collect_vars(out),
            Expr::Bin(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
            Expr::Call1(_, e) => e.collect_vars(out),
            Expr::Call2(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
        }
    }

    /// True when no variable occurs at all.
    pub fn is_constant(&self) -> bool {
        self.variables().is_empty()
    }

    /// True when the expression does not read `t`.
    pub fn is_time_independent(&self) -> bool {
        !self.variables().contains(&Var::T)
    }

    /// Resolve variables for dimension `dim` under `scope`.
    pub fn compile(&self, dim: usize, scope: VarScope) -> Result<Compiled> {
        let layout = SlotLayout::new(dim);
        let node = self.compile_node(layout, scope)?;
        Ok(Compiled { node, dim })
    }

    fn compile_node(&self, layout: SlotLayout, scope: VarScope) -> Result<Node> {
        Ok(match self {
            Expr::Const(c) => Node::Const(*c),
            Expr::Var(v) => {
                let reject = |what: &str| {
                    Err(Error::Config(format!(
                        "variable {v} is not available in this coefficient ({what} not in scope)"
                    )))
                };
                match v {
                    Var::T if !scope.t => return reject("t"),
                    Var::Y if !scope.y => return reject("y"),
                    Var::X(_) if !scope.x => return reject("x"),
                    Var::Z(_) if !scope.z => return reject("z"),
                    _ => {}
                }
                match v {
                    Var::T => Node::Slot(layout.t()),
                    Var::Y => Node::Slot(layout.y()),
                    Var::X(i) => {
                        if *i == 0 || *i > layout.dim {
                            return Err(Error::Config(format!(
                                "variable x{i} out of range for dimension {}",
                                layout.dim
                            )));
                        }
                        Node::Slot(layout.x(i - 1))
                    }
                    Var::Z(i) => {
                        if *i == 0 || *i > layout.dim {
                            return Err(Error::Config(format!(
                                "variable z{i} out of range for dimension {}",
                                layout.dim
                            )));
                        }
                        Node::Slot(layout.z(i - 1))
                    }
                }
            }
            Expr::Neg(e) => Node::Neg(Box::new(e.compile_node(layout, scope)?)),
            Expr::Bin(op, l, r) => Node::Bin(
                *op,
                Box::new(l.compile_node(layout, scope)?),
                Box::new(r.compile_node(layout, scope)?),
            ),
            Expr::Call1(f, e) => Node::Call1(*f, Box::new(e.compile_node(layout, scope)?)),
            Expr::Call2(f, l, r) => Node::Call2(
                *f,
                Box::new(l.compile_node(layout, scope)?),
                Box::new(r.compile_node(layout, scope)?),
            ),
        })
    }
}

impl Compiled {
    /// Evaluate against a slot buffer of length `2 + 2 dim`
    /// (`[t, x1..xd, y, z1..zd]`). Never fails; IEEE specials propagate.
    #[inline]
    pub fn eval(&self, slots: &[f64]) -> f64 {
        debug_assert_eq!(slots.len(), 2 + 2 * self.dim);
        eval_node(&self.node, slots)
    }

    /// True when the compiled tree never reads the time slot.
    pub fn is_time_independent(&self) -> bool {
        !node_reads_slot(&self.node, SlotLayout::new(self.dim).t())
    }
}

fn node_reads_slot(node: &Node, slot: usize) -> bool {
    match node {
        Node::Const(_) => false,
        Node::Slot(s) => *s == slot,
        Node::Neg(e) | Node::Call1(_, e) => node_reads_slot(e, slot),
        Node::Bin(_, l, r) | Node::Call2(_, l, r) => {
            node_reads_slot(l, slot) || node_reads_slot(r, slot)
        }
    }
}

fn eval_node(node: &Node, slots: &[f64]) -> f64 {
    match node {
        Node::Const(c) => *c,
        Node::Slot(i) => slots[*i],
        Node::Neg(e) => -eval_node(e, slots),
        Node::Bin(op, l, r) => {
            let a = eval_node(l, slots);
            let b = eval_node(r, slots);
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => a / b,
                BinOp::Pow => a.powf(b),
            }
        }
        Node::Call1(f, e) => {
            let v = eval_node(e, slots);
            match f {
                Func1::Sin => v.sin(),
                Func1::Cos => v.cos(),
                Func1::Exp => v.exp(),
                Func1::Sqrt => v.sqrt(),
                Func1::Abs => v.abs(),
                Func1::Tanh => v.tanh(),
            }
        }
        Node::Call2(f, l, r) => {
            let a = eval_node(l, slots);
            let b = eval_node(r, slots);
            match f {
                Func2::Min => a.min(b),
                Func2::Max => a.max(b),
            }
        }
    }
}

impl fmt::Display for Expr {
    /// Fully parenthesized rendering that re-parses to an expression with the
    /// same value everywhere. Constants print in shortest round-trip form.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => {
                // A bare leading minus would rebind under `^`, which is
                // tighter than negation: `-2 ^ 2` parses as `-(2^2)`.
                if c.is_sign_negative() {
                    write!(f, "({c:?})")
                } else {
                    write!(f, "{c:?}")
                }
            }
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Bin(op, l, r) => {
                let op = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({l} {op} {r})")
            }
            Expr::Call1(func, e) => {
                let name = match func {
                    Func1::Sin => "sin",
                    Func1::Cos => "cos",
                    Func1::Exp => "exp",
                    Func1::Sqrt => "sqrt",
                    Func1::Abs => "abs",
                    Func1::Tanh => "tanh",
                };
                write!(f, "{name}({e})")
            }
            Expr::Call2(func, l, r) => {
                let name = match func {
                    Func2::Min => "min",
                    Func2::Max => "max",
                };
                write!(f, "{name}({l}, {r})")
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v:?}"),
            Tok::Ident(s) => format!("identifier '{s}'"),
            Tok::Plus => "'+'".into(),
            Tok::Minus => "'-'".into(),
            Tok::Star => "'*'".into(),
            Tok::Slash => "'/'".into(),
            Tok::Caret => "'^'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && (self.src[self.pos] as char).is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    /// Next token together with its starting byte offset.
    fn next(&mut self) -> Result<(Tok, usize)> {
        self.skip_ws();
        let start = self.pos;
        if self.pos >= self.src.len() {
            return Ok((Tok::Eof, start));
        }
        let c = self.src[self.pos] as char;
        let simple = match c {
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '^' => Some(Tok::Caret),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(tok) = simple {
            self.pos += 1;
            return Ok((tok, start));
        }
        if c.is_ascii_digit() {
            let mut end = self.pos;
            while end < self.src.len() && (self.src[end] as char).is_ascii_digit() {
                end += 1;
            }
            if end < self.src.len() && self.src[end] == b'.' {
                end += 1;
                while end < self.src.len() && (self.src[end] as char).is_ascii_digit() {
                    end += 1;
                }
            }
            if end < self.src.len() && (self.src[end] == b'e' || self.src[end] == b'E') {
                let mut probe = end + 1;
                if probe < self.src.len() && (self.src[probe] == b'+' || self.src[probe] == b'-') {
                    probe += 1;
                }
                if probe < self.src.len() && (self.src[probe] as char).is_ascii_digit() {
                    end = probe;
                    while end < self.src.len() && (self.src[end] as char).is_ascii_digit() {
                        end += 1;
                    }
                }
            }
            let text = std::str::from_utf8(&self.src[start..end]).expect("ascii digits");
            let value: f64 = text.parse().map_err(|_| Error::Parse {
                offset: start,
                found: format!("'{text}'"),
                expected: vec!["number"],
            })?;
            self.pos = end;
            return Ok((Tok::Num(value), start));
        }
        if c.is_ascii_alphabetic() {
            let mut end = self.pos;
            while end < self.src.len()
                && ((self.src[end] as char).is_ascii_alphanumeric() || self.src[end] == b'_')
            {
                end += 1;
            }
            let text = std::str::from_utf8(&self.src[start..end])
                .expect("ascii idents")
                .to_string();
            self.pos = end;
            return Ok((Tok::Ident(text), start));
        }
        Err(Error::Parse {
            offset: start,
            found: format!("'{c}'"),
            expected: vec!["number", "identifier", "operator", "'('"],
        })
    }
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser<'a> {
    lexer: Lexer<'a>,
    tok: Tok,
    offset: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Self> {
        let mut lexer = Lexer::new(src);
        let (tok, offset) = lexer.next()?;
        Ok(Parser { lexer, tok, offset })
    }

    fn advance(&mut self) -> Result<()> {
        let (tok, offset) = self.lexer.next()?;
        self.tok = tok;
        self.offset = offset;
        Ok(())
    }

    fn fail(&self, expected: Vec<&'static str>) -> Error {
        Error::Parse {
            offset: self.offset,
            found: self.tok.describe(),
            expected,
        }
    }

    fn expect(&mut self, want: Tok, name: &'static str) -> Result<()> {
        if self.tok == want {
            self.advance()
        } else {
            Err(self.fail(vec![name]))
        }
    }

    /// expr := term (('+'|'-') term)*
    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            self.advance()?;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    /// term := unary (('*'|'/') unary)*
    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.tok {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => break,
            };
            self.advance()?;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    /// unary := '-' unary | power. Because `power` handles `^` below,
    /// `-y^2` parses as `-(y^2)`.
    fn unary(&mut self) -> Result<Expr> {
        if self.tok == Tok::Minus {
            self.advance()?;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    /// power := atom ('^' unary)?, right-associative.
    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.tok == Tok::Caret {
            self.advance()?;
            let exponent = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.tok.clone() {
            Tok::Num(v) => {
                self.advance()?;
                Ok(Expr::Const(v))
            }
            Tok::LParen => {
                self.advance()?;
                let inner = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                let ident_offset = self.offset;
                self.advance()?;
                if self.tok == Tok::LParen {
                    self.advance()?;
                    let func1 = match name.as_str() {
                        "sin" => Some(Func1::Sin),
                        "cos" => Some(Func1::Cos),
                        "exp" => Some(Func1::Exp),
                        "sqrt" => Some(Func1::Sqrt),
                        "abs" => Some(Func1::Abs),
                        "tanh" => Some(Func1::Tanh),
                        _ => None,
                    };
                    if let Some(f) = func1 {
                        let arg = self.expr()?;
                        self.expect(Tok::RParen, "')'")?;
                        return Ok(Expr::Call1(f, Box::new(arg)));
                    }
                    let func2 = match name.as_str() {
                        "min" => Some(Func2::Min),
                        "max" => Some(Func2::Max),
                        _ => None,
                    };
                    if let Some(f) = func2 {
                        let a = self.expr()?;
                        self.expect(Tok::Comma, "','")?;
                        let b = self.expr()?;
                        self.expect(Tok::RParen, "')'")?;
                        return Ok(Expr::Call2(f, Box::new(a), Box::new(b)));
                    }
                    return Err(Error::Parse {
                        offset: ident_offset,
                        found: format!("unknown function '{name}'"),
                        expected: vec!["sin", "cos", "exp", "sqrt", "abs", "tanh", "min", "max"],
                    });
                }
                parse_var(&name).map(Expr::Var).ok_or_else(|| Error::Parse {
                    offset: ident_offset,
                    found: format!("unknown variable '{name}'"),
                    expected: vec!["t", "y", "x<i>", "z<i>"],
                })
            }
            _ => Err(self.fail(vec!["number", "identifier", "'('", "'-'"])),
        }
    }
}

fn parse_var(name: &str) -> Option<Var> {
    match name {
        "t" => return Some(Var::T),
        "y" => return Some(Var::Y),
        _ => {}
    }
    let (head, tail) = name.split_at(1);
    if tail.is_empty() || !tail.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let idx: usize = tail.parse().ok()?;
    if idx == 0 {
        return None;
    }
    match head {
        "x" => Some(Var::X(idx)),
        "z" => Some(Var::Z(idx)),
        _ => None,
    }
}

/// Parse an expression source string.
pub fn parse_expression(src: &str) -> Result<Expr> {
    let mut parser = Parser::new(src)?;
    let expr = parser.expr()?;
    if parser.tok != Tok::Eof {
        return Err(parser.fail(vec!["operator", "end of input"]));
    }
    Ok(expr)
}
