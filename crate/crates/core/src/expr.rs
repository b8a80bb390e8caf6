//! Scalar coefficient expressions in `t` and the state coordinates.
//!
//! Grammar (loosest to tightest): `+ -`, `* /`, unary `-`, `^` (right
//! associative). Variables are `t`, `x` (alias of `x1`) and `x1`, `x2`, ...
//! for multi-dimensional states. Functions: `exp log sqrt abs sin cos tanh`
//! (one argument) and `min max` (two arguments).
//!
//! Evaluation never traps: a non-finite result is returned in-band as an
//! `f64`, and [`CoefficientExpr::eval_checked`] turns it into
//! [`ExprError::EvalDomain`] for callers that need a finite value.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at position {position}: expected {}", expected.join(" or "))]
    Syntax { position: usize, expected: Vec<String> },
    #[error("unknown identifier `{name}` at position {position}")]
    UnknownIdentifier { name: String, position: usize },
    #[error("function `{name}` takes {expected} argument(s), got {found} (position {position})")]
    Arity { name: String, expected: usize, found: usize, position: usize },
    #[error("`{expr}` is not finite at t={t}, x={x:?}")]
    EvalDomain { expr: String, t: f64, x: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Abs,
    Sin,
    Cos,
    Tanh,
    Min,
    Max,
}

impl Func {
    pub const ALL: [Func; 9] = [
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Abs,
        Func::Sin,
        Func::Cos,
        Func::Tanh,
        Func::Min,
        Func::Max,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tanh => "tanh",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    fn lookup(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    fn apply1(self, a: f64) -> f64 {
        match self {
            Func::Exp => a.exp(),
            Func::Log => {
                if a > 0.0 {
                    a.ln()
                } else {
                    f64::NAN
                }
            }
            Func::Sqrt => a.sqrt(),
            Func::Abs => a.abs(),
            Func::Sin => a.sin(),
            Func::Cos => a.cos(),
            Func::Tanh => a.tanh(),
            Func::Min | Func::Max => unreachable!("binary function applied to one argument"),
        }
    }

    fn apply2(self, a: f64, b: f64) -> f64 {
        match self {
            Func::Min => a.min(b),
            Func::Max => a.max(b),
            _ => unreachable!("unary function applied to two arguments"),
        }
    }
}

/// Expression tree. Coordinates are zero-based (`x` and `x1` are `Coord(0)`).
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Time,
    Coord(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

fn pow(base: f64, exp: f64) -> f64 {
    if exp.fract() == 0.0 && exp.abs() <= 64.0 {
        base.powi(exp as i32)
    } else {
        base.powf(exp)
    }
}

fn binop(op: BinOp, a: f64, b: f64) -> f64 {
    match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div => a / b,
        BinOp::Pow => pow(a, b),
    }
}

impl Node {
    fn eval(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            Node::Num(v) => *v,
            Node::Time => t,
            Node::Coord(i) => x.get(*i).copied().unwrap_or(f64::NAN),
            Node::Neg(a) => -a.eval(t, x),
            Node::Bin(op, a, b) => binop(*op, a.eval(t, x), b.eval(t, x)),
            Node::Call(f, args) => match args.as_slice() {
                [a] => f.apply1(a.eval(t, x)),
                [a, b] => f.apply2(a.eval(t, x), b.eval(t, x)),
                _ => f64::NAN,
            },
        }
    }

    fn uses_time(&self) -> bool {
        match self {
            Node::Time => true,
            Node::Num(_) | Node::Coord(_) => false,
            Node::Neg(a) => a.uses_time(),
            Node::Bin(_, a, b) => a.uses_time() || b.uses_time(),
            Node::Call(_, args) => args.iter().any(Node::uses_time),
        }
    }

    fn coord_count(&self) -> usize {
        match self {
            Node::Coord(i) => i + 1,
            Node::Num(_) | Node::Time => 0,
            Node::Neg(a) => a.coord_count(),
            Node::Bin(_, a, b) => a.coord_count().max(b.coord_count()),
            Node::Call(_, args) => args.iter().map(Node::coord_count).max().unwrap_or(0),
        }
    }

    fn compile(&self, out: &mut Vec<Instr>) {
        match self {
            Node::Num(v) => out.push(Instr::Push(*v)),
            Node::Time => out.push(Instr::Time),
            Node::Coord(i) => out.push(Instr::Coord(*i)),
            Node::Neg(a) => {
                a.compile(out);
                out.push(Instr::Neg);
            }
            Node::Bin(BinOp::Pow, a, b) if matches!(**b, Node::Num(n) if n.fract() == 0.0 && n.abs() <= 64.0) => {
                a.compile(out);
                let Node::Num(n) = **b else { unreachable!() };
                out.push(Instr::PowI(n as i32));
            }
            Node::Bin(op, a, b) => {
                a.compile(out);
                b.compile(out);
                out.push(Instr::Bin(*op));
            }
            Node::Call(f, args) => {
                for a in args {
                    a.compile(out);
                }
                out.push(Instr::Call(*f));
            }
        }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Num(v) if v.is_sign_negative() => write!(f, "(-{:?})", v.abs()),
            Node::Num(v) => write!(f, "{v:?}"),
            Node::Time => f.write_str("t"),
            Node::Coord(0) => f.write_str("x"),
            Node::Coord(i) => write!(f, "x{}", i + 1),
            Node::Neg(a) => write!(f, "(-{a})"),
            Node::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Node::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Instr {
    Push(f64),
    Time,
    Coord(usize),
    Neg,
    PowI(i32),
    Bin(BinOp),
    Call(Func),
}

const STACK: usize = 32;

/// A parsed coefficient field `f(t, x)`. Immutable and cheap to evaluate.
#[derive(Debug, Clone)]
pub struct CoefficientExpr {
    source: String,
    ast: Node,
    program: Vec<Instr>,
    depth: usize,
    uses_time: bool,
    coords: usize,
}

impl PartialEq for CoefficientExpr {
    fn eq(&self, other: &Self) -> bool {
        self.ast == other.ast
    }
}

impl CoefficientExpr {
    pub fn parse(text: &str) -> Result<Self, ExprError> {
        let tokens = lex(text)?;
        let mut parser = Parser { tokens, pos: 0, len: text.len() };
        let ast = parser.expr(0)?;
        parser.expect_end()?;
        Ok(Self::with_source(ast, text.trim().to_string()))
    }

    pub fn from_ast(ast: Node) -> Self {
        let source = ast.to_string();
        Self::with_source(ast, source)
    }

    fn with_source(ast: Node, source: String) -> Self {
        let mut program = Vec::new();
        ast.compile(&mut program);
        let mut depth = 0usize;
        let mut max_depth = 0usize;
        for ins in &program {
            match ins {
                Instr::Push(_) | Instr::Time | Instr::Coord(_) => depth += 1,
                Instr::Neg | Instr::PowI(_) => {}
                Instr::Bin(_) => depth -= 1,
                Instr::Call(f) => depth -= f.arity() - 1,
            }
            max_depth = max_depth.max(depth);
        }
        Self {
            uses_time: ast.uses_time(),
            coords: ast.coord_count(),
            source,
            ast,
            program,
            depth: max_depth,
        }
    }

    pub fn constant(value: f64) -> Self {
        Self::from_ast(Node::Num(value))
    }

    pub fn ast(&self) -> &Node {
        &self.ast
    }

    /// The text this expression was parsed from (or its rendering if built).
    pub fn source(&self) -> &str {
        &self.source
    }

    /// Canonical, fully parenthesized rendering; parses back to the same tree.
    pub fn render(&self) -> String {
        self.ast.to_string()
    }

    pub fn uses_time(&self) -> bool {
        self.uses_time
    }

    /// Number of state coordinates referenced (highest index + 1).
    pub fn coord_count(&self) -> usize {
        self.coords
    }

    /// The value of a literal constant expression.
    pub fn as_constant(&self) -> Option<f64> {
        match self.ast {
            Node::Num(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.ast, Node::Num(v) if v == 0.0)
    }

    /// Scalar-state evaluation.
    #[inline]
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        self.eval_at(t, std::slice::from_ref(&x))
    }

    /// Evaluation at a state vector. Non-finite results are returned in-band.
    #[inline]
    pub fn eval_at(&self, t: f64, x: &[f64]) -> f64 {
        if self.depth > STACK {
            return self.ast.eval(t, x);
        }
        let mut stack = [0.0f64; STACK];
        let mut sp = 0usize;
        for ins in &self.program {
            match *ins {
                Instr::Push(v) => {
                    stack[sp] = v;
                    sp += 1;
                }
                Instr::Time => {
                    stack[sp] = t;
                    sp += 1;
                }
                Instr::Coord(i) => {
                    stack[sp] = x.get(i).copied().unwrap_or(f64::NAN);
                    sp += 1;
                }
                Instr::Neg => stack[sp - 1] = -stack[sp - 1],
                Instr::PowI(n) => stack[sp - 1] = stack[sp - 1].powi(n),
                Instr::Bin(op) => {
                    sp -= 1;
                    stack[sp - 1] = binop(op, stack[sp - 1], stack[sp]);
                }
                Instr::Call(f) => {
                    if f.arity() == 2 {
                        sp -= 1;
                        stack[sp - 1] = f.apply2(stack[sp - 1], stack[sp]);
                    } else {
                        stack[sp - 1] = f.apply1(stack[sp - 1]);
                    }
                }
            }
        }
        stack[0]
    }

    pub fn eval_checked(&self, t: f64, x: f64) -> Result<f64, ExprError> {
        self.eval_at_checked(t, std::slice::from_ref(&x))
    }

    pub fn eval_at_checked(&self, t: f64, x: &[f64]) -> Result<f64, ExprError> {
        let v = self.eval_at(t, x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::EvalDomain { expr: self.source.clone(), t, x: x.to_vec() })
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::from_ast(Node::Bin(BinOp::Add, Box::new(self.ast.clone()), Box::new(other.ast.clone())))
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self::from_ast(Node::Bin(BinOp::Mul, Box::new(self.ast.clone()), Box::new(other.ast.clone())))
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self::constant(factor).mul(self)
    }

    pub fn square(&self) -> Self {
        Self::from_ast(Node::Bin(BinOp::Pow, Box::new(self.ast.clone()), Box::new(Node::Num(2.0))))
    }

    /// Sum of terms, skipping literal zeros. An empty sum is the constant 0.
    pub fn sum<'a>(terms: impl IntoIterator<Item = &'a CoefficientExpr>) -> Self {
        let mut acc: Option<Node> = None;
        for term in terms {
            if term.is_zero() {
                continue;
            }
            acc = Some(match acc {
                None => term.ast.clone(),
                Some(a) => Node::Bin(BinOp::Add, Box::new(a), Box::new(term.ast.clone())),
            });
        }
        Self::from_ast(acc.unwrap_or(Node::Num(0.0)))
    }
}

impl fmt::Display for CoefficientExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl std::str::FromStr for CoefficientExpr {
    type Err = ExprError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for CoefficientExpr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for CoefficientExpr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Self::parse(&text).map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == '.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
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
            let value: f64 = text[start..i].parse().map_err(|_| ExprError::Syntax {
                position: start,
                expected: vec!["number".into()],
            })?;
            if !value.is_finite() {
                return Err(ExprError::Syntax { position: start, expected: vec!["finite number".into()] });
            }
            out.push((Tok::Num(value), start));
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(text[start..i].to_string()), start));
        } else {
            let tok = match c {
                '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                _ => {
                    return Err(ExprError::Syntax { position: start, expected: operand_expected() });
                }
            };
            out.push((tok, start));
            i += c.len_utf8();
        }
    }
    Ok(out)
}

fn operand_expected() -> Vec<String> {
    ["number", "identifier", "(", "-"].iter().map(|s| s.to_string()).collect()
}

// ---------------------------------------------------------------------------
// Pratt parser

const BP_ADD: u8 = 10;
const BP_MUL: u8 = 20;
const BP_NEG: u8 = 30;
const BP_POW: u8 = 40;

struct Parser {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn position(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.len, |(_, p)| *p)
    }

    fn next(&mut self) -> Option<(Tok, usize)> {
        let tok = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        tok
    }

    fn expect_end(&self) -> Result<(), ExprError> {
        if self.pos < self.tokens.len() {
            return Err(ExprError::Syntax {
                position: self.position(),
                expected: vec!["operator".into(), "end of input".into()],
            });
        }
        Ok(())
    }

    fn expr(&mut self, min_bp: u8) -> Result<Node, ExprError> {
        let mut lhs = self.prefix()?;
        loop {
            let (op, lbp, rbp) = match self.peek() {
                Some(Tok::Op('+')) => (BinOp::Add, BP_ADD, BP_ADD + 1),
                Some(Tok::Op('-')) => (BinOp::Sub, BP_ADD, BP_ADD + 1),
                Some(Tok::Op('*')) => (BinOp::Mul, BP_MUL, BP_MUL + 1),
                Some(Tok::Op('/')) => (BinOp::Div, BP_MUL, BP_MUL + 1),
                Some(Tok::Op('^')) => (BinOp::Pow, BP_POW, BP_POW - 1),
                _ => break,
            };
            if lbp < min_bp {
                break;
            }
            self.pos += 1;
            let rhs = self.expr(rbp)?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn prefix(&mut self) -> Result<Node, ExprError> {
        let position = self.position();
        match self.next() {
            Some((Tok::Num(v), _)) => Ok(Node::Num(v)),
            Some((Tok::Op('-'), _)) => Ok(Node::Neg(Box::new(self.expr(BP_NEG)?))),
            Some((Tok::LParen, _)) => {
                let inner = self.expr(0)?;
                self.close_paren()?;
                Ok(inner)
            }
            Some((Tok::Ident(name), at)) => self.identifier(name, at),
            _ => Err(ExprError::Syntax { position, expected: operand_expected() }),
        }
    }

    fn close_paren(&mut self) -> Result<(), ExprError> {
        let position = self.position();
        match self.next() {
            Some((Tok::RParen, _)) => Ok(()),
            _ => Err(ExprError::Syntax { position, expected: vec![")".into(), "operator".into()] }),
        }
    }

    fn identifier(&mut self, name: String, at: usize) -> Result<Node, ExprError> {
        if let Some(func) = Func::lookup(&name) {
            let position = self.position();
            if self.peek() != Some(&Tok::LParen) {
                return Err(ExprError::Syntax { position, expected: vec!["(".into()] });
            }
            self.pos += 1;
            let mut args = vec![self.expr(0)?];
            while self.peek() == Some(&Tok::Comma) {
                self.pos += 1;
                args.push(self.expr(0)?);
            }
            self.close_paren()?;
            if args.len() != func.arity() {
                return Err(ExprError::Arity {
                    name,
                    expected: func.arity(),
                    found: args.len(),
                    position: at,
                });
            }
            return Ok(Node::Call(func, args));
        }
        match name.as_str() {
            "t" => Ok(Node::Time),
            "x" => Ok(Node::Coord(0)),
            _ => match name.strip_prefix('x').and_then(|d| d.parse::<usize>().ok()) {
                Some(i) if i >= 1 && !name[1..].starts_with('0') => Ok(Node::Coord(i - 1)),
                _ => Err(ExprError::UnknownIdentifier { name, position: at }),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(text: &str, t: f64, x: f64) -> f64 {
        CoefficientExpr::parse(text).unwrap().eval(t, x)
    }

    #[test]
    fn arithmetic_examples() {
        assert_eq!(ev("x^3", 0.0, 2.0), 8.0);
        assert_eq!(ev("2*t + exp(0*x)", 1.0, 5.0), 3.0);
        assert_eq!(ev("sqrt(x)", 0.0, 4.0), 2.0);
        assert_eq!(ev("min(x, 3)", 0.0, 10.0), 3.0);
        assert_eq!(ev("max(x, 3)", 0.0, 10.0), 10.0);
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("2+3*4", 0.0, 0.0), 14.0);
        assert_eq!(ev("2^3^2", 0.0, 0.0), 512.0);
        assert_eq!(ev("-2^2", 0.0, 0.0), -4.0);
        assert_eq!(ev("2^-1", 0.0, 0.0), 0.5);
        assert_eq!(ev("8/4/2", 0.0, 0.0), 1.0);
        assert_eq!(ev("5-3-1", 0.0, 0.0), 1.0);
        assert_eq!(ev("-x*3", 0.0, 2.0), -6.0);
        assert_eq!(ev("(1+2)*3", 0.0, 0.0), 9.0);
        assert_eq!(ev("1.5e1 + .5", 0.0, 0.0), 15.5);
    }

    #[test]
    fn dangling_operator_reports_position() {
        match CoefficientExpr::parse("x +") {
            Err(ExprError::Syntax { position, expected }) => {
                assert_eq!(position, 3);
                assert!(expected.iter().any(|e| e == "number"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn other_syntax_errors() {
        assert!(matches!(CoefficientExpr::parse("(x"), Err(ExprError::Syntax { position: 2, .. })));
        assert!(matches!(CoefficientExpr::parse("x x"), Err(ExprError::Syntax { position: 2, .. })));
        assert!(matches!(CoefficientExpr::parse(""), Err(ExprError::Syntax { position: 0, .. })));
        assert!(matches!(CoefficientExpr::parse("x # 2"), Err(ExprError::Syntax { position: 2, .. })));
        assert!(matches!(CoefficientExpr::parse("exp x"), Err(ExprError::Syntax { .. })));
        assert!(matches!(CoefficientExpr::parse("1e999"), Err(ExprError::Syntax { .. })));
    }

    #[test]
    fn unknown_names_and_arity() {
        assert!(matches!(
            CoefficientExpr::parse("y + 1"),
            Err(ExprError::UnknownIdentifier { ref name, position: 0 }) if name == "y"
        ));
        assert!(matches!(CoefficientExpr::parse("x0"), Err(ExprError::UnknownIdentifier { .. })));
        assert!(matches!(CoefficientExpr::parse("min(x)"), Err(ExprError::Arity { expected: 2, found: 1, .. })));
        assert!(matches!(CoefficientExpr::parse("exp(x, 1)"), Err(ExprError::Arity { .. })));
    }

    #[test]
    fn domain_errors_are_in_band_until_checked() {
        let e = CoefficientExpr::parse("1/x").unwrap();
        assert!(e.eval(0.0, 0.0).is_infinite());
        assert!(matches!(e.eval_checked(0.0, 0.0), Err(ExprError::EvalDomain { .. })));
        let l = CoefficientExpr::parse("log(x)").unwrap();
        assert!(l.eval(0.0, -1.0).is_nan());
        assert!(l.eval_checked(0.0, 0.0).is_err());
        assert_eq!(l.eval_checked(0.0, 1.0), Ok(0.0));
    }

    #[test]
    fn vector_coordinates() {
        let e = CoefficientExpr::parse("x1 * x2 + x - t").unwrap();
        assert_eq!(e.coord_count(), 2);
        assert!(e.uses_time());
        assert_eq!(e.eval_at(1.0, &[2.0, 3.0]), 7.0);
        assert!(!CoefficientExpr::parse("x^2").unwrap().uses_time());
    }

    #[test]
    fn builders_skip_zero_terms() {
        let a = CoefficientExpr::parse("x").unwrap();
        let z = CoefficientExpr::constant(0.0);
        assert_eq!(CoefficientExpr::sum([&a, &z]), a);
        assert!(CoefficientExpr::sum([&z, &z]).is_zero());
        assert_eq!(a.square().eval(0.0, 3.0), 9.0);
    }

    #[test]
    fn deep_expressions_fall_back_to_tree_walk() {
        let text = (0..40).fold("x".to_string(), |acc, _| format!("(1 + {acc})"));
        let deep = "1+(".repeat(40) + "x" + &")".repeat(40);
        assert_eq!(ev(&text, 0.0, 1.0), 41.0);
        assert_eq!(ev(&deep, 0.0, 1.0), 41.0);
    }

    fn arb_node() -> impl Strategy<Value = Node> {
        let leaf = prop_oneof![
            (-50.0f64..50.0).prop_map(Node::Num),
            Just(Node::Time),
            Just(Node::Coord(0)),
        ];
        leaf.prop_recursive(5, 48, 3, |inner| {
            prop_oneof![
                inner.clone().prop_map(|a| Node::Neg(Box::new(a))),
                (
                    prop_oneof![
                        Just(BinOp::Add),
                        Just(BinOp::Sub),
                        Just(BinOp::Mul),
                        Just(BinOp::Div),
                        Just(BinOp::Pow)
                    ],
                    inner.clone(),
                    inner.clone()
                )
                    .prop_map(|(op, a, b)| Node::Bin(op, Box::new(a), Box::new(b))),
                (prop_oneof![Just(Func::Exp), Just(Func::Sin), Just(Func::Tanh), Just(Func::Abs)], inner.clone())
                    .prop_map(|(f, a)| Node::Call(f, vec![a])),
                (prop_oneof![Just(Func::Min), Just(Func::Max)], inner.clone(), inner)
                    .prop_map(|(f, a, b)| Node::Call(f, vec![a, b])),
            ]
        })
    }

    proptest! {
        #[test]
        fn render_round_trip(node in arb_node()) {
            let expr = CoefficientExpr::from_ast(node);
            let back = CoefficientExpr::parse(&expr.render()).unwrap();
            for i in 0..5 {
                for j in 0..5 {
                    let (t, x) = (0.3 * i as f64, -1.7 + 0.9 * j as f64);
                    let (a, b) = (expr.eval(t, x), back.eval(t, x));
                    prop_assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()), "{} vs {}", a, b);
                }
            }
        }

        #[test]
        fn compiled_matches_tree(node in arb_node(), t in -2.0f64..2.0, x in -3.0f64..3.0) {
            let expr = CoefficientExpr::from_ast(node.clone());
            let a = expr.eval(t, x);
            let b = node.eval(t, &[x]);
            prop_assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
        }

        #[test]
        fn evaluation_is_pure(node in arb_node(), t in -2.0f64..2.0, x in -3.0f64..3.0) {
            let expr = CoefficientExpr::from_ast(node);
            let (a, b) = (expr.eval(t, x), expr.eval(t, x));
            prop_assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
        }
    }
}
