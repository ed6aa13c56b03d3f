//! A small expression language for vector fields.
//!
//! Grammar: numbers, identifiers, `+ - * /`, right-associative `^`, unary minus,
//! parentheses and the unary functions `sin cos exp tanh sqrt ln`. `pi` is a constant
//! unless a variable shadows it.

use std::cell::RefCell;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Tanh,
    Sqrt,
    Ln,
}

impl Func {
    pub const ALL: [Func; 6] = [Func::Sin, Func::Cos, Func::Exp, Func::Tanh, Func::Sqrt, Func::Ln];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Tanh => "tanh",
            Func::Sqrt => "sqrt",
            Func::Ln => "ln",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
            Func::Tanh => v.tanh(),
            Func::Sqrt => v.sqrt(),
            Func::Ln => v.ln(),
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

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }

    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => a / b,
            BinOp::Pow => a.powf(b),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Variable names; the position of a name is its slot in the evaluation vector.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Scope {
    names: Vec<String>,
}

impl Scope {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Self {
        Self { names: names.into_iter().map(Into::into).collect() }
    }
    pub fn len(&self) -> usize {
        self.names.len()
    }
    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }
    pub fn names(&self) -> &[String] {
        &self.names
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("{line}:{column}: unexpected character '{ch}'")]
    UnexpectedChar { line: usize, column: usize, ch: char },
    #[error("{line}:{column}: expected {expected}, found {found}")]
    Unexpected { line: usize, column: usize, expected: String, found: String },
    #[error("{line}:{column}: unknown identifier '{name}'")]
    UnknownIdentifier { line: usize, column: usize, name: String },
    #[error("{line}:{column}: '{name}' takes {expected} argument(s), got {found}")]
    Arity { line: usize, column: usize, name: String, expected: usize, found: usize },
    #[error("{line}:{column}: malformed number '{text}'")]
    BadNumber { line: usize, column: usize, text: String },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(v) => write!(f, "number {v}"),
            Tok::Ident(s) => write!(f, "'{s}'"),
            Tok::Op(c) => write!(f, "'{c}'"),
            Tok::LParen => f.write_str("'('"),
            Tok::RParen => f.write_str("')'"),
            Tok::Comma => f.write_str("','"),
            Tok::End => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let (start_line, start_col) = (line, col);
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        let tok = if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let s = i;
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
            let text: String = chars[s..i].iter().collect();
            col += i - s;
            let v = text.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| ParseError::BadNumber { line: start_line, column: start_col, text: text.clone() })?;
            out.push(Token { tok: Tok::Num(v), line: start_line, column: start_col });
            continue;
        } else if c.is_alphabetic() || c == '_' {
            let s = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - s;
            out.push(Token { tok: Tok::Ident(chars[s..i].iter().collect()), line: start_line, column: start_col });
            continue;
        } else {
            match c {
                '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                _ => return Err(ParseError::UnexpectedChar { line, column: col, ch: c }),
            }
        };
        out.push(Token { tok, line: start_line, column: start_col });
        i += 1;
        col += 1;
    }
    out.push(Token { tok: Tok::End, line, column: col });
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    scope: &'a Scope,
}

impl Parser<'_> {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<Token, ParseError> {
        let t = self.next();
        if t.tok == want {
            Ok(t)
        } else {
            Err(ParseError::Unexpected { line: t.line, column: t.column, expected: what.into(), found: t.tok.to_string() })
        }
    }

    fn expr(&mut self, min_bp: u8) -> Result<Expr, ParseError> {
        let mut lhs = self.prefix()?;
        loop {
            let (op, l_bp, r_bp) = match self.peek().tok {
                Tok::Op('+') => (BinOp::Add, 1, 2),
                Tok::Op('-') => (BinOp::Sub, 1, 2),
                Tok::Op('*') => (BinOp::Mul, 3, 4),
                Tok::Op('/') => (BinOp::Div, 3, 4),
                Tok::Op('^') => (BinOp::Pow, 8, 7),
                _ => break,
            };
            if l_bp < min_bp {
                break;
            }
            self.next();
            let rhs = self.expr(r_bp)?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn prefix(&mut self) -> Result<Expr, ParseError> {
        let t = self.next();
        match t.tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Op('-') => Ok(Expr::Neg(Box::new(self.expr(5)?))),
            Tok::LParen => {
                let e = self.expr(0)?;
                self.expect(Tok::RParen, "')'")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if self.peek().tok == Tok::LParen {
                    self.next();
                    let mut args = Vec::new();
                    if self.peek().tok != Tok::RParen {
                        loop {
                            args.push(self.expr(0)?);
                            if self.peek().tok == Tok::Comma {
                                self.next();
                            } else {
                                break;
                            }
                        }
                    }
                    self.expect(Tok::RParen, "')'")?;
                    let func = Func::from_name(&name).ok_or_else(|| ParseError::UnknownIdentifier { line: t.line, column: t.column, name: name.clone() })?;
                    if args.len() != 1 {
                        return Err(ParseError::Arity { line: t.line, column: t.column, name, expected: 1, found: args.len() });
                    }
                    return Ok(Expr::Call(func, Box::new(args.pop().unwrap())));
                }
                if let Some(i) = self.scope.index(&name) {
                    Ok(Expr::Var(i))
                } else if name == "pi" {
                    Ok(Expr::Num(std::f64::consts::PI))
                } else {
                    Err(ParseError::UnknownIdentifier { line: t.line, column: t.column, name })
                }
            }
            other => Err(ParseError::Unexpected { line: t.line, column: t.column, expected: "an expression".into(), found: other.to_string() }),
        }
    }
}

pub fn parse(text: &str, scope: &Scope) -> Result<Expr, ParseError> {
    let mut p = Parser { toks: lex(text)?, pos: 0, scope };
    let e = p.expr(0)?;
    let t = p.peek().clone();
    if t.tok != Tok::End {
        return Err(ParseError::Unexpected { line: t.line, column: t.column, expected: "an operator or end of input".into(), found: t.tok.to_string() });
    }
    Ok(e)
}

fn num(v: f64) -> Expr {
    Expr::Num(v)
}

fn is(e: &Expr, v: f64) -> bool {
    matches!(e, Expr::Num(x) if *x == v)
}

fn fold(op: BinOp, a: Expr, b: Expr) -> Expr {
    if let (Expr::Num(x), Expr::Num(y)) = (&a, &b) {
        let v = op.apply(*x, *y);
        if v.is_finite() {
            return num(v);
        }
    }
    Expr::Bin(op, Box::new(a), Box::new(b))
}

fn add(a: Expr, b: Expr) -> Expr {
    if is(&a, 0.0) {
        b
    } else if is(&b, 0.0) {
        a
    } else {
        fold(BinOp::Add, a, b)
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    if is(&b, 0.0) {
        a
    } else if is(&a, 0.0) {
        neg(b)
    } else {
        fold(BinOp::Sub, a, b)
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    if is(&a, 0.0) || is(&b, 0.0) {
        num(0.0)
    } else if is(&a, 1.0) {
        b
    } else if is(&b, 1.0) {
        a
    } else {
        fold(BinOp::Mul, a, b)
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    if is(&a, 0.0) {
        num(0.0)
    } else if is(&b, 1.0) {
        a
    } else {
        fold(BinOp::Div, a, b)
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(v) => num(-v),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

fn call(f: Func, a: Expr) -> Expr {
    Expr::Call(f, Box::new(a))
}

impl Expr {
    /// Forward-mode derivative tree with respect to variable slot `var`.
    pub fn derivative(&self, var: usize) -> Expr {
        match self {
            Expr::Num(_) => num(0.0),
            Expr::Var(i) => num(if *i == var { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.derivative(var)),
            Expr::Bin(op, a, b) => {
                let (da, db) = (a.derivative(var), b.derivative(var));
                let (a, b) = ((**a).clone(), (**b).clone());
                match op {
                    BinOp::Add => add(da, db),
                    BinOp::Sub => sub(da, db),
                    BinOp::Mul => add(mul(da, b.clone()), mul(a, db)),
                    BinOp::Div => sub(div(da, b.clone()), div(mul(a, db), mul(b.clone(), b))),
                    BinOp::Pow => {
                        if is(&db, 0.0) {
                            mul(mul(b.clone(), fold(BinOp::Pow, a, sub(b, num(1.0)))), da)
                        } else {
                            let whole = Expr::Bin(BinOp::Pow, Box::new(a.clone()), Box::new(b.clone()));
                            mul(whole, add(mul(db, call(Func::Ln, a.clone())), div(mul(b, da), a)))
                        }
                    }
                }
            }
            Expr::Call(f, a) => {
                let da = a.derivative(var);
                if is(&da, 0.0) {
                    return num(0.0);
                }
                let a = (**a).clone();
                let outer = match f {
                    Func::Sin => call(Func::Cos, a),
                    Func::Cos => neg(call(Func::Sin, a)),
                    Func::Exp => call(Func::Exp, a),
                    Func::Tanh => sub(num(1.0), fold(BinOp::Pow, call(Func::Tanh, a), num(2.0))),
                    Func::Sqrt => div(num(0.5), call(Func::Sqrt, a)),
                    Func::Ln => div(num(1.0), a),
                };
                mul(outer, da)
            }
        }
    }

    /// Recursive evaluation straight off the tree.
    pub fn eval_reference(&self, vars: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => vars[*i],
            Expr::Neg(a) => -a.eval_reference(vars),
            Expr::Bin(op, a, b) => op.apply(a.eval_reference(vars), b.eval_reference(vars)),
            Expr::Call(f, a) => f.apply(a.eval_reference(vars)),
        }
    }

    pub fn depends_on(&self, var: usize) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(i) => *i == var,
            Expr::Neg(a) | Expr::Call(_, a) => a.depends_on(var),
            Expr::Bin(_, a, b) => a.depends_on(var) || b.depends_on(var),
        }
    }

    /// Fully parenthesized text that parses back to an equal tree.
    pub fn display<'a>(&'a self, scope: &'a Scope) -> Display<'a> {
        Display { expr: self, scope }
    }
}

pub struct Display<'a> {
    expr: &'a Expr,
    scope: &'a Scope,
}

impl fmt::Display for Display<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sub = |e: &'_ Expr| Display { expr: e, scope: self.scope }.to_string();
        match self.expr {
            Expr::Num(v) if v.is_sign_negative() => write!(f, "(-{:?})", -v),
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(i) => f.write_str(self.scope.name(*i)),
            Expr::Neg(a) => write!(f, "(-{})", sub(a)),
            Expr::Bin(op, a, b) => write!(f, "({} {} {})", sub(a), op.symbol(), sub(b)),
            Expr::Call(func, a) => write!(f, "{}({})", func.name(), sub(a)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    Load(usize),
    Neg,
    Bin(BinOp),
    Call(Func),
}

/// Postfix program evaluated on a value stack.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    code: Vec<Op>,
    depth: usize,
}

impl Program {
    pub fn compile(e: &Expr) -> Self {
        fn emit(e: &Expr, code: &mut Vec<Op>, d: usize, max: &mut usize) {
            *max = (*max).max(d + 1);
            match e {
                Expr::Num(v) => code.push(Op::Const(*v)),
                Expr::Var(i) => code.push(Op::Load(*i)),
                Expr::Neg(a) => {
                    emit(a, code, d, max);
                    code.push(Op::Neg);
                }
                Expr::Call(f, a) => {
                    emit(a, code, d, max);
                    code.push(Op::Call(*f));
                }
                Expr::Bin(op, a, b) => {
                    emit(a, code, d, max);
                    emit(b, code, d + 1, max);
                    code.push(Op::Bin(*op));
                }
            }
        }
        let mut code = Vec::new();
        let mut depth = 0;
        emit(e, &mut code, 0, &mut depth);
        Self { code, depth }
    }

    pub fn eval(&self, vars: &[f64]) -> f64 {
        thread_local! {
            static STACK: RefCell<Vec<f64>> = const { RefCell::new(Vec::new()) };
        }
        STACK.with(|s| {
            let mut stack = s.borrow_mut();
            stack.clear();
            stack.reserve(self.depth);
            for op in &self.code {
                match *op {
                    Op::Const(v) => stack.push(v),
                    Op::Load(i) => stack.push(vars[i]),
                    Op::Neg => {
                        let a = stack.pop().unwrap();
                        stack.push(-a);
                    }
                    Op::Call(f) => {
                        let a = stack.pop().unwrap();
                        stack.push(f.apply(a));
                    }
                    Op::Bin(op) => {
                        let b = stack.pop().unwrap();
                        let a = stack.pop().unwrap();
                        stack.push(op.apply(a, b));
                    }
                }
            }
            stack.pop().unwrap_or(0.0)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scope() -> Scope {
        Scope::new(["x1", "y", "th", "al", "eps"])
    }

    #[test]
    fn precedence() {
        let s = scope();
        let e = parse("-x1^2 + 2*3^2^0.5", &s).unwrap();
        let v = e.eval_reference(&[3.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(v, -9.0 + 2.0 * 3f64.powf(2f64.powf(0.5)));
        assert_eq!(parse("8/2/2", &s).unwrap().eval_reference(&[0.0; 5]), 2.0);
        assert_eq!(parse("1-2-3", &s).unwrap().eval_reference(&[0.0; 5]), -4.0);
        assert_eq!(parse("2^-1", &s).unwrap().eval_reference(&[0.0; 5]), 0.5);
    }

    #[test]
    fn linear_example() {
        let s = scope();
        let e = parse("-y + eps*x1", &s).unwrap();
        assert_eq!(e.eval_reference(&[2.0, 0.5, 0.0, 0.0, 0.1]), -0.5 + 0.2);
        assert_eq!(e.derivative(1), num(-1.0));
        assert_eq!(e.derivative(0), Expr::Var(4));
    }

    #[test]
    fn errors_carry_positions() {
        let s = scope();
        assert_eq!(parse("x1 +\n  zz", &s), Err(ParseError::UnknownIdentifier { line: 2, column: 3, name: "zz".into() }));
        assert!(matches!(parse("sin(x1, y)", &s), Err(ParseError::Arity { found: 2, .. })));
        assert!(matches!(parse("x1 $ y", &s), Err(ParseError::UnexpectedChar { ch: '$', column: 4, .. })));
        assert!(matches!(parse("(x1 + y", &s), Err(ParseError::Unexpected { .. })));
        assert!(matches!(parse("x1 y", &s), Err(ParseError::Unexpected { .. })));
        assert!(matches!(parse("foo(x1)", &s), Err(ParseError::UnknownIdentifier { .. })));
        assert!(matches!(parse("", &s), Err(ParseError::Unexpected { .. })));
        assert!(matches!(parse("1e999", &s), Err(ParseError::BadNumber { .. })));
        assert!(matches!(parse("1.2.3", &s), Err(ParseError::BadNumber { .. })));
    }

    #[test]
    fn compiled_matches_tree() {
        let s = scope();
        let e = parse("-(sin(th)) + 0.5*cos(al) - tanh(y)/sqrt(2 + x1^2) + exp(-eps) * ln(3)", &s).unwrap();
        let p = Program::compile(&e);
        let vars = [0.3, -0.7, 1.1, 2.2, 0.05];
        assert_eq!(p.eval(&vars), e.eval_reference(&vars));
    }
}
