//! Scalar-field expression language for geometry configuration.
//!
//! Grammar (precedence climbing, loosest to tightest):
//!
//! ```text
//! expr    := term  (('+' | '-') term)*          left associative
//! term    := unary (('*' | '/') unary)*         left associative
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?                  right associative
//! atom    := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Known functions: `sin`, `cos`, `exp`, `log`, `sqrt`, `pow`.  Variable
//! names must be declared coordinate names; implicit multiplication is not
//! supported (`2x` is a syntax error).  Every node keeps its byte offset so
//! parse and domain errors point into the source.

use std::fmt;

use crate::error::{Error, Result};
use crate::jet::Jet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Pow,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Pow => "pow",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Pow => 2,
            _ => 1,
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "pow" => Func::Pow,
            _ => return None,
        })
    }
}

/// Parsed expression tree; variables are resolved to coordinate indices.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub node: Node,
    /// Byte offset of this node in the source text.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'.' {
                i += 1;
                while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                    i += 1;
                }
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let value: f64 = text.parse().map_err(|_| Error::Syntax {
                offset: start,
                msg: format!("invalid number literal `{text}`"),
            })?;
            out.push((Tok::Num(value), start));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len()
                && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
            {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
            continue;
        }
        match c {
            '+' | '-' | '*' | '/' | '^' | '(' | ')' | ',' => {
                out.push((Tok::Op(c), i));
                i += 1;
            }
            _ => {
                return Err(Error::Syntax {
                    offset: i,
                    msg: format!("unexpected character `{c}`"),
                })
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    coords: &'a [String],
    src_len: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&(Tok, usize)> {
        self.toks.get(self.pos)
    }

    fn next_offset(&self) -> usize {
        self.toks
            .get(self.pos)
            .map(|(_, o)| *o)
            .unwrap_or(self.src_len)
    }

    fn eat_op(&mut self, c: char) -> bool {
        if let Some((Tok::Op(op), _)) = self.peek() {
            if *op == c {
                self.pos += 1;
                return true;
            }
        }
        false
    }

    fn expect_op(&mut self, c: char) -> Result<()> {
        if self.eat_op(c) {
            Ok(())
        } else {
            Err(Error::Syntax {
                offset: self.next_offset(),
                msg: format!("expected `{c}`"),
            })
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some((Tok::Op('+'), _)) => BinOp::Add,
                Some((Tok::Op('-'), _)) => BinOp::Sub,
                _ => break,
            };
            let offset = self.next_offset();
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr {
                node: Node::Bin(op, Box::new(lhs), Box::new(rhs)),
                offset,
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some((Tok::Op('*'), _)) => BinOp::Mul,
                Some((Tok::Op('/'), _)) => BinOp::Div,
                _ => break,
            };
            let offset = self.next_offset();
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr {
                node: Node::Bin(op, Box::new(lhs), Box::new(rhs)),
                offset,
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if let Some((Tok::Op('-'), offset)) = self.peek() {
            let offset = *offset;
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(Expr {
                node: Node::Neg(Box::new(inner)),
                offset,
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if let Some((Tok::Op('^'), offset)) = self.peek() {
            let offset = *offset;
            self.pos += 1;
            // right associative: exponent may itself start with unary minus
            let exp = self.unary()?;
            return Ok(Expr {
                node: Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)),
                offset,
            });
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let (tok, offset) = match self.peek() {
            Some(t) => (t.0.clone(), t.1),
            None => {
                return Err(Error::Syntax {
                    offset: self.src_len,
                    msg: "unexpected end of input (empty operand)".into(),
                })
            }
        };
        match tok {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Expr {
                    node: Node::Num(v),
                    offset,
                })
            }
            Tok::Ident(name) => {
                self.pos += 1;
                if self.eat_op('(') {
                    let func = Func::from_name(&name).ok_or_else(|| Error::Name {
                        name: name.clone(),
                        offset,
                    })?;
                    let mut args = vec![self.expr()?];
                    while self.eat_op(',') {
                        args.push(self.expr()?);
                    }
                    self.expect_op(')')?;
                    if args.len() != func.arity() {
                        return Err(Error::Syntax {
                            offset,
                            msg: format!(
                                "{} takes {} argument(s), got {}",
                                func.name(),
                                func.arity(),
                                args.len()
                            ),
                        });
                    }
                    Ok(Expr {
                        node: Node::Call(func, args),
                        offset,
                    })
                } else {
                    let idx = self
                        .coords
                        .iter()
                        .position(|c| c == &name)
                        .ok_or(Error::Name { name, offset })?;
                    Ok(Expr {
                        node: Node::Var(idx),
                        offset,
                    })
                }
            }
            Tok::Op('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect_op(')')?;
                Ok(inner)
            }
            Tok::Op(c) => Err(Error::Syntax {
                offset,
                msg: format!("unexpected `{c}`"),
            }),
        }
    }
}

/// Parse `src` against the declared coordinate names.
pub fn parse(src: &str, coordinate_names: &[String]) -> Result<Expr> {
    if src.trim().is_empty() {
        return Err(Error::Syntax {
            offset: 0,
            msg: "empty expression".into(),
        });
    }
    let toks = lex(src)?;
    let mut parser = Parser {
        toks,
        pos: 0,
        coords: coordinate_names,
        src_len: src.len(),
    };
    let expr = parser.expr()?;
    if parser.pos != parser.toks.len() {
        return Err(Error::Syntax {
            offset: parser.next_offset(),
            msg: "trailing tokens after expression".into(),
        });
    }
    Ok(expr)
}

/// Evaluate over plain reals.
pub fn eval_expr(e: &Expr, point: &[f64]) -> Result<f64> {
    let v = match &e.node {
        Node::Num(v) => *v,
        Node::Var(i) => {
            if *i >= point.len() {
                return Err(Error::Shape(format!(
                    "point dimension {} too small for variable #{i}",
                    point.len()
                )));
            }
            point[*i]
        }
        Node::Neg(inner) => -eval_expr(inner, point)?,
        Node::Bin(op, a, b) => {
            let x = eval_expr(a, point)?;
            let y = eval_expr(b, point)?;
            match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => {
                    if y == 0.0 {
                        return Err(Error::Domain {
                            offset: e.offset,
                            msg: "division by zero".into(),
                        });
                    }
                    x / y
                }
                BinOp::Pow => {
                    if x < 0.0 && y.fract() != 0.0 {
                        return Err(Error::Domain {
                            offset: e.offset,
                            msg: "fractional power of negative base".into(),
                        });
                    }
                    x.powf(y)
                }
            }
        }
        Node::Call(func, args) => {
            let x = eval_expr(&args[0], point)?;
            match func {
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
                Func::Exp => x.exp(),
                Func::Log => {
                    if x <= 0.0 {
                        return Err(Error::Domain {
                            offset: e.offset,
                            msg: format!("log of non-positive value {x}"),
                        });
                    }
                    x.ln()
                }
                Func::Sqrt => {
                    if x < 0.0 {
                        return Err(Error::Domain {
                            offset: e.offset,
                            msg: format!("sqrt of negative value {x}"),
                        });
                    }
                    x.sqrt()
                }
                Func::Pow => {
                    let y = eval_expr(&args[1], point)?;
                    if x < 0.0 && y.fract() != 0.0 {
                        return Err(Error::Domain {
                            offset: e.offset,
                            msg: "fractional power of negative base".into(),
                        });
                    }
                    x.powf(y)
                }
            }
        }
    };
    if !v.is_finite() {
        return Err(Error::Domain {
            offset: e.offset,
            msg: "non-finite value".into(),
        });
    }
    Ok(v)
}

fn eval_on_jets(e: &Expr, vars: &[Jet]) -> Result<Jet> {
    let dim = vars[0].dim();
    let order = vars[0].order();
    let with_pos = |r: Result<Jet>| -> Result<Jet> {
        r.map_err(|err| match err {
            Error::Singular(msg) => Error::Domain {
                offset: e.offset,
                msg,
            },
            other => other,
        })
    };
    match &e.node {
        Node::Num(v) => Ok(Jet::constant(dim, order, *v)),
        Node::Var(i) => {
            if *i >= vars.len() {
                return Err(Error::Shape(format!(
                    "point dimension {} too small for variable #{i}",
                    vars.len()
                )));
            }
            Ok(vars[*i].clone())
        }
        Node::Neg(inner) => Ok(eval_on_jets(inner, vars)?.neg()),
        Node::Bin(op, a, b) => {
            let x = eval_on_jets(a, vars)?;
            let y = eval_on_jets(b, vars)?;
            match op {
                BinOp::Add => x.add(&y),
                BinOp::Sub => x.sub(&y),
                BinOp::Mul => x.mul(&y),
                BinOp::Div => with_pos(x.div(&y)),
                BinOp::Pow => with_pos(x.pow(&y)),
            }
        }
        Node::Call(func, args) => {
            let x = eval_on_jets(&args[0], vars)?;
            match func {
                Func::Sin => Ok(x.sin()),
                Func::Cos => Ok(x.cos()),
                Func::Exp => Ok(x.exp()),
                Func::Log => with_pos(x.ln()),
                Func::Sqrt => with_pos(x.sqrt()),
                Func::Pow => {
                    let y = eval_on_jets(&args[1], vars)?;
                    with_pos(x.pow(&y))
                }
            }
        }
    }
}

/// Evaluate on already-seeded coordinate jets (shared by field plumbing).
pub fn eval_on_jet_vars(e: &Expr, vars: &[Jet]) -> Result<Jet> {
    eval_on_jets(e, vars)
}

/// Evaluate as a jet about `base_point` at the given truncation order.
pub fn eval_expr_jet(e: &Expr, base_point: &[f64], order: usize) -> Result<Jet> {
    let dim = base_point.len();
    let vars: Vec<Jet> = (0..dim)
        .map(|i| Jet::variable(dim, order, i, base_point[i]))
        .collect();
    let jet = eval_on_jets(e, &vars)?;
    if let Some(multi_index) = jet.non_finite_index() {
        return Err(Error::NonFinite { multi_index });
    }
    Ok(jet)
}

/// Canonical fully-parenthesized rendering; reparses to the same tree.
pub fn pretty_print(e: &Expr, coordinate_names: &[String]) -> String {
    struct P<'a> {
        coords: &'a [String],
    }
    impl<'a> P<'a> {
        fn go(&self, e: &Expr, out: &mut String) {
            match &e.node {
                Node::Num(v) => {
                    if *v < 0.0 {
                        out.push_str(&format!("({v})"));
                    } else {
                        out.push_str(&format!("{v}"));
                    }
                }
                Node::Var(i) => out.push_str(&self.coords[*i]),
                Node::Neg(inner) => {
                    out.push_str("(-");
                    self.go(inner, out);
                    out.push(')');
                }
                Node::Bin(op, a, b) => {
                    out.push('(');
                    self.go(a, out);
                    out.push(match op {
                        BinOp::Add => '+',
                        BinOp::Sub => '-',
                        BinOp::Mul => '*',
                        BinOp::Div => '/',
                        BinOp::Pow => '^',
                    });
                    self.go(b, out);
                    out.push(')');
                }
                Node::Call(func, args) => {
                    out.push_str(func.name());
                    out.push('(');
                    for (i, a) in args.iter().enumerate() {
                        if i > 0 {
                            out.push(',');
                        }
                        self.go(a, out);
                    }
                    out.push(')');
                }
            }
        }
    }
    let mut s = String::new();
    P {
        coords: coordinate_names,
    }
    .go(e, &mut s);
    s
}

/// Structural equality ignoring source offsets.
pub fn same_tree(a: &Expr, b: &Expr) -> bool {
    match (&a.node, &b.node) {
        (Node::Num(x), Node::Num(y)) => x == y,
        (Node::Var(i), Node::Var(j)) => i == j,
        (Node::Neg(x), Node::Neg(y)) => same_tree(x, y),
        (Node::Bin(o1, a1, b1), Node::Bin(o2, a2, b2)) => {
            o1 == o2 && same_tree(a1, a2) && same_tree(b1, b2)
        }
        (Node::Call(f1, a1), Node::Call(f2, a2)) => {
            f1 == f2 && a1.len() == a2.len() && a1.iter().zip(a2).all(|(x, y)| same_tree(x, y))
        }
        _ => false,
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.node)
    }
}
