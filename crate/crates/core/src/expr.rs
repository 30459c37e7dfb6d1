//! Arithmetic expression language with exact first derivatives.
//!
//! Grammar (whitespace insignificant):
//!
//! ```text
//! expr    := term (("+"|"-") term)* ;
//! term    := factor (("*"|"/") factor)* ;
//! factor  := ("-")? power ;
//! power   := atom ("^" power)? ;
//! atom    := number | identifier | identifier "(" expr ")" | "(" expr ")" ;
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-x^2`
//! parses as `-(x^2)`. Recognised functions are `sin`, `cos`, `tan`, `exp`,
//! `log` (natural) and `sqrt`; non-differentiable primitives are not part of
//! the language.
//!
//! Derivatives are computed by forward-mode propagation of [`Dual`] numbers,
//! one pass per point, so gradients carry no truncation error.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use thiserror::Error;

/// Largest exponent magnitude evaluated by repeated multiplication.
const MAX_INTEGER_EXPONENT: f64 = 1024.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("function `{function}` at offset {offset} takes {expected} argument(s), got {found}")]
    Arity {
        function: String,
        offset: usize,
        expected: usize,
        found: usize,
    },
    #[error("{kind} in `{subexpression}`")]
    Domain {
        kind: DomainKind,
        subexpression: String,
    },
    #[error("point has {found} coordinates, expression expects {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("no continuous extension at the point: {reason}")]
    NoExtension { reason: String },
}

impl ExprError {
    pub fn is_domain(&self) -> bool {
        matches!(self, ExprError::Domain { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    DivisionByZero,
    LogOfNonPositive,
    SqrtOfNegative,
    /// `sqrt` is not differentiable at zero.
    SqrtAtZero,
    /// Non-integer powers need a strictly positive base.
    PowerOfNonPositive,
    NonFinite,
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DomainKind::DivisionByZero => "division by zero",
            DomainKind::LogOfNonPositive => "log of a non-positive value",
            DomainKind::SqrtOfNegative => "sqrt of a negative value",
            DomainKind::SqrtAtZero => "sqrt is not differentiable at zero",
            DomainKind::PowerOfNonPositive => "non-integer power of a non-positive base",
            DomainKind::NonFinite => "non-finite intermediate value",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Function {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
}

impl Function {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Function::Sin,
            "cos" => Function::Cos,
            "tan" => Function::Tan,
            "exp" => Function::Exp,
            "log" => Function::Log,
            "sqrt" => Function::Sqrt,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Function::Sin => "sin",
            Function::Cos => "cos",
            Function::Tan => "tan",
            Function::Exp => "exp",
            Function::Log => "log",
            Function::Sqrt => "sqrt",
        }
    }
}

/// Abstract syntax tree node. Variables are stored by index into the
/// owning [`Expression`]'s variable list.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Constant(f64),
    Variable(usize),
    Negate(Box<Node>),
    Binary {
        op: BinaryOp,
        lhs: Box<Node>,
        rhs: Box<Node>,
    },
    Power {
        base: Box<Node>,
        exponent: Box<Node>,
    },
    Call {
        function: Function,
        arg: Box<Node>,
    },
}

impl Node {
    fn is_constant(&self) -> bool {
        match self {
            Node::Constant(_) => true,
            Node::Variable(_) => false,
            Node::Negate(inner) => inner.is_constant(),
            Node::Binary { lhs, rhs, .. } => lhs.is_constant() && rhs.is_constant(),
            Node::Power { base, exponent } => base.is_constant() && exponent.is_constant(),
            Node::Call { arg, .. } => arg.is_constant(),
        }
    }
}

/// A parsed, immutable expression over an ordered list of variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    root: Node,
    variables: Arc<[String]>,
}

impl Expression {
    pub fn parse<S: AsRef<str>>(text: &str, variables: &[S]) -> Result<Self, ExprError> {
        let variables: Arc<[String]> = variables.iter().map(|v| v.as_ref().to_string()).collect();
        let tokens = tokenize(text)?;
        let mut parser = Parser {
            tokens,
            pos: 0,
            variables: &variables,
        };
        let root = parser.parse_expr()?;
        let trailing = parser.peek();
        if trailing.kind != TokenKind::End {
            return Err(ExprError::Syntax {
                offset: trailing.offset,
                message: format!("unexpected {}", trailing.kind.describe()),
            });
        }
        Ok(Expression { root, variables })
    }

    /// Builds an expression from an already constructed tree.
    pub fn from_node<S: AsRef<str>>(root: Node, variables: &[S]) -> Result<Self, ExprError> {
        let variables: Arc<[String]> = variables.iter().map(|v| v.as_ref().to_string()).collect();
        let mut max_index = None;
        visit_variables(&root, &mut |i| {
            max_index = Some(max_index.map_or(i, |m: usize| m.max(i)));
        });
        if let Some(i) = max_index {
            if i >= variables.len() {
                return Err(ExprError::UnknownIdentifier {
                    name: format!("#{i}"),
                    offset: 0,
                });
            }
        }
        Ok(Expression { root, variables })
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn dimension(&self) -> usize {
        self.variables.len()
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<f64, ExprError> {
        self.check_dimension(point)?;
        eval_node::<f64>(&self.root, point, self)
    }

    /// Value and exact gradient by forward-mode propagation.
    pub fn value_and_gradient(&self, point: &[f64]) -> Result<Dual, ExprError> {
        self.check_dimension(point)?;
        let n = point.len();
        let seeds: Vec<Dual> = point
            .iter()
            .enumerate()
            .map(|(j, &x)| Dual::variable(x, j, n))
            .collect();
        eval_node::<Dual>(&self.root, &seeds, self)
    }

    pub fn gradient(&self, point: &[f64]) -> Result<Vec<f64>, ExprError> {
        Ok(self.value_and_gradient(point)?.partials)
    }

    /// Central differences with per-coordinate step `step * (1 + |x_j|)`.
    pub fn finite_diff_gradient(&self, point: &[f64], step: f64) -> Result<Vec<f64>, ExprError> {
        self.check_dimension(point)?;
        assert!(step > 0.0, "finite-difference step must be positive");
        let mut probe = point.to_vec();
        let mut grad = Vec::with_capacity(point.len());
        for j in 0..point.len() {
            let h = step * (1.0 + point[j].abs());
            probe[j] = point[j] + h;
            let forward = self.evaluate(&probe)?;
            probe[j] = point[j] - h;
            let backward = self.evaluate(&probe)?;
            probe[j] = point[j];
            // the realised spacing differs from 2h after rounding
            let spacing = (point[j] + h) - (point[j] - h);
            grad.push((forward - backward) / spacing);
        }
        Ok(grad)
    }

    /// Value and gradient of the continuous extension at a removable
    /// singularity.
    ///
    /// Where direct evaluation succeeds this is [`Self::value_and_gradient`].
    /// Otherwise the limit is estimated from two-sided coordinate probes at
    /// steps `1e-3 … 1e-8`; the probes must contract towards a common value,
    /// and components indistinguishable from zero at the probe resolution are
    /// returned as exactly zero.
    pub fn value_and_gradient_extended(&self, point: &[f64]) -> Result<Dual, ExprError> {
        match self.value_and_gradient(point) {
            Ok(d) => Ok(d),
            Err(e) if e.is_domain() => self.limit_extension(point),
            Err(e) => Err(e),
        }
    }

    fn limit_extension(&self, point: &[f64]) -> Result<Dual, ExprError> {
        let n = point.len();
        let steps = [1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8];
        // levels[k] holds every probe (value followed by partials) at steps[k]
        let mut levels: Vec<Vec<Vec<f64>>> = Vec::with_capacity(steps.len());
        let mut probe = point.to_vec();
        for &h in &steps {
            let mut level = Vec::with_capacity(2 * n);
            for j in 0..n {
                for sign in [1.0, -1.0] {
                    probe[j] = point[j] + sign * h * (1.0 + point[j].abs());
                    let d =
                        self.value_and_gradient(&probe)
                            .map_err(|e| ExprError::NoExtension {
                                reason: format!("probe failed: {e}"),
                            })?;
                    probe[j] = point[j];
                    let mut flat = Vec::with_capacity(n + 1);
                    flat.push(d.value);
                    flat.extend(d.partials);
                    level.push(flat);
                }
            }
            levels.push(level);
        }
        let width = n + 1;
        let last = levels.len() - 1;
        let count = levels[last].len() as f64;
        let estimate: Vec<f64> = (0..width)
            .map(|c| levels[last].iter().map(|p| p[c]).sum::<f64>() / count)
            .collect();
        let spread = |level: &Vec<Vec<f64>>, c: usize| {
            level
                .iter()
                .map(|p| (p[c] - estimate[c]).abs())
                .fold(0.0, f64::max)
        };
        let mut limit = Vec::with_capacity(width);
        for (c, &est) in estimate.iter().enumerate() {
            let coarse = spread(&levels[0], c);
            let fine = spread(&levels[last], c);
            let resolution = spread(&levels[last - 1], c);
            let contracted = fine <= 1e-2 * coarse || fine <= 1e-12 * (1.0 + est.abs());
            if !contracted {
                return Err(ExprError::NoExtension {
                    reason: format!(
                        "component {c} does not settle (spread {coarse:e} at coarse step, {fine:e} at fine step)"
                    ),
                });
            }
            limit.push(if est.abs() <= resolution { 0.0 } else { est });
        }
        Ok(Dual {
            value: limit[0],
            partials: limit[1..].to_vec(),
        })
    }

    /// Substitutes every variable of `self` by the corresponding expression
    /// in `args` (all of which share one variable list).
    pub fn compose(&self, args: &[Expression]) -> Result<Expression, ExprError> {
        if args.len() != self.dimension() {
            return Err(ExprError::Dimension {
                expected: self.dimension(),
                found: args.len(),
            });
        }
        let Some(first) = args.first() else {
            return Ok(self.clone());
        };
        if args.iter().any(|a| a.variables != first.variables) {
            return Err(ExprError::Syntax {
                offset: 0,
                message: "composed expressions must share a variable list".into(),
            });
        }
        fn substitute(node: &Node, args: &[Expression]) -> Node {
            match node {
                Node::Constant(c) => Node::Constant(*c),
                Node::Variable(i) => args[*i].root.clone(),
                Node::Negate(inner) => Node::Negate(Box::new(substitute(inner, args))),
                Node::Binary { op, lhs, rhs } => Node::Binary {
                    op: *op,
                    lhs: Box::new(substitute(lhs, args)),
                    rhs: Box::new(substitute(rhs, args)),
                },
                Node::Power { base, exponent } => Node::Power {
                    base: Box::new(substitute(base, args)),
                    exponent: Box::new(substitute(exponent, args)),
                },
                Node::Call { function, arg } => Node::Call {
                    function: *function,
                    arg: Box::new(substitute(arg, args)),
                },
            }
        }
        Ok(Expression {
            root: substitute(&self.root, args),
            variables: first.variables.clone(),
        })
    }

    fn check_dimension(&self, point: &[f64]) -> Result<(), ExprError> {
        if point.len() != self.variables.len() {
            return Err(ExprError::Dimension {
                expected: self.variables.len(),
                found: point.len(),
            });
        }
        Ok(())
    }

    fn render(&self, node: &Node) -> String {
        let mut s = String::new();
        write_node(&mut s, node, &self.variables).expect("writing to a String cannot fail");
        s
    }
}

impl fmt::Display for Expression {
    /// Fully parenthesised rendering that re-parses to the same tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(f, &self.root, &self.variables)
    }
}

fn write_node<W: fmt::Write>(w: &mut W, node: &Node, vars: &[String]) -> fmt::Result {
    match node {
        Node::Constant(c) => write!(w, "{c:?}"),
        Node::Variable(i) => w.write_str(&vars[*i]),
        Node::Negate(inner) => {
            w.write_str("(-")?;
            write_node(w, inner, vars)?;
            w.write_char(')')
        }
        Node::Binary { op, lhs, rhs } => {
            w.write_char('(')?;
            write_node(w, lhs, vars)?;
            write!(w, " {} ", op.symbol())?;
            write_node(w, rhs, vars)?;
            w.write_char(')')
        }
        Node::Power { base, exponent } => {
            w.write_char('(')?;
            write_node(w, base, vars)?;
            w.write_str(" ^ ")?;
            write_node(w, exponent, vars)?;
            w.write_char(')')
        }
        Node::Call { function, arg } => {
            write!(w, "{}(", function.name())?;
            write_node(w, arg, vars)?;
            w.write_char(')')
        }
    }
}

fn visit_variables(node: &Node, f: &mut impl FnMut(usize)) {
    match node {
        Node::Constant(_) => {}
        Node::Variable(i) => f(*i),
        Node::Negate(inner) | Node::Call { arg: inner, .. } => visit_variables(inner, f),
        Node::Binary { lhs, rhs, .. } => {
            visit_variables(lhs, f);
            visit_variables(rhs, f);
        }
        Node::Power { base, exponent } => {
            visit_variables(base, f);
            visit_variables(exponent, f);
        }
    }
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

impl TokenKind {
    fn describe(&self) -> String {
        match self {
            TokenKind::Number(v) => format!("number {v}"),
            TokenKind::Ident(name) => format!("identifier `{name}`"),
            TokenKind::Plus => "`+`".into(),
            TokenKind::Minus => "`-`".into(),
            TokenKind::Star => "`*`".into(),
            TokenKind::Slash => "`/`".into(),
            TokenKind::Caret => "`^`".into(),
            TokenKind::LParen => "`(`".into(),
            TokenKind::RParen => "`)`".into(),
            TokenKind::Comma => "`,`".into(),
            TokenKind::End => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    offset: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token>, ExprError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let kind = match c {
            b'+' => TokenKind::Plus,
            b'-' => TokenKind::Minus,
            b'*' => TokenKind::Star,
            b'/' => TokenKind::Slash,
            b'^' => TokenKind::Caret,
            b'(' => TokenKind::LParen,
            b')' => TokenKind::RParen,
            b',' => TokenKind::Comma,
            b'0'..=b'9' | b'.' => {
                let end = scan_number(bytes, i).ok_or_else(|| ExprError::Syntax {
                    offset: start,
                    message: "malformed number".into(),
                })?;
                let value: f64 = text[start..end].parse().map_err(|_| ExprError::Syntax {
                    offset: start,
                    message: "malformed number".into(),
                })?;
                if !value.is_finite() {
                    return Err(ExprError::Syntax {
                        offset: start,
                        message: "number literal overflows".into(),
                    });
                }
                tokens.push(Token {
                    kind: TokenKind::Number(value),
                    offset: start,
                });
                i = end;
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut end = i + 1;
                while end < bytes.len()
                    && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_')
                {
                    end += 1;
                }
                tokens.push(Token {
                    kind: TokenKind::Ident(text[start..end].to_string()),
                    offset: start,
                });
                i = end;
                continue;
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(ExprError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{ch}`"),
                });
            }
        };
        tokens.push(Token {
            kind,
            offset: start,
        });
        i += 1;
    }
    tokens.push(Token {
        kind: TokenKind::End,
        offset: text.len(),
    });
    Ok(tokens)
}

/// Returns the end of a decimal literal `digits [. digits] [e [+-] digits]`.
fn scan_number(bytes: &[u8], start: usize) -> Option<usize> {
    let digits = |mut i: usize| {
        let from = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        (i, i - from)
    };
    let (mut i, int_digits) = digits(start);
    let mut frac_digits = 0;
    if i < bytes.len() && bytes[i] == b'.' {
        let (end, count) = digits(i + 1);
        i = end;
        frac_digits = count;
    }
    if int_digits + frac_digits == 0 {
        return None;
    }
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        let (end, count) = digits(j);
        if count == 0 {
            return None;
        }
        i = end;
    }
    Some(i)
}

// ---------------------------------------------------------------------------
// Parser

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    variables: &'a [String],
}

impl Parser<'_> {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if t.kind != TokenKind::End {
            self.pos += 1;
        }
        t
    }

    fn starts_operand(&self) -> bool {
        matches!(
            self.peek().kind,
            TokenKind::Number(_) | TokenKind::Ident(_) | TokenKind::LParen | TokenKind::Minus
        )
    }

    /// Missing operands are reported at the operator that needs them.
    fn require_operand(&self, operator: &Token) -> Result<(), ExprError> {
        if self.starts_operand() {
            Ok(())
        } else {
            Err(ExprError::Syntax {
                offset: operator.offset,
                message: format!(
                    "operator {} is missing its operand (found {})",
                    operator.kind.describe(),
                    self.peek().kind.describe()
                ),
            })
        }
    }

    fn parse_expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.parse_term()?;
        loop {
            let op = match self.peek().kind {
                TokenKind::Plus => BinaryOp::Add,
                TokenKind::Minus => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            let operator = self.advance();
            self.require_operand(&operator)?;
            let rhs = self.parse_term()?;
            lhs = Node::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
    }

    fn parse_term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.parse_factor()?;
        loop {
            let op = match self.peek().kind {
                TokenKind::Star => BinaryOp::Mul,
                TokenKind::Slash => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            let operator = self.advance();
            self.require_operand(&operator)?;
            let rhs = self.parse_factor()?;
            lhs = Node::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
    }

    fn parse_factor(&mut self) -> Result<Node, ExprError> {
        if self.peek().kind == TokenKind::Minus {
            let operator = self.advance();
            if self.peek().kind == TokenKind::Minus || !self.starts_operand() {
                return Err(ExprError::Syntax {
                    offset: operator.offset,
                    message: format!(
                        "unary minus must be followed by an operand (found {})",
                        self.peek().kind.describe()
                    ),
                });
            }
            return Ok(Node::Negate(Box::new(self.parse_power()?)));
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> Result<Node, ExprError> {
        let base = self.parse_atom()?;
        if self.peek().kind != TokenKind::Caret {
            return Ok(base);
        }
        let operator = self.advance();
        if self.peek().kind == TokenKind::Minus || !self.starts_operand() {
            return Err(ExprError::Syntax {
                offset: operator.offset,
                message: format!(
                    "operator `^` is missing its operand (found {}); parenthesise negative exponents",
                    self.peek().kind.describe()
                ),
            });
        }
        let exponent = self.parse_power()?;
        Ok(Node::Power {
            base: Box::new(base),
            exponent: Box::new(exponent),
        })
    }

    fn parse_atom(&mut self) -> Result<Node, ExprError> {
        let token = self.advance();
        match token.kind {
            TokenKind::Number(v) => Ok(Node::Constant(v)),
            TokenKind::LParen => {
                let inner = self.parse_expr()?;
                self.expect_rparen(&token)?;
                Ok(inner)
            }
            TokenKind::Ident(name) => {
                if self.peek().kind == TokenKind::LParen {
                    let open = self.advance();
                    let Some(function) = Function::from_name(&name) else {
                        return Err(ExprError::UnknownIdentifier {
                            name,
                            offset: token.offset,
                        });
                    };
                    let mut args = Vec::new();
                    if self.peek().kind != TokenKind::RParen {
                        args.push(self.parse_expr()?);
                        while self.peek().kind == TokenKind::Comma {
                            self.advance();
                            args.push(self.parse_expr()?);
                        }
                    }
                    self.expect_rparen(&open)?;
                    if args.len() != 1 {
                        return Err(ExprError::Arity {
                            function: name,
                            offset: token.offset,
                            expected: 1,
                            found: args.len(),
                        });
                    }
                    Ok(Node::Call {
                        function,
                        arg: Box::new(args.pop().expect("one argument")),
                    })
                } else if let Some(index) = self.variables.iter().position(|v| *v == name) {
                    Ok(Node::Variable(index))
                } else if Function::from_name(&name).is_some() {
                    Err(ExprError::Arity {
                        function: name,
                        offset: token.offset,
                        expected: 1,
                        found: 0,
                    })
                } else {
                    Err(ExprError::UnknownIdentifier {
                        name,
                        offset: token.offset,
                    })
                }
            }
            other => Err(ExprError::Syntax {
                offset: token.offset,
                message: format!("expected an operand, found {}", other.describe()),
            }),
        }
    }

    fn expect_rparen(&mut self, open: &Token) -> Result<(), ExprError> {
        let t = self.advance();
        match t.kind {
            TokenKind::RParen => Ok(()),
            other => Err(ExprError::Syntax {
                offset: t.offset,
                message: format!(
                    "expected `)` to close `(` at offset {}, found {}",
                    open.offset,
                    other.describe()
                ),
            }),
        }
    }
}

// ---------------------------------------------------------------------------
// Evaluation

/// Value together with its partial derivatives, one per variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Dual {
    pub value: f64,
    pub partials: Vec<f64>,
}

impl Dual {
    pub fn constant(value: f64, n: usize) -> Self {
        Dual {
            value,
            partials: vec![0.0; n],
        }
    }

    pub fn variable(value: f64, index: usize, n: usize) -> Self {
        let mut partials = vec![0.0; n];
        partials[index] = 1.0;
        Dual { value, partials }
    }

    /// Chain rule for a scalar function with value `f` and derivative `df`.
    fn chain(&self, f: f64, df: f64) -> Self {
        Dual {
            value: f,
            partials: self.partials.iter().map(|p| df * p).collect(),
        }
    }
}

impl Add for &Dual {
    type Output = Dual;
    fn add(self, rhs: &Dual) -> Dual {
        Dual {
            value: self.value + rhs.value,
            partials: self
                .partials
                .iter()
                .zip(&rhs.partials)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &Dual {
    type Output = Dual;
    fn sub(self, rhs: &Dual) -> Dual {
        Dual {
            value: self.value - rhs.value,
            partials: self
                .partials
                .iter()
                .zip(&rhs.partials)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl Mul for &Dual {
    type Output = Dual;
    // product rule
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn mul(self, rhs: &Dual) -> Dual {
        Dual {
            value: self.value * rhs.value,
            partials: self
                .partials
                .iter()
                .zip(&rhs.partials)
                .map(|(a, b)| a * rhs.value + self.value * b)
                .collect(),
        }
    }
}

impl Neg for &Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual {
            value: -self.value,
            partials: self.partials.iter().map(|p| -p).collect(),
        }
    }
}

/// Number type the evaluator is generic over: plain `f64` or [`Dual`].
trait Scalar: Sized + Clone {
    fn constant(c: f64, dim: usize) -> Self;
    fn lift(&self, c: f64) -> Self;
    fn value(&self) -> f64;
    fn add(&self, rhs: &Self) -> Self;
    fn sub(&self, rhs: &Self) -> Self;
    fn mul(&self, rhs: &Self) -> Self;
    fn neg(&self) -> Self;
    /// `self / rhs` with `rhs != 0`.
    fn div(&self, rhs: &Self) -> Self;
    fn unary(&self, f: f64, df: f64) -> Self;
    /// Whether first derivatives are propagated.
    const DIFFERENTIATED: bool;
}

impl Scalar for f64 {
    fn constant(c: f64, _dim: usize) -> Self {
        c
    }
    fn lift(&self, c: f64) -> Self {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn add(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn sub(&self, rhs: &Self) -> Self {
        self - rhs
    }
    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn neg(&self) -> Self {
        -self
    }
    fn div(&self, rhs: &Self) -> Self {
        self / rhs
    }
    fn unary(&self, f: f64, _df: f64) -> Self {
        f
    }
    const DIFFERENTIATED: bool = false;
}

impl Scalar for Dual {
    fn constant(c: f64, dim: usize) -> Self {
        Dual::constant(c, dim)
    }
    fn lift(&self, c: f64) -> Self {
        Dual::constant(c, self.partials.len())
    }
    fn value(&self) -> f64 {
        self.value
    }
    fn add(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn sub(&self, rhs: &Self) -> Self {
        self - rhs
    }
    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn neg(&self) -> Self {
        -self
    }
    fn div(&self, rhs: &Self) -> Self {
        let q = self.value / rhs.value;
        Dual {
            value: q,
            partials: self
                .partials
                .iter()
                .zip(&rhs.partials)
                .map(|(a, b)| (a - q * b) / rhs.value)
                .collect(),
        }
    }
    fn unary(&self, f: f64, df: f64) -> Self {
        self.chain(f, df)
    }
    const DIFFERENTIATED: bool = true;
}

fn eval_node<S: Scalar>(node: &Node, vars: &[S], expr: &Expression) -> Result<S, ExprError> {
    let domain = |kind| ExprError::Domain {
        kind,
        subexpression: expr.render(node),
    };
    let out = match node {
        Node::Constant(c) => S::constant(*c, vars.len()),
        Node::Variable(i) => vars[*i].clone(),
        Node::Negate(inner) => eval_node(inner, vars, expr)?.neg(),
        Node::Binary { op, lhs, rhs } => {
            let a = eval_node(lhs, vars, expr)?;
            let b = eval_node(rhs, vars, expr)?;
            match op {
                BinaryOp::Add => a.add(&b),
                BinaryOp::Sub => a.sub(&b),
                BinaryOp::Mul => a.mul(&b),
                BinaryOp::Div => {
                    if b.value() == 0.0 {
                        return Err(domain(DomainKind::DivisionByZero));
                    }
                    a.div(&b)
                }
            }
        }
        Node::Power { base, exponent } => {
            let b = eval_node(base, vars, expr)?;
            let integer = if exponent.is_constant() {
                let p = eval_node::<f64>(exponent, &[], expr)?;
                (p.fract() == 0.0 && p.abs() <= MAX_INTEGER_EXPONENT).then_some(p as i64)
            } else {
                None
            };
            match integer {
                Some(p) => {
                    let mut acc = b.lift(1.0);
                    for _ in 0..p.unsigned_abs() {
                        acc = acc.mul(&b);
                    }
                    if p < 0 {
                        if acc.value() == 0.0 {
                            return Err(domain(DomainKind::DivisionByZero));
                        }
                        acc.lift(1.0).div(&acc)
                    } else {
                        acc
                    }
                }
                None => {
                    if b.value() <= 0.0 {
                        return Err(domain(DomainKind::PowerOfNonPositive));
                    }
                    let e = eval_node(exponent, vars, expr)?;
                    let log_b = b.unary(b.value().ln(), 1.0 / b.value());
                    let prod = e.mul(&log_b);
                    let v = prod.value().exp();
                    prod.unary(v, v)
                }
            }
        }
        Node::Call { function, arg } => {
            let a = eval_node(arg, vars, expr)?;
            let x = a.value();
            match function {
                Function::Sin => a.unary(x.sin(), x.cos()),
                Function::Cos => a.unary(x.cos(), -x.sin()),
                Function::Tan => {
                    let c = x.cos();
                    if c == 0.0 {
                        return Err(domain(DomainKind::DivisionByZero));
                    }
                    a.unary(x.tan(), 1.0 / (c * c))
                }
                Function::Exp => {
                    let v = x.exp();
                    a.unary(v, v)
                }
                Function::Log => {
                    if x <= 0.0 {
                        return Err(domain(DomainKind::LogOfNonPositive));
                    }
                    a.unary(x.ln(), 1.0 / x)
                }
                Function::Sqrt => {
                    if x < 0.0 {
                        return Err(domain(DomainKind::SqrtOfNegative));
                    }
                    if x == 0.0 && S::DIFFERENTIATED {
                        return Err(domain(DomainKind::SqrtAtZero));
                    }
                    let v = x.sqrt();
                    a.unary(v, if v > 0.0 { 0.5 / v } else { 0.0 })
                }
            }
        }
    };
    if !out.value().is_finite() {
        return Err(domain(DomainKind::NonFinite));
    }
    Ok(out)
}
