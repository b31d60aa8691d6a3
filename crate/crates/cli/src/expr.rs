//! The expression vocabulary for means, generators and test functions.
//!
//! ```text
//! gen   := term ('+' term)*
//! term  := num '*' atom | atom
//! atom  := id | ln | exp | cube | pow(num) | '(' gen ')'
//! mean  := A(num) | QA(gen, num) | MK(gen, gen) | min | max | G
//! func  := fterm ('+' fterm)* | x1(poly(num, ...))
//! fterm := num '*' fatom | fatom
//! fatom := poly(num, ...) | sq | abs | exp | ln | neg(func) | '(' func ')'
//! ```
//!
//! Numbers are integers, decimals or `p/q`, optionally negated.

use std::fmt;

use mconvex_core::convexity::{build_x1_function, ExtendedFunction, RationalInterval};
use mconvex_core::means::{geometric, matkowski, max_mean, min_mean, quasi_arithmetic, weighted_arithmetic};
use mconvex_core::rational::{parse_rational, rat};
use mconvex_core::{ExactRational, Extended, Mean, MonotoneFn, XReal};
use num_traits::{Signed, ToPrimitive, Zero};

/// A syntax or construction error at a character offset of the input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExprError {
    pub offset: usize,
    pub message: String,
}

impl fmt::Display for ExprError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at offset {}: {}", self.offset, self.message)
    }
}

impl std::error::Error for ExprError {}

type Parsed<T> = std::result::Result<T, ExprError>;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num(String),
    Open,
    Close,
    Comma,
    Star,
    Plus,
    Minus,
}

fn tokenize(text: &str) -> Parsed<Vec<(usize, Tok)>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        let tok = match c {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '(' => Tok::Open,
            ')' => Tok::Close,
            ',' => Tok::Comma,
            '*' => Tok::Star,
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            c if c.is_ascii_alphabetic() => {
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push((start, Tok::Ident(chars[start..i].iter().collect())));
                continue;
            }
            c if c.is_ascii_digit() || c == '.' => {
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.' || chars[i] == '/') {
                    i += 1;
                }
                out.push((start, Tok::Num(chars[start..i].iter().collect())));
                continue;
            }
            other => return Err(ExprError { offset: i, message: format!("unexpected character `{other}`") }),
        };
        out.push((start, tok));
        i += 1;
    }
    Ok(out)
}

/// Generator expression, kept symbolic so that closed forms can be detected.
#[derive(Clone, Debug, PartialEq)]
pub enum GenExpr {
    Id,
    Ln,
    Exp,
    Cube,
    Pow(ExactRational),
    Scale(ExactRational, Box<GenExpr>),
    Sum(Vec<GenExpr>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum MeanExpr {
    Arith(ExactRational),
    Quasi(GenExpr, ExactRational),
    Matkowski(GenExpr, GenExpr),
    Min,
    Max,
    Geometric,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FuncExpr {
    /// Coefficients `c0, c1, ...` of `c0 + c1 t + ...`.
    Poly(Vec<ExactRational>),
    Abs,
    Exp,
    Ln,
    Neg(Box<FuncExpr>),
    Scale(ExactRational, Box<FuncExpr>),
    Sum(Vec<FuncExpr>),
    X1(Vec<ExactRational>),
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn new(text: &str) -> Parsed<Self> {
        Ok(Parser { toks: tokenize(text)?, pos: 0, end: text.chars().count() })
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |t| t.0)
    }

    fn fail<T>(&self, message: impl Into<String>) -> Parsed<T> {
        Err(ExprError { offset: self.offset(), message: message.into() })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.1)
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Parsed<()> {
        if self.eat(&tok) {
            Ok(())
        } else {
            self.fail(format!("expected {what}"))
        }
    }

    fn at_number(&self) -> bool {
        matches!(self.peek(), Some(Tok::Num(_)) | Some(Tok::Minus))
    }

    fn number(&mut self) -> Parsed<ExactRational> {
        let start = self.offset();
        let negative = self.eat(&Tok::Minus);
        match self.peek().cloned() {
            Some(Tok::Num(text)) => {
                let q = parse_rational(&text)
                    .map_err(|_| ExprError { offset: start, message: format!("bad number `{text}`") })?;
                self.pos += 1;
                Ok(if negative { -q } else { q })
            }
            _ => self.fail("expected a number"),
        }
    }

    fn ident(&mut self) -> Parsed<(usize, String)> {
        match self.peek().cloned() {
            Some(Tok::Ident(name)) => {
                let at = self.offset();
                self.pos += 1;
                Ok((at, name))
            }
            _ => self.fail("expected a name"),
        }
    }

    fn finish(&self) -> Parsed<()> {
        if self.pos == self.toks.len() {
            Ok(())
        } else {
            self.fail("unexpected trailing input")
        }
    }

    fn generator(&mut self) -> Parsed<GenExpr> {
        let mut terms = vec![self.gen_term()?];
        while self.eat(&Tok::Plus) {
            terms.push(self.gen_term()?);
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { GenExpr::Sum(terms) })
    }

    fn gen_term(&mut self) -> Parsed<GenExpr> {
        if self.at_number() {
            let c = self.number()?;
            self.expect(Tok::Star, "`*` after a coefficient")?;
            return Ok(GenExpr::Scale(c, Box::new(self.gen_atom()?)));
        }
        self.gen_atom()
    }

    fn gen_atom(&mut self) -> Parsed<GenExpr> {
        if self.eat(&Tok::Open) {
            let g = self.generator()?;
            self.expect(Tok::Close, "`)`")?;
            return Ok(g);
        }
        let (at, name) = self.ident()?;
        Ok(match name.as_str() {
            "id" => GenExpr::Id,
            "ln" => GenExpr::Ln,
            "exp" => GenExpr::Exp,
            "cube" => GenExpr::Cube,
            "pow" => {
                self.expect(Tok::Open, "`(`")?;
                let p = self.number()?;
                self.expect(Tok::Close, "`)`")?;
                GenExpr::Pow(p)
            }
            other => return Err(ExprError { offset: at, message: format!("unknown generator `{other}`") }),
        })
    }

    fn mean(&mut self) -> Parsed<MeanExpr> {
        let (at, name) = self.ident()?;
        Ok(match name.as_str() {
            "A" => {
                self.expect(Tok::Open, "`(`")?;
                let s = self.number()?;
                self.expect(Tok::Close, "`)`")?;
                MeanExpr::Arith(s)
            }
            "QA" => {
                self.expect(Tok::Open, "`(`")?;
                let h = self.generator()?;
                self.expect(Tok::Comma, "`,`")?;
                let s = self.number()?;
                self.expect(Tok::Close, "`)`")?;
                MeanExpr::Quasi(h, s)
            }
            "MK" => {
                self.expect(Tok::Open, "`(`")?;
                let f = self.generator()?;
                self.expect(Tok::Comma, "`,`")?;
                let g = self.generator()?;
                self.expect(Tok::Close, "`)`")?;
                MeanExpr::Matkowski(f, g)
            }
            "min" => MeanExpr::Min,
            "max" => MeanExpr::Max,
            "G" => MeanExpr::Geometric,
            other => return Err(ExprError { offset: at, message: format!("unknown mean `{other}`") }),
        })
    }

    fn coefficients(&mut self) -> Parsed<Vec<ExactRational>> {
        self.expect(Tok::Open, "`(`")?;
        let mut cs = vec![self.number()?];
        while self.eat(&Tok::Comma) {
            cs.push(self.number()?);
        }
        self.expect(Tok::Close, "`)`")?;
        Ok(cs)
    }

    fn function(&mut self) -> Parsed<FuncExpr> {
        let mut terms = vec![self.func_term()?];
        while self.eat(&Tok::Plus) {
            terms.push(self.func_term()?);
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { FuncExpr::Sum(terms) })
    }

    fn func_term(&mut self) -> Parsed<FuncExpr> {
        if self.at_number() {
            let c = self.number()?;
            self.expect(Tok::Star, "`*` after a coefficient")?;
            return Ok(FuncExpr::Scale(c, Box::new(self.func_atom()?)));
        }
        self.func_atom()
    }

    fn func_atom(&mut self) -> Parsed<FuncExpr> {
        if self.eat(&Tok::Open) {
            let f = self.function()?;
            self.expect(Tok::Close, "`)`")?;
            return Ok(f);
        }
        let (at, name) = self.ident()?;
        Ok(match name.as_str() {
            "poly" => FuncExpr::Poly(self.coefficients()?),
            "sq" => FuncExpr::Poly(vec![rat(0, 1), rat(0, 1), rat(1, 1)]),
            "abs" => FuncExpr::Abs,
            "exp" => FuncExpr::Exp,
            "ln" => FuncExpr::Ln,
            "neg" => {
                self.expect(Tok::Open, "`(`")?;
                let f = self.function()?;
                self.expect(Tok::Close, "`)`")?;
                FuncExpr::Neg(Box::new(f))
            }
            other => return Err(ExprError { offset: at, message: format!("unknown function `{other}`") }),
        })
    }

    fn top_function(&mut self) -> Parsed<FuncExpr> {
        if matches!(self.peek(), Some(Tok::Ident(n)) if n == "x1") {
            self.pos += 1;
            self.expect(Tok::Open, "`(`")?;
            let (at, name) = self.ident()?;
            if name != "poly" {
                return Err(ExprError { offset: at, message: "x1 takes poly(...)".into() });
            }
            let cs = self.coefficients()?;
            self.expect(Tok::Close, "`)`")?;
            return Ok(FuncExpr::X1(cs));
        }
        self.function()
    }
}

pub fn parse_generator(text: &str) -> Parsed<GenExpr> {
    let mut p = Parser::new(text)?;
    let g = p.generator()?;
    p.finish()?;
    Ok(g)
}

pub fn parse_mean(text: &str) -> Parsed<MeanExpr> {
    let mut p = Parser::new(text)?;
    let m = p.mean()?;
    p.finish()?;
    Ok(m)
}

/// A comma-separated list of means, e.g. `A(1/2),QA(ln,1/3)`.
pub fn parse_mean_list(text: &str) -> Parsed<Vec<MeanExpr>> {
    let mut p = Parser::new(text)?;
    let mut out = vec![p.mean()?];
    while p.eat(&Tok::Comma) {
        out.push(p.mean()?);
    }
    p.finish()?;
    Ok(out)
}

pub fn parse_function(text: &str) -> Parsed<FuncExpr> {
    let mut p = Parser::new(text)?;
    let f = p.top_function()?;
    p.finish()?;
    Ok(f)
}

/// A comma-separated list of numbers.
pub fn parse_number_list(text: &str) -> Parsed<Vec<ExactRational>> {
    let mut p = Parser::new(text)?;
    let mut out = vec![p.number()?];
    while p.eat(&Tok::Comma) {
        out.push(p.number()?);
    }
    p.finish()?;
    Ok(out)
}

pub fn parse_number(text: &str) -> Parsed<ExactRational> {
    let mut p = Parser::new(text)?;
    let q = p.number()?;
    p.finish()?;
    Ok(q)
}

pub fn to_f64(q: &ExactRational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

fn construction(e: mconvex_core::Error) -> ExprError {
    ExprError { offset: 0, message: e.to_string() }
}

impl GenExpr {
    pub fn build(&self) -> Parsed<MonotoneFn> {
        match self {
            GenExpr::Id => Ok(MonotoneFn::identity()),
            GenExpr::Ln => Ok(MonotoneFn::ln()),
            GenExpr::Exp => Ok(MonotoneFn::exp()),
            GenExpr::Cube => Ok(MonotoneFn::cube()),
            GenExpr::Pow(p) => MonotoneFn::power(to_f64(p)).map_err(construction),
            GenExpr::Scale(c, g) => g.build()?.scaled(to_f64(c)).map_err(construction),
            GenExpr::Sum(gs) => {
                let mut acc = gs[0].build()?;
                for g in &gs[1..] {
                    acc = acc.plus(&g.build()?).map_err(construction)?;
                }
                Ok(acc)
            }
        }
    }
}

impl fmt::Display for GenExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GenExpr::Id => f.write_str("id"),
            GenExpr::Ln => f.write_str("ln"),
            GenExpr::Exp => f.write_str("exp"),
            GenExpr::Cube => f.write_str("cube"),
            GenExpr::Pow(p) => write!(f, "pow({p})"),
            GenExpr::Scale(c, g) => write!(f, "{c}*({g})"),
            GenExpr::Sum(gs) => {
                let parts: Vec<String> = gs.iter().map(ToString::to_string).collect();
                f.write_str(&parts.join("+"))
            }
        }
    }
}

impl MeanExpr {
    pub fn build(&self) -> Parsed<Mean> {
        match self {
            MeanExpr::Arith(s) => weighted_arithmetic(to_f64(s)).map_err(construction),
            MeanExpr::Quasi(h, s) => quasi_arithmetic(&h.build()?, to_f64(s)).map_err(construction),
            MeanExpr::Matkowski(f, g) => matkowski(&f.build()?, &g.build()?).map_err(construction),
            MeanExpr::Min => Ok(min_mean()),
            MeanExpr::Max => Ok(max_mean()),
            MeanExpr::Geometric => Ok(geometric()),
        }
    }

    /// `(h, s)` when the mean is `h^{-1}(s h(x) + (1-s) h(y))`.
    pub fn quasi_parts(&self) -> Option<(GenExpr, ExactRational)> {
        match self {
            MeanExpr::Arith(s) => Some((GenExpr::Id, s.clone())),
            MeanExpr::Quasi(h, s) => Some((h.clone(), s.clone())),
            _ => None,
        }
    }
}

impl FuncExpr {
    fn eval_f64(&self, t: f64) -> XReal {
        match self {
            FuncExpr::Poly(cs) => XReal::new(cs.iter().rev().fold(0.0, |acc, c| acc * t + to_f64(c))),
            FuncExpr::Abs => XReal::new(t.abs()),
            FuncExpr::Exp => XReal::new(t.exp()),
            FuncExpr::Ln => XReal::new(t.ln()),
            FuncExpr::Neg(f) => -f.eval_f64(t),
            FuncExpr::Scale(c, f) => f.eval_f64(t).scale(&to_f64(c)),
            FuncExpr::Sum(fs) => {
                fs.iter().fold(XReal::zero(), |acc, f| mconvex_core::xreal::upper_sum(&acc, &f.eval_f64(t)))
            }
            FuncExpr::X1(_) => unreachable!("x1 is built separately"),
        }
    }

    fn exact_capable(&self) -> bool {
        match self {
            FuncExpr::Poly(_) | FuncExpr::Abs => true,
            FuncExpr::Exp | FuncExpr::Ln | FuncExpr::X1(_) => false,
            FuncExpr::Neg(f) | FuncExpr::Scale(_, f) => f.exact_capable(),
            FuncExpr::Sum(fs) => fs.iter().all(FuncExpr::exact_capable),
        }
    }

    fn eval_exact(&self, q: &ExactRational) -> ExactRational {
        match self {
            FuncExpr::Poly(cs) => cs.iter().rev().fold(ExactRational::zero(), |acc, c| acc * q + c),
            FuncExpr::Abs => q.abs(),
            FuncExpr::Neg(f) => -f.eval_exact(q),
            FuncExpr::Scale(c, f) => c * f.eval_exact(q),
            FuncExpr::Sum(fs) => fs.iter().map(|f| f.eval_exact(q)).sum(),
            FuncExpr::Exp | FuncExpr::Ln | FuncExpr::X1(_) => unreachable!("checked by exact_capable"),
        }
    }

    /// Builds the function on `domain`. Polynomials, `abs` and their sums,
    /// multiples and negations also get an exact evaluator; `x1` requires the
    /// domain's right endpoint to be in it.
    pub fn build(&self, label: &str, domain: &RationalInterval) -> Parsed<ExtendedFunction> {
        if let FuncExpr::X1(cs) = self {
            let poly = FuncExpr::Poly(cs.clone());
            return build_x1_function(label, move |q| poly.eval_exact(q), domain.clone()).map_err(construction);
        }
        if self.contains_x1() {
            return Err(ExprError { offset: 0, message: "x1 must be the whole function".into() });
        }
        let float = self.clone();
        let f = ExtendedFunction::new(label, domain.to_interval(), move |t| float.eval_f64(t));
        Ok(if self.exact_capable() {
            let exact = self.clone();
            f.with_exact(domain.clone(), move |q| Extended::Finite(exact.eval_exact(q)))
        } else {
            f
        })
    }

    fn contains_x1(&self) -> bool {
        match self {
            FuncExpr::X1(_) => true,
            FuncExpr::Neg(f) | FuncExpr::Scale(_, f) => f.contains_x1(),
            FuncExpr::Sum(fs) => fs.iter().any(FuncExpr::contains_x1),
            _ => false,
        }
    }
}
