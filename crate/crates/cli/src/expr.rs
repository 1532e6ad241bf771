//! Recursive-descent parser for the arithmetic expressions used in config
//! files: operators + - * / ^, functions abs/min/max, variables x1..x3,
//! numeric literals, parentheses.  `^` binds tighter than unary minus and
//! associates to the right.

use std::fmt;

#[derive(Debug, Clone)]
pub enum Expr {
    Num(f64),
    /// 0-based variable index (x1 -> 0).
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Abs(Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, x: &[f64; 3]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => x[*i],
            Expr::Neg(e) => -e.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Pow(a, b) => a.eval(x).powf(b.eval(x)),
            Expr::Abs(e) => e.eval(x).abs(),
            Expr::Min(a, b) => a.eval(x).min(b.eval(x)),
            Expr::Max(a, b) => a.eval(x).max(b.eval(x)),
        }
    }

    /// Highest variable index used, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Num(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(e) | Expr::Abs(e) => e.max_var(),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b)
            | Expr::Min(a, b)
            | Expr::Max(a, b) => match (a.max_var(), b.max_var()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }
}

#[derive(Debug)]
pub struct ParseError {
    pub pos: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at column {}: {}", self.pos + 1, self.message)
    }
}

impl std::error::Error for ParseError {}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError { pos: self.pos, message: message.into() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(format!("expected '{}'", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat(b'-') {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if self.eat(b'^') {
            // right-associative; the exponent may carry a sign
            Ok(Expr::Pow(Box::new(base), Box::new(self.unary()?)))
        } else {
            Ok(base)
        }
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            None => Err(self.err("unexpected end of expression")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            Some(c) => Err(self.err(format!("unexpected character '{}'", c as char))),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while self.pos < self.src.len() {
            let c = self.src[self.pos];
            if c.is_ascii_digit() || c == b'.' {
                self.pos += 1;
            } else if (c == b'e' || c == b'E') && self.pos > start {
                self.pos += 1;
                if matches!(self.src.get(self.pos), Some(b'+') | Some(b'-')) {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse::<f64>()
            .map(Expr::Num)
            .map_err(|_| ParseError { pos: start, message: format!("bad number '{text}'") })
    }

    fn ident(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        match name {
            "x1" => Ok(Expr::Var(0)),
            "x2" => Ok(Expr::Var(1)),
            "x3" => Ok(Expr::Var(2)),
            "abs" => {
                self.expect(b'(')?;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(Expr::Abs(Box::new(e)))
            }
            "min" | "max" => {
                self.expect(b'(')?;
                let a = self.expr()?;
                self.expect(b',')?;
                let b = self.expr()?;
                self.expect(b')')?;
                Ok(if name == "min" {
                    Expr::Min(Box::new(a), Box::new(b))
                } else {
                    Expr::Max(Box::new(a), Box::new(b))
                })
            }
            _ => Err(ParseError {
                pos: start,
                message: format!("unknown identifier '{name}' (expected x1..x3, abs, min, max)"),
            }),
        }
    }
}

pub fn parse(src: &str) -> Result<Expr, ParseError> {
    if !src.is_ascii() {
        return Err(ParseError { pos: 0, message: "expressions must be ascii".into() });
    }
    let mut p = Parser { src: src.as_bytes(), pos: 0 };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.err("trailing input"));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn eval(src: &str, x: [f64; 3]) -> f64 {
        parse(src).unwrap().eval(&x)
    }

    /// Fully parenthesized printer, independent of the parser's precedence
    /// handling.
    fn print(e: &Expr) -> String {
        match e {
            Expr::Num(v) => {
                if *v < 0.0 {
                    format!("({v})")
                } else {
                    format!("{v}")
                }
            }
            Expr::Var(i) => format!("x{}", i + 1),
            Expr::Neg(a) => format!("(-{})", print(a)),
            Expr::Add(a, b) => format!("({}+{})", print(a), print(b)),
            Expr::Sub(a, b) => format!("({}-{})", print(a), print(b)),
            Expr::Mul(a, b) => format!("({}*{})", print(a), print(b)),
            Expr::Div(a, b) => format!("({}/{})", print(a), print(b)),
            Expr::Pow(a, b) => format!("({}^{})", print(a), print(b)),
            Expr::Abs(a) => format!("abs({})", print(a)),
            Expr::Min(a, b) => format!("min({},{})", print(a), print(b)),
            Expr::Max(a, b) => format!("max({},{})", print(a), print(b)),
        }
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0.0..10.0f64).prop_map(Expr::Num),
            (0usize..3).prop_map(Expr::Var),
        ];
        leaf.prop_recursive(4, 64, 4, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| Expr::Min(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| Expr::Max(Box::new(a), Box::new(b))),
                inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
                inner.prop_map(|a| Expr::Abs(Box::new(a))),
            ]
        })
    }

    proptest! {
        #[test]
        fn printed_trees_reparse_to_the_same_values(
            e in arb_expr(),
            x in [-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64],
        ) {
            let printed = print(&e);
            let reparsed = parse(&printed).unwrap();
            let want = e.eval(&x);
            let got = reparsed.eval(&x);
            prop_assert!(
                (want - got).abs() <= 1e-12 * (1.0 + want.abs()),
                "{printed}: {want} vs {got}"
            );
        }
    }

    #[test]
    fn arithmetic_and_precedence() {
        assert_relative_eq!(eval("1 + 2*3", [0.0; 3]), 7.0);
        assert_relative_eq!(eval("(1 + 2)*3", [0.0; 3]), 9.0);
        assert_relative_eq!(eval("2^3^2", [0.0; 3]), 512.0); // right assoc
        assert_relative_eq!(eval("-2^2", [0.0; 3]), -4.0); // ^ binds tighter
        assert_relative_eq!(eval("2^-1", [0.0; 3]), 0.5);
        assert_relative_eq!(eval("6/3/2", [0.0; 3]), 1.0); // left assoc
        assert_relative_eq!(eval("1 - 2 - 3", [0.0; 3]), -4.0);
    }

    #[test]
    fn variables_and_functions() {
        assert_relative_eq!(eval("x1*x2 - x3", [2.0, 3.0, 1.0]), 5.0);
        assert_relative_eq!(eval("abs(x1)^0.5", [0.25, 0.0, 0.0]), 0.5);
        assert_relative_eq!(eval("min(x1, max(x2, 0))", [5.0, -1.0, 0.0]), 0.0);
        assert_relative_eq!(eval("-(1/2)*(1-abs(x2))", [0.0, 0.5, 0.0]), -0.25);
        assert_relative_eq!(eval("1e-2 + 2.5E1", [0.0; 3]), 25.01);
    }

    #[test]
    fn max_var_is_tracked() {
        assert_eq!(parse("3 + 4").unwrap().max_var(), None);
        assert_eq!(parse("x1 + 1").unwrap().max_var(), Some(0));
        assert_eq!(parse("x1 * x3").unwrap().max_var(), Some(2));
    }

    #[test]
    fn errors_carry_positions() {
        for (src, _col) in [("1 +", 4), ("(1", 3), ("foo(2)", 1), ("1 2", 3), ("min(1)", 6)] {
            let err = parse(src).unwrap_err();
            assert!(err.pos <= src.len(), "{src}: {err}");
        }
    }
}
