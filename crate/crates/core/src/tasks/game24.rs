//! Game of 24: verifier, exhaustive solver, and instance generator.
//!
//! The solver searches over exact rationals, so instances such as
//! `3 3 8 8` (whose only solutions pass through 8/3) are found without any
//! rounding. The verifier evaluates exactly as well and then applies a 1e-6
//! tolerance to the final value.

use num_rational::Rational64;
use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

use super::{Gold, TaskError, TaskExample};

pub const TARGET: i64 = 24;
pub const TOLERANCE: f64 = 1e-6;
pub const MIN_CARD: u32 = 1;
pub const MAX_CARD: u32 = 13;

pub type Hand = [u32; 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum VerifyFailure {
    Parse { message: String },
    LeafMismatch { expected: Vec<u32>, found: Vec<u32> },
    DivisionByZero,
    NotTwentyFour,
}

impl fmt::Display for VerifyFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VerifyFailure::Parse { message } => write!(f, "parse error: {message}"),
            VerifyFailure::LeafMismatch { expected, found } => {
                write!(f, "numbers used {found:?} do not match {expected:?}")
            }
            VerifyFailure::DivisionByZero => write!(f, "division by zero"),
            VerifyFailure::NotTwentyFour => write!(f, "expression does not equal 24"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub valid: bool,
    /// Value of the expression when it parsed and evaluated.
    pub value: Option<f64>,
    pub failure: Option<VerifyFailure>,
}

impl Verification {
    fn fail(value: Option<f64>, failure: VerifyFailure) -> Self {
        Verification {
            valid: false,
            value,
            failure: Some(failure),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Token {
    Num(u32),
    Op(char),
    Open,
    Close,
}

fn tokenize(text: &str) -> Result<Vec<Token>, String> {
    let mut tokens = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            '0'..='9' => {
                let mut value: u32 = 0;
                while let Some(&d) = chars.peek() {
                    let Some(digit) = d.to_digit(10) else { break };
                    value = value
                        .checked_mul(10)
                        .and_then(|v| v.checked_add(digit))
                        .ok_or("number too large")?;
                    chars.next();
                }
                if chars.peek() == Some(&'.') {
                    return Err("only integer operands are allowed".into());
                }
                tokens.push(Token::Num(value));
            }
            '+' => {
                chars.next();
                tokens.push(Token::Op('+'));
            }
            '-' | '−' => {
                chars.next();
                tokens.push(Token::Op('-'));
            }
            '*' | '×' | 'x' | 'X' => {
                chars.next();
                tokens.push(Token::Op('*'));
            }
            '/' | '÷' => {
                chars.next();
                tokens.push(Token::Op('/'));
            }
            '(' | '[' => {
                chars.next();
                tokens.push(Token::Open);
            }
            ')' | ']' => {
                chars.next();
                tokens.push(Token::Close);
            }
            other => return Err(format!("unexpected character {other:?}")),
        }
    }
    Ok(tokens)
}

enum Expr {
    Leaf(u32),
    Binary(char, Box<Expr>, Box<Expr>),
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<Token> {
        self.tokens.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Expr, String> {
        let mut lhs = self.term()?;
        while let Some(Token::Op(op @ ('+' | '-'))) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, String> {
        let mut lhs = self.factor()?;
        while let Some(Token::Op(op @ ('*' | '/'))) = self.peek() {
            self.pos += 1;
            let rhs = self.factor()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, String> {
        match self.peek() {
            Some(Token::Num(n)) => {
                self.pos += 1;
                Ok(Expr::Leaf(n))
            }
            Some(Token::Open) => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(Token::Close) {
                    return Err("unbalanced parenthesis".into());
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(Token::Op(op)) => Err(format!("operator {op:?} without left operand")),
            Some(Token::Close) => Err("unexpected ')'".into()),
            None => Err("unexpected end of expression".into()),
        }
    }
}

fn parse(text: &str) -> Result<Expr, String> {
    let tokens = tokenize(text)?;
    if tokens.is_empty() {
        return Err("empty expression".into());
    }
    let mut parser = Parser { tokens, pos: 0 };
    let expr = parser.expr()?;
    if parser.pos != parser.tokens.len() {
        return Err("trailing tokens after expression".into());
    }
    Ok(expr)
}

fn leaves(expr: &Expr, out: &mut Vec<u32>) {
    match expr {
        Expr::Leaf(n) => out.push(*n),
        Expr::Binary(_, l, r) => {
            leaves(l, out);
            leaves(r, out);
        }
    }
}

fn eval(expr: &Expr) -> Option<Rational64> {
    match expr {
        Expr::Leaf(n) => Some(Rational64::from_integer(*n as i64)),
        Expr::Binary(op, l, r) => {
            let (a, b) = (eval(l)?, eval(r)?);
            apply(*op, a, b)
        }
    }
}

fn apply(op: char, a: Rational64, b: Rational64) -> Option<Rational64> {
    match op {
        '+' => a.checked_add(&b),
        '-' => a.checked_sub(&b),
        '*' => a.checked_mul(&b),
        '/' if *b.numer() == 0 => None,
        '/' => a.checked_div(&b),
        _ => None,
    }
}

fn to_f64(r: Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Checks that `expression` uses exactly `numbers` and evaluates to 24.
///
/// Standard precedence applies, parentheses are optional, and a trailing
/// `= 24` is ignored.
pub fn game24_verify(numbers: &[u32], expression: &str) -> Verification {
    let lhs = expression.split('=').next().unwrap_or("");
    let tree = match parse(lhs) {
        Ok(t) => t,
        Err(message) => return Verification::fail(None, VerifyFailure::Parse { message }),
    };
    let mut found = Vec::new();
    leaves(&tree, &mut found);
    found.sort_unstable();
    let mut expected = numbers.to_vec();
    expected.sort_unstable();
    let value = eval(&tree);
    let value_f = value.map(to_f64);
    if found != expected {
        return Verification::fail(value_f, VerifyFailure::LeafMismatch { expected, found });
    }
    let Some(v) = value_f else {
        return Verification::fail(None, VerifyFailure::DivisionByZero);
    };
    if (v - TARGET as f64).abs() < TOLERANCE {
        Verification {
            valid: true,
            value: Some(v),
            failure: None,
        }
    } else {
        Verification::fail(Some(v), VerifyFailure::NotTwentyFour)
    }
}

const OPS: [char; 4] = ['+', '-', '*', '/'];

fn search(items: &[(Rational64, String)]) -> Option<String> {
    if items.len() == 1 {
        return (items[0].0 == Rational64::from_integer(TARGET)).then(|| items[0].1.clone());
    }
    for i in 0..items.len() {
        for j in 0..items.len() {
            if i == j {
                continue;
            }
            for op in OPS {
                let Some(value) = apply(op, items[i].0, items[j].0) else {
                    continue;
                };
                let expr = format!("({} {} {})", items[i].1, op, items[j].1);
                let mut next: Vec<(Rational64, String)> = items
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != i && *k != j)
                    .map(|(_, item)| item.clone())
                    .collect();
                next.insert(0, (value, expr));
                if let Some(found) = search(&next) {
                    return Some(found);
                }
            }
        }
    }
    None
}

/// Exhaustive search: repeatedly combine an ordered pair with one of the
/// four operators and recurse on the reduced list.
pub fn game24_solve_bruteforce(numbers: &[u32]) -> Option<String> {
    let items: Vec<(Rational64, String)> = numbers
        .iter()
        .map(|&n| (Rational64::from_integer(n as i64), n.to_string()))
        .collect();
    if items.is_empty() {
        return None;
    }
    search(&items)
}

/// Every 4-card multiset over 1..=13, in lexicographic order (1820 hands).
pub fn all_hands() -> Vec<Hand> {
    let mut out = Vec::with_capacity(1820);
    for a in MIN_CARD..=MAX_CARD {
        for b in a..=MAX_CARD {
            for c in b..=MAX_CARD {
                for d in c..=MAX_CARD {
                    out.push([a, b, c, d]);
                }
            }
        }
    }
    out
}

pub fn hand_input(hand: &Hand) -> String {
    hand.iter()
        .map(u32::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Draws `n` distinct hands deterministically from `seed`.
pub fn game24_generate(
    seed: u64,
    n: usize,
    solvable_only: bool,
) -> Result<Vec<TaskExample>, TaskError> {
    if n == 0 {
        return Err(TaskError::InvalidArgument("n must be at least 1".into()));
    }
    let available = if solvable_only {
        all_hands()
            .iter()
            .filter(|h| game24_solve_bruteforce(&h[..]).is_some())
            .count()
    } else {
        all_hands().len()
    };
    if n > available {
        return Err(TaskError::InsufficientExamples {
            needed: n,
            available,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut hand: Hand = [0; 4];
        for card in hand.iter_mut() {
            *card = rng.gen_range(MIN_CARD..=MAX_CARD);
        }
        hand.sort_unstable();
        if seen.contains(&hand) {
            continue;
        }
        if solvable_only && game24_solve_bruteforce(&hand).is_none() {
            continue;
        }
        seen.insert(hand);
        out.push(TaskExample {
            id: format!("g24-{seed}-{:04}", out.len()),
            input: hand_input(&hand),
            gold: Gold::Hand(hand),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verifier_examples() {
        assert!(game24_verify(&[6, 6, 6, 6], "((6+6)+(6+6))").valid);
        let v = game24_verify(&[4, 6, 1, 1], "4+6+1+1");
        assert!(!v.valid);
        assert_eq!(v.value, Some(12.0));
        assert_eq!(v.failure, Some(VerifyFailure::NotTwentyFour));
        let v = game24_verify(&[4, 6, 1, 1], "4*6");
        assert!(matches!(
            v.failure,
            Some(VerifyFailure::LeafMismatch { .. })
        ));
    }

    #[test]
    fn verifier_rejects_malformed_and_zero_division() {
        assert!(matches!(
            game24_verify(&[1, 2, 3, 4], "(1+2").failure,
            Some(VerifyFailure::Parse { .. })
        ));
        assert!(matches!(
            game24_verify(&[1, 2, 3, 4], "-1+2+3+4").failure,
            Some(VerifyFailure::Parse { .. })
        ));
        assert!(matches!(
            game24_verify(&[1, 1, 2, 4], "4/(1-1)*2").failure,
            Some(VerifyFailure::DivisionByZero)
        ));
        assert!(matches!(
            game24_verify(&[1, 2, 3, 4], "No solution").failure,
            Some(VerifyFailure::Parse { .. })
        ));
    }

    #[test]
    fn verifier_accepts_precedence_and_trailing_equals() {
        assert!(game24_verify(&[1, 2, 3, 4], "1*2*3*4").valid);
        assert!(game24_verify(&[4, 6, 1, 1], "4*6*1*1 = 24").valid);
        assert!(game24_verify(&[3, 3, 8, 8], "8/(3-8/3)").valid);
        assert!(game24_verify(&[3, 3, 8, 8], "8 ÷ (3 − 8 ÷ 3)").valid);
    }

    #[test]
    fn solver_examples() {
        let e = game24_solve_bruteforce(&[6, 6, 6, 6]).unwrap();
        assert!(game24_verify(&[6, 6, 6, 6], &e).valid);
        assert_eq!(game24_solve_bruteforce(&[1, 1, 1, 1]), None);
        let e = game24_solve_bruteforce(&[3, 3, 8, 8]).unwrap();
        assert!(game24_verify(&[3, 3, 8, 8], &e).valid, "{e}");
    }

    #[test]
    fn generator_is_deterministic_and_solvable() {
        let a = game24_generate(7, 25, true).unwrap();
        let b = game24_generate(7, 25, true).unwrap();
        assert_eq!(a, b);
        for ex in &a {
            let Gold::Hand(h) = ex.gold else { panic!() };
            assert!(game24_solve_bruteforce(&h).is_some());
        }
        assert!(game24_generate(7, 0, true).is_err());
    }

    #[test]
    fn there_are_1820_hands() {
        assert_eq!(all_hands().len(), 1820);
    }
}
