//! Recognizes templated integer questions such as "What is 2 + 3?".
//!
//! Supported shapes are `what is A op B`, `what's A op B`, `how much is
//! A op B` and `A op B = ?`, with `op` one of `+ - − × x * ÷ /`. Divisions
//! that do not come out even, and anything phrased as a word problem, are
//! not recognized.

use std::fmt;
use std::ops::Range;
use std::sync::LazyLock;

use regex::Regex;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operator {
    Add,
    Sub,
    Mul,
    Div,
}

impl Operator {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "+" => Operator::Add,
            "-" | "−" => Operator::Sub,
            "×" | "x" | "X" | "*" => Operator::Mul,
            "÷" | "/" => Operator::Div,
            _ => return None,
        })
    }

    fn apply(self, lhs: i64, rhs: i64) -> Option<i64> {
        match self {
            Operator::Add => lhs.checked_add(rhs),
            Operator::Sub => lhs.checked_sub(rhs),
            Operator::Mul => lhs.checked_mul(rhs),
            Operator::Div => (rhs != 0 && lhs % rhs == 0).then(|| lhs / rhs),
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Operator::Add => "+",
            Operator::Sub => "-",
            Operator::Mul => "×",
            Operator::Div => "÷",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArithmeticQuestion {
    pub lhs: i64,
    pub op: Operator,
    pub rhs: i64,
    pub answer: i64,
    /// Byte range of the matched question in the source text.
    pub span: Range<usize>,
}

static QUESTION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)(?:\b(?:what\s+is|what's|how\s+much\s+is)\s+(\d+)\s*(\+|-|−|×|\*|÷|/|x)\s*(\d+)\s*\??)|(?:\b(\d+)\s*(\+|-|−|×|\*|÷|/|x)\s*(\d+)\s*=\s*\?)",
    )
    .expect("static regex")
});

/// All recognized questions in order of appearance.
pub fn extract_all_arithmetic(text: &str) -> Vec<ArithmeticQuestion> {
    QUESTION
        .captures_iter(text)
        .filter_map(|caps| {
            let m = caps.get(0)?;
            let (a, op, b) = if caps.get(1).is_some() { (1, 2, 3) } else { (4, 5, 6) };
            let lhs: i64 = caps.get(a)?.as_str().parse().ok()?;
            let rhs: i64 = caps.get(b)?.as_str().parse().ok()?;
            let op = Operator::parse(caps.get(op)?.as_str())?;
            let answer = op.apply(lhs, rhs)?;
            Some(ArithmeticQuestion { lhs, op, rhs, answer, span: m.range() })
        })
        .collect()
}

pub fn extract_arithmetic(text: &str) -> Option<ArithmeticQuestion> {
    extract_all_arithmetic(text).into_iter().next()
}

/// Integers appearing in `text` outside `skip`.
pub(crate) fn integers_outside(text: &str, skip: &Range<usize>) -> Vec<i64> {
    static INT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"-?\b\d+\b").expect("static regex"));
    INT.find_iter(text)
        .filter(|m| m.end() <= skip.start || m.start() >= skip.end)
        .filter_map(|m| m.as_str().parse().ok())
        .collect()
}
