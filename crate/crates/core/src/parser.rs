//! The `.crn` text format and state literals.
//!
//! ```text
//! # comment
//! A + B <-> 2C : 1, 2
//! A -> 0 : 0.5
//! ```
//!
//! Species are numbered by first appearance. When that order cannot be
//! recovered from the printed reactions, [`format_network`] emits a
//! `# species: ...` pragma line, which [`parse_network`] honors if it
//! names exactly the parsed species.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::model::{Complex, DetState, DiscreteState, MassActionSystem, ModelError, SpeciesTable};

/// 1-based position in the input text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct SourceSpan {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("{span}: syntax error: {message}")]
    Syntax { span: SourceSpan, message: String },
    #[error("{span}: `{arrow}` takes {expected} rate constant(s), found {found}")]
    RateArity { span: SourceSpan, arrow: &'static str, expected: usize, found: usize },
    #[error("{span}: rate constant `{literal}` is not positive")]
    NonpositiveRate { span: SourceSpan, literal: String },
    #[error("{span}: zero stoichiometric coefficient")]
    ZeroCoefficient { span: SourceSpan },
    #[error("{span}: duplicate reaction {reaction}")]
    DuplicateReaction { span: SourceSpan, reaction: String },
    #[error("{span}: self-loop reaction {reaction}")]
    SelfLoop { span: SourceSpan, reaction: String },
    #[error("unknown species `{0}`")]
    UnknownSpecies(String),
    #[error("count for `{0}` is not an integer")]
    NonIntegerCount(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

const PRAGMA: &str = "# species:";

struct Cursor {
    chars: Vec<char>,
    pos: usize,
    line: usize,
}

impl Cursor {
    fn new(src: &str, line: usize) -> Self {
        Self { chars: src.chars().collect(), pos: 0, line }
    }

    fn span(&self) -> SourceSpan {
        SourceSpan { line: self.line, column: self.pos + 1 }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn at_end(&mut self) -> bool {
        self.peek().is_none()
    }

    fn eat(&mut self, s: &str) -> bool {
        self.skip_ws();
        let n = s.chars().count();
        if self.pos + n <= self.chars.len() && self.chars[self.pos..self.pos + n].iter().copied().eq(s.chars()) {
            self.pos += n;
            true
        } else {
            false
        }
    }

    fn error<T>(&mut self, message: impl Into<String>) -> Result<T, ParseError> {
        self.skip_ws();
        Err(ParseError::Syntax { span: self.span(), message: message.into() })
    }

    fn take_while(&mut self, f: impl Fn(char) -> bool) -> String {
        let start = self.pos;
        while self.pos < self.chars.len() && f(self.chars[self.pos]) {
            self.pos += 1;
        }
        self.chars[start..self.pos].iter().collect()
    }

    fn ident(&mut self) -> Option<String> {
        self.skip_ws();
        match self.chars.get(self.pos) {
            Some(&c) if c.is_ascii_alphabetic() || c == '_' => {
                Some(self.take_while(|c| c.is_ascii_alphanumeric() || c == '_'))
            }
            _ => None,
        }
    }

    /// Signed decimal literal with optional fraction and exponent.
    fn decimal(&mut self) -> Option<String> {
        self.skip_ws();
        let start = self.pos;
        let mut s = String::new();
        if let Some(&c) = self.chars.get(self.pos) {
            if c == '+' || c == '-' {
                s.push(c);
                self.pos += 1;
            }
        }
        let int = self.take_while(|c| c.is_ascii_digit());
        s.push_str(&int);
        let mut frac = String::new();
        if self.chars.get(self.pos) == Some(&'.') {
            self.pos += 1;
            frac = self.take_while(|c| c.is_ascii_digit());
            s.push('.');
            s.push_str(&frac);
        }
        if int.is_empty() && frac.is_empty() {
            self.pos = start;
            return None;
        }
        if matches!(self.chars.get(self.pos), Some('e' | 'E')) {
            let save = self.pos;
            self.pos += 1;
            let mut exp = String::from("e");
            if let Some(&c) = self.chars.get(self.pos) {
                if c == '+' || c == '-' {
                    exp.push(c);
                    self.pos += 1;
                }
            }
            let digits = self.take_while(|c| c.is_ascii_digit());
            if digits.is_empty() {
                self.pos = save;
            } else {
                exp.push_str(&digits);
                s.push_str(&exp);
            }
        }
        Some(s)
    }
}

struct Builder {
    names: Vec<String>,
}

impl Builder {
    fn species(&mut self, name: &str) -> usize {
        match self.names.iter().position(|n| n == name) {
            Some(i) => i,
            None => {
                self.names.push(name.to_string());
                self.names.len() - 1
            }
        }
    }
}

/// A side as sparse `(species, coefficient)` pairs in first-appearance order.
type Side = Vec<(usize, u32)>;

fn parse_side(cur: &mut Cursor, b: &mut Builder) -> Result<Side, ParseError> {
    let mut side: Side = Vec::new();
    loop {
        cur.skip_ws();
        let span = cur.span();
        let coeff = if cur.peek().is_some_and(|c| c.is_ascii_digit()) {
            let digits = cur.take_while(|c| c.is_ascii_digit());
            match digits.parse::<u32>() {
                Ok(v) => Some(v),
                Err(_) => {
                    return Err(ParseError::Syntax { span, message: format!("coefficient `{digits}` too large") })
                }
            }
        } else {
            None
        };
        match cur.ident() {
            Some(name) => {
                let k = match coeff {
                    Some(0) => return Err(ParseError::ZeroCoefficient { span }),
                    Some(k) => k,
                    None => 1,
                };
                let i = b.species(&name);
                match side.iter_mut().find(|(j, _)| *j == i) {
                    Some(entry) => {
                        entry.1 = entry.1.checked_add(k).ok_or_else(|| ParseError::Syntax {
                            span,
                            message: "coefficient overflow".into(),
                        })?;
                    }
                    None => side.push((i, k)),
                }
            }
            None => {
                if coeff == Some(0) && side.is_empty() {
                    if cur.peek() == Some('+') {
                        return cur.error("`0` cannot be combined with other terms");
                    }
                    return Ok(side);
                }
                return cur.error("expected species name");
            }
        }
        if !cur.eat("+") {
            return Ok(side);
        }
    }
}

fn parse_rate(cur: &mut Cursor) -> Result<f64, ParseError> {
    cur.skip_ws();
    let span = cur.span();
    let Some(lit) = cur.decimal() else {
        return cur.error("expected rate constant");
    };
    let value: f64 = lit
        .parse()
        .map_err(|_| ParseError::Syntax { span, message: format!("bad number `{lit}`") })?;
    if !(value > 0.0 && value.is_finite()) {
        return Err(ParseError::NonpositiveRate { span, literal: lit });
    }
    Ok(value)
}

struct Line {
    span: SourceSpan,
    source: Side,
    target: Side,
    rates: Vec<f64>,
}

fn parse_line(cur: &mut Cursor, b: &mut Builder) -> Result<Line, ParseError> {
    cur.skip_ws();
    let span = cur.span();
    let source = parse_side(cur, b)?;
    let (arrow, expected) = if cur.eat("<->") {
        ("<->", 2)
    } else if cur.eat("->") {
        ("->", 1)
    } else {
        return cur.error("expected `->` or `<->`");
    };
    let target = parse_side(cur, b)?;
    if !cur.eat(":") {
        return cur.error("expected `:`");
    }
    let mut rates = vec![parse_rate(cur)?];
    while cur.eat(",") {
        rates.push(parse_rate(cur)?);
    }
    if !cur.at_end() {
        return cur.error("unexpected input");
    }
    if rates.len() != expected {
        return Err(ParseError::RateArity { span, arrow, expected, found: rates.len() });
    }
    Ok(Line { span, source, target, rates })
}

fn dense(side: &Side, n: usize, perm: &[usize]) -> Complex {
    let mut v = vec![0; n];
    for &(i, k) in side {
        v[perm[i]] = k;
    }
    Complex::new(v)
}

/// Parses a `.crn` document into a mass-action system.
pub fn parse_network(text: &str) -> Result<MassActionSystem, ParseError> {
    let mut b = Builder { names: Vec::new() };
    let mut pragma: Option<Vec<String>> = None;
    let mut lines = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let raw = raw.trim_end_matches('\r');
        let trimmed = raw.trim_start();
        if let Some(rest) = trimmed.strip_prefix(PRAGMA) {
            pragma = Some(rest.split_whitespace().map(str::to_string).collect());
            continue;
        }
        let body = raw.split('#').next().unwrap_or("");
        let mut cur = Cursor::new(body, idx + 1);
        if cur.at_end() {
            continue;
        }
        lines.push(parse_line(&mut cur, &mut b)?);
    }

    let n = b.names.len();
    // perm[first-appearance index] = final index
    let mut perm: Vec<usize> = (0..n).collect();
    let mut names = b.names.clone();
    if let Some(order) = pragma {
        let mut sorted_a = order.clone();
        sorted_a.sort();
        let mut sorted_b = b.names.clone();
        sorted_b.sort();
        if sorted_a == sorted_b {
            for (i, name) in b.names.iter().enumerate() {
                perm[i] = order.iter().position(|o| o == name).expect("permutation");
            }
            names = order;
        }
    }
    let species = SpeciesTable::new(names)?;

    let mut seen: BTreeMap<(Complex, Complex), SourceSpan> = BTreeMap::new();
    let mut triples = Vec::new();
    for line in lines {
        let y = dense(&line.source, n, &perm);
        let yp = dense(&line.target, n, &perm);
        let mut push = |from: &Complex, to: &Complex, k: f64| -> Result<(), ParseError> {
            let label = format!("{} -> {}", from.label(&species), to.label(&species));
            if from == to {
                return Err(ParseError::SelfLoop { span: line.span, reaction: label });
            }
            if seen.insert((from.clone(), to.clone()), line.span).is_some() {
                return Err(ParseError::DuplicateReaction { span: line.span, reaction: label });
            }
            triples.push((from.clone(), to.clone(), k));
            Ok(())
        };
        push(&y, &yp, line.rates[0])?;
        if line.rates.len() == 2 {
            push(&yp, &y, line.rates[1])?;
        }
    }
    Ok(MassActionSystem::from_reactions(species, triples)?)
}

/// Concentrations or counts, depending on what the caller asked for.
#[derive(Debug, Clone, PartialEq)]
pub enum ParsedState {
    Det(DetState),
    Discrete(DiscreteState),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateKind {
    Det,
    Discrete,
}

fn parse_assignments(text: &str, species: &SpeciesTable) -> Result<Vec<Option<String>>, ParseError> {
    let mut values: Vec<Option<String>> = vec![None; species.len()];
    let mut cur = Cursor::new(text, 1);
    if cur.at_end() {
        return Ok(values);
    }
    loop {
        let Some(name) = cur.ident() else {
            return cur.error("expected species name");
        };
        let i = species.index_of(&name).ok_or_else(|| ParseError::UnknownSpecies(name.clone()))?;
        if !cur.eat("=") {
            return cur.error("expected `=`");
        }
        let Some(lit) = cur.decimal() else {
            return cur.error("expected number");
        };
        if values[i].is_some() {
            return Err(ParseError::Syntax { span: cur.span(), message: format!("`{name}` assigned twice") });
        }
        values[i] = Some(lit);
        if cur.at_end() {
            return Ok(values);
        }
        if !cur.eat(",") {
            return cur.error("expected `,`");
        }
    }
}

/// Parses `A=1.5,B=2`; unlisted species are zero.
pub fn parse_state(text: &str, species: &SpeciesTable, kind: StateKind) -> Result<ParsedState, ParseError> {
    let values = parse_assignments(text, species)?;
    match kind {
        StateKind::Det => {
            let mut c = Vec::with_capacity(values.len());
            for (i, v) in values.iter().enumerate() {
                let x = match v {
                    None => 0.0,
                    Some(lit) => lit.parse::<f64>().map_err(|_| ParseError::Syntax {
                        span: SourceSpan { line: 1, column: 1 },
                        message: format!("bad number for `{}`", species.name(i)),
                    })?,
                };
                if !x.is_finite() {
                    return Err(ParseError::Syntax {
                        span: SourceSpan { line: 1, column: 1 },
                        message: format!("value for `{}` is not finite", species.name(i)),
                    });
                }
                c.push(x);
            }
            Ok(ParsedState::Det(DetState::new(c)))
        }
        StateKind::Discrete => {
            let mut x = Vec::with_capacity(values.len());
            for (i, v) in values.iter().enumerate() {
                let n = match v {
                    None => 0,
                    Some(lit) => lit
                        .parse::<i64>()
                        .map_err(|_| ParseError::NonIntegerCount(species.name(i).to_string()))?,
                };
                x.push(n);
            }
            Ok(ParsedState::Discrete(DiscreteState::new(x)))
        }
    }
}

pub fn parse_det_state(text: &str, species: &SpeciesTable) -> Result<DetState, ParseError> {
    match parse_state(text, species, StateKind::Det)? {
        ParsedState::Det(c) => Ok(c),
        ParsedState::Discrete(_) => unreachable!(),
    }
}

pub fn parse_discrete_state(text: &str, species: &SpeciesTable) -> Result<DiscreteState, ParseError> {
    match parse_state(text, species, StateKind::Discrete)? {
        ParsedState::Discrete(x) => Ok(x),
        ParsedState::Det(_) => unreachable!(),
    }
}

/// Canonical text for a system. Reversible pairs share one `<->` line
/// written in the direction whose source sorts first.
pub fn format_network(sys: &MassActionSystem) -> String {
    let net = sys.network();
    let species = net.species();
    let mut lines = Vec::new();
    let mut appearance: Vec<usize> = Vec::new();
    for (k, r) in net.reactions().iter().enumerate() {
        let back = net.reaction_index(r.reversed());
        if back.is_some() && r.source > r.target {
            continue;
        }
        for c in [r.source, r.target] {
            for (i, &v) in net.complex(c).coeffs().iter().enumerate() {
                if v > 0 && !appearance.contains(&i) {
                    appearance.push(i);
                }
            }
        }
        let (y, yp) = (net.complex_label(r.source), net.complex_label(r.target));
        lines.push(match back {
            Some(b) => format!("{y} <-> {yp} : {}, {}", sys.kappa()[k], sys.kappa()[b]),
            None => format!("{y} -> {yp} : {}", sys.kappa()[k]),
        });
    }
    if appearance != (0..species.len()).collect::<Vec<_>>() {
        lines.insert(0, format!("{PRAGMA} {}", species.names().join(" ")));
    }
    lines.join("\n")
}
