//! Reading and writing models.
//!
//! Two formats are supported:
//! - the common plain-text `.pomdp` tabular format (subset: declarations,
//!   `start`, `T:`/`O:`/`R:` entries in scalar, row and matrix forms, with the
//!   `uniform` and `identity` keywords and `*` wildcards);
//! - a native JSON document carrying dimensions, flat dense tables and labels.
//!
//! The text format allows rewards R(s,a,s',o); they are folded to R(s,a) by
//! taking the expectation over (s',o) under the model's transition and
//! observation tables.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Labels, ModelError, PomdpModel, Table};

/// Row-sum tolerance applied to parsed probability rows before renormalizing.
pub const PARSE_TOLERANCE: f64 = 1e-6;

/// A model document and where it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSource {
    pub text: String,
    pub origin: String,
}

impl ModelSource {
    pub fn new(text: impl Into<String>, origin: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            origin: origin.into(),
        }
    }

    pub fn inline(text: impl Into<String>) -> Self {
        Self::new(text, "<inline>")
    }

    pub fn from_path(path: &Path) -> Result<Self, FormatError> {
        let text = std::fs::read_to_string(path).map_err(|e| FormatError::Io {
            origin: path.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(Self::new(text, path.display().to_string()))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormatError {
    #[error("{origin}:{line}:{col}: syntax error: {message}")]
    Syntax {
        origin: String,
        line: usize,
        col: usize,
        message: String,
    },

    #[error("{origin}:{line}:{col}: undeclared {kind} '{name}'")]
    UndeclaredName {
        origin: String,
        line: usize,
        col: usize,
        kind: &'static str,
        name: String,
    },

    #[error("{origin}:{line}:{col}: dimension mismatch: {message}")]
    DimensionMismatch {
        origin: String,
        line: usize,
        col: usize,
        message: String,
    },

    #[error("{origin}: {table} row ({index}) sums to {sum}, outside tolerance")]
    Normalization {
        origin: String,
        table: Table,
        index: String,
        sum: f64,
    },

    #[error("{origin}: empty document")]
    Empty { origin: String },

    #[error("{origin}: {message}")]
    Io { origin: String, message: String },

    #[error("{origin}: invalid native document: {message}")]
    Native { origin: String, message: String },

    #[error("{origin}: {source}")]
    Model {
        origin: String,
        #[source]
        source: ModelError,
    },
}

/// Non-fatal notes produced while parsing, such as an ignored `discount`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseWarning {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ParsedModel {
    pub model: PomdpModel,
    pub warnings: Vec<ParseWarning>,
}

/// Parses a `.pomdp` text document. Warnings are emitted through `log`.
pub fn parse_pomdp_text(source: &ModelSource) -> Result<PomdpModel, FormatError> {
    let parsed = parse_pomdp_text_with_warnings(source)?;
    for w in &parsed.warnings {
        log::warn!("{}:{}: {}", source.origin, w.line, w.message);
    }
    Ok(parsed.model)
}

pub fn parse_pomdp_text_with_warnings(source: &ModelSource) -> Result<ParsedModel, FormatError> {
    let tokens = tokenize(&source.text);
    if tokens.is_empty() {
        return Err(FormatError::Empty {
            origin: source.origin.clone(),
        });
    }
    let mut parser = Parser {
        origin: &source.origin,
        tokens,
        pos: 0,
        states: None,
        actions: None,
        observations: None,
        warnings: Vec::new(),
        cost: false,
        start: None,
        transition: Vec::new(),
        observation: Vec::new(),
        rewards: Vec::new(),
    };
    parser.parse()?;
    parser.finish()
}

/// Reads a model file in either format, sniffing the native JSON form by its
/// leading `{`.
pub fn load_model(path: &Path) -> Result<PomdpModel, FormatError> {
    let source = ModelSource::from_path(path)?;
    if source.text.trim_start().starts_with('{') {
        from_native_json(&source)
    } else {
        parse_pomdp_text(&source)
    }
}

// ---------------------------------------------------------------------------
// Tokenizer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Colon,
    Word(String),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    for (li, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        let mut start: Option<usize> = None;
        let flush = |out: &mut Vec<Token>, start: &mut Option<usize>, end: usize| {
            if let Some(b) = start.take() {
                out.push(Token {
                    tok: Tok::Word(line[b..end].to_string()),
                    line: li + 1,
                    col: b + 1,
                });
            }
        };
        for (i, ch) in line.char_indices() {
            if ch == ':' {
                flush(&mut out, &mut start, i);
                out.push(Token {
                    tok: Tok::Colon,
                    line: li + 1,
                    col: i + 1,
                });
            } else if ch.is_whitespace() {
                flush(&mut out, &mut start, i);
            } else if start.is_none() {
                start = Some(i);
            }
        }
        flush(&mut out, &mut start, line.len());
    }
    out
}

const KEYWORDS: [&str; 9] = [
    "discount",
    "values",
    "states",
    "actions",
    "observations",
    "start",
    "T",
    "O",
    "R",
];

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

/// Declared dimension: size plus optional names.
#[derive(Debug, Clone)]
struct Space {
    size: usize,
    names: Option<Vec<String>>,
}

impl Space {
    fn lookup(&self, name: &str) -> Option<usize> {
        if let Some(names) = &self.names {
            if let Some(i) = names.iter().position(|n| n == name) {
                return Some(i);
            }
        }
        name.parse::<usize>().ok().filter(|&i| i < self.size)
    }
}

/// Reward for one (a, s): either independent of (s', o) or a dense s'×o table.
#[derive(Debug, Clone)]
enum RewardCell {
    Const(f64),
    Dense(Vec<f64>),
}

struct Parser<'a> {
    origin: &'a str,
    tokens: Vec<Token>,
    pos: usize,
    states: Option<Space>,
    actions: Option<Space>,
    observations: Option<Space>,
    warnings: Vec<ParseWarning>,
    cost: bool,
    start: Option<Vec<f64>>,
    transition: Vec<f64>,
    observation: Vec<f64>,
    rewards: Vec<RewardCell>,
}

type Selector = Option<usize>;

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, k: usize) -> Option<&Token> {
        self.tokens.get(self.pos + k)
    }

    fn here(&self) -> (usize, usize) {
        match self.peek().or_else(|| self.tokens.last()) {
            Some(t) => (t.line, t.col),
            None => (0, 0),
        }
    }

    fn syntax(&self, message: impl Into<String>) -> FormatError {
        let (line, col) = self.here();
        FormatError::Syntax {
            origin: self.origin.to_string(),
            line,
            col,
            message: message.into(),
        }
    }

    fn mismatch(&self, message: impl Into<String>) -> FormatError {
        let (line, col) = self.here();
        FormatError::DimensionMismatch {
            origin: self.origin.to_string(),
            line,
            col,
            message: message.into(),
        }
    }

    fn next_word(&mut self, what: &str) -> Result<(String, usize, usize), FormatError> {
        match self.peek().cloned() {
            Some(Token {
                tok: Tok::Word(w),
                line,
                col,
            }) => {
                self.pos += 1;
                Ok((w, line, col))
            }
            Some(_) => Err(self.syntax(format!("expected {what}, found ':'"))),
            None => Err(self.syntax(format!("expected {what}, found end of input"))),
        }
    }

    fn expect_colon(&mut self) -> Result<(), FormatError> {
        match self.peek() {
            Some(Token {
                tok: Tok::Colon, ..
            }) => {
                self.pos += 1;
                Ok(())
            }
            Some(Token {
                tok: Tok::Word(w), ..
            }) => Err(self.syntax(format!("expected ':', found '{w}'"))),
            None => Err(self.syntax("expected ':', found end of input")),
        }
    }

    fn at_colon(&self) -> bool {
        matches!(
            self.peek(),
            Some(Token {
                tok: Tok::Colon,
                ..
            })
        )
    }

    fn word_is(&self, k: usize, s: &str) -> bool {
        matches!(self.peek_at(k), Some(Token { tok: Tok::Word(w), .. }) if w == s)
    }

    /// True when the cursor sits on the start of a new directive.
    fn at_directive(&self) -> bool {
        let Some(Token {
            tok: Tok::Word(w), ..
        }) = self.peek()
        else {
            return false;
        };
        if !KEYWORDS.contains(&w.as_str()) {
            return false;
        }
        let colon_next = matches!(
            self.peek_at(1),
            Some(Token {
                tok: Tok::Colon,
                ..
            })
        );
        colon_next || (w == "start" && (self.word_is(1, "include") || self.word_is(1, "exclude")))
    }

    fn number(&mut self) -> Result<f64, FormatError> {
        let (w, line, col) = self.next_word("a number")?;
        w.parse::<f64>().map_err(|_| FormatError::Syntax {
            origin: self.origin.to_string(),
            line,
            col,
            message: format!("expected a number, found '{w}'"),
        })
    }

    fn numbers(&mut self, n: usize) -> Result<Vec<f64>, FormatError> {
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            if self.at_directive() || self.peek().is_none() {
                return Err(self.mismatch(format!("expected {n} values, found {i}")));
            }
            out.push(self.number()?);
        }
        Ok(out)
    }

    fn parse(&mut self) -> Result<(), FormatError> {
        while let Some(tok) = self.peek().cloned() {
            let Tok::Word(w) = &tok.tok else {
                return Err(self.syntax("unexpected ':'"));
            };
            match w.as_str() {
                "discount" => {
                    self.pos += 1;
                    self.expect_colon()?;
                    let d = self.number()?;
                    if d != 1.0 {
                        self.warnings.push(ParseWarning {
                            line: tok.line,
                            message: format!(
                                "discount {d} ignored: finite-horizon objective is undiscounted"
                            ),
                        });
                    }
                }
                "values" => {
                    self.pos += 1;
                    self.expect_colon()?;
                    let (v, line, col) = self.next_word("'reward' or 'cost'")?;
                    self.cost = match v.as_str() {
                        "reward" => false,
                        "cost" => true,
                        other => {
                            return Err(FormatError::Syntax {
                                origin: self.origin.to_string(),
                                line,
                                col,
                                message: format!("unknown values kind '{other}'"),
                            })
                        }
                    };
                }
                "states" | "actions" | "observations" => {
                    let kind = w.clone();
                    self.pos += 1;
                    self.expect_colon()?;
                    let space = self.space()?;
                    let slot = match kind.as_str() {
                        "states" => &mut self.states,
                        "actions" => &mut self.actions,
                        _ => &mut self.observations,
                    };
                    if slot.is_some() {
                        return Err(FormatError::Syntax {
                            origin: self.origin.to_string(),
                            line: tok.line,
                            col: tok.col,
                            message: format!("'{kind}' declared twice"),
                        });
                    }
                    *slot = Some(space);
                    self.allocate();
                }
                "start" => {
                    self.pos += 1;
                    self.start_directive()?;
                }
                "T" => {
                    self.pos += 1;
                    self.expect_colon()?;
                    self.transition_entry()?;
                }
                "O" => {
                    self.pos += 1;
                    self.expect_colon()?;
                    self.observation_entry()?;
                }
                "R" => {
                    self.pos += 1;
                    self.expect_colon()?;
                    self.reward_entry()?;
                }
                other => return Err(self.syntax(format!("unknown directive '{other}'"))),
            }
        }
        Ok(())
    }

    fn space(&mut self) -> Result<Space, FormatError> {
        let (first, line, col) = self.next_word("a count or a list of names")?;
        if let Ok(n) = first.parse::<usize>() {
            if n == 0 {
                return Err(FormatError::DimensionMismatch {
                    origin: self.origin.to_string(),
                    line,
                    col,
                    message: "declared size must be positive".into(),
                });
            }
            return Ok(Space {
                size: n,
                names: None,
            });
        }
        let mut names = vec![first];
        while !self.at_directive() {
            match self.peek() {
                Some(Token {
                    tok: Tok::Word(_), ..
                }) => names.push(self.next_word("a name")?.0),
                Some(_) => return Err(self.syntax("unexpected ':' in name list")),
                None => break,
            }
        }
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n) {
                return Err(FormatError::Syntax {
                    origin: self.origin.to_string(),
                    line,
                    col,
                    message: format!("duplicate name '{n}'"),
                });
            }
        }
        Ok(Space {
            size: names.len(),
            names: Some(names),
        })
    }

    fn allocate(&mut self) {
        if let (Some(s), Some(a), Some(o)) = (&self.states, &self.actions, &self.observations) {
            if self.transition.is_empty() {
                self.transition = vec![0.0; a.size * s.size * s.size];
                self.observation = vec![0.0; a.size * s.size * o.size];
                self.rewards = vec![RewardCell::Const(0.0); a.size * s.size];
            }
        }
    }

    fn dims(&self) -> Result<(usize, usize, usize), FormatError> {
        match (&self.states, &self.actions, &self.observations) {
            (Some(s), Some(a), Some(o)) => Ok((s.size, a.size, o.size)),
            _ => Err(self
                .syntax("states, actions and observations must be declared before this directive")),
        }
    }

    fn resolve(&mut self, kind: &'static str) -> Result<Selector, FormatError> {
        let (w, line, col) = self.next_word(kind)?;
        if w == "*" {
            return Ok(None);
        }
        let space = match kind {
            "state" => self.states.as_ref(),
            "action" => self.actions.as_ref(),
            _ => self.observations.as_ref(),
        };
        let Some(space) = space else {
            return Err(self.syntax(format!("{kind}s not declared")));
        };
        space
            .lookup(&w)
            .map(Some)
            .ok_or_else(|| FormatError::UndeclaredName {
                origin: self.origin.to_string(),
                line,
                col,
                kind,
                name: w,
            })
    }

    fn start_directive(&mut self) -> Result<(), FormatError> {
        let (ns, _, _) = self.dims_states_only()?;
        let mode = if self.word_is(0, "include") {
            self.pos += 1;
            Some(true)
        } else if self.word_is(0, "exclude") {
            self.pos += 1;
            Some(false)
        } else {
            None
        };
        self.expect_colon()?;
        let belief = match mode {
            Some(include) => {
                let mut members = vec![!include; ns];
                let mut any = false;
                while !self.at_directive() && self.peek().is_some() {
                    if let Some(s) = self.resolve("state")? {
                        members[s] = include;
                        any = true;
                    } else {
                        return Err(self.syntax("wildcard not allowed in start list"));
                    }
                }
                if !any {
                    return Err(self.syntax("empty start state list"));
                }
                let count = members.iter().filter(|&&m| m).count();
                if count == 0 {
                    return Err(self.mismatch("start excludes every state"));
                }
                members
                    .iter()
                    .map(|&m| if m { 1.0 / count as f64 } else { 0.0 })
                    .collect()
            }
            None => {
                if self.word_is(0, "uniform") {
                    self.pos += 1;
                    vec![1.0 / ns as f64; ns]
                } else {
                    let is_name = match self.peek() {
                        Some(Token {
                            tok: Tok::Word(w), ..
                        }) => w.parse::<f64>().is_err(),
                        _ => false,
                    };
                    if is_name {
                        let s = self
                            .resolve("state")?
                            .ok_or_else(|| self.syntax("wildcard not allowed in start"))?;
                        let mut v = vec![0.0; ns];
                        v[s] = 1.0;
                        v
                    } else if ns == 1 || self.peek_numbers_available() >= ns {
                        self.numbers(ns)?
                    } else {
                        // A single integer names a start state by index.
                        let s = self
                            .resolve("state")?
                            .ok_or_else(|| self.syntax("wildcard not allowed in start"))?;
                        let mut v = vec![0.0; ns];
                        v[s] = 1.0;
                        v
                    }
                }
            }
        };
        self.start = Some(belief);
        Ok(())
    }

    fn peek_numbers_available(&self) -> usize {
        let mut k = 0;
        while let Some(Token {
            tok: Tok::Word(w), ..
        }) = self.peek_at(k)
        {
            if w.parse::<f64>().is_err() {
                break;
            }
            if KEYWORDS.contains(&w.as_str())
                && matches!(
                    self.peek_at(k + 1),
                    Some(Token {
                        tok: Tok::Colon,
                        ..
                    })
                )
            {
                break;
            }
            k += 1;
        }
        k
    }

    fn dims_states_only(&self) -> Result<(usize, usize, usize), FormatError> {
        match &self.states {
            Some(s) => Ok((s.size, 0, 0)),
            None => Err(self.syntax("states must be declared before start")),
        }
    }

    fn expand(sel: Selector, size: usize) -> std::ops::Range<usize> {
        match sel {
            Some(i) => i..i + 1,
            None => 0..size,
        }
    }

    fn transition_entry(&mut self) -> Result<(), FormatError> {
        let (ns, _, _) = self.dims()?;
        let a = self.resolve("action")?;
        let (_, na, _) = self.dims()?;
        if self.at_colon() {
            self.pos += 1;
            let s = self.resolve("state")?;
            if self.at_colon() {
                self.pos += 1;
                let s2 = self.resolve("state")?;
                let p = self.number()?;
                for ai in Self::expand(a, na) {
                    for si in Self::expand(s, ns) {
                        for s2i in Self::expand(s2, ns) {
                            self.transition[(ai * ns + si) * ns + s2i] = p;
                        }
                    }
                }
            } else {
                let row = if self.word_is(0, "uniform") {
                    self.pos += 1;
                    vec![1.0 / ns as f64; ns]
                } else {
                    self.numbers(ns)?
                };
                for ai in Self::expand(a, na) {
                    for si in Self::expand(s, ns) {
                        let base = (ai * ns + si) * ns;
                        self.transition[base..base + ns].copy_from_slice(&row);
                    }
                }
            }
        } else {
            let matrix = self.square_matrix(ns, ns)?;
            for ai in Self::expand(a, na) {
                let base = ai * ns * ns;
                self.transition[base..base + ns * ns].copy_from_slice(&matrix);
            }
        }
        Ok(())
    }

    /// Matrix form: `uniform`, `identity` (square only) or `rows*cols` numbers.
    fn square_matrix(&mut self, rows: usize, cols: usize) -> Result<Vec<f64>, FormatError> {
        if self.word_is(0, "uniform") {
            self.pos += 1;
            return Ok(vec![1.0 / cols as f64; rows * cols]);
        }
        if self.word_is(0, "identity") {
            if rows != cols {
                return Err(self.mismatch(format!(
                    "'identity' needs a square matrix, table is {rows}x{cols}"
                )));
            }
            self.pos += 1;
            let mut m = vec![0.0; rows * cols];
            for i in 0..rows {
                m[i * cols + i] = 1.0;
            }
            return Ok(m);
        }
        self.numbers(rows * cols)
    }

    fn observation_entry(&mut self) -> Result<(), FormatError> {
        let (ns, na, no) = self.dims()?;
        let a = self.resolve("action")?;
        if self.at_colon() {
            self.pos += 1;
            let s2 = self.resolve("state")?;
            if self.at_colon() {
                self.pos += 1;
                let o = self.resolve("observation")?;
                let p = self.number()?;
                for ai in Self::expand(a, na) {
                    for s2i in Self::expand(s2, ns) {
                        for oi in Self::expand(o, no) {
                            self.observation[(ai * ns + s2i) * no + oi] = p;
                        }
                    }
                }
            } else {
                let row = if self.word_is(0, "uniform") {
                    self.pos += 1;
                    vec![1.0 / no as f64; no]
                } else {
                    self.numbers(no)?
                };
                for ai in Self::expand(a, na) {
                    for s2i in Self::expand(s2, ns) {
                        let base = (ai * ns + s2i) * no;
                        self.observation[base..base + no].copy_from_slice(&row);
                    }
                }
            }
        } else {
            let matrix = self.square_matrix(ns, no)?;
            for ai in Self::expand(a, na) {
                let base = ai * ns * no;
                self.observation[base..base + ns * no].copy_from_slice(&matrix);
            }
        }
        Ok(())
    }

    fn reward_entry(&mut self) -> Result<(), FormatError> {
        let (ns, na, no) = self.dims()?;
        let a = self.resolve("action")?;
        self.expect_colon()?;
        let s = self.resolve("state")?;
        if self.at_colon() {
            self.pos += 1;
            let s2 = self.resolve("state")?;
            if self.at_colon() {
                self.pos += 1;
                let o = self.resolve("observation")?;
                let v = self.number()?;
                for ai in Self::expand(a, na) {
                    for si in Self::expand(s, ns) {
                        let cell = &mut self.rewards[ai * ns + si];
                        if s2.is_none() && o.is_none() {
                            *cell = RewardCell::Const(v);
                            continue;
                        }
                        let table = dense(cell, ns, no);
                        for s2i in Self::expand(s2, ns) {
                            for oi in Self::expand(o, no) {
                                table[s2i * no + oi] = v;
                            }
                        }
                    }
                }
            } else {
                let row = self.numbers(no)?;
                for ai in Self::expand(a, na) {
                    for si in Self::expand(s, ns) {
                        let table = dense(&mut self.rewards[ai * ns + si], ns, no);
                        for s2i in Self::expand(s2, ns) {
                            table[s2i * no..(s2i + 1) * no].copy_from_slice(&row);
                        }
                    }
                }
            }
        } else {
            let matrix = self.numbers(ns * no)?;
            for ai in Self::expand(a, na) {
                for si in Self::expand(s, ns) {
                    self.rewards[ai * ns + si] = RewardCell::Dense(matrix.clone());
                }
            }
        }
        Ok(())
    }

    fn finish(self) -> Result<ParsedModel, FormatError> {
        let (ns, na, no) = self.dims()?;
        let origin = self.origin.to_string();
        let start = self.start.unwrap_or_else(|| vec![1.0 / ns as f64; ns]);

        let check = |table: Table, rows: &[f64], width: usize, outer: usize| {
            for (k, row) in rows.chunks(width).enumerate() {
                let sum: f64 = row.iter().sum();
                let bad = row.iter().any(|p| !(0.0..=1.0).contains(p));
                if bad || (sum - 1.0).abs() > PARSE_TOLERANCE {
                    return Err(FormatError::Normalization {
                        origin: origin.clone(),
                        table,
                        index: format!("{},{}", k / outer, k % outer),
                        sum,
                    });
                }
            }
            Ok(())
        };
        check(Table::Transition, &self.transition, ns, ns)?;
        check(Table::Observation, &self.observation, no, ns)?;
        let start_sum: f64 = start.iter().sum();
        if start.iter().any(|p| !(0.0..=1.0).contains(p))
            || (start_sum - 1.0).abs() > PARSE_TOLERANCE
        {
            return Err(FormatError::Normalization {
                origin,
                table: Table::InitialBelief,
                index: String::new(),
                sum: start_sum,
            });
        }

        let mut model = PomdpModel::from_tables(
            ns,
            na,
            no,
            self.transition,
            self.observation,
            vec![0.0; na * ns],
            start,
        )
        .map_err(|source| FormatError::Model {
            origin: origin.clone(),
            source,
        })?;
        model.renormalize();

        // Fold R(s,a,s',o) to R(s,a) under the renormalized tables.
        let sign = if self.cost { -1.0 } else { 1.0 };
        let mut reward = vec![0.0; na * ns];
        for a in 0..na {
            for s in 0..ns {
                reward[a * ns + s] = sign
                    * match &self.rewards[a * ns + s] {
                        RewardCell::Const(v) => *v,
                        RewardCell::Dense(table) => {
                            let mut acc = 0.0;
                            for (s2, &p) in model.transition_row(a, s).iter().enumerate() {
                                if p == 0.0 {
                                    continue;
                                }
                                let inner: f64 = model
                                    .observation_row(a, s2)
                                    .iter()
                                    .zip(&table[s2 * no..(s2 + 1) * no])
                                    .map(|(po, r)| po * r)
                                    .sum();
                                acc += p * inner;
                            }
                            acc
                        }
                    };
            }
        }

        let labels = Labels {
            states: self.states.and_then(|s| s.names),
            actions: self.actions.and_then(|s| s.names),
            observations: self.observations.and_then(|s| s.names),
        };
        let model = PomdpModel::from_tables(
            ns,
            na,
            no,
            model.transition_table().to_vec(),
            model.observation_table().to_vec(),
            reward,
            model.initial_belief_slice().to_vec(),
        )
        .and_then(PomdpModel::validated)
        .map_err(|source| FormatError::Model { origin, source })?
        .with_labels(labels);
        Ok(ParsedModel {
            model,
            warnings: self.warnings,
        })
    }
}

fn dense(cell: &mut RewardCell, ns: usize, no: usize) -> &mut Vec<f64> {
    if let RewardCell::Const(v) = *cell {
        *cell = RewardCell::Dense(vec![v; ns * no]);
    }
    match cell {
        RewardCell::Dense(t) => t,
        RewardCell::Const(_) => unreachable!(),
    }
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// Names usable as tokens in the text format, or generated `{prefix}{i}` names.
fn token_names(names: &Option<Vec<String>>, size: usize, prefix: &str) -> Vec<String> {
    let usable = names.as_ref().filter(|names| {
        let mut seen = HashSet::new();
        names.len() == size
            && names.iter().all(|n| {
                !n.is_empty()
                    && n != "*"
                    && n.parse::<f64>().is_err()
                    && !KEYWORDS.contains(&n.as_str())
                    && !matches!(n.as_str(), "uniform" | "identity" | "include" | "exclude")
                    && !n.chars().any(|c| c.is_whitespace() || c == ':' || c == '#')
                    && seen.insert(n.as_str())
            })
    });
    match usable {
        Some(names) => names.clone(),
        None => (0..size).map(|i| format!("{prefix}{i}")).collect(),
    }
}

fn join_numbers(row: &[f64]) -> String {
    row.iter()
        .map(|p| format!("{p:?}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Writes `model` in the `.pomdp` text format. Unnamed (or untokenizable)
/// states, actions and observations get generated names `s0..`, `a0..`, `o0..`.
pub fn serialize_model(model: &PomdpModel) -> ModelSource {
    let (ns, na, no) = (
        model.num_states(),
        model.num_actions(),
        model.num_observations(),
    );
    let labels = model.labels();
    let states = token_names(&labels.states, ns, "s");
    let actions = token_names(&labels.actions, na, "a");
    let observations = token_names(&labels.observations, no, "o");

    let mut out = String::new();
    let _ = writeln!(out, "discount: 1.0");
    let _ = writeln!(out, "values: reward");
    let _ = writeln!(out, "states: {}", states.join(" "));
    let _ = writeln!(out, "actions: {}", actions.join(" "));
    let _ = writeln!(out, "observations: {}", observations.join(" "));
    let _ = writeln!(out, "start: {}", join_numbers(model.initial_belief_slice()));
    for (a, name) in actions.iter().enumerate() {
        let _ = writeln!(out, "\nT: {name}");
        for s in 0..ns {
            let _ = writeln!(out, "{}", join_numbers(model.transition_row(a, s)));
        }
    }
    for (a, name) in actions.iter().enumerate() {
        let _ = writeln!(out, "\nO: {name}");
        for s2 in 0..ns {
            let _ = writeln!(out, "{}", join_numbers(model.observation_row(a, s2)));
        }
    }
    out.push('\n');
    for (a, aname) in actions.iter().enumerate() {
        for (s, sname) in states.iter().enumerate() {
            let _ = writeln!(out, "R: {aname} : {sname} : * : * {:?}", model.reward(s, a));
        }
    }
    ModelSource::new(out, "<serialized>")
}

const NATIVE_FORMAT: &str = "pgi-model";
const NATIVE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct NativeModel {
    format: String,
    version: u32,
    num_states: usize,
    num_actions: usize,
    num_observations: usize,
    transition: Vec<f64>,
    observation: Vec<f64>,
    reward: Vec<f64>,
    initial_belief: Vec<f64>,
    #[serde(default)]
    labels: Labels,
}

pub fn to_native_json(model: &PomdpModel) -> String {
    let doc = NativeModel {
        format: NATIVE_FORMAT.into(),
        version: NATIVE_VERSION,
        num_states: model.num_states(),
        num_actions: model.num_actions(),
        num_observations: model.num_observations(),
        transition: model.transition_table().to_vec(),
        observation: model.observation_table().to_vec(),
        reward: model.reward_table().to_vec(),
        initial_belief: model.initial_belief_slice().to_vec(),
        labels: model.labels().clone(),
    };
    serde_json::to_string_pretty(&doc).expect("model serializes")
}

pub fn from_native_json(source: &ModelSource) -> Result<PomdpModel, FormatError> {
    let native = |message: String| FormatError::Native {
        origin: source.origin.clone(),
        message,
    };
    let doc: NativeModel = serde_json::from_str(&source.text).map_err(|e| native(e.to_string()))?;
    if doc.format != NATIVE_FORMAT {
        return Err(native(format!("unexpected format tag '{}'", doc.format)));
    }
    if doc.version != NATIVE_VERSION {
        return Err(native(format!("unsupported version {}", doc.version)));
    }
    PomdpModel::new(
        doc.num_states,
        doc.num_actions,
        doc.num_observations,
        doc.transition,
        doc.observation,
        doc.reward,
        doc.initial_belief,
    )
    .map(|m| m.with_labels(doc.labels))
    .map_err(|source_err| FormatError::Model {
        origin: source.origin.clone(),
        source: source_err,
    })
}
