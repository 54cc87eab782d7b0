//! Domain rules over labels: the rule-file DSL, its AST, and crisp evaluation.
//!
//! A rule file holds one rule per line; `#` starts a comment:
//!
//! ```text
//! # implication with a disjunctive consequent
//! Fever & Cough => Flu | Cold
//! # exclusion
//! Healthy & Flu => FALSE @ 2
//! # pairwise exclusion sugar
//! MUTEX(Healthy, Flu, Cold)
//! ```
//!
//! A rule `a1 & .. & an => c1 | .. | cm` is violated by a label vector exactly
//! when every antecedent literal holds and no consequent literal does.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const RESERVED: [&str; 2] = ["FALSE", "MUTEX"];

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Ordered, duplicate-free list of label names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelVocabulary {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelVocabulary {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut vocab = Self {
            names: Vec::new(),
            index: HashMap::new(),
        };
        for name in names {
            let name = name.into();
            if !is_identifier(&name) {
                return Err(Error::InvalidVocabulary(format!(
                    "`{name}` is not a valid label identifier"
                )));
            }
            if RESERVED.contains(&name.as_str()) {
                return Err(Error::InvalidVocabulary(format!(
                    "`{name}` is a reserved word"
                )));
            }
            if vocab.index.contains_key(&name) {
                return Err(Error::InvalidVocabulary(format!(
                    "duplicate label `{name}`"
                )));
            }
            vocab.push(name);
        }
        if vocab.is_empty() {
            return Err(Error::InvalidVocabulary(
                "at least one label is required".into(),
            ));
        }
        Ok(vocab)
    }

    fn push(&mut self, name: String) -> usize {
        let idx = self.names.len();
        self.index.insert(name.clone(), idx);
        self.names.push(name);
        idx
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }
}

impl TryFrom<Vec<String>> for LabelVocabulary {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        Self::new(names)
    }
}

impl From<LabelVocabulary> for Vec<String> {
    fn from(v: LabelVocabulary) -> Self {
        v.names
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Literal {
    pub label: usize,
    pub negated: bool,
}

impl Literal {
    pub fn pos(label: usize) -> Self {
        Self {
            label,
            negated: false,
        }
    }

    pub fn neg(label: usize) -> Self {
        Self {
            label,
            negated: true,
        }
    }

    /// Crisp truth value under a binary label vector.
    pub fn holds(&self, y: &[u8]) -> bool {
        (y[self.label] == 1) != self.negated
    }
}

/// Where a parsed rule came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSource {
    pub line: usize,
    pub text: String,
}

/// `antecedent (conjunction) => consequent (disjunction)`; an empty consequent is `FALSE`.
#[derive(Debug, Clone)]
pub struct Rule {
    antecedent: Vec<Literal>,
    consequent: Vec<Literal>,
    weight: f64,
    source: Option<RuleSource>,
}

impl Rule {
    pub fn new(antecedent: Vec<Literal>, consequent: Vec<Literal>, weight: f64) -> Result<Self> {
        if antecedent.is_empty() {
            return Err(Error::EmptyAntecedent { line: 0 });
        }
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::NonPositiveWeight {
                line: 0,
                column: 0,
                value: weight.to_string(),
            });
        }
        for side in [&antecedent, &consequent] {
            if let Some(label) = first_repeated_label(side) {
                return Err(Error::DuplicateLiteral {
                    line: 0,
                    name: format!("#{label}"),
                });
            }
        }
        Ok(Self {
            antecedent,
            consequent,
            weight,
            source: None,
        })
    }

    pub fn antecedent(&self) -> &[Literal] {
        &self.antecedent
    }

    pub fn consequent(&self) -> &[Literal] {
        &self.consequent
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn source(&self) -> Option<&RuleSource> {
        self.source.as_ref()
    }

    pub fn max_label(&self) -> usize {
        self.literals().map(|l| l.label).max().unwrap_or(0)
    }

    /// All literals, antecedent first.
    pub fn literals(&self) -> impl Iterator<Item = &Literal> {
        self.antecedent.iter().chain(self.consequent.iter())
    }

    pub fn mentions(&self, label: usize) -> bool {
        self.literals().any(|l| l.label == label)
    }

    /// Crisp semantics. `y` must cover every label the rule mentions.
    pub fn hard_satisfied(&self, y: &[u8]) -> bool {
        !self.antecedent.iter().all(|l| l.holds(y)) || self.consequent.iter().any(|l| l.holds(y))
    }

    fn canonical_sides(&self) -> (Vec<Literal>, Vec<Literal>) {
        let mut ant = self.antecedent.clone();
        let mut cons = self.consequent.clone();
        ant.sort();
        cons.sort();
        (ant, cons)
    }

    /// Canonical text, e.g. `A & !C => B @ 2.5`.
    pub fn format(&self, vocab: &LabelVocabulary) -> String {
        let lit = |l: &Literal| {
            let name = vocab.name(l.label);
            if l.negated {
                format!("!{name}")
            } else {
                name.to_string()
            }
        };
        let (ant, cons) = self.canonical_sides();
        let lhs = ant.iter().map(lit).collect::<Vec<_>>().join(" & ");
        let rhs = if cons.is_empty() {
            "FALSE".to_string()
        } else {
            cons.iter().map(lit).collect::<Vec<_>>().join(" | ")
        };
        if self.weight == 1.0 {
            format!("{lhs} => {rhs}")
        } else {
            format!("{lhs} => {rhs} @ {}", self.weight)
        }
    }
}

/// Structural equality: literal order and source are ignored.
impl PartialEq for Rule {
    fn eq(&self, other: &Self) -> bool {
        self.weight == other.weight && self.canonical_sides() == other.canonical_sides()
    }
}

fn first_repeated_label(side: &[Literal]) -> Option<usize> {
    let mut seen = HashSet::new();
    side.iter()
        .map(|l| l.label)
        .find(|&label| !seen.insert(label))
}

pub fn format_rule(rule: &Rule, vocab: &LabelVocabulary) -> String {
    rule.format(vocab)
}

/// Parsed rules together with the label vocabulary they are indexed against.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleSet {
    vocabulary: LabelVocabulary,
    rules: Vec<Rule>,
}

impl RuleSet {
    pub fn new(vocabulary: LabelVocabulary, rules: Vec<Rule>) -> Result<Self> {
        if let Some(rule) = rules.iter().find(|r| r.max_label() >= vocabulary.len()) {
            return Err(Error::InvalidVocabulary(format!(
                "rule refers to label #{} but the vocabulary has {} labels",
                rule.max_label(),
                vocabulary.len()
            )));
        }
        Ok(Self { vocabulary, rules })
    }

    pub fn empty(vocabulary: LabelVocabulary) -> Self {
        Self {
            vocabulary,
            rules: Vec::new(),
        }
    }

    pub fn vocabulary(&self) -> &LabelVocabulary {
        &self.vocabulary
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn num_labels(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn total_weight(&self) -> f64 {
        self.rules.iter().map(|r| r.weight).sum()
    }

    pub fn format_rule(&self, idx: usize) -> String {
        self.rules[idx].format(&self.vocabulary)
    }

    /// Canonical rule-file text, one rule per line.
    pub fn to_text(&self) -> String {
        self.rules
            .iter()
            .map(|r| r.format(&self.vocabulary) + "\n")
            .collect()
    }

    pub(crate) fn check_labels(&self, y: &[u8]) -> Result<()> {
        if y.len() != self.num_labels() {
            return Err(Error::shape("label vector", self.num_labels(), y.len()));
        }
        if y.iter().any(|&v| v > 1) {
            return Err(Error::NonBinary {
                what: "label vector",
            });
        }
        Ok(())
    }

    pub fn hard_satisfied(&self, rule: usize, y: &[u8]) -> Result<bool> {
        self.check_labels(y)?;
        Ok(self.rules[rule].hard_satisfied(y))
    }

    /// Indices of the rules `y` violates, ascending.
    pub fn violated_rules(&self, y: &[u8]) -> Result<Vec<usize>> {
        self.check_labels(y)?;
        Ok(self.violated_unchecked(y))
    }

    pub(crate) fn violated_unchecked(&self, y: &[u8]) -> Vec<usize> {
        self.rules
            .iter()
            .enumerate()
            .filter(|(_, r)| !r.hard_satisfied(y))
            .map(|(i, _)| i)
            .collect()
    }

    /// Re-expresses the rules against `target`, matching labels by name.
    /// Every label of this set must exist in `target`.
    pub fn reindex(&self, target: &LabelVocabulary) -> Result<RuleSet> {
        let mapping = self
            .vocabulary
            .names()
            .iter()
            .map(|name| {
                target.position(name).ok_or_else(|| {
                    Error::VocabularyMismatch(format!("rule label `{name}` is not in the dataset"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let remap = |side: &[Literal]| {
            side.iter()
                .map(|l| Literal {
                    label: mapping[l.label],
                    negated: l.negated,
                })
                .collect()
        };
        let rules = self
            .rules
            .iter()
            .map(|r| Rule {
                antecedent: remap(&r.antecedent),
                consequent: remap(&r.consequent),
                weight: r.weight,
                source: r.source.clone(),
            })
            .collect();
        Ok(RuleSet {
            vocabulary: target.clone(),
            rules,
        })
    }
}

// ---------------------------------------------------------------------------
// parsing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    Bang,
    Amp,
    Pipe,
    Arrow,
    LParen,
    RParen,
    Comma,
    At,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) | Tok::Number(s) => write!(f, "`{s}`"),
            Tok::Bang => f.write_str("`!`"),
            Tok::Amp => f.write_str("`&`"),
            Tok::Pipe => f.write_str("`|`"),
            Tok::Arrow => f.write_str("`=>`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::At => f.write_str("`@`"),
        }
    }
}

fn tokenize(line: &str, line_no: usize) -> Result<Vec<(Tok, usize)>> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        match c {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '!' => out.push((Tok::Bang, col)),
            '&' => out.push((Tok::Amp, col)),
            '|' => out.push((Tok::Pipe, col)),
            '(' => out.push((Tok::LParen, col)),
            ')' => out.push((Tok::RParen, col)),
            ',' => out.push((Tok::Comma, col)),
            '@' => out.push((Tok::At, col)),
            '=' if chars.get(i + 1) == Some(&'>') => {
                out.push((Tok::Arrow, col));
                i += 1;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push((Tok::Ident(chars[start..i].iter().collect()), col));
                continue;
            }
            c if c.is_ascii_digit() || c == '-' || c == '.' => {
                let start = i;
                i += 1;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                out.push((Tok::Number(chars[start..i].iter().collect()), col));
                continue;
            }
            other => {
                return Err(Error::Syntax {
                    line: line_no,
                    column: col,
                    message: format!("unexpected character `{other}`"),
                })
            }
        }
        i += 1;
    }
    Ok(out)
}

enum Labels<'a> {
    Fixed(&'a LabelVocabulary),
    Growing(LabelVocabulary),
}

impl Labels<'_> {
    fn resolve(&mut self, name: &str, line: usize, column: usize) -> Result<usize> {
        match self {
            Labels::Fixed(v) => v.position(name).ok_or_else(|| Error::UnknownLabel {
                line,
                column,
                name: name.to_string(),
            }),
            Labels::Growing(v) => Ok(match v.position(name) {
                Some(i) => i,
                None => v.push(name.to_string()),
            }),
        }
    }
}

/// Antecedent, consequent, weight.
type Clause = (Vec<Literal>, Vec<Literal>, f64);

struct LineParser<'t, 'v, 'l> {
    toks: &'t [(Tok, usize)],
    pos: usize,
    line: usize,
    end_col: usize,
    labels: &'l mut Labels<'v>,
}

impl LineParser<'_, '_, '_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |(_, c)| *c)
    }

    fn error(&self, message: impl Into<String>) -> Error {
        let found = match self.peek() {
            Some(t) => format!(", found {t}"),
            None => ", found end of line".to_string(),
        };
        Error::Syntax {
            line: self.line,
            column: self.col(),
            message: format!("{}{found}", message.into()),
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<()> {
        if self.eat(&tok) {
            Ok(())
        } else {
            Err(self.error(format!("expected {what}")))
        }
    }

    fn ident(&mut self) -> Result<(String, usize)> {
        match self.peek() {
            Some(Tok::Ident(name)) if !RESERVED.contains(&name.as_str()) => {
                let out = (name.clone(), self.col());
                self.pos += 1;
                Ok(out)
            }
            Some(Tok::Ident(_)) => Err(self.error("reserved word cannot be used as a label")),
            _ => Err(self.error("expected a label")),
        }
    }

    fn literal(&mut self) -> Result<Literal> {
        let negated = self.eat(&Tok::Bang);
        let (name, col) = self.ident()?;
        let label = self.labels.resolve(&name, self.line, col)?;
        Ok(Literal { label, negated })
    }

    fn weight(&mut self) -> Result<f64> {
        if !self.eat(&Tok::At) {
            return Ok(1.0);
        }
        let col = self.col();
        let text = match self.peek() {
            Some(Tok::Number(s)) => s.clone(),
            _ => return Err(self.error("expected a weight after `@`")),
        };
        self.pos += 1;
        let value: f64 = text.parse().map_err(|_| Error::Syntax {
            line: self.line,
            column: col,
            message: format!("malformed weight `{text}`"),
        })?;
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::NonPositiveWeight {
                line: self.line,
                column: col,
                value: text,
            });
        }
        Ok(value)
    }

    fn finish(&self) -> Result<()> {
        if self.pos < self.toks.len() {
            return Err(self.error("expected end of rule"));
        }
        Ok(())
    }

    fn mutex(&mut self) -> Result<Vec<Clause>> {
        self.pos += 1;
        self.expect(Tok::LParen, "`(` after MUTEX")?;
        let mut members = vec![self.literal_positive()?];
        while self.eat(&Tok::Comma) {
            members.push(self.literal_positive()?);
        }
        self.expect(Tok::RParen, "`,` or `)`")?;
        if members.len() < 2 {
            return Err(self.error("MUTEX needs at least two labels"));
        }
        let weight = self.weight()?;
        self.finish()?;
        let mut seen = HashSet::new();
        for m in &members {
            if !seen.insert(m.label) {
                return Err(self.duplicate(m.label));
            }
        }
        let mut out = Vec::new();
        for (i, a) in members.iter().enumerate() {
            for b in &members[i + 1..] {
                out.push((
                    vec![Literal::pos(a.label)],
                    vec![Literal::neg(b.label)],
                    weight,
                ));
            }
        }
        Ok(out)
    }

    fn literal_positive(&mut self) -> Result<Literal> {
        let (name, col) = self.ident()?;
        let label = self.labels.resolve(&name, self.line, col)?;
        Ok(Literal::pos(label))
    }

    fn duplicate(&self, label: usize) -> Error {
        let name = match &*self.labels {
            Labels::Fixed(v) => v.name(label).to_string(),
            Labels::Growing(v) => v.name(label).to_string(),
        };
        Error::DuplicateLiteral {
            line: self.line,
            name,
        }
    }

    fn clause(&mut self) -> Result<Clause> {
        if self.peek() == Some(&Tok::Arrow) {
            return Err(Error::EmptyAntecedent { line: self.line });
        }
        let mut antecedent = vec![self.literal()?];
        while self.eat(&Tok::Amp) {
            antecedent.push(self.literal()?);
        }
        self.expect(Tok::Arrow, "`&` or `=>`")?;
        let mut consequent = Vec::new();
        if self.peek() == Some(&Tok::Ident("FALSE".into())) {
            self.pos += 1;
        } else {
            consequent.push(self.literal()?);
            while self.eat(&Tok::Pipe) {
                consequent.push(self.literal()?);
            }
        }
        let weight = self.weight()?;
        self.finish()?;
        for side in [&antecedent, &consequent] {
            if let Some(label) = first_repeated_label(side) {
                return Err(self.duplicate(label));
            }
        }
        Ok((antecedent, consequent, weight))
    }
}

/// Parses rule-file text. With `vocab`, every identifier must already be a
/// label of it; without, the vocabulary is built in order of first appearance.
pub fn parse_rules(text: &str, vocab: Option<&LabelVocabulary>) -> Result<RuleSet> {
    let mut labels = match vocab {
        Some(v) => Labels::Fixed(v),
        None => Labels::Growing(LabelVocabulary {
            names: Vec::new(),
            index: HashMap::new(),
        }),
    };
    let mut rules = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim_end_matches('\r');
        let toks = tokenize(content, line_no)?;
        if toks.is_empty() {
            continue;
        }
        let mut p = LineParser {
            toks: &toks,
            pos: 0,
            line: line_no,
            end_col: content.chars().count() + 1,
            labels: &mut labels,
        };
        let clauses = if p.peek() == Some(&Tok::Ident("MUTEX".into())) {
            p.mutex()?
        } else {
            vec![p.clause()?]
        };
        let source = RuleSource {
            line: line_no,
            text: content.trim().to_string(),
        };
        rules.extend(
            clauses
                .into_iter()
                .map(|(antecedent, consequent, weight)| Rule {
                    antecedent,
                    consequent,
                    weight,
                    source: Some(source.clone()),
                }),
        );
    }
    let vocabulary = match labels {
        Labels::Fixed(v) => v.clone(),
        Labels::Growing(v) if v.is_empty() => {
            return Err(Error::InvalidVocabulary(
                "rule text mentions no labels and no vocabulary was supplied".into(),
            ))
        }
        Labels::Growing(v) => v,
    };
    warn_duplicates(&rules, &vocabulary);
    Ok(RuleSet { vocabulary, rules })
}

fn warn_duplicates(rules: &[Rule], vocab: &LabelVocabulary) {
    let mut seen: HashMap<String, usize> = HashMap::new();
    for rule in rules {
        let (ant, cons) = rule.canonical_sides();
        let key = format!("{ant:?}{cons:?}");
        let line = rule.source.as_ref().map_or(0, |s| s.line);
        if let Some(first) = seen.get(&key) {
            log::warn!(
                "line {line}: rule `{}` duplicates the rule on line {first}",
                rule.format(vocab)
            );
        } else {
            seen.insert(key, line);
        }
    }
}
