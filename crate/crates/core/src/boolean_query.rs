//! AND-of-OR Boolean queries: construction from a grouping, canonical
//! rendering, parsing of hand-written expansions, and document matching.
//!
//! Canonical form: `('t1' OR 't2') AND ('t3')`.

use std::fmt;

use thiserror::Error;

use crate::clustering::Grouping;
use crate::ranking::word_distance;
use crate::vector_model::WordVector;

/// A quoted phrase. Stored lowercased with single spaces between words.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Term(String);

impl Term {
    /// Normalizes `text`; returns `None` when nothing remains.
    pub fn new(text: &str) -> Option<Self> {
        let norm = text
            .split_whitespace()
            .map(str::to_lowercase)
            .collect::<Vec<_>>()
            .join(" ");
        (!norm.is_empty()).then_some(Self(norm))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Terms joined by OR. Terms are unique within a group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrGroup {
    terms: Vec<Term>,
}

impl OrGroup {
    /// Builds a group, dropping duplicate terms (first occurrence wins).
    pub fn new(terms: impl IntoIterator<Item = Term>) -> Option<Self> {
        let mut out: Vec<Term> = Vec::new();
        for t in terms {
            if !out.contains(&t) {
                out.push(t);
            }
        }
        (!out.is_empty()).then_some(Self { terms: out })
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Conjunction of OR groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryAst {
    groups: Vec<OrGroup>,
}

impl QueryAst {
    pub fn new(groups: Vec<OrGroup>) -> Option<Self> {
        (!groups.is_empty()).then_some(Self { groups })
    }

    /// Builds an AST from raw strings, normalizing and deduplicating. Empty
    /// terms and groups are dropped.
    pub fn from_strings<G, T>(groups: G) -> Option<Self>
    where
        G: IntoIterator,
        G::Item: IntoIterator<Item = T>,
        T: AsRef<str>,
    {
        let groups = groups
            .into_iter()
            .filter_map(|g| OrGroup::new(g.into_iter().filter_map(|t| Term::new(t.as_ref()))))
            .collect();
        Self::new(groups)
    }

    pub fn groups(&self) -> &[OrGroup] {
        &self.groups
    }

    pub fn term_count(&self) -> usize {
        self.groups.iter().map(OrGroup::len).sum()
    }

    /// Adds a group at the end.
    pub fn and(mut self, group: OrGroup) -> Self {
        self.groups.push(group);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("term {0:?} contains a single quote and cannot be rendered")]
    QuoteInTerm(String),
}

/// Canonical rendering: `('a' OR 'b') AND ('c')`.
pub fn render(ast: &QueryAst) -> Result<String, RenderError> {
    let mut out = String::new();
    for (gi, group) in ast.groups.iter().enumerate() {
        if gi > 0 {
            out.push_str(" AND ");
        }
        out.push('(');
        for (ti, term) in group.terms.iter().enumerate() {
            if term.0.contains('\'') {
                return Err(RenderError::QuoteInTerm(term.0.clone()));
            }
            if ti > 0 {
                out.push_str(" OR ");
            }
            out.push('\'');
            out.push_str(&term.0);
            out.push('\'');
        }
        out.push(')');
    }
    Ok(out)
}

/// Turns a grouping into a query: one OR group per cluster, strongest
/// cluster first, terms nearest their cluster's centroid first.
pub fn formulate(grouping: &Grouping) -> QueryAst {
    let mut groups: Vec<(f64, OrGroup)> = grouping
        .clusters
        .iter()
        .filter_map(|cluster| {
            let centroid = WordVector::new("", cluster.centroid());
            let mut members: Vec<(f64, &str)> = cluster
                .members
                .iter()
                .map(|m| {
                    (
                        word_distance(m, &centroid).unwrap_or(f64::INFINITY),
                        m.token.as_str(),
                    )
                })
                .collect();
            members.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
            let group = OrGroup::new(members.into_iter().filter_map(|(_, t)| Term::new(t)))?;
            Some((cluster.score().unwrap_or(0.0), group))
        })
        .collect();
    groups.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.terms.cmp(&b.1.terms)));
    QueryAst {
        groups: groups.into_iter().map(|(_, g)| g).collect(),
    }
}

/// A single OR group holding the query followed by every suggestion.
pub fn flat_or<'a>(
    query: &'a str,
    suggestions: impl IntoIterator<Item = &'a str>,
) -> Option<QueryAst> {
    let terms = std::iter::once(query)
        .chain(suggestions)
        .filter_map(Term::new);
    Some(QueryAst {
        groups: vec![OrGroup::new(terms)?],
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("empty query")]
    Empty,
    #[error("unbalanced parentheses at byte {offset}")]
    UnbalancedParen { offset: usize },
    #[error("empty group at byte {offset}")]
    EmptyGroup { offset: usize },
    #[error("empty term at byte {offset}")]
    EmptyTerm { offset: usize },
    #[error("unterminated quote starting at byte {offset}")]
    UnterminatedQuote { offset: usize },
    #[error("unexpected {found} at byte {offset}")]
    UnexpectedToken { offset: usize, found: String },
    #[error("ambiguous mixed operators at byte {offset}")]
    AmbiguousMixedOperators { offset: usize },
    #[error("unsupported operator {operator} at byte {offset}")]
    UnsupportedOperator { offset: usize, operator: String },
}

impl ParseError {
    pub fn offset(&self) -> Option<usize> {
        match self {
            Self::Empty => None,
            Self::UnbalancedParen { offset }
            | Self::EmptyGroup { offset }
            | Self::EmptyTerm { offset }
            | Self::UnterminatedQuote { offset }
            | Self::UnexpectedToken { offset, .. }
            | Self::AmbiguousMixedOperators { offset }
            | Self::UnsupportedOperator { offset, .. } => Some(*offset),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok<'a> {
    LParen,
    RParen,
    And,
    Or,
    Quoted(&'a str),
    Bare(&'a str),
}

impl Tok<'_> {
    fn describe(&self) -> String {
        match self {
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::And => "AND".into(),
            Tok::Or => "OR".into(),
            Tok::Quoted(s) => format!("term '{s}'"),
            Tok::Bare(s) => format!("word {s:?}"),
        }
    }
}

fn lex(input: &str) -> Result<Vec<(usize, Tok<'_>)>, ParseError> {
    let bytes = input.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = input[i..].chars().next().expect("in bounds");
        match c {
            _ if c.is_whitespace() => i += c.len_utf8(),
            '(' => {
                toks.push((i, Tok::LParen));
                i += 1;
            }
            ')' => {
                toks.push((i, Tok::RParen));
                i += 1;
            }
            '\'' => {
                let start = i;
                let close = input[i + 1..]
                    .find('\'')
                    .ok_or(ParseError::UnterminatedQuote { offset: start })?;
                toks.push((start, Tok::Quoted(&input[i + 1..i + 1 + close])));
                i += close + 2;
            }
            _ => {
                let start = i;
                let end = input[i..]
                    .find(|ch: char| ch.is_whitespace() || matches!(ch, '(' | ')' | '\''))
                    .map_or(input.len(), |k| i + k);
                let word = &input[start..end];
                let tok = if word.eq_ignore_ascii_case("and") {
                    Tok::And
                } else if word.eq_ignore_ascii_case("or") {
                    Tok::Or
                } else if word.eq_ignore_ascii_case("not") || word.eq_ignore_ascii_case("near") {
                    return Err(ParseError::UnsupportedOperator {
                        offset: start,
                        operator: word.to_uppercase(),
                    });
                } else {
                    Tok::Bare(word)
                };
                toks.push((start, tok));
                i = end;
            }
        }
    }
    Ok(toks)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok<'a>)>,
    pos: usize,
    end: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&(usize, Tok<'a>)> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<(usize, Tok<'a>)> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        match self.next() {
            Some((off, Tok::Quoted(s))) => {
                Term::new(s).ok_or(ParseError::EmptyTerm { offset: off })
            }
            Some((off, Tok::Bare(s))) => Term::new(s).ok_or(ParseError::EmptyTerm { offset: off }),
            Some((offset, Tok::RParen)) => Err(ParseError::UnbalancedParen { offset }),
            Some((offset, t)) => Err(ParseError::UnexpectedToken {
                offset,
                found: t.describe(),
            }),
            None => Err(ParseError::UnexpectedToken {
                offset: self.end,
                found: "end of input".into(),
            }),
        }
    }

    /// `( term { OR term } )`, with the opening paren already consumed.
    fn paren_group(&mut self, open: usize) -> Result<OrGroup, ParseError> {
        if let Some((offset, Tok::RParen)) = self.peek() {
            return Err(ParseError::EmptyGroup { offset: *offset });
        }
        if self.peek().is_none() {
            return Err(ParseError::UnbalancedParen { offset: open });
        }
        let mut terms = vec![self.term()?];
        loop {
            match self.next() {
                Some((_, Tok::RParen)) => break,
                Some((_, Tok::Or)) => terms.push(self.term()?),
                Some((offset, Tok::And)) => {
                    return Err(ParseError::AmbiguousMixedOperators { offset })
                }
                Some((offset, Tok::LParen)) => {
                    return Err(ParseError::UnexpectedToken {
                        offset,
                        found: "'('".into(),
                    })
                }
                Some((offset, t)) => {
                    return Err(ParseError::UnexpectedToken {
                        offset,
                        found: t.describe(),
                    })
                }
                None => return Err(ParseError::UnbalancedParen { offset: open }),
            }
        }
        Ok(OrGroup::new(terms).expect("non-empty"))
    }

    fn group(&mut self) -> Result<(OrGroup, bool), ParseError> {
        match self.peek() {
            Some((open, Tok::LParen)) => {
                let open = *open;
                self.pos += 1;
                Ok((self.paren_group(open)?, true))
            }
            _ => Ok((OrGroup::new([self.term()?]).expect("non-empty"), false)),
        }
    }

    fn query(&mut self) -> Result<QueryAst, ParseError> {
        let mut groups = Vec::new();
        // a top-level OR may only chain bare words, and never alongside AND
        let (mut seen_and, mut seen_or) = (false, false);
        let (first, mut last_parenthesized) = self.group()?;
        groups.push(first);
        while let Some((offset, tok)) = self.next() {
            match tok {
                Tok::Or => {
                    let (group, parenthesized) = self.group()?;
                    if parenthesized || last_parenthesized {
                        return Err(ParseError::UnexpectedToken {
                            offset,
                            found: "OR outside parentheses".into(),
                        });
                    }
                    if seen_and {
                        return Err(ParseError::AmbiguousMixedOperators { offset });
                    }
                    seen_or = true;
                    let last = groups.pop().expect("non-empty");
                    let terms = last.terms.into_iter().chain(group.terms);
                    groups.push(OrGroup::new(terms).expect("non-empty"));
                    last_parenthesized = false;
                }
                Tok::And => {
                    if seen_or {
                        return Err(ParseError::AmbiguousMixedOperators { offset });
                    }
                    seen_and = true;
                    let (group, parenthesized) = self.group()?;
                    groups.push(group);
                    last_parenthesized = parenthesized;
                }
                Tok::RParen => return Err(ParseError::UnbalancedParen { offset }),
                t => {
                    return Err(ParseError::UnexpectedToken {
                        offset,
                        found: t.describe(),
                    })
                }
            }
        }
        Ok(QueryAst { groups })
    }
}

/// Parses an AND-of-OR query. Keywords are case-insensitive; terms are
/// lowercased and deduplicated within their group.
pub fn parse(input: &str) -> Result<QueryAst, ParseError> {
    let toks = lex(input)?;
    if toks.is_empty() {
        return Err(ParseError::Empty);
    }
    let mut parser = Parser {
        toks,
        pos: 0,
        end: input.len(),
    };
    parser.query()
}

/// A news article or other searchable record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub text: String,
}

impl Document {
    pub fn new(id: impl Into<String>, title: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            title: title.into(),
            text: text.into(),
        }
    }
}

/// Lowercased maximal runs of letters and digits.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Options controlling which document fields are searched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchOptions {
    pub include_title: bool,
}

impl Default for MatchOptions {
    fn default() -> Self {
        Self {
            include_title: true,
        }
    }
}

/// A query with each term pre-split into tokens.
#[derive(Debug, Clone)]
pub struct CompiledQuery {
    groups: Vec<Vec<Vec<String>>>,
}

impl CompiledQuery {
    pub fn new(ast: &QueryAst) -> Self {
        Self {
            groups: ast
                .groups
                .iter()
                .map(|g| g.terms.iter().map(|t| tokenize(&t.0)).collect())
                .collect(),
        }
    }

    /// All groups must contain a term whose tokens occur contiguously.
    pub fn matches_tokens(&self, doc_tokens: &[String]) -> bool {
        self.groups.iter().all(|group| {
            group
                .iter()
                .any(|phrase| contains_phrase(doc_tokens, phrase))
        })
    }
}

fn contains_phrase(haystack: &[String], phrase: &[String]) -> bool {
    if phrase.is_empty() || phrase.len() > haystack.len() {
        return false;
    }
    haystack.windows(phrase.len()).any(|w| w == phrase)
}

/// Token stream searched for a document (title then body, by default).
pub fn document_tokens(doc: &Document, options: MatchOptions) -> Vec<String> {
    let mut tokens = if options.include_title {
        tokenize(&doc.title)
    } else {
        Vec::new()
    };
    tokens.extend(tokenize(&doc.text));
    tokens
}

pub fn matches(ast: &QueryAst, doc: &Document) -> bool {
    matches_with(ast, doc, MatchOptions::default())
}

pub fn matches_with(ast: &QueryAst, doc: &Document, options: MatchOptions) -> bool {
    CompiledQuery::new(ast).matches_tokens(&document_tokens(doc, options))
}
