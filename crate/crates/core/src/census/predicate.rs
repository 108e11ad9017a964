//! Conjunctive row predicates for conditional sampling, e.g.
//! `age >= 60 and sex = "Female"`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{canonical_column, CensusError, CensusRecord, CensusTable, ColumnKind, FieldValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Comparator {
    fn symbol(self) -> &'static str {
        match self {
            Comparator::Eq => "=",
            Comparator::Ne => "!=",
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
        }
    }

    fn is_ordering(self) -> bool {
        !matches!(self, Comparator::Eq | Comparator::Ne)
    }

    fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            Comparator::Eq => ord == Equal,
            Comparator::Ne => ord != Equal,
            Comparator::Lt => ord == Less,
            Comparator::Le => ord != Greater,
            Comparator::Gt => ord == Greater,
            Comparator::Ge => ord != Less,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Literal {
    Int(i64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conjunct {
    pub column: String,
    pub comparator: Comparator,
    pub value: Literal,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SamplePredicate {
    pub conjuncts: Vec<Conjunct>,
}

impl SamplePredicate {
    /// Check columns and comparator use against a table's schema.
    pub fn validate(&self, table: &CensusTable) -> Result<(), CensusError> {
        for c in &self.conjuncts {
            let kind = table.column_kind(&c.column).ok_or_else(|| {
                CensusError::InvalidPredicate(format!("unknown column `{}`", c.column))
            })?;
            match (kind, &c.value) {
                (ColumnKind::Categorical, _) if c.comparator.is_ordering() => {
                    return Err(CensusError::InvalidPredicate(format!(
                        "`{}` is categorical; only = and != apply",
                        c.column
                    )))
                }
                (ColumnKind::Integer, Literal::Text(t)) => {
                    return Err(CensusError::InvalidPredicate(format!(
                        "`{}` is an integer column but `{t}` is not an integer",
                        c.column
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Whether a record satisfies every conjunct. Call [`validate`](Self::validate) first;
    /// unknown columns never match.
    pub fn matches(&self, record: &CensusRecord) -> bool {
        self.conjuncts.iter().all(|c| {
            let Some(field) = record.value(&c.column) else {
                return false;
            };
            let ord = match (field, &c.value) {
                (FieldValue::Int(a), Literal::Int(b)) => a.cmp(b),
                (FieldValue::Cat(a), Literal::Text(b)) => a.cmp(b.as_str()),
                (FieldValue::Cat(a), Literal::Int(b)) => a.cmp(b.to_string().as_str()),
                (FieldValue::Int(_), Literal::Text(_)) => return false,
            };
            c.comparator.holds(ord)
        })
    }
}

impl fmt::Display for SamplePredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.conjuncts.iter().enumerate() {
            if i > 0 {
                f.write_str(" and ")?;
            }
            write!(f, "{} {} ", c.column, c.comparator.symbol())?;
            match &c.value {
                Literal::Int(v) => write!(f, "{v}")?,
                Literal::Text(t) => write!(f, "\"{}\"", t.replace('\\', "\\\\").replace('"', "\\\""))?,
            }
        }
        Ok(())
    }
}

impl FromStr for SamplePredicate {
    type Err = CensusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let tokens = tokenize(s)?;
        let mut conjuncts = Vec::new();
        let mut iter = tokens.into_iter().peekable();
        loop {
            let column = match iter.next() {
                Some(Token::Word(w)) => w,
                None if conjuncts.is_empty() => break,
                other => return Err(invalid(format!("expected column name, found {other:?}"))),
            };
            let comparator = match iter.next() {
                Some(Token::Op(op)) => op,
                other => return Err(invalid(format!("expected comparator after `{column}`, found {other:?}"))),
            };
            let value = match iter.next() {
                Some(Token::Word(w)) => w
                    .parse::<i64>()
                    .map(Literal::Int)
                    .unwrap_or(Literal::Text(w)),
                Some(Token::Quoted(q)) => Literal::Text(q),
                other => return Err(invalid(format!("expected value after `{column}`, found {other:?}"))),
            };
            let column = canonical_column(&column)
                .map(str::to_string)
                .unwrap_or(column);
            conjuncts.push(Conjunct { column, comparator, value });
            match iter.next() {
                None => break,
                Some(Token::And) => continue,
                other => return Err(invalid(format!("expected `and`, found {other:?}"))),
            }
        }
        Ok(SamplePredicate { conjuncts })
    }
}

fn invalid(msg: String) -> CensusError {
    CensusError::InvalidPredicate(msg)
}

#[derive(Debug, PartialEq)]
enum Token {
    Word(String),
    Quoted(String),
    Op(Comparator),
    And,
}

fn tokenize(s: &str) -> Result<Vec<Token>, CensusError> {
    let mut out = Vec::new();
    let chars: Vec<char> = s.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() || c == ',' {
            if c == ',' {
                out.push(Token::And);
            }
            i += 1;
            continue;
        }
        let two: String = chars[i..chars.len().min(i + 2)].iter().collect();
        let op = match two.as_str() {
            "<=" => Some((Comparator::Le, 2)),
            ">=" => Some((Comparator::Ge, 2)),
            "!=" | "<>" => Some((Comparator::Ne, 2)),
            "==" => Some((Comparator::Eq, 2)),
            "&&" => {
                out.push(Token::And);
                i += 2;
                continue;
            }
            _ => match c {
                '<' => Some((Comparator::Lt, 1)),
                '>' => Some((Comparator::Gt, 1)),
                '=' => Some((Comparator::Eq, 1)),
                '≠' => Some((Comparator::Ne, 1)),
                '≤' => Some((Comparator::Le, 1)),
                '≥' => Some((Comparator::Ge, 1)),
                _ => None,
            },
        };
        if let Some((op, len)) = op {
            out.push(Token::Op(op));
            i += len;
            continue;
        }
        if c == '"' || c == '\'' {
            let quote = c;
            let mut text = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None => return Err(invalid("unterminated quoted value".into())),
                    Some('\\') if chars.get(i + 1).is_some_and(|&n| n == quote || n == '\\') => {
                        text.push(chars[i + 1]);
                        i += 2;
                    }
                    Some(&ch) if ch == quote => {
                        i += 1;
                        break;
                    }
                    Some(&ch) => {
                        text.push(ch);
                        i += 1;
                    }
                }
            }
            out.push(Token::Quoted(text));
            continue;
        }
        let start = i;
        while i < chars.len()
            && !chars[i].is_whitespace()
            && !matches!(chars[i], '<' | '>' | '=' | '!' | ',' | '"' | '\'' | '&' | '≠' | '≤' | '≥')
        {
            i += 1;
        }
        if start == i {
            return Err(invalid(format!("unexpected character `{c}`")));
        }
        let word: String = chars[start..i].iter().collect();
        if word.eq_ignore_ascii_case("and") {
            out.push(Token::And);
        } else {
            out.push(Token::Word(word));
        }
    }
    Ok(out)
}
