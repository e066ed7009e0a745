//! The register alphabet: thread ids, register values and the actions that
//! appear in schedules, register traces and model-checker paths.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest number of threads any register or program may have.
pub const MAX_THREADS: usize = 8;

/// Largest register domain; value sets are stored as a 32-bit mask.
pub const MAX_DOMAIN: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ThreadId(pub u8);

impl ThreadId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ThreadId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Value(pub u8);

impl Value {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One symbol of the extended register alphabet, plus the thread-local
/// `crit`/`noncrit` events.
///
/// The derived ordering (variant, then thread, then value) is the canonical
/// order used for successor sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Action {
    InvokeRead(ThreadId),
    FinishRead(ThreadId, Value),
    InvokeWrite(ThreadId, Value),
    FinishWrite(ThreadId),
    /// Regular model only: the point at which a pending write takes effect.
    OrderWrite(ThreadId),
    /// Atomic model only: linearization point of a read.
    ExecuteRead(ThreadId),
    /// Atomic model only: linearization point of a write.
    ExecuteWrite(ThreadId),
    Crit(ThreadId),
    NonCrit(ThreadId),
}

impl Action {
    pub fn thread(self) -> ThreadId {
        match self {
            Action::InvokeRead(t)
            | Action::FinishRead(t, _)
            | Action::InvokeWrite(t, _)
            | Action::FinishWrite(t)
            | Action::OrderWrite(t)
            | Action::ExecuteRead(t)
            | Action::ExecuteWrite(t)
            | Action::Crit(t)
            | Action::NonCrit(t) => t,
        }
    }

    /// Whether the action belongs to the base alphabet of schedules.
    pub fn is_base(self) -> bool {
        matches!(
            self,
            Action::InvokeRead(_)
                | Action::FinishRead(..)
                | Action::InvokeWrite(..)
                | Action::FinishWrite(_)
        )
    }

    /// Order and execute actions, which erasure removes.
    pub fn is_internal(self) -> bool {
        matches!(
            self,
            Action::OrderWrite(_) | Action::ExecuteRead(_) | Action::ExecuteWrite(_)
        )
    }

    pub fn is_invocation(self) -> bool {
        matches!(self, Action::InvokeRead(_) | Action::InvokeWrite(..))
    }

    pub fn is_response(self) -> bool {
        matches!(self, Action::FinishRead(..) | Action::FinishWrite(_))
    }

    /// Short mnemonic used by the schedule and trace file formats.
    pub fn token(self) -> &'static str {
        match self {
            Action::InvokeRead(_) => "sr",
            Action::FinishRead(..) => "fr",
            Action::InvokeWrite(..) => "sw",
            Action::FinishWrite(_) => "fw",
            Action::OrderWrite(_) => "ow",
            Action::ExecuteRead(_) => "er",
            Action::ExecuteWrite(_) => "ew",
            Action::Crit(_) => "crit",
            Action::NonCrit(_) => "noncrit",
        }
    }

    pub fn value(self) -> Option<Value> {
        match self {
            Action::FinishRead(_, v) | Action::InvokeWrite(_, v) => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.value() {
            Some(v) => write!(f, "{} {} {}", self.token(), self.thread(), v),
            None => write!(f, "{} {}", self.token(), self.thread()),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseActionError {
    #[error("empty action")]
    Empty,
    #[error("unknown action `{0}`")]
    UnknownToken(String),
    #[error("`{token}` expects {expected} argument(s), got {got}")]
    Arity {
        token: String,
        expected: usize,
        got: usize,
    },
    #[error("invalid number `{0}`")]
    Number(String),
}

fn parse_u8(s: &str) -> Result<u8, ParseActionError> {
    s.parse::<u8>()
        .map_err(|_| ParseActionError::Number(s.to_string()))
}

impl FromStr for Action {
    type Err = ParseActionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let words: Vec<&str> = s.split_whitespace().collect();
        let (&token, args) = words.split_first().ok_or(ParseActionError::Empty)?;
        let expected = match token {
            "fr" | "sw" => 2,
            "sr" | "fw" | "ow" | "er" | "ew" | "crit" | "noncrit" => 1,
            _ => return Err(ParseActionError::UnknownToken(token.to_string())),
        };
        if args.len() != expected {
            return Err(ParseActionError::Arity {
                token: token.to_string(),
                expected,
                got: args.len(),
            });
        }
        let t = ThreadId(parse_u8(args[0])?);
        let v = || parse_u8(args[1]).map(Value);
        Ok(match token {
            "sr" => Action::InvokeRead(t),
            "fr" => Action::FinishRead(t, v()?),
            "sw" => Action::InvokeWrite(t, v()?),
            "fw" => Action::FinishWrite(t),
            "ow" => Action::OrderWrite(t),
            "er" => Action::ExecuteRead(t),
            "ew" => Action::ExecuteWrite(t),
            "crit" => Action::Crit(t),
            _ => Action::NonCrit(t),
        })
    }
}

/// A subset of a register domain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ValueSet(pub u32);

impl ValueSet {
    pub fn singleton(v: Value) -> Self {
        ValueSet(1 << v.0)
    }

    pub fn insert(&mut self, v: Value) {
        self.0 |= 1 << v.0;
    }

    pub fn contains(self, v: Value) -> bool {
        self.0 & (1 << v.0) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = Value> {
        (0..MAX_DOMAIN as u8)
            .filter(move |b| self.0 & (1 << b) != 0)
            .map(Value)
    }
}

impl FromIterator<Value> for ValueSet {
    fn from_iter<I: IntoIterator<Item = Value>>(iter: I) -> Self {
        let mut set = ValueSet::default();
        for v in iter {
            set.insert(v);
        }
        set
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order_is_tag_then_thread_then_value() {
        let mut actions = vec![
            Action::InvokeWrite(ThreadId(1), Value(0)),
            Action::InvokeWrite(ThreadId(0), Value(1)),
            Action::InvokeRead(ThreadId(1)),
            Action::InvokeWrite(ThreadId(0), Value(0)),
            Action::InvokeRead(ThreadId(0)),
        ];
        actions.sort();
        assert_eq!(
            actions,
            vec![
                Action::InvokeRead(ThreadId(0)),
                Action::InvokeRead(ThreadId(1)),
                Action::InvokeWrite(ThreadId(0), Value(0)),
                Action::InvokeWrite(ThreadId(0), Value(1)),
                Action::InvokeWrite(ThreadId(1), Value(0)),
            ]
        );
    }

    #[test]
    fn text_form_round_trips() {
        for text in ["sr 0", "fr 1 3", "sw 2 0", "fw 0", "ow 1", "er 0", "ew 2", "crit 1", "noncrit 0"] {
            let a: Action = text.parse().unwrap();
            assert_eq!(a.to_string(), text);
        }
    }

    #[test]
    fn malformed_actions_are_rejected() {
        assert_eq!("".parse::<Action>(), Err(ParseActionError::Empty));
        assert!(matches!("xx 0".parse::<Action>(), Err(ParseActionError::UnknownToken(_))));
        assert!(matches!("sw 0".parse::<Action>(), Err(ParseActionError::Arity { .. })));
        assert!(matches!("sr a".parse::<Action>(), Err(ParseActionError::Number(_))));
    }

    #[test]
    fn value_set_basics() {
        let mut s = ValueSet::singleton(Value(2));
        s.insert(Value(0));
        s.insert(Value(2));
        assert_eq!(s.len(), 2);
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![Value(0), Value(2)]);
        assert!(!s.contains(Value(1)));
    }
}
