//! Mutual exclusion algorithms encoded as per-thread control-flow graphs
//! over shared registers.

pub mod builders;
pub mod cycles;
pub mod program;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use builders::{
    attiya_welch_alternate, attiya_welch_original, lamport_3bit, peterson, szymanski_3bit, szymanski_flag,
    szymanski_flag_bits,
};
pub use cycles::{cg, ord, Cycle};
pub use program::{Event, Expr, Program, RegisterDecl, Statement, Writer};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlgorithmError {
    #[error("invalid program: {0}")]
    Invalid(String),
    #[error("a cycle needs at least one element and no duplicates")]
    InvalidCycle,
    #[error("index {index} out of range for a cycle of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("{algorithm} does not support {threads} threads")]
    UnsupportedThreads { algorithm: String, threads: u8 },
    #[error("unknown algorithm `{0}`")]
    UnknownAlgorithm(String),
    #[error("unknown {kind} `{value}`")]
    UnknownOption { kind: &'static str, value: String },
}

/// How the Lamport three-bit algorithm computes `f`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LamportVariant {
    /// Read each `z_j` of the cycle once, then compute `f` locally.
    #[default]
    Snapshot,
    /// Read the two `z` registers each `CG` test compares.
    ReRead,
}

impl FromStr for LamportVariant {
    type Err = AlgorithmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "snapshot" => Ok(LamportVariant::Snapshot),
            "reread" | "re-read" => Ok(LamportVariant::ReRead),
            _ => Err(AlgorithmError::UnknownOption {
                kind: "variant",
                value: s.to_string(),
            }),
        }
    }
}

/// The three registers one five-valued flag is split into.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Bit {
    Intent,
    DoorIn,
    DoorOut,
}

impl Bit {
    pub const LISTED: [Bit; 3] = [Bit::Intent, Bit::DoorIn, Bit::DoorOut];
}

impl FromStr for Bit {
    type Err = AlgorithmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "intent" => Ok(Bit::Intent),
            "door_in" | "door-in" => Ok(Bit::DoorIn),
            "door_out" | "door-out" => Ok(Bit::DoorOut),
            _ => Err(AlgorithmError::UnknownOption {
                kind: "bit",
                value: s.to_string(),
            }),
        }
    }
}

impl fmt::Display for Bit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Bit::Intent => "intent",
            Bit::DoorIn => "door_in",
            Bit::DoorOut => "door_out",
        })
    }
}

/// Parses a comma-separated reset order such as `door_out,door_in,intent`.
pub fn parse_reset_order(s: &str) -> Result<[Bit; 3], AlgorithmError> {
    let bits = s.split(',').map(|b| b.trim().parse()).collect::<Result<Vec<Bit>, _>>()?;
    let order: [Bit; 3] = bits.try_into().map_err(|_| AlgorithmError::UnknownOption {
        kind: "reset order",
        value: s.to_string(),
    })?;
    let mut sorted = order;
    sorted.sort();
    if sorted != Bit::LISTED {
        return Err(AlgorithmError::UnknownOption {
            kind: "reset order",
            value: s.to_string(),
        });
    }
    Ok(order)
}

/// Names accepted by [`build`].
pub const NAMES: [&str; 7] = [
    "peterson",
    "szymanski-flag",
    "szymanski-bits",
    "szymanski-3bit",
    "lamport-3bit",
    "attiya-welch",
    "attiya-welch-alt",
];

/// Parameters of [`build`]; each builder ignores the ones it has no use for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Params {
    /// Thread count; `None` picks 2 for two-thread algorithms and 3 otherwise.
    pub threads: Option<u8>,
    pub variant: LamportVariant,
    pub reset_order: [Bit; 3],
    pub semaphore: bool,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            threads: None,
            variant: LamportVariant::Snapshot,
            reset_order: Bit::LISTED,
            semaphore: false,
        }
    }
}

/// Builds an algorithm by name.
pub fn build(name: &str, params: Params) -> Result<Program, AlgorithmError> {
    let n = params.threads.unwrap_or(3);
    let two = |f: fn() -> Result<Program, AlgorithmError>| match params.threads {
        None | Some(2) => f(),
        Some(threads) => Err(AlgorithmError::UnsupportedThreads {
            algorithm: name.to_string(),
            threads,
        }),
    };
    match name {
        "peterson" => two(peterson),
        "attiya-welch" => two(attiya_welch_original),
        "attiya-welch-alt" => two(attiya_welch_alternate),
        "szymanski-flag" => szymanski_flag(n),
        "szymanski-bits" => szymanski_flag_bits(n, params.reset_order),
        "szymanski-3bit" => szymanski_3bit(n, params.semaphore),
        "lamport-3bit" => lamport_3bit(n, params.variant),
        _ => Err(AlgorithmError::UnknownAlgorithm(name.to_string())),
    }
}
