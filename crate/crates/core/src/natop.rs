//! Natural-logic operators.

use core::fmt;
use core::str::FromStr;

/// Relation between a claim span and the evidence span aligned to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum NatOp {
    Equivalence,
    ForwardEntailment,
    ReverseEntailment,
    Negation,
    Alternation,
    /// No semantic relation; the fallback when nothing else is established.
    Independence,
}

impl NatOp {
    pub const ALL: [NatOp; 6] = [
        NatOp::Equivalence,
        NatOp::ForwardEntailment,
        NatOp::ReverseEntailment,
        NatOp::Negation,
        NatOp::Alternation,
        NatOp::Independence,
    ];

    /// Operators that can be asked about with question templates.
    pub const ASSIGNABLE: [NatOp; 5] = [
        NatOp::Equivalence,
        NatOp::ForwardEntailment,
        NatOp::ReverseEntailment,
        NatOp::Negation,
        NatOp::Alternation,
    ];

    /// Resolution order when more than one operator clears the threshold.
    pub const PRIORITY: [NatOp; 5] = [
        NatOp::Equivalence,
        NatOp::Negation,
        NatOp::ForwardEntailment,
        NatOp::ReverseEntailment,
        NatOp::Alternation,
    ];

    pub const fn symbol(self) -> &'static str {
        match self {
            NatOp::Equivalence => "≡",
            NatOp::ForwardEntailment => "⊑",
            NatOp::ReverseEntailment => "⊒",
            NatOp::Negation => "¬",
            NatOp::Alternation => "⇃↾",
            NatOp::Independence => "#",
        }
    }

    /// Stable ASCII name used in JSON documents and template directories.
    pub const fn name(self) -> &'static str {
        match self {
            NatOp::Equivalence => "equivalence",
            NatOp::ForwardEntailment => "forward_entailment",
            NatOp::ReverseEntailment => "reverse_entailment",
            NatOp::Negation => "negation",
            NatOp::Alternation => "alternation",
            NatOp::Independence => "independence",
        }
    }

    pub const fn is_assignable(self) -> bool {
        !matches!(self, NatOp::Independence)
    }

    pub const fn index(self) -> usize {
        self as usize
    }

    pub fn from_symbol(s: &str) -> Option<NatOp> {
        NatOp::ALL.into_iter().find(|op| op.symbol() == s)
    }
}

impl fmt::Display for NatOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownNatOp;

impl fmt::Display for UnknownNatOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("unknown natural-logic operator")
    }
}

impl FromStr for NatOp {
    type Err = UnknownNatOp;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NatOp::ALL
            .into_iter()
            .find(|op| op.name() == s)
            .or_else(|| NatOp::from_symbol(s))
            .ok_or(UnknownNatOp)
    }
}
