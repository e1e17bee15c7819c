//! Verdict automaton.
//!
//! A proof is read left to right. Each operator moves the automaton between
//! three states; the state reached after the last operator is the verdict.
//! `NotEnoughEvidence` has no outgoing transitions to other states.

use alloc::vec::Vec;
use core::fmt;

use crate::natop::NatOp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum DfaState {
    Supported,
    Refuted,
    NotEnoughEvidence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Verdict {
    Supported,
    Refuted,
    NotEnoughInfo,
}

impl DfaState {
    pub const ALL: [DfaState; 3] = [DfaState::Supported, DfaState::Refuted, DfaState::NotEnoughEvidence];

    pub const START: DfaState = DfaState::Supported;

    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn verdict(self) -> Verdict {
        match self {
            DfaState::Supported => Verdict::Supported,
            DfaState::Refuted => Verdict::Refuted,
            DfaState::NotEnoughEvidence => Verdict::NotEnoughInfo,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            DfaState::Supported => "Supported",
            DfaState::Refuted => "Refuted",
            DfaState::NotEnoughEvidence => "NotEnoughEvidence",
        }
    }
}

impl Verdict {
    pub const ALL: [Verdict; 3] = [Verdict::Supported, Verdict::Refuted, Verdict::NotEnoughInfo];

    pub const fn name(self) -> &'static str {
        match self {
            Verdict::Supported => "Supported",
            Verdict::Refuted => "Refuted",
            Verdict::NotEnoughInfo => "NotEnoughInfo",
        }
    }

    /// The automaton state this verdict is read from.
    pub const fn final_state(self) -> DfaState {
        match self {
            Verdict::Supported => DfaState::Supported,
            Verdict::Refuted => DfaState::Refuted,
            Verdict::NotEnoughInfo => DfaState::NotEnoughEvidence,
        }
    }
}

impl fmt::Display for DfaState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

use DfaState::{NotEnoughEvidence as Nee, Refuted as Ref, Supported as Sup};

/// `TRANSITIONS[state][op]`, rows in [`DfaState`] order, columns in
/// [`NatOp`] declaration order (≡, ⊑, ⊒, ¬, ⇃↾, #).
pub const TRANSITIONS: [[DfaState; 6]; 3] = [
    // Supported
    [Sup, Sup, Nee, Ref, Ref, Nee],
    // Refuted
    [Ref, Ref, Nee, Sup, Nee, Nee],
    // NotEnoughEvidence
    [Nee, Nee, Nee, Nee, Nee, Nee],
];

pub const fn transition(state: DfaState, op: NatOp) -> DfaState {
    TRANSITIONS[state.index()][op.index()]
}

/// Folds `ops` starting from `from`, returning the final state.
pub fn run_from<I>(from: DfaState, ops: I) -> DfaState
where
    I: IntoIterator<Item = NatOp>,
{
    ops.into_iter().fold(from, transition)
}

/// State sequence visited while executing a proof.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VerdictTrace {
    pub states: Vec<DfaState>,
    pub verdict: Verdict,
}

impl VerdictTrace {
    pub fn final_state(&self) -> DfaState {
        *self.states.last().expect("trace always holds the start state")
    }
}

/// Executes an operator sequence from the start state.
pub fn execute_ops<I>(ops: I) -> VerdictTrace
where
    I: IntoIterator<Item = NatOp>,
{
    let mut states = Vec::new();
    states.push(DfaState::START);
    let mut state = DfaState::START;
    for op in ops {
        state = transition(state, op);
        states.push(state);
    }
    VerdictTrace {
        states,
        verdict: state.verdict(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn worked_transitions() {
        assert_eq!(transition(Sup, NatOp::Equivalence), Sup);
        assert_eq!(transition(Nee, NatOp::Negation), Nee);
        let s = transition(Sup, NatOp::Negation);
        assert_eq!(s, Ref);
        assert_eq!(transition(s, NatOp::Negation), Sup);
    }

    #[test]
    fn execute_examples() {
        let t = execute_ops([]);
        assert_eq!(t.states, vec![Sup]);
        assert_eq!(t.verdict, Verdict::Supported);

        let t = execute_ops([NatOp::Equivalence, NatOp::Equivalence, NatOp::Alternation]);
        assert_eq!(t.verdict, Verdict::Refuted);
        assert_eq!(t.states, vec![Sup, Sup, Sup, Ref]);

        let t = execute_ops([NatOp::Equivalence, NatOp::Independence, NatOp::Negation]);
        assert_eq!(t.states, vec![Sup, Sup, Nee, Nee]);
        assert_eq!(t.verdict, Verdict::NotEnoughInfo);
    }

    #[test]
    fn verdict_state_bijection() {
        for s in DfaState::ALL {
            assert_eq!(s.verdict().final_state(), s);
        }
        for v in Verdict::ALL {
            assert_eq!(v.final_state().verdict(), v);
        }
    }

    #[test]
    fn absorbing_state() {
        for op in NatOp::ALL {
            assert_eq!(transition(Nee, op), Nee);
        }
    }
}
