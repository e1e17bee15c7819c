//! Yes/No probabilities for question-answering prompts.

use core::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Answer {
    Yes,
    No,
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Answer::Yes => "Yes",
            Answer::No => "No",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct YesNoScore {
    pub p_yes: f64,
    pub p_no: f64,
    pub favored: Answer,
}

impl YesNoScore {
    /// Renormalizes two non-negative masses. Ties favour `No`. Returns
    /// `None` when both masses are zero or either is not finite.
    pub fn from_masses(yes: f64, no: f64) -> Option<Self> {
        if !(yes.is_finite() && no.is_finite()) || yes < 0.0 || no < 0.0 {
            return None;
        }
        let total = yes + no;
        if total <= 0.0 {
            return None;
        }
        let p_yes = yes / total;
        Some(YesNoScore::from_p_yes(p_yes))
    }

    /// `p_yes` is clamped to the unit interval.
    pub fn from_p_yes(p_yes: f64) -> Self {
        let p_yes = p_yes.clamp(0.0, 1.0);
        let p_no = 1.0 - p_yes;
        YesNoScore {
            p_yes,
            p_no,
            favored: if p_yes > p_no { Answer::Yes } else { Answer::No },
        }
    }

    /// Score for a sampled answer when no likelihoods are available.
    pub fn certain(answer: Answer) -> Self {
        match answer {
            Answer::Yes => YesNoScore::from_p_yes(1.0),
            Answer::No => YesNoScore::from_p_yes(0.0),
        }
    }

    /// Probability of the favoured option.
    pub fn confidence(&self) -> f64 {
        self.p_yes.max(self.p_no)
    }

    /// Combines first-token log-probabilities: every candidate whose surface
    /// is a Yes/No form contributes its probability mass to that side.
    pub fn from_logprobs<'a, I>(candidates: I) -> Option<Self>
    where
        I: IntoIterator<Item = (&'a str, f64)>,
    {
        let mut yes = 0.0;
        let mut no = 0.0;
        for (tok, lp) in candidates {
            match classify_token(tok) {
                Some(Answer::Yes) => yes += libm::exp(lp),
                Some(Answer::No) => no += libm::exp(lp),
                None => {}
            }
        }
        YesNoScore::from_masses(yes, no)
    }
}

/// Yes/No family membership of a single token surface: leading whitespace
/// is ignored and the comparison is case-insensitive.
pub fn classify_token(tok: &str) -> Option<Answer> {
    let t = tok.trim_start();
    if t.eq_ignore_ascii_case("yes") {
        Some(Answer::Yes)
    } else if t.eq_ignore_ascii_case("no") {
        Some(Answer::No)
    } else {
        None
    }
}

/// Reads the answer from the start of a completion such as `"Yes."` or
/// `" no, because ..."`.
pub fn parse_answer(text: &str) -> Option<Answer> {
    let t = text.trim_start();
    let word_end = t
        .char_indices()
        .find(|(_, c)| !c.is_alphanumeric())
        .map_or(t.len(), |(i, _)| i);
    classify_token(&t[..word_end])
}
