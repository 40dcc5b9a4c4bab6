use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Answer-span tag. `O1`/`O2` are Outside before/after the answer; without
/// the O-split every Outside token is `O1`, rendered as `O`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    B,
    I,
    O1,
    O2,
}

pub const NUM_LABELS: usize = 4;
/// Row of the transition matrix used for the first position.
pub const START: usize = NUM_LABELS;

pub type LabelSequence = Vec<Label>;

impl Label {
    pub const ALL: [Label; NUM_LABELS] = [Label::B, Label::I, Label::O1, Label::O2];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Label> {
        Label::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::InvalidInput(format!("label index {i} out of range")))
    }

    pub fn is_outside(self) -> bool {
        matches!(self, Label::O1 | Label::O2)
    }

    pub fn tag(self, o_split: bool) -> &'static str {
        match (self, o_split) {
            (Label::B, _) => "B",
            (Label::I, _) => "I",
            (Label::O1, true) => "O1",
            (Label::O2, true) => "O2",
            (_, false) => "O",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag(true))
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Label> {
        match s {
            "B" => Ok(Label::B),
            "I" => Ok(Label::I),
            "O" | "O1" => Ok(Label::O1),
            "O2" => Ok(Label::O2),
            other => Err(Error::InvalidInput(format!("unknown label {other:?}"))),
        }
    }
}

/// Space-separated tags.
pub fn render_labels(labels: &[Label], o_split: bool) -> String {
    labels
        .iter()
        .map(|l| l.tag(o_split))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn parse_labels(s: &str) -> Result<LabelSequence> {
    s.split_whitespace().map(str::parse).collect()
}

pub fn to_indices(labels: &[Label]) -> Vec<usize> {
    labels.iter().map(|l| l.index()).collect()
}

pub fn from_indices(indices: &[usize]) -> Result<LabelSequence> {
    indices.iter().map(|&i| Label::from_index(i)).collect()
}
