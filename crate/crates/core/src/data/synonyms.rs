//! Answer synonym dictionary used by fuzzy matching and label generation.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Alternative surface forms per answer, closed under symmetry.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SynonymDict {
    map: HashMap<Vec<String>, BTreeSet<Vec<String>>>,
}

fn split(s: &str) -> Vec<String> {
    s.split(' ').filter(|t| !t.is_empty()).map(str::to_string).collect()
}

impl SynonymDict {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, a: Vec<String>, b: Vec<String>) {
        if a == b || a.is_empty() || b.is_empty() {
            return;
        }
        self.map.entry(a.clone()).or_default().insert(b.clone());
        self.map.entry(b).or_default().insert(a);
    }

    /// Parses `canonical<TAB>synonym` lines; tokens are joined by single spaces.
    pub fn parse(text: &str) -> Result<Self> {
        let mut dict = SynonymDict::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (a, b) = line
                .split_once('\t')
                .ok_or_else(|| Error::Data(format!("synonym line {}: expected a tab separator", i + 1)))?;
            let (a, b) = (split(a), split(b));
            if a.is_empty() || b.is_empty() {
                return Err(Error::Data(format!("synonym line {}: empty entry", i + 1)));
            }
            dict.add(a, b);
        }
        Ok(dict)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }

    pub fn synonyms_of(&self, answer: &[String]) -> impl Iterator<Item = &Vec<String>> {
        self.map.get(answer).into_iter().flatten()
    }

    pub fn are_synonyms(&self, a: &[String], b: &[String]) -> bool {
        self.map.get(a).is_some_and(|s| s.contains(b))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Same dictionary with every entry split into characters.
    pub fn to_char_mode(&self) -> SynonymDict {
        let mut out = SynonymDict::new();
        for (a, set) in &self.map {
            for b in set {
                out.add(super::charmode::chars_of(a), super::charmode::chars_of(b));
            }
        }
        out
    }

    /// Lines in the on-disk format, one per unordered pair, sorted.
    pub fn to_text(&self) -> String {
        let mut pairs: Vec<(String, String)> = self
            .map
            .iter()
            .flat_map(|(a, set)| set.iter().map(move |b| (a.join(" "), b.join(" "))))
            .filter(|(a, b)| a < b)
            .collect();
        pairs.sort();
        pairs.into_iter().map(|(a, b)| format!("{a}\t{b}\n")).collect()
    }
}
