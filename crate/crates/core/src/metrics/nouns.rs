use std::collections::HashSet;
use std::path::Path;

use super::MetricError;

const BUILTIN: &str = include_str!("../../assets/things_nouns.txt");

/// Ordered, case-insensitively unique vocabulary of object nouns. Blank
/// lines and lines starting with `#` are ignored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NounList {
    nouns: Vec<String>,
}

impl NounList {
    pub fn parse(text: &str) -> Result<NounList, MetricError> {
        let mut seen = HashSet::new();
        let mut nouns = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let noun = line.trim();
            if noun.is_empty() || noun.starts_with('#') {
                continue;
            }
            if !seen.insert(noun.to_lowercase()) {
                return Err(MetricError::Nouns(format!("line {}: duplicate `{noun}`", n + 1)));
            }
            nouns.push(noun.to_string());
        }
        if nouns.is_empty() {
            return Err(MetricError::Nouns("list is empty".into()));
        }
        Ok(NounList { nouns })
    }

    pub fn load(path: &Path) -> Result<NounList, MetricError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// The vocabulary shipped with the crate.
    pub fn builtin() -> NounList {
        Self::parse(BUILTIN).expect("bundled noun list is valid")
    }

    pub fn from_vec(nouns: Vec<String>) -> Result<NounList, MetricError> {
        Self::parse(&nouns.join("\n"))
    }

    pub fn nouns(&self) -> &[String] {
        &self.nouns
    }

    pub fn len(&self) -> usize {
        self.nouns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nouns.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_is_valid() {
        assert!(NounList::builtin().len() > 200);
    }

    #[test]
    fn case_folded_duplicates_rejected() {
        assert!(NounList::parse("Dog\ncat\ndog").is_err());
        assert!(NounList::parse("# only a comment\n\n").is_err());
        assert_eq!(NounList::parse("a\n\n#x\nb").unwrap().nouns(), &["a", "b"]);
    }
}
