//! Gazetteers and span-pattern files.
//!
//! A gazetteer holds one entry per line, matched against single tokens by
//! lowercase exact match. Blank lines and lines starting with `#` are
//! ignored.
//!
//! A pattern file holds regular expressions, one per line, matched over the
//! tokens of a sentence joined by single spaces. A line `@NAME@ = regex`
//! defines a macro that later lines may reference as `@NAME@`. Only matches
//! that start and end on token boundaries count.

use std::collections::BTreeSet;

use regex::Regex;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Gazetteer {
    entries: BTreeSet<String>,
}

impl Gazetteer {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let entry = line.trim();
            if entry.is_empty() || entry.starts_with('#') {
                continue;
            }
            if entry.split_whitespace().nth(1).is_some() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("gazetteer entries are single tokens, found {entry:?}"),
                });
            }
            entries.insert(entry.to_lowercase());
        }
        Ok(Self { entries })
    }

    pub fn contains(&self, token: &str) -> bool {
        self.entries.contains(&token.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct PatternMatcher {
    patterns: Vec<Regex>,
}

fn macro_name(s: &str) -> Option<&str> {
    let inner = s.strip_prefix('@')?.strip_suffix('@')?;
    (!inner.is_empty() && inner.chars().all(|c| c.is_ascii_alphanumeric() || c == '_'))
        .then_some(inner)
}

impl PatternMatcher {
    pub fn parse(text: &str) -> Result<Self> {
        let mut macros: Vec<(String, String)> = Vec::new();
        let mut patterns = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse {
                line: i + 1,
                message,
            };
            let mut expanded = line.to_string();
            let definition = line.split_once(" = ").and_then(|(lhs, rhs)| {
                macro_name(lhs.trim()).map(|n| (n.to_string(), rhs.trim().to_string()))
            });
            if let Some((_, rhs)) = &definition {
                expanded = rhs.clone();
            }
            for (name, body) in &macros {
                expanded = expanded.replace(&format!("@{name}@"), &format!("(?:{body})"));
            }
            if let Some(pos) = expanded.find('@') {
                if let Some(end) = expanded[pos + 1..].find('@') {
                    let candidate = &expanded[pos..pos + end + 2];
                    if macro_name(candidate).is_some() {
                        return Err(err(format!("undefined macro {candidate}")));
                    }
                }
            }
            match definition {
                Some((name, _)) => {
                    Regex::new(&expanded).map_err(|e| err(format!("invalid macro body: {e}")))?;
                    macros.push((name, expanded));
                }
                None => {
                    // Ending at a token boundary is part of the match, so an
                    // alternative that stops mid-token falls through to the next.
                    let re = Regex::new(&format!("^(?:{expanded})(?: |$)"))
                        .map_err(|e| err(format!("invalid pattern: {e}")))?;
                    patterns.push(re);
                }
            }
        }
        if patterns.is_empty() {
            return Err(Error::invalid("pattern file defines no patterns"));
        }
        Ok(Self { patterns })
    }

    /// Token spans `(start, end_inclusive)`, sorted and de-duplicated.
    pub fn find_spans(&self, tokens: &[String]) -> Vec<(usize, usize)> {
        let text = tokens.join(" ");
        let mut starts = Vec::with_capacity(tokens.len());
        let mut ends = Vec::with_capacity(tokens.len());
        let mut offset = 0;
        for t in tokens {
            starts.push(offset);
            offset += t.len();
            ends.push(offset);
            offset += 1;
        }
        let mut spans = BTreeSet::new();
        for (ti, &s) in starts.iter().enumerate() {
            for re in &self.patterns {
                if let Some(m) = re.find(&text[s..]) {
                    let end = if m.as_str().ends_with(' ') {
                        m.end() - 1
                    } else {
                        m.end()
                    };
                    if end == 0 {
                        continue;
                    }
                    if let Ok(te) = ends.binary_search(&(s + end)) {
                        spans.insert((ti, te));
                    }
                }
            }
        }
        spans.into_iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split(' ').map(String::from).collect()
    }

    #[test]
    fn macros_expand_and_matches_align_to_tokens() {
        let m = PatternMatcher::parse(
            "# dosages\n@NUM@ = [0-9]+(?:\\.[0-9]+)?\n@NUM@ (?:mg|ml)(?:/kg)?\n",
        )
        .unwrap();
        let spans = m.find_spans(&toks("given 2.5 mg/kg daily and 20 ml"));
        assert_eq!(spans, vec![(1, 2), (5, 6)]);
        assert!(m.find_spans(&toks("given 2.5 mgx")).is_empty());
        let m = PatternMatcher::parse("[0-9]+ (?:mg|mg/day)").unwrap();
        assert_eq!(
            m.find_spans(&toks("5 mg/day then 5 mg")),
            vec![(0, 1), (3, 4)]
        );
        assert!(PatternMatcher::parse("@X@ foo").is_err());
        assert!(PatternMatcher::parse("(unclosed").is_err());
        assert!(PatternMatcher::parse("# nothing\n").is_err());
    }

    #[test]
    fn gazetteer_matches_lowercase() {
        let g = Gazetteer::parse("Berlin\n# comment\n\nmunich\n").unwrap();
        assert!(g.contains("BERLIN") && g.contains("Munich"));
        assert!(!g.contains("Paris"));
        assert!(Gazetteer::parse("new york").is_err());
    }
}
