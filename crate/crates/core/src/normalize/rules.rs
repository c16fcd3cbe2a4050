use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::OnceLock;

use regex::{Captures, Regex};
use serde::Deserialize;

use crate::error::{Error, Result};

const DEFAULT_RULES: &str = include_str!("../../data/decontract_rules.toml");

#[derive(Debug, Deserialize)]
struct RuleFile {
    version: String,
    #[serde(default)]
    word_sets: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    apostrophe: Vec<ApostropheSpec>,
    #[serde(default)]
    expansion: Vec<ExpansionSpec>,
}

#[derive(Debug, Deserialize)]
struct ApostropheSpec {
    word: String,
    replacement: String,
    next_in: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ExpansionKind {
    Word,
    Suffix,
}

#[derive(Debug, Deserialize)]
struct ExpansionSpec {
    kind: ExpansionKind,
    pattern: String,
    full: String,
    hosts: Option<Vec<String>>,
    gate: Option<String>,
    alt_full: Option<String>,
    alt_next_in: Option<String>,
}

#[derive(Debug)]
struct ApostropheRule {
    re: Regex,
    replacement: String,
    next_in: Option<HashSet<String>>,
}

#[derive(Debug)]
enum Expansion {
    Word {
        re: Regex,
        full: String,
    },
    Suffix {
        re: Regex,
        full: String,
        hosts: HashSet<String>,
        gate: Option<HashSet<String>>,
        alt: Option<(String, HashSet<String>)>,
    },
}

/// Ordered, case-aware de-contraction rules.
#[derive(Debug)]
pub struct RuleTable {
    pub version: String,
    apostrophe_rules: Vec<ApostropheRule>,
    expansion_rules: Vec<Expansion>,
    /// Lowercased contraction patterns, for the "no listed contraction
    /// survives" check.
    listed: Vec<String>,
}

fn apostrophe_class(pattern: &str) -> String {
    regex::escape(pattern).replace('\'', "['’]")
}

fn word_set(
    sets: &BTreeMap<String, Vec<String>>,
    name: &Option<String>,
) -> Result<Option<HashSet<String>>> {
    match name {
        None => Ok(None),
        Some(n) => sets
            .get(n)
            .map(|v| Some(v.iter().map(|w| w.to_lowercase()).collect()))
            .ok_or_else(|| Error::Config(format!("rule table references unknown word set `{n}`"))),
    }
}

impl RuleTable {
    pub fn from_toml(source: &str) -> Result<Self> {
        let file: RuleFile = toml::from_str(source)
            .map_err(|e| Error::Config(format!("invalid rule table: {e}")))?;
        let compile = |pat: String| {
            Regex::new(&pat).map_err(|e| Error::Config(format!("bad rule pattern `{pat}`: {e}")))
        };

        let mut apostrophe_rules = Vec::new();
        for spec in file.apostrophe {
            apostrophe_rules.push(ApostropheRule {
                re: compile(format!(r"(?i)\b{}\b", regex::escape(&spec.word)))?,
                replacement: spec.replacement,
                next_in: word_set(&file.word_sets, &spec.next_in)?,
            });
        }

        let mut expansion_rules = Vec::new();
        let mut listed = Vec::new();
        for spec in file.expansion {
            listed.push(spec.pattern.to_lowercase().replace('’', "'"));
            let rule = match spec.kind {
                ExpansionKind::Word => Expansion::Word {
                    re: compile(format!(r"(?i)\b{}\b", apostrophe_class(&spec.pattern)))?,
                    full: spec.full,
                },
                ExpansionKind::Suffix => {
                    let alt = match (spec.alt_full, word_set(&file.word_sets, &spec.alt_next_in)?) {
                        (Some(full), Some(set)) => Some((full, set)),
                        (None, None) => None,
                        _ => {
                            return Err(Error::Config(format!(
                                "rule `{}` needs both alt_full and alt_next_in",
                                spec.pattern
                            )))
                        }
                    };
                    Expansion::Suffix {
                        re: compile(format!(
                            r"(?i)\b(\p{{L}}+){}\b",
                            apostrophe_class(&spec.pattern)
                        ))?,
                        full: spec.full,
                        hosts: spec
                            .hosts
                            .unwrap_or_default()
                            .iter()
                            .map(|h| h.to_lowercase())
                            .collect(),
                        gate: word_set(&file.word_sets, &spec.gate)?,
                        alt,
                    }
                }
            };
            expansion_rules.push(rule);
        }

        Ok(RuleTable {
            version: file.version,
            apostrophe_rules,
            expansion_rules,
            listed,
        })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// The rule table shipped with the crate.
    pub fn builtin() -> &'static RuleTable {
        static TABLE: OnceLock<RuleTable> = OnceLock::new();
        TABLE.get_or_init(|| RuleTable::from_toml(DEFAULT_RULES).expect("builtin rule table"))
    }

    pub fn builtin_source() -> &'static str {
        DEFAULT_RULES
    }

    /// Contraction patterns covered by the expansion rules (lowercase,
    /// ASCII apostrophe). `'s` and `'d` entries are suffixes.
    pub fn listed_contractions(&self) -> &[String] {
        &self.listed
    }

    /// Restore apostrophes, then expand contractions. Expects input that
    /// already went through [`super::protect`].
    ///
    /// Both passes repeat until the text stops changing: `ill dont` needs
    /// two rounds to become `I will do not`.
    pub fn decontract(&self, text: &str) -> String {
        let mut current = text.to_owned();
        for _ in 0..MAX_PASSES {
            let next = self.expand(&self.restore_apostrophes(&current));
            if next == current {
                break;
            }
            current = next;
        }
        current
    }

    /// First pass only: `dont` becomes `don't`, `im` becomes `I'm`.
    pub fn restore_apostrophes(&self, text: &str) -> String {
        let mut current = text.to_owned();
        for rule in &self.apostrophe_rules {
            current = replace_gated(&rule.re, &current, |caps, next| {
                if let Some(set) = &rule.next_in {
                    if !next.is_some_and(|n| set.contains(&n)) {
                        return None;
                    }
                }
                Some(match_case(&caps[0], &rule.replacement))
            });
        }
        current
    }

    /// Second pass only: expand listed contractions.
    pub fn expand(&self, text: &str) -> String {
        let mut current = text.to_owned();
        for rule in &self.expansion_rules {
            current = match rule {
                Expansion::Word { re, full } => {
                    replace_gated(re, &current, |caps, _| Some(match_case(&caps[0], full)))
                }
                Expansion::Suffix {
                    re,
                    full,
                    hosts,
                    gate,
                    alt,
                } => replace_gated(re, &current, |caps, next| {
                    let source = &caps[0];
                    let host = &caps[1];
                    let host_lc = host.to_lowercase();
                    if let Some(gate) = gate {
                        let passes = hosts.contains(&host_lc)
                            || next.as_ref().is_some_and(|n| gate.contains(n))
                            || alt.as_ref().is_some_and(|(_, set)| {
                                next.as_ref().is_some_and(|n| set.contains(n))
                            });
                        if !passes {
                            return None;
                        }
                    }
                    let tail = match alt {
                        Some((alt_full, set)) if next.as_ref().is_some_and(|n| set.contains(n)) => {
                            alt_full
                        }
                        _ => full,
                    };
                    let host_out = if host_lc == "i" {
                        "I".to_owned()
                    } else {
                        host.to_owned()
                    };
                    let tail_out = if is_all_caps(source) {
                        tail.to_uppercase()
                    } else {
                        tail.to_owned()
                    };
                    Some(format!("{host_out} {tail_out}"))
                }),
            };
        }
        current
    }
}

const MAX_PASSES: usize = 8;

fn is_all_caps(s: &str) -> bool {
    let letters: Vec<char> = s.chars().filter(|c| c.is_alphabetic()).collect();
    letters.len() > 1 && letters.iter().all(|c| c.is_uppercase())
}

/// Carry the source casing over to the replacement: all-caps stays all-caps,
/// a capitalised source capitalises the first letter, and a standalone `i`
/// is always written `I`.
fn match_case(source: &str, replacement: &str) -> String {
    if is_all_caps(source) {
        return replacement.to_uppercase();
    }
    let mut out = if source.chars().next().is_some_and(char::is_uppercase) {
        crate::text::capitalize_first(replacement)
    } else {
        replacement.to_owned()
    };
    if out.starts_with("i ") || out.starts_with("i'") || out.starts_with("i’") || out == "i" {
        out.replace_range(0..1, "I");
    }
    out
}

/// The first alphanumeric word after `pos`, lowercased.
fn next_word(text: &str, pos: usize) -> Option<String> {
    let rest = &text[pos..];
    let start = rest.find(|c: char| !c.is_whitespace())?;
    let word: String = rest[start..]
        .chars()
        .take_while(|c| c.is_alphanumeric())
        .collect();
    (!word.is_empty()).then(|| word.to_lowercase())
}

/// `replace_all` where the closure may decline a match (`None` keeps the
/// source text) and sees the word following the match.
fn replace_gated<F>(re: &Regex, text: &str, mut f: F) -> String
where
    F: FnMut(&Captures<'_>, Option<String>) -> Option<String>,
{
    let mut out = String::with_capacity(text.len() + 16);
    let mut last = 0;
    for caps in re.captures_iter(text) {
        let m = caps.get(0).unwrap();
        out.push_str(&text[last..m.start()]);
        match f(&caps, next_word(text, m.end())) {
            Some(rep) => out.push_str(&rep),
            None => out.push_str(m.as_str()),
        }
        last = m.end();
    }
    out.push_str(&text[last..]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dc(s: &str) -> String {
        RuleTable::builtin().decontract(s)
    }

    #[test]
    fn cited_examples() {
        assert_eq!(dc("im happy"), "I am happy");
        assert_eq!(dc("it's cold"), "it is cold");
        assert_eq!(dc("dont stop"), "do not stop");
        assert_eq!(dc("I am happy"), "I am happy");
    }

    #[test]
    fn case_follows_source() {
        assert_eq!(dc("Im here"), "I am here");
        assert_eq!(dc("Dont go"), "Do not go");
        assert_eq!(dc("DONT GO"), "DO NOT GO");
        assert_eq!(dc("It's late"), "It is late");
    }

    #[test]
    fn ill_is_gated() {
        assert_eq!(dc("ill be there"), "I will be there");
        assert_eq!(dc("he was ill yesterday"), "he was ill yesterday");
    }

    #[test]
    fn possessive_s_left_alone() {
        assert_eq!(dc("John's car is red"), "John's car is red");
        assert_eq!(dc("John's a doctor"), "John is a doctor");
        assert_eq!(dc("it's been fun"), "it has been fun");
    }

    #[test]
    fn curly_apostrophe() {
        assert_eq!(dc("I don’t know"), "I do not know");
    }

    #[test]
    fn special_negations() {
        assert_eq!(dc("can't"), "cannot");
        assert_eq!(dc("won't"), "will not");
        assert_eq!(dc("they'd been"), "they had been");
        assert_eq!(dc("they'd go"), "they would go");
    }

    #[test]
    fn bad_word_set_reference() {
        let src = "version='x'\n[[apostrophe]]\nword='a'\nreplacement='b'\nnext_in='nope'\n";
        assert!(RuleTable::from_toml(src).is_err());
    }
}
