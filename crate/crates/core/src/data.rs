//! DialFact-format split ingestion and corpus statistics.
//!
//! Records are line-delimited JSON objects. The field mapping is documented in
//! `docs/dialfact-format.md`; the short version:
//!
//! | record field     | meaning                                         |
//! | ---------------- | ----------------------------------------------- |
//! | `id`             | instance id, unique within a split              |
//! | `context`        | array of turns, earliest first                  |
//! | `response`       | the claim (surface R0)                          |
//! | `response_label` | `SUPPORTS`, `REFUTES`, `NOT ENOUGH INFO`/`NEI`  |
//! | `evidence`       | array of `[title, sentence_id \| null, text]`   |
//! | `type_label`     | `factual` or `personal`                         |
//!
//! `evidence_list` is accepted as an alias of `evidence`.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::pipeline::PronounLexicon;

/// Three-way verification label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "SUPPORTS")]
    Supports,
    #[serde(rename = "REFUTES")]
    Refutes,
    #[serde(rename = "NEI")]
    Nei,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Supports, Label::Refutes, Label::Nei];

    /// Row/column index in confusion matrices (S, R, NEI).
    pub fn index(self) -> usize {
        match self {
            Label::Supports => 0,
            Label::Refutes => 1,
            Label::Nei => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Label::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Supports => "SUPPORTS",
            Label::Refutes => "REFUTES",
            Label::Nei => "NEI",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "SUPPORTS" => Ok(Label::Supports),
            "REFUTES" => Ok(Label::Refutes),
            "NOT ENOUGH INFO" | "NEI" => Ok(Label::Nei),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Factual,
    Personal,
}

impl Subset {
    pub fn as_str(self) -> &'static str {
        match self {
            Subset::Factual => "factual",
            Subset::Personal => "personal",
        }
    }
}

impl FromStr for Subset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "factual" => Ok(Subset::Factual),
            "personal" => Ok(Subset::Personal),
            other => Err(format!("unknown subset `{other}`")),
        }
    }
}

/// One annotated gold evidence sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub page_title: String,
    /// Absent items stay out of sentence-level gold sets.
    pub sentence_id: Option<u64>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueInstance {
    pub instance_id: String,
    /// Earliest turn first.
    pub context_turns: Vec<String>,
    /// The original claim, R0.
    pub response: String,
    pub label: Label,
    pub evidence: Vec<EvidenceItem>,
    pub subset: Subset,
}

impl DialogueInstance {
    /// Validate the instance-level invariants.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.instance_id.is_empty() {
            return Err("empty `id`".into());
        }
        if self.response.trim().is_empty() {
            return Err("`response` is empty".into());
        }
        if self.subset == Subset::Personal && self.label != Label::Nei {
            return Err(format!(
                "personal-subset instance carries label {}",
                self.label
            ));
        }
        for (i, ev) in self.evidence.iter().enumerate() {
            if ev.text.trim().is_empty() {
                return Err(format!("evidence item {i} has empty text"));
            }
        }
        Ok(())
    }

    /// Serialize back into the external record format (one JSON line).
    pub fn to_record(&self) -> String {
        let evidence: Vec<Value> = self
            .evidence
            .iter()
            .map(|e| {
                Value::Array(vec![
                    Value::String(e.page_title.clone()),
                    e.sentence_id.map(Value::from).unwrap_or(Value::Null),
                    Value::String(e.text.clone()),
                ])
            })
            .collect();
        let label = match self.label {
            Label::Nei => "NOT ENOUGH INFO",
            other => other.as_str(),
        };
        let record = serde_json::json!({
            "id": self.instance_id,
            "context": self.context_turns,
            "response": self.response,
            "response_label": label,
            "evidence": evidence,
            "type_label": self.subset.as_str(),
        });
        record.to_string()
    }
}

fn field<'a>(obj: &'a serde_json::Map<String, Value>, name: &str) -> Option<&'a Value> {
    obj.get(name).filter(|v| !v.is_null())
}

fn parse_evidence(v: &Value) -> std::result::Result<EvidenceItem, String> {
    let arr = v
        .as_array()
        .ok_or_else(|| "evidence item is not an array".to_string())?;
    let text_of = |v: &Value| v.as_str().map(str::to_owned);
    match arr.as_slice() {
        [title, sid, text] => {
            let sentence_id = match sid {
                Value::Null => None,
                Value::Number(n) => Some(
                    n.as_u64()
                        .ok_or_else(|| format!("sentence id {n} is not a non-negative integer"))?,
                ),
                Value::String(s) => Some(
                    s.parse::<u64>()
                        .map_err(|_| format!("sentence id `{s}` is not an integer"))?,
                ),
                other => return Err(format!("sentence id has unexpected type: {other}")),
            };
            Ok(EvidenceItem {
                page_title: text_of(title).ok_or("evidence title is not a string")?,
                sentence_id,
                text: text_of(text).ok_or("evidence text is not a string")?,
            })
        }
        [title, text] => Ok(EvidenceItem {
            page_title: text_of(title).ok_or("evidence title is not a string")?,
            sentence_id: None,
            text: text_of(text).ok_or("evidence text is not a string")?,
        }),
        _ => Err(format!(
            "evidence item must have 2 or 3 elements, found {}",
            arr.len()
        )),
    }
}

/// Parse one record line into an unvalidated instance.
pub fn parse_record(line: &str) -> std::result::Result<DialogueInstance, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| format!("malformed record: {e}"))?;
    let obj = value
        .as_object()
        .ok_or_else(|| "record is not an object".to_string())?;

    let instance_id = match field(obj, "id") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        Some(_) => return Err("`id` must be a string".into()),
        None => return Err("missing `id` field".into()),
    };
    let context_turns = match field(obj, "context") {
        Some(Value::Array(turns)) => turns
            .iter()
            .map(|t| {
                t.as_str()
                    .map(str::to_owned)
                    .ok_or_else(|| "context turn is not a string".to_string())
            })
            .collect::<std::result::Result<Vec<_>, _>>()?,
        Some(_) => return Err("`context` must be an array of strings".into()),
        None => Vec::new(),
    };
    let response = field(obj, "response")
        .ok_or_else(|| "missing `response` field".to_string())?
        .as_str()
        .ok_or_else(|| "`response` must be a string".to_string())?
        .to_owned();
    let label = field(obj, "response_label")
        .ok_or_else(|| "missing `response_label` field".to_string())?
        .as_str()
        .ok_or_else(|| "`response_label` must be a string".to_string())?
        .parse::<Label>()?;
    let evidence = match field(obj, "evidence").or_else(|| field(obj, "evidence_list")) {
        Some(Value::Array(items)) => items
            .iter()
            .map(parse_evidence)
            .collect::<std::result::Result<Vec<_>, _>>()?,
        Some(_) => return Err("`evidence` must be an array".into()),
        None => Vec::new(),
    };
    let subset = field(obj, "type_label")
        .ok_or_else(|| "missing `type_label` field".to_string())?
        .as_str()
        .ok_or_else(|| "`type_label` must be a string".to_string())?
        .parse::<Subset>()?;

    Ok(DialogueInstance {
        instance_id,
        context_turns,
        response,
        label,
        evidence,
        subset,
    })
}

/// Parse and validate records from any reader. `origin` is used in
/// diagnostics only.
pub fn read_split<R: BufRead>(
    reader: R,
    origin: &Path,
    subset_filter: Option<Subset>,
) -> Result<Vec<DialogueInstance>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record_err = |message: String| Error::Record {
            path: origin.to_path_buf(),
            line: line_no,
            message,
        };
        let inst = parse_record(&line).map_err(record_err)?;
        inst.validate().map_err(record_err)?;
        if !seen.insert(inst.instance_id.clone()) {
            return Err(record_err(format!(
                "duplicate instance id `{}`",
                inst.instance_id
            )));
        }
        if subset_filter.is_none_or(|s| s == inst.subset) {
            out.push(inst);
        }
    }
    Ok(out)
}

/// Load a split file, preserving file order.
pub fn load_split(path: &Path, subset_filter: Option<Subset>) -> Result<Vec<DialogueInstance>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_split(BufReader::new(file), path, subset_filter)
}

/// Per-subset statistics row.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub count: usize,
    pub supports: usize,
    pub refutes: usize,
    pub nei: usize,
    pub mean_evidence_items: f64,
    pub mean_context_turns: f64,
    pub has_pronoun: usize,
    pub has_pronoun_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub factual: StatsRow,
    pub personal: StatsRow,
    pub total: StatsRow,
}

#[derive(Default)]
struct Accum {
    count: usize,
    labels: [usize; 3],
    evidence: usize,
    turns: usize,
    pronoun: usize,
}

impl Accum {
    fn add(&mut self, inst: &DialogueInstance, has_pronoun: bool) {
        self.count += 1;
        self.labels[inst.label.index()] += 1;
        self.evidence += inst.evidence.len();
        self.turns += inst.context_turns.len();
        self.pronoun += usize::from(has_pronoun);
    }

    fn row(&self) -> StatsRow {
        let mean = |x: usize| {
            if self.count == 0 {
                0.0
            } else {
                x as f64 / self.count as f64
            }
        };
        StatsRow {
            count: self.count,
            supports: self.labels[0],
            refutes: self.labels[1],
            nei: self.labels[2],
            mean_evidence_items: mean(self.evidence),
            mean_context_turns: mean(self.turns),
            has_pronoun: self.pronoun,
            has_pronoun_rate: mean(self.pronoun),
        }
    }
}

/// Count labels, evidence, turns and in-claim pronoun prevalence.
///
/// Each evidence item (one `(title, sentence_id)` entry) counts once.
pub fn compute_stats(instances: &[DialogueInstance], lexicon: &PronounLexicon) -> SplitStats {
    let mut factual = Accum::default();
    let mut personal = Accum::default();
    let mut total = Accum::default();
    for inst in instances {
        let has = lexicon.contains_pronoun(&inst.response);
        match inst.subset {
            Subset::Factual => factual.add(inst, has),
            Subset::Personal => personal.add(inst, has),
        }
        total.add(inst, has);
    }
    SplitStats {
        factual: factual.row(),
        personal: personal.row(),
        total: total.row(),
    }
}

impl SplitStats {
    /// Plain-text table in the layout of the usual dataset statistics table.
    pub fn to_table(&self) -> String {
        let mut out = String::from(
            "type      #       S       R       NEI     ev.item  turns   has_pronoun  rate\n",
        );
        for (name, row) in [
            ("factual", &self.factual),
            ("personal", &self.personal),
            ("total", &self.total),
        ] {
            out.push_str(&format!(
                "{:<9} {:<7} {:<7} {:<7} {:<7} {:<8.2} {:<7.2} {:<12} {:.4}\n",
                name,
                row.count,
                row.supports,
                row.refutes,
                row.nei,
                row.mean_evidence_items,
                row.mean_context_turns,
                row.has_pronoun,
                row.has_pronoun_rate
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, label: &str, subset: &str) -> String {
        format!(
            r#"{{"id":"{id}","context":["hi there"],"response":"He ran.","response_label":"{label}","evidence":[["Page",3,"Some text."]],"type_label":"{subset}"}}"#
        )
    }

    #[test]
    fn unknown_label_reports_line() {
        let text = format!(
            "{}\n{}\n",
            rec("a", "SUPPORTS", "factual"),
            rec("b", "SUPPORTED", "factual")
        );
        let err = read_split(text.as_bytes(), Path::new("x.jsonl"), None).unwrap_err();
        match err {
            Error::Record { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("SUPPORTED"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn missing_response_is_rejected() {
        let line = r#"{"id":"a","context":[],"response_label":"NEI","type_label":"personal"}"#;
        let err = read_split(line.as_bytes(), Path::new("x"), None).unwrap_err();
        assert!(err.to_string().contains("response"));
    }

    #[test]
    fn personal_subset_must_be_nei() {
        let text = rec("a", "SUPPORTS", "personal");
        let err = read_split(text.as_bytes(), Path::new("x"), None).unwrap_err();
        assert!(err.to_string().contains("personal"));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = format!(
            "{}\n{}\n",
            rec("a", "SUPPORTS", "factual"),
            rec("a", "REFUTES", "factual")
        );
        assert!(read_split(text.as_bytes(), Path::new("x"), None).is_err());
    }

    #[test]
    fn nei_spelling_normalized() {
        let text = rec("a", "NOT ENOUGH INFO", "personal");
        let v = read_split(text.as_bytes(), Path::new("x"), None).unwrap();
        assert_eq!(v[0].label, Label::Nei);
    }

    #[test]
    fn null_sentence_id_is_kept_absent() {
        let line = r#"{"id":"a","context":[],"response":"x","response_label":"NEI","evidence":[["T",null,"t"],["U","t2"]],"type_label":"factual"}"#;
        let v = read_split(line.as_bytes(), Path::new("x"), None).unwrap();
        assert_eq!(v[0].evidence.len(), 2);
        assert!(v[0].evidence.iter().all(|e| e.sentence_id.is_none()));
    }

    #[test]
    fn subset_filter_applies() {
        let text = format!(
            "{}\n{}\n",
            rec("a", "SUPPORTS", "factual"),
            rec("b", "NEI", "personal")
        );
        let v = read_split(text.as_bytes(), Path::new("x"), Some(Subset::Personal)).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].instance_id, "b");
    }

    #[test]
    fn empty_stats_are_zero() {
        let stats = compute_stats(&[], &PronounLexicon::default());
        assert_eq!(stats.total.count, 0);
        assert_eq!(stats.total.has_pronoun_rate, 0.0);
    }

    #[test]
    fn pronoun_rate_two_claims() {
        let mk = |id: &str, resp: &str| DialogueInstance {
            instance_id: id.into(),
            context_turns: vec![],
            response: resp.into(),
            label: Label::Nei,
            evidence: vec![],
            subset: Subset::Factual,
        };
        let stats = compute_stats(
            &[mk("1", "He ran."), mk("2", "Paris is old.")],
            &PronounLexicon::default(),
        );
        assert_eq!(stats.total.has_pronoun, 1);
        assert_eq!(stats.total.has_pronoun_rate, 0.5);
    }
}
