use std::path::{Path, PathBuf};

use claimgate::data::{compute_stats, load_split, Subset};
use claimgate::normalize::{decontract_claim, protect, unprotect, RuleTable};
use claimgate::pipeline::PronounLexicon;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

#[test]
fn stats_match_golden_table() {
    let insts = load_split(&fixture("dialfact_mini.jsonl"), None).unwrap();
    let table = compute_stats(&insts, PronounLexicon::builtin()).to_table();
    let golden = std::fs::read_to_string(fixture("stats_golden.txt")).unwrap();
    assert_eq!(table, golden);
}

#[test]
fn subset_filter_keeps_order() {
    let all = load_split(&fixture("dialfact_mini.jsonl"), None).unwrap();
    let personal = load_split(&fixture("dialfact_mini.jsonl"), Some(Subset::Personal)).unwrap();
    let want: Vec<_> = all
        .iter()
        .filter(|i| i.subset == Subset::Personal)
        .cloned()
        .collect();
    assert_eq!(personal, want);
}

#[test]
fn records_round_trip() {
    for inst in load_split(&fixture("dialfact_mini.jsonl"), None).unwrap() {
        assert_eq!(
            claimgate::data::parse_record(&inst.to_record()).unwrap(),
            inst
        );
    }
}

#[test]
fn normalization_golden() {
    let rules = RuleTable::builtin();
    let golden = std::fs::read_to_string(fixture("normalization_golden.tsv")).unwrap();
    let mut rows = 0;
    for line in golden
        .lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
    {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols.len(), 3, "{line}");
        let (masked, spans) = protect(cols[0]);
        assert_eq!(
            unprotect(&rules.restore_apostrophes(&masked), &spans),
            cols[1],
            "restore {}",
            cols[0]
        );
        assert_eq!(
            decontract_claim(cols[0], rules),
            cols[2],
            "expand {}",
            cols[0]
        );
        assert_eq!(
            decontract_claim(cols[2], rules),
            cols[2],
            "idempotent {}",
            cols[0]
        );
        rows += 1;
    }
    assert!(rows >= 30);
}
