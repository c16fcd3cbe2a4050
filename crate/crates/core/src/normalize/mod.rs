//! Rule-based de-contraction (surface R1).
//!
//! Missing apostrophes are restored first (`im` becomes `I'm`), then listed
//! contractions are expanded (`I'm` becomes `I am`). Dotted acronyms,
//! honorifics and URLs are masked with placeholders for the duration so the
//! rules never see them.
//!
//! ```
//! use claimgate::normalize::{decontract_claim, RuleTable};
//!
//! let rules = RuleTable::builtin();
//! assert_eq!(decontract_claim("im sure its a Ph.D. thing", rules), "I am sure its a Ph.D. thing");
//! assert_eq!(decontract_claim("dont stop", rules), "do not stop");
//! ```

mod protect;
mod rules;

pub use protect::{protect, span_text, unprotect, ProtectionKind, ProtectionSpan};
pub use rules::RuleTable;

/// Apply the rule table to text that was already masked by [`protect`].
pub fn decontract(text: &str, rules: &RuleTable) -> String {
    rules.decontract(text)
}

/// Protect, de-contract and unprotect in one step.
pub fn decontract_claim(text: &str, rules: &RuleTable) -> String {
    let (masked, spans) = protect(text);
    unprotect(&decontract(&masked, rules), &spans)
}
