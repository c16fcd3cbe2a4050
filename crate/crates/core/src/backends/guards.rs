//! Output contracts enforced on backend results regardless of which backend
//! produced them. A violation turns the stage into a no-op for that text.

use super::CorefProposal;

/// Characters a punctuation model may insert.
pub const INSERTABLE_PUNCTUATION: [char; 4] = [',', '.', '?', '!'];

/// The output may only add commas and sentence-final marks: deleting the
/// inserted characters must give back the input byte for byte.
pub fn check_punctuation(input: &str, output: &str) -> Result<(), String> {
    let mut expected = input.chars().peekable();
    for (pos, ch) in output.chars().enumerate() {
        if expected.peek() == Some(&ch) {
            expected.next();
        } else if INSERTABLE_PUNCTUATION.contains(&ch) {
            continue;
        } else {
            return Err(format!("unexpected character {ch:?} at position {pos}"));
        }
    }
    match expected.next() {
        None => Ok(()),
        Some(ch) => Err(format!("input character {ch:?} was dropped")),
    }
}

/// The output may differ from the input only in the case of token-initial
/// characters.
pub fn check_truecase(input: &str, output: &str) -> Result<(), String> {
    let a: Vec<char> = input.chars().collect();
    let b: Vec<char> = output.chars().collect();
    if a.len() != b.len() {
        return Err(format!(
            "length changed from {} to {} characters",
            a.len(),
            b.len()
        ));
    }
    for i in 0..a.len() {
        if a[i] == b[i] {
            continue;
        }
        let same_letter = a[i].to_lowercase().eq(b[i].to_lowercase());
        if !same_letter {
            return Err(format!(
                "character {i} changed from {:?} to {:?}",
                a[i], b[i]
            ));
        }
        let token_initial = i == 0 || !a[i - 1].is_alphanumeric();
        if !token_initial {
            return Err(format!("non-initial character {i} changed case"));
        }
    }
    Ok(())
}

/// The selected index must point into the proposal's candidate list.
pub fn check_selection(proposal: &CorefProposal, index: usize) -> Result<(), String> {
    if index < proposal.candidates.len() {
        Ok(())
    } else {
        Err(format!(
            "selected candidate {index} outside list of {}",
            proposal.candidates.len()
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn punctuation_insertions_accepted() {
        check_punctuation("where is he from", "where is he from?").unwrap();
        check_punctuation("Tupelo Mississippi but", "Tupelo, Mississippi, but").unwrap();
    }

    #[test]
    fn punctuation_rewrites_rejected() {
        assert!(check_punctuation("where is he from", "Where is he from?").is_err());
        assert!(check_punctuation("a b", "a  b").is_err());
        assert!(check_punctuation("a b c", "a b").is_err());
    }

    #[test]
    fn truecase_initial_only() {
        check_truecase("elvis was born in tupelo", "Elvis was born in Tupelo").unwrap();
        assert!(check_truecase("elvis", "ELVIS").is_err());
        assert!(check_truecase("elvis", "elvis!").is_err());
        assert!(check_truecase("nasa", "nasA").is_err());
    }

    #[test]
    fn selection_bounds() {
        let p = CorefProposal {
            pronoun_span: (0, 2),
            candidates: vec!["Elvis".into()],
        };
        assert!(check_selection(&p, 0).is_ok());
        assert!(check_selection(&p, 1).is_err());
    }
}
