use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const IDF_ID: &str = "ln(1+(N-df+0.5)/(df+0.5))";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.5, b: 0.4 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1.is_finite() && self.k1 >= 0.0) || !(0.0..=1.0).contains(&self.b) {
            return Err(Error::Config(format!(
                "need k1 >= 0 and b in [0, 1], got k1 {} b {}",
                self.k1, self.b
            )));
        }
        Ok(())
    }

    /// Non-negative IDF over `n` passages.
    pub fn idf(n: usize, df: usize) -> f64 {
        let (n, df) = (n as f64, df as f64);
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Contribution of one query term occurrence.
    pub fn term_weight(&self, idf: f64, tf: f64, len: f64, avglen: f64) -> f64 {
        let norm = if avglen > 0.0 { len / avglen } else { 0.0 };
        idf * tf * (self.k1 + 1.0) / (tf + self.k1 * (1.0 - self.b + self.b * norm))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_passage_reference() {
        let p = Bm25Params::default();
        let idf = Bm25Params::idf(1, 1);
        assert!((idf - 0.287_682_072_451_780_9).abs() < 1e-12);
        let s = p.term_weight(idf, 1.0, 10.0, 10.0);
        // tf (k1 + 1) / (tf + k1) == 1 when len == avglen and tf == 1
        assert!((s - idf).abs() < 1e-15);
        let s2 = p.term_weight(idf, 2.0, 10.0, 10.0);
        assert!((s2 - idf * 5.0 / 3.5).abs() < 1e-15);
    }

    #[test]
    fn validation() {
        assert!(Bm25Params { k1: -1.0, b: 0.4 }.validate().is_err());
        assert!(Bm25Params { k1: 1.2, b: 1.5 }.validate().is_err());
    }
}
