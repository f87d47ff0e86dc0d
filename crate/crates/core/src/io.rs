//! Cocycle files.
//!
//! ```json
//! {"k": 2, "singular": [2], "matrices": [[2, 0, 0, 0.5], [0, 0, 0, 1]],
//!  "base": {"bernoulli": [0.5, 0.5]}}
//! ```
//!
//! Matrices are row-major `[a, b, c, d]`, symbols 1-based. A Markov base is
//! `{"markov": {"P": [[...]], "q": [...]}}` with `P[i][j]` the probability
//! of `j → i`; `q` is computed when omitted.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat2;
use crate::shift::{Base, Cocycle};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CocycleFile {
    pub k: usize,
    pub singular: Vec<usize>,
    pub matrices: Vec<[f64; 4]>,
    pub base: BaseFile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseFile {
    Bernoulli(Vec<f64>),
    Markov {
        #[serde(rename = "P")]
        p: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        q: Option<Vec<f64>>,
    },
}

impl CocycleFile {
    pub fn from_cocycle(c: &Cocycle) -> Self {
        let base = match c.base() {
            Base::Bernoulli { p } => BaseFile::Bernoulli(p.clone()),
            Base::Markov { p, q } => BaseFile::Markov { p: p.clone(), q: Some(q.clone()) },
        };
        CocycleFile {
            k: c.k(),
            singular: c.singular_symbols().iter().map(|s| s + 1).collect(),
            matrices: c.matrices().iter().map(|m| m.to_array()).collect(),
            base,
        }
    }

    pub fn to_cocycle(&self) -> Result<Cocycle> {
        if self.matrices.len() != self.k {
            return Err(Error::InvalidCocycle(format!(
                "k = {} but {} matrices were given",
                self.k,
                self.matrices.len()
            )));
        }
        let mut flags = vec![false; self.k];
        for &s in &self.singular {
            if s == 0 || s > self.k {
                return Err(Error::InvalidCocycle(format!("singular symbol {s} is outside 1..={}", self.k)));
            }
            if flags[s - 1] {
                return Err(Error::InvalidCocycle(format!("singular symbol {s} is listed twice")));
            }
            flags[s - 1] = true;
        }
        let mats: Vec<Mat2> = self.matrices.iter().map(|m| Mat2::from_array(*m)).collect();
        let base = match &self.base {
            BaseFile::Bernoulli(p) => Base::Bernoulli { p: p.clone() },
            BaseFile::Markov { p, q } => {
                let q = match q {
                    Some(q) => q.clone(),
                    None => {
                        if p.len() != self.k || p.iter().any(|r| r.len() != self.k) {
                            return Err(Error::InvalidCocycle(format!("transition matrix must be {0}x{0}", self.k)));
                        }
                        crate::shift::stationary_vector(p)?
                    }
                };
                Base::Markov { p: p.clone(), q }
            }
        };
        Cocycle::new(mats, flags, base)
    }
}

pub fn parse_cocycle(text: &str) -> Result<Cocycle> {
    let file: CocycleFile =
        serde_json::from_str(text).map_err(|e| Error::InvalidCocycle(format!("malformed cocycle file: {e}")))?;
    file.to_cocycle()
}

pub fn read_cocycle(path: impl AsRef<Path>) -> Result<Cocycle> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
    parse_cocycle(&text)
}

pub fn cocycle_to_json(c: &Cocycle) -> String {
    serde_json::to_string_pretty(&CocycleFile::from_cocycle(c)).expect("plain data")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use proptest::prelude::*;

    #[test]
    fn parses_documented_example() {
        let c = parse_cocycle(
            r#"{"k": 2, "singular": [2], "matrices": [[2, 0, 0, 0.5], [0, 0, 0, 1]], "base": {"bernoulli": [0.5, 0.5]}}"#,
        )
        .unwrap();
        assert!(c.is_singular(1) && !c.is_singular(0));
        assert_eq!(c.matrix(0).to_array(), [2.0, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn markov_without_q() {
        let c = parse_cocycle(
            r#"{"k": 2, "singular": [2], "matrices": [[2, 0, 0, 0.5], [0, 0, 0, 1]],
                "base": {"markov": {"P": [[0.5, 0.5], [0.5, 0.5]]}}}"#,
        )
        .unwrap();
        assert!((c.initial(0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let bad_p = r#"{"k": 1, "singular": [], "matrices": [[1,0,0,1]], "base": {"bernoulli": [0.9]}}"#;
        let msg = parse_cocycle(bad_p).unwrap_err().to_string();
        assert!(msg.contains("sum to 1"), "{msg}");
        let wrong_flag = r#"{"k": 1, "singular": [1], "matrices": [[1,0,0,1]], "base": {"bernoulli": [1]}}"#;
        assert!(parse_cocycle(wrong_flag).is_err());
        let out_of_range = r#"{"k": 1, "singular": [2], "matrices": [[1,0,0,0]], "base": {"bernoulli": [1]}}"#;
        assert!(parse_cocycle(out_of_range).is_err());
        assert!(parse_cocycle("{").is_err());
    }

    #[test]
    fn catalog_round_trips() {
        for c in [catalog::explo1(), catalog::explo1_markov(), catalog::markov_example(), catalog::irrat_rot(1.0)] {
            let once = cocycle_to_json(&c);
            let twice = cocycle_to_json(&parse_cocycle(&once).unwrap());
            assert_eq!(once, twice);
        }
    }

    proptest! {
        #[test]
        fn random_round_trip(k in 1usize..4, seed in any::<u64>(), markov in any::<bool>()) {
            let c = catalog::random_cocycle(k, seed, markov);
            let once = cocycle_to_json(&c);
            let back = parse_cocycle(&once).unwrap();
            prop_assert_eq!(&once, &cocycle_to_json(&back));
            prop_assert_eq!(CocycleFile::from_cocycle(&c), CocycleFile::from_cocycle(&back));
        }
    }
}
