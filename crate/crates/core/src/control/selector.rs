use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SelectorKind {
    Min,
    Max,
    Mid,
}

impl fmt::Display for SelectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectorKind::Min => "MIN",
            SelectorKind::Max => "MAX",
            SelectorKind::Mid => "MID",
        })
    }
}

impl FromStr for SelectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MIN" => Ok(SelectorKind::Min),
            "MAX" => Ok(SelectorKind::Max),
            "MID" => Ok(SelectorKind::Mid),
            other => Err(Error::InvalidParameter(format!(
                "unknown selector kind `{other}`"
            ))),
        }
    }
}

impl SelectorKind {
    fn check_arity(self, label: &str, n: usize) -> Result<()> {
        let ok = match self {
            SelectorKind::Min | SelectorKind::Max => n >= 2,
            SelectorKind::Mid => n == 3,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::SelectorArity {
                label: label.to_string(),
                expected: match self {
                    SelectorKind::Mid => "exactly 3",
                    _ => "at least 2",
                },
                got: n,
            })
        }
    }
}

/// Picks one of `candidates` and reports its position. Ties go to the
/// lowest index.
pub fn select(kind: SelectorKind, candidates: &[f64]) -> Result<(f64, usize)> {
    select_labeled(kind, "selector", candidates)
}

pub(crate) fn select_labeled(
    kind: SelectorKind,
    label: &str,
    candidates: &[f64],
) -> Result<(f64, usize)> {
    kind.check_arity(label, candidates.len())?;
    if let Some(index) = candidates.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput {
            label: label.to_string(),
            index,
        });
    }
    let mut best = 0;
    match kind {
        SelectorKind::Min => {
            for (i, &v) in candidates.iter().enumerate().skip(1) {
                if v < candidates[best] {
                    best = i;
                }
            }
        }
        SelectorKind::Max => {
            for (i, &v) in candidates.iter().enumerate().skip(1) {
                if v > candidates[best] {
                    best = i;
                }
            }
        }
        SelectorKind::Mid => {
            let mut order = [0usize, 1, 2];
            order.sort_by(|&a, &b| candidates[a].total_cmp(&candidates[b]).then(a.cmp(&b)));
            let median = candidates[order[1]];
            best = candidates.iter().position(|&v| v == median).unwrap_or(order[1]);
        }
    }
    Ok((candidates[best], best))
}

/// Where a selector input comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    Controller(usize),
    Constant(usize),
    Selector(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectorNode {
    pub kind: SelectorKind,
    pub inputs: Vec<Source>,
    pub label: String,
}

impl SelectorNode {
    pub fn new(label: impl Into<String>, kind: SelectorKind, inputs: Vec<Source>) -> Result<Self> {
        let label = label.into();
        kind.check_arity(&label, inputs.len())?;
        Ok(Self {
            kind,
            inputs,
            label,
        })
    }

    pub fn select(&self, candidates: &[f64]) -> Result<(f64, usize)> {
        select_labeled(self.kind, &self.label, candidates)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn min_of_three() {
        assert_eq!(select(SelectorKind::Min, &[100.0, 72.3, 50.0]).unwrap(), (50.0, 2));
    }

    #[test]
    fn mid_of_three() {
        assert_eq!(select(SelectorKind::Mid, &[3.0, 7.0, 5.0]).unwrap(), (5.0, 2));
    }

    #[test]
    fn max_keeps_desired_input() {
        assert_eq!(select(SelectorKind::Max, &[50.0, 47.6]).unwrap(), (50.0, 0));
    }

    #[test]
    fn ties_go_to_lowest_index() {
        assert_eq!(select(SelectorKind::Min, &[2.0, 1.0, 1.0]).unwrap(), (1.0, 1));
        assert_eq!(select(SelectorKind::Max, &[4.0, 4.0]).unwrap(), (4.0, 0));
        assert_eq!(select(SelectorKind::Mid, &[3.0, 3.0, 5.0]).unwrap(), (3.0, 0));
        assert_eq!(select(SelectorKind::Mid, &[5.0, 3.0, 5.0]).unwrap(), (5.0, 0));
    }

    #[test]
    fn arity_errors() {
        assert!(matches!(
            select(SelectorKind::Min, &[1.0]),
            Err(Error::SelectorArity { .. })
        ));
        assert!(select(SelectorKind::Mid, &[1.0, 2.0]).is_err());
        assert!(select(SelectorKind::Mid, &[1.0, 2.0, 3.0, 4.0]).is_err());
        assert!(SelectorNode::new("s", SelectorKind::Max, vec![Source::Constant(0)]).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        assert!(matches!(
            select(SelectorKind::Max, &[1.0, f64::INFINITY]),
            Err(Error::NonFiniteInput { index: 1, .. })
        ));
    }

    #[test]
    fn kind_parses_case_insensitively() {
        assert_eq!("min".parse::<SelectorKind>().unwrap(), SelectorKind::Min);
        assert_eq!("MID".parse::<SelectorKind>().unwrap(), SelectorKind::Mid);
        assert!("avg".parse::<SelectorKind>().is_err());
    }

    proptest! {
        #[test]
        fn output_is_an_input(values in prop::collection::vec(-1e6f64..1e6, 2..8)) {
            for kind in [SelectorKind::Min, SelectorKind::Max] {
                let (v, i) = select(kind, &values).unwrap();
                prop_assert_eq!(v, values[i]);
            }
        }

        #[test]
        fn mid_is_max_of_pairwise_mins(a in -1e6f64..1e6, b in -1e6f64..1e6, c in -1e6f64..1e6) {
            let (mid, i) = select(SelectorKind::Mid, &[a, b, c]).unwrap();
            let expected = a.min(b).max(b.min(c)).max(a.min(c));
            prop_assert_eq!(mid, expected);
            prop_assert_eq!(mid, [a, b, c][i]);
        }
    }
}
