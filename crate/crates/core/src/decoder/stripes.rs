//! Stripe run lengths and the width-threshold chip rule.

use crate::error::{Error, Result};
use crate::txcodec::Chips;

/// A maximal run of equal rows in a binarized profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct Run {
    pub bright: bool,
    pub width: usize,
}

/// Run-length encode a profile.
pub fn runs(profile: &[bool]) -> Vec<Run> {
    let mut out: Vec<Run> = Vec::new();
    for &b in profile {
        match out.last_mut() {
            Some(r) if r.bright == b => r.width += 1,
            _ => out.push(Run { bright: b, width: 1 }),
        }
    }
    out
}

/// Interior runs of a profile. The first and last runs are cut by the blob
/// edge and are dropped.
pub fn interior_runs(profile: &[bool]) -> Result<Vec<Run>> {
    if profile.is_empty() {
        return Err(Error::InsufficientData("empty stripe profile".into()));
    }
    let r = runs(profile);
    if r.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "profile has {} runs, no complete stripe",
            r.len()
        )));
    }
    Ok(r[1..r.len() - 1].to_vec())
}

/// Widths of the complete stripes in a profile.
pub fn measure_stripes(profile: &[bool]) -> Result<Vec<usize>> {
    Ok(interior_runs(profile)?.iter().map(|r| r.width).collect())
}

/// One chip per run: wider than `pivot` reads as ON.
pub fn widths_to_chips(widths: &[usize], pivot: usize) -> Chips {
    Chips(widths.iter().map(|&w| w > pivot).collect())
}

/// Most frequent width among bright runs; ties go to the narrower width.
pub fn modal_width(runs: &[Run], bright: bool) -> Option<usize> {
    let mut counts = std::collections::BTreeMap::new();
    for r in runs.iter().filter(|r| r.bright == bright) {
        *counts.entry(r.width).or_insert(0usize) += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(w, _)| w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn profile(s: &str) -> Vec<bool> {
        s.chars().map(|c| c == 'B').collect()
    }

    #[test]
    fn edge_runs_dropped() {
        assert_eq!(measure_stripes(&profile("BBBBBBDDBBBBBB")).unwrap(), vec![2]);
        assert_eq!(measure_stripes(&profile("DBBBBBBDDBD")).unwrap(), vec![6, 2, 1]);
        assert!(measure_stripes(&profile("BBBB")).is_err());
        assert!(measure_stripes(&[]).is_err());
    }

    #[test]
    fn pivot_rule() {
        assert_eq!(widths_to_chips(&[6, 2, 4, 5, 7, 1, 3], 4).to_string(), "1001100");
    }

    #[test]
    fn mode_prefers_narrower_on_tie() {
        let r = runs(&profile("BBBBBDDBBBBBBDDBBBBBB"));
        assert_eq!(modal_width(&r, true), Some(6));
        assert_eq!(modal_width(&r, false), Some(2));
        assert_eq!(modal_width(&runs(&profile("DD")), true), None);
    }

    proptest! {
        #[test]
        fn runs_alternate_and_cover(p in proptest::collection::vec(any::<bool>(), 1..200)) {
            let r = runs(&p);
            prop_assert_eq!(r.iter().map(|x| x.width).sum::<usize>(), p.len());
            prop_assert!(r.windows(2).all(|w| w[0].bright != w[1].bright));
            prop_assert_eq!(widths_to_chips(&r.iter().map(|x| x.width).collect::<Vec<_>>(), 4).len(), r.len());
        }
    }
}
