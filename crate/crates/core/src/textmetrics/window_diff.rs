use crate::error::{CoreError, Result};
use crate::model::{covered_by, AnnotationRecord};

use super::Token;

/// WindowDiff between two segmentations of `n_tokens` tokens.
///
/// A boundary `b` sits between tokens `b - 1` and `b`. For each of the
/// `n_tokens - k` window positions `i`, the boundaries with `i < b <= i + k`
/// are counted on both sides; the result is the fraction of positions where
/// the counts differ.
pub fn window_diff(ref_bounds: &[usize], hyp_bounds: &[usize], n_tokens: usize, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(CoreError::InvalidArgument("window size must be positive".into()));
    }
    if k >= n_tokens {
        return Err(CoreError::InvalidArgument(format!(
            "window size {k} must be smaller than the {n_tokens} tokens"
        )));
    }
    let cumulative = |bounds: &[usize]| -> Result<Vec<usize>> {
        let mut marks = vec![0usize; n_tokens + 1];
        for &b in bounds {
            if b == 0 || b >= n_tokens {
                return Err(CoreError::InvalidArgument(format!(
                    "boundary {b} outside [1, {}]",
                    n_tokens - 1
                )));
            }
            marks[b] = 1;
        }
        let mut acc = 0;
        for m in marks.iter_mut() {
            acc += *m;
            *m = acc;
        }
        Ok(marks)
    };
    let r = cumulative(ref_bounds)?;
    let h = cumulative(hyp_bounds)?;
    let positions = n_tokens - k;
    let disagreements = (0..positions)
        .filter(|&i| r[i + k] - r[i] != h[i + k] - h[i])
        .count();
    Ok(disagreements as f64 / positions as f64)
}

/// Unit boundaries of a record over a tokenization: a boundary is placed
/// wherever two consecutive tokens belong to different units (or one to a
/// unit and the other to none). A token belongs to a unit when it lies fully
/// inside the unit's spans.
pub fn unit_boundaries(record: &AnnotationRecord, tokens: &[Token]) -> Vec<usize> {
    let owner: Vec<Option<usize>> = tokens
        .iter()
        .map(|t| record.units.iter().position(|u| covered_by(&t.span, &u.spans)))
        .collect();
    (1..owner.len()).filter(|&b| owner[b] != owner[b - 1]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    /// Direct transcription of the definition, one window at a time.
    fn brute(r: &[usize], h: &[usize], n: usize, k: usize) -> f64 {
        let r: BTreeSet<_> = r.iter().copied().collect();
        let h: BTreeSet<_> = h.iter().copied().collect();
        let mut bad = 0;
        for i in 0..n - k {
            let cr = (i + 1..=i + k).filter(|b| r.contains(b)).count();
            let ch = (i + 1..=i + k).filter(|b| h.contains(b)).count();
            if cr != ch {
                bad += 1;
            }
        }
        bad as f64 / (n - k) as f64
    }

    #[test]
    fn identical_is_zero() {
        assert_eq!(window_diff(&[3, 7], &[3, 7], 12, 4).unwrap(), 0.0);
    }

    #[test]
    fn empty_against_everything_is_one() {
        let all: Vec<usize> = (1..20).collect();
        for k in 1..20 {
            assert_eq!(window_diff(&[], &all, 20, k).unwrap(), 1.0);
        }
    }

    #[test]
    fn shifted_boundary_matches_brute_force() {
        let v = window_diff(&[4], &[5], 10, 3).unwrap();
        assert_eq!(v, brute(&[4], &[5], 10, 3));
        // windows i=1 and i=4 see exactly one of the two boundaries
        assert_eq!(v, 2.0 / 7.0);
    }

    #[test]
    fn invalid_arguments() {
        assert!(window_diff(&[], &[], 10, 0).is_err());
        assert!(window_diff(&[], &[], 10, 10).is_err());
        assert!(window_diff(&[10], &[], 10, 3).is_err());
        assert!(window_diff(&[0], &[], 10, 3).is_err());
    }
}
