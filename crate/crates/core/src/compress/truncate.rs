//! Greedy discarding of OVSF codes by coefficient magnitude.

use crate::model::{retained_count, Selection};
use crate::{Error, Result};

/// Retained code indices: one ascending set for the whole layer, or one set
/// per slice (flattened, `J` entries per slice).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Retained {
    Shared(Vec<usize>),
    PerFilter { per_slice: usize, indices: Vec<usize> },
}

impl Retained {
    pub fn count(&self) -> usize {
        match self {
            Retained::Shared(v) => v.len(),
            Retained::PerFilter { per_slice, .. } => *per_slice,
        }
    }

    pub fn for_slice(&self, slice: usize) -> &[usize] {
        match self {
            Retained::Shared(v) => v,
            Retained::PerFilter { per_slice, indices } => {
                &indices[slice * per_slice..(slice + 1) * per_slice]
            }
        }
    }

    pub fn is_shared(&self) -> bool {
        matches!(self, Retained::Shared(_))
    }
}

/// Coefficients for a candidate index subset, `n_slices × subset.len()`.
pub type Refit<'a> = dyn FnMut(&[usize]) -> Result<Vec<f64>> + 'a;

/// Iteratively drop the index with the smallest aggregate `Σ_slices |α_j|`
/// (ties drop the higher index) and refit, until `⌈ρ·L⌉` remain.
pub fn greedy_shared(n_slices: usize, basis_len: usize, ratio: f64, refit: &mut Refit) -> Result<(Vec<usize>, Vec<f64>)> {
    check_ratio(ratio)?;
    let target = retained_count(ratio, basis_len);
    let mut active: Vec<usize> = (0..basis_len).collect();
    let mut alphas = refit(&active)?;
    while active.len() > target {
        let width = active.len();
        let mut agg = vec![0.0f64; width];
        for s in 0..n_slices {
            for (a, v) in agg.iter_mut().zip(&alphas[s * width..(s + 1) * width]) {
                *a += v.abs();
            }
        }
        let drop = (0..width)
            .rev()
            .min_by(|&x, &y| agg[x].total_cmp(&agg[y]))
            .expect("non-empty active set");
        active.remove(drop);
        alphas = refit(&active)?;
    }
    Ok((active, alphas))
}

/// Orthogonal-basis truncation of full per-slice coefficients
/// (`n_slices × L`, row-major). Surviving coefficients are unchanged.
pub fn greedy_truncate(alphas: &[f64], basis_len: usize, ratio: f64, selection: Selection) -> Result<(Retained, Vec<f64>)> {
    check_ratio(ratio)?;
    if basis_len == 0 || !alphas.len().is_multiple_of(basis_len) {
        return Err(Error::validation(format!(
            "{} coefficients do not form slices of length {basis_len}",
            alphas.len()
        )));
    }
    let n_slices = alphas.len() / basis_len;
    let gather = |subset: &[usize], slices: std::ops::Range<usize>| -> Vec<f64> {
        slices
            .flat_map(|s| subset.iter().map(move |&j| alphas[s * basis_len + j]))
            .collect()
    };
    match selection {
        Selection::Shared => {
            let (idx, kept) = greedy_shared(n_slices, basis_len, ratio, &mut |sub: &[usize]| Ok(gather(sub, 0..n_slices)))?;
            Ok((Retained::Shared(idx), kept))
        }
        Selection::PerFilter => {
            let mut indices = Vec::new();
            let mut kept = Vec::new();
            for s in 0..n_slices {
                let (idx, a) = greedy_shared(1, basis_len, ratio, &mut |sub: &[usize]| Ok(gather(sub, s..s + 1)))?;
                indices.extend(idx);
                kept.extend(a);
            }
            Ok((
                Retained::PerFilter {
                    per_slice: retained_count(ratio, basis_len),
                    indices,
                },
                kept,
            ))
        }
    }
}

fn check_ratio(ratio: f64) -> Result<()> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::validation(format!("ratio must be in (0, 1], got {ratio}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_ratio_keeps_everything() {
        let a: Vec<f64> = (0..32).map(|i| i as f64 - 7.0).collect();
        let (r, kept) = greedy_truncate(&a, 16, 1.0, Selection::Shared).unwrap();
        assert_eq!(r, Retained::Shared((0..16).collect()));
        assert_eq!(kept, a);
    }

    #[test]
    fn zero_code_is_dropped_first() {
        let mut a = vec![1.0; 3 * 4];
        for s in 0..3 {
            a[s * 4] = 0.0;
        }
        let (r, _) = greedy_truncate(&a, 4, 0.75, Selection::Shared).unwrap();
        assert_eq!(r, Retained::Shared(vec![1, 2, 3]));
    }

    #[test]
    fn per_filter_sets_differ() {
        let a = vec![5.0, 0.0, 1.0, 0.1, 0.0, 2.0, 0.1, 3.0];
        let (r, kept) = greedy_truncate(&a, 4, 0.5, Selection::PerFilter).unwrap();
        assert_eq!(r.for_slice(0), &[0, 2]);
        assert_eq!(r.for_slice(1), &[1, 3]);
        assert_eq!(kept, vec![5.0, 1.0, 2.0, 3.0]);
        assert!(!r.is_shared());
    }

    #[test]
    fn bad_ratio() {
        assert!(greedy_truncate(&[1.0; 4], 4, 0.0, Selection::Shared).is_err());
        assert!(greedy_truncate(&[1.0; 4], 4, -0.5, Selection::Shared).is_err());
    }
}
