use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::{IngestError, TriageLevel, CLASS_COUNT};

/// Disjoint sorted row-index sets covering every row.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitMasks {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub eval: Vec<usize>,
}

impl SplitMasks {
    pub fn total(&self) -> usize {
        self.train.len() + self.test.len() + self.eval.len()
    }

    pub fn by_name(&self, name: &str) -> Option<&[usize]> {
        match name {
            "train" => Some(&self.train),
            "test" => Some(&self.test),
            "eval" => Some(&self.eval),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub test_frac: f64,
    /// Share of the held-out rows used for evaluation.
    pub eval_frac: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_frac: 0.3,
            eval_frac: 0.3,
        }
    }
}

/// Largest-remainder apportionment of `total` proportional to `weights`;
/// ties favour the lower index.
fn apportion(weights: &[usize], total: usize) -> Vec<usize> {
    let sum: usize = weights.iter().sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let mut out: Vec<usize> = weights.iter().map(|&w| w * total / sum).collect();
    let mut rema: Vec<(usize, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| ((w * total) % sum, i))
        .collect();
    rema.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let short = total - out.iter().sum::<usize>();
    for &(_, i) in rema.iter().take(short) {
        out[i] += 1;
    }
    out
}

/// Stratified train / test / eval split.
///
/// `round(N·test_frac)` rows are held out and `round(held·eval_frac)` of those
/// form the evaluation set; both are apportioned across classes by largest
/// remainder, so per-class shares stay within one row of proportional.
pub fn split_stratified(labels: &[TriageLevel], cfg: &SplitConfig, seed: u64) -> Result<SplitMasks, IngestError> {
    for (name, f) in [("test_frac", cfg.test_frac), ("eval_frac", cfg.eval_frac)] {
        if !(f > 0.0 && f < 1.0) {
            return Err(IngestError::InvalidValue {
                field: format!("split.{name}"),
                reason: format!("{f} is not in (0, 1)"),
            });
        }
    }
    let mut members: [Vec<usize>; CLASS_COUNT] = Default::default();
    for (i, l) in labels.iter().enumerate() {
        members[l.code()].push(i);
    }
    let n = labels.len();
    let held_total = (n as f64 * cfg.test_frac).round() as usize;
    let eval_total = (held_total as f64 * cfg.eval_frac).round() as usize;
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let held = apportion(&sizes, held_total);
    let eval = apportion(&held, eval_total);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut masks = SplitMasks::default();
    for (code, rows) in members.iter_mut().enumerate() {
        if rows.is_empty() {
            continue;
        }
        let (h, e) = (held[code], eval[code]);
        if e == 0 || h == e || h == rows.len() {
            return Err(IngestError::ClassTooSmall {
                class: TriageLevel::from_code(code).unwrap(),
                count: rows.len(),
                needed: 3,
            });
        }
        rows.shuffle(&mut rng);
        masks.eval.extend_from_slice(&rows[..e]);
        masks.test.extend_from_slice(&rows[e..h]);
        masks.train.extend_from_slice(&rows[h..]);
    }
    masks.train.sort_unstable();
    masks.test.sort_unstable();
    masks.eval.sort_unstable();
    Ok(masks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(counts: [usize; 4]) -> Vec<TriageLevel> {
        counts
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat_n(TriageLevel::from_code(c).unwrap(), n))
            .collect()
    }

    #[test]
    fn balanced_thousand_rows() {
        let m = split_stratified(&labels([250; 4]), &SplitConfig::default(), 1).unwrap();
        assert_eq!((m.train.len(), m.test.len(), m.eval.len()), (700, 210, 90));
    }

    #[test]
    fn same_seed_same_masks() {
        let l = labels([40, 80, 200, 60]);
        let a = split_stratified(&l, &SplitConfig::default(), 5).unwrap();
        let b = split_stratified(&l, &SplitConfig::default(), 5).unwrap();
        assert_eq!(a, b);
        let c = split_stratified(&l, &SplitConfig::default(), 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn masks_are_disjoint_and_cover() {
        let l = labels([40, 80, 200, 60]);
        let m = split_stratified(&l, &SplitConfig::default(), 5).unwrap();
        let mut all: Vec<usize> = m.train.iter().chain(&m.test).chain(&m.eval).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..l.len()).collect::<Vec<_>>());
    }

    /// Counting oracle on a 997-row fixture.
    #[test]
    fn per_class_held_out_within_one_row() {
        let counts = [101, 263, 487, 146];
        let l = labels(counts);
        assert_eq!(l.len(), 997);
        let m = split_stratified(&l, &SplitConfig::default(), 9).unwrap();
        for (code, &n) in counts.iter().enumerate() {
            let held = m.test.iter().chain(&m.eval).filter(|&&i| l[i].code() == code).count();
            assert!(
                (held as f64 - 0.3 * n as f64).abs() <= 1.0,
                "class {code}: {held} of {n}"
            );
        }
    }

    #[test]
    fn rejects_bad_fractions_and_tiny_classes() {
        let l = labels([250; 4]);
        let bad = SplitConfig {
            test_frac: 1.0,
            eval_frac: 0.3,
        };
        assert!(split_stratified(&l, &bad, 0).is_err());
        let tiny = labels([250, 250, 250, 2]);
        assert!(matches!(
            split_stratified(&tiny, &SplitConfig::default(), 0),
            Err(IngestError::ClassTooSmall {
                class: TriageLevel::Green,
                ..
            })
        ));
    }

    #[test]
    fn apportion_sums_exactly() {
        assert_eq!(apportion(&[75, 75, 75, 75], 90), vec![23, 23, 22, 22]);
        assert_eq!(apportion(&[1, 2, 3], 0), vec![0, 0, 0]);
    }
}
