use std::collections::BTreeMap;

use log::warn;

use crate::error::{Error, Result};
use crate::geometry::{iou, BBox, SegmentKind};
use crate::kindset::KindSet;
use crate::num::Scalar;
use crate::proposal::Proposal;

/// Splits proposals into those overlapping the ground-truth face by at least
/// `delta` and the rest. Without a face every proposal is negative.
pub fn label_proposals<'a, T: Scalar>(
    proposals: &'a [Proposal<T>],
    gt_face: Option<&BBox<T>>,
    delta: T,
) -> (Vec<&'a Proposal<T>>, Vec<&'a Proposal<T>>) {
    proposals
        .iter()
        .partition(|p| gt_face.is_some_and(|gt| iou(&p.bbox, gt) >= delta))
}

/// Empirical face / non-face frequencies of kind-sets and of single kinds.
///
/// Counts are stored; probabilities are `count / partition size`, optionally
/// Laplace-smoothed.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityTables {
    /// kind-set -> (occurrences among positives, among negatives)
    pub set_counts: BTreeMap<KindSet, (u64, u64)>,
    pub kind_counts: [(u64, u64); SegmentKind::COUNT],
    pub n_pos: u64,
    pub n_neg: u64,
    /// Laplace pseudo-count; `None` uses raw frequencies.
    pub smoothing: Option<f64>,
}

/// Counts kind-sets of positive and negative proposals.
pub fn build_tables(positives: &[KindSet], negatives: &[KindSet]) -> Result<ProbabilityTables> {
    if positives.is_empty() && negatives.is_empty() {
        return Err(Error::invalid("cannot build probability tables from no proposals"));
    }
    if positives.is_empty() {
        warn!("no positive proposals; all face probabilities are 0");
    }
    if negatives.is_empty() {
        warn!("no negative proposals; all non-face probabilities are 0");
    }
    let mut set_counts: BTreeMap<KindSet, (u64, u64)> = BTreeMap::new();
    let mut kind_counts = [(0u64, 0u64); SegmentKind::COUNT];
    for (sets, positive) in [(positives, true), (negatives, false)] {
        for &set in sets {
            let entry = set_counts.entry(set).or_default();
            let bump = |c: &mut (u64, u64)| if positive { c.0 += 1 } else { c.1 += 1 };
            bump(entry);
            for k in set.iter() {
                bump(&mut kind_counts[k.index()]);
            }
        }
    }
    Ok(ProbabilityTables {
        set_counts,
        kind_counts,
        n_pos: positives.len() as u64,
        n_neg: negatives.len() as u64,
        smoothing: None,
    })
}

impl ProbabilityTables {
    fn ratio<T: Scalar>(&self, count: u64, n: u64) -> T {
        match self.smoothing {
            Some(a) if a > 0.0 => T::lit((count as f64 + a) / (n as f64 + 2.0 * a)),
            _ if n == 0 => T::zero(),
            _ => T::lit(count as f64) / T::lit(n as f64),
        }
    }

    /// `(P(face), P(non-face))` of the exact kind-set; unseen sets count as 0.
    pub fn set_prob<T: Scalar>(&self, set: KindSet) -> (T, T) {
        let (p, n) = self.set_counts.get(&set).copied().unwrap_or((0, 0));
        (self.ratio(p, self.n_pos), self.ratio(n, self.n_neg))
    }

    /// `(P(face), P(non-face))` that a proposal contains `kind`.
    pub fn kind_prob<T: Scalar>(&self, kind: SegmentKind) -> (T, T) {
        let (p, n) = self.kind_counts[kind.index()];
        (self.ratio(p, self.n_pos), self.ratio(n, self.n_neg))
    }

    pub fn with_smoothing(mut self, alpha: Option<f64>) -> Self {
        self.smoothing = alpha;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use SegmentKind::*;

    fn set(k: &[SegmentKind]) -> KindSet {
        KindSet::from_kinds(k.iter().copied())
    }

    #[test]
    fn counting_examples() {
        let pos = vec![set(&[NS, EP]), set(&[NS, EP]), set(&[NS, U12])];
        let neg = vec![set(&[B12, U12])];
        let t = build_tables(&pos, &neg).unwrap();
        let (pt, pf): (f64, f64) = t.set_prob(set(&[EP, NS]));
        assert_eq!(pt, 2.0 / 3.0);
        assert_eq!(pf, 0.0);
        assert_eq!(t.kind_prob::<f64>(NS), (1.0, 0.0));
        assert_eq!(t.kind_prob::<f64>(U12), (1.0 / 3.0, 1.0));
        assert_eq!(t.kind_prob::<f64>(EP).1, 0.0);
        assert_eq!(t.set_prob::<f64>(set(&[L12, R12])), (0.0, 0.0));
    }

    #[test]
    fn partitions_sum_to_one() {
        let pos = vec![set(&[NS, EP]), set(&[NS]), set(&[NS, EP]), set(&[B12, U12, L12])];
        let neg = vec![set(&[EP]), set(&[EP, B34])];
        let t = build_tables(&pos, &neg).unwrap();
        let (sp, sn) = t.set_counts.keys().fold((0.0, 0.0), |(a, b), s| {
            let (p, n): (f64, f64) = t.set_prob(*s);
            (a + p, b + n)
        });
        assert!((sp - 1.0).abs() < 1e-12 && (sn - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_partitions() {
        assert!(build_tables(&[], &[]).is_err());
        let t = build_tables(&[set(&[NS])], &[]).unwrap();
        assert_eq!(t.kind_prob::<f64>(NS), (1.0, 0.0));
        assert_eq!(t.set_prob::<f64>(set(&[NS])).1, 0.0);
    }

    #[test]
    fn smoothing_gives_unseen_sets_mass() {
        let t = build_tables(&[set(&[NS])], &[set(&[EP])])
            .unwrap()
            .with_smoothing(Some(1.0));
        let (p, n): (f64, f64) = t.set_prob(set(&[B12]));
        assert_eq!((p, n), (1.0 / 3.0, 1.0 / 3.0));
    }

    #[test]
    fn labeling_uses_delta() {
        use crate::proposal::Proposal;
        let gt = BBox::new(0.0, 0.0, 10.0, 10.0);
        let mk = |b: BBox<f64>| Proposal {
            anchor: 0,
            members: vec![0, 1],
            kinds: set(&[NS, EP]),
            bbox: b,
            score: None,
        };
        // iou 0.6 and 0.4
        let props = vec![mk(BBox::new(0.0, 0.0, 10.0, 6.0)), mk(BBox::new(0.0, 0.0, 10.0, 4.0))];
        let (p, n) = label_proposals(&props, Some(&gt), 0.5);
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].bbox.y2, 6.0);
        assert_eq!(n.len(), 1);
        let (p, n) = label_proposals(&props, None, 0.5);
        assert!(p.is_empty());
        assert_eq!(n.len(), 2);
    }
}
