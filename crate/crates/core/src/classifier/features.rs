use crate::error::{Error, Result};
use crate::geometry::SegmentKind;
use crate::kindset::KindSet;
use crate::num::Scalar;

use super::ProbabilityTables;

/// Order of the per-kind feature slots: the active kinds in enumeration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureLayout {
    kinds: Vec<SegmentKind>,
    mask: KindSet,
}

impl FeatureLayout {
    pub fn new(active: &[SegmentKind]) -> Result<Self> {
        if active.is_empty() {
            return Err(Error::invalid("at least one segment kind must be active"));
        }
        let mask = KindSet::from_kinds(active.iter().copied());
        if mask.len() != active.len() {
            return Err(Error::invalid("active segment kinds contain duplicates"));
        }
        Ok(FeatureLayout {
            kinds: mask.iter().collect(),
            mask,
        })
    }

    pub fn kinds(&self) -> &[SegmentKind] {
        &self.kinds
    }

    pub fn mask(&self) -> KindSet {
        self.mask
    }

    /// `2n + 2`.
    pub fn dim(&self) -> usize {
        2 * self.kinds.len() + 2
    }
}

/// Feature vector of a proposal with kind-set `kinds`:
/// `[P_T(set), P_F(set), P_T(k1)·[k1 present], P_F(k1)·[k1 present], ...]`.
pub fn featurize<T: Scalar>(kinds: KindSet, tables: &ProbabilityTables, layout: &FeatureLayout) -> Result<Vec<T>> {
    if !kinds.is_subset(layout.mask) {
        return Err(Error::invalid(format!(
            "proposal kinds {kinds} not all in the active configuration"
        )));
    }
    let mut x = Vec::with_capacity(layout.dim());
    let (st, sf) = tables.set_prob::<T>(kinds);
    x.push(st);
    x.push(sf);
    for &k in &layout.kinds {
        if kinds.contains(k) {
            let (kt, kf) = tables.kind_prob::<T>(k);
            x.push(kt);
            x.push(kf);
        } else {
            x.push(T::zero());
            x.push(T::zero());
        }
    }
    Ok(x)
}
