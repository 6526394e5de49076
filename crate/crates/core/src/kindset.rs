use std::fmt;

use crate::geometry::SegmentKind;

/// Order-free set of segment kinds, stored as a 14-bit mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct KindSet(u16);

impl KindSet {
    pub const EMPTY: KindSet = KindSet(0);

    pub fn from_kinds(kinds: impl IntoIterator<Item = SegmentKind>) -> Self {
        kinds.into_iter().fold(KindSet(0), |s, k| s.with(k))
    }

    pub fn with(self, kind: SegmentKind) -> Self {
        KindSet(self.0 | 1 << kind.index())
    }

    pub fn contains(self, kind: SegmentKind) -> bool {
        self.0 >> kind.index() & 1 == 1
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset(self, other: KindSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn bits(self) -> u16 {
        self.0
    }

    /// Members in enumeration order.
    pub fn iter(self) -> impl Iterator<Item = SegmentKind> {
        SegmentKind::ALL.into_iter().filter(move |k| self.contains(*k))
    }

    pub fn names(self) -> Vec<String> {
        self.iter().map(|k| k.name().to_string()).collect()
    }
}

impl fmt::Display for KindSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.names().join(","))
    }
}

impl FromIterator<SegmentKind> for KindSet {
    fn from_iter<I: IntoIterator<Item = SegmentKind>>(iter: I) -> Self {
        KindSet::from_kinds(iter)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_free() {
        let a = KindSet::from_kinds([SegmentKind::NS, SegmentKind::EP, SegmentKind::B12]);
        let b = KindSet::from_kinds([SegmentKind::B12, SegmentKind::NS, SegmentKind::EP, SegmentKind::NS]);
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        assert_eq!(
            a.iter().collect::<Vec<_>>(),
            vec![SegmentKind::EP, SegmentKind::NS, SegmentKind::B12]
        );
        assert_eq!(a.to_string(), "{EP,NS,B12}");
        assert!(KindSet::from_kinds([SegmentKind::NS]).is_subset(a));
        assert!(!a.is_subset(KindSet::EMPTY));
    }
}
