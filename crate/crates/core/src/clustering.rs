//! Groups segment detections whose extrapolated face centers agree.

use crate::detector::SegmentDetection;
use crate::error::{Error, Result};
use crate::geometry::{FaceEstimate, SegmentKind};
use crate::num::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterParams {
    /// Minimum cluster size, anchor included.
    pub min_size: usize,
    /// Radius as a fraction of the anchor estimate's half-diagonal.
    pub radius_factor: f64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            min_size: 2,
            radius_factor: 1.0 / 6.0,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_size == 0 {
            return Err(Error::invalid("cluster size threshold must be >= 1"));
        }
        if !(self.radius_factor > 0.0 && self.radius_factor.is_finite()) {
            return Err(Error::invalid("cluster radius factor must be positive"));
        }
        Ok(())
    }
}

/// Detections whose face centers fall within `radius` of the anchor's center.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster<T> {
    pub anchor: usize,
    /// Indices into the estimate list, ascending; includes the anchor.
    pub members: Vec<usize>,
    pub radius: T,
}

impl<T> Cluster<T> {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Members other than the anchor, ascending.
    pub fn others(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().copied().filter(move |&m| m != self.anchor)
    }
}

/// A segment detection paired with the face it implies.
pub type Estimated<T> = (SegmentDetection<T>, FaceEstimate<T>);

/// Forms one candidate cluster per anchor detection.
///
/// Every detection within `radius_factor x half_diagonal(anchor)` of the
/// anchor's face center joins; when several detections of the same kind
/// qualify, only the one nearest the anchor's center is kept (the anchor
/// always represents its own kind). Clusters smaller than `min_size` are
/// discarded. The result is ordered by anchor index.
pub fn cluster_segments<T: Scalar>(estimates: &[Estimated<T>], params: &ClusterParams) -> Vec<Cluster<T>> {
    let mut out = Vec::new();
    for (k, (anchor_det, anchor_est)) in estimates.iter().enumerate() {
        let radius = T::lit(params.radius_factor) * anchor_est.half_diagonal;
        // (distance, index) of the closest qualifying detection per kind
        let mut best: [Option<(T, usize)>; SegmentKind::COUNT] = [None; SegmentKind::COUNT];
        best[anchor_det.kind.index()] = Some((T::zero(), k));
        for (j, (det, est)) in estimates.iter().enumerate() {
            if j == k || det.kind == anchor_det.kind {
                continue;
            }
            let d = anchor_est.center_distance(est);
            if d > radius {
                continue;
            }
            let slot = &mut best[det.kind.index()];
            match slot {
                Some((bd, bj)) if (*bd, *bj) <= (d, j) => {}
                _ => *slot = Some((d, j)),
            }
        }
        let mut members: Vec<usize> = best.iter().flatten().map(|&(_, j)| j).collect();
        if members.len() < params.min_size {
            continue;
        }
        members.sort_unstable();
        out.push(Cluster {
            anchor: k,
            members,
            radius,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BBox, CanonicalTable};

    fn estimated(kind: SegmentKind, face: BBox<f64>) -> Estimated<f64> {
        let table = CanonicalTable::default();
        let seg = table.segment_of(kind, &face);
        let est = table.estimate_full_face(kind, &seg, 1000.0, 1000.0).unwrap();
        (SegmentDetection::new(kind, seg), est)
    }

    #[test]
    fn nose_cluster_with_four_agreeing_segments() {
        let face = BBox::new(100.0, 100.0, 220.0, 240.0);
        let dets: Vec<_> = [
            SegmentKind::NS,
            SegmentKind::U12,
            SegmentKind::B12,
            SegmentKind::L34,
            SegmentKind::UR12,
        ]
        .into_iter()
        .map(|k| estimated(k, face))
        .collect();
        let clusters = cluster_segments(&dets, &ClusterParams::default());
        assert_eq!(clusters.len(), 5);
        let ns = &clusters[0];
        assert_eq!(ns.anchor, 0);
        assert_eq!(ns.members, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn coincident_pair_yields_two_clusters() {
        let face = BBox::new(0.0, 0.0, 100.0, 100.0);
        let dets = vec![estimated(SegmentKind::EP, face), estimated(SegmentKind::B12, face)];
        let clusters = cluster_segments(&dets, &ClusterParams::default());
        assert_eq!(clusters.len(), 2);
        assert_eq!(clusters[0].anchor, 0);
        assert_eq!(clusters[1].anchor, 1);
        assert!(clusters.iter().all(|c| c.members == vec![0, 1]));
    }

    #[test]
    fn distant_detections_do_not_cluster() {
        let dets = vec![
            estimated(SegmentKind::EP, BBox::new(0.0, 0.0, 100.0, 100.0)),
            estimated(SegmentKind::NS, BBox::new(300.0, 0.0, 400.0, 100.0)),
            estimated(SegmentKind::U12, BBox::new(0.0, 300.0, 100.0, 400.0)),
        ];
        assert!(cluster_segments(&dets, &ClusterParams::default()).is_empty());
    }

    #[test]
    fn duplicate_kind_keeps_nearest() {
        let face = BBox::new(0.0, 0.0, 120.0, 120.0);
        let dets = vec![
            estimated(SegmentKind::NS, face),
            estimated(SegmentKind::EP, face.translate(10.0, 0.0)),
            estimated(SegmentKind::EP, face.translate(3.0, 0.0)),
        ];
        let clusters = cluster_segments(&dets, &ClusterParams::default());
        assert_eq!(clusters[0].members, vec![0, 2]);
    }

    #[test]
    fn min_size_one_keeps_singletons() {
        let dets = vec![estimated(SegmentKind::EP, BBox::new(0.0, 0.0, 100.0, 100.0))];
        let p = ClusterParams {
            min_size: 1,
            ..Default::default()
        };
        assert_eq!(cluster_segments(&dets, &p).len(), 1);
        assert!(ClusterParams { min_size: 0, ..p }.validate().is_err());
    }
}
