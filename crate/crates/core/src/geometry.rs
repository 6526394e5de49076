//! Segment taxonomy, box algebra and segment-to-face extrapolation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;

/// One of the fourteen facial segments a detector is trained for.
///
/// The declaration order is the fixed enumeration order used for feature
/// layout and for sorting detections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SegmentKind {
    EP,
    UL12,
    U12,
    UR12,
    UL34,
    U34,
    UR34,
    L12,
    L34,
    NS,
    R34,
    R12,
    B34,
    B12,
}

impl SegmentKind {
    pub const COUNT: usize = 14;

    pub const ALL: [SegmentKind; 14] = [
        SegmentKind::EP,
        SegmentKind::UL12,
        SegmentKind::U12,
        SegmentKind::UR12,
        SegmentKind::UL34,
        SegmentKind::U34,
        SegmentKind::UR34,
        SegmentKind::L12,
        SegmentKind::L34,
        SegmentKind::NS,
        SegmentKind::R34,
        SegmentKind::R12,
        SegmentKind::B34,
        SegmentKind::B12,
    ];

    /// The nine-segment configuration that performed best.
    pub const BEST: [SegmentKind; 9] = [
        SegmentKind::NS,
        SegmentKind::EP,
        SegmentKind::UL34,
        SegmentKind::UR34,
        SegmentKind::U12,
        SegmentKind::L34,
        SegmentKind::UL12,
        SegmentKind::R12,
        SegmentKind::L12,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            SegmentKind::EP => "EP",
            SegmentKind::UL12 => "UL12",
            SegmentKind::U12 => "U12",
            SegmentKind::UR12 => "UR12",
            SegmentKind::UL34 => "UL34",
            SegmentKind::U34 => "U34",
            SegmentKind::UR34 => "UR34",
            SegmentKind::L12 => "L12",
            SegmentKind::L34 => "L34",
            SegmentKind::NS => "NS",
            SegmentKind::R34 => "R34",
            SegmentKind::R12 => "R12",
            SegmentKind::B34 => "B34",
            SegmentKind::B12 => "B12",
        }
    }

    /// Default position of the segment inside a unit face, `(u1, v1, u2, v2)`.
    pub fn default_canonical(self) -> [f64; 4] {
        match self {
            SegmentKind::UL12 => [0.0, 0.0, 0.5, 0.5],
            SegmentKind::U12 => [0.0, 0.0, 1.0, 0.5],
            SegmentKind::UR12 => [0.5, 0.0, 1.0, 0.5],
            SegmentKind::UL34 => [0.0, 0.0, 0.75, 0.75],
            SegmentKind::U34 => [0.0, 0.0, 1.0, 0.75],
            SegmentKind::UR34 => [0.25, 0.0, 1.0, 0.75],
            SegmentKind::L12 => [0.0, 0.0, 0.5, 1.0],
            SegmentKind::L34 => [0.0, 0.0, 0.75, 1.0],
            SegmentKind::R34 => [0.25, 0.0, 1.0, 1.0],
            SegmentKind::R12 => [0.5, 0.0, 1.0, 1.0],
            SegmentKind::B34 => [0.0, 0.25, 1.0, 1.0],
            SegmentKind::B12 => [0.0, 0.5, 1.0, 1.0],
            SegmentKind::EP => [0.125, 0.2, 0.875, 0.45],
            SegmentKind::NS => [0.35, 0.35, 0.65, 0.75],
        }
    }
}

impl fmt::Display for SegmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SegmentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SegmentKind::ALL
            .iter()
            .copied()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown segment kind `{s}`")))
    }
}

/// Axis-aligned box in real pixel coordinates, `(x1, y1)` top-left and
/// `(x2, y2)` bottom-right.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BBox<T> {
    pub x1: T,
    pub y1: T,
    pub x2: T,
    pub y2: T,
}

impl<T: Scalar> BBox<T> {
    pub fn new(x1: T, y1: T, x2: T, y2: T) -> Self {
        BBox { x1, y1, x2, y2 }
    }

    /// Validating constructor: corners must be finite and ordered.
    pub fn try_new(x1: T, y1: T, x2: T, y2: T) -> Result<Self> {
        let b = BBox { x1, y1, x2, y2 };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(Error::invalid(format!("malformed box {b:?}")))
        }
    }

    pub fn from_f64(c: [f64; 4]) -> Self {
        BBox::new(T::lit(c[0]), T::lit(c[1]), T::lit(c[2]), T::lit(c[3]))
    }

    pub fn to_f64(&self) -> [f64; 4] {
        [self.x1.as_f64(), self.y1.as_f64(), self.x2.as_f64(), self.y2.as_f64()]
    }

    pub fn cast<U: Scalar>(&self) -> BBox<U> {
        BBox::from_f64(self.to_f64())
    }

    pub fn is_valid(&self) -> bool {
        [self.x1, self.y1, self.x2, self.y2].iter().all(|v| v.is_finite()) && self.x1 <= self.x2 && self.y1 <= self.y2
    }

    #[inline]
    pub fn width(&self) -> T {
        self.x2 - self.x1
    }

    #[inline]
    pub fn height(&self) -> T {
        self.y2 - self.y1
    }

    #[inline]
    pub fn area(&self) -> T {
        self.width() * self.height()
    }

    pub fn center(&self) -> (T, T) {
        (self.x1 + self.width() * T::half(), self.y1 + self.height() * T::half())
    }

    pub fn half_diagonal(&self) -> T {
        self.width().hypot(self.height()) * T::half()
    }

    pub fn intersection_area(&self, other: &Self) -> T {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w > T::zero() && h > T::zero() {
            w * h
        } else {
            T::zero()
        }
    }

    /// `true` when `other` lies entirely inside `self`.
    pub fn contains(&self, other: &Self) -> bool {
        self.x1 <= other.x1 && self.y1 <= other.y1 && self.x2 >= other.x2 && self.y2 >= other.y2
    }

    pub fn clamp_to(&self, width: T, height: T) -> Self {
        let cx = |v: T| v.max(T::zero()).min(width);
        let cy = |v: T| v.max(T::zero()).min(height);
        BBox::new(cx(self.x1), cy(self.y1), cx(self.x2), cy(self.y2))
    }

    pub fn translate(&self, dx: T, dy: T) -> Self {
        BBox::new(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)
    }

    pub fn scale(&self, s: T) -> Self {
        BBox::new(self.x1 * s, self.y1 * s, self.x2 * s, self.y2 * s)
    }

    /// Lexicographic comparison on `(x1, y1, x2, y2)`.
    pub fn lex_cmp(&self, other: &Self) -> std::cmp::Ordering {
        let a = [self.x1, self.y1, self.x2, self.y2];
        let b = [other.x1, other.y1, other.x2, other.y2];
        a.iter()
            .zip(&b)
            .map(|(p, q)| p.partial_cmp(q).unwrap_or(std::cmp::Ordering::Equal))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    }
}

/// Intersection over union. Returns 0 when both boxes have zero area.
pub fn iou<T: Scalar>(a: &BBox<T>, b: &BBox<T>) -> T {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= T::zero() {
        T::zero()
    } else {
        inter / union
    }
}

/// Smallest box containing every input box.
pub fn enclosing_box<T: Scalar>(boxes: &[BBox<T>]) -> Result<BBox<T>> {
    let (first, rest) = boxes
        .split_first()
        .ok_or_else(|| Error::invalid("enclosing_box of an empty list"))?;
    Ok(rest.iter().fold(*first, |acc, b| {
        BBox::new(acc.x1.min(b.x1), acc.y1.min(b.y1), acc.x2.max(b.x2), acc.y2.max(b.y2))
    }))
}

/// Full-face estimate extrapolated from one segment detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceEstimate<T> {
    /// Estimated face clamped to the image.
    pub face: BBox<T>,
    /// Midpoint of the unclamped estimate.
    pub center: (T, T),
    pub source_kind: SegmentKind,
    /// Half the diagonal of the unclamped estimate.
    pub half_diagonal: T,
}

impl<T: Scalar> FaceEstimate<T> {
    pub fn center_distance(&self, other: &Self) -> T {
        (self.center.0 - other.center.0).hypot(self.center.1 - other.center.1)
    }
}

/// Per-kind canonical rectangles locating each segment inside a unit face.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalTable {
    rects: [[f64; 4]; SegmentKind::COUNT],
}

impl Default for CanonicalTable {
    fn default() -> Self {
        let mut rects = [[0.0; 4]; SegmentKind::COUNT];
        for k in SegmentKind::ALL {
            rects[k.index()] = k.default_canonical();
        }
        CanonicalTable { rects }
    }
}

impl CanonicalTable {
    pub fn get(&self, kind: SegmentKind) -> [f64; 4] {
        self.rects[kind.index()]
    }

    pub fn set(&mut self, kind: SegmentKind, rect: [f64; 4]) -> Result<()> {
        let [u1, v1, u2, v2] = rect;
        let ok = |a: f64, b: f64| (0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b) && a < b;
        if !ok(u1, u2) || !ok(v1, v2) {
            return Err(Error::invalid(format!(
                "canonical rectangle {rect:?} for {kind} must satisfy 0 <= u1 < u2 <= 1, 0 <= v1 < v2 <= 1"
            )));
        }
        self.rects[kind.index()] = rect;
        Ok(())
    }

    /// The segment box a detector should return for `face`, before clamping.
    pub fn segment_of<T: Scalar>(&self, kind: SegmentKind, face: &BBox<T>) -> BBox<T> {
        let [u1, v1, u2, v2] = self.get(kind).map(T::lit);
        let (w, h) = (face.width(), face.height());
        BBox::new(face.x1 + u1 * w, face.y1 + v1 * h, face.x1 + u2 * w, face.y1 + v2 * h)
    }

    /// Extrapolates a segment box to the full face it implies.
    ///
    /// Each face edge is extended outward from the nearest segment edge, and
    /// the center is interpolated from whichever segment edge is closer, so
    /// for `L12` the result is bit-identical to
    /// `(x1, y1)-(min(w_img, x2 + (x2 - x1)), y2)` with center
    /// `(x2, y1 + (y2 - y1) / 2)`.
    pub fn estimate_full_face<T: Scalar>(
        &self,
        kind: SegmentKind,
        seg: &BBox<T>,
        img_w: T,
        img_h: T,
    ) -> Result<FaceEstimate<T>> {
        if !seg.is_valid() || seg.width() <= T::zero() || seg.height() <= T::zero() {
            return Err(Error::invalid(format!("degenerate {kind} segment box {seg:?}")));
        }
        let [u1, v1, u2, v2] = self.get(kind).map(T::lit);
        let (x1, x2, cx, fw) = extend_axis(seg.x1, seg.x2, u1, u2);
        let (y1, y2, cy, fh) = extend_axis(seg.y1, seg.y2, v1, v2);
        let unclamped = BBox::new(x1, y1, x2, y2);
        Ok(FaceEstimate {
            face: unclamped.clamp_to(img_w, img_h),
            center: (cx, cy),
            source_kind: kind,
            half_diagonal: fw.hypot(fh) * T::half(),
        })
    }
}

/// Returns `(face_lo, face_hi, face_mid, face_len)` along one axis.
fn extend_axis<T: Scalar>(lo: T, hi: T, c_lo: T, c_hi: T) -> (T, T, T, T) {
    let seg_len = hi - lo;
    let face_len = seg_len / (c_hi - c_lo);
    let face_lo = lo - c_lo * face_len;
    let face_hi = hi + (T::one() - c_hi) * face_len;
    let t = (T::half() - c_lo) / (c_hi - c_lo);
    let mid = if t <= T::half() {
        lo + t * seg_len
    } else {
        hi - (T::one() - t) * seg_len
    };
    (face_lo, face_hi, mid, face_len)
}

/// [`CanonicalTable::estimate_full_face`] with the default table.
pub fn estimate_full_face<T: Scalar>(kind: SegmentKind, seg: &BBox<T>, img_w: T, img_h: T) -> Result<FaceEstimate<T>> {
    CanonicalTable::default().estimate_full_face(kind, seg, img_w, img_h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox<f64> {
        BBox::new(x1, y1, x2, y2)
    }

    #[test]
    fn canonical_rects_are_valid() {
        let mut t = CanonicalTable::default();
        for k in SegmentKind::ALL {
            let r = t.get(k);
            t.set(k, r).unwrap();
        }
        assert!(t.set(SegmentKind::NS, [0.5, 0.0, 0.5, 1.0]).is_err());
        assert!(t.set(SegmentKind::NS, [0.0, 0.0, 1.2, 1.0]).is_err());
    }

    #[test]
    fn kind_names_round_trip() {
        for k in SegmentKind::ALL {
            assert_eq!(k.name().parse::<SegmentKind>().unwrap(), k);
            assert_eq!(SegmentKind::from_index(k.index()), Some(k));
        }
        assert!("XX".parse::<SegmentKind>().is_err());
    }

    #[test]
    fn iou_examples() {
        let a = b(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &b(5.0, 5.0, 6.0, 6.0)), 0.0);
        assert_eq!(iou(&a, &b(1.0, 1.0, 3.0, 3.0)), 1.0 / 7.0);
        let z = b(1.0, 1.0, 1.0, 1.0);
        assert_eq!(iou(&z, &z), 0.0);
    }

    #[test]
    fn l12_estimate_and_clamp() {
        let seg = b(10.0, 20.0, 50.0, 100.0);
        let est = estimate_full_face(SegmentKind::L12, &seg, 200.0, 200.0).unwrap();
        assert_eq!(est.face, b(10.0, 20.0, 90.0, 100.0));
        assert_eq!(est.center, (50.0, 60.0));

        let est = estimate_full_face(SegmentKind::L12, &seg, 70.0, 200.0).unwrap();
        assert_eq!(est.face, b(10.0, 20.0, 70.0, 100.0));
        assert_eq!(est.center, (50.0, 60.0));
        assert_eq!(est.half_diagonal, 0.5 * (80.0f64 * 80.0 + 80.0 * 80.0).sqrt());
    }

    #[test]
    fn u12_estimate() {
        let est = estimate_full_face(SegmentKind::U12, &b(0.0, 0.0, 100.0, 50.0), 500.0, 500.0).unwrap();
        assert_eq!(est.face, b(0.0, 0.0, 100.0, 100.0));
        assert_eq!(est.center, (50.0, 50.0));
    }

    #[test]
    fn degenerate_segment_is_rejected() {
        let flat = b(10.0, 10.0, 30.0, 10.0);
        assert!(estimate_full_face(SegmentKind::NS, &flat, 100.0, 100.0).is_err());
        let nan = b(f64::NAN, 0.0, 1.0, 1.0);
        assert!(estimate_full_face(SegmentKind::NS, &nan, 100.0, 100.0).is_err());
    }

    #[test]
    fn enclosing_box_examples() {
        let a = b(0.0, 0.0, 10.0, 10.0);
        assert_eq!(enclosing_box(&[a]).unwrap(), a);
        assert_eq!(
            enclosing_box(&[a, b(5.0, 5.0, 20.0, 15.0)]).unwrap(),
            b(0.0, 0.0, 20.0, 15.0)
        );
        assert_eq!(enclosing_box(&[b(2.0, 2.0, 3.0, 3.0), a]).unwrap(), a);
        assert!(enclosing_box::<f64>(&[]).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let seg = BBox::<f32>::new(10.0, 20.0, 50.0, 100.0);
        let est = estimate_full_face(SegmentKind::L12, &seg, 70.0, 200.0).unwrap();
        assert_eq!(est.face, BBox::new(10.0, 20.0, 70.0, 100.0));
        assert_eq!(est.center, (50.0, 60.0));
    }

    fn arb_box() -> impl Strategy<Value = BBox<f64>> {
        (0.0..500.0f64, 0.0..500.0f64, 1.0..300.0f64, 1.0..300.0f64)
            .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h))
    }

    proptest! {
        #[test]
        fn extrapolation_inverts_canonical_subrect(face in arb_box(), k in 0usize..14) {
            let kind = SegmentKind::ALL[k];
            let table = CanonicalTable::default();
            let seg = table.segment_of(kind, &face);
            let est = table.estimate_full_face(kind, &seg, 1e6, 1e6).unwrap();
            let tol = 1e-9 * (1.0 + face.x2.abs().max(face.y2.abs()));
            prop_assert!((est.face.x1 - face.x1).abs() < tol);
            prop_assert!((est.face.y1 - face.y1).abs() < tol);
            prop_assert!((est.face.x2 - face.x2).abs() < tol);
            prop_assert!((est.face.y2 - face.y2).abs() < tol);
            let (cx, cy) = face.center();
            prop_assert!((est.center.0 - cx).abs() < tol && (est.center.1 - cy).abs() < tol);
            prop_assert!((est.half_diagonal - face.half_diagonal()).abs() < tol);
        }

        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), c in arb_box()) {
            let v = iou(&a, &c);
            prop_assert_eq!(v, iou(&c, &a));
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn enclosing_box_order_invariant(mut boxes in proptest::collection::vec(arb_box(), 1..8)) {
            let e = enclosing_box(&boxes).unwrap();
            prop_assert_eq!(enclosing_box(&[e]).unwrap(), e);
            boxes.reverse();
            prop_assert_eq!(enclosing_box(&boxes).unwrap(), e);
            for bx in &boxes {
                prop_assert!(e.contains(bx));
            }
        }
    }
}
