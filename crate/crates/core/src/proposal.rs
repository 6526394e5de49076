//! Anchored subset proposals drawn from a cluster.

use rand::seq::index;

use crate::clustering::{Cluster, Estimated};
use crate::error::{Error, Result};
use crate::geometry::{enclosing_box, BBox};
use crate::kindset::KindSet;
use crate::num::Scalar;
use crate::rng::seeded_rng;

/// A candidate face: the anchor plus a nonempty subset of its cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal<T> {
    pub anchor: usize,
    /// Ascending member indices, anchor included.
    pub members: Vec<usize>,
    pub kinds: KindSet,
    /// Enclosing box of the members' estimated faces.
    pub bbox: BBox<T>,
    pub score: Option<T>,
}

/// Number of anchored subsets for a cluster with `m` non-anchor members.
pub fn subset_count(m: usize) -> u64 {
    if m >= 64 {
        u64::MAX
    } else {
        (1u64 << m) - 1
    }
}

/// Draws up to `zeta` distinct anchored subsets of `cluster`.
///
/// Subsets are encoded as nonzero bitmasks over the non-anchor members. When
/// all `2^m - 1` of them fit under `zeta` they are enumerated; otherwise
/// `zeta` codes are sampled without replacement from a generator seeded by
/// `seed`. Proposals come back ordered by code.
pub fn generate_proposals<T: Scalar>(
    cluster: &Cluster<T>,
    estimates: &[Estimated<T>],
    zeta: usize,
    seed: u64,
) -> Result<Vec<Proposal<T>>> {
    if zeta == 0 {
        return Err(Error::invalid("zeta must be >= 1"));
    }
    let others: Vec<usize> = cluster.others().collect();
    let m = others.len();
    if m == 0 {
        return Err(Error::invalid(format!(
            "cluster anchored at {} has no members besides the anchor",
            cluster.anchor
        )));
    }
    if m > 40 {
        return Err(Error::invalid(format!("cluster with {m} members is too large")));
    }
    let total = subset_count(m);
    let codes: Vec<u64> = if total <= zeta as u64 {
        (1..=total).collect()
    } else {
        let mut rng = seeded_rng(&[seed]);
        let mut picked: Vec<u64> = index::sample(&mut rng, total as usize, zeta)
            .into_iter()
            .map(|i| i as u64 + 1)
            .collect();
        picked.sort_unstable();
        picked
    };

    codes
        .into_iter()
        .map(|code| {
            let mut members = vec![cluster.anchor];
            members.extend(
                others
                    .iter()
                    .enumerate()
                    .filter(|(bit, _)| code >> bit & 1 == 1)
                    .map(|(_, &idx)| idx),
            );
            members.sort_unstable();
            build(cluster.anchor, members, estimates)
        })
        .collect()
}

/// Assembles a proposal from explicit member indices.
pub fn build<T: Scalar>(anchor: usize, members: Vec<usize>, estimates: &[Estimated<T>]) -> Result<Proposal<T>> {
    let faces: Vec<BBox<T>> = members.iter().map(|&i| estimates[i].1.face).collect();
    let kinds = KindSet::from_kinds(members.iter().map(|&i| estimates[i].0.kind));
    Ok(Proposal {
        anchor,
        bbox: enclosing_box(&faces)?,
        kinds,
        members,
        score: None,
    })
}
