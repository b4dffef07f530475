//! ℓ-centered instances and their distance-bucketed rounding.
//!
//! A centered instance replaces the metric `d` by the shortest-path metric of
//! a graph in which a set `S` of centers forms a clique (keeping `d` among
//! them) and every other point hangs off its nearest center by one pendant
//! edge of length `d(v, s^v)`. Centers are copies of the facilities opened by
//! an uncapacitated solution and receive fresh point ids appended after the
//! base universe. With that structure the metric has the closed form
//!
//! ```text
//! d_ℓ(u, v) = d(u, s^u) + d(s^u, s^v) + d(s^v, v)     (u ≠ v)
//! ```
//!
//! which is what [`build_centered`] materializes.

use crate::error::{CkmError, Result};
use crate::instance::{Assignment, Instance, Metric, PointId, TOLERANCE};
use crate::uncap::UncapSolution;

#[derive(Debug, Clone, PartialEq)]
pub struct CenteredInstance {
    base: Instance,
    /// Fresh ids `n..n+ℓ`, one per center.
    centers: Vec<PointId>,
    /// The opened facility each center copies, sorted ascending.
    sources: Vec<PointId>,
    /// Center position for every base point.
    center_of: Vec<usize>,
    /// `d(v, s^v)` for every base point.
    pendant: Vec<f64>,
    d_ell: Metric,
    f_cluster: Vec<Vec<PointId>>,
}

/// Builds the centered instance whose centers copy `uncap.open`.
pub fn build_centered(inst: &Instance, uncap: &UncapSolution) -> Result<CenteredInstance> {
    build_centered_from_sources(inst, &uncap.open)
}

/// Same as [`build_centered`] but from an explicit list of center sources.
pub fn build_centered_from_sources(inst: &Instance, sources: &[PointId]) -> Result<CenteredInstance> {
    let d = inst.metric();
    let n = d.size();
    let mut sources = sources.to_vec();
    sources.sort_unstable();
    sources.dedup();
    if sources.is_empty() {
        return Err(CkmError::Structural("a centered instance needs at least one center".into()));
    }
    if let Some(s) = sources.iter().find(|s| inst.capacity_of(**s).is_none()) {
        return Err(CkmError::Structural(format!("center source {s} is not a facility")));
    }
    let ell = sources.len();

    let mut center_of = Vec::with_capacity(n);
    let mut pendant = Vec::with_capacity(n);
    for v in (0..n).map(PointId) {
        let mut best = 0;
        for i in 1..ell {
            if d.get(v, sources[i]) < d.get(v, sources[best]) {
                best = i;
            }
        }
        center_of.push(best);
        pendant.push(d.get(v, sources[best]));
    }

    let mut f_cluster = vec![Vec::new(); ell];
    for f in inst.facilities() {
        f_cluster[center_of[f.id.0]].push(f.id);
    }

    let d_ell = closed_form_metric(d, &sources, &center_of, &pendant);
    Ok(CenteredInstance {
        base: inst.clone(),
        centers: (n..n + ell).map(PointId).collect(),
        sources,
        center_of,
        pendant,
        d_ell,
        f_cluster,
    })
}

/// Metric over base points plus appended centers, given pendant lengths.
fn closed_form_metric(d: &Metric, sources: &[PointId], center_of: &[usize], pendant: &[f64]) -> Metric {
    let n = center_of.len();
    let ell = sources.len();
    let clique = |i: usize, j: usize| d.get(sources[i], sources[j]);
    // For u < n the attachment is (its center, pendant); centers attach to themselves at 0.
    let attach = |u: usize| if u < n { (center_of[u], pendant[u]) } else { (u - n, 0.0) };
    Metric::from_fn(n + ell, |u, v| {
        let (su, pu) = attach(u);
        let (sv, pv) = attach(v);
        pu + clique(su, sv) + pv
    })
}

impl CenteredInstance {
    pub fn base(&self) -> &Instance {
        &self.base
    }

    pub fn ell(&self) -> usize {
        self.centers.len()
    }

    pub fn centers(&self) -> &[PointId] {
        &self.centers
    }

    /// The facility each center copies, aligned with [`centers`](Self::centers).
    pub fn sources(&self) -> &[PointId] {
        &self.sources
    }

    /// Position in [`centers`](Self::centers) of the center of base point `v`.
    pub fn center_of(&self, v: PointId) -> usize {
        self.center_of[v.0]
    }

    /// `d(v, s^v)`, the pendant edge length of base point `v`.
    pub fn pendant(&self, v: PointId) -> f64 {
        self.pendant[v.0]
    }

    /// Metric over base points and centers.
    pub fn d_ell(&self) -> &Metric {
        &self.d_ell
    }

    pub fn f_cluster(&self, center: usize) -> &[PointId] {
        &self.f_cluster[center]
    }

    pub fn f_clusters(&self) -> &[Vec<PointId>] {
        &self.f_cluster
    }

    /// Distance between two centers (the original metric between their sources).
    pub fn center_distance(&self, a: usize, b: usize) -> f64 {
        self.base.metric().get(self.sources[a], self.sources[b])
    }

    /// Sub-metric of `d` on the centers, indexed by center position.
    pub fn center_metric(&self) -> Metric {
        self.base.metric().restrict(&self.sources)
    }

    /// The base instance re-evaluated under `d_ℓ` (centers dropped).
    pub fn ell_instance(&self) -> Instance {
        let base_points: Vec<PointId> = (0..self.base.metric().size()).map(PointId).collect();
        self.base
            .with_metric(self.d_ell.restrict(&base_points))
            .expect("same universe as the base instance")
    }

    /// Per-client facts behind the embedding bound, for client `c` served by `f`:
    /// `d(f, s^f) ≤ d(f, c) + d(c, s^c)` and `d(s^c, s^f) ≤ 2·(d(f, c) + d(c, s^c))`.
    pub fn check_client_facts(&self, c: PointId, f: PointId) -> Result<()> {
        let d = self.base.metric();
        let (fc, csc) = (d.get(f, c), self.pendant(c));
        let f_to_center = self.pendant(f);
        let between = self.center_distance(self.center_of(c), self.center_of(f));
        if f_to_center > fc + csc + TOLERANCE {
            return Err(CkmError::Invariant(format!(
                "d(f,s^f) = {f_to_center} exceeds d(f,c) + d(c,s^c) = {} for client {c}, facility {f}",
                fc + csc
            )));
        }
        if between > 2.0 * (fc + csc) + TOLERANCE {
            return Err(CkmError::Invariant(format!(
                "d(s^c,s^f) = {between} exceeds 2(d(f,c) + d(c,s^c)) = {} for client {c}, facility {f}",
                2.0 * (fc + csc)
            )));
        }
        Ok(())
    }

    /// `Σ_c d(c, s^c)`: cost of sending every client to its own center.
    pub fn center_assignment_cost(&self) -> f64 {
        self.base.clients().iter().map(|&c| self.pendant(c)).sum()
    }
}

/// `(cost(φ, d), cost(φ, d_ℓ), 3·cost(φ, d) + 4·psi_cost)`, checked to be
/// non-decreasing within 1e-9.
pub fn embedding_gap(phi: &Assignment, psi_cost: f64, centered: &CenteredInstance) -> Result<(f64, f64, f64)> {
    let lhs = phi.cost(centered.base().metric())?;
    let mid = phi.cost(centered.d_ell())?;
    let rhs = 3.0 * lhs + 4.0 * psi_cost;
    if lhs > mid + TOLERANCE || mid > rhs + TOLERANCE {
        return Err(CkmError::Invariant(format!(
            "embedding bound violated: {lhs} ≤ {mid} ≤ {rhs} does not hold"
        )));
    }
    Ok((lhs, mid, rhs))
}

/// A centered instance with facility pendants rounded up to geometric
/// thresholds of a guessed largest connection distance `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketedInstance {
    centered: CenteredInstance,
    largest: f64,
    epsilon: f64,
    /// Index of the last bucket, `⌈log_{1+ε}(n/ε)⌉` with `n = |C|`.
    last: usize,
    /// Per facility (instance order): its bucket, or `None` when removed.
    bucket_of: Vec<Option<usize>>,
    d_prime: Metric,
}

/// `⌈log_{1+ε}(n/ε)⌉`, clamped at 0.
pub fn last_bucket_index(n_clients: usize, epsilon: f64) -> usize {
    let x = (n_clients.max(1) as f64 / epsilon).ln() / epsilon.ln_1p();
    if x <= 0.0 {
        0
    } else {
        x.ceil() as usize
    }
}

/// Buckets facilities by rounded distance to their center.
///
/// Facilities with `d(s, f) > D` are removed. For `i` below the last index a
/// facility lands in bucket `i` when `d(s, f) ∈ ((1+ε)^{-(i+1)}·D, (1+ε)^{-i}·D]`;
/// everything at or below `(1+ε)^{-last}·D` goes to the last bucket. The
/// rounded pendant of a bucket-`i` facility is `(1+ε)^{-i}·D`.
pub fn build_buckets(centered: &CenteredInstance, largest: f64, epsilon: f64) -> Result<BucketedInstance> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(CkmError::Structural(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(largest >= 0.0) || !largest.is_finite() {
        return Err(CkmError::Structural(format!("D must be finite and nonnegative, got {largest}")));
    }
    let base = centered.base();
    let last = last_bucket_index(base.clients().len(), epsilon);
    let thresholds: Vec<f64> = (0..=last).map(|i| largest / (1.0 + epsilon).powi(i as i32)).collect();

    let mut bucket_of = Vec::with_capacity(base.facilities().len());
    let mut pendant = centered.pendant.clone();
    for f in base.facilities() {
        let dist = centered.pendant(f.id);
        let bucket = if dist > largest {
            None
        } else {
            Some((0..last).find(|&i| dist > thresholds[i + 1]).unwrap_or(last))
        };
        if let Some(i) = bucket {
            pendant[f.id.0] = thresholds[i];
        }
        bucket_of.push(bucket);
    }

    let d_prime = closed_form_metric(base.metric(), &centered.sources, &centered.center_of, &pendant);
    Ok(BucketedInstance { centered: centered.clone(), largest, epsilon, last, bucket_of, d_prime })
}

/// Sorted distinct `d_ℓ(c, f)` over clients and facilities.
pub fn candidate_d_values(centered: &CenteredInstance) -> Vec<f64> {
    let base = centered.base();
    let mut values: Vec<f64> = base
        .clients()
        .iter()
        .flat_map(|&c| base.facilities().iter().map(move |f| centered.d_ell().get(c, f.id)))
        .collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    values
}

/// Facilities sharing a (center, bucket) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketPool {
    pub center: usize,
    pub bucket: usize,
    /// Sorted by capacity descending, then id ascending.
    pub facilities: Vec<PointId>,
}

impl BucketedInstance {
    pub fn centered(&self) -> &CenteredInstance {
        &self.centered
    }

    pub fn largest(&self) -> f64 {
        self.largest
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn bucket_count(&self) -> usize {
        self.last + 1
    }

    pub fn last_bucket(&self) -> usize {
        self.last
    }

    /// Bucket of the `i`-th facility of the base instance.
    pub fn bucket_of(&self, facility_position: usize) -> Option<usize> {
        self.bucket_of[facility_position]
    }

    pub fn bucket_of_id(&self, f: PointId) -> Option<usize> {
        let pos = self.centered.base().facilities().iter().position(|x| x.id == f)?;
        self.bucket_of[pos]
    }

    pub fn is_removed(&self, f: PointId) -> bool {
        self.bucket_of_id(f).is_none()
    }

    /// Rounded metric over base points and centers.
    pub fn d_prime(&self) -> &Metric {
        &self.d_prime
    }

    /// Nonempty (center, bucket) pools in (center, bucket) order.
    pub fn pools(&self) -> Vec<BucketPool> {
        let base = self.centered.base();
        let mut pools: Vec<BucketPool> = Vec::new();
        let mut members: Vec<(usize, usize, u32, PointId)> = base
            .facilities()
            .iter()
            .zip(&self.bucket_of)
            .filter_map(|(f, b)| b.map(|b| (self.centered.center_of(f.id), b, f.capacity, f.id)))
            .collect();
        members.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)).then(b.2.cmp(&a.2)).then(a.3.cmp(&b.3)));
        for (center, bucket, _, id) in members {
            match pools.last_mut() {
                Some(p) if p.center == center && p.bucket == bucket => p.facilities.push(id),
                _ => pools.push(BucketPool { center, bucket, facilities: vec![id] }),
            }
        }
        pools
    }

    /// `(cost(φ, d_ℓ), cost(φ, d'_ℓ), (1+ε)·cost(φ, d_ℓ) + ε·D)`.
    ///
    /// The sandwich holds for assignments that only use surviving facilities;
    /// others are rejected.
    pub fn rounding_bounds(&self, phi: &Assignment) -> Result<(f64, f64, f64)> {
        if let Some(f) = phi.phi.iter().find(|f| self.is_removed(**f)) {
            return Err(CkmError::Structural(format!("facility {f} lies beyond D and was removed")));
        }
        let ell = phi.cost(self.centered.d_ell())?;
        let prime = phi.cost(&self.d_prime)?;
        Ok((ell, prime, (1.0 + self.epsilon) * ell + self.epsilon * self.largest))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::Facility;

    fn p(i: usize) -> PointId {
        PointId(i)
    }

    /// Points on a line; facilities first.
    fn line(fac: &[f64], cli: &[f64]) -> Instance {
        let pos: Vec<f64> = fac.iter().chain(cli).copied().collect();
        let m = Metric::from_fn(pos.len(), |i, j| (pos[i] - pos[j]).abs());
        Instance::from_layout(m, &vec![cli.len() as u32; fac.len()], cli.len(), 1).unwrap()
    }

    #[test]
    fn all_open_keeps_nearest_distance() {
        let inst = line(&[0.0, 4.0, 10.0], &[1.0, 7.5, 9.0]);
        let c = build_centered_from_sources(&inst, &inst.facility_ids()).unwrap();
        let d = inst.metric();
        for &cl in inst.clients() {
            let near = inst.facility_ids().into_iter().min_by(|a, b| d.get(cl, *a).total_cmp(&d.get(cl, *b))).unwrap();
            assert_eq!(c.d_ell().get(cl, near), d.get(cl, near));
            for f in inst.facility_ids() {
                let s = c.sources()[c.center_of(cl)];
                assert_eq!(c.d_ell().get(cl, f), d.get(cl, s) + d.get(s, f));
            }
        }
    }

    #[test]
    fn single_center_is_star() {
        let inst = line(&[0.0, 4.0, 10.0], &[1.0, 7.5, 9.0]);
        let c = build_centered_from_sources(&inst, &[p(1)]).unwrap();
        let d = inst.metric();
        for u in 0..6 {
            for v in 0..6 {
                if u != v {
                    assert_eq!(c.d_ell().get(p(u), p(v)), d.get(p(u), p(1)) + d.get(p(1), p(v)));
                }
            }
        }
        assert_eq!(c.d_ell().get(p(1), c.centers()[0]), 0.0);
    }

    #[test]
    fn clusters_partition_facilities() {
        let inst = line(&[0.0, 4.0, 10.0, 11.0], &[1.0, 7.5]);
        let c = build_centered_from_sources(&inst, &[p(0), p(3)]).unwrap();
        let mut all: Vec<PointId> = c.f_clusters().concat();
        all.sort();
        assert_eq!(all, inst.facility_ids());
        assert_eq!(c.f_cluster(0), &[p(0), p(1)]);
    }

    #[test]
    fn ties_go_to_lowest_center() {
        let inst = line(&[0.0, 2.0], &[1.0]);
        let c = build_centered_from_sources(&inst, &[p(1), p(0)]).unwrap();
        assert_eq!(c.center_of(p(2)), 0);
        assert_eq!(c.sources(), &[p(0), p(1)]);
    }

    #[test]
    fn colocated_clients_close_the_gap() {
        let inst = line(&[0.0, 5.0], &[0.0, 5.0, 5.0]);
        let c = build_centered_from_sources(&inst, &inst.facility_ids()).unwrap();
        let phi = Assignment::new(inst.clients().to_vec(), vec![p(0), p(1), p(1)], &[]);
        let (lhs, mid, rhs) = embedding_gap(&phi, c.center_assignment_cost(), &c).unwrap();
        assert_eq!(lhs, mid);
        assert!(mid <= rhs);
    }

    #[test]
    fn zero_psi_cost_bounds_by_three() {
        let inst = line(&[0.0, 5.0, 9.0], &[0.0, 5.0, 9.0]);
        let c = build_centered_from_sources(&inst, &inst.facility_ids()).unwrap();
        let phi = Assignment::new(inst.clients().to_vec(), vec![p(1), p(2), p(0)], &[]);
        let (lhs, mid, _) = embedding_gap(&phi, 0.0, &c).unwrap();
        assert!(mid <= 3.0 * lhs + 1e-9);
    }

    fn bucket_fixture(pendant: f64) -> CenteredInstance {
        // center source at 0, one more facility at distance `pendant`, eight clients
        let inst = line(&[0.0, pendant], &[0.0; 8]);
        build_centered_from_sources(&inst, &[p(0)]).unwrap()
    }

    #[test]
    fn bucket_interior_and_boundary() {
        let b = build_buckets(&bucket_fixture(5.0), 8.0, 1.0).unwrap();
        assert_eq!(b.bucket_of(1), Some(0));
        assert_eq!(b.d_prime().get(b.centered().centers()[0], p(1)), 8.0);

        let b = build_buckets(&bucket_fixture(8.0), 8.0, 1.0).unwrap();
        assert_eq!(b.bucket_of(1), Some(0));
        assert_eq!(b.d_prime().get(b.centered().centers()[0], p(1)), 8.0);

        let b = build_buckets(&bucket_fixture(4.0), 8.0, 1.0).unwrap();
        assert_eq!(b.bucket_of(1), Some(1));
    }

    #[test]
    fn zero_distance_goes_to_last_bucket() {
        let b = build_buckets(&bucket_fixture(3.0), 8.0, 1.0).unwrap();
        // n = 8, ε = 1: last = ⌈log2 8⌉ = 3
        assert_eq!(b.last_bucket(), 3);
        assert_eq!(b.bucket_of(0), Some(3));
        assert_eq!(b.d_prime().get(b.centered().centers()[0], p(0)), 1.0);

        let inst = line(&[0.0, 0.0, 3.0], &[0.0, 1.0, 2.0, 3.0, 4.0]);
        let c = build_centered_from_sources(&inst, &[p(0)]).unwrap();
        let b = build_buckets(&c, 8.0, 1.0).unwrap();
        // n = 5, ε = 1: last = ⌈log2 5⌉ = 3
        assert_eq!(b.last_bucket(), 3);
        assert_eq!(b.bucket_of(1), Some(3));
        assert_eq!(b.d_prime().get(c.centers()[0], p(1)), 8.0 / 8.0);
        assert_eq!(b.bucket_count(), 4);
    }

    #[test]
    fn far_facilities_removed() {
        let b = build_buckets(&bucket_fixture(9.0), 8.0, 1.0).unwrap();
        assert_eq!(b.bucket_of(1), None);
        assert!(b.pools().iter().all(|pool| !pool.facilities.contains(&p(1))));
    }

    #[test]
    fn negative_d_rejected() {
        assert!(build_buckets(&bucket_fixture(1.0), -1.0, 1.0).is_err());
        assert!(build_buckets(&bucket_fixture(1.0), 1.0, 0.0).is_err());
    }

    #[test]
    fn pools_sorted_by_capacity() {
        let m = Metric::from_fn(4, |i, j| if i == j { 0.0 } else { 1.0 });
        let facilities = vec![
            Facility { id: p(0), capacity: 1 },
            Facility { id: p(1), capacity: 3 },
            Facility { id: p(2), capacity: 3 },
        ];
        let inst = Instance::new(m, facilities, vec![p(3)], 1).unwrap();
        let c = build_centered_from_sources(&inst, &[p(0)]).unwrap();
        let b = build_buckets(&c, 1.0, 0.5).unwrap();
        let pools = b.pools();
        assert_eq!(pools.len(), 2);
        assert_eq!(pools[0].facilities, vec![p(1), p(2)]);
        assert_eq!(pools[1].facilities, vec![p(0)]);
    }

    #[test]
    fn candidate_values() {
        let inst = line(&[0.0, 5.0], &[2.0]);
        let c = build_centered_from_sources(&inst, &inst.facility_ids()).unwrap();
        assert_eq!(candidate_d_values(&c), vec![2.0, 7.0]);

        let inst = line(&[1.0, 1.0], &[1.0, 1.0]);
        let c = build_centered_from_sources(&inst, &[p(0)]).unwrap();
        assert_eq!(candidate_d_values(&c), vec![0.0]);
    }
}
