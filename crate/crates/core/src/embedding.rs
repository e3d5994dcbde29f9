//! Geographic embedding of ASes: location counts, MST compactness and the
//! swap optimizer that shortens links between neighboring ASes.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::asgraph::{AsGraph, AsId};
use crate::error::{Error, Result};
use crate::geo::{great_circle_distance, DensityGrid, GeoPoint};

pub type LocId = usize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    pub owner: AsId,
    pub point: GeoPoint,
}

/// Locations of every AS. Location ids are dense and stable; a swap moves ids
/// between ASes, it never rewrites coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    locations: Vec<Location>,
    per_as: Vec<Vec<LocId>>,
}

impl Embedding {
    /// Builds an embedding from per-AS point lists, numbering locations in AS order.
    pub fn from_points(per_as_points: Vec<Vec<GeoPoint>>) -> Result<Self> {
        let mut locations = Vec::new();
        let mut per_as = Vec::with_capacity(per_as_points.len());
        for (v, pts) in per_as_points.into_iter().enumerate() {
            if pts.is_empty() {
                return Err(Error::param(format!("AS {v} has no location")));
            }
            let ids = pts
                .into_iter()
                .map(|point| {
                    locations.push(Location { owner: v, point });
                    locations.len() - 1
                })
                .collect();
            per_as.push(ids);
        }
        Ok(Embedding { locations, per_as })
    }

    /// Builds an embedding from `(location_id, as_id, point)` records. Ids must
    /// cover `0..len` exactly once and every AS in `0..as_count` needs a location.
    pub fn from_records(as_count: usize, records: &[(LocId, AsId, GeoPoint)]) -> Result<Self> {
        let mut slots: Vec<Option<Location>> = vec![None; records.len()];
        for &(id, owner, point) in records {
            if id >= records.len() {
                return Err(Error::Consistency(format!("location id {id} is not dense")));
            }
            if owner >= as_count {
                return Err(Error::Consistency(format!(
                    "location {id} owned by unknown AS {owner}"
                )));
            }
            if slots[id].replace(Location { owner, point }).is_some() {
                return Err(Error::Consistency(format!("duplicate location id {id}")));
            }
        }
        let locations: Vec<Location> = slots.into_iter().map(Option::unwrap).collect();
        let mut per_as = vec![Vec::new(); as_count];
        for &(id, owner, _) in records {
            per_as[owner].push(id);
        }
        if let Some(v) = per_as.iter().position(Vec::is_empty) {
            return Err(Error::Consistency(format!("AS {v} has no location")));
        }
        Ok(Embedding { locations, per_as })
    }

    pub fn as_count(&self) -> usize {
        self.per_as.len()
    }

    pub fn location_count(&self) -> usize {
        self.locations.len()
    }

    pub fn locations_of(&self, v: AsId) -> &[LocId] {
        &self.per_as[v]
    }

    pub fn points_of(&self, v: AsId) -> Vec<GeoPoint> {
        self.per_as[v].iter().map(|&l| self.locations[l].point).collect()
    }

    /// The AS owning a location.
    pub fn owner(&self, loc: LocId) -> AsId {
        self.locations[loc].owner
    }

    pub fn point(&self, loc: LocId) -> GeoPoint {
        self.locations[loc].point
    }

    pub fn distance(&self, a: LocId, b: LocId) -> f64 {
        great_circle_distance(self.locations[a].point, self.locations[b].point)
    }

    pub fn locations(&self) -> &[Location] {
        &self.locations
    }

    /// Exchanges AS ownership of two locations, keeping each one at the list
    /// position the other occupied.
    pub fn swap_owners(&mut self, a: LocId, b: LocId) {
        let (va, vb) = (self.owner(a), self.owner(b));
        if va == vb {
            return;
        }
        let ia = self.per_as[va].iter().position(|&l| l == a).unwrap();
        let ib = self.per_as[vb].iter().position(|&l| l == b).unwrap();
        self.per_as[va][ia] = b;
        self.per_as[vb][ib] = a;
        self.locations[a].owner = vb;
        self.locations[b].owner = va;
    }

    pub fn compactness(&self, v: AsId) -> f64 {
        compactness_of(&self.points_of(v))
    }

    /// Checks that the embedding covers exactly the ASes of `g`.
    pub fn check_covers(&self, g: &AsGraph) -> Result<()> {
        if self.as_count() != g.node_count() {
            return Err(Error::Consistency(format!(
                "embedding has {} ASes, graph has {}",
                self.as_count(),
                g.node_count()
            )));
        }
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R, as_count: usize) -> Result<Self> {
        let mut records = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 5 || toks[0] != "loc" {
                return Err(Error::format(lineno, format!("malformed line `{line}`")));
            }
            let int = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| Error::format(lineno, format!("bad id `{s}`")))
            };
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::format(lineno, format!("bad coordinate `{s}`")))
            };
            let point = GeoPoint::new(num(toks[3])?, num(toks[4])?)
                .map_err(|e| Error::format(lineno, e.to_string()))?;
            records.push((int(toks[1])?, int(toks[2])?, point));
        }
        Embedding::from_records(as_count, &records)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for (id, loc) in self.locations.iter().enumerate() {
            writeln!(w, "loc {id} {} {}", loc.owner, loc.point)?;
        }
        Ok(())
    }
}

/// Knobs of the initial placement and the optimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingParams {
    /// Neighbor-count threshold below which an AS keeps a single location.
    pub n: usize,
    /// Location count of the highest-degree AS.
    pub max_locations: usize,
    /// Upper bound on compactness, km.
    pub c_max: f64,
    /// Consecutive unchanged iterations before the optimizer stops.
    pub patience: usize,
}

impl Default for EmbeddingParams {
    fn default() -> Self {
        EmbeddingParams {
            n: 1,
            max_locations: 10,
            c_max: 1000.0,
            patience: 5000,
        }
    }
}

impl EmbeddingParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_locations < 1 {
            return Err(Error::param("N (max locations) must be >= 1"));
        }
        if self.patience < 1 {
            return Err(Error::param("k (patience) must be >= 1"));
        }
        if !(self.c_max > 0.0) {
            return Err(Error::param(format!("c_max must be > 0, got {}", self.c_max)));
        }
        Ok(())
    }
}

/// `max(ceil((deg - n) / max_deg * N), 1)`, evaluated exactly in integers.
pub fn location_count(deg: usize, max_deg: usize, n: usize, max_locations: usize) -> usize {
    assert!(max_deg >= 1, "max_deg must be >= 1");
    if deg <= n {
        return 1;
    }
    let num = (deg - n) as u128 * max_locations as u128;
    let count = num.div_ceil(max_deg as u128);
    (count as usize).max(1)
}

/// Average edge length of the minimum spanning tree over the complete
/// great-circle graph of `points`. A single point has compactness 0.
pub fn compactness(points: &[GeoPoint]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::param("compactness of an empty location set"));
    }
    Ok(compactness_of(points))
}

fn compactness_of(points: &[GeoPoint]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    mst_weight(points) / (points.len() - 1) as f64
}

/// Dense Prim, O(n^2).
pub fn mst_weight(points: &[GeoPoint]) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    best[0] = 0.0;
    let mut total = 0.0;
    for _ in 0..n {
        let mut u = usize::MAX;
        let mut bu = f64::INFINITY;
        for i in 0..n {
            if !in_tree[i] && (u == usize::MAX || best[i] < bu) {
                u = i;
                bu = best[i];
            }
        }
        in_tree[u] = true;
        total += bu;
        for i in 0..n {
            if !in_tree[i] {
                let d = great_circle_distance(points[u], points[i]);
                if d < best[i] {
                    best[i] = d;
                }
            }
        }
    }
    total
}

/// Draws `location_count` points per AS from the density grid.
pub fn initial_embedding(
    g: &AsGraph,
    grid: &DensityGrid,
    params: &EmbeddingParams,
    seed: u64,
) -> Result<Embedding> {
    params.validate()?;
    if g.node_count() == 0 {
        return Err(Error::param("graph has no ASes"));
    }
    let sampler = grid.sampler()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_deg = g.max_degree().max(1);
    let per_as = (0..g.node_count())
        .map(|v| {
            let count = location_count(g.degree(v), max_deg, params.n, params.max_locations);
            (0..count).map(|_| sampler.sample(&mut rng)).collect()
        })
        .collect();
    Embedding::from_points(per_as)
}

fn min_distance(e: &Embedding, a: &[LocId], b: &[LocId]) -> (f64, LocId, LocId) {
    let mut best = (f64::INFINITY, usize::MAX, usize::MAX);
    for &x in a {
        for &y in b {
            let d = e.distance(x, y);
            if d < best.0 {
                best = (d, x, y);
            }
        }
    }
    best
}

/// Sum over the neighbors of `v` of the squared shortest distance between any
/// location of `v` and any location of the neighbor, in km^2.
pub fn neighbor_cost(g: &AsGraph, e: &Embedding, v: AsId) -> f64 {
    g.neighbors(v)
        .iter()
        .map(|&u| {
            let d = min_distance(e, e.locations_of(v), e.locations_of(u)).0;
            d * d
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OptimizeStats {
    pub iterations: usize,
    pub accepted_swaps: usize,
    /// Draws where both locations belonged to the same AS.
    pub same_as_draws: usize,
    /// Improving swaps rejected because they broke the compactness bound.
    pub compactness_rejections: usize,
    /// Iterations since the last accepted swap when the optimizer stopped.
    pub trailing_unchanged: usize,
    pub max_compactness: f64,
    pub compactness_violations: usize,
}

/// Reported to the observer for every accepted swap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwapEvent {
    pub iteration: usize,
    pub locations: (LocId, LocId),
    /// ASes that owned `locations.0` and `locations.1` before the swap.
    pub ases: (AsId, AsId),
    pub cost_before: f64,
    pub cost_after: f64,
}

/// Cached shortest link per G edge.
#[derive(Debug, Clone, Copy)]
struct Link {
    dist: f64,
    a: LocId,
    b: LocId,
}

struct Optimizer<'a> {
    g: &'a AsGraph,
    e: Embedding,
    /// `edge_ids[v][i]` is the edge index of `g.neighbors(v)[i]`.
    edge_ids: Vec<Vec<usize>>,
    links: Vec<Link>,
}

impl<'a> Optimizer<'a> {
    fn new(g: &'a AsGraph, e: Embedding) -> Self {
        let mut edge_ids: Vec<Vec<usize>> = (0..g.node_count())
            .map(|v| vec![usize::MAX; g.degree(v)])
            .collect();
        let mut links = Vec::with_capacity(g.edge_count());
        for (u, v) in g.edges() {
            let (dist, a, b) = min_distance(&e, e.locations_of(u), e.locations_of(v));
            let id = links.len();
            links.push(Link { dist, a, b });
            let iu = g.neighbors(u).binary_search(&v).unwrap();
            let iv = g.neighbors(v).binary_search(&u).unwrap();
            edge_ids[u][iu] = id;
            edge_ids[v][iv] = id;
        }
        Optimizer {
            g,
            e,
            edge_ids,
            links,
        }
    }

    fn cost(&self, v: AsId) -> f64 {
        self.edge_ids[v]
            .iter()
            .map(|&id| self.links[id].dist * self.links[id].dist)
            .sum()
    }

    /// Cost of `v` if it gave up `lost` and gained `gained`, given the new
    /// location lists of `v` and of the swap partner `partner`. Returns the
    /// cost and the updated links for `v`'s edges.
    fn tentative_cost(
        &self,
        v: AsId,
        lost: LocId,
        gained: LocId,
        v_locs: &[LocId],
        partner: AsId,
        partner_locs: &[LocId],
        updates: &mut Vec<(usize, Link)>,
    ) -> f64 {
        let mut total = 0.0;
        for (i, &u) in self.g.neighbors(v).iter().enumerate() {
            let id = self.edge_ids[v][i];
            let old = self.links[id];
            let link = if u == partner {
                let (dist, a, b) = min_distance(&self.e, v_locs, partner_locs);
                Link { dist, a, b }
            } else if old.a != lost && old.b != lost {
                // The old best pair survives; only pairs through `gained` are new.
                let (dist, a, b) = min_distance(&self.e, &[gained], self.e.locations_of(u));
                if dist < old.dist {
                    Link { dist, a, b }
                } else {
                    old
                }
            } else {
                let (dist, a, b) = min_distance(&self.e, v_locs, self.e.locations_of(u));
                Link { dist, a, b }
            };
            total += link.dist * link.dist;
            updates.push((id, link));
        }
        total
    }
}

/// Greedy swap optimizer. Each iteration draws two locations uniformly; if they
/// belong to different ASes it tentatively exchanges them and keeps the exchange
/// only if both ASes stay under `c_max` and their combined neighbor cost strictly
/// drops. Stops once `patience` consecutive iterations left the embedding unchanged.
pub fn optimize_embedding(
    g: &AsGraph,
    e: Embedding,
    params: &EmbeddingParams,
    seed: u64,
) -> Result<(Embedding, OptimizeStats)> {
    optimize_embedding_with(g, e, params, seed, |_, _| {})
}

/// As [`optimize_embedding`], calling `observer` after every accepted swap with
/// the event and the updated embedding.
pub fn optimize_embedding_with<F>(
    g: &AsGraph,
    e: Embedding,
    params: &EmbeddingParams,
    seed: u64,
    mut observer: F,
) -> Result<(Embedding, OptimizeStats)>
where
    F: FnMut(&SwapEvent, &Embedding),
{
    params.validate()?;
    e.check_covers(g)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut opt = Optimizer::new(g, e);
    let total = opt.e.location_count();
    let mut stats = OptimizeStats::default();
    let mut unchanged = 0;
    let mut updates = Vec::new();

    while unchanged < params.patience {
        stats.iterations += 1;
        unchanged += 1;
        let l1 = rng.gen_range(0..total);
        let l2 = rng.gen_range(0..total);
        let (v1, v2) = (opt.e.owner(l1), opt.e.owner(l2));
        if v1 == v2 {
            stats.same_as_draws += 1;
            continue;
        }

        let swapped = |locs: &[LocId], out: LocId, inn: LocId| -> Vec<LocId> {
            locs.iter().map(|&l| if l == out { inn } else { l }).collect()
        };
        let new1 = swapped(opt.e.locations_of(v1), l1, l2);
        let new2 = swapped(opt.e.locations_of(v2), l2, l1);

        let before = opt.cost(v1) + opt.cost(v2);
        updates.clear();
        let after = opt.tentative_cost(v1, l1, l2, &new1, v2, &new2, &mut updates)
            + opt.tentative_cost(v2, l2, l1, &new2, v1, &new1, &mut updates);
        if !(after < before) {
            continue;
        }

        let pts = |locs: &[LocId]| -> Vec<GeoPoint> { locs.iter().map(|&l| opt.e.point(l)).collect() };
        if !(compactness_of(&pts(&new1)) < params.c_max && compactness_of(&pts(&new2)) < params.c_max)
        {
            stats.compactness_rejections += 1;
            continue;
        }

        opt.e.swap_owners(l1, l2);
        for &(id, link) in &updates {
            opt.links[id] = link;
        }
        unchanged = 0;
        stats.accepted_swaps += 1;
        let event = SwapEvent {
            iteration: stats.iterations,
            locations: (l1, l2),
            ases: (v1, v2),
            cost_before: before,
            cost_after: after,
        };
        observer(&event, &opt.e);
    }

    stats.trailing_unchanged = unchanged;
    let e = opt.e;
    for v in 0..e.as_count() {
        let c = e.compactness(v);
        stats.max_compactness = stats.max_compactness.max(c);
        if !(c < params.c_max) {
            stats.compactness_violations += 1;
        }
    }
    Ok((e, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use crate::geo::EARTH_RADIUS_KM;

    fn pt(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    /// Point on the equator `km` kilometers east of 0°.
    fn eq(km: f64) -> GeoPoint {
        pt(0.0, (km / EARTH_RADIUS_KM).to_degrees())
    }

    fn chain(n: usize) -> AsGraph {
        let mut g = AsGraph::new(n);
        for i in 1..n {
            g.add_edge(i - 1, i).unwrap();
        }
        g
    }

    #[test]
    fn location_count_formula() {
        assert_eq!(location_count(5, 10, 5, 7), 1);
        assert_eq!(location_count(100, 100, 0, 10), 10);
        assert_eq!(location_count(1, 100, 50, 36), 1);
        // (60 - 50) / 100 * 36 = 3.6 -> 4
        assert_eq!(location_count(60, 100, 50, 36), 4);
        // King-fit scale: (3 - 1) / 900 * 78000 = 173.33 -> 174
        assert_eq!(location_count(3, 900, 1, 78000), 174);
        let counts: Vec<usize> = (0..=30).map(|d| location_count(d, 30, 4, 9)).collect();
        assert!(counts.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn compactness_cases() {
        assert_abs_diff_eq!(compactness(&[eq(0.0), eq(500.0)]).unwrap(), 500.0, epsilon = 1e-9);
        assert_eq!(compactness(&[pt(3.0, 4.0)]).unwrap(), 0.0);
        assert!(compactness(&[]).is_err());
        // Collinear on the equator with equal gaps D: MST is both short edges.
        let d = eq(0.0).distance_km(&pt(0.0, 0.9));
        let c = compactness(&[pt(0.0, 0.0), pt(0.0, 0.9), pt(0.0, 1.8)]).unwrap();
        assert_abs_diff_eq!(c, d, epsilon = 1e-9);
    }

    #[test]
    fn initial_counts_follow_degree() {
        let mut star = AsGraph::new(11);
        for leaf in 1..11 {
            star.add_edge(0, leaf).unwrap();
        }
        let grid = DensityGrid::uniform_world(18, 36).unwrap();
        let params = EmbeddingParams {
            n: 0,
            max_locations: 5,
            ..Default::default()
        };
        let e = initial_embedding(&star, &grid, &params, 1).unwrap();
        assert_eq!(e.locations_of(0).len(), 5);
        for leaf in 1..11 {
            // ceil(1 / 10 * 5) = 1
            assert_eq!(e.locations_of(leaf).len(), 1);
        }
        assert_eq!(e, initial_embedding(&star, &grid, &params, 1).unwrap());

        let k2 = chain(2);
        let params = EmbeddingParams {
            max_locations: 1,
            ..Default::default()
        };
        let e = initial_embedding(&k2, &grid, &params, 3).unwrap();
        assert_eq!(e.location_count(), 2);
    }

    #[test]
    fn neighbor_cost_cases() {
        let lonely = AsGraph::new(1);
        let e = Embedding::from_points(vec![vec![eq(0.0)]]).unwrap();
        assert_eq!(neighbor_cost(&lonely, &e, 0), 0.0);

        let k2 = chain(2);
        let e = Embedding::from_points(vec![vec![eq(0.0)], vec![eq(100.0)]]).unwrap();
        assert_abs_diff_eq!(neighbor_cost(&k2, &e, 0), 10_000.0, epsilon = 1e-6);
        assert_abs_diff_eq!(neighbor_cost(&k2, &e, 1), 10_000.0, epsilon = 1e-6);

        let e = Embedding::from_points(vec![vec![eq(10.0), eq(800.0)], vec![eq(0.0)]]).unwrap();
        assert_abs_diff_eq!(neighbor_cost(&k2, &e, 0), 100.0, epsilon = 1e-6);
    }

    #[test]
    fn optimal_two_as_instance_stops_after_patience() {
        let k2 = chain(2);
        let e = Embedding::from_points(vec![vec![eq(0.0)], vec![eq(100.0)]]).unwrap();
        let params = EmbeddingParams {
            patience: 250,
            ..Default::default()
        };
        let (out, stats) = optimize_embedding(&k2, e.clone(), &params, 4).unwrap();
        assert_eq!(out, e);
        assert_eq!(stats.accepted_swaps, 0);
        assert_eq!(stats.iterations, 250);
        assert_eq!(stats.trailing_unchanged, 250);
    }

    #[test]
    fn misplaced_chain_gets_fixed() {
        // A-B-C-D along the equator, with B parked next to D and C next to A.
        let g = chain(4);
        let e = Embedding::from_points(vec![
            vec![eq(0.0)],
            vec![eq(3100.0)],
            vec![eq(100.0)],
            vec![eq(3000.0)],
        ])
        .unwrap();
        let before: f64 = (0..4).map(|v| neighbor_cost(&g, &e, v)).sum();
        let params = EmbeddingParams {
            c_max: 5000.0,
            patience: 500,
            ..Default::default()
        };
        let mut events = Vec::new();
        let (out, stats) =
            optimize_embedding_with(&g, e, &params, 8, |ev, _| events.push(*ev)).unwrap();
        let after: f64 = (0..4).map(|v| neighbor_cost(&g, &out, v)).sum();
        assert!(stats.accepted_swaps >= 1);
        assert!(after < before);
        assert!(events.iter().all(|ev| ev.cost_after < ev.cost_before));
        // Every link shrinks to the sorted-order layout 100 / 2900 / 100 km.
        let optimum = 2.0 * (100f64.powi(2) + 2900f64.powi(2) + 100f64.powi(2));
        assert!((after - optimum).abs() < 1e-3, "{after} vs {optimum}");
    }

    #[test]
    fn compactness_bound_blocks_swaps() {
        // AS 0 owns two nearby points. Trading either of them for AS 1's far point
        // would shorten the 0-1 link but spread AS 0 beyond c_max.
        let g = chain(2);
        let e = Embedding::from_points(vec![vec![eq(0.0), eq(10.0)], vec![eq(4100.0)]]).unwrap();
        let params = EmbeddingParams {
            c_max: 500.0,
            patience: 300,
            ..Default::default()
        };
        let (out, stats) = optimize_embedding(&g, e.clone(), &params, 2).unwrap();
        assert_eq!(out, e);
        assert!(stats.compactness_rejections > 0);
        assert_eq!(stats.compactness_violations, 0);
    }

    #[test]
    fn file_round_trip() {
        let e = Embedding::from_points(vec![vec![eq(0.0), pt(45.5, -73.25)], vec![pt(-33.0, 151.0)]])
            .unwrap();
        let mut buf = Vec::new();
        e.write(&mut buf).unwrap();
        assert_eq!(Embedding::read(buf.as_slice(), 2).unwrap(), e);
        assert!(matches!(
            Embedding::read("loc 0 0 1 2\nloc 0 1 1 2\n".as_bytes(), 2),
            Err(Error::Consistency(_))
        ));
        assert!(matches!(
            Embedding::read("loc 0 0 100 2\n".as_bytes(), 1),
            Err(Error::Format { line: 1, .. })
        ));
    }
}
