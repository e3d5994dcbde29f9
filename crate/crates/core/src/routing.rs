//! End-device attachment, hot-potato routing over the border graph, and the
//! modeled latency function.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::asgraph::{AsGraph, AsId};
use crate::bordergraph::{build_border_graph, BorderGraph};
use crate::embedding::{Embedding, LocId};
use crate::error::{Error, Result};
use crate::geo::{great_circle_distance, GeoPoint};

/// Refraction index of optical fiber.
pub const FIBER_REFRACTION_INDEX: f64 = 1.62;
/// Speed of light in vacuum, km/s.
pub const SPEED_OF_LIGHT_KM_S: f64 = 299_792.458;

/// One-way propagation time in milliseconds over `km` of fiber.
pub fn propagation_ms(km: f64, n_f: f64, c_light: f64) -> f64 {
    km * n_f / c_light * 1000.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndDevice {
    pub name: String,
    pub position: GeoPoint,
}

impl EndDevice {
    pub fn new(name: impl Into<String>, position: GeoPoint) -> Self {
        EndDevice {
            name: name.into(),
            position,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Attachment {
    pub location: LocId,
    /// No location was within `h_max`; the globally nearest one was used.
    pub fallback: bool,
}

/// What to do with a device that has no location within `h_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AttachPolicy {
    #[default]
    Nearest,
    Error,
}

impl FromStr for AttachPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(AttachPolicy::Nearest),
            "error" => Ok(AttachPolicy::Error),
            other => Err(Error::param(format!("unknown attach policy `{other}`"))),
        }
    }
}

impl fmt::Display for AttachPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttachPolicy::Nearest => "nearest",
            AttachPolicy::Error => "error",
        })
    }
}

/// Locations within `h_max` km of the device, in id order.
pub fn attachment_candidates(x: &EndDevice, e: &Embedding, h_max: f64) -> Vec<LocId> {
    e.locations()
        .iter()
        .enumerate()
        .filter(|(_, loc)| great_circle_distance(x.position, loc.point) < h_max)
        .map(|(id, _)| id)
        .collect()
}

/// Picks one candidate uniformly at random, or falls back to the nearest location.
pub fn attach<R: Rng + ?Sized>(
    x: &EndDevice,
    e: &Embedding,
    h_max: f64,
    policy: AttachPolicy,
    rng: &mut R,
) -> Result<Attachment> {
    if e.location_count() == 0 {
        return Err(Error::param("embedding has no locations"));
    }
    let candidates = attachment_candidates(x, e, h_max);
    if !candidates.is_empty() {
        return Ok(Attachment {
            location: candidates[rng.gen_range(0..candidates.len())],
            fallback: false,
        });
    }
    if policy == AttachPolicy::Error {
        return Err(Error::NoAttachment(x.name.clone()));
    }
    let mut best = (f64::INFINITY, 0);
    for (id, loc) in e.locations().iter().enumerate() {
        let d = great_circle_distance(x.position, loc.point);
        if d < best.0 {
            best = (d, id);
        }
    }
    Ok(Attachment {
        location: best.1,
        fallback: true,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutePath {
    pub locations: Vec<LocId>,
    pub legs_km: Vec<f64>,
    pub total_km: f64,
    pub as_path: Vec<AsId>,
}

impl RoutePath {
    fn from_locations(e: &Embedding, locations: Vec<LocId>, as_path: Vec<AsId>) -> Self {
        let legs_km: Vec<f64> = locations.windows(2).map(|w| e.distance(w[0], w[1])).collect();
        RoutePath {
            total_km: legs_km.iter().sum(),
            locations,
            legs_km,
            as_path,
        }
    }

    /// AS sequence visited by the location list, consecutive repeats removed.
    pub fn induced_as_path(&self, e: &Embedding) -> Vec<AsId> {
        let mut out: Vec<AsId> = self.locations.iter().map(|&l| e.owner(l)).collect();
        out.dedup();
        out
    }
}

/// Propagation latency of a path in milliseconds.
pub fn path_latency(p: &RoutePath, n_f: f64, c_light: f64) -> f64 {
    propagation_ms(p.total_km, n_f, c_light)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RoutingMode {
    /// Shortest AS path, then each AS hands off at its nearest exit.
    #[default]
    HotPotato,
    /// Shortest AS path, then the shortest location sequence along it.
    DistanceFirst,
}

impl FromStr for RoutingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hot-potato" => Ok(RoutingMode::HotPotato),
            "distance-first" => Ok(RoutingMode::DistanceFirst),
            other => Err(Error::param(format!("unknown routing mode `{other}`"))),
        }
    }
}

impl fmt::Display for RoutingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RoutingMode::HotPotato => "hot-potato",
            RoutingMode::DistanceFirst => "distance-first",
        })
    }
}

/// Nearest location to `from` among `candidates`; ties go to the smaller id.
fn nearest<I: IntoIterator<Item = LocId>>(e: &Embedding, from: LocId, candidates: I) -> Option<LocId> {
    let mut best: Option<(f64, LocId)> = None;
    for c in candidates {
        let d = e.distance(from, c);
        if best.is_none_or(|(bd, bl)| d < bd || (d == bd && c < bl)) {
            best = Some((d, c));
        }
    }
    best.map(|(_, l)| l)
}

fn no_crossing(from: AsId, to: AsId) -> Error {
    Error::Consistency(format!("no border edge between peering ASes {from} and {to}"))
}

/// Hot-potato route along a given AS path.
pub fn hot_potato_along(
    h: &BorderGraph,
    e: &Embedding,
    as_path: &[AsId],
    src: LocId,
    dst: LocId,
) -> Result<RoutePath> {
    if src == dst {
        return Ok(RoutePath::from_locations(e, vec![src], vec![e.owner(src)]));
    }
    let mut locs = vec![src];
    let mut cur = src;
    for hop in as_path.windows(2) {
        let (v, u) = (hop[0], hop[1]);
        let exit = nearest(e, cur, h.exits(v, u).iter().copied()).ok_or_else(|| no_crossing(v, u))?;
        if exit != cur {
            locs.push(exit);
        }
        let entry = nearest(e, exit, h.entries(v, u, exit).map(|c| c.entry))
            .ok_or_else(|| no_crossing(v, u))?;
        locs.push(entry);
        cur = entry;
    }
    if cur != dst {
        locs.push(dst);
    }
    Ok(RoutePath::from_locations(e, locs, as_path.to_vec()))
}

/// Minimum-length route along a given AS path, by dynamic programming over
/// the per-AS entry locations.
pub fn distance_first_along(
    h: &BorderGraph,
    e: &Embedding,
    as_path: &[AsId],
    src: LocId,
    dst: LocId,
) -> Result<RoutePath> {
    if src == dst {
        return Ok(RoutePath::from_locations(e, vec![src], vec![e.owner(src)]));
    }
    // Per stage: (entry location, best cost, index of predecessor entry, exit used).
    struct State {
        loc: LocId,
        cost: f64,
        prev: usize,
        exit: LocId,
    }
    let mut stages: Vec<Vec<State>> = vec![vec![State {
        loc: src,
        cost: 0.0,
        prev: usize::MAX,
        exit: usize::MAX,
    }]];
    for hop in as_path.windows(2) {
        let (v, u) = (hop[0], hop[1]);
        let layer = stages.last().unwrap();
        // Best way to stand at each exit of v: (cost, entry index).
        let exits = h.exits(v, u);
        if exits.is_empty() {
            return Err(no_crossing(v, u));
        }
        let at_exit: Vec<(f64, usize)> = exits
            .iter()
            .map(|&x| {
                let mut best = (f64::INFINITY, usize::MAX);
                for (i, s) in layer.iter().enumerate() {
                    let c = s.cost + e.distance(s.loc, x);
                    if c < best.0 {
                        best = (c, i);
                    }
                }
                best
            })
            .collect();
        let mut next: Vec<State> = Vec::new();
        for c in h.crossings(v, u) {
            let xi = exits.binary_search(&c.exit).unwrap();
            let (base, prev) = at_exit[xi];
            let cost = base + e.distance(c.exit, c.entry);
            match next.iter_mut().find(|s| s.loc == c.entry) {
                Some(s) if cost < s.cost => {
                    s.cost = cost;
                    s.prev = prev;
                    s.exit = c.exit;
                }
                Some(_) => {}
                None => next.push(State {
                    loc: c.entry,
                    cost,
                    prev,
                    exit: c.exit,
                }),
            }
        }
        next.sort_by_key(|s| s.loc);
        stages.push(next);
    }
    let last = stages.last().unwrap();
    let mut best = (f64::INFINITY, 0);
    for (i, s) in last.iter().enumerate() {
        let c = s.cost + e.distance(s.loc, dst);
        if c < best.0 {
            best = (c, i);
        }
    }

    let mut rev = vec![dst];
    let mut idx = best.1;
    for stage in stages.iter().rev() {
        let s = &stage[idx];
        if *rev.last().unwrap() != s.loc {
            rev.push(s.loc);
        }
        if s.prev == usize::MAX {
            break;
        }
        if *rev.last().unwrap() != s.exit {
            rev.push(s.exit);
        }
        idx = s.prev;
    }
    rev.reverse();
    Ok(RoutePath::from_locations(e, rev, as_path.to_vec()))
}

fn route_with(
    g: &AsGraph,
    h: &BorderGraph,
    e: &Embedding,
    src: LocId,
    dst: LocId,
    mode: RoutingMode,
) -> Result<RoutePath> {
    let n = e.location_count();
    if src >= n || dst >= n {
        return Err(Error::param(format!("location id out of range for {n} locations")));
    }
    let as_path = g.shortest_as_path(e.owner(src), e.owner(dst))?;
    match mode {
        RoutingMode::HotPotato => hot_potato_along(h, e, &as_path, src, dst),
        RoutingMode::DistanceFirst => distance_first_along(h, e, &as_path, src, dst),
    }
}

/// Route from `src` to `dst`: shortest AS path, then at every AS the exit nearest
/// to the current location and the entry nearest to that exit.
pub fn hot_potato_route(
    g: &AsGraph,
    h: &BorderGraph,
    e: &Embedding,
    src: LocId,
    dst: LocId,
) -> Result<RoutePath> {
    route_with(g, h, e, src, dst, RoutingMode::HotPotato)
}

/// Shortest location sequence over the same AS path hot-potato routing would use.
pub fn distance_first_route(
    g: &AsGraph,
    h: &BorderGraph,
    e: &Embedding,
    src: LocId,
    dst: LocId,
) -> Result<RoutePath> {
    route_with(g, h, e, src, dst, RoutingMode::DistanceFirst)
}

/// G, its embedding and the border graph built from them.
#[derive(Debug, Clone)]
pub struct Model {
    pub graph: AsGraph,
    pub embedding: Embedding,
    pub border: BorderGraph,
}

impl Model {
    pub fn build(graph: AsGraph, embedding: Embedding, l_max: f64) -> Result<Self> {
        let border = build_border_graph(&graph, &embedding, l_max)?;
        Ok(Model {
            graph,
            embedding,
            border,
        })
    }

    pub fn route(&self, src: LocId, dst: LocId, mode: RoutingMode) -> Result<RoutePath> {
        route_with(&self.graph, &self.border, &self.embedding, src, dst, mode)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoutingParams {
    pub h_max: f64,
    pub n_f: f64,
    pub c_light: f64,
    /// Constant access delay added per endpoint, ms.
    pub offset_ms: f64,
    pub policy: AttachPolicy,
    pub mode: RoutingMode,
}

impl Default for RoutingParams {
    fn default() -> Self {
        RoutingParams {
            h_max: 200.0,
            n_f: FIBER_REFRACTION_INDEX,
            c_light: SPEED_OF_LIGHT_KM_S,
            offset_ms: 0.0,
            policy: AttachPolicy::Nearest,
            mode: RoutingMode::HotPotato,
        }
    }
}

impl RoutingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.h_max >= 0.0) {
            return Err(Error::param(format!("h_max must be >= 0, got {}", self.h_max)));
        }
        if !(self.n_f > 0.0) || !(self.c_light > 0.0) {
            return Err(Error::param("n_f and c must be positive"));
        }
        if !(self.offset_ms >= 0.0) {
            return Err(Error::param("offset must be >= 0"));
        }
        Ok(())
    }
}

/// A model with a fixed set of attached end devices. Attachments are drawn once,
/// each from its own random stream keyed by device index, so they do not depend
/// on query order.
#[derive(Debug, Clone)]
pub struct LatencyModel<'m> {
    model: &'m Model,
    params: RoutingParams,
    devices: Vec<EndDevice>,
    attachments: Vec<Attachment>,
}

impl<'m> LatencyModel<'m> {
    pub fn new(
        model: &'m Model,
        devices: Vec<EndDevice>,
        params: RoutingParams,
        seed: u64,
    ) -> Result<Self> {
        params.validate()?;
        let attachments = devices
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                attach(d, &model.embedding, params.h_max, params.policy, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LatencyModel {
            model,
            params,
            devices,
            attachments,
        })
    }

    pub fn devices(&self) -> &[EndDevice] {
        &self.devices
    }

    pub fn attachments(&self) -> &[Attachment] {
        &self.attachments
    }

    pub fn params(&self) -> &RoutingParams {
        &self.params
    }

    pub fn route(&self, i: usize, j: usize) -> Result<RoutePath> {
        self.model.route(
            self.attachments[i].location,
            self.attachments[j].location,
            self.params.mode,
        )
    }

    fn latency_of(&self, i: usize, j: usize, path: &RoutePath) -> f64 {
        if i == j {
            return 0.0;
        }
        path_latency(path, self.params.n_f, self.params.c_light) + 2.0 * self.params.offset_ms
    }

    /// Modeled latency from device `i` to device `j`, ms.
    pub fn latency(&self, i: usize, j: usize) -> Result<f64> {
        if i == j {
            return Ok(0.0);
        }
        let path = self.route(i, j)?;
        Ok(self.latency_of(i, j, &path))
    }

    /// Row `i` of the latency matrix, reusing one BFS tree for the source AS.
    pub fn latency_row(&self, i: usize) -> Result<Vec<f64>> {
        let e = &self.model.embedding;
        let src = self.attachments[i].location;
        let tree = self.model.graph.bfs(e.owner(src));
        (0..self.devices.len())
            .map(|j| {
                if i == j {
                    return Ok(0.0);
                }
                let dst = self.attachments[j].location;
                let as_path = tree.path_to(e.owner(dst))?;
                let path = match self.params.mode {
                    RoutingMode::HotPotato => {
                        hot_potato_along(&self.model.border, e, &as_path, src, dst)?
                    }
                    RoutingMode::DistanceFirst => {
                        distance_first_along(&self.model.border, e, &as_path, src, dst)?
                    }
                };
                Ok(self.latency_of(i, j, &path))
            })
            .collect()
    }

    /// Full directed latency matrix, row-major. Rows are computed in parallel;
    /// the result does not depend on thread scheduling.
    pub fn latency_matrix(&self) -> Result<Vec<f64>> {
        let rows = (0..self.devices.len())
            .into_par_iter()
            .map(|i| self.latency_row(i))
            .collect::<Result<Vec<_>>>()?;
        Ok(rows.concat())
    }

    /// Writes `lat <device1> <device2> <ms>` for every ordered pair of distinct devices.
    pub fn write_matrix<W: Write>(&self, matrix: &[f64], mut w: W) -> Result<()> {
        let n = self.devices.len();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    writeln!(
                        w,
                        "lat {} {} {}",
                        self.devices[i].name,
                        self.devices[j].name,
                        matrix[i * n + j]
                    )?;
                }
            }
        }
        Ok(())
    }
}
