//! Border-router graph: locations joined inside each AS and across peerings.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};

use crate::asgraph::{AsGraph, AsId};
use crate::embedding::{Embedding, LocId};
use crate::error::{Error, Result};
use crate::geo::EARTH_RADIUS_KM;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeKind {
    Intra,
    /// Peering link shorter than `l_max`.
    Inter,
    /// Peering link added between the closest pair because no pair was within `l_max`.
    Fallback,
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeKind::Intra => "intra",
            EdgeKind::Inter => "inter",
            EdgeKind::Fallback => "fallback",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BorderEdge {
    pub a: LocId,
    pub b: LocId,
    pub kind: EdgeKind,
    pub length_km: f64,
}

/// A crossing from a location of one AS into a location of a neighboring AS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub exit: LocId,
    pub entry: LocId,
    pub length_km: f64,
}

/// Graph over border-router locations. Intra-AS edges form a complete graph per
/// AS and are kept implicit (their length is the great-circle distance); only
/// peering edges are stored, indexed by ordered AS pair.
#[derive(Debug, Clone)]
pub struct BorderGraph {
    l_max: f64,
    inter: Vec<BorderEdge>,
    /// `(v, u)` -> crossings out of `v` into `u`, sorted by (exit, entry).
    crossings: HashMap<(AsId, AsId), Vec<Crossing>>,
    /// `(v, u)` -> distinct exit locations of `v` toward `u`, sorted.
    exits: HashMap<(AsId, AsId), Vec<LocId>>,
    intra_counts: Vec<usize>,
}

impl BorderGraph {
    pub fn l_max(&self) -> f64 {
        self.l_max
    }

    /// Peering edges (inter and fallback), ordered by AS pair then location pair.
    pub fn inter_edges(&self) -> &[BorderEdge] {
        &self.inter
    }

    pub fn intra_edge_count(&self) -> usize {
        self.intra_counts.iter().map(|n| n * n.saturating_sub(1) / 2).sum()
    }

    /// All intra-AS edges, generated on the fly.
    pub fn intra_edges<'a>(&'a self, e: &'a Embedding) -> impl Iterator<Item = BorderEdge> + 'a {
        (0..e.as_count()).flat_map(move |v| {
            let locs = e.locations_of(v);
            (0..locs.len()).flat_map(move |i| {
                (i + 1..locs.len()).map(move |j| {
                    let (a, b) = (locs[i].min(locs[j]), locs[i].max(locs[j]));
                    BorderEdge {
                        a,
                        b,
                        kind: EdgeKind::Intra,
                        length_km: e.distance(a, b),
                    }
                })
            })
        })
    }

    pub fn fallback_count(&self) -> usize {
        self.inter.iter().filter(|e| e.kind == EdgeKind::Fallback).count()
    }

    pub fn crossings(&self, from: AsId, to: AsId) -> &[Crossing] {
        self.crossings.get(&(from, to)).map_or(&[], Vec::as_slice)
    }

    /// Locations of `from` with a peering edge into `to`.
    pub fn exits(&self, from: AsId, to: AsId) -> &[LocId] {
        self.exits.get(&(from, to)).map_or(&[], Vec::as_slice)
    }

    /// Locations of `to` adjacent to `exit` (which must belong to `from`).
    pub fn entries(&self, from: AsId, to: AsId, exit: LocId) -> impl Iterator<Item = &Crossing> {
        let cs = self.crossings(from, to);
        let start = cs.partition_point(|c| c.exit < exit);
        cs[start..].iter().take_while(move |c| c.exit == exit)
    }

    pub fn has_edge(&self, e: &Embedding, a: LocId, b: LocId) -> bool {
        let (va, vb) = (e.owner(a), e.owner(b));
        if va == vb {
            return a != b;
        }
        self.entries(va, vb, a).any(|c| c.entry == b)
    }

    fn from_inter(e: &Embedding, l_max: f64, inter: Vec<BorderEdge>) -> Self {
        let mut crossings: HashMap<(AsId, AsId), Vec<Crossing>> = HashMap::new();
        for edge in &inter {
            let (va, vb) = (e.owner(edge.a), e.owner(edge.b));
            crossings.entry((va, vb)).or_default().push(Crossing {
                exit: edge.a,
                entry: edge.b,
                length_km: edge.length_km,
            });
            crossings.entry((vb, va)).or_default().push(Crossing {
                exit: edge.b,
                entry: edge.a,
                length_km: edge.length_km,
            });
        }
        let mut exits = HashMap::with_capacity(crossings.len());
        for (key, list) in crossings.iter_mut() {
            list.sort_by_key(|c| (c.exit, c.entry));
            let mut ex: Vec<LocId> = list.iter().map(|c| c.exit).collect();
            ex.dedup();
            exits.insert(*key, ex);
        }
        BorderGraph {
            l_max,
            inter,
            crossings,
            exits,
            intra_counts: (0..e.as_count()).map(|v| e.locations_of(v).len()).collect(),
        }
    }

    /// Reads peering edges from the `hedge` text format. `intra` lines are checked
    /// against the embedding and otherwise ignored, since intra edges are implicit.
    pub fn read<R: BufRead>(reader: R, g: &AsGraph, e: &Embedding, l_max: f64) -> Result<Self> {
        e.check_covers(g)?;
        let mut inter = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 5 || toks[0] != "hedge" {
                return Err(Error::format(lineno, format!("malformed line `{line}`")));
            }
            let loc = |s: &str| {
                s.parse::<usize>()
                    .ok()
                    .filter(|&l| l < e.location_count())
                    .ok_or_else(|| Error::format(lineno, format!("bad location id `{s}`")))
            };
            let (a, b) = (loc(toks[1])?, loc(toks[2])?);
            let length_km: f64 = toks[4]
                .parse()
                .map_err(|_| Error::format(lineno, format!("bad length `{}`", toks[4])))?;
            let (va, vb) = (e.owner(a), e.owner(b));
            let kind = match toks[3] {
                "intra" => {
                    if va != vb {
                        return Err(Error::format(lineno, "intra edge across ASes"));
                    }
                    continue;
                }
                "inter" => EdgeKind::Inter,
                "fallback" => EdgeKind::Fallback,
                other => return Err(Error::format(lineno, format!("unknown edge kind `{other}`"))),
            };
            if va == vb || !g.has_edge(va, vb) {
                return Err(Error::format(
                    lineno,
                    format!("peering edge between non-adjacent ASes {va} and {vb}"),
                ));
            }
            let (a, b) = if va < vb { (a, b) } else { (b, a) };
            inter.push(BorderEdge {
                a,
                b,
                kind,
                length_km,
            });
        }
        Ok(BorderGraph::from_inter(e, l_max, inter))
    }

    /// Writes `hedge <loc> <loc> <kind> <length_km>` lines; intra edges only when asked.
    pub fn write<W: Write>(&self, mut w: W, e: &Embedding, include_intra: bool) -> Result<()> {
        if include_intra {
            for edge in self.intra_edges(e) {
                writeln!(w, "hedge {} {} {} {}", edge.a, edge.b, edge.kind, edge.length_km)?;
            }
        }
        for edge in &self.inter {
            writeln!(w, "hedge {} {} {} {}", edge.a, edge.b, edge.kind, edge.length_km)?;
        }
        Ok(())
    }
}

/// Locations of one AS sorted by latitude, for range queries.
fn by_latitude(e: &Embedding, v: AsId) -> Vec<(f64, LocId)> {
    let mut locs: Vec<(f64, LocId)> = e
        .locations_of(v)
        .iter()
        .map(|&l| (e.point(l).lat_deg, l))
        .collect();
    locs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    locs
}

/// Joins the locations of peering ASes. For each edge `(u, v)` of `g` (with
/// `u < v`), every location pair closer than `l_max` gets an `Inter` edge; if no
/// pair qualifies, the closest pair gets a `Fallback` edge (ties go to the
/// smallest `(loc_u, loc_v)`).
pub fn build_border_graph(g: &AsGraph, e: &Embedding, l_max: f64) -> Result<BorderGraph> {
    e.check_covers(g)?;
    if !(l_max >= 0.0) {
        return Err(Error::param(format!("l_max must be >= 0, got {l_max}")));
    }
    let sorted: Vec<Vec<(f64, LocId)>> = (0..e.as_count()).map(|v| by_latitude(e, v)).collect();
    // Points closer than l_max differ in latitude by less than this many degrees.
    let lat_window = (l_max / EARTH_RADIUS_KM).to_degrees() * (1.0 + 1e-9) + 1e-12;

    let mut inter = Vec::new();
    let mut pairs = Vec::new();
    for (u, v) in g.edges() {
        pairs.clear();
        let (small, large, flipped) = if sorted[u].len() <= sorted[v].len() {
            (&sorted[u], &sorted[v], false)
        } else {
            (&sorted[v], &sorted[u], true)
        };
        for &(lat, x) in small {
            let lo = large.partition_point(|p| p.0 < lat - lat_window);
            for &(lat_y, y) in &large[lo..] {
                if lat_y > lat + lat_window {
                    break;
                }
                let d = e.distance(x, y);
                if d < l_max {
                    let (a, b) = if flipped { (y, x) } else { (x, y) };
                    pairs.push((a, b, d));
                }
            }
        }
        if pairs.is_empty() {
            let mut best = (f64::INFINITY, usize::MAX, usize::MAX);
            for &a in e.locations_of(u) {
                for &b in e.locations_of(v) {
                    let d = e.distance(a, b);
                    if d < best.0 || (d == best.0 && (a, b) < (best.1, best.2)) {
                        best = (d, a, b);
                    }
                }
            }
            inter.push(BorderEdge {
                a: best.1,
                b: best.2,
                kind: EdgeKind::Fallback,
                length_km: best.0,
            });
        } else {
            pairs.sort_by_key(|p| (p.0, p.1));
            inter.extend(pairs.iter().map(|&(a, b, length_km)| BorderEdge {
                a,
                b,
                kind: EdgeKind::Inter,
                length_km,
            }));
        }
    }
    Ok(BorderGraph::from_inter(e, l_max, inter))
}
