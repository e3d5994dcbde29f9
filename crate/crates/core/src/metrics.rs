//! Measured-latency datasets and the statistics used to compare them with the
//! model: ECDF, two-sample KS distance, TIV severity and the distance/latency audit.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geo::{great_circle_distance, GeoPoint};
use crate::routing::{propagation_ms, EndDevice};

#[derive(Debug, Clone, PartialEq)]
pub struct Host {
    pub name: String,
    pub point: Option<GeoPoint>,
}

/// Partial pairwise latency table. Pairs not listed are undefined.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LatencyDataset {
    hosts: Vec<Host>,
    index: HashMap<String, usize>,
    rtt: BTreeMap<(usize, usize), f64>,
}

impl LatencyDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_host(&mut self, name: impl Into<String>, point: Option<GeoPoint>) -> Result<usize> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::param(format!("duplicate host `{name}`")));
        }
        self.hosts.push(Host {
            name: name.clone(),
            point,
        });
        self.index.insert(name, self.hosts.len() - 1);
        Ok(self.hosts.len() - 1)
    }

    pub fn set_latency(&mut self, a: usize, b: usize, ms: f64) -> Result<()> {
        if a >= self.hosts.len() || b >= self.hosts.len() {
            return Err(Error::param("host index out of range"));
        }
        if !(ms >= 0.0) || !ms.is_finite() {
            return Err(Error::param(format!("latency must be finite and >= 0, got {ms}")));
        }
        self.rtt.insert((a, b), ms);
        Ok(())
    }

    pub fn hosts(&self) -> &[Host] {
        &self.hosts
    }

    pub fn host_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.hosts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hosts.is_empty()
    }

    /// Defined entries `(a, b, ms)` sorted by host index pair.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rtt.iter().map(|(&(a, b), &ms)| (a, b, ms))
    }

    pub fn entry_count(&self) -> usize {
        self.rtt.len()
    }

    /// Measured latency from `a` to `b`, or `None` when the pair was not measured.
    pub fn empirical_latency(&self, a: usize, b: usize) -> Option<f64> {
        self.rtt.get(&(a, b)).copied()
    }

    /// Dense matrix view. With `symmetric_fallback`, a pair measured in only one
    /// direction is used for both.
    pub fn to_matrix(&self, symmetric_fallback: bool) -> LatencyMatrix {
        let mut m = LatencyMatrix::undefined(self.hosts.len());
        for (&(a, b), &ms) in &self.rtt {
            m.set(a, b, ms);
        }
        if symmetric_fallback {
            for (&(a, b), &ms) in &self.rtt {
                if !self.rtt.contains_key(&(b, a)) {
                    m.set(b, a, ms);
                }
            }
        }
        m
    }

    /// End devices at the host coordinates. Fails naming every host without coordinates.
    pub fn devices(&self) -> Result<Vec<EndDevice>> {
        let missing: Vec<&str> = self
            .hosts
            .iter()
            .filter(|h| h.point.is_none())
            .map(|h| h.name.as_str())
            .collect();
        if !missing.is_empty() {
            return Err(Error::param(format!(
                "hosts without coordinates: {}",
                missing.join(", ")
            )));
        }
        Ok(self
            .hosts
            .iter()
            .map(|h| EndDevice::new(h.name.clone(), h.point.unwrap()))
            .collect())
    }

    /// Parses `host <id> <lat> <lon>` (or `host <id> - -`) and `rtt <id1> <id2> <ms>` lines.
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut ds = LatencyDataset::new();
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::format(lineno, format!("bad number `{s}`")))
            };
            let wrap = |e: Error| match e {
                Error::Parameter(msg) => Error::format(lineno, msg),
                other => other,
            };
            match toks.as_slice() {
                ["host", name, "-", "-"] => {
                    ds.add_host(*name, None).map_err(wrap)?;
                }
                ["host", name, lat, lon] => {
                    let p = GeoPoint::new(num(lat)?, num(lon)?).map_err(wrap)?;
                    ds.add_host(*name, Some(p)).map_err(wrap)?;
                }
                ["rtt", a, b, ms] => {
                    let host = |s: &str| {
                        ds.host_index(s)
                            .ok_or_else(|| Error::format(lineno, format!("unknown host `{s}`")))
                    };
                    let (a, b) = (host(a)?, host(b)?);
                    if ds.rtt.contains_key(&(a, b)) {
                        return Err(Error::format(lineno, "duplicate rtt entry"));
                    }
                    ds.set_latency(a, b, num(ms)?).map_err(wrap)?;
                }
                _ => return Err(Error::format(lineno, format!("malformed line `{line}`"))),
            }
        }
        Ok(ds)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for h in &self.hosts {
            match h.point {
                Some(p) => writeln!(w, "host {} {}", h.name, p)?,
                None => writeln!(w, "host {} - -", h.name)?,
            }
        }
        for (&(a, b), ms) in &self.rtt {
            writeln!(w, "rtt {} {} {}", self.hosts[a].name, self.hosts[b].name, ms)?;
        }
        Ok(())
    }
}

/// Dense directed latency table; NaN marks an undefined pair.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyMatrix {
    n: usize,
    values: Vec<f64>,
}

impl LatencyMatrix {
    pub fn undefined(n: usize) -> Self {
        LatencyMatrix {
            n,
            values: vec![f64::NAN; n * n],
        }
    }

    /// Wraps a row-major `n x n` table; NaN entries are undefined.
    pub fn from_dense(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::param(format!("expected {} values, got {}", n * n, values.len())));
        }
        Ok(LatencyMatrix { n, values })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, a: usize, b: usize) -> Option<f64> {
        let v = self.values[a * self.n + b];
        (!v.is_nan()).then_some(v)
    }

    pub fn set(&mut self, a: usize, b: usize, ms: f64) {
        self.values[a * self.n + b] = ms;
    }

    /// Keeps only the entries that are defined in `mask`.
    pub fn restricted_to(&self, mask: &LatencyMatrix) -> LatencyMatrix {
        assert_eq!(self.n, mask.n, "matrix sizes differ");
        let values = self
            .values
            .iter()
            .zip(&mask.values)
            .map(|(&v, &m)| if m.is_nan() { f64::NAN } else { v })
            .collect();
        LatencyMatrix { n: self.n, values }
    }

    /// Defined off-diagonal values in row-major order.
    pub fn defined_values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for a in 0..self.n {
            for b in 0..self.n {
                if a != b {
                    if let Some(v) = self.get(a, b) {
                        out.push(v);
                    }
                }
            }
        }
        out
    }
}

/// Mean of `d(a,b) / (d(a,x) + d(x,b))` over every intermediary `x` for which all
/// three values are defined and `d(a,b) > d(a,x) + d(x,b)`. Zero when no
/// intermediary violates the triangle inequality; `None` when `d(a,b)` is undefined.
pub fn tiv_severity(m: &LatencyMatrix, a: usize, b: usize) -> Option<f64> {
    let direct = m.get(a, b)?;
    let n = m.len();
    let row_a = &m.values[a * n..(a + 1) * n];
    let mut sum = 0.0;
    let mut count = 0usize;
    for x in 0..n {
        if x == a || x == b {
            continue;
        }
        let via = row_a[x] + m.values[x * n + b];
        // NaN legs compare false.
        if direct > via {
            sum += direct / via;
            count += 1;
        }
    }
    Some(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// TIV severity of every defined off-diagonal pair, row-major.
pub fn tiv_all(m: &LatencyMatrix) -> Vec<(usize, usize, f64)> {
    (0..m.len())
        .into_par_iter()
        .flat_map_iter(|a| {
            (0..m.len())
                .filter(move |&b| b != a)
                .filter_map(move |b| tiv_severity(m, a, b).map(|s| (a, b, s)))
        })
        .collect()
}

/// Empirical CDF, right-continuous: `F(x)` is the fraction of samples `<= x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::param("ECDF of an empty sample"));
        }
        if samples.iter().any(|x| x.is_nan()) {
            return Err(Error::param("ECDF sample contains NaN"));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Ecdf { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&s| s <= x) as f64 / self.sorted.len() as f64
    }

    /// One `(value, i/n)` pair per sample, sorted by value.
    pub fn export(&self) -> Vec<(f64, f64)> {
        let n = self.sorted.len() as f64;
        self.sorted
            .iter()
            .enumerate()
            .map(|(i, &x)| (x, (i + 1) as f64 / n))
            .collect()
    }

    /// Writes `val <x> <F(x)>` lines.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for (x, f) in self.export() {
            writeln!(w, "val {x} {f}")?;
        }
        Ok(())
    }
}

/// Two-sample Kolmogorov-Smirnov distance `sup |F1 - F2|`, by a merged sweep over
/// both sorted samples.
pub fn ks_statistic(s1: &[f64], s2: &[f64]) -> Result<f64> {
    let a = Ecdf::new(s1)?.sorted;
    let b = Ecdf::new(s2)?.sorted;
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    // Once one sample is exhausted, the gap can only shrink toward zero.
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditPoint {
    pub a: usize,
    pub b: usize,
    pub km: f64,
    pub ms: f64,
    /// False when the measurement beats light in fiber over the direct distance.
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Audit {
    pub points: Vec<AuditPoint>,
    /// Defined pairs skipped because a host lacks coordinates.
    pub skipped: usize,
}

impl Audit {
    pub fn infeasible_count(&self) -> usize {
        self.points.iter().filter(|p| !p.feasible).count()
    }

    pub fn write<W: Write>(&self, ds: &LatencyDataset, mut w: W) -> Result<()> {
        for p in &self.points {
            writeln!(
                w,
                "audit {} {} {} {} {}",
                ds.hosts()[p.a].name,
                ds.hosts()[p.b].name,
                p.km,
                p.ms,
                if p.feasible { "feasible" } else { "infeasible" }
            )?;
        }
        Ok(())
    }
}

/// Is a measurement of `ms` over a straight `km` physically possible in fiber?
pub fn is_feasible(km: f64, ms: f64, n_f: f64, c_light: f64) -> bool {
    ms >= propagation_ms(km, n_f, c_light)
}

/// Great-circle distance against measured latency for every defined pair.
pub fn distance_latency_audit(ds: &LatencyDataset, n_f: f64, c_light: f64) -> Audit {
    let mut audit = Audit::default();
    for (a, b, ms) in ds.entries() {
        match (ds.hosts[a].point, ds.hosts[b].point) {
            (Some(pa), Some(pb)) => {
                let km = great_circle_distance(pa, pb);
                audit.points.push(AuditPoint {
                    a,
                    b,
                    km,
                    ms,
                    feasible: is_feasible(km, ms, n_f, c_light),
                });
            }
            _ => audit.skipped += 1,
        }
    }
    audit
}
