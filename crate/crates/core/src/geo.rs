//! Spherical geometry and density-weighted location sampling.

use std::fmt;
use std::io::{BufRead, Write};

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::error::{Error, Result};

/// Mean Earth radius in kilometers.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// A point on the sphere in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub lat_deg: f64,
    pub lon_deg: f64,
}

impl GeoPoint {
    pub fn new(lat_deg: f64, lon_deg: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&lat_deg) || !(-180.0..=180.0).contains(&lon_deg) {
            return Err(Error::param(format!(
                "coordinate out of range: lat {lat_deg}, lon {lon_deg}"
            )));
        }
        Ok(GeoPoint { lat_deg, lon_deg })
    }

    pub fn distance_km(&self, other: &GeoPoint) -> f64 {
        great_circle_distance(*self, *other)
    }
}

impl fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.lat_deg, self.lon_deg)
    }
}

/// Great-circle distance in kilometers on a sphere of radius [`EARTH_RADIUS_KM`].
pub fn great_circle_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    great_circle_distance_on(a, b, EARTH_RADIUS_KM)
}

/// Haversine distance on a sphere with the given radius. The haversine form
/// stays accurate for small separations, unlike the spherical law of cosines.
pub fn great_circle_distance_on(a: GeoPoint, b: GeoPoint, radius_km: f64) -> f64 {
    let lat1 = a.lat_deg.to_radians();
    let lat2 = b.lat_deg.to_radians();
    let half_dlat = (lat2 - lat1) / 2.0;
    let half_dlon = (b.lon_deg - a.lon_deg).to_radians() / 2.0;

    let h = half_dlat.sin().powi(2) + lat1.cos() * lat2.cos() * half_dlon.sin().powi(2);
    2.0 * radius_km * h.sqrt().clamp(0.0, 1.0).asin()
}

/// Histogram-style density over a lat/lon rectangle. Row 0 is the northernmost
/// band; weights are row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    lat_bins: usize,
    lon_bins: usize,
    lat_min: f64,
    lat_max: f64,
    lon_min: f64,
    lon_max: f64,
    weights: Vec<f64>,
}

impl DensityGrid {
    pub fn new(
        lat_bins: usize,
        lon_bins: usize,
        (lat_min, lat_max, lon_min, lon_max): (f64, f64, f64, f64),
        weights: Vec<f64>,
    ) -> Result<Self> {
        if lat_bins == 0 || lon_bins == 0 {
            return Err(Error::InvalidGrid("grid needs at least one bin per axis".into()));
        }
        if weights.len() != lat_bins * lon_bins {
            return Err(Error::InvalidGrid(format!(
                "expected {} weights, got {}",
                lat_bins * lon_bins,
                weights.len()
            )));
        }
        if !(-90.0..=90.0).contains(&lat_min)
            || !(-90.0..=90.0).contains(&lat_max)
            || !(-180.0..=180.0).contains(&lon_min)
            || !(-180.0..=180.0).contains(&lon_max)
            || lat_min >= lat_max
            || lon_min >= lon_max
        {
            return Err(Error::InvalidGrid(format!(
                "bad bounds lat [{lat_min}, {lat_max}] lon [{lon_min}, {lon_max}]"
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidGrid("weights must be finite and non-negative".into()));
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidGrid("all weights are zero".into()));
        }
        Ok(DensityGrid {
            lat_bins,
            lon_bins,
            lat_min,
            lat_max,
            lon_min,
            lon_max,
            weights,
        })
    }

    /// Uniform weights over the whole globe.
    pub fn uniform_world(lat_bins: usize, lon_bins: usize) -> Result<Self> {
        Self::new(
            lat_bins,
            lon_bins,
            (-90.0, 90.0, -180.0, 180.0),
            vec![1.0; lat_bins * lon_bins],
        )
    }

    pub fn lat_bins(&self) -> usize {
        self.lat_bins
    }

    pub fn lon_bins(&self) -> usize {
        self.lon_bins
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Rectangle `(lat_lo, lat_hi, lon_lo, lon_hi)` covered by a cell.
    pub fn cell_bounds(&self, cell: usize) -> (f64, f64, f64, f64) {
        let row = cell / self.lon_bins;
        let col = cell % self.lon_bins;
        let dlat = (self.lat_max - self.lat_min) / self.lat_bins as f64;
        let dlon = (self.lon_max - self.lon_min) / self.lon_bins as f64;
        let lat_hi = self.lat_max - row as f64 * dlat;
        let lon_lo = self.lon_min + col as f64 * dlon;
        (lat_hi - dlat, lat_hi, lon_lo, lon_lo + dlon)
    }

    /// Cell containing a point, if the point lies inside the grid bounds.
    pub fn cell_of(&self, p: GeoPoint) -> Option<usize> {
        if p.lat_deg < self.lat_min
            || p.lat_deg > self.lat_max
            || p.lon_deg < self.lon_min
            || p.lon_deg > self.lon_max
        {
            return None;
        }
        let dlat = (self.lat_max - self.lat_min) / self.lat_bins as f64;
        let dlon = (self.lon_max - self.lon_min) / self.lon_bins as f64;
        let row = (((self.lat_max - p.lat_deg) / dlat) as usize).min(self.lat_bins - 1);
        let col = (((p.lon_deg - self.lon_min) / dlon) as usize).min(self.lon_bins - 1);
        Some(row * self.lon_bins + col)
    }

    pub fn sampler(&self) -> Result<LocationSampler<'_>> {
        LocationSampler::new(self)
    }

    /// Reads the text format:
    /// `grid <lat_bins> <lon_bins> <lat_min> <lat_max> <lon_min> <lon_max>` followed by
    /// whitespace-separated weights.
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut header: Option<(usize, usize, (f64, f64, f64, f64))> = None;
        let mut weights = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if header.is_none() {
                let toks: Vec<&str> = line.split_whitespace().collect();
                if toks.len() != 7 || toks[0] != "grid" {
                    return Err(Error::format(
                        lineno,
                        "expected `grid <lat_bins> <lon_bins> <lat_min> <lat_max> <lon_min> <lon_max>`",
                    ));
                }
                let bins = |s: &str| {
                    s.parse::<usize>()
                        .map_err(|_| Error::format(lineno, format!("bad bin count `{s}`")))
                };
                let num = |s: &str| {
                    s.parse::<f64>()
                        .map_err(|_| Error::format(lineno, format!("bad number `{s}`")))
                };
                header = Some((
                    bins(toks[1])?,
                    bins(toks[2])?,
                    (num(toks[3])?, num(toks[4])?, num(toks[5])?, num(toks[6])?),
                ));
                continue;
            }
            for tok in line.split_whitespace() {
                let w = tok
                    .parse::<f64>()
                    .map_err(|_| Error::format(lineno, format!("bad weight `{tok}`")))?;
                weights.push(w);
            }
        }
        let (lat_bins, lon_bins, bounds) =
            header.ok_or_else(|| Error::format(0, "missing grid header"))?;
        DensityGrid::new(lat_bins, lon_bins, bounds, weights)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "grid {} {} {} {} {} {}",
            self.lat_bins, self.lon_bins, self.lat_min, self.lat_max, self.lon_min, self.lon_max
        )?;
        for row in self.weights.chunks(self.lon_bins) {
            let line: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

/// Draws cells proportionally to their weight, then a point uniformly in
/// (lat, lon) degrees inside the cell.
#[derive(Debug, Clone)]
pub struct LocationSampler<'a> {
    grid: &'a DensityGrid,
    cells: WeightedIndex<f64>,
}

impl<'a> LocationSampler<'a> {
    pub fn new(grid: &'a DensityGrid) -> Result<Self> {
        let cells = WeightedIndex::new(grid.weights.iter().copied())
            .map_err(|e| Error::InvalidGrid(e.to_string()))?;
        Ok(LocationSampler { grid, cells })
    }

    pub fn sample_cell<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.cells.sample(rng)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GeoPoint {
        let cell = self.sample_cell(rng);
        let (lat_lo, lat_hi, lon_lo, lon_hi) = self.grid.cell_bounds(cell);
        GeoPoint {
            lat_deg: rng.gen_range(lat_lo..lat_hi),
            lon_deg: rng.gen_range(lon_lo..lon_hi),
        }
    }
}

/// One-shot convenience over [`LocationSampler`].
pub fn sample_location<R: Rng + ?Sized>(grid: &DensityGrid, rng: &mut R) -> Result<GeoPoint> {
    Ok(grid.sampler()?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn pt(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    #[test]
    fn closed_form_arcs() {
        assert_eq!(great_circle_distance(pt(10.0, 20.0), pt(10.0, 20.0)), 0.0);
        let quarter = great_circle_distance(pt(0.0, 0.0), pt(90.0, 0.0));
        assert_abs_diff_eq!(quarter, PI / 2.0 * 6371.0, epsilon = 0.01);
        assert_abs_diff_eq!(quarter, 10007.54, epsilon = 0.01);
        let anti = great_circle_distance(pt(0.0, 0.0), pt(0.0, 180.0));
        assert_abs_diff_eq!(anti, 20015.09, epsilon = 0.01);
    }

    #[test]
    fn one_meter_separation() {
        // 1 m of arc along the equator.
        let dlon = (0.001 / EARTH_RADIUS_KM).to_degrees();
        let d = great_circle_distance(pt(0.0, 10.0), pt(0.0, 10.0 + dlon));
        assert_abs_diff_eq!(d, 0.001, epsilon = 1e-6);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(GeoPoint::new(91.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, -180.5).is_err());
    }

    #[test]
    fn single_cell_grid() {
        let g = DensityGrid::new(1, 1, (0.0, 1.0, 0.0, 1.0), vec![2.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let p = sample_location(&g, &mut rng).unwrap();
            assert!((0.0..=1.0).contains(&p.lat_deg));
            assert!((0.0..=1.0).contains(&p.lon_deg));
        }
    }

    #[test]
    fn zero_weight_cell_never_drawn() {
        let g = DensityGrid::new(1, 2, (0.0, 10.0, 0.0, 20.0), vec![1.0, 0.0]).unwrap();
        let s = g.sampler().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5000 {
            let p = s.sample(&mut rng);
            assert_eq!(g.cell_of(p), Some(0));
            assert!(p.lon_deg < 10.0);
        }
    }

    #[test]
    fn weighted_cell_frequency() {
        let g = DensityGrid::new(1, 2, (0.0, 10.0, 0.0, 20.0), vec![1.0, 3.0]).unwrap();
        let s = g.sampler().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let hits = (0..n).filter(|_| g.cell_of(s.sample(&mut rng)) == Some(1)).count();
        assert_abs_diff_eq!(hits as f64 / n as f64, 0.75, epsilon = 0.01);
    }

    #[test]
    fn rows_run_north_to_south() {
        let g = DensityGrid::new(2, 1, (-10.0, 10.0, 0.0, 1.0), vec![0.0, 1.0]).unwrap();
        let s = g.sampler().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert!(s.sample(&mut rng).lat_deg < 0.0);
        }
    }

    #[test]
    fn all_zero_grid_is_invalid() {
        let err = DensityGrid::new(1, 2, (0.0, 1.0, 0.0, 1.0), vec![0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::InvalidGrid(_)));
    }

    #[test]
    fn grid_file_round_trip() {
        let text = "grid 2 3 -60 60 -180 180\n1 2 3\n0 0 4.5\n";
        let g = DensityGrid::read(text.as_bytes()).unwrap();
        assert_eq!(g.weights(), &[1.0, 2.0, 3.0, 0.0, 0.0, 4.5]);
        let mut out = Vec::new();
        g.write(&mut out).unwrap();
        assert_eq!(DensityGrid::read(out.as_slice()).unwrap(), g);
    }

    #[test]
    fn grid_file_errors() {
        assert!(matches!(
            DensityGrid::read("grid 2 2 0 1 0 1\n1 x 1 1\n".as_bytes()),
            Err(Error::Format { line: 2, .. })
        ));
        assert!(matches!(
            DensityGrid::read("grid 1 2 0 1 0 1\n1\n".as_bytes()),
            Err(Error::InvalidGrid(_))
        ));
    }

    fn any_point() -> impl Strategy<Value = GeoPoint> {
        (-90.0..=90.0f64, -180.0..=180.0f64).prop_map(|(a, b)| pt(a, b))
    }

    proptest! {
        #[test]
        fn metric_properties(a in any_point(), b in any_point(), c in any_point()) {
            let ab = great_circle_distance(a, b);
            let ba = great_circle_distance(b, a);
            prop_assert!((ab - ba).abs() < 1e-9);
            prop_assert!((0.0..=PI * EARTH_RADIUS_KM + 1e-9).contains(&ab));
            let ac = great_circle_distance(a, c);
            let bc = great_circle_distance(b, c);
            prop_assert!(ac <= ab + bc + 1e-6);
        }
    }
}
