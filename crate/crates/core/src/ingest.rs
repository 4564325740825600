//! Check-in parsing, region filtering, prior estimation and the synthetic
//! tagged grid.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::Arc;

use flate2::read::MultiGzDecoder;

use crate::error::{LppmError, Result};
use crate::geo::{haversine_project, GeoPoint, PlanePoint};
use crate::model::{PoiSet, Prior};

/// One line of a SNAP check-in file.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckinRecord {
    pub user: String,
    pub timestamp: String,
    pub point: GeoPoint,
    pub location_id: String,
}

/// Parses `user \t timestamp \t lat \t lon \t location_id`.
pub fn parse_checkin_line(line: &str) -> Option<CheckinRecord> {
    let mut f = line.trim_end_matches(['\r', '\n']).split('\t');
    let user = f.next()?;
    let timestamp = f.next()?;
    let lat: f64 = f.next()?.trim().parse().ok()?;
    let lon: f64 = f.next()?.trim().parse().ok()?;
    let location_id = f.next()?;
    if f.next().is_some() || user.is_empty() || location_id.is_empty() {
        return None;
    }
    let point = GeoPoint::new(lat, lon).ok()?;
    Some(CheckinRecord { user: user.into(), timestamp: timestamp.into(), point, location_id: location_id.into() })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedCheckins {
    pub records: Vec<CheckinRecord>,
    pub malformed: usize,
}

/// Streams check-ins to `f`, returning the number of malformed lines.
/// Blank lines are ignored.
pub fn for_each_checkin<R: BufRead>(r: R, mut f: impl FnMut(CheckinRecord)) -> Result<usize> {
    let mut malformed = 0;
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_checkin_line(&line) {
            Some(rec) => f(rec),
            None => malformed += 1,
        }
    }
    Ok(malformed)
}

pub fn parse_checkins<R: BufRead>(r: R) -> Result<ParsedCheckins> {
    let mut records = Vec::new();
    let malformed = for_each_checkin(r, |rec| records.push(rec))?;
    Ok(ParsedCheckins { records, malformed })
}

/// Opens a check-in file, transparently decompressing gzip.
pub fn open_checkins(path: &Path) -> Result<Box<dyn BufRead>> {
    let mut file = File::open(path)?;
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic)?;
    let file = File::open(path)?;
    if n == 2 && magic == [0x1f, 0x8b] {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

/// Latitude/longitude box, boundary included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl Region {
    /// The San Francisco study area.
    pub const SAN_FRANCISCO: Region = Region { lat_min: 37.5395, lat_max: 37.7910, lon_min: -122.5153, lon_max: -122.3789 };

    pub fn new(lat_min: f64, lat_max: f64, lon_min: f64, lon_max: f64) -> Result<Self> {
        GeoPoint::new(lat_min, lon_min)?;
        GeoPoint::new(lat_max, lon_max)?;
        if !(lat_min < lat_max && lon_min < lon_max) {
            return Err(LppmError::InvalidInput(format!(
                "region needs min < max on both axes, got lat [{lat_min}, {lat_max}] lon [{lon_min}, {lon_max}]"
            )));
        }
        Ok(Self { lat_min, lat_max, lon_min, lon_max })
    }

    /// Parses `lat0,lat1,lon0,lon1`; each pair may be given in either order.
    pub fn parse(s: &str) -> Result<Self> {
        let v: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| LppmError::InvalidInput(format!("region {s:?}: {e}")))?;
        if v.len() != 4 {
            return Err(LppmError::InvalidInput(format!("region {s:?} needs four comma-separated numbers")));
        }
        Self::new(v[0].min(v[1]), v[0].max(v[1]), v[2].min(v[3]), v[2].max(v[3]))
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        (self.lat_min..=self.lat_max).contains(&p.lat) && (self.lon_min..=self.lon_max).contains(&p.lon)
    }

    pub fn center(&self) -> GeoPoint {
        GeoPoint { lat: 0.5 * (self.lat_min + self.lat_max), lon: 0.5 * (self.lon_min + self.lon_max) }
    }
}

/// What a location's prior weight counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CountMode {
    /// Every check-in event.
    #[default]
    Events,
    /// Distinct users who checked in at least once.
    DistinctUsers,
}

#[derive(Debug, Clone)]
struct LocationStats {
    point: GeoPoint,
    events: u64,
    users: HashSet<String>,
}

/// Accumulates in-region check-ins per location id, in first-seen order.
#[derive(Debug, Clone)]
pub struct PriorBuilder {
    region: Region,
    mode: CountMode,
    index: HashMap<String, usize>,
    stats: Vec<(String, LocationStats)>,
    /// Records whose location id was seen earlier with other coordinates.
    pub inconsistent: usize,
}

impl PriorBuilder {
    pub fn new(region: Region, mode: CountMode) -> Self {
        Self { region, mode, index: HashMap::new(), stats: Vec::new(), inconsistent: 0 }
    }

    pub fn add(&mut self, rec: &CheckinRecord) {
        if !self.region.contains(rec.point) {
            return;
        }
        let i = match self.index.get(&rec.location_id) {
            Some(&i) => i,
            None => {
                let i = self.stats.len();
                self.index.insert(rec.location_id.clone(), i);
                let s = LocationStats { point: rec.point, events: 0, users: HashSet::new() };
                self.stats.push((rec.location_id.clone(), s));
                i
            }
        };
        let s = &mut self.stats[i].1;
        if s.point != rec.point {
            self.inconsistent += 1;
        }
        s.events += 1;
        if self.mode == CountMode::DistinctUsers {
            s.users.insert(rec.user.clone());
        }
    }

    /// Projects around `reference` and normalises the counts.
    pub fn finish(self, reference: GeoPoint) -> Result<PoiPrior> {
        let mode = self.mode;
        let count = |s: &LocationStats| match mode {
            CountMode::Events => s.events,
            CountMode::DistinctUsers => s.users.len() as u64,
        };
        // Ids sharing exact coordinates are merged into the first one.
        let mut by_coord: HashMap<(u64, u64), usize> = HashMap::new();
        let mut points = Vec::new();
        let mut ids: Vec<Vec<String>> = Vec::new();
        let mut counts: Vec<u64> = Vec::new();
        for (id, s) in &self.stats {
            let key = (s.point.lat.to_bits(), s.point.lon.to_bits());
            match by_coord.get(&key) {
                Some(&j) => {
                    counts[j] += count(s);
                    ids[j].push(id.clone());
                }
                None => {
                    by_coord.insert(key, points.len());
                    points.push(haversine_project(s.point, reference));
                    ids.push(vec![id.clone()]);
                    counts.push(count(s));
                }
            }
        }
        let merged = self.stats.len() - points.len();
        if merged > 0 {
            log::warn!("merged {merged} location ids that share coordinates with another id");
        }
        if self.inconsistent > 0 {
            log::warn!("{} check-ins disagree with the first coordinates seen for their location id", self.inconsistent);
        }
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(LppmError::InvalidInput("no check-ins inside the region".into()));
        }
        let poi = Arc::new(PoiSet::new(points)?);
        let mass: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
        let prior = Prior::new(poi, mass)?;
        Ok(PoiPrior { prior, location_ids: ids, counts, merged })
    }
}

#[derive(Debug, Clone)]
pub struct PoiPrior {
    pub prior: Prior,
    /// Location ids behind each POI; more than one after a coordinate merge.
    pub location_ids: Vec<Vec<String>>,
    pub counts: Vec<u64>,
    pub merged: usize,
}

/// POIs are the distinct in-region location ids, projected around
/// `reference`; the prior is proportional to their check-in counts.
pub fn build_poi_and_prior<'a>(
    records: impl IntoIterator<Item = &'a CheckinRecord>,
    region: &Region,
    reference: GeoPoint,
    mode: CountMode,
) -> Result<PoiPrior> {
    let mut b = PriorBuilder::new(*region, mode);
    for r in records {
        b.add(r);
    }
    b.finish(reference)
}

/// Default tag layout of the 5x5 grid, row by row from the south-west cell.
pub const DEFAULT_GRID_TAGS: [&str; 25] = [
    "Home", "Home", "Park", "Shop", "Cafe", //
    "Home", "Park", "Park", "Shop", "Cafe", //
    "Shop", "Shop", "Cafe", "Home", "Home", //
    "Cafe", "Park", "Home", "Home", "Shop", //
    "Park", "Cafe", "Shop", "Park", "Home",
];

/// `side x side` cell centres of size `cell_km`, with a uniform prior.
/// POI `j * side + i` is the centre of column `i`, row `j`. Without
/// explicit tags a 5x5 grid gets [`DEFAULT_GRID_TAGS`] and other sizes
/// stay untagged.
pub fn build_grid_scenario(side: usize, cell_km: f64, tags: Option<&[String]>) -> Result<Prior> {
    if side == 0 || !(cell_km > 0.0) || !cell_km.is_finite() {
        return Err(LppmError::InvalidInput(format!("grid needs side >= 1 and a positive cell size, got {side}, {cell_km}")));
    }
    let points: Vec<PlanePoint> = (0..side * side)
        .map(|k| PlanePoint::new(((k % side) as f64 + 0.5) * cell_km, ((k / side) as f64 + 0.5) * cell_km))
        .collect();
    let tags: Option<Vec<String>> = match tags {
        Some(t) if t.len() == side * side => Some(t.to_vec()),
        Some(t) => {
            return Err(LppmError::InvalidInput(format!("tag map covers {} of {} cells", t.len(), side * side)));
        }
        None if side == 5 => Some(DEFAULT_GRID_TAGS.iter().map(|s| s.to_string()).collect()),
        None => None,
    };
    let poi = match tags {
        Some(t) => PoiSet::with_tags(points, t)?,
        None => PoiSet::new(points)?,
    };
    Ok(Prior::uniform(Arc::new(poi)))
}

pub const POI_CSV_HEADER: &str = "id,x_km,y_km,tag,prior_mass";

/// Writes `id,x_km,y_km,tag,prior_mass`, one POI per row.
pub fn write_poi_csv<W: Write>(prior: &Prior, mut w: W) -> Result<()> {
    writeln!(w, "{POI_CSV_HEADER}")?;
    let tags = prior.poi().tags();
    for (i, (p, m)) in prior.poi().points().iter().zip(prior.mass()).enumerate() {
        let tag = tags.map_or("", |t| t[i].as_str());
        if tag.contains([',', '\n', '"']) {
            return Err(LppmError::InvalidInput(format!("tag {tag:?} cannot be written to CSV")));
        }
        writeln!(w, "{i},{},{},{tag},{m}", p.x, p.y)?;
    }
    Ok(())
}

/// Reads a POI CSV. Rows may come in any order; ids must be `0..n`. The
/// set is tagged only if every row has a tag. Masses summing to 1 within
/// 1e-9 but not within the prior's own tolerance are renormalised.
pub fn read_poi_csv<R: BufRead>(r: R) -> Result<Prior> {
    let mut lines = r.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) => {
                let l = l?;
                if !l.starts_with('#') && !l.trim().is_empty() {
                    break l;
                }
            }
            None => return Err(LppmError::Parse { line: 0, msg: "empty POI file".into() }),
        }
    };
    if header.trim() != POI_CSV_HEADER {
        return Err(LppmError::Parse { line: 1, msg: format!("expected header {POI_CSV_HEADER:?}") });
    }
    let mut rows: Vec<(usize, PlanePoint, String, f64)> = Vec::new();
    for (i, l) in lines {
        let l = l?;
        if l.trim().is_empty() {
            continue;
        }
        let perr = |msg: String| LppmError::Parse { line: i + 1, msg };
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != 5 {
            return Err(perr(format!("expected 5 fields, got {}", f.len())));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| perr(format!("{s:?}: {e}")));
        let id: usize = f[0].trim().parse().map_err(|e| perr(format!("id {:?}: {e}", f[0])))?;
        rows.push((id, PlanePoint::new(num(f[1])?, num(f[2])?), f[3].trim().to_string(), num(f[4])?));
    }
    rows.sort_by_key(|r| r.0);
    if rows.iter().enumerate().any(|(i, r)| r.0 != i) {
        return Err(LppmError::Parse { line: 0, msg: "POI ids must be 0..n without gaps".into() });
    }
    let points: Vec<PlanePoint> = rows.iter().map(|r| r.1).collect();
    let tagged = rows.iter().all(|r| !r.2.is_empty());
    let poi = if tagged {
        PoiSet::with_tags(points, rows.iter().map(|r| r.2.clone()).collect())?
    } else {
        PoiSet::new(points)?
    };
    let mass: Vec<f64> = rows.iter().map(|r| r.3).collect();
    let total: f64 = mass.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(LppmError::InvalidInput(format!("prior masses sum to {total}")));
    }
    let poi = Arc::new(poi);
    Prior::new(poi.clone(), mass.clone()).or_else(|_| Prior::from_weights(poi, &mass))
}

pub fn read_poi_csv_path(path: &Path) -> Result<Prior> {
    read_poi_csv(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use flate2::write::GzEncoder;
    use flate2::Compression;

    const LINE: &str = "42\t2010-10-19T23:55:27Z\t37.6\t-122.4\t22847";

    #[test]
    fn empty_input() {
        let p = parse_checkins("".as_bytes()).unwrap();
        assert!(p.records.is_empty());
        assert_eq!(p.malformed, 0);
    }

    #[test]
    fn one_record_round_trip() {
        let p = parse_checkins(format!("{LINE}\n").as_bytes()).unwrap();
        assert_eq!(p.malformed, 0);
        let r = &p.records[0];
        assert_eq!((r.user.as_str(), r.timestamp.as_str(), r.location_id.as_str()), ("42", "2010-10-19T23:55:27Z", "22847"));
        assert_eq!((r.point.lat, r.point.lon), (37.6, -122.4));
    }

    #[test]
    fn malformed_lines_counted() {
        let text = format!("{LINE}\n1\tt\tabc\t-122.4\t9\n1\tt\t37.6\n1\tt\t95.0\t0.0\t3\n");
        let p = parse_checkins(text.as_bytes()).unwrap();
        assert_eq!(p.records.len(), 1);
        assert_eq!(p.malformed, 3);
    }

    #[test]
    fn gzip_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt.gz");
        let mut enc = GzEncoder::new(File::create(&path).unwrap(), Compression::default());
        writeln!(enc, "{LINE}").unwrap();
        enc.finish().unwrap();
        let p = parse_checkins(open_checkins(&path).unwrap()).unwrap();
        assert_eq!(p.records.len(), 1);
        let plain = dir.path().join("c.txt");
        std::fs::write(&plain, format!("{LINE}\n")).unwrap();
        assert_eq!(parse_checkins(open_checkins(&plain).unwrap()).unwrap().records.len(), 1);
    }

    fn rec(user: &str, lat: f64, lon: f64, id: &str) -> CheckinRecord {
        CheckinRecord { user: user.into(), timestamp: String::new(), point: GeoPoint::new(lat, lon).unwrap(), location_id: id.into() }
    }

    #[test]
    fn counting_prior() {
        let region = Region::SAN_FRANCISCO;
        let recs = vec![
            rec("a", 37.6, -122.4, "1"),
            rec("a", 37.6, -122.4, "1"),
            rec("b", 37.7, -122.45, "2"),
            rec("c", 10.0, 10.0, "3"),
        ];
        let out = build_poi_and_prior(&recs, &region, region.center(), CountMode::Events).unwrap();
        assert_eq!(out.prior.mass(), &[2.0 / 3.0, 1.0 / 3.0]);
        let out = build_poi_and_prior(&recs, &region, region.center(), CountMode::DistinctUsers).unwrap();
        assert_eq!(out.prior.mass(), &[0.5, 0.5]);
    }

    #[test]
    fn boundary_inclusive_and_merge() {
        let region = Region::new(37.0, 38.0, -123.0, -122.0).unwrap();
        let recs = vec![rec("a", 37.0, -123.0, "x"), rec("b", 37.0, -123.0, "y"), rec("c", 38.0, -122.0, "z")];
        let out = build_poi_and_prior(&recs, &region, region.center(), CountMode::Events).unwrap();
        assert_eq!(out.prior.len(), 2);
        assert_eq!(out.merged, 1);
        assert_eq!(out.location_ids[0], vec!["x".to_string(), "y".to_string()]);
        assert_eq!(out.counts, vec![2, 1]);
    }

    #[test]
    fn nothing_in_region() {
        let recs = vec![rec("a", 0.0, 0.0, "1")];
        assert!(build_poi_and_prior(&recs, &Region::SAN_FRANCISCO, Region::SAN_FRANCISCO.center(), CountMode::Events).is_err());
    }

    #[test]
    fn region_parsing() {
        let r = Region::parse("37.7910,37.5395,-122.5153,-122.3789").unwrap();
        assert_eq!(r, Region::SAN_FRANCISCO);
        assert!(Region::parse("1,1,2,3").is_err());
        assert!(Region::parse("1,2,3").is_err());
    }

    #[test]
    fn grid_geometry() {
        let p = build_grid_scenario(5, 1.0, None).unwrap();
        assert_eq!(p.len(), 25);
        assert!(p.mass().iter().all(|&m| m == 0.04));
        let pts = p.poi().points();
        assert_eq!(pts[0].dist(pts[1]), 1.0);
        assert_eq!(pts[0].dist(pts[5]), 1.0);
        assert_eq!(p.poi().tags().unwrap()[2], "Park");
        let one = build_grid_scenario(1, 2.0, None).unwrap();
        assert_eq!(one.mass(), &[1.0]);
        assert!(build_grid_scenario(2, 1.0, Some(&["Home".to_string()])).is_err());
    }

    #[test]
    fn poi_csv_round_trip() {
        let p = build_grid_scenario(5, 0.7, None).unwrap();
        let mut buf = Vec::new();
        write_poi_csv(&p, &mut buf).unwrap();
        let back = read_poi_csv(buf.as_slice()).unwrap();
        assert_eq!(back.poi().points(), p.poi().points());
        assert_eq!(back.poi().tags(), p.poi().tags());
        assert_eq!(back.mass(), p.mass());
    }
}
