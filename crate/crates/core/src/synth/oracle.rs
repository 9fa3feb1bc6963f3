//! Brute-force re-derivation of every output value from the visit ledger.
//!
//! Nothing here calls into `measures`, `dispersion` or `aggregate`. Each
//! visit is walked individually: it is binned, given the policy's
//! representative minutes, and the place's mean representative is credited to
//! the visitor's home tract, split evenly across the POIs of the place.
//! Regional values are pooled sums (Σ minutes / Σ devices, Σ minutes /
//! Σ visits) and the Gini uses the pairwise mean-absolute-difference form.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::NaiveDate;

use super::LedgerVisit;
use crate::category::{ActivityCategory, CategoryValues};
use crate::ingest::{CategoryMap, DwellBucket, GeoHierarchy, PanelObservation, PoiCatalog, YearMonth};
use crate::measures::DwellPolicy;
use crate::table::StuRecord;
use crate::Level;

pub struct OracleInputs<'a> {
    pub ledger: &'a [LedgerVisit],
    pub weeks: &'a [NaiveDate],
    pub catalog: &'a PoiCatalog,
    pub category_map: &'a CategoryMap,
    pub panel: &'a [PanelObservation],
    pub hierarchy: &'a GeoHierarchy,
    pub policy: &'a DwellPolicy,
}

/// Total exact ledger minutes against the same visits valued at bucket
/// representatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DwellLoss {
    pub exact_minutes: f64,
    pub bucketed_minutes: f64,
}

#[derive(Debug, Clone, Default)]
pub struct OracleOutput {
    /// Rows sorted by GEOID, like the pipeline's tables.
    pub tables: BTreeMap<(Level, NaiveDate), Vec<StuRecord>>,
    pub dwell_loss: DwellLoss,
}

#[derive(Default)]
struct Cell {
    minutes: [f64; 7],
    visits: [f64; 7],
    sectors: BTreeMap<String, f64>,
}

struct TractWeek<'a> {
    geoid: String,
    cell: Option<&'a Cell>,
    devices: Option<u64>,
    population: Option<u64>,
}

fn entropy(sectors: &BTreeMap<String, f64>) -> Option<f64> {
    let total: f64 = sectors.values().sum();
    if total <= 0.0 {
        return None;
    }
    let mut h = 0.0;
    for &m in sectors.values() {
        if m > 0.0 {
            let p = m / total;
            h -= p * p.ln();
        }
    }
    Some(h.max(0.0))
}

fn pairwise_gini(units: &[(f64, f64)]) -> Option<f64> {
    let pop: f64 = units.iter().map(|u| u.0).sum();
    let mass: f64 = units.iter().map(|u| u.0 * u.1).sum();
    if units.len() < 2 || pop <= 0.0 || mass <= 0.0 {
        return None;
    }
    let mut s = 0.0;
    for a in units {
        for b in units {
            s += a.0 * b.0 * (a.1 - b.1).abs();
        }
    }
    Some(s / (2.0 * pop * mass))
}

fn tract_record(week: NaiveDate, t: &TractWeek) -> StuRecord {
    let mut r = StuRecord::empty(t.geoid.clone(), week);
    let empty = Cell::default();
    let cell = t.cell.unwrap_or(&empty);
    if let Some(d) = t.devices.filter(|&d| d > 0) {
        let d = d as f64;
        r.per_user.all = Some(cell.minutes.iter().sum::<f64>() / d);
        for k in ActivityCategory::ALL {
            r.per_user.set(k, Some(cell.minutes[k.index()] / d));
        }
    }
    let visits: f64 = cell.visits.iter().sum();
    if visits > 0.0 {
        r.per_visit.all = Some(cell.minutes.iter().sum::<f64>() / visits);
    }
    for k in ActivityCategory::ALL {
        if cell.visits[k.index()] > 0.0 {
            r.per_visit.set(k, Some(cell.minutes[k.index()] / cell.visits[k.index()]));
        }
    }
    r.diversity = entropy(&cell.sectors);
    r
}

fn region_record(week: NaiveDate, geoid: &str, members: &[&TractWeek]) -> StuRecord {
    let mut r = StuRecord::empty(geoid, week);
    let empty = Cell::default();
    let mut minutes_with_devices = [0.0; 7];
    let mut devices = 0.0;
    let mut minutes = [0.0; 7];
    let mut visits = [0.0; 7];
    let mut diversity = (0.0, 0.0);
    let mut gini_units = Vec::new();
    for t in members {
        let cell = t.cell.unwrap_or(&empty);
        for k in 0..7 {
            minutes[k] += cell.minutes[k];
            visits[k] += cell.visits[k];
        }
        if let Some(d) = t.devices {
            if d > 0 {
                devices += d as f64;
                for k in 0..7 {
                    minutes_with_devices[k] += cell.minutes[k];
                }
                if let Some(p) = t.population {
                    gini_units.push((p as f64, cell.minutes.iter().sum::<f64>() / d as f64));
                }
            }
            if let Some(h) = entropy(&cell.sectors) {
                diversity.0 += d as f64 * h;
                diversity.1 += d as f64;
            }
        }
    }
    if devices > 0.0 {
        r.per_user = CategoryValues {
            all: Some(minutes_with_devices.iter().sum::<f64>() / devices),
            by_category: minutes_with_devices.map(|m| Some(m / devices)),
        };
    }
    let total_visits: f64 = visits.iter().sum();
    if total_visits > 0.0 {
        r.per_visit.all = Some(minutes.iter().sum::<f64>() / total_visits);
    }
    for k in 0..7 {
        if visits[k] > 0.0 {
            r.per_visit.by_category[k] = Some(minutes[k] / visits[k]);
        }
    }
    r.diversity = (diversity.1 > 0.0).then(|| diversity.0 / diversity.1);
    r.gini = pairwise_gini(&gini_units);
    r
}

fn bucket_of(minutes: u32) -> DwellBucket {
    match minutes {
        0..=4 => DwellBucket::Under5,
        5..=10 => DwellBucket::From5To10,
        11..=20 => DwellBucket::From11To20,
        21..=60 => DwellBucket::From21To60,
        61..=120 => DwellBucket::From61To120,
        121..=240 => DwellBucket::From121To240,
        _ => DwellBucket::Over240,
    }
}

/// Every table value the pipeline should emit for the ledger's instance.
pub fn oracle_measures(inputs: &OracleInputs) -> OracleOutput {
    let mut members: BTreeMap<&str, Vec<(&str, Option<ActivityCategory>)>> = BTreeMap::new();
    for poi in inputs.catalog.iter() {
        members
            .entry(poi.colocation_key.as_str())
            .or_default()
            .push((poi.naics.as_str(), inputs.category_map.category(&poi.naics)));
    }
    let panel: HashMap<(&str, YearMonth), &PanelObservation> = inputs
        .panel
        .iter()
        .filter(|o| o.geoid.len() == 11)
        .map(|o| ((o.geoid.as_str(), o.month), o))
        .collect();

    let mut by_place: BTreeMap<(NaiveDate, &str), Vec<&LedgerVisit>> = BTreeMap::new();
    let mut loss = DwellLoss::default();
    for v in inputs.ledger {
        by_place.entry((v.week_start, v.place_id.as_str())).or_default().push(v);
        loss.exact_minutes += v.dwell_minutes as f64;
        loss.bucketed_minutes += inputs.policy.representative(bucket_of(v.dwell_minutes));
    }

    let mut cells: BTreeMap<(NaiveDate, String), Cell> = BTreeMap::new();
    for ((week, place), visits) in &by_place {
        let Some(pois) = members.get(place) else { continue };
        let g = pois.len() as f64;
        let mean_rep = visits
            .iter()
            .map(|v| inputs.policy.representative(bucket_of(v.dwell_minutes)))
            .sum::<f64>()
            / visits.len() as f64;
        for v in visits {
            let Some(cbg) = &v.home_cbg else { continue };
            let cell = cells.entry((*week, cbg[..11].to_string())).or_default();
            for (naics, category) in pois {
                let Some(k) = category else { continue };
                cell.minutes[k.index()] += mean_rep / g;
                cell.visits[k.index()] += 1.0 / g;
                *cell.sectors.entry(naics.to_string()).or_default() += mean_rep / g;
            }
        }
    }

    let mut tables = BTreeMap::new();
    for &week in inputs.weeks {
        let mut universe: BTreeSet<String> = cells
            .keys()
            .filter(|(w, _)| *w == week)
            .map(|(_, t)| t.clone())
            .collect();
        universe.extend(inputs.hierarchy.tracts.keys().cloned());
        let month = YearMonth::of(week);
        let tracts: Vec<TractWeek> = universe
            .into_iter()
            .filter_map(|geoid| {
                let cell = cells.get(&(week, geoid.clone()));
                let obs = panel.get(&(geoid.as_str(), month));
                if cell.is_none() && obs.is_none() {
                    return None;
                }
                Some(TractWeek {
                    cell,
                    devices: obs.map(|o| o.device_count),
                    population: obs.and_then(|o| o.population),
                    geoid,
                })
            })
            .collect();
        tables.insert(
            (Level::Tract, week),
            tracts.iter().map(|t| tract_record(week, t)).collect(),
        );
        for level in [Level::CountySubdivision, Level::County, Level::Metro] {
            let mut units: BTreeMap<&str, Vec<&TractWeek>> = BTreeMap::new();
            for t in &tracts {
                let Some(m) = inputs.hierarchy.tracts.get(&t.geoid) else { continue };
                let unit = match level {
                    Level::CountySubdivision => Some(m.county_subdivision_geoid.as_str()),
                    Level::County => Some(m.county_geoid.as_str()),
                    _ => m.metro_geoid.as_deref(),
                };
                if let Some(u) = unit {
                    units.entry(u).or_default().push(t);
                }
            }
            tables.insert(
                (level, week),
                units
                    .into_iter()
                    .map(|(geoid, members)| region_record(week, geoid, &members))
                    .collect(),
            );
        }
    }
    OracleOutput {
        tables,
        dwell_loss: loss,
    }
}

/// `|a − b| ≤ tol · max(|a|, |b|)`, with an absolute floor of 1e-12 so that
/// values at or next to zero compare sensibly.
pub fn relative_close(a: f64, b: f64, tol: f64) -> bool {
    let d = (a - b).abs();
    d <= tol * a.abs().max(b.abs()) || d <= 1e-12
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub level: Level,
    pub week: NaiveDate,
    pub geoid: String,
    pub column: String,
    pub expected: Option<f64>,
    pub actual: Option<f64>,
}

/// Cell-by-cell comparison. Rows present on one side only are reported with
/// column `<row>`; presence of each value must match exactly.
pub fn compare_tables(
    expected: &BTreeMap<(Level, NaiveDate), Vec<StuRecord>>,
    actual: &BTreeMap<(Level, NaiveDate), Vec<StuRecord>>,
    tol: f64,
) -> Vec<Mismatch> {
    let columns = crate::table::header();
    let mut out = Vec::new();
    let keys: BTreeSet<&(Level, NaiveDate)> = expected.keys().chain(actual.keys()).collect();
    for key in keys {
        let index = |side: &BTreeMap<(Level, NaiveDate), Vec<StuRecord>>| -> BTreeMap<String, StuRecord> {
            side.get(key)
                .map(|rows| rows.iter().map(|r| (r.geoid.clone(), r.clone())).collect())
                .unwrap_or_default()
        };
        let (e, a) = (index(expected), index(actual));
        let geoids: BTreeSet<&String> = e.keys().chain(a.keys()).collect();
        for g in geoids {
            match (e.get(g), a.get(g)) {
                (Some(er), Some(ar)) => {
                    for ((ev, av), col) in er.values().into_iter().zip(ar.values()).zip(&columns[2..]) {
                        let ok = match (ev, av) {
                            (None, None) => true,
                            (Some(x), Some(y)) => relative_close(x, y, tol),
                            _ => false,
                        };
                        if !ok {
                            out.push(Mismatch {
                                level: key.0,
                                week: key.1,
                                geoid: g.clone(),
                                column: col.clone(),
                                expected: ev,
                                actual: av,
                            });
                        }
                    }
                }
                (er, _) => out.push(Mismatch {
                    level: key.0,
                    week: key.1,
                    geoid: g.clone(),
                    column: "<row>".into(),
                    expected: er.map(|_| 1.0),
                    actual: er.is_none().then_some(1.0),
                }),
            }
        }
    }
    out
}
