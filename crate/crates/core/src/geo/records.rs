use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use super::GeoError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Polarity {
    LowerIsBetter,
    HigherIsBetter,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::LowerIsBetter => "lower_is_better",
            Polarity::HigherIsBetter => "higher_is_better",
        }
    }

    /// Larger is more desirable.
    fn desirability(self, value: f64) -> f64 {
        match self {
            Polarity::LowerIsBetter => -value,
            Polarity::HigherIsBetter => value,
        }
    }
}

impl FromStr for Polarity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lower_is_better" => Ok(Polarity::LowerIsBetter),
            "higher_is_better" => Ok(Polarity::HigherIsBetter),
            other => Err(format!("unknown polarity {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OutcomeId {
    /// Self-rated health, 1 (excellent) to 5 (poor).
    GeneralHealth,
    /// Number of people spoken to.
    SocialCapital,
    /// 1 (very satisfied) to 4 (very dissatisfied).
    LifeSatisfaction,
    /// Built density; sparser is treated as better.
    Density,
    /// User-defined outcome with an explicit polarity.
    Custom(Polarity),
}

impl OutcomeId {
    pub fn polarity(self) -> Polarity {
        match self {
            OutcomeId::GeneralHealth | OutcomeId::LifeSatisfaction | OutcomeId::Density => {
                Polarity::LowerIsBetter
            }
            OutcomeId::SocialCapital => Polarity::HigherIsBetter,
            OutcomeId::Custom(p) => p,
        }
    }
}

impl fmt::Display for OutcomeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutcomeId::GeneralHealth => f.write_str("general_health"),
            OutcomeId::SocialCapital => f.write_str("social_capital"),
            OutcomeId::LifeSatisfaction => f.write_str("life_satisfaction"),
            OutcomeId::Density => f.write_str("density"),
            OutcomeId::Custom(p) => write!(f, "custom:{}", p.as_str()),
        }
    }
}

impl FromStr for OutcomeId {
    type Err = String;

    /// Accepts the built-in names and `custom:<polarity>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "general_health" => Ok(OutcomeId::GeneralHealth),
            "social_capital" => Ok(OutcomeId::SocialCapital),
            "life_satisfaction" => Ok(OutcomeId::LifeSatisfaction),
            "density" => Ok(OutcomeId::Density),
            "custom" => Err("custom outcomes need a polarity, e.g. custom:higher_is_better".into()),
            other => match other.strip_prefix("custom:") {
                Some(p) => p.parse().map(OutcomeId::Custom),
                None => Err(format!("unknown outcome {other:?}")),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        LatLon { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeRecord {
    pub lat: f64,
    pub lon: f64,
    pub outcome: OutcomeId,
    pub value: f64,
    pub polarity: Polarity,
    pub group: Option<String>,
}

impl OutcomeRecord {
    pub fn new(lat: f64, lon: f64, outcome: OutcomeId, value: f64) -> Self {
        OutcomeRecord {
            lat,
            lon,
            outcome,
            value,
            polarity: outcome.polarity(),
            group: None,
        }
    }

    pub fn location(&self) -> LatLon {
        LatLon::new(self.lat, self.lon)
    }
}

/// A rejected input row. `line` is 1-based and counts the header.
#[derive(Clone, Debug, PartialEq)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LoadedRecords {
    pub records: Vec<OutcomeRecord>,
    pub errors: Vec<RowError>,
}

/// Reads `lat,lon,outcome,value[,group]` rows. Bad rows are reported, not dropped.
pub fn load_records<R: Read>(source: R) -> Result<LoadedRecords, GeoError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(source);
    let headers = reader.headers().map_err(|e| GeoError::Csv(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| GeoError::MissingColumn(name.to_string()))
    };
    let (lat_i, lon_i, out_i, val_i) = (col("lat")?, col("lon")?, col("outcome")?, col("value")?);
    let group_i = headers.iter().position(|h| h == "group");

    let mut out = LoadedRecords::default();
    for row in reader.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                out.errors.push(RowError {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = row.position().map_or(0, |p| p.line());
        match parse_row(&row, lat_i, lon_i, out_i, val_i, group_i) {
            Ok(rec) => out.records.push(rec),
            Err(message) => out.errors.push(RowError { line, message }),
        }
    }
    Ok(out)
}

fn parse_row(
    row: &csv::StringRecord,
    lat_i: usize,
    lon_i: usize,
    out_i: usize,
    val_i: usize,
    group_i: Option<usize>,
) -> Result<OutcomeRecord, String> {
    let field = |i: usize, name: &str| row.get(i).ok_or_else(|| format!("missing {name} field"));
    let number = |i: usize, name: &str| -> Result<f64, String> {
        let raw = field(i, name)?;
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(format!("{name} {raw:?} is not a finite number")),
        }
    };
    let lat = number(lat_i, "lat")?;
    let lon = number(lon_i, "lon")?;
    if !LatLon::new(lat, lon).is_valid() {
        return Err(format!("coordinates ({lat}, {lon}) out of range"));
    }
    let outcome: OutcomeId = field(out_i, "outcome")?.parse()?;
    let value = number(val_i, "value")?;
    let group = match group_i.and_then(|i| row.get(i)) {
        Some(g) if !g.is_empty() => Some(g.to_string()),
        _ => None,
    };
    Ok(OutcomeRecord {
        group,
        ..OutcomeRecord::new(lat, lon, outcome, value)
    })
}

/// Collapses records sharing a group key into one record holding the mean
/// value and mean coordinates. Ungrouped records pass through. Output order
/// follows first appearance.
pub fn aggregate_by_group(records: &[OutcomeRecord]) -> Vec<OutcomeRecord> {
    let mut slots: Vec<(OutcomeRecord, usize)> = Vec::new();
    let mut by_key: HashMap<(&str, OutcomeId), usize> = HashMap::new();
    for r in records {
        let Some(g) = r.group.as_deref() else {
            slots.push((r.clone(), 1));
            continue;
        };
        match by_key.get(&(g, r.outcome)) {
            Some(&i) => {
                let (acc, n) = &mut slots[i];
                acc.lat += r.lat;
                acc.lon += r.lon;
                acc.value += r.value;
                *n += 1;
            }
            None => {
                by_key.insert((g, r.outcome), slots.len());
                slots.push((r.clone(), 1));
            }
        }
    }
    slots
        .into_iter()
        .map(|(mut r, n)| {
            if r.group.is_some() {
                let n = n as f64;
                r.lat /= n;
                r.lon /= n;
                r.value /= n;
            }
            r
        })
        .collect()
}

/// Indices of the most and least desirable records, most extreme first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Deciles {
    pub best: Vec<usize>,
    pub worst: Vec<usize>,
}

/// Picks `floor(fraction · n)` records from each end of the desirability
/// ranking. Ties keep input order.
pub fn select_deciles(records: &[OutcomeRecord], fraction: f64) -> Result<Deciles, GeoError> {
    if !(fraction > 0.0 && fraction <= 0.5) {
        return Err(GeoError::InvalidFraction(fraction));
    }
    let first = records.first().ok_or(GeoError::Empty)?;
    if let Some(other) = records.iter().find(|r| r.outcome != first.outcome) {
        return Err(GeoError::MixedOutcomes(first.outcome, other.outcome));
    }
    let polarity = first.polarity;
    if records.iter().any(|r| r.polarity != polarity) {
        return Err(GeoError::MixedPolarity(first.outcome));
    }
    let k = (fraction * records.len() as f64).floor() as usize;
    let score = |i: &usize| polarity.desirability(records[*i].value);

    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|a, b| score(b).total_cmp(&score(a)));
    let best: Vec<usize> = order[..k].to_vec();
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|a, b| score(a).total_cmp(&score(b)));
    let worst: Vec<usize> = order[..k].to_vec();

    if let Some(&shared) = best.iter().find(|i| worst.contains(i)) {
        return Err(GeoError::Overlap {
            k,
            value: records[shared].value,
        });
    }
    Ok(Deciles { best, worst })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recs(values: &[f64], outcome: OutcomeId) -> Vec<OutcomeRecord> {
        values
            .iter()
            .map(|&v| OutcomeRecord::new(-37.8, 144.9, outcome, v))
            .collect()
    }

    fn values(records: &[OutcomeRecord], idx: &[usize]) -> Vec<f64> {
        idx.iter().map(|&i| records[i].value).collect()
    }

    #[test]
    fn loads_well_formed_rows() {
        let text = "lat,lon,outcome,value\n-37.8,144.9,general_health,2\n-37.81,144.95,general_health,4\n-37.79,144.97,general_health,1\n";
        let loaded = load_records(text.as_bytes()).unwrap();
        assert_eq!(loaded.records.len(), 3);
        assert!(loaded.errors.is_empty());
        assert!(loaded
            .records
            .iter()
            .all(|r| r.polarity == Polarity::LowerIsBetter));
    }

    #[test]
    fn bad_value_becomes_row_error() {
        let text = "lat,lon,outcome,value\n-37.8,144.9,social_capital,2\n-37.8,144.9,social_capital,N/A\n-37.8,144.9,social_capital,7\n";
        let loaded = load_records(text.as_bytes()).unwrap();
        assert_eq!(loaded.records.len(), 2);
        assert_eq!(loaded.errors.len(), 1);
        assert_eq!(loaded.errors[0].line, 3);
        assert!(loaded.errors[0].message.contains("N/A"));
    }

    #[test]
    fn missing_column_is_fatal() {
        let err = load_records("lat,lon,value\n1,2,3\n".as_bytes()).unwrap_err();
        assert_eq!(err, GeoError::MissingColumn("outcome".into()));
    }

    #[test]
    fn outcome_polarities() {
        assert_eq!(OutcomeId::SocialCapital.polarity(), Polarity::HigherIsBetter);
        assert_eq!(OutcomeId::LifeSatisfaction.polarity(), Polarity::LowerIsBetter);
        let c: OutcomeId = "custom:higher_is_better".parse().unwrap();
        assert_eq!(c.polarity(), Polarity::HigherIsBetter);
        assert_eq!(c.to_string().parse::<OutcomeId>().unwrap(), c);
        assert!("custom".parse::<OutcomeId>().is_err());
    }

    #[test]
    fn out_of_range_coordinates_rejected() {
        let text = "lat,lon,outcome,value\n95,0,density,1\n";
        let loaded = load_records(text.as_bytes()).unwrap();
        assert!(loaded.records.is_empty());
        assert_eq!(loaded.errors.len(), 1);
    }

    #[test]
    fn twenty_values_higher_is_better() {
        let vals: Vec<f64> = (1..=20).map(f64::from).collect();
        let r = recs(&vals, OutcomeId::SocialCapital);
        let d = select_deciles(&r, 0.1).unwrap();
        assert_eq!(values(&r, &d.best), vec![20.0, 19.0]);
        assert_eq!(values(&r, &d.worst), vec![1.0, 2.0]);
    }

    #[test]
    fn half_split_of_ten() {
        let vals: Vec<f64> = (1..=10).map(f64::from).collect();
        let r = recs(&vals, OutcomeId::SocialCapital);
        let d = select_deciles(&r, 0.5).unwrap();
        let mut best = values(&r, &d.best);
        best.sort_by(f64::total_cmp);
        assert_eq!(best, vec![6.0, 7.0, 8.0, 9.0, 10.0]);
        let mut worst = values(&r, &d.worst);
        worst.sort_by(f64::total_cmp);
        assert_eq!(worst, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn lower_is_better_flips_ends() {
        let vals: Vec<f64> = (1..=20).map(f64::from).collect();
        let r = recs(&vals, OutcomeId::GeneralHealth);
        let d = select_deciles(&r, 0.1).unwrap();
        assert_eq!(values(&r, &d.best), vec![1.0, 2.0]);
        assert_eq!(values(&r, &d.worst), vec![20.0, 19.0]);
    }

    #[test]
    fn all_tied_overlaps() {
        let r = recs(&[3.0; 20], OutcomeId::GeneralHealth);
        assert!(matches!(select_deciles(&r, 0.1), Err(GeoError::Overlap { .. })));
    }

    #[test]
    fn fraction_and_outcome_checks() {
        let r = recs(&[1.0, 2.0], OutcomeId::Density);
        assert!(matches!(select_deciles(&r, 0.0), Err(GeoError::InvalidFraction(_))));
        assert!(matches!(select_deciles(&r, 0.51), Err(GeoError::InvalidFraction(_))));
        assert_eq!(select_deciles(&[], 0.1), Err(GeoError::Empty));
        let mut mixed = r.clone();
        mixed.push(OutcomeRecord::new(0.0, 0.0, OutcomeId::SocialCapital, 1.0));
        assert!(matches!(select_deciles(&mixed, 0.1), Err(GeoError::MixedOutcomes(..))));
    }

    #[test]
    fn group_means() {
        let text = "lat,lon,outcome,value,group\n0,0,density,1,a\n2,2,density,3,a\n5,5,density,9,\n1,1,density,4,b\n";
        let loaded = load_records(text.as_bytes()).unwrap();
        let agg = aggregate_by_group(&loaded.records);
        assert_eq!(agg.len(), 3);
        assert_eq!((agg[0].lat, agg[0].value), (1.0, 2.0));
        assert_eq!(agg[1].value, 9.0);
        assert_eq!(agg[2].group.as_deref(), Some("b"));
    }
}
