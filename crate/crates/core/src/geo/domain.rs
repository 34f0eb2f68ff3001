use std::collections::HashSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::records::{select_deciles, OutcomeId, OutcomeRecord};
use super::spatial::{match_images, ImageRef};
use super::GeoError;

pub const DEFAULT_FRACTION: f64 = 0.10;
pub const DEFAULT_RADIUS_M: f64 = 50.0;

#[derive(Clone, Debug, PartialEq)]
pub struct DomainPair {
    pub outcome: OutcomeId,
    pub best: Vec<ImageRef>,
    pub worst: Vec<ImageRef>,
    pub fraction: f64,
    pub radius_m: f64,
}

/// Bookkeeping from [`build_domain_pair`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DomainStats {
    pub selected_best: usize,
    pub selected_worst: usize,
    /// Selected locations with no image inside the radius.
    pub unmatched_best: usize,
    pub unmatched_worst: usize,
    /// Images claimed by both sides and therefore dropped from each.
    pub contested: usize,
}

/// Select deciles, then match each side's locations to images. Repeated
/// images within a side are kept once; images matched from both sides are
/// dropped so the two domains stay disjoint.
pub fn build_domain_pair(
    records: &[OutcomeRecord],
    images: &[ImageRef],
    fraction: f64,
    radius_m: f64,
) -> Result<(DomainPair, DomainStats), GeoError> {
    let deciles = select_deciles(records, fraction)?;
    let side = |idx: &[usize]| {
        let locs: Vec<_> = idx.iter().map(|&i| records[i].location()).collect();
        let matches = match_images(&locs, images, radius_m);
        let unmatched = locs.len() - matches.len();
        let mut seen = HashSet::new();
        let refs: Vec<ImageRef> = matches
            .into_iter()
            .filter(|m| seen.insert(m.image.id.clone()))
            .map(|m| m.image)
            .collect();
        (refs, unmatched)
    };
    let (best, unmatched_best) = side(&deciles.best);
    let (worst, unmatched_worst) = side(&deciles.worst);
    let best_ids: HashSet<&str> = best.iter().map(|i| i.id.as_str()).collect();
    let worst_ids: HashSet<&str> = worst.iter().map(|i| i.id.as_str()).collect();
    let contested: HashSet<String> = best_ids
        .intersection(&worst_ids)
        .map(|s| s.to_string())
        .collect();
    let keep = |v: Vec<ImageRef>| -> Vec<ImageRef> {
        v.into_iter().filter(|i| !contested.contains(&i.id)).collect()
    };
    let stats = DomainStats {
        selected_best: deciles.best.len(),
        selected_worst: deciles.worst.len(),
        unmatched_best,
        unmatched_worst,
        contested: contested.len(),
    };
    let pair = DomainPair {
        outcome: records[0].outcome,
        best: keep(best),
        worst: keep(worst),
        fraction,
        radius_m,
    };
    Ok((pair, stats))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Best,
    Worst,
}

#[derive(Serialize, Deserialize)]
struct ManifestRow {
    domain: Side,
    id: String,
    lat: f64,
    lon: f64,
    heading: u16,
    path: String,
}

/// Writes `domain,id,lat,lon,heading,path` records, best side first.
pub fn write_domain_manifest<W: Write>(sink: W, pair: &DomainPair) -> Result<(), GeoError> {
    let mut w = csv::Writer::from_writer(sink);
    let rows = pair
        .best
        .iter()
        .map(|i| (Side::Best, i))
        .chain(pair.worst.iter().map(|i| (Side::Worst, i)));
    let mut any = false;
    for (domain, img) in rows {
        any = true;
        w.serialize(ManifestRow {
            domain,
            id: img.id.clone(),
            lat: img.lat,
            lon: img.lon,
            heading: img.heading,
            path: img.path.clone(),
        })
        .map_err(|e| GeoError::Csv(e.to_string()))?;
    }
    if !any {
        w.write_record(["domain", "id", "lat", "lon", "heading", "path"])
            .map_err(|e| GeoError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| GeoError::Csv(e.to_string()))
}

/// Reads a manifest back as (best, worst) image lists.
pub fn read_domain_manifest<R: Read>(source: R) -> Result<(Vec<ImageRef>, Vec<ImageRef>), GeoError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(source);
    let (mut best, mut worst) = (Vec::new(), Vec::new());
    for row in reader.deserialize::<ManifestRow>() {
        let r = row.map_err(|e| GeoError::Csv(e.to_string()))?;
        let img = ImageRef {
            id: r.id,
            lat: r.lat,
            lon: r.lon,
            heading: r.heading,
            path: r.path,
        };
        match r.domain {
            Side::Best => best.push(img),
            Side::Worst => worst.push(img),
        }
    }
    Ok((best, worst))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (Vec<OutcomeRecord>, Vec<ImageRef>) {
        let records: Vec<OutcomeRecord> = (0..20)
            .map(|i| OutcomeRecord::new(0.0, i as f64 * 0.01, OutcomeId::GeneralHealth, i as f64))
            .collect();
        let images = (0..20)
            .map(|i| ImageRef {
                id: format!("img{i:02}"),
                lat: 0.0,
                lon: i as f64 * 0.01 + 0.0001,
                heading: [0, 90, 180, 270][i % 4],
                path: format!("img{i:02}.png"),
            })
            .collect();
        (records, images)
    }

    #[test]
    fn twenty_record_fixture() {
        let (records, images) = fixture();
        let (pair, stats) = build_domain_pair(&records, &images, 0.1, 50.0).unwrap();
        let ids = |v: &[ImageRef]| v.iter().map(|i| i.id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&pair.best), ["img00", "img01"]);
        assert_eq!(ids(&pair.worst), ["img19", "img18"]);
        assert_eq!(stats.selected_best, 2);
        assert_eq!(stats.unmatched_best + stats.unmatched_worst, 0);
    }

    #[test]
    fn zero_radius_excludes_everything() {
        let (records, images) = fixture();
        let (pair, stats) = build_domain_pair(&records, &images, 0.1, 0.0).unwrap();
        assert!(pair.best.is_empty() && pair.worst.is_empty());
        assert_eq!(stats.unmatched_best, 2);
    }

    #[test]
    fn contested_images_are_dropped() {
        let records: Vec<OutcomeRecord> = (0..10)
            .map(|i| OutcomeRecord::new(0.0, 0.0, OutcomeId::SocialCapital, i as f64))
            .collect();
        let images = vec![ImageRef {
            id: "only".into(),
            lat: 0.0,
            lon: 0.0,
            heading: 0,
            path: "only.png".into(),
        }];
        let (pair, stats) = build_domain_pair(&records, &images, 0.2, 50.0).unwrap();
        assert!(pair.best.is_empty() && pair.worst.is_empty());
        assert_eq!(stats.contested, 1);
    }

    #[test]
    fn manifest_round_trip() {
        let (records, images) = fixture();
        let (pair, _) = build_domain_pair(&records, &images, 0.2, 50.0).unwrap();
        let mut buf = Vec::new();
        write_domain_manifest(&mut buf, &pair).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("domain,id,lat,lon,heading,path\nbest,"));
        let (best, worst) = read_domain_manifest(buf.as_slice()).unwrap();
        assert_eq!((best, worst), (pair.best, pair.worst));
    }
}
