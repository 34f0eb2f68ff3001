use std::cmp::Ordering;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::records::LatLon;
use super::GeoError;

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

pub const HEADINGS: [u16; 4] = [0, 90, 180, 270];

/// Great-circle distance on a sphere of radius [`EARTH_RADIUS_M`].
pub fn haversine_m(a: LatLon, b: LatLon) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRef {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
    pub heading: u16,
    pub path: String,
}

impl ImageRef {
    pub fn location(&self) -> LatLon {
        LatLon::new(self.lat, self.lon)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !HEADINGS.contains(&self.heading) {
            return Err(format!("image {}: heading {} not in {HEADINGS:?}", self.id, self.heading));
        }
        if !self.location().is_valid() {
            return Err(format!("image {}: coordinates out of range", self.id));
        }
        Ok(())
    }

    /// Total order used to break distance ties.
    fn tie_order(&self, other: &ImageRef) -> Ordering {
        self.id
            .cmp(&other.id)
            .then(self.path.cmp(&other.path))
            .then(self.heading.cmp(&other.heading))
            .then(self.lat.total_cmp(&other.lat))
            .then(self.lon.total_cmp(&other.lon))
    }
}

/// Reads `id,lat,lon,heading,path` records.
pub fn read_image_index<R: Read>(source: R) -> Result<Vec<ImageRef>, GeoError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(source);
    let mut out = Vec::new();
    for row in reader.deserialize::<ImageRef>() {
        let img = row.map_err(|e| GeoError::Csv(e.to_string()))?;
        img.validate().map_err(GeoError::Csv)?;
        out.push(img);
    }
    Ok(out)
}

pub fn write_image_index<W: Write>(sink: W, images: &[ImageRef]) -> Result<(), GeoError> {
    let mut w = csv::Writer::from_writer(sink);
    for img in images {
        w.serialize(img).map_err(|e| GeoError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| GeoError::Csv(e.to_string()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Match {
    /// Index into the location list.
    pub location: usize,
    pub image: ImageRef,
    pub distance_m: f64,
}

/// Images sorted by latitude for band-limited nearest-neighbour search.
pub struct ImageIndex<'a> {
    by_lat: Vec<&'a ImageRef>,
}

impl<'a> ImageIndex<'a> {
    pub fn new(images: &'a [ImageRef]) -> Self {
        let mut by_lat: Vec<&ImageRef> = images.iter().collect();
        by_lat.sort_by(|a, b| a.lat.total_cmp(&b.lat).then(a.tie_order(b)));
        ImageIndex { by_lat }
    }

    /// Nearest image within `radius_m`, ties broken by id.
    pub fn nearest(&self, at: LatLon, radius_m: f64) -> Option<(&'a ImageRef, f64)> {
        // Great-circle distance is at least R·|Δφ|, so only a latitude band can match.
        let band = (radius_m / EARTH_RADIUS_M).to_degrees() * (1.0 + 1e-9) + 1e-12;
        let lo = self.by_lat.partition_point(|img| img.lat < at.lat - band);
        let hi = self.by_lat.partition_point(|img| img.lat <= at.lat + band);
        nearest_of(self.by_lat[lo..hi].iter().copied(), at, radius_m)
    }
}

fn nearest_of<'a>(
    images: impl Iterator<Item = &'a ImageRef>,
    at: LatLon,
    radius_m: f64,
) -> Option<(&'a ImageRef, f64)> {
    let mut best: Option<(&ImageRef, f64)> = None;
    for img in images {
        let d = haversine_m(at, img.location());
        if d > radius_m {
            continue;
        }
        let better = match best {
            None => true,
            Some((b, bd)) => d < bd || (d == bd && img.tie_order(b) == Ordering::Less),
        };
        if better {
            best = Some((img, d));
        }
    }
    best
}

/// Matches each location to its nearest image within `radius_m`; locations
/// without one are left out. Output follows location order.
pub fn match_images(locations: &[LatLon], index: &[ImageRef], radius_m: f64) -> Vec<Match> {
    let idx = ImageIndex::new(index);
    locations
        .par_iter()
        .enumerate()
        .filter_map(|(i, &at)| {
            idx.nearest(at, radius_m).map(|(img, d)| Match {
                location: i,
                image: img.clone(),
                distance_m: d,
            })
        })
        .collect()
}

/// Exhaustive scan with the same tie rule as [`match_images`].
pub fn match_images_brute_force(
    locations: &[LatLon],
    index: &[ImageRef],
    radius_m: f64,
) -> Vec<Match> {
    locations
        .iter()
        .enumerate()
        .filter_map(|(i, &at)| {
            nearest_of(index.iter(), at, radius_m).map(|(img, d)| Match {
                location: i,
                image: img.clone(),
                distance_m: d,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(id: &str, lat: f64, lon: f64) -> ImageRef {
        ImageRef {
            id: id.into(),
            lat,
            lon,
            heading: 0,
            path: format!("{id}.png"),
        }
    }

    #[test]
    fn haversine_reference_distances() {
        let o = LatLon::new(0.0, 0.0);
        assert_eq!(haversine_m(o, o), 0.0);
        let north = haversine_m(o, LatLon::new(0.0004, 0.0));
        assert!((north - 0.0004f64.to_radians() * EARTH_RADIUS_M).abs() < 1e-6);
        assert!((north - 44.5).abs() < 0.05, "{north}");
        let east = haversine_m(o, LatLon::new(0.0, 0.0006));
        assert!((east - 66.7).abs() < 0.05 && east > 50.0, "{east}");
    }

    #[test]
    fn haversine_symmetric() {
        let a = LatLon::new(-37.81, 144.96);
        let b = LatLon::new(-37.70, 145.10);
        assert_eq!(haversine_m(a, b), haversine_m(b, a));
    }

    #[test]
    fn coincident_and_too_far() {
        let images = vec![img("a", 0.0, 0.0006), img("b", 10.0, 10.0)];
        let m = match_images(&[LatLon::new(10.0, 10.0), LatLon::new(0.0, 0.0)], &images, 50.0);
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].location, m[0].image.id.as_str(), m[0].distance_m), (0, "b", 0.0));
    }

    #[test]
    fn distance_ties_go_to_smallest_id() {
        let images = vec![img("z", 0.0001, 0.0), img("m", -0.0001, 0.0)];
        let m = match_images(&[LatLon::new(0.0, 0.0)], &images, 50.0);
        assert_eq!(m[0].image.id, "m");
    }

    #[test]
    fn index_round_trip() {
        let images = vec![
            ImageRef {
                heading: 90,
                ..img("x1", -37.8, 144.9)
            },
            img("x2", -37.81, 144.91),
        ];
        let mut buf = Vec::new();
        write_image_index(&mut buf, &images).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("id,lat,lon,heading,path\n"));
        assert_eq!(read_image_index(buf.as_slice()).unwrap(), images);
    }

    #[test]
    fn bad_heading_rejected() {
        let text = "id,lat,lon,heading,path\na,0,0,45,a.png\n";
        assert!(read_image_index(text.as_bytes()).is_err());
    }
}
