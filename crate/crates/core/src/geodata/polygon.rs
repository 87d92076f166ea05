//! Closed lon/lat rings and their GeoJSON form.

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Closed counter-clockwise ring of `[lon, lat]` vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct GeoPolygon {
    ring: Vec<[f64; 2]>,
}

impl GeoPolygon {
    pub fn new(ring: Vec<[f64; 2]>) -> Result<Self> {
        if ring.len() < 4 {
            return Err(Error::Contract(format!("a ring needs at least 4 vertices, got {}", ring.len())));
        }
        if ring.first() != ring.last() {
            return Err(Error::Contract("ring is not closed".into()));
        }
        if signed_area(&ring) <= 0.0 {
            return Err(Error::Contract("ring must be counter-clockwise with nonzero area".into()));
        }
        Ok(Self { ring })
    }

    pub fn ring(&self) -> &[[f64; 2]] {
        &self.ring
    }

    /// `((lon_min, lon_max), (lat_min, lat_max))`.
    pub fn bounds(&self) -> ((f64, f64), (f64, f64)) {
        let fold = |k: usize| {
            self.ring
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[k]), hi.max(p[k])))
        };
        (fold(0), fold(1))
    }

    /// Shoelace area in square degrees; positive for counter-clockwise.
    pub fn signed_area(&self) -> f64 {
        signed_area(&self.ring)
    }

    pub fn to_geojson(&self) -> serde_json::Value {
        json!({ "type": "Polygon", "coordinates": [self.ring] })
    }

    pub fn from_geojson(value: &serde_json::Value) -> Result<Self> {
        if value.get("type").and_then(|t| t.as_str()) != Some("Polygon") {
            return Err(Error::Parse {
                line: 0,
                message: "GeoJSON geometry is not a Polygon".into(),
            });
        }
        let rings: Vec<Vec<[f64; 2]>> = serde_json::from_value(value["coordinates"].clone()).map_err(|e| Error::Parse {
            line: 0,
            message: format!("GeoJSON coordinates: {e}"),
        })?;
        let outer = rings.into_iter().next().ok_or_else(|| Error::Parse {
            line: 0,
            message: "GeoJSON polygon has no rings".into(),
        })?;
        Self::new(outer)
    }

    /// SHA-256 (hex) of the ring with coordinates rounded to 1e-9 degrees.
    /// Used as the key of imagery fixtures.
    pub fn digest(&self) -> String {
        let canonical: Vec<String> = self.ring.iter().map(|p| format!("{:.9},{:.9}", p[0], p[1])).collect();
        hex::encode(Sha256::digest(canonical.join(";").as_bytes()))
    }
}

impl TryFrom<Vec<[f64; 2]>> for GeoPolygon {
    type Error = Error;

    fn try_from(ring: Vec<[f64; 2]>) -> Result<Self> {
        Self::new(ring)
    }
}

impl From<GeoPolygon> for Vec<[f64; 2]> {
    fn from(p: GeoPolygon) -> Self {
        p.ring
    }
}

fn signed_area(ring: &[[f64; 2]]) -> f64 {
    ring.windows(2).map(|w| w[0][0] * w[1][1] - w[1][0] * w[0][1]).sum::<f64>() / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> GeoPolygon {
        GeoPolygon::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.0, 0.0]]).unwrap()
    }

    #[test]
    fn validation() {
        assert_eq!(unit().signed_area(), 1.0);
        assert!(GeoPolygon::new(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0], [0.0, 0.0]]).is_err());
        assert!(GeoPolygon::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).is_err());
    }

    #[test]
    fn geojson_round_trip() {
        let p = unit();
        let text = serde_json::to_string(&p.to_geojson()).unwrap();
        let back = GeoPolygon::from_geojson(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, p);
        assert!(text.contains("\"Polygon\""));
    }

    #[test]
    fn digest_ignores_sub_nanodegree_noise() {
        let mut ring = unit().ring().to_vec();
        ring[2][0] += 1e-13;
        assert_eq!(GeoPolygon::new(ring).unwrap().digest(), unit().digest());
        assert_eq!(unit().digest().len(), 64);
    }
}
