//! Map outputs: GeoJSON points and binary PPM/PGM rasters.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde_json::{json, Value};

use crate::error::{Error, Result};

/// Low to high risk: green, yellow, orange, red.
pub const ZONE_PALETTE: [[u8; 3]; 4] = [[46, 139, 87], [240, 220, 60], [245, 140, 30], [200, 30, 30]];

/// Colour of cells with no node.
pub const BACKGROUND: [u8; 3] = [0, 0, 0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapPoint {
    pub node_id: u32,
    pub lat: f64,
    pub lon: f64,
    pub zone: usize,
    pub high_risk_freq: Option<f64>,
}

pub fn geojson(points: &[MapPoint]) -> Value {
    let features: Vec<Value> = points
        .iter()
        .map(|p| {
            let mut props = serde_json::Map::new();
            props.insert("node_id".into(), json!(p.node_id));
            props.insert("zone".into(), json!(p.zone));
            if let Some(f) = p.high_risk_freq {
                props.insert("high_risk_freq".into(), json!(f));
            }
            json!({
                "type": "Feature",
                "geometry": { "type": "Point", "coordinates": [p.lon, p.lat] },
                "properties": props,
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}

pub fn write_geojson(path: &Path, points: &[MapPoint]) -> Result<()> {
    let text = serde_json::to_string_pretty(&geojson(points))
        .map_err(|e| Error::InvalidInput(format!("GeoJSON serialization: {e}")))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Pixel layout of scattered points: distinct latitudes become rows (north
/// first), distinct longitudes columns.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterLayout {
    pub width: usize,
    pub height: usize,
    /// `(row, col)` per input point.
    pub cells: Vec<(usize, usize)>,
}

pub fn raster_layout(coords: &[(f64, f64)]) -> Result<RasterLayout> {
    if coords.is_empty() {
        return Err(Error::EmptySample);
    }
    let index = |vals: Vec<f64>, descending: bool| -> BTreeMap<u64, usize> {
        let mut v = vals;
        v.sort_by(f64::total_cmp);
        v.dedup();
        if descending {
            v.reverse();
        }
        v.into_iter().enumerate().map(|(i, x)| (x.to_bits(), i)).collect()
    };
    let lat_ix = index(coords.iter().map(|c| c.0).collect(), true);
    let lon_ix = index(coords.iter().map(|c| c.1).collect(), false);
    let cells = coords
        .iter()
        .map(|c| (lat_ix[&c.0.to_bits()], lon_ix[&c.1.to_bits()]))
        .collect();
    Ok(RasterLayout {
        width: lon_ix.len(),
        height: lat_ix.len(),
        cells,
    })
}

pub fn zone_colour(zone: usize, k: usize) -> [u8; 3] {
    if k <= ZONE_PALETTE.len() {
        // spread fewer zones over the ends of the palette
        let idx = if k <= 1 { 0 } else { zone * (ZONE_PALETTE.len() - 1) / (k - 1) };
        ZONE_PALETTE[idx.min(ZONE_PALETTE.len() - 1)]
    } else {
        let g = (zone * 255 / (k - 1)) as u8;
        [g, g, g]
    }
}

/// Binary PPM of zone colours.
pub fn write_zone_ppm(path: &Path, coords: &[(f64, f64)], zones: &[usize], k: usize) -> Result<()> {
    if coords.len() != zones.len() {
        return Err(Error::shape("raster coords vs zones", coords.len(), zones.len()));
    }
    let layout = raster_layout(coords)?;
    let mut pixels = vec![BACKGROUND; layout.width * layout.height];
    for (&(r, c), &z) in layout.cells.iter().zip(zones) {
        pixels[r * layout.width + c] = zone_colour(z, k);
    }
    let mut out = format!("P6\n{} {}\n255\n", layout.width, layout.height).into_bytes();
    out.extend(pixels.iter().flatten());
    write_bytes(path, &out)
}

/// Binary PGM of values in `[0, 1]` (clamped); empty cells are 0.
pub fn write_fraction_pgm(path: &Path, coords: &[(f64, f64)], values: &[f64]) -> Result<()> {
    if coords.len() != values.len() {
        return Err(Error::shape("raster coords vs values", coords.len(), values.len()));
    }
    let layout = raster_layout(coords)?;
    let mut pixels = vec![0u8; layout.width * layout.height];
    for (&(r, c), &v) in layout.cells.iter().zip(values) {
        let v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
        pixels[r * layout.width + c] = (v * 255.0).round() as u8;
    }
    let mut out = format!("P5\n{} {}\n255\n", layout.width, layout.height).into_bytes();
    out.extend(pixels);
    write_bytes(path, &out)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geojson_shape() {
        let v = geojson(&[MapPoint {
            node_id: 4,
            lat: 10.5,
            lon: -20.0,
            zone: 3,
            high_risk_freq: Some(0.5),
        }]);
        assert_eq!(v["type"], "FeatureCollection");
        let f = &v["features"][0];
        assert_eq!(f["geometry"]["coordinates"], json!([-20.0, 10.5]));
        assert_eq!(f["properties"]["zone"], 3);
        assert_eq!(f["properties"]["high_risk_freq"], 0.5);
    }

    #[test]
    fn layout_north_up() {
        let l = raster_layout(&[(0.0, 0.0), (0.5, 0.0), (0.0, 1.0)]).unwrap();
        assert_eq!((l.width, l.height), (2, 2));
        assert_eq!(l.cells, vec![(1, 0), (0, 0), (1, 1)]);
    }

    #[test]
    fn ppm_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.ppm");
        write_zone_ppm(&p, &[(0.0, 0.0), (0.0, 1.0)], &[0, 3], 4).unwrap();
        let b = std::fs::read(&p).unwrap();
        let header = b"P6\n2 1\n255\n";
        assert_eq!(&b[..header.len()], header);
        assert_eq!(&b[header.len()..], &[46, 139, 87, 200, 30, 30]);
    }

    #[test]
    fn colours_cover_range() {
        assert_eq!(zone_colour(1, 2), ZONE_PALETTE[3]);
        assert_eq!(zone_colour(0, 1), ZONE_PALETTE[0]);
        assert_eq!(zone_colour(5, 6), [255, 255, 255]);
    }
}
