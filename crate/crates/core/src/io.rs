//! On-disk formats: CSV tables, checksummed raw rasters, GeoJSON footprints.
//!
//! Rasters are stored as a raw little-endian `f32` file (row-major, row
//! `i = 1` first, `h * w` values) next to a JSON sidecar holding the grid,
//! the SHA-256 of the raw bytes and whatever provenance the writer adds.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::energy::{EnergyError, EnergyMap, EnergyWeights, GisRaster};
use crate::geo::{Camera, GeoError, GeoPoint, GridSpec, Planar};
use crate::sbd::{Configuration, RunTrace};
use crate::simulator::{Detection, GroundTruthObject};

pub const RASTER_FORMAT: &str = "f32le";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Csv { path: PathBuf, message: String },
    #[error("{}: {message}", path.display())]
    Json { path: PathBuf, message: String },
    #[error("{}: checksum mismatch (sidecar {expected}, data {actual})", path.display())]
    Checksum {
        path: PathBuf,
        expected: String,
        actual: String,
    },
    #[error("{}: {message}", path.display())]
    Invalid { path: PathBuf, message: String },
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn invalid(path: &Path, message: impl Into<String>) -> FormatError {
    FormatError::Invalid {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| FormatError::Json {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, FormatError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| FormatError::Json {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

// --- CSV -----------------------------------------------------------------

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), FormatError> {
    let csv_err = |e: csv::Error| FormatError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

fn read_csv<T: DeserializeOwned>(path: &Path, header: &[&str]) -> Result<Vec<T>, FormatError> {
    let csv_err = |e: csv::Error| FormatError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let found: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if found != header {
        return Err(FormatError::Csv {
            path: path.to_path_buf(),
            message: format!("header {found:?} does not match expected {header:?}"),
        });
    }
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

#[derive(Serialize, Deserialize)]
struct PointRow {
    id: String,
    lat: f64,
    lon: f64,
}

const POINT_HEADER: [&str; 3] = ["id", "lat", "lon"];

fn read_points(path: &Path) -> Result<Vec<(String, GeoPoint)>, FormatError> {
    let rows: Vec<PointRow> = read_csv(path, &POINT_HEADER)?;
    rows.into_iter()
        .enumerate()
        .map(|(k, r)| {
            GeoPoint::new(r.lat, r.lon)
                .map(|p| (r.id, p))
                .map_err(|e| invalid(path, format!("record {}: {e}", k + 1)))
        })
        .collect()
}

pub fn write_objects(path: &Path, objects: &[GroundTruthObject]) -> Result<(), FormatError> {
    write_csv(
        path,
        objects.iter().map(|o| PointRow {
            id: o.id.clone(),
            lat: o.position.lat,
            lon: o.position.lon,
        }),
    )
}

pub fn read_objects(path: &Path) -> Result<Vec<GroundTruthObject>, FormatError> {
    Ok(read_points(path)?
        .into_iter()
        .map(|(id, position)| GroundTruthObject { id, position })
        .collect())
}

pub fn write_cameras(path: &Path, cameras: &[Camera]) -> Result<(), FormatError> {
    write_csv(
        path,
        cameras.iter().map(|c| PointRow {
            id: c.id.clone(),
            lat: c.position.lat,
            lon: c.position.lon,
        }),
    )
}

pub fn read_cameras(path: &Path) -> Result<Vec<Camera>, FormatError> {
    let cams: Vec<Camera> = read_points(path)?
        .into_iter()
        .map(|(id, position)| Camera { id, position })
        .collect();
    let mut ids: Vec<&str> = cams.iter().map(|c| c.id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(invalid(path, format!("duplicate camera id `{}`", w[0])));
    }
    Ok(cams)
}

const DETECTION_HEADER: [&str; 5] = [
    "camera_id",
    "bearing_deg",
    "distance_m",
    "confidence",
    "is_contaminant",
];

pub fn write_detections(path: &Path, detections: &[Detection]) -> Result<(), FormatError> {
    write_csv(path, detections)
}

pub fn read_detections(path: &Path) -> Result<Vec<Detection>, FormatError> {
    let rows: Vec<Detection> = read_csv(path, &DETECTION_HEADER)?;
    for (k, d) in rows.iter().enumerate() {
        if !(d.confidence > 0.5 && d.confidence < 1.0) {
            return Err(invalid(path, format!("record {}: column confidence: {} outside (0.5, 1)", k + 1, d.confidence)));
        }
        if !(d.distance_m > 0.0 && d.distance_m.is_finite()) {
            return Err(invalid(path, format!("record {}: column distance_m: {} must be positive", k + 1, d.distance_m)));
        }
        if !d.bearing_deg.is_finite() {
            return Err(invalid(path, format!("record {}: column bearing_deg is not finite", k + 1)));
        }
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub pixel_i: u32,
    pub pixel_j: u32,
    pub radius_px: u32,
    pub lat: f64,
    pub lon: f64,
    pub radius_m: f64,
}

const PREDICTION_HEADER: [&str; 6] = ["pixel_i", "pixel_j", "radius_px", "lat", "lon", "radius_m"];

pub fn prediction_rows(best: &Configuration, grid: &GridSpec) -> Vec<PredictionRow> {
    best.iter()
        .map(|p| {
            let geo = grid.unproject(p.pixel);
            PredictionRow {
                pixel_i: p.pixel.i,
                pixel_j: p.pixel.j,
                radius_px: p.radius,
                lat: geo.lat,
                lon: geo.lon,
                radius_m: f64::from(p.radius) * grid.resolution,
            }
        })
        .collect()
}

pub fn write_predictions(path: &Path, rows: &[PredictionRow]) -> Result<(), FormatError> {
    write_csv(path, rows)
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>, FormatError> {
    let rows: Vec<PredictionRow> = read_csv(path, &PREDICTION_HEADER)?;
    for (k, r) in rows.iter().enumerate() {
        GeoPoint::new(r.lat, r.lon).map_err(|e| invalid(path, format!("record {}: {e}", k + 1)))?;
    }
    Ok(rows)
}

#[derive(Serialize)]
struct TraceRow {
    iteration: u64,
    config_size: usize,
    #[serde(rename = "H")]
    energy: f64,
    #[serde(rename = "H_min")]
    best_energy: f64,
    births: usize,
    deaths: usize,
}

pub fn write_trace(path: &Path, trace: &RunTrace) -> Result<(), FormatError> {
    write_csv(
        path,
        trace.records.iter().map(|r| TraceRow {
            iteration: r.iteration,
            config_size: r.config_size,
            energy: r.energy,
            best_energy: r.best_energy,
            births: r.births,
            deaths: r.deaths,
        }),
    )
}

/// Writes arbitrary serializable rows (metric tables, curves).
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), FormatError> {
    write_csv(path, rows)
}

// --- Rasters -------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RasterKind {
    Energy,
    Gis,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RasterSidecar {
    pub kind: RasterKind,
    pub format: String,
    /// Raw file name, relative to the sidecar.
    pub data: String,
    pub grid: GridSpec,
    pub sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<EnergyWeights>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intersections: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

/// Paths of a raster pair written as `<dir>/<stem>.json` + `<dir>/<stem>.f32`.
pub fn raster_paths(dir: &Path, stem: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{stem}.json")), dir.join(format!("{stem}.f32")))
}

fn encode_f32(values: impl Iterator<Item = f64>) -> Vec<u8> {
    let mut bytes = Vec::new();
    for v in values {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    bytes
}

/// Writes the raw raster and its sidecar; `sidecar.sha256`/`data` are filled in.
fn write_raster(
    dir: &Path,
    stem: &str,
    values: impl Iterator<Item = f64>,
    mut sidecar: RasterSidecar,
) -> Result<PathBuf, FormatError> {
    let (json, raw) = raster_paths(dir, stem);
    let bytes = encode_f32(values);
    sidecar.sha256 = sha256_hex(&bytes);
    sidecar.data = format!("{stem}.f32");
    sidecar.format = RASTER_FORMAT.to_string();
    fs::write(&raw, &bytes).map_err(io_err(&raw))?;
    write_json(&json, &sidecar)?;
    Ok(json)
}

/// Reads a raster, verifying format, size and checksum.
pub fn read_raster(sidecar_path: &Path) -> Result<(RasterSidecar, Vec<f64>), FormatError> {
    let sidecar: RasterSidecar = read_json(sidecar_path)?;
    sidecar.grid.validate()?;
    if sidecar.format != RASTER_FORMAT {
        return Err(invalid(sidecar_path, format!("unsupported raster format `{}`", sidecar.format)));
    }
    let raw = sidecar_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&sidecar.data);
    let bytes = fs::read(&raw).map_err(io_err(&raw))?;
    let expected = sidecar.grid.len() * 4;
    if bytes.len() != expected {
        return Err(invalid(&raw, format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let actual = sha256_hex(&bytes);
    if actual != sidecar.sha256 {
        return Err(FormatError::Checksum {
            path: raw,
            expected: sidecar.sha256.clone(),
            actual,
        });
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    Ok((sidecar, values))
}

pub fn save_energy_map(
    dir: &Path,
    stem: &str,
    map: &EnergyMap,
    weights: &EnergyWeights,
    intersections: Option<usize>,
    config_hash: Option<String>,
) -> Result<PathBuf, FormatError> {
    let sidecar = RasterSidecar {
        kind: RasterKind::Energy,
        format: String::new(),
        data: String::new(),
        grid: *map.grid(),
        sha256: String::new(),
        weights: Some(*weights),
        intersections,
        config_hash,
    };
    write_raster(dir, stem, map.values().iter().copied(), sidecar)
}

pub fn load_energy_map(sidecar_path: &Path) -> Result<(EnergyMap, RasterSidecar), FormatError> {
    let (sidecar, values) = read_raster(sidecar_path)?;
    if sidecar.kind != RasterKind::Energy {
        return Err(invalid(sidecar_path, "not an energy raster"));
    }
    let map = EnergyMap::from_values(sidecar.grid, values)?;
    Ok((map, sidecar))
}

pub fn save_gis(
    dir: &Path,
    stem: &str,
    gis: &GisRaster,
    config_hash: Option<String>,
) -> Result<PathBuf, FormatError> {
    let sidecar = RasterSidecar {
        kind: RasterKind::Gis,
        format: String::new(),
        data: String::new(),
        grid: *gis.grid(),
        sha256: String::new(),
        weights: None,
        intersections: None,
        config_hash,
    };
    write_raster(dir, stem, gis.occupancy().iter().map(|&v| f64::from(v)), sidecar)
}

pub fn load_gis(sidecar_path: &Path) -> Result<GisRaster, FormatError> {
    let (sidecar, values) = read_raster(sidecar_path)?;
    if sidecar.kind != RasterKind::Gis {
        return Err(invalid(sidecar_path, "not a GIS raster"));
    }
    let occupancy = values
        .iter()
        .enumerate()
        .map(|(k, &v)| match v {
            v if v == 0.0 => Ok(0u8),
            v if v == 1.0 => Ok(1u8),
            v => Err(invalid(sidecar_path, format!("cell {k} holds {v}, expected 0 or 1"))),
        })
        .collect::<Result<Vec<u8>, _>>()?;
    Ok(GisRaster::new(sidecar.grid, occupancy)?)
}

// --- GeoJSON -------------------------------------------------------------

/// Polygon as rings of planar vertices; the first ring is the exterior.
pub type PlanarPolygon = Vec<Vec<Planar>>;

fn parse_ring(v: &Value, grid: &GridSpec) -> Option<Vec<Planar>> {
    v.as_array()?
        .iter()
        .map(|pos| {
            let pos = pos.as_array()?;
            let lon = pos.first()?.as_f64()?;
            let lat = pos.get(1)?.as_f64()?;
            Some(grid.to_planar(GeoPoint { lat, lon }))
        })
        .collect()
}

fn parse_polygon(v: &Value, grid: &GridSpec) -> Option<PlanarPolygon> {
    v.as_array()?.iter().map(|r| parse_ring(r, grid)).collect()
}

fn collect_geometry(geom: &Value, grid: &GridSpec, out: &mut Vec<PlanarPolygon>) -> Result<(), String> {
    let kind = geom.get("type").and_then(Value::as_str).ok_or("geometry without type")?;
    let coords = geom.get("coordinates");
    match kind {
        "Polygon" => out.push(
            coords
                .and_then(|c| parse_polygon(c, grid))
                .ok_or("malformed Polygon coordinates")?,
        ),
        "MultiPolygon" => {
            for poly in coords.and_then(Value::as_array).ok_or("malformed MultiPolygon")? {
                out.push(parse_polygon(poly, grid).ok_or("malformed MultiPolygon coordinates")?);
            }
        }
        "GeometryCollection" => {
            for g in geom
                .get("geometries")
                .and_then(Value::as_array)
                .ok_or("malformed GeometryCollection")?
            {
                collect_geometry(g, grid, out)?;
            }
        }
        // Points and lines carry no occupancy.
        _ => {}
    }
    Ok(())
}

/// Polygons of a GeoJSON document, projected into `grid`'s planar frame.
pub fn parse_geojson_polygons(text: &str, grid: &GridSpec) -> Result<Vec<PlanarPolygon>, String> {
    let doc: Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    match doc.get("type").and_then(Value::as_str) {
        Some("FeatureCollection") => {
            for f in doc
                .get("features")
                .and_then(Value::as_array)
                .ok_or("FeatureCollection without features")?
            {
                if let Some(g) = f.get("geometry").filter(|g| !g.is_null()) {
                    collect_geometry(g, grid, &mut out)?;
                }
            }
        }
        Some("Feature") => {
            if let Some(g) = doc.get("geometry").filter(|g| !g.is_null()) {
                collect_geometry(g, grid, &mut out)?;
            }
        }
        Some(_) => collect_geometry(&doc, grid, &mut out)?,
        None => return Err("document without type".into()),
    }
    Ok(out)
}

/// Even-odd test across every ring, so holes are excluded.
pub fn point_in_polygon(p: Planar, polygon: &PlanarPolygon) -> bool {
    let mut inside = false;
    for ring in polygon {
        let n = ring.len();
        if n < 3 {
            continue;
        }
        let mut j = n - 1;
        for i in 0..n {
            let (a, b) = (ring[i], ring[j]);
            if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
                inside = !inside;
            }
            j = i;
        }
    }
    inside
}

/// Marks every pixel whose centre lies inside any polygon.
pub fn rasterize_polygons(polygons: &[PlanarPolygon], grid: &GridSpec) -> GisRaster {
    let mut occ = vec![0u8; grid.len()];
    let res = grid.resolution;
    let (h, w) = (i64::from(grid.height), i64::from(grid.width));
    for poly in polygons {
        let pts = poly.iter().flatten();
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in pts {
            x0 = x0.min(p.x);
            x1 = x1.max(p.x);
            y0 = y0.min(p.y);
            y1 = y1.max(p.y);
        }
        if !x0.is_finite() {
            continue;
        }
        let j0 = ((x0 / res).floor() as i64).max(1);
        let j1 = ((x1 / res).ceil() as i64 + 1).min(w);
        let i0 = ((y0 / res).floor() as i64).max(1);
        let i1 = ((y1 / res).ceil() as i64 + 1).min(h);
        for i in i0..=i1 {
            for j in j0..=j1 {
                let c = Planar::new((j as f64 - 0.5) * res, (i as f64 - 0.5) * res);
                if point_in_polygon(c, poly) {
                    occ[(i as usize - 1) * w as usize + (j as usize - 1)] = 1;
                }
            }
        }
    }
    GisRaster::new(*grid, occ).expect("binary raster of grid size")
}

pub fn rasterize_geojson(text: &str, grid: &GridSpec) -> Result<GisRaster, String> {
    Ok(rasterize_polygons(&parse_geojson_polygons(text, grid)?, grid))
}

/// GeoJSON FeatureCollection of planar rectangles/polygons.
pub fn polygons_to_geojson(polygons: &[Vec<Planar>], grid: &GridSpec) -> Value {
    let features: Vec<Value> = polygons
        .iter()
        .map(|ring| {
            let mut coords: Vec<Value> = ring
                .iter()
                .map(|p| {
                    let g = grid.to_geo(*p);
                    serde_json::json!([g.lon, g.lat])
                })
                .collect();
            if let Some(first) = coords.first().cloned() {
                coords.push(first);
            }
            serde_json::json!({
                "type": "Feature",
                "properties": { "kind": "building" },
                "geometry": { "type": "Polygon", "coordinates": [coords] }
            })
        })
        .collect();
    serde_json::json!({ "type": "FeatureCollection", "features": features })
}
