//! File formats: the versioned GCR JSON container (bit-exact via a dual
//! decimal + hex encoding), lift files, and OBJ / CSV mesh export.
//!
//! Every numeric payload is serialized twice: a human-readable decimal array
//! and the IEEE-754 bit pattern as 16-digit hex strings. Loading always
//! trusts the hex, so save/load round trips are bit-for-bit.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chart::{Chart, GridField};
use crate::error::{Error, Result};
use crate::gcr::{GcrData, MetricData, SffData};
use crate::immersion::LightConeLift;
use crate::minkowski::MinkowskiSpace;
use crate::mobius_structure::{MobiusStructureField, QuadraticDifferential};

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct FieldBlob {
    pub kind: String,
    pub dims: Vec<usize>,
    /// Width of the boundary band (non-periodic axes) whose entries carry
    /// no accuracy guarantee.
    #[serde(default)]
    pub margin: usize,
    pub data: Vec<f64>,
    pub data_hex: Vec<String>,
}

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct GcrFile {
    pub version: u32,
    pub m: usize,
    pub n: usize,
    pub chart: Chart,
    pub fields: BTreeMap<String, FieldBlob>,
}

fn encode(values: Vec<f64>, kind: &str, dims: Vec<usize>, margin: usize) -> FieldBlob {
    let data_hex = values
        .iter()
        .map(|v| format!("{:016x}", v.to_bits()))
        .collect();
    FieldBlob {
        kind: kind.into(),
        dims,
        margin,
        data: values,
        data_hex,
    }
}

fn decode(blob: &FieldBlob) -> Result<Vec<f64>> {
    if blob.data_hex.len() != blob.data.len() {
        return Err(Error::Schema("hex and decimal payloads differ in length".into()));
    }
    blob.data_hex
        .iter()
        .map(|h| {
            u64::from_str_radix(h, 16)
                .map(f64::from_bits)
                .map_err(|e| Error::Schema(format!("bad hex double: {e}")))
        })
        .collect()
}

fn real_field_blob(f: &GridField<f64>) -> FieldBlob {
    encode(f.values.clone(), "real", vec![], f.valid_margin)
}

fn complex_field_blob(f: &GridField<Complex64>) -> FieldBlob {
    let mut v = Vec::with_capacity(2 * f.values.len());
    for c in &f.values {
        v.push(c.re);
        v.push(c.im);
    }
    encode(v, "complex", vec![], f.valid_margin)
}

fn matrix_field_blob(f: &GridField<DMatrix<f64>>) -> FieldBlob {
    let (r, c) = (f.values[0].nrows(), f.values[0].ncols());
    let mut v = Vec::with_capacity(r * c * f.values.len());
    for m in &f.values {
        for i in 0..r {
            for j in 0..c {
                v.push(m[(i, j)]);
            }
        }
    }
    encode(v, "matrix", vec![r, c], f.valid_margin)
}

fn vector_field_blob(f: &GridField<DVector<f64>>) -> FieldBlob {
    let k = f.values[0].len();
    let mut v = Vec::with_capacity(k * f.values.len());
    for m in &f.values {
        for i in 0..k {
            v.push(m[i]);
        }
    }
    encode(v, "vector", vec![k], f.valid_margin)
}

fn real_field_from(chart: &Chart, blob: &FieldBlob) -> Result<GridField<f64>> {
    let v = decode(blob)?;
    if v.len() != chart.len() {
        return Err(Error::Schema("real field length mismatch".into()));
    }
    Ok(GridField::new(chart.clone(), v).with_margin(blob.margin))
}

fn complex_field_from(chart: &Chart, blob: &FieldBlob) -> Result<GridField<Complex64>> {
    let v = decode(blob)?;
    if v.len() != 2 * chart.len() {
        return Err(Error::Schema("complex field length mismatch".into()));
    }
    Ok(GridField::new(
        chart.clone(),
        v.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect(),
    )
    .with_margin(blob.margin))
}

fn matrix_field_from(chart: &Chart, blob: &FieldBlob) -> Result<GridField<DMatrix<f64>>> {
    if blob.dims.len() != 2 {
        return Err(Error::Schema("matrix field needs dims [r, c]".into()));
    }
    let (r, c) = (blob.dims[0], blob.dims[1]);
    let v = decode(blob)?;
    if v.len() != r * c * chart.len() {
        return Err(Error::Schema("matrix field length mismatch".into()));
    }
    Ok(GridField::new(
        chart.clone(),
        v.chunks(r * c)
            .map(|ch| DMatrix::from_row_slice(r, c, ch))
            .collect(),
    )
    .with_margin(blob.margin))
}

fn vector_field_from(chart: &Chart, blob: &FieldBlob) -> Result<GridField<DVector<f64>>> {
    if blob.dims.len() != 1 {
        return Err(Error::Schema("vector field needs dims [k]".into()));
    }
    let k = blob.dims[0];
    let v = decode(blob)?;
    if v.len() != k * chart.len() {
        return Err(Error::Schema("vector field length mismatch".into()));
    }
    Ok(GridField::new(
        chart.clone(),
        v.chunks(k).map(DVector::from_row_slice).collect(),
    )
    .with_margin(blob.margin))
}

/// Serialize GCR data into the versioned container.
pub fn gcr_to_file(data: &GcrData) -> GcrFile {
    let mut fields = BTreeMap::new();
    match &data.metric {
        MetricData::Arclength => {}
        MetricData::Isothermal { u } => {
            fields.insert("u".to_string(), real_field_blob(u));
        }
        MetricData::General { g } => {
            fields.insert("g".to_string(), matrix_field_blob(g));
        }
    }
    match &data.mobius {
        MobiusStructureField::Curve { ns } => {
            fields.insert("ns".to_string(), real_field_blob(ns));
        }
        MobiusStructureField::Surface { q_m, ns } => {
            fields.insert("qM".to_string(), complex_field_blob(q_m));
            fields.insert("ns".to_string(), real_field_blob(ns));
        }
        MobiusStructureField::ThreeManifold { schouten } => {
            fields.insert("schouten".to_string(), matrix_field_blob(schouten));
        }
    }
    match &data.sff {
        SffData::Curve { a } => {
            fields.insert("A".to_string(), vector_field_blob(a));
        }
        SffData::Surface { kappa } => {
            for (i, k) in kappa.iter().enumerate() {
                fields.insert(format!("kappa_{}", i + 1), complex_field_blob(k));
            }
        }
        SffData::ThreeManifold { ii0 } => {
            if ii0.len() == 1 {
                fields.insert("II0".to_string(), matrix_field_blob(&ii0[0]));
            } else {
                for (i, f) in ii0.iter().enumerate() {
                    fields.insert(format!("II0_{}", i + 1), matrix_field_blob(f));
                }
            }
        }
    }
    let k = data.k();
    for (i, b) in data.beta.iter().enumerate() {
        for a in 0..k {
            for bb in (a + 1)..k {
                let vals: Vec<f64> = b.values.iter().map(|m| m[(a, bb)]).collect();
                fields.insert(
                    format!("beta_{}_{}{}", i + 1, a + 1, bb + 1),
                    encode(vals, "real", vec![], b.valid_margin),
                );
            }
        }
    }
    if let Some(h) = &data.h {
        fields.insert("H".to_string(), vector_field_blob(h));
    }
    if let Some(q) = &data.q {
        fields.insert("q20".to_string(), complex_field_blob(&q.q20));
    }
    GcrFile {
        version: 1,
        m: data.m,
        n: data.n,
        chart: data.chart.clone(),
        fields,
    }
}

/// Deserialize and schema-validate a GCR container.
pub fn gcr_from_file(file: &GcrFile) -> Result<GcrData> {
    if file.version != 1 {
        return Err(Error::Schema(format!("unsupported version {}", file.version)));
    }
    let chart = Chart::new(
        &file.chart.shape,
        &file.chart.spacing,
        &file.chart.periodic,
        &file.chart.origin,
    )?;
    let m = file.m;
    let n = file.n;
    if m >= n || !(1..=3).contains(&m) {
        return Err(Error::Schema(format!("bad dimensions m = {m}, n = {n}")));
    }
    if chart.dim() != m {
        return Err(Error::Schema("chart dimension does not match m".into()));
    }
    let k = n - m;

    // accepted field names for this dimension
    let mut allowed: Vec<String> = vec!["H".into(), "q20".into()];
    match m {
        1 => {
            allowed.push("ns".into());
            allowed.push("A".into());
        }
        2 => {
            allowed.push("u".into());
            allowed.push("qM".into());
            allowed.push("ns".into());
            for a in 1..=k {
                allowed.push(format!("kappa_{a}"));
            }
        }
        _ => {
            allowed.push("g".into());
            allowed.push("schouten".into());
            allowed.push("II0".into());
            for a in 1..=k {
                allowed.push(format!("II0_{a}"));
            }
        }
    }
    for i in 1..=m {
        for a in 1..=k {
            for b in (a + 1)..=k {
                allowed.push(format!("beta_{i}_{a}{b}"));
            }
        }
    }
    for name in file.fields.keys() {
        if !allowed.contains(name) {
            return Err(Error::Schema(format!("unknown field name '{name}'")));
        }
    }

    let get = |name: &str| -> Result<&FieldBlob> {
        file.fields
            .get(name)
            .ok_or_else(|| Error::Schema(format!("missing field '{name}'")))
    };

    let metric = match m {
        1 => MetricData::Arclength,
        2 => MetricData::Isothermal {
            u: real_field_from(&chart, get("u")?)?,
        },
        _ => MetricData::General {
            g: matrix_field_from(&chart, get("g")?)?,
        },
    };
    let mobius = match m {
        1 => MobiusStructureField::Curve {
            ns: real_field_from(&chart, get("ns")?)?,
        },
        2 => MobiusStructureField::Surface {
            q_m: complex_field_from(&chart, get("qM")?)?,
            ns: real_field_from(&chart, get("ns")?)?,
        },
        _ => MobiusStructureField::ThreeManifold {
            schouten: matrix_field_from(&chart, get("schouten")?)?,
        },
    };
    let sff = match m {
        1 => SffData::Curve {
            a: vector_field_from(&chart, get("A")?)?,
        },
        2 => {
            let kappa = (1..=k)
                .map(|a| complex_field_from(&chart, get(&format!("kappa_{a}"))?))
                .collect::<Result<Vec<_>>>()?;
            SffData::Surface { kappa }
        }
        _ => {
            let ii0 = if k == 1 {
                vec![matrix_field_from(&chart, get("II0")?)?]
            } else {
                (1..=k)
                    .map(|a| matrix_field_from(&chart, get(&format!("II0_{a}"))?))
                    .collect::<Result<Vec<_>>>()?
            };
            SffData::ThreeManifold { ii0 }
        }
    };
    let beta: Vec<GridField<DMatrix<f64>>> = (1..=m)
        .map(|i| {
            let mut vals = vec![DMatrix::zeros(k, k); chart.len()];
            let mut margin = 0usize;
            for a in 1..=k {
                for b in (a + 1)..=k {
                    if let Ok(blob) = get(&format!("beta_{i}_{a}{b}")) {
                        let f = real_field_from(&chart, blob)?;
                        margin = margin.max(f.valid_margin);
                        for (lin, v) in f.values.iter().enumerate() {
                            vals[lin][(a - 1, b - 1)] = *v;
                            vals[lin][(b - 1, a - 1)] = -*v;
                        }
                    }
                }
            }
            Ok(GridField::new(chart.clone(), vals).with_margin(margin))
        })
        .collect::<Result<Vec<_>>>()?;
    let h = match file.fields.get("H") {
        Some(blob) => Some(vector_field_from(&chart, blob)?),
        None => None,
    };
    let q = match file.fields.get("q20") {
        Some(blob) => Some(QuadraticDifferential {
            q20: complex_field_from(&chart, blob)?,
        }),
        None => None,
    };
    let data = GcrData {
        m,
        n,
        chart,
        metric,
        mobius,
        sff,
        beta,
        h,
        q,
    };
    data.validate()?;
    Ok(data)
}

pub fn save_gcr(path: &Path, data: &GcrData) -> Result<()> {
    let file = gcr_to_file(data);
    let json = serde_json::to_string_pretty(&file)?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_gcr(path: &Path) -> Result<GcrData> {
    let text = std::fs::read_to_string(path)?;
    let file: GcrFile = serde_json::from_str(&text)?;
    gcr_from_file(&file)
}

/// Lift container: chart plus the sampled sigma field.
#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct LiftFile {
    pub version: u32,
    pub n: usize,
    pub chart: Chart,
    pub sigma: FieldBlob,
}

pub fn save_lift(path: &Path, lift: &LightConeLift) -> Result<()> {
    let file = LiftFile {
        version: 1,
        n: lift.space.n,
        chart: lift.chart.clone(),
        sigma: vector_field_blob(&lift.sigma),
    };
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

pub fn load_lift(path: &Path) -> Result<LightConeLift> {
    let text = std::fs::read_to_string(path)?;
    let file: LiftFile = serde_json::from_str(&text)?;
    if file.version != 1 {
        return Err(Error::Schema(format!("unsupported version {}", file.version)));
    }
    let chart = Chart::new(
        &file.chart.shape,
        &file.chart.spacing,
        &file.chart.periodic,
        &file.chart.origin,
    )?;
    let sigma = vector_field_from(&chart, &file.sigma)?;
    if file.sigma.dims != vec![file.n + 2] {
        return Err(Error::Schema("sigma must have n+2 components".into()));
    }
    Ok(LightConeLift::new(MinkowskiSpace::new(file.n), chart, sigma))
}

fn chart_header(chart: &Chart) -> String {
    format!(
        "# moebius-lab chart shape={:?} spacing={:?} periodic={:?} origin={:?}",
        chart.shape, chart.spacing, chart.periodic, chart.origin
    )
}

/// OBJ export: stereo-projected vertices (n = 3 only) and quad faces from
/// the grid; errors if the surface meets the projection point.
pub fn export_obj(path: &Path, lift: &LightConeLift) -> Result<()> {
    if lift.space.n != 3 || lift.m() != 2 {
        return Err(Error::InvalidArgument(
            "OBJ export needs a surface in S^3".into(),
        ));
    }
    let sp = &lift.space;
    let chart = &lift.chart;
    let mut out = String::new();
    out.push_str(&chart_header(chart));
    out.push('\n');
    for s in lift.sigma.values.iter() {
        let p = sp.stereo_project(s)?;
        out.push_str(&format!("v {:.17} {:.17} {:.17}\n", p[0], p[1], p[2]));
    }
    let (nx, ny) = (chart.shape[0], chart.shape[1]);
    let vid = |i: usize, j: usize| 1 + i * ny + j;
    let imax = if chart.periodic[0] { nx } else { nx - 1 };
    let jmax = if chart.periodic[1] { ny } else { ny - 1 };
    for i in 0..imax {
        for j in 0..jmax {
            let (i1, j1) = ((i + 1) % nx, (j + 1) % ny);
            out.push_str(&format!(
                "f {} {} {} {}\n",
                vid(i, j),
                vid(i1, j),
                vid(i1, j1),
                vid(i, j1)
            ));
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// CSV export: node index plus the raw R^{n+1,1} coordinates, with a chart
/// header comment so meshes stay self-describing.
pub fn export_csv(path: &Path, lift: &LightConeLift) -> Result<()> {
    let chart = &lift.chart;
    let mut out = String::new();
    out.push_str(&chart_header(chart));
    out.push('\n');
    let d = lift.space.dim();
    out.push_str("node");
    for c in 0..d {
        out.push_str(&format!(",x{c}"));
    }
    out.push('\n');
    for (lin, s) in lift.sigma.values.iter().enumerate() {
        out.push_str(&lin.to_string());
        for c in 0..d {
            out.push_str(&format!(",{:.17e}", s[c]));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Parse a chart header line written by the exporters.
fn parse_chart_header(line: &str) -> Result<Chart> {
    let grab = |key: &str| -> Result<Vec<f64>> {
        let start = line
            .find(&format!("{key}=["))
            .ok_or_else(|| Error::Schema(format!("missing {key} in mesh header")))?;
        let rest = &line[start + key.len() + 2..];
        let end = rest
            .find(']')
            .ok_or_else(|| Error::Schema("unterminated header list".into()))?;
        rest[..end]
            .split(',')
            .map(|tok| {
                let t = tok.trim();
                if t == "true" {
                    Ok(1.0)
                } else if t == "false" {
                    Ok(0.0)
                } else {
                    t.parse::<f64>()
                        .map_err(|e| Error::Schema(format!("bad header number: {e}")))
                }
            })
            .collect()
    };
    let shape: Vec<usize> = grab("shape")?.iter().map(|&v| v as usize).collect();
    let spacing = grab("spacing")?;
    let periodic: Vec<bool> = grab("periodic")?.iter().map(|&v| v != 0.0).collect();
    let origin = grab("origin")?;
    Chart::new(&shape, &spacing, &periodic, &origin)
}

/// Read a mesh (OBJ or CSV written by the exporters) back as a lift.
pub fn import_mesh(path: &Path) -> Result<LightConeLift> {
    let text = std::fs::read_to_string(path)?;
    let mut chart: Option<Chart> = None;
    let mut obj_vertices: Vec<DVector<f64>> = Vec::new();
    let mut csv_rows: Vec<DVector<f64>> = Vec::new();
    for line in text.lines() {
        if line.starts_with("# moebius-lab chart") {
            chart = Some(parse_chart_header(line)?);
        } else if let Some(rest) = line.strip_prefix("v ") {
            let nums: Vec<f64> = rest
                .split_whitespace()
                .map(|t| t.parse().unwrap_or(f64::NAN))
                .collect();
            obj_vertices.push(DVector::from_vec(nums));
        } else if !line.starts_with('#') && !line.starts_with('f') && line.contains(',') {
            let toks: Vec<&str> = line.split(',').collect();
            if toks[0] == "node" {
                continue;
            }
            let nums: Vec<f64> = toks[1..]
                .iter()
                .map(|t| t.trim().parse().unwrap_or(f64::NAN))
                .collect();
            csv_rows.push(DVector::from_vec(nums));
        }
    }
    let chart = chart.ok_or_else(|| Error::Schema("mesh lacks a chart header".into()))?;
    if !obj_vertices.is_empty() {
        let sp = MinkowskiSpace::new(3);
        if obj_vertices.len() != chart.len() {
            return Err(Error::Schema("vertex count does not match chart".into()));
        }
        let sigma = GridField::new(
            chart.clone(),
            obj_vertices.iter().map(|p| sp.stereo_lift(p)).collect(),
        );
        Ok(LightConeLift::new(sp, chart, sigma))
    } else if !csv_rows.is_empty() {
        if csv_rows.len() != chart.len() {
            return Err(Error::Schema("row count does not match chart".into()));
        }
        let d = csv_rows[0].len();
        let sp = MinkowskiSpace::new(d - 2);
        Ok(LightConeLift::new(
            sp,
            chart.clone(),
            GridField::new(chart, csv_rows),
        ))
    } else {
        Err(Error::Schema("mesh file carries no vertices".into()))
    }
}
