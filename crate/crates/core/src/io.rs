//! File formats: site/covariate/response CSVs, the columnar draws container
//! and prediction tables.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::PredictionResult;
use crate::kernel::SiteSet;
use crate::model::{Dataset, Draw, FactorModel, PosteriorDraws, ResponseKind};

const EARTH_RADIUS_KM: f64 = 6371.0088;
/// Projected coordinates are in units of 100 km.
const COORD_UNIT_KM: f64 = 100.0;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.display().to_string(), source }
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
    }
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&read_to_string(path)?)?)
}

/// A CSV table whose first column holds site ids.
#[derive(Debug, Clone, PartialEq)]
pub struct IdTable {
    pub ids: Vec<String>,
    pub columns: Vec<String>,
    pub values: DMatrix<f64>,
}

pub fn read_id_table(path: &Path) -> Result<IdTable> {
    let text = read_to_string(path)?;
    parse_id_table(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_id_table(text: &str) -> Result<IdTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = rdr.headers()?.clone();
    if header.len() < 2 {
        return Err(Error::Parse("need an id column and at least one value column".into()));
    }
    let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut ids = vec![];
    let mut vals = vec![];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::Parse(format!("row {} has {} fields, expected {}", row + 1, rec.len(), header.len())));
        }
        ids.push(rec[0].to_string());
        for (c, field) in rec.iter().enumerate().skip(1) {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Parse(format!("row {}, column `{}`: `{field}` is not a number", row + 1, &header[c])))?;
            vals.push(v);
        }
    }
    let values = DMatrix::from_row_slice(ids.len(), columns.len(), &vals);
    Ok(IdTable { ids, columns, values })
}

pub fn write_id_table(path: &Path, ids: &[String], columns: &[String], values: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(vec![]);
    let mut header = vec!["id".to_string()];
    header.extend(columns.iter().cloned());
    w.write_record(&header)?;
    for (i, id) in ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        // shortest representation that parses back to the same bits
        rec.extend(values.row(i).iter().map(|v| format!("{v:?}")));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    write_bytes(path, &bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordKind {
    Planar,
    LonLat,
}

/// Reads `id,x,y` or `id,lon,lat`. Geographic coordinates are projected
/// (equirectangular about their centroid) to units of 100 km.
pub fn read_sites(path: &Path) -> Result<(SiteSet, CoordKind)> {
    let t = read_id_table(path)?;
    let cols: Vec<String> = t.columns.iter().map(|c| c.to_ascii_lowercase()).collect();
    let kind = match cols.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["x", "y"] => CoordKind::Planar,
        ["lon", "lat"] => CoordKind::LonLat,
        _ => {
            return Err(Error::Parse(format!(
                "{}: site columns must be `id,x,y` or `id,lon,lat`, got {:?}",
                path.display(),
                t.columns
            )))
        }
    };
    let coords = match kind {
        CoordKind::Planar => (0..t.ids.len()).map(|i| [t.values[(i, 0)], t.values[(i, 1)]]).collect(),
        CoordKind::LonLat => project_lonlat(&t.values)?,
    };
    Ok((SiteSet::new(t.ids, coords)?, kind))
}

fn project_lonlat(v: &DMatrix<f64>) -> Result<Vec<[f64; 2]>> {
    let n = v.nrows() as f64;
    for i in 0..v.nrows() {
        if !(-180.0..=180.0).contains(&v[(i, 0)]) || !(-90.0..=90.0).contains(&v[(i, 1)]) {
            return Err(Error::invalid(format!("site {i}: longitude/latitude out of range")));
        }
    }
    let lon0 = v.column(0).sum() / n;
    let lat0 = v.column(1).sum() / n;
    let k = EARTH_RADIUS_KM / COORD_UNIT_KM;
    let c = lat0.to_radians().cos();
    Ok((0..v.nrows())
        .map(|i| [k * (v[(i, 0)] - lon0).to_radians() * c, k * (v[(i, 1)] - lat0).to_radians()])
        .collect())
}

/// Per-column affine map applied to raw covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateTransform {
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub intercept: bool,
}

impl CovariateTransform {
    /// Mean and sample sd of each column.
    pub fn fit(names: &[String], x: &DMatrix<f64>, intercept: bool) -> Result<Self> {
        let n = x.nrows() as f64;
        if x.nrows() < 2 {
            return Err(Error::invalid("need at least two sites to standardize covariates"));
        }
        let mut mean = vec![];
        let mut sd = vec![];
        for (j, col) in x.column_iter().enumerate() {
            let m = col.sum() / n;
            let s = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            if !(s > 0.0) {
                return Err(Error::invalid(format!("covariate `{}` is constant", names[j])));
            }
            mean.push(m);
            sd.push(s);
        }
        Ok(CovariateTransform { names: names.to_vec(), mean, sd, intercept })
    }

    pub fn apply(&self, names: &[String], x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if names != self.names.as_slice() {
            return Err(Error::invalid(format!("covariate columns {names:?} do not match the saved transform {:?}", self.names)));
        }
        let p = x.ncols() + self.intercept as usize;
        Ok(DMatrix::from_fn(x.nrows(), p, |i, j| {
            if self.intercept && j == 0 {
                1.0
            } else {
                let k = j - self.intercept as usize;
                (x[(i, k)] - self.mean[k]) / self.sd[k]
            }
        }))
    }

    pub fn output_names(&self) -> Vec<String> {
        let mut v = vec![];
        if self.intercept {
            v.push("intercept".to_string());
        }
        v.extend(self.names.iter().cloned());
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataPaths {
    pub sites: PathBuf,
    pub covariates: PathBuf,
    pub response: PathBuf,
    /// Inferred when absent: binary if every entry is 0 or 1.
    pub kind: Option<ResponseKind>,
    /// Species with at most this many presences are dropped (binary data).
    pub min_presence: usize,
    /// Prepend a column of ones after standardizing.
    pub intercept: bool,
    /// Reuse a saved covariate transform instead of fitting one.
    pub transform: Option<PathBuf>,
}

impl Default for DataPaths {
    fn default() -> Self {
        DataPaths {
            sites: "sites.csv".into(),
            covariates: "covariates.csv".into(),
            response: "response.csv".into(),
            kind: None,
            min_presence: 5,
            intercept: false,
            transform: None,
        }
    }
}

impl DataPaths {
    /// Resolves relative paths against `base`.
    pub fn rebase(&mut self, base: &Path) {
        for p in [&mut self.sites, &mut self.covariates, &mut self.response] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(t) = &mut self.transform {
            if t.is_relative() {
                *t = base.join(&*t);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub n_sites: usize,
    pub n_species_read: usize,
    pub n_species_kept: usize,
    pub dropped_species: Vec<String>,
    pub coordinates: CoordKind,
    /// Presences over `n * S`, counted before species are dropped (binary data).
    pub presence_rate: Option<f64>,
    pub total_presences: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub data: Dataset,
    pub transform: CovariateTransform,
    pub report: IngestReport,
}

fn align(table: &IdTable, ids: &[String], what: &str) -> Result<DMatrix<f64>> {
    let pos: HashMap<&str, usize> = table.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    if pos.len() != table.ids.len() {
        return Err(Error::invalid(format!("{what}: duplicate site ids")));
    }
    let site_set: HashMap<&str, ()> = ids.iter().map(|s| (s.as_str(), ())).collect();
    if let Some(u) = table.ids.iter().find(|id| !site_set.contains_key(id.as_str())) {
        return Err(Error::invalid(format!("{what}: unknown site id `{u}`")));
    }
    let rows: Vec<usize> = ids
        .iter()
        .map(|id| pos.get(id.as_str()).copied().ok_or_else(|| Error::invalid(format!("{what}: missing site `{id}`"))))
        .collect::<Result<_>>()?;
    Ok(table.values.select_rows(&rows))
}

/// Reads, aligns and preprocesses the three input tables.
pub fn ingest(paths: &DataPaths) -> Result<Ingested> {
    let (sites, coordinates) = read_sites(&paths.sites)?;
    let cov = read_id_table(&paths.covariates)?;
    let resp = read_id_table(&paths.response)?;
    let x_raw = align(&cov, sites.ids(), "covariates")?;
    let y_all = align(&resp, sites.ids(), "response")?;
    let transform = match &paths.transform {
        Some(p) => read_json::<CovariateTransform>(p)?,
        None => CovariateTransform::fit(&cov.columns, &x_raw, paths.intercept)?,
    };
    let x = transform.apply(&cov.columns, &x_raw)?;

    let kind = paths.kind.unwrap_or(if y_all.iter().all(|&v| v == 0.0 || v == 1.0) {
        ResponseKind::Binary
    } else {
        ResponseKind::Continuous
    });
    let mut keep = vec![];
    let mut dropped = vec![];
    match kind {
        ResponseKind::Binary => {
            if let Some(v) = y_all.iter().find(|v| **v != 0.0 && **v != 1.0) {
                return Err(Error::invalid(format!("binary response contains the value {v}")));
            }
            for (l, name) in resp.columns.iter().enumerate() {
                let presences = y_all.column(l).sum() as usize;
                if presences > paths.min_presence {
                    keep.push(l);
                } else {
                    dropped.push(name.clone());
                }
            }
        }
        ResponseKind::Continuous => {
            if y_all.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("response contains non-finite values"));
            }
            keep = (0..resp.columns.len()).collect();
        }
    }
    if keep.is_empty() {
        return Err(Error::invalid("no species left after filtering"));
    }
    let y = y_all.select_columns(&keep);
    let species: Vec<String> = keep.iter().map(|&l| resp.columns[l].clone()).collect();
    let (presence_rate, total_presences) = match kind {
        ResponseKind::Binary => {
            let tot = y_all.sum();
            (Some(tot / y_all.len() as f64), Some(tot as usize))
        }
        ResponseKind::Continuous => (None, None),
    };
    let report = IngestReport {
        n_sites: sites.len(),
        n_species_read: resp.columns.len(),
        n_species_kept: species.len(),
        dropped_species: dropped,
        coordinates,
        presence_rate,
        total_presences,
    };
    let data = Dataset::new(sites, x, y, kind, species, transform.output_names())?;
    Ok(Ingested { data, transform, report })
}

/// Writes a dataset as the three input tables (planar coordinates).
pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<()> {
    let coords = DMatrix::from_fn(data.n(), 2, |i, j| data.sites.coords()[i][j]);
    write_id_table(&dir.join("sites.csv"), data.sites.ids(), &["x".into(), "y".into()], &coords)?;
    write_id_table(&dir.join("covariates.csv"), data.sites.ids(), &data.covariate_names, &data.x)?;
    write_id_table(&dir.join("response.csv"), data.sites.ids(), &data.species, &data.y)
}

pub fn write_id_list(path: &Path, ids: &[String]) -> Result<()> {
    let mut s = String::from("id\n");
    for id in ids {
        s.push_str(id);
        s.push('\n');
    }
    write_bytes(path, s.as_bytes())
}

pub fn read_id_list(path: &Path) -> Result<Vec<String>> {
    let text = read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next().map(str::trim) {
        Some("id") => {}
        _ => return Err(Error::Parse(format!("{}: expected an `id` header", path.display()))),
    }
    Ok(lines.map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect())
}

/// One parameter block: `n_draws` rows of `shape.iter().product()` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockInfo {
    pub name: String,
    /// Per-draw shape, column-major.
    pub shape: Vec<usize>,
    /// Byte offset of the block in the data file.
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawsManifest {
    pub format: String,
    pub version: u32,
    pub data_file: String,
    pub n_draws: usize,
    pub kind: ResponseKind,
    pub factor_model: FactorModel,
    pub phi_acceptance: f64,
    #[serde(flatten)]
    pub meta: DrawsMeta,
    pub blocks: Vec<BlockInfo>,
}

/// Labels stored alongside the draws.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DrawsMeta {
    pub species: Vec<String>,
    pub covariates: Vec<String>,
    /// Sites the factors were fitted at, in row order.
    pub train_sites: Vec<String>,
    /// Retained draws per chain, in storage order.
    pub chain_lengths: Vec<usize>,
}

const DRAWS_FORMAT: &str = "sjsdm-draws";
const MANIFEST: &str = "manifest.json";
const DATA_FILE: &str = "draws.f64";

type Block = (&'static str, Vec<usize>, Vec<f64>);

fn blocks_of(d: &Draw) -> Vec<Block> {
    vec![
        ("B", vec![d.b.nrows(), d.b.ncols()], d.b.as_slice().to_vec()),
        ("Z", vec![d.z.nrows(), d.z.ncols()], d.z.as_slice().to_vec()),
        ("labels", vec![d.labels.len()], d.labels.iter().map(|&k| k as f64).collect()),
        ("p", vec![d.p.len()], d.p.clone()),
        ("W", vec![d.w.nrows(), d.w.ncols()], d.w.as_slice().to_vec()),
        ("sigma2", vec![1], vec![d.sigma2]),
        ("phi", vec![1], vec![d.phi]),
        ("D_Z", vec![d.dz.nrows(), d.dz.ncols()], d.dz.as_slice().to_vec()),
        ("eta", vec![d.eta.len()], d.eta.as_slice().to_vec()),
    ]
}

/// Persists draws as a little-endian `f64` file with one contiguous block
/// per parameter, plus a JSON manifest.
pub fn write_draws(dir: &Path, draws: &PosteriorDraws, meta: &DrawsMeta) -> Result<()> {
    if meta.chain_lengths.iter().sum::<usize>() != draws.len() {
        return Err(Error::dim("chain lengths do not add up to the number of draws"));
    }
    let first = draws.draws.first().ok_or_else(|| Error::invalid("no draws to write"))?;
    let template = blocks_of(first);
    let per: Vec<Vec<Block>> = draws.draws.iter().map(blocks_of).collect();
    let mut bytes: Vec<u8> = vec![];
    let mut infos = vec![];
    for (b, (name, shape, _)) in template.iter().enumerate() {
        infos.push(BlockInfo { name: name.to_string(), shape: shape.clone(), offset: bytes.len() as u64 });
        for d in &per {
            if d[b].1 != *shape {
                return Err(Error::dim(format!("block {name} changes shape across draws")));
            }
            for v in &d[b].2 {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    if !draws.log_joint.is_empty() {
        infos.push(BlockInfo { name: "log_joint".into(), shape: vec![1], offset: bytes.len() as u64 });
        for v in &draws.log_joint {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = DrawsManifest {
        format: DRAWS_FORMAT.into(),
        version: 1,
        data_file: DATA_FILE.into(),
        n_draws: draws.len(),
        kind: draws.kind,
        factor_model: draws.factor_model,
        phi_acceptance: draws.phi_acceptance,
        meta: meta.clone(),
        blocks: infos,
    };
    write_bytes(&dir.join(DATA_FILE), &bytes)?;
    write_json(&dir.join(MANIFEST), &manifest)
}

pub fn read_draws(dir: &Path) -> Result<(PosteriorDraws, DrawsManifest)> {
    let mpath = dir.join(MANIFEST);
    if !mpath.exists() {
        return Err(Error::invalid(format!("no draws manifest at {}", mpath.display())));
    }
    let m: DrawsManifest = read_json(&mpath)?;
    if m.format != DRAWS_FORMAT || m.version != 1 {
        return Err(Error::Parse(format!("unsupported draws format {} v{}", m.format, m.version)));
    }
    let dpath = dir.join(&m.data_file);
    let bytes = fs::read(&dpath).map_err(io_err(&dpath))?;
    let t = m.n_draws;
    let block = |name: &str| -> Result<(&BlockInfo, Vec<f64>)> {
        let info = m.blocks.iter().find(|b| b.name == name).ok_or_else(|| Error::Parse(format!("missing block {name}")))?;
        let len = info.shape.iter().product::<usize>() * t;
        let start = info.offset as usize;
        let end = start + len * 8;
        if end > bytes.len() {
            return Err(Error::Parse(format!("block {name} runs past the end of the data file")));
        }
        let vals = bytes[start..end].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok((info, vals))
    };
    let mat_at = |info: &BlockInfo, vals: &[f64], i: usize| {
        let (r, c) = (info.shape[0], info.shape.get(1).copied().unwrap_or(1));
        DMatrix::from_column_slice(r, c, &vals[i * r * c..(i + 1) * r * c])
    };
    let (bi, bv) = block("B")?;
    let (zi, zv) = block("Z")?;
    let (li, lv) = block("labels")?;
    let (pi, pv) = block("p")?;
    let (wi, wv) = block("W")?;
    let (_, s2) = block("sigma2")?;
    let (_, phi) = block("phi")?;
    let (di, dv) = block("D_Z")?;
    let (ei, ev) = block("eta")?;
    let (s, na, r) = (li.shape[0], pi.shape[0], ei.shape[0]);
    let mut draws = Vec::with_capacity(t);
    for i in 0..t {
        let labels: Vec<usize> = lv[i * s..(i + 1) * s].iter().map(|&v| v as usize).collect();
        if labels.iter().any(|&k| k >= na) {
            return Err(Error::Parse("label out of range in draws file".into()));
        }
        draws.push(Draw {
            b: mat_at(bi, &bv, i),
            z: mat_at(zi, &zv, i),
            labels,
            p: pv[i * na..(i + 1) * na].to_vec(),
            w: mat_at(wi, &wv, i),
            sigma2: s2[i],
            phi: phi[i],
            dz: mat_at(di, &dv, i),
            eta: DVector::from_column_slice(&ev[i * r..(i + 1) * r]),
        });
    }
    let log_joint = if m.blocks.iter().any(|b| b.name == "log_joint") { block("log_joint")?.1 } else { vec![] };
    Ok((
        PosteriorDraws { draws, kind: m.kind, factor_model: m.factor_model, phi_acceptance: m.phi_acceptance, log_joint },
        m,
    ))
}

pub fn write_predictions(path: &Path, pred: &PredictionResult) -> Result<()> {
    write_id_table(path, &pred.site_ids, &pred.species, &pred.mean)
}

pub fn read_predictions(path: &Path) -> Result<IdTable> {
    if read_to_string(path)?.trim().is_empty() {
        return Err(Error::Parse(format!("{} is empty", path.display())));
    }
    read_id_table(path)
}

/// Appends a line to a text log.
pub fn append_line(path: &Path, line: &str) -> Result<()> {
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
    writeln!(f, "{line}").map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::RngStream;
    use crate::gibbs::run_chain;
    use crate::model::Hyperparams;
    use crate::simulate::{self, SimConfig};

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn ragged_and_non_numeric_rows_are_rejected() {
        assert!(parse_id_table("id,a,b\ns1,1,2\ns2,3\n").is_err());
        assert!(parse_id_table("id,a\ns1,x\n").is_err());
        let t = parse_id_table("id,a,b\ns1,1,2\ns2,3,4.5\n").unwrap();
        assert_eq!(t.values[(1, 1)], 4.5);
    }

    #[test]
    fn ingest_aligns_filters_and_standardizes() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        let paths = DataPaths {
            sites: write(d, "sites.csv", "id,x,y\na,0,0\nb,1,0\nc,0,1\nd,1,1\n"),
            covariates: write(d, "cov.csv", "id,t\nd,4\nc,3\nb,2\na,1\n"),
            response: write(d, "resp.csv", "id,s1,s2,s3\na,1,0,1\nb,1,0,1\nc,0,0,1\nd,1,1,0\n"),
            kind: Some(ResponseKind::Binary),
            min_presence: 1,
            ..Default::default()
        };
        let ing = ingest(&paths).unwrap();
        assert_eq!(ing.data.species, vec!["s1", "s3"]);
        assert_eq!(ing.report.dropped_species, vec!["s2"]);
        assert_eq!(ing.report.total_presences, Some(7));
        assert!((ing.report.presence_rate.unwrap() - 7.0 / 12.0).abs() < 1e-15);
        // covariate rows follow the site order, then standardized
        assert!(ing.data.x[(0, 0)] < ing.data.x[(3, 0)]);
        ing.data.check_standardized(1e-12).unwrap();
    }

    #[test]
    fn unknown_site_and_non_binary_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        let mut paths = DataPaths {
            sites: write(d, "sites.csv", "id,x,y\na,0,0\nb,1,0\n"),
            covariates: write(d, "cov.csv", "id,t\na,1\nzz,2\n"),
            response: write(d, "resp.csv", "id,s1\na,1\nb,0\n"),
            kind: Some(ResponseKind::Binary),
            min_presence: 0,
            ..Default::default()
        };
        assert!(ingest(&paths).unwrap_err().to_string().contains("unknown site id"));
        paths.covariates = write(d, "cov2.csv", "id,t\na,1\nb,2\n");
        paths.response = write(d, "resp2.csv", "id,s1\na,2\nb,0\n");
        assert!(ingest(&paths).is_err());
    }

    #[test]
    fn standardized_input_gives_identity_transform() {
        let names = vec!["a".to_string()];
        let mut x = DMatrix::from_column_slice(5, 1, &[0.3, -1.2, 0.8, 2.0, -0.1]);
        simulate::standardize_columns(&mut x);
        let t = CovariateTransform::fit(&names, &x, false).unwrap();
        assert!(t.mean[0].abs() < 1e-6 && (t.sd[0] - 1.0).abs() < 1e-6);
        assert!((t.apply(&names, &x).unwrap() - &x).amax() < 1e-6);
    }

    #[test]
    fn lonlat_projection_scale() {
        // one degree of latitude is about 111 km
        let v = DMatrix::from_row_slice(2, 2, &[18.0, -34.0, 18.0, -33.0]);
        let c = project_lonlat(&v).unwrap();
        let d = (c[1][1] - c[0][1]).abs();
        assert!((d - 1.112).abs() < 0.001, "{d}");
        assert_eq!(c[0][0], 0.0);
    }

    #[test]
    fn draws_round_trip_is_byte_identical() {
        let cfg = SimConfig { n: 15, s: 5, ..Default::default() };
        let (data, _) = simulate::gen_continuous(&cfg, &mut RngStream::new(1, 0)).unwrap();
        let mut hyper = Hyperparams::for_data(&data, 2, 6).unwrap();
        hyper.mcmc.n_iter = 30;
        hyper.mcmc.burn_in = 10;
        hyper.mcmc.record_log_joint = true;
        let draws = run_chain(&data, &hyper, &mut RngStream::new(2, 0)).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let meta = DrawsMeta {
            species: data.species.clone(),
            covariates: data.covariate_names.clone(),
            train_sites: data.sites.ids().to_vec(),
            chain_lengths: vec![draws.len()],
        };
        write_draws(a.path(), &draws, &meta).unwrap();
        let (back, m) = read_draws(a.path()).unwrap();
        assert_eq!(back, draws);
        assert_eq!(m.meta, meta);
        write_draws(b.path(), &back, &m.meta).unwrap();
        for f in [MANIFEST, DATA_FILE] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
        }
    }

    #[test]
    fn table_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let v = DMatrix::from_fn(3, 2, |i, j| (i as f64 + 0.1) / (j as f64 + 3.0) * 1e-7 + std::f64::consts::PI);
        let ids: Vec<String> = (0..3).map(|i| format!("s{i}")).collect();
        let p = dir.path().join("t.csv");
        write_id_table(&p, &ids, &["a".into(), "b".into()], &v).unwrap();
        let t = read_id_table(&p).unwrap();
        assert_eq!(t.values, v);
        assert_eq!(t.ids, ids);
    }

    #[test]
    fn missing_manifest_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        assert!(read_draws(dir.path()).unwrap_err().to_string().contains("manifest"));
    }
}
