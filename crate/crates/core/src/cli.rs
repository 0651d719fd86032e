//! File formats and the commands behind the `dido` binary.
//!
//! Datasets are CSV in one of two layouts:
//!
//! * Gaussian: `id, <name>_mean, <name>_std, ..., resp_mean, resp_std`
//! * Quantile: long format `id, variable, t, value`, where `t` runs over the
//!   midpoint nodes `(k - 0.5) / K` and `variable` is a predictor name or `resp`.
//!
//! The response columns are optional when a file is only used for prediction.
//! Models are stored as versioned JSON with every float written to 17
//! significant digits, so saving a loaded model reproduces the file byte for byte.
//!
//! Exit codes used by the binary (see [`Error::exit_code`]):
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 2 | bad command line |
//! | 3 | malformed input file or I/O failure |
//! | 4 | grid or shape mismatch |
//! | 5 | singular normal system |
//! | 6 | degenerate data (constant samples, no usable windows) |
//! | 7 | a prediction is not a valid measure |
//! | 8 | invalid configuration or violated precondition |

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{Error, Result};
use crate::gauss::{gauss_fit, gauss_partial_predictions, gauss_predict, GaussDidoModel, StdMode};
use crate::measures::{
    estimate_gaussian, estimate_quantile, gaussian_quantiles, w2_distance, w2_gaussian, GaussianMeasure,
    QuantileGrid, QuantileMeasure, DEFAULT_GRID_SIZE,
};
use crate::regression::{fit, partial_predictions, predict, DidoDataset, DidoModel, FitOptions};
use crate::simulate::{report_csv, report_tables, run_lattice, run_replications, ScenarioConfig};
use crate::transport::MonotoneMode;

pub const MODEL_FILE_VERSION: u32 = 1;
pub const RESPONSE_NAME: &str = "resp";

/// Sample sizes, predictor counts and noise levels of the full simulation lattice.
pub const LATTICE_N: [usize; 3] = [50, 100, 500];
pub const LATTICE_P: [usize; 3] = [2, 5, 10];
pub const LATTICE_ZETA: [f64; 4] = [0.01, 0.1, 0.5, 1.0];

const NODE_TOLERANCE: f64 = 1e-9;

/// How predictions that leave the measure space are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Fail the row.
    Strict,
    /// Project quantile predictions onto monotone functions; clamp Gaussian stds.
    #[default]
    Project,
    /// Same as `Project`; named for the Gaussian path.
    Clamp,
}

impl Mode {
    pub fn monotone(self) -> MonotoneMode {
        match self {
            Mode::Strict => MonotoneMode::Strict,
            Mode::Project | Mode::Clamp => MonotoneMode::Project,
        }
    }

    pub fn std_mode(self) -> StdMode {
        match self {
            Mode::Strict => StdMode::Strict,
            Mode::Project | Mode::Clamp => StdMode::Clamp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Gaussian,
    Quantile,
}

/// Rows of a dataset file; `responses` is absent for prediction-only files.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetTable<M> {
    pub ids: Vec<String>,
    pub names: Vec<String>,
    pub predictors: Vec<Vec<M>>,
    pub responses: Option<Vec<M>>,
}

impl<M: crate::measures::Measure + Clone> DatasetTable<M> {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn to_dataset(&self) -> Result<DidoDataset<M>> {
        let responses = self
            .responses
            .clone()
            .ok_or_else(|| Error::PreconditionViolated("dataset has no response column".into()))?;
        DidoDataset::new(self.predictors.clone(), responses, self.names.clone())
    }

    pub fn row_index(&self, id: &str) -> Result<usize> {
        self.ids
            .iter()
            .position(|x| x == id)
            .ok_or_else(|| Error::InvalidConfig(format!("no row with id {id:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetFile {
    Gaussian(DatasetTable<GaussianMeasure>),
    Quantile(DatasetTable<QuantileMeasure>),
}

impl DatasetFile {
    pub fn representation(&self) -> Representation {
        match self {
            DatasetFile::Gaussian(_) => Representation::Gaussian,
            DatasetFile::Quantile(_) => Representation::Quantile,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            DatasetFile::Gaussian(t) => t.len(),
            DatasetFile::Quantile(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn names(&self) -> &[String] {
        match self {
            DatasetFile::Gaussian(t) => &t.names,
            DatasetFile::Quantile(t) => &t.names,
        }
    }
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, csv::Position::line)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, csv::Position::line);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::parse(line, format!("{kind:?}")),
    }
}

fn parse_f64(field: &str, line: u64, what: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::parse(line, format!("{what}: cannot parse {field:?} as a number")))
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input)
}

/// Parses either dataset layout, chosen from the header row.
pub fn read_dataset<R: Read>(input: R) -> Result<DatasetFile> {
    let mut rdr = reader(input);
    let header: Vec<String> = rdr.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
    if header.is_empty() || header[0] != "id" {
        return Err(Error::parse(1, "first column must be `id`"));
    }
    if header == ["id", "variable", "t", "value"] {
        read_quantile_rows(rdr).map(DatasetFile::Quantile)
    } else {
        read_gaussian_rows(rdr, &header).map(DatasetFile::Gaussian)
    }
}

pub fn read_dataset_path(path: &Path) -> Result<DatasetFile> {
    read_dataset(File::open(path)?)
}

fn read_gaussian_rows<R: Read>(mut rdr: csv::Reader<R>, header: &[String]) -> Result<DatasetTable<GaussianMeasure>> {
    let cols = &header[1..];
    if cols.is_empty() || !cols.len().is_multiple_of(2) {
        return Err(Error::parse(1, "expected `<name>_mean, <name>_std` column pairs after `id`"));
    }
    let mut names = Vec::new();
    for pair in cols.chunks(2) {
        let name = pair[0]
            .strip_suffix("_mean")
            .filter(|n| !n.is_empty() && pair[1].strip_suffix("_std") == Some(n))
            .ok_or_else(|| Error::parse(1, format!("columns {:?}, {:?} are not a mean/std pair", pair[0], pair[1])))?;
        names.push(name.to_string());
    }
    let has_response = names.last().map(String::as_str) == Some(RESPONSE_NAME);
    if has_response {
        names.pop();
    }
    if names.is_empty() {
        return Err(Error::parse(1, "no predictor columns"));
    }
    if names.iter().any(|n| n == RESPONSE_NAME) {
        return Err(Error::parse(1, "the response pair must be the last column pair"));
    }

    let mut table = DatasetTable {
        ids: Vec::new(),
        names,
        predictors: Vec::new(),
        responses: has_response.then(Vec::new),
    };
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = line_of(&rec);
        let mut measures = Vec::with_capacity(cols.len() / 2);
        for j in 0..cols.len() / 2 {
            let m = parse_f64(&rec[1 + 2 * j], line, &header[1 + 2 * j])?;
            let s = parse_f64(&rec[2 + 2 * j], line, &header[2 + 2 * j])?;
            measures.push(GaussianMeasure::new(m, s).map_err(|e| Error::parse(line, e.to_string()))?);
        }
        if let Some(resp) = table.responses.as_mut() {
            resp.push(measures.pop().expect("response pair present"));
        }
        table.ids.push(rec[0].to_string());
        table.predictors.push(measures);
    }
    if table.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(table)
}

struct QuantileCell {
    line: u64,
    points: Vec<(f64, f64, u64)>,
}

fn read_quantile_rows<R: Read>(mut rdr: csv::Reader<R>) -> Result<DatasetTable<QuantileMeasure>> {
    let mut ids: Vec<String> = Vec::new();
    let mut id_index: HashMap<String, usize> = HashMap::new();
    let mut variables: Vec<String> = Vec::new();
    let mut cells: Vec<BTreeMap<String, QuantileCell>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = line_of(&rec);
        let id = rec[0].to_string();
        let var = rec[1].to_string();
        let t = parse_f64(&rec[2], line, "t")?;
        let value = parse_f64(&rec[3], line, "value")?;
        let i = *id_index.entry(id.clone()).or_insert_with(|| {
            ids.push(id);
            cells.push(BTreeMap::new());
            cells.len() - 1
        });
        if !variables.contains(&var) {
            variables.push(var.clone());
        }
        cells[i]
            .entry(var)
            .or_insert_with(|| QuantileCell { line, points: Vec::new() })
            .points
            .push((t, value, line));
    }
    if ids.is_empty() {
        return Err(Error::EmptyInput);
    }
    let has_response = variables.iter().any(|v| v == RESPONSE_NAME);
    let names: Vec<String> = variables.iter().filter(|v| *v != RESPONSE_NAME).cloned().collect();
    if names.is_empty() {
        return Err(Error::parse(1, "no predictor variables"));
    }

    let mut grid: Option<QuantileGrid> = None;
    let mut build = |cell: &mut QuantileCell| -> Result<QuantileMeasure> {
        cell.points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let k = cell.points.len();
        let g = QuantileGrid::new(k).map_err(|e| Error::parse(cell.line, e.to_string()))?;
        match grid {
            None => grid = Some(g),
            Some(shared) => shared.check(&g)?,
        }
        for (idx, &(t, _, line)) in cell.points.iter().enumerate() {
            if (t - g.node(idx)).abs() > NODE_TOLERANCE {
                return Err(Error::parse(
                    line,
                    format!("t = {t} is not node {} of a {k}-point midpoint grid", idx + 1),
                ));
            }
        }
        let q: Vec<f64> = cell.points.iter().map(|p| p.1).collect();
        QuantileMeasure::new(q).map_err(|e| match e {
            Error::NotAMeasure { node } => {
                Error::parse(cell.points[node].2, "quantile values decrease in t")
            }
            other => Error::parse(cell.line, other.to_string()),
        })
    };

    let mut table = DatasetTable {
        ids: ids.clone(),
        names: names.clone(),
        predictors: Vec::with_capacity(ids.len()),
        responses: has_response.then(Vec::new),
    };
    for (id, mut row) in ids.iter().zip(cells) {
        let first_line = row.values().map(|c| c.line).min().unwrap_or(0);
        let mut measures = Vec::with_capacity(names.len());
        for name in &names {
            let cell = row
                .get_mut(name)
                .ok_or_else(|| Error::parse(first_line, format!("id {id:?} has no variable {name:?}")))?;
            measures.push(build(cell)?);
        }
        if let Some(resp) = table.responses.as_mut() {
            let cell = row
                .get_mut(RESPONSE_NAME)
                .ok_or_else(|| Error::parse(first_line, format!("id {id:?} has no response")))?;
            resp.push(build(cell)?);
        }
        table.predictors.push(measures);
    }
    Ok(table)
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

pub fn write_dataset<W: Write>(data: &DatasetFile, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    match data {
        DatasetFile::Gaussian(t) => {
            let mut header = vec!["id".to_string()];
            let resp_name = t.responses.as_ref().map(|_| RESPONSE_NAME.to_string());
            for name in t.names.iter().chain(resp_name.iter()) {
                header.push(format!("{name}_mean"));
                header.push(format!("{name}_std"));
            }
            w.write_record(&header).map_err(csv_error)?;
            for (i, id) in t.ids.iter().enumerate() {
                let mut rec = vec![id.clone()];
                let resp = t.responses.as_ref().map(|r| r[i]);
                for g in t.predictors[i].iter().chain(resp.iter()) {
                    rec.push(fmt(g.mean()));
                    rec.push(fmt(g.std()));
                }
                w.write_record(&rec).map_err(csv_error)?;
            }
        }
        DatasetFile::Quantile(t) => {
            w.write_record(["id", "variable", "t", "value"]).map_err(csv_error)?;
            for (i, id) in t.ids.iter().enumerate() {
                let resp = t.responses.as_ref().map(|r| (RESPONSE_NAME, &r[i]));
                let named = t.names.iter().map(String::as_str).zip(&t.predictors[i]);
                for (var, m) in named.chain(resp) {
                    for (k, q) in m.quantiles().iter().enumerate() {
                        w.write_record([id.as_str(), var, &fmt(m.grid().node(k)), &fmt(*q)])
                            .map_err(csv_error)?;
                    }
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "representation", rename_all = "lowercase")]
pub enum FittedModel {
    Gaussian(GaussDidoModel),
    Quantile(DidoModel),
}

impl FittedModel {
    pub fn representation(&self) -> Representation {
        match self {
            FittedModel::Gaussian(_) => Representation::Gaussian,
            FittedModel::Quantile(_) => Representation::Quantile,
        }
    }

    pub fn alpha(&self) -> &[f64] {
        match self {
            FittedModel::Gaussian(m) => &m.alpha,
            FittedModel::Quantile(m) => &m.alpha,
        }
    }

    pub fn predictor_names(&self) -> &[String] {
        match self {
            FittedModel::Gaussian(m) => &m.predictor_names,
            FittedModel::Quantile(m) => &m.predictor_names,
        }
    }

    pub fn diagnostics(&self) -> &crate::regression::Diagnostics {
        match self {
            FittedModel::Gaussian(m) => &m.diagnostics,
            FittedModel::Quantile(m) => &m.diagnostics,
        }
    }
}

/// On-disk model: the fitted model plus the options and seed that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    #[serde(flatten)]
    pub model: FittedModel,
    pub fit_options: FitOptions,
    pub seed: Option<u64>,
}

/// Pretty JSON with floats in `{:.16e}` form.
struct CanonicalFormatter(PrettyFormatter<'static>);

impl Formatter for CanonicalFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

impl ModelFile {
    pub fn new(model: FittedModel, fit_options: FitOptions, seed: Option<u64>) -> Self {
        Self {
            version: MODEL_FILE_VERSION,
            model,
            fit_options,
            seed,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut buf = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut buf, CanonicalFormatter(PrettyFormatter::new()));
        self.serialize(&mut ser)?;
        buf.push(b'\n');
        Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        file.validate()?;
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        if self.version > MODEL_FILE_VERSION {
            return Err(Error::InvalidConfig(format!(
                "model file version {} is newer than supported version {MODEL_FILE_VERSION}",
                self.version
            )));
        }
        let invalid = |m: &str| Err(Error::InvalidMeasure(m.to_string()));
        match &self.model {
            FittedModel::Gaussian(m) => {
                let p = m.alpha.len();
                if m.predictor_names.len() != p || m.pred_barycenters.len() != p {
                    return invalid("coefficient, name and barycenter counts differ");
                }
                for g in m.pred_barycenters.iter().chain([&m.resp_barycenter]) {
                    GaussianMeasure::new(g.mean(), g.std())?;
                }
            }
            FittedModel::Quantile(m) => {
                let p = m.alpha.len();
                if m.predictor_names.len() != p || m.pred_barycenters.len() != p {
                    return invalid("coefficient, name and barycenter counts differ");
                }
                for q in m.pred_barycenters.iter().chain([&m.resp_barycenter]) {
                    if q.grid().size() != m.grid_size {
                        return Err(Error::GridMismatch {
                            left: m.grid_size,
                            right: q.grid().size(),
                        });
                    }
                }
            }
        }
        if self.model.alpha().iter().any(|a| !a.is_finite()) {
            return invalid("non-finite coefficient");
        }
        Ok(())
    }
}

/// Fits the model matching the dataset's representation.
///
/// `grid_size`, when given, must agree with a quantile dataset's grid.
pub fn fit_dataset(
    data: &DatasetFile,
    options: &FitOptions,
    grid_size: Option<usize>,
    seed: Option<u64>,
) -> Result<ModelFile> {
    let model = match data {
        DatasetFile::Gaussian(t) => FittedModel::Gaussian(gauss_fit(&t.to_dataset()?, options)?),
        DatasetFile::Quantile(t) => {
            let ds = t.to_dataset()?;
            if let (Some(want), Some(have)) = (grid_size, ds.grid_size()) {
                if want != have {
                    return Err(Error::GridMismatch { left: want, right: have });
                }
            }
            FittedModel::Quantile(fit(&ds, options)?)
        }
    };
    Ok(ModelFile::new(model, *options, seed))
}

/// Human-readable fit summary.
pub fn fit_report(file: &ModelFile) -> String {
    let d = file.model.diagnostics();
    let mut s = String::new();
    let repr = match file.model.representation() {
        Representation::Gaussian => "gaussian".to_string(),
        Representation::Quantile => match &file.model {
            FittedModel::Quantile(m) => format!("quantile (K = {})", m.grid_size),
            FittedModel::Gaussian(_) => unreachable!(),
        },
    };
    s.push_str(&format!("representation: {repr}\n"));
    s.push_str(&format!("samples: {}\n", d.n_samples));
    s.push_str(&format!("R²: {:.6}\n", d.r2));
    match d.adjusted_r2 {
        Some(a) => s.push_str(&format!("adjusted R²: {a:.6}\n")),
        None => s.push_str("adjusted R²: undefined\n"),
    }
    s.push_str(&format!("residual variance: {:.6e}\n", d.residual_variance));
    s.push_str("coefficients:\n");
    let width = file.model.predictor_names().iter().map(String::len).max().unwrap_or(0);
    for (name, a) in file.model.predictor_names().iter().zip(file.model.alpha()) {
        s.push_str(&format!("  {name:<width$}  {a:+.6}\n"));
    }
    let warnings = d.warnings();
    if !warnings.is_empty() {
        s.push_str("warnings:\n");
        for w in warnings {
            s.push_str(&format!("  - {w}\n"));
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub enum PredictedMeasure {
    Gaussian(GaussianMeasure),
    Quantile(QuantileMeasure),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub id: String,
    /// Prediction and whether it was projected or clamped, or the row's error message.
    pub outcome: std::result::Result<(PredictedMeasure, bool), String>,
    /// Squared distance to the observed response, when the file has one.
    pub residual_sq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub rows: Vec<PredictionRow>,
}

impl Predictions {
    pub fn errors(&self) -> Vec<(&str, &str)> {
        self.rows
            .iter()
            .filter_map(|r| r.outcome.as_ref().err().map(|e| (r.id.as_str(), e.as_str())))
            .collect()
    }

    pub fn corrected_count(&self) -> usize {
        self.rows.iter().filter(|r| matches!(r.outcome, Ok((_, true)))).count()
    }

    /// Mean squared residual over rows with a response and a prediction.
    pub fn mean_residual_sq(&self) -> Option<f64> {
        let v: Vec<f64> = self.rows.iter().filter_map(|r| r.residual_sq).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

fn representation_mismatch(model: Representation, data: Representation) -> Error {
    Error::ShapeMismatch(format!("model is {model:?} but dataset is {data:?}"))
}

fn check_names(model: &FittedModel, names: &[String]) -> Result<()> {
    if model.predictor_names() != names {
        return Err(Error::ShapeMismatch(format!(
            "model predictors {:?} but dataset has {:?}",
            model.predictor_names(),
            names
        )));
    }
    Ok(())
}

/// Predicts every row. Rows that fail (strict mode) carry their error instead of aborting.
pub fn predict_dataset(model: &ModelFile, data: &DatasetFile, mode: Mode) -> Result<Predictions> {
    check_names(&model.model, data.names())?;
    let rows = match (&model.model, data) {
        (FittedModel::Gaussian(m), DatasetFile::Gaussian(t)) => t
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| {
                let outcome = gauss_predict(m, &t.predictors[i], mode.std_mode());
                let residual_sq = match (&outcome, &t.responses) {
                    (Ok(p), Some(r)) => Some(w2_gaussian(&p.measure, &r[i])),
                    _ => None,
                };
                PredictionRow {
                    id: id.clone(),
                    outcome: outcome
                        .map(|p| (PredictedMeasure::Gaussian(p.measure), p.clamped))
                        .map_err(|e| e.to_string()),
                    residual_sq,
                }
            })
            .collect(),
        (FittedModel::Quantile(m), DatasetFile::Quantile(t)) => {
            let mut rows = Vec::with_capacity(t.len());
            for (i, id) in t.ids.iter().enumerate() {
                let outcome = match predict(m, &t.predictors[i], mode.monotone()) {
                    Err(e @ (Error::GridMismatch { .. } | Error::ShapeMismatch(_))) => return Err(e),
                    other => other,
                };
                let residual_sq = match (&outcome, &t.responses) {
                    (Ok(p), Some(r)) => Some(w2_distance(&p.measure, &r[i])?),
                    _ => None,
                };
                rows.push(PredictionRow {
                    id: id.clone(),
                    outcome: outcome
                        .map(|p| (PredictedMeasure::Quantile(p.measure), p.projected))
                        .map_err(|e| e.to_string()),
                    residual_sq,
                });
            }
            rows
        }
        (m, d) => return Err(representation_mismatch(m.representation(), d.representation())),
    };
    Ok(Predictions { rows })
}

/// Gaussian rows: `id, mean, std, clamped, residual_sq, error`.
/// Quantile rows (long): `id, t, value, projected, residual_sq, error`.
pub fn write_predictions<W: Write>(preds: &Predictions, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let quantile = preds
        .rows
        .iter()
        .any(|r| matches!(r.outcome, Ok((PredictedMeasure::Quantile(_), _))));
    let header = if quantile {
        ["id", "t", "value", "projected", "residual_sq", "error"]
    } else {
        ["id", "mean", "std", "clamped", "residual_sq", "error"]
    };
    w.write_record(header).map_err(csv_error)?;
    for r in &preds.rows {
        let res = r.residual_sq.map(fmt).unwrap_or_default();
        match &r.outcome {
            Ok((PredictedMeasure::Gaussian(g), flag)) => {
                w.write_record([&r.id, &fmt(g.mean()), &fmt(g.std()), &flag.to_string(), &res, ""])
            }
            Ok((PredictedMeasure::Quantile(q), flag)) => {
                for (k, v) in q.quantiles().iter().enumerate() {
                    w.write_record([&r.id, &fmt(q.grid().node(k)), &fmt(*v), &flag.to_string(), &res, ""])
                        .map_err(csv_error)?;
                }
                Ok(())
            }
            Err(e) => w.write_record([r.id.as_str(), "", "", "", "", e.as_str()]),
        }
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// One labelled quantile curve of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    pub measure: QuantileMeasure,
}

/// Barycenter, the cumulative prediction after each predictor, then the observed
/// response when the dataset has one.
///
/// Gaussian models are rendered on a `grid_size`-node grid; quantile models use their own grid.
pub fn trajectory(model: &ModelFile, data: &DatasetFile, row: usize, grid_size: usize, mode: Mode) -> Result<Vec<Curve>> {
    check_names(&model.model, data.names())?;
    if row >= data.len() {
        return Err(Error::InvalidConfig(format!("row {row} out of range for {} rows", data.len())));
    }
    let curve = |label: String, measure| Curve { label, measure };
    let mut out = Vec::new();
    match (&model.model, data) {
        (FittedModel::Gaussian(m), DatasetFile::Gaussian(t)) => {
            let grid = QuantileGrid::new(grid_size)?;
            out.push(curve("barycenter".into(), gaussian_quantiles(&m.resp_barycenter, grid)));
            for (j, p) in gauss_partial_predictions(m, &t.predictors[row], mode.std_mode())?.iter().enumerate() {
                out.push(curve(format!("partial_{}", j + 1), gaussian_quantiles(&p.measure, grid)));
            }
            if let Some(r) = &t.responses {
                out.push(curve("observed".into(), gaussian_quantiles(&r[row], grid)));
            }
        }
        (FittedModel::Quantile(m), DatasetFile::Quantile(t)) => {
            out.push(curve("barycenter".into(), m.resp_barycenter.clone()));
            for (j, p) in partial_predictions(m, &t.predictors[row], mode.monotone())?.into_iter().enumerate() {
                out.push(curve(format!("partial_{}", j + 1), p.measure));
            }
            if let Some(r) = &t.responses {
                out.push(curve("observed".into(), r[row].clone()));
            }
        }
        (m, d) => return Err(representation_mismatch(m.representation(), d.representation())),
    }
    Ok(out)
}

/// Long format `curve_label, t, value`.
pub fn write_trajectory<W: Write>(curves: &[Curve], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["curve_label", "t", "value"]).map_err(csv_error)?;
    for c in curves {
        for (k, v) in c.measure.quantiles().iter().enumerate() {
            w.write_record([&c.label, &fmt(c.measure.grid().node(k)), &fmt(*v)])
                .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOptions {
    pub window_seconds: f64,
    pub representation: Representation,
    pub grid_size: usize,
    /// Response column name; defaults to the last value column.
    pub response: Option<String>,
    /// Time column name; defaults to the first column.
    pub time_column: Option<String>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            window_seconds: 300.0,
            representation: Representation::Gaussian,
            grid_size: DEFAULT_GRID_SIZE,
            response: None,
            time_column: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DroppedWindow {
    pub bucket: i64,
    pub column: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestReport {
    pub windows: usize,
    pub rows: usize,
    pub dropped: Vec<DroppedWindow>,
}

fn missing(field: &str) -> bool {
    matches!(field, "" | "NA" | "na" | "NaN" | "nan" | "null")
}

/// Splits a raw signal table into fixed time buckets `floor(time / window)` and
/// estimates one measure per column and bucket.
///
/// A bucket is dropped when any column has fewer than two finite values or zero spread.
pub fn ingest<R: Read>(input: R, opts: &IngestOptions) -> Result<(DatasetFile, IngestReport)> {
    if !(opts.window_seconds > 0.0) || !opts.window_seconds.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "window length must be positive, got {}",
            opts.window_seconds
        )));
    }
    let grid = QuantileGrid::new(opts.grid_size)?;
    let mut rdr = reader(input);
    let header: Vec<String> = rdr.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
    let time_col = match &opts.time_column {
        Some(name) => header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::parse(1, format!("no time column {name:?}")))?,
        None => 0,
    };
    let value_cols: Vec<usize> = (0..header.len()).filter(|&c| c != time_col).collect();
    if value_cols.len() < 2 {
        return Err(Error::parse(1, "need at least one predictor and one response column"));
    }
    let resp_col = match &opts.response {
        Some(name) => *value_cols
            .iter()
            .find(|&&c| header[c] == *name)
            .ok_or_else(|| Error::parse(1, format!("no response column {name:?}")))?,
        None => *value_cols.last().expect("non-empty"),
    };
    let pred_cols: Vec<usize> = value_cols.iter().copied().filter(|&c| c != resp_col).collect();
    let ordered: Vec<usize> = pred_cols.iter().copied().chain([resp_col]).collect();

    let mut buckets: BTreeMap<i64, Vec<Vec<f64>>> = BTreeMap::new();
    let mut last_time = f64::NEG_INFINITY;
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = line_of(&rec);
        let time = parse_f64(&rec[time_col], line, &header[time_col])?;
        if !time.is_finite() || time < last_time {
            return Err(Error::parse(line, "time must be finite and non-decreasing"));
        }
        last_time = time;
        let bucket = (time / opts.window_seconds).floor() as i64;
        let cols = buckets.entry(bucket).or_insert_with(|| vec![Vec::new(); ordered.len()]);
        for (slot, &c) in ordered.iter().enumerate() {
            let field = rec[c].trim();
            if missing(field) {
                continue;
            }
            let v = parse_f64(field, line, &header[c])?;
            if v.is_finite() {
                cols[slot].push(v);
            }
        }
    }

    let mut report = IngestReport {
        windows: buckets.len(),
        rows: 0,
        dropped: Vec::new(),
    };
    let names: Vec<String> = pred_cols.iter().map(|&c| header[c].clone()).collect();
    let mut ids = Vec::new();
    let mut g_rows: Vec<Vec<GaussianMeasure>> = Vec::new();
    let mut q_rows: Vec<Vec<QuantileMeasure>> = Vec::new();
    'bucket: for (bucket, cols) in &buckets {
        let mut g_row = Vec::new();
        let mut q_row = Vec::new();
        for (slot, values) in cols.iter().enumerate() {
            let drop = |reason: String| DroppedWindow {
                bucket: *bucket,
                column: header[ordered[slot]].clone(),
                reason,
            };
            if values.len() < 2 {
                report.dropped.push(drop(format!("{} finite values", values.len())));
                continue 'bucket;
            }
            let estimate = match opts.representation {
                Representation::Gaussian => estimate_gaussian(values).map(|g| g_row.push(g)),
                Representation::Quantile if values.iter().all(|v| *v == values[0]) => {
                    Err(Error::DegenerateSample("constant values".into()))
                }
                Representation::Quantile => estimate_quantile(values, grid).map(|q| q_row.push(q)),
            };
            if let Err(e) = estimate {
                report.dropped.push(drop(e.to_string()));
                continue 'bucket;
            }
        }
        ids.push(bucket.to_string());
        g_rows.push(g_row);
        q_rows.push(q_row);
    }
    if ids.is_empty() {
        return Err(Error::NoCompleteWindows);
    }
    report.rows = ids.len();
    fn split<M>(rows: Vec<Vec<M>>) -> (Vec<Vec<M>>, Vec<M>) {
        rows.into_iter()
            .map(|mut r| {
                let resp = r.pop().expect("response column present");
                (r, resp)
            })
            .unzip()
    }
    let file = match opts.representation {
        Representation::Gaussian => {
            let (predictors, responses) = split(g_rows);
            DatasetFile::Gaussian(DatasetTable { ids, names, predictors, responses: Some(responses) })
        }
        Representation::Quantile => {
            let (predictors, responses) = split(q_rows);
            DatasetFile::Quantile(DatasetTable { ids, names, predictors, responses: Some(responses) })
        }
    };
    Ok((file, report))
}

fn with_output<F>(out: Option<&Path>, f: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    match out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            f(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

/// Reads a signal CSV and writes the windowed dataset to `out` (stdout when `None`).
pub fn cmd_ingest(input: &Path, opts: &IngestOptions, out: Option<&Path>) -> Result<IngestReport> {
    let (file, report) = ingest(File::open(input)?, opts)?;
    with_output(out, |w| write_dataset(&file, w))?;
    Ok(report)
}

/// Fits a dataset file, writes the model JSON and returns the fit report.
pub fn cmd_fit(
    dataset: &Path,
    options: &FitOptions,
    grid_size: Option<usize>,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<String> {
    let data = read_dataset_path(dataset)?;
    let model = fit_dataset(&data, options, grid_size, seed)?;
    let json = model.to_json()?;
    with_output(out, |w| Ok(w.write_all(json.as_bytes())?))?;
    Ok(fit_report(&model))
}

pub fn cmd_predict(model: &Path, dataset: &Path, mode: Mode, out: Option<&Path>) -> Result<Predictions> {
    let model = ModelFile::load(model)?;
    let data = read_dataset_path(dataset)?;
    let preds = predict_dataset(&model, &data, mode)?;
    with_output(out, |w| write_predictions(&preds, w))?;
    Ok(preds)
}

/// Writes the trajectory of the row with id `row_id` (the first row when `None`).
pub fn cmd_trajectory(
    model: &Path,
    dataset: &Path,
    row_id: Option<&str>,
    grid_size: usize,
    mode: Mode,
    out: Option<&Path>,
) -> Result<Vec<Curve>> {
    let model = ModelFile::load(model)?;
    let data = read_dataset_path(dataset)?;
    let row = match (row_id, &data) {
        (None, _) => 0,
        (Some(id), DatasetFile::Gaussian(t)) => t.row_index(id)?,
        (Some(id), DatasetFile::Quantile(t)) => t.row_index(id)?,
    };
    let curves = trajectory(&model, &data, row, grid_size, mode)?;
    with_output(out, |w| write_trajectory(&curves, w))?;
    Ok(curves)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulateOutputs {
    pub csv: PathBuf,
    pub table: PathBuf,
}

/// Runs one cell (or the whole lattice) and writes `simulation.csv` and `simulation.txt` into `out_dir`.
pub fn cmd_simulate(config: &ScenarioConfig, lattice: bool, out_dir: &Path) -> Result<SimulateOutputs> {
    let reports = if lattice {
        run_lattice(config, &LATTICE_N, &LATTICE_P, &LATTICE_ZETA)?
    } else {
        vec![run_replications(config)?]
    };
    fs::create_dir_all(out_dir)?;
    let outputs = SimulateOutputs {
        csv: out_dir.join("simulation.csv"),
        table: out_dir.join("simulation.txt"),
    };
    fs::write(&outputs.csv, report_csv(&reports))?;
    fs::write(&outputs.table, report_tables(&reports))?;
    Ok(outputs)
}
