//! Dataset text files and model documents.

use std::fs;
use std::path::Path;

use bitfit_core::{
    q_total_with_precision, Dataset, DeltaM, FitConfig, FitObjective, FitResult, MixtureParams, QBreakdown, Scheme,
    StageReport, VariationMode,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Error;

pub const MODEL_FORMAT: &str = "bitfit-model";
pub const MODEL_VERSION: u32 = 1;

/// Parses comma-separated rows; blank lines and `#` comments are skipped.
pub fn parse_dataset(text: &str) -> Result<Dataset, Error> {
    let mut points = Vec::new();
    let mut width = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut n = 0;
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("not a number: {:?}", field.trim()),
            })?;
            points.push(v);
            n += 1;
        }
        match width {
            None => width = Some(n),
            Some(w) if w != n => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected {w} columns, found {n}"),
                })
            }
            _ => {}
        }
    }
    let Some(width) = width else {
        return Err(Error::Parse {
            line: 0,
            message: "no data rows".into(),
        });
    };
    Ok(Dataset::new(points, width)?)
}

/// One row per point; floats are written in shortest round-trip form.
pub fn format_dataset(data: &Dataset) -> String {
    let mut out = String::with_capacity(data.as_slice().len() * 20);
    for row in data.rows() {
        let fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn read_dataset(path: &Path) -> Result<Dataset, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text)
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<(), Error> {
    fs::write(path, format_dataset(data)).map_err(|e| Error::io(path, e))
}

/// Settings a model was fitted with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigRecord {
    pub max_components: usize,
    pub scheme: String,
    pub stage_budgets: [usize; 4],
    pub custom_bounds: bool,
    pub seed: u64,
    pub mode: String,
    pub objective: String,
    pub significant_amplitude: f64,
    pub min_width_fraction: f64,
    pub delta_x: f64,
}

impl From<&FitConfig> for ConfigRecord {
    fn from(c: &FitConfig) -> Self {
        Self {
            max_components: c.max_components,
            scheme: scheme_name(c.scheme).into(),
            stage_budgets: c.stage_budgets,
            custom_bounds: c.bounds.is_some(),
            seed: c.seed,
            mode: mode_name(c.mode).into(),
            objective: match c.objective {
                FitObjective::BitCount => "bit-count",
                FitObjective::LikelihoodOnly => "likelihood-only",
            }
            .into(),
            significant_amplitude: c.significant_amplitude,
            min_width_fraction: c.min_width_fraction,
            delta_x: c.delta_x,
        }
    }
}

/// Where a model came from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub config: Option<ConfigRecord>,
    /// First 16 bytes of the SHA-256 of the config record's JSON, hex.
    pub config_hash: Option<String>,
    pub training_data: Option<String>,
    pub n_data: Option<usize>,
}

impl Provenance {
    pub fn from_config(config: &FitConfig, training_data: Option<&Path>, n_data: usize) -> Self {
        let record = ConfigRecord::from(config);
        let json = serde_json::to_string(&record).expect("plain struct serializes");
        let digest = Sha256::digest(json.as_bytes());
        let hash: String = digest[..16].iter().map(|b| format!("{b:02x}")).collect();
        Self {
            config: Some(record),
            config_hash: Some(hash),
            training_data: training_data.map(|p| p.display().to_string()),
            n_data: Some(n_data),
        }
    }
}

/// A fitted model as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub params: MixtureParams,
    pub delta_m: DeltaM,
    pub mode: VariationMode,
    /// Loaded breakdowns carry no per-point corrections.
    pub q: QBreakdown,
    pub delta_x: f64,
    pub stage_history: Vec<StageReport>,
    pub pruned: Vec<usize>,
    pub runaway_width: bool,
    pub provenance: Provenance,
}

impl ModelFile {
    pub fn from_fit(fit: &FitResult, delta_x: f64, provenance: Provenance) -> Self {
        Self {
            params: fit.params.clone(),
            delta_m: fit.delta_m.clone(),
            mode: fit.mode,
            q: QBreakdown {
                per_point_corrections: Vec::new(),
                ..fit.q.clone()
            },
            delta_x,
            stage_history: fit.stage_history.clone(),
            pruned: fit.pruned.clone(),
            runaway_width: fit.runaway_width,
            provenance,
        }
    }

    pub fn to_fit(&self) -> FitResult {
        FitResult {
            params: self.params.clone(),
            delta_m: self.delta_m.clone(),
            q: self.q.clone(),
            mode: self.mode,
            stage_history: self.stage_history.clone(),
            pruned: self.pruned.clone(),
            runaway_width: self.runaway_width,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.q.valid && !self.runaway_width
    }

    /// Recomputes `Q` on the training data and checks it against the stored
    /// value to `1e-10` relative.
    pub fn verify_q(&self, training: &Dataset) -> Result<QBreakdown, Error> {
        let q = q_total_with_precision(training, &self.params, &self.delta_m, self.mode, self.delta_x)?;
        let same = match (q.q_total.is_finite(), self.q.q_total.is_finite()) {
            (true, true) => (q.q_total - self.q.q_total).abs() <= 1e-10 * q.q_total.abs().max(1.0),
            (false, false) => true,
            _ => false,
        };
        if !same {
            return Err(Error::Model(format!(
                "stored Q {} does not match recomputed {}",
                self.q.q_total, q.q_total
            )));
        }
        Ok(q)
    }

    pub fn to_json(&self) -> String {
        let p = &self.params;
        let d = p.n_dim;
        let rows = |v: &[f64]| v.chunks(d).map(<[f64]>::to_vec).collect::<Vec<_>>();
        let doc = Doc {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            scheme: scheme_name(p.scheme).into(),
            mode: mode_name(self.mode).into(),
            n_dim: d,
            n_components: p.n_components(),
            weights: p.weights().unwrap_or_default(),
            amplitudes_raw: p.amp_raw.clone(),
            means: rows(&p.means),
            widths: rows(&p.log_widths.iter().map(|v| v.exp()).collect::<Vec<_>>()),
            log_widths: rows(&p.log_widths),
            log_delta_m: self.delta_m.log_values().to_vec(),
            delta_x: self.delta_x,
            q: QDoc {
                q_l: finite(self.q.q_l),
                q_delta: finite(self.q.q_delta),
                q_r: finite(self.q.q_r),
                q_total: finite(self.q.q_total),
                valid: self.q.valid,
                floored: self.q.floored,
            },
            stage_history: self
                .stage_history
                .iter()
                .map(|s| StageDoc {
                    name: s.name.clone(),
                    best_q: finite(s.best_q),
                    evaluations: s.evaluations,
                })
                .collect(),
            pruned: self.pruned.clone(),
            runaway_width: self.runaway_width,
            provenance: self.provenance.clone(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("plain struct serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, Error> {
        let probe: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
        if probe.get("format").and_then(|v| v.as_str()) != Some(MODEL_FORMAT) {
            return Err(Error::Model(format!("not a {MODEL_FORMAT} document")));
        }
        match probe.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(MODEL_VERSION) => {}
            other => {
                return Err(Error::Model(format!(
                    "version mismatch: file has {other:?}, expected {MODEL_VERSION}"
                )))
            }
        }
        let doc: Doc = serde_json::from_value(probe).map_err(|e| Error::Model(e.to_string()))?;
        let scheme = parse_scheme(&doc.scheme).map_err(Error::Model)?;
        let mode = parse_mode(&doc.mode).map_err(Error::Model)?;
        let d = doc.n_dim;
        let flat = |rows: &[Vec<f64>], what: &str| -> Result<Vec<f64>, Error> {
            if rows.len() != doc.n_components || rows.iter().any(|r| r.len() != d) {
                return Err(Error::Model(format!("{what} must be {} rows of {d}", doc.n_components)));
            }
            Ok(rows.concat())
        };
        let means = flat(&doc.means, "means")?;
        let widths = flat(&doc.widths, "widths")?;
        let log_widths = flat(&doc.log_widths, "log_widths")?;
        if let Some(w) = widths.iter().find(|w| !(**w > 0.0)) {
            return Err(Error::Model(format!("width {w} is not positive")));
        }
        for (w, lw) in widths.iter().zip(&log_widths) {
            if (lw.exp() - w).abs() > 1e-12 * w {
                return Err(Error::Model(format!("width {w} disagrees with log width {lw}")));
            }
        }
        let params = MixtureParams::new(scheme, d, doc.amplitudes_raw, means, log_widths)?;
        if doc.log_delta_m.len() != params.n_params() {
            return Err(Error::Model(format!(
                "expected {} truncation ranges, found {}",
                params.n_params(),
                doc.log_delta_m.len()
            )));
        }
        let delta_m = DeltaM::from_log(doc.log_delta_m)?;
        if !(doc.delta_x > 0.0 && doc.delta_x.is_finite()) {
            return Err(Error::Model("delta_x must be positive".into()));
        }
        let inf = |v: Option<f64>| v.unwrap_or(f64::INFINITY);
        let q = QBreakdown {
            q_l: inf(doc.q.q_l),
            q_delta: inf(doc.q.q_delta),
            q_r: inf(doc.q.q_r),
            q_total: inf(doc.q.q_total),
            valid: doc.q.valid,
            per_point_corrections: Vec::new(),
            floored: doc.q.floored,
        };
        Ok(Self {
            params,
            delta_m,
            mode,
            q,
            delta_x: doc.delta_x,
            stage_history: doc
                .stage_history
                .into_iter()
                .map(|s| StageReport {
                    name: s.name,
                    best_q: inf(s.best_q),
                    evaluations: s.evaluations,
                })
                .collect(),
            pruned: doc.pruned,
            runaway_width: doc.runaway_width,
            provenance: doc.provenance,
        })
    }
}

pub fn save_model(path: &Path, model: &ModelFile) -> Result<(), Error> {
    fs::write(path, model.to_json()).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ModelFile, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ModelFile::from_json(&text)
}

pub fn scheme_name(s: Scheme) -> &'static str {
    match s {
        Scheme::SquaredNorm => "sqnorm",
        Scheme::Hyperspherical => "hyperspherical",
    }
}

pub fn parse_scheme(s: &str) -> Result<Scheme, String> {
    match s {
        "sqnorm" => Ok(Scheme::SquaredNorm),
        "hyperspherical" => Ok(Scheme::Hyperspherical),
        _ => Err(format!("unknown scheme {s:?}")),
    }
}

pub fn mode_name(m: VariationMode) -> &'static str {
    match m {
        VariationMode::Local => "local",
        VariationMode::Global => "global",
    }
}

pub fn parse_mode(s: &str) -> Result<VariationMode, String> {
    match s {
        "local" => Ok(VariationMode::Local),
        "global" => Ok(VariationMode::Global),
        _ => Err(format!("unknown mode {s:?}")),
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QDoc {
    q_l: Option<f64>,
    q_delta: Option<f64>,
    q_r: Option<f64>,
    q_total: Option<f64>,
    valid: bool,
    floored: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StageDoc {
    name: String,
    best_q: Option<f64>,
    evaluations: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Doc {
    format: String,
    version: u32,
    scheme: String,
    mode: String,
    n_dim: usize,
    n_components: usize,
    /// Derived from the raw amplitudes; informational.
    weights: Vec<f64>,
    amplitudes_raw: Vec<f64>,
    means: Vec<Vec<f64>>,
    /// Must agree with `log_widths`, which are authoritative.
    widths: Vec<Vec<f64>>,
    log_widths: Vec<Vec<f64>>,
    log_delta_m: Vec<f64>,
    delta_x: f64,
    q: QDoc,
    stage_history: Vec<StageDoc>,
    pruned: Vec<usize>,
    runaway_width: bool,
    provenance: Provenance,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blank_lines() {
        let d = parse_dataset("# header\n1.5, 2\n\n-3,4e-1 # trailing\n").unwrap();
        assert_eq!(d.n_dim(), 2);
        assert_eq!(d.as_slice(), &[1.5, 2.0, -3.0, 0.4]);
    }

    #[test]
    fn ragged_and_garbage_rows_are_errors() {
        assert!(matches!(parse_dataset("1,2\n3\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_dataset("1,x\n"), Err(Error::Parse { line: 1, .. })));
        assert!(parse_dataset("# nothing\n").is_err());
        assert!(parse_dataset("nan\n").is_err());
    }

    #[test]
    fn dataset_text_round_trip_is_exact() {
        let values = vec![0.1, -1e-300, 123456.789, std::f64::consts::PI, 5e-324, -0.0];
        let d = Dataset::new(values.clone(), 2).unwrap();
        let back = parse_dataset(&format_dataset(&d)).unwrap();
        for (a, b) in values.iter().zip(back.as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn mode_and_scheme_names() {
        for s in [Scheme::SquaredNorm, Scheme::Hyperspherical] {
            assert_eq!(parse_scheme(scheme_name(s)).unwrap(), s);
        }
        for m in [VariationMode::Local, VariationMode::Global] {
            assert_eq!(parse_mode(mode_name(m)).unwrap(), m);
        }
        assert!(parse_mode("both").is_err());
    }
}
