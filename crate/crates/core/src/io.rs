//! File formats and reports.
//!
//! Panels are stored as a long CSV (`series_id,t,y,x1..xp`, t from 0) plus a
//! metadata CSV (`series_id,t_star,role`). The t = 0 row carries no
//! covariates (any present are ignored); the target may leave y empty at
//! t = T*+1, where its covariates are still required.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bootstrap::{Assessment, Procedure};
use crate::error::{Error, Result};
use crate::estimators::{DonorShock, Method};
use crate::loocv::LoocvReport;
use crate::panel::{DonorPool, TimeSeries};
use crate::sim::SimRow;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Target,
    Donor,
}

struct Row {
    line: usize,
    t: usize,
    y: Option<f64>,
    x: Option<Vec<f64>>,
}

fn parse_err(file: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_string(),
        line,
        message: message.into(),
    }
}

fn parse_num(file: &str, line: usize, field: &str, raw: &str) -> Result<Option<f64>> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(None);
    }
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(parse_err(
            file,
            line,
            format!("{field}: not a finite number: {raw:?}"),
        )),
    }
}

/// Parses the long-format panel and its metadata into a validated pool.
/// `data_name` and `meta_name` only label error messages.
pub fn read_panel(
    data: impl Read,
    data_name: &str,
    meta: impl Read,
    meta_name: &str,
) -> Result<DonorPool> {
    let (order, mut rows, p) = read_rows(data, data_name)?;
    let roles = read_meta(meta, meta_name)?;

    for (id, (line, _, _)) in &roles {
        if !rows.contains_key(id) {
            return Err(parse_err(
                meta_name,
                *line,
                format!("series {id} has no rows in {data_name}"),
            ));
        }
    }
    let mut donors = Vec::new();
    let mut target = None;
    for id in order {
        let series_rows = rows.remove(&id).expect("collected");
        let first_line = series_rows[0].line;
        let (_, t_star, role) = *roles.get(&id).ok_or_else(|| {
            parse_err(
                data_name,
                first_line,
                format!("series {id} missing from {meta_name}"),
            )
        })?;
        let series = assemble(&id, series_rows, t_star, role, p, data_name)?;
        match role {
            Role::Donor => donors.push(series),
            Role::Target => target = Some(series),
        }
    }
    let target = target.ok_or_else(|| parse_err(meta_name, 1, "no series has role target"))?;
    DonorPool::new(donors, target)
}

type RowMap = HashMap<String, Vec<Row>>;

fn read_rows(data: impl Read, name: &str) -> Result<(Vec<String>, RowMap, usize)> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(data);
    let header: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let p = header.len().saturating_sub(3);
    let expected: Vec<String> = ["series_id", "t", "y"]
        .iter()
        .map(|s| s.to_string())
        .chain((1..=p).map(|j| format!("x{j}")))
        .collect();
    if p == 0 || header != expected {
        return Err(parse_err(
            name,
            1,
            format!(
                "header must be series_id,t,y,x1..xp, got {}",
                header.join(",")
            ),
        ));
    }
    let mut order = Vec::new();
    let mut rows: RowMap = HashMap::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        if rec.len() != header.len() {
            return Err(parse_err(
                name,
                line,
                format!("{} fields, expected {}", rec.len(), header.len()),
            ));
        }
        let id = rec[0].trim().to_string();
        if id.is_empty() {
            return Err(parse_err(name, line, "empty series_id"));
        }
        let t: usize = rec[1].trim().parse().map_err(|_| {
            parse_err(
                name,
                line,
                format!("t: not a nonnegative integer: {:?}", &rec[1]),
            )
        })?;
        let y = parse_num(name, line, "y", &rec[2])?;
        let xs = (0..p)
            .map(|j| parse_num(name, line, &header[3 + j], &rec[3 + j]))
            .collect::<Result<Vec<_>>>()?;
        let x = if xs.iter().all(Option::is_none) {
            None
        } else if xs.iter().all(Option::is_some) {
            Some(xs.into_iter().map(Option::unwrap).collect())
        } else {
            return Err(parse_err(
                name,
                line,
                "covariates must be all present or all empty",
            ));
        };
        let entry = rows.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Vec::new()
        });
        let expected_t = entry.len();
        if t != expected_t {
            let msg = if expected_t == 0 {
                format!("series {id}: first row has t = {t}, expected t = 0")
            } else {
                format!(
                    "series {id}: t = {t} follows t = {}, rows must be consecutive",
                    expected_t - 1
                )
            };
            return Err(parse_err(name, line, msg));
        }
        entry.push(Row { line, t, y, x });
    }
    if order.is_empty() {
        return Err(parse_err(name, 1, "no data rows"));
    }
    Ok((order, rows, p))
}

fn read_meta(meta: impl Read, name: &str) -> Result<HashMap<String, (usize, usize, Role)>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(meta);
    let header: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header != ["series_id", "t_star", "role"] {
        return Err(parse_err(
            name,
            1,
            format!(
                "header must be series_id,t_star,role, got {}",
                header.join(",")
            ),
        ));
    }
    let mut out = HashMap::new();
    let mut target_line = None;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let id = rec[0].trim().to_string();
        let t_star: usize = rec[1].trim().parse().map_err(|_| {
            parse_err(
                name,
                line,
                format!("t_star: not a nonnegative integer: {:?}", &rec[1]),
            )
        })?;
        let role = match rec[2].trim() {
            "target" => Role::Target,
            "donor" => Role::Donor,
            other => {
                return Err(parse_err(
                    name,
                    line,
                    format!("role must be target or donor, got {other:?}"),
                ))
            }
        };
        if role == Role::Target {
            if let Some(prev) = target_line {
                return Err(parse_err(
                    name,
                    line,
                    format!("second target (first on line {prev})"),
                ));
            }
            target_line = Some(line);
        }
        if out.insert(id.clone(), (line, t_star, role)).is_some() {
            return Err(parse_err(name, line, format!("series {id} listed twice")));
        }
    }
    Ok(out)
}

fn assemble(
    id: &str,
    rows: Vec<Row>,
    t_star: usize,
    role: Role,
    p: usize,
    file: &str,
) -> Result<TimeSeries> {
    let first_line = rows[0].line;
    let last_t = rows.last().expect("nonempty").t;
    let at = |msg: String| parse_err(file, first_line, format!("series {id}: {msg}"));
    if last_t < t_star + 1 {
        return Err(at(format!(
            "rows end at t = {last_t}, need t = T*+1 = {}",
            t_star + 1
        )));
    }
    let shocked = match role {
        Role::Donor => true,
        Role::Target => rows[t_star + 1].y.is_some(),
    };
    if !shocked && last_t != t_star + 1 {
        return Err(at(format!(
            "target without y at T*+1 = {} must end there",
            t_star + 1
        )));
    }
    let y_end = if shocked { last_t } else { t_star };
    let mut y = Vec::with_capacity(y_end + 1);
    let mut x = Vec::with_capacity(last_t);
    for r in &rows {
        if r.t <= y_end {
            y.push(r.y.ok_or_else(|| {
                parse_err(
                    file,
                    r.line,
                    format!("series {id}: missing y at t = {}", r.t),
                )
            })?);
        }
        if r.t >= 1 {
            let row = r.x.clone().ok_or_else(|| {
                parse_err(
                    file,
                    r.line,
                    format!("series {id}: missing covariates at t = {}", r.t),
                )
            })?;
            debug_assert_eq!(row.len(), p);
            x.push(row);
        }
    }
    TimeSeries::new(id, y, x, t_star, shocked).map_err(|e| match e {
        Error::InvalidInput(msg) => parse_err(file, first_line, msg),
        other => other,
    })
}

pub fn load_panel(data_path: &Path, meta_path: &Path) -> Result<DonorPool> {
    read_panel(
        File::open(data_path).map_err(Error::at(data_path))?,
        &data_path.display().to_string(),
        File::open(meta_path).map_err(Error::at(meta_path))?,
        &meta_path.display().to_string(),
    )
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes a pool in the format [`read_panel`] accepts.
pub fn write_panel(pool: &DonorPool, data: impl Write, meta: impl Write) -> Result<()> {
    let p = pool.p();
    let mut d = csv::Writer::from_writer(data);
    let mut header = vec!["series_id".to_string(), "t".into(), "y".into()];
    header.extend((1..=p).map(|j| format!("x{j}")));
    d.write_record(&header)?;
    let mut m = csv::Writer::from_writer(meta);
    m.write_record(["series_id", "t_star", "role"])?;
    let all = pool
        .donors()
        .iter()
        .map(|s| (s, "donor"))
        .chain(std::iter::once((pool.target(), "target")));
    for (s, role) in all {
        let last = s.len_t().max(s.t_star() + 1);
        for t in 0..=last {
            let mut rec = vec![
                s.id().to_string(),
                t.to_string(),
                fmt_opt(s.y().get(t).copied()),
            ];
            match s.x_row(t).filter(|_| t > 0) {
                Some(row) => rec.extend(row.iter().map(|v| v.to_string())),
                None => rec.extend(std::iter::repeat_n(String::new(), p)),
            }
            d.write_record(&rec)?;
        }
        m.write_record([s.id(), &s.t_star().to_string(), role])?;
    }
    d.flush()?;
    m.flush()?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Provenance of a run. Two runs with equal manifests (ignoring the
/// timestamp) produce identical numbers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the canonical JSON of the effective configuration.
    pub config_hash: String,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    pub inputs: Vec<InputDigest>,
    /// Unix seconds; `SOURCE_DATE_EPOCH` overrides the clock.
    pub timestamp: u64,
}

impl RunManifest {
    pub fn new(
        command: &str,
        config: &impl Serialize,
        seed: u64,
        inputs: &[&Path],
    ) -> Result<Self> {
        let canonical = serde_json::to_vec(config)?;
        let inputs = inputs
            .iter()
            .map(|p| {
                let mut bytes = Vec::new();
                File::open(p)
                    .and_then(|mut f| f.read_to_end(&mut bytes))
                    .map_err(Error::at(p))?;
                Ok(InputDigest {
                    path: p.display().to_string(),
                    sha256: sha256_hex(&bytes),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut versions = BTreeMap::new();
        versions.insert(
            env!("CARGO_PKG_NAME").to_string(),
            env!("CARGO_PKG_VERSION").to_string(),
        );
        versions.insert("schema".to_string(), SCHEMA_VERSION.to_string());
        Ok(Self {
            command: command.to_string(),
            config_hash: sha256_hex(&canonical),
            seed,
            versions,
            inputs,
            timestamp: timestamp(),
        })
    }
}

fn timestamp() -> u64 {
    if let Some(v) = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse().ok())
    {
        return v;
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportWeights {
    pub donors: Vec<String>,
    pub w: Vec<f64>,
    pub objective: f64,
    pub norm_order: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub schema_version: u32,
    pub target: String,
    pub procedure: Procedure,
    pub replicates: usize,
    pub redraws: usize,
    pub donors: Vec<DonorShock>,
    pub estimates: BTreeMap<Method, f64>,
    pub weights: ReportWeights,
    pub bootstrap_var: BTreeMap<Method, f64>,
    pub delta_hat: BTreeMap<Method, f64>,
    pub decisions: BTreeMap<Method, u8>,
    pub forecast1: f64,
    pub forecast2: BTreeMap<Method, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub actual: Option<f64>,
    pub manifest: RunManifest,
}

impl ForecastReport {
    pub fn new(a: &Assessment, replicates: usize, manifest: RunManifest) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            target: a.target_id.clone(),
            procedure: a.bootstrap.procedure,
            replicates,
            redraws: a.bootstrap.redraws,
            donors: a.donor_shocks.clone(),
            estimates: a
                .estimates
                .estimates
                .iter()
                .map(|e| (e.method, e.value))
                .collect(),
            weights: ReportWeights {
                donors: a.donor_shocks.iter().map(|d| d.donor_id.clone()).collect(),
                w: a.weights.w.clone(),
                objective: a.weights.objective,
                norm_order: a.weights.norm_order,
            },
            bootstrap_var: a
                .risk
                .iter()
                .map(|r| (r.estimator, r.bootstrap_var))
                .collect(),
            delta_hat: a.risk.iter().map(|r| (r.estimator, r.delta_hat)).collect(),
            decisions: a
                .risk
                .iter()
                .map(|r| (r.estimator, r.decision as u8))
                .collect(),
            forecast1: a.forecast1,
            forecast2: a.forecast2.clone(),
            actual: a.actual,
            manifest,
        }
    }
}

/// Target path with in-sample fits and both forecasts at T*+1.
pub fn write_plot_data(pool: &DonorPool, a: &Assessment, out: impl Write) -> Result<()> {
    let target = pool.target();
    let methods: Vec<Method> = a.forecast2.keys().copied().collect();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "t".to_string(),
        "actual".into(),
        "fitted".into(),
        "forecast1".into(),
    ];
    header.extend(methods.iter().map(|m| format!("forecast2_{}", m.as_str())));
    w.write_record(&header)?;
    let resid = a
        .target_fit
        .as_ref()
        .map(|f| f.residuals.as_slice())
        .unwrap_or(&[]);
    for t in 0..=target.t_star() {
        let fitted = (t >= 1)
            .then(|| resid.get(t - 1).map(|e| target.y()[t] - e))
            .flatten();
        let mut rec = vec![
            t.to_string(),
            target.y()[t].to_string(),
            fmt_opt(fitted),
            String::new(),
        ];
        rec.extend(methods.iter().map(|_| String::new()));
        w.write_record(&rec)?;
    }
    let mut rec = vec![
        (target.t_star() + 1).to_string(),
        fmt_opt(a.actual),
        String::new(),
        a.forecast1.to_string(),
    ];
    rec.extend(methods.iter().map(|m| a.forecast2[m].to_string()));
    w.write_record(&rec)?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvFile {
    pub schema_version: u32,
    #[serde(flatten)]
    pub report: LoocvReport,
    pub manifest: RunManifest,
}

pub fn write_loocv_csv(report: &LoocvReport, out: impl Write) -> Result<()> {
    let methods: Vec<Method> = report.c_bar.keys().copied().collect();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["held_out".to_string(), "index".into(), "e1".into()];
    for m in &methods {
        for f in ["decision", "e2", "correct"] {
            header.push(format!("{f}_{}", m.as_str()));
        }
    }
    w.write_record(&header)?;
    for it in &report.iterations {
        let mut rec = vec![it.held_out.clone(), it.index.to_string(), it.e1.to_string()];
        for m in &methods {
            let s = &it.scores[m];
            rec.extend([
                (s.decision as u8).to_string(),
                s.e2.to_string(),
                (s.correct as u8).to_string(),
            ]);
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationFile {
    pub schema_version: u32,
    pub rows: Vec<SimRow>,
    pub manifest: RunManifest,
}

/// One line per cell; standard errors are empty when undefined.
pub fn write_sim_csv(rows: &[SimRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let Some(first) = rows.first() else {
        w.flush()?;
        return Ok(());
    };
    let mut header = vec![
        "n".to_string(),
        "sigma".into(),
        "sigma_alpha".into(),
        "reps".into(),
    ];
    let groups = |r: &SimRow| -> Vec<(String, crate::sim::Stat)> {
        let mut v = Vec::new();
        v.extend(
            r.guess
                .iter()
                .map(|(m, s)| (format!("guess_{}", m.as_str()), *s)),
        );
        v.extend(
            r.c_bar
                .iter()
                .map(|(m, s)| (format!("c_bar_{}", m.as_str()), *s)),
        );
        v.extend(
            r.distance
                .iter()
                .map(|(k, s)| (format!("distance_{k}"), *s)),
        );
        v
    };
    for (name, _) in groups(first) {
        header.push(name.clone());
        header.push(format!("{name}_se"));
    }
    header.push("regenerations".into());
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.n.to_string(),
            r.sigma.to_string(),
            r.sigma_alpha.to_string(),
            r.reps.to_string(),
        ];
        for (_, s) in groups(r) {
            rec.push(s.mean.to_string());
            rec.push(fmt_opt(s.se));
        }
        rec.push(r.regenerations.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
