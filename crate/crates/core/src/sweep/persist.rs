//! CSV tables with a JSON sidecar.
//!
//! Floats are written in shortest round-trip form so that a reload gives
//! back identical records; missing values are empty cells.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BranchDiagram, Direction, SteadyStateRecord, SweepPlan, MERGE_TOL};
use crate::error::{Error, Result};
use crate::exact::MagnetizationDistribution;
use crate::model::{BlochVector, InteractionKind, ModelParams, SweepParameter};

pub const RECORDS_FILE: &str = "records.csv";
pub const DISTRIBUTIONS_FILE: &str = "distributions.csv";
pub const SIDECAR_FILE: &str = "sweep.json";
pub const DIAGRAM_FILE: &str = "branches.csv";
pub const INTERVALS_FILE: &str = "intervals.csv";

pub const RECORD_COLUMNS: [&str; 29] = [
    "tier", "kind", "D", "Z", "delta", "omega", "coupling", "direction", "mu_x", "mu_y", "mu_z",
    "kappa", "lambda_xx", "lambda_yy", "lambda_zz", "lambda_xy", "lambda_xz", "lambda_yz",
    "sigma_xx", "sigma_yy", "sigma_zz", "sigma_xy", "sigma_xz", "sigma_yz", "b_x", "converged",
    "parameter", "gamma", "residual",
];
const TAIL_COLUMNS: [&str; 2] = ["t_end", "error"];

const DISTRIBUTION_COLUMNS: [&str; 4] = ["record", "k", "m", "p"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub code_version: String,
    pub plan: SweepPlan,
    pub merge_tolerance: f64,
    pub records: usize,
    pub converged: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultFiles {
    pub records: PathBuf,
    pub distributions: Option<PathBuf>,
    pub sidecar: PathBuf,
}

pub(crate) fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}

fn header() -> Vec<&'static str> {
    RECORD_COLUMNS.iter().chain(TAIL_COLUMNS.iter()).copied().collect()
}

fn record_row(r: &SteadyStateRecord) -> Vec<String> {
    let mut row = vec![
        r.tier.to_string(),
        r.params.kind.to_string(),
        r.dimension.to_string(),
        r.connectivity.to_string(),
        fmt_f64(r.params.delta),
        fmt_f64(r.params.omega),
        fmt_f64(r.params.coupling),
        r.direction.to_string(),
        fmt_f64(r.mu.x),
        fmt_f64(r.mu.y),
        fmt_f64(r.mu.z),
        fmt_opt(r.kappa),
    ];
    row.extend(r.lambda.iter().map(|v| fmt_opt(*v)));
    row.extend(r.sigma.iter().map(|v| fmt_opt(*v)));
    row.extend([
        fmt_opt(r.b_x),
        r.converged.to_string(),
        r.parameter.to_string(),
        fmt_f64(r.params.gamma),
        fmt_opt(r.residual),
        fmt_opt(r.t_end),
        r.error.clone().unwrap_or_default(),
    ]);
    row
}

/// Write the record table alone.
pub fn write_records(records: &[SteadyStateRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header()).map_err(|e| csv_err(path, e))?;
    for r in records {
        w.write_record(record_row(r)).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_distributions(records: &[SteadyStateRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(DISTRIBUTION_COLUMNS).map_err(|e| csv_err(path, e))?;
    for (i, r) in records.iter().enumerate() {
        let Some(d) = &r.distribution else { continue };
        for (k, (m, p)) in d.values.iter().zip(&d.probabilities).enumerate() {
            w.write_record([i.to_string(), k.to_string(), fmt_f64(*m), fmt_f64(*p)])
                .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Records, distributions (exact tier) and the sidecar under `dir`.
pub fn persist_results(
    plan: &SweepPlan,
    records: &[SteadyStateRecord],
    seed: Option<u64>,
    dir: &Path,
) -> Result<ResultFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let rec_path = dir.join(RECORDS_FILE);
    write_records(records, &rec_path)?;
    let distributions = if records.iter().any(|r| r.distribution.is_some()) {
        let p = dir.join(DISTRIBUTIONS_FILE);
        write_distributions(records, &p)?;
        Some(p)
    } else {
        None
    };
    let sidecar = dir.join(SIDECAR_FILE);
    write_json(
        &Sidecar {
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            plan: plan.clone(),
            merge_tolerance: MERGE_TOL,
            records: records.len(),
            converged: records.iter().filter(|r| r.converged).count(),
            seed,
        },
        &sidecar,
    )?;
    Ok(ResultFiles {
        records: rec_path,
        distributions,
        sidecar,
    })
}

/// Per-point cluster table and the interval list.
pub fn persist_diagram(diagram: &BranchDiagram, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(DIAGRAM_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    w.write_record(["value", "cluster", "directions", "mu_x", "mu_y", "mu_z", "status"])
        .map_err(|e| csv_err(&path, e))?;
    for p in &diagram.points {
        for (c, cl) in p.clusters.iter().enumerate() {
            let dirs: Vec<String> = cl.directions.iter().map(|d| d.to_string()).collect();
            w.write_record([
                fmt_f64(p.value),
                c.to_string(),
                dirs.join("+"),
                fmt_f64(cl.mu.x),
                fmt_f64(cl.mu.y),
                fmt_f64(cl.mu.z),
                "ok".to_string(),
            ])
            .map_err(|e| csv_err(&path, e))?;
        }
        for x in diagram.excluded.iter().filter(|x| x.value == p.value) {
            w.write_record([
                fmt_f64(x.value),
                String::new(),
                x.direction.to_string(),
                String::new(),
                String::new(),
                String::new(),
                format!("excluded: {}", x.reason),
            ])
            .map_err(|e| csv_err(&path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let ipath = dir.join(INTERVALS_FILE);
    let mut w = csv::Writer::from_path(&ipath).map_err(|e| csv_err(&ipath, e))?;
    w.write_record(["parameter", "low", "high"]).map_err(|e| csv_err(&ipath, e))?;
    for (lo, hi) in &diagram.intervals {
        w.write_record([diagram.parameter.to_string(), fmt_f64(*lo), fmt_f64(*hi)])
            .map_err(|e| csv_err(&ipath, e))?;
    }
    w.flush().map_err(|e| Error::io(&ipath, e))?;
    Ok((path, ipath))
}

struct Cells<'a> {
    path: &'a Path,
    line: usize,
    row: &'a csv::StringRecord,
}

impl Cells<'_> {
    fn bad(&self, col: usize, what: &str) -> Error {
        Error::format(
            self.path,
            format!("line {}: column '{}': {what}", self.line, header()[col]),
        )
    }

    fn str(&self, col: usize) -> &str {
        self.row.get(col).unwrap_or("")
    }

    fn parse<T: std::str::FromStr>(&self, col: usize) -> Result<T> {
        self.str(col)
            .parse()
            .map_err(|_| self.bad(col, &format!("cannot parse '{}'", self.str(col))))
    }

    fn opt(&self, col: usize) -> Result<Option<f64>> {
        if self.str(col).is_empty() {
            Ok(None)
        } else {
            self.parse(col).map(Some)
        }
    }
}

fn parse_row(path: &Path, line: usize, row: &csv::StringRecord) -> Result<SteadyStateRecord> {
    let c = Cells { path, line, row };
    if row.len() != header().len() {
        return Err(Error::format(
            path,
            format!("line {line}: {} cells, expected {}", row.len(), header().len()),
        ));
    }
    let kind: InteractionKind = c.parse(1)?;
    let mut lambda = [None; 6];
    let mut sigma = [None; 6];
    for i in 0..6 {
        lambda[i] = c.opt(12 + i)?;
        sigma[i] = c.opt(18 + i)?;
    }
    let parameter: SweepParameter = match c.str(26) {
        "delta" => SweepParameter::Delta,
        "omega" => SweepParameter::Omega,
        "coupling" => SweepParameter::Coupling,
        _ => return Err(c.bad(26, "unknown parameter")),
    };
    let error = c.str(30);
    Ok(SteadyStateRecord {
        tier: c.parse(0)?,
        parameter,
        params: ModelParams {
            delta: c.parse(4)?,
            omega: c.parse(5)?,
            coupling: c.parse(6)?,
            gamma: c.parse(27)?,
            kind,
        },
        dimension: c.parse(2)?,
        connectivity: c.parse(3)?,
        direction: c.parse::<Direction>(7)?,
        mu: BlochVector::new(c.parse(8)?, c.parse(9)?, c.parse(10)?),
        kappa: c.opt(11)?,
        lambda,
        sigma,
        distribution: None,
        b_x: c.opt(24)?,
        converged: c.parse(25)?,
        residual: c.opt(28)?,
        t_end: c.opt(29)?,
        error: (!error.is_empty()).then(|| error.to_string()),
    })
}

/// Read a record table, checking the header against the schema.
pub fn read_records(path: &Path) -> Result<Vec<SteadyStateRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let head = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if head.iter().ne(header().into_iter()) {
        return Err(Error::format(path, "header does not match the record schema"));
    }
    let mut out = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row.map_err(|e| csv_err(path, e))?;
        out.push(parse_row(path, i + 2, &row)?);
    }
    Ok(out)
}

fn read_distributions(path: &Path, records: &mut [SteadyStateRecord]) -> Result<()> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let head = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if head.iter().ne(DISTRIBUTION_COLUMNS.into_iter()) {
        return Err(Error::format(path, "header does not match the distribution schema"));
    }
    let mut probs: Vec<Vec<f64>> = vec![Vec::new(); records.len()];
    for (line, row) in r.records().enumerate() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let bad = |what: &str| Error::format(path, format!("line {}: {what}", line + 2));
        let idx: usize = row[0].parse().map_err(|_| bad("bad record index"))?;
        let k: usize = row[1].parse().map_err(|_| bad("bad bin index"))?;
        let p: f64 = row[3].parse().map_err(|_| bad("bad probability"))?;
        let slot = probs.get_mut(idx).ok_or_else(|| bad("record index out of range"))?;
        if slot.len() != k {
            return Err(bad("bins out of order"));
        }
        slot.push(p);
    }
    for (rec, p) in records.iter_mut().zip(probs) {
        if !p.is_empty() {
            if p.len() < 2 {
                return Err(Error::format(path, "distribution with a single bin"));
            }
            rec.distribution = Some(MagnetizationDistribution::from_raw(p));
        }
    }
    Ok(())
}

/// Reload what [`persist_results`] wrote.
pub fn load_results(dir: &Path) -> Result<(Sidecar, Vec<SteadyStateRecord>)> {
    let side_path = dir.join(SIDECAR_FILE);
    let text = fs::read_to_string(&side_path).map_err(|e| Error::io(&side_path, e))?;
    let sidecar: Sidecar =
        serde_json::from_str(&text).map_err(|e| Error::format(&side_path, e.to_string()))?;
    let mut records = read_records(&dir.join(RECORDS_FILE))?;
    if records.len() != sidecar.records {
        return Err(Error::format(
            dir.join(RECORDS_FILE),
            format!("{} rows but the sidecar lists {}", records.len(), sidecar.records),
        ));
    }
    let dist = dir.join(DISTRIBUTIONS_FILE);
    if dist.exists() {
        read_distributions(&dist, &mut records)?;
    }
    Ok((sidecar, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeSpec;
    use crate::sweep::{detect_branches, run_sweep, Protocol, Tier};

    fn plan() -> SweepPlan {
        SweepPlan::new(
            Tier::Exact,
            SweepParameter::Delta,
            vec![0.0, 1.0, 2.0],
            ModelParams::xy(0.0, 0.5, 1.0),
            LatticeSpec::fully_connected(3).unwrap(),
            Protocol::ColdStart,
        )
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.0, -0.0, 1.0, 0.1, 1e-20, -3.3e-7, 1e300, 123456.789, f64::MIN_POSITIVE] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
    }

    #[test]
    fn empty_table_has_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let files = persist_results(&plan(), &[], None, dir.path()).unwrap();
        let text = fs::read_to_string(&files.records).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("tier,kind,D,Z,delta,omega,coupling,direction,mu_x"));
        assert!(files.distributions.is_none());
        let (_, recs) = load_results(dir.path()).unwrap();
        assert!(recs.is_empty());
    }

    #[test]
    fn round_trip_with_distributions() {
        let dir = tempfile::tempdir().unwrap();
        let p = plan();
        let mut recs = run_sweep(&p).unwrap();
        recs[1].error = Some("a, \"quoted\" failure".into());
        let files = persist_results(&p, &recs, Some(7), dir.path()).unwrap();
        assert!(files.distributions.is_some());
        let (side, back) = load_results(dir.path()).unwrap();
        assert_eq!(back, recs);
        assert_eq!(side.plan, p);
        assert_eq!(side.seed, Some(7));
    }

    #[test]
    fn persisting_twice_is_byte_identical() {
        let p = plan();
        let recs = run_sweep(&p).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        persist_results(&p, &recs, None, a.path()).unwrap();
        persist_results(&p, &run_sweep(&p).unwrap(), None, b.path()).unwrap();
        for f in [RECORDS_FILE, DISTRIBUTIONS_FILE, SIDECAR_FILE] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
        }
        let d = detect_branches(&recs).unwrap();
        let (x, y) = persist_diagram(&d, a.path()).unwrap();
        assert!(fs::read_to_string(x).unwrap().lines().count() > 1);
        assert_eq!(fs::read_to_string(y).unwrap().lines().count(), 1);
    }

    #[test]
    fn schema_mismatch_names_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(RECORDS_FILE);
        fs::write(&path, "tier,kind\nmf,xy\n").unwrap();
        let err = read_records(&path).unwrap_err().to_string();
        assert!(err.contains(RECORDS_FILE), "{err}");
    }

    #[test]
    fn missing_directory_is_an_io_error_with_path() {
        let err = load_results(Path::new("/nonexistent/sweep")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("/nonexistent/sweep"));
    }
}
