//! Tables for trajectories, correlator snapshots and spectra, and
//! plot-ready curve files.
//!
//! Plot files are whitespace-separated columns under a `#` comment header,
//! one file per curve, listed in a `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meanfield::{BistabilityScan, Stability};
use crate::mfqf::{CorrelationObservables, MfqfState, Pair, RelaxationTrace};
use crate::sweep::{detect_branches, fmt_f64, fmt_opt, load_results, SteadyStateRecord, Tier};

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))
}

fn put<I, S>(w: &mut csv::Writer<fs::File>, path: &Path, row: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(row).map_err(|e| Error::format(path, e.to_string()))
}

fn done(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// `t, mu, dmu/dt` for every accepted step.
pub fn write_trajectory(path: &Path, trace: &RelaxationTrace) -> Result<()> {
    let mut w = csv_writer(path)?;
    put(&mut w, path, ["t", "mu_x", "mu_y", "mu_z", "dmu_x", "dmu_y", "dmu_z"])?;
    for i in 0..trace.len() {
        let (m, d) = (trace.mu[i], trace.dmu[i]);
        put(
            &mut w,
            path,
            [trace.times[i], m.x, m.y, m.z, d.x, d.y, d.z].map(fmt_f64),
        )?;
    }
    done(w, path)
}

/// One row per displacement class of the correlator field.
pub fn write_snapshot(path: &Path, state: &MfqfState) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut head = vec!["t".to_string(), "displacement".into(), "distance".into()];
    head.extend(Pair::ALL.iter().map(|p| format!("eta_{p}")));
    put(&mut w, path, &head)?;
    let lattice = state.field.lattice().clone();
    for (k, r) in state.field.stencil().classes().iter().enumerate() {
        let comps: Vec<String> = r.components().iter().map(|c| c.to_string()).collect();
        let mut row = vec![
            fmt_f64(state.time),
            comps.join(" "),
            lattice.norm(r).to_string(),
        ];
        row.extend(state.field.class(k).iter().map(|v| fmt_f64(*v)));
        put(&mut w, path, &row)?;
    }
    done(w, path)
}

/// `quantity, value, fit_residual` rows for lambda, Sigma and kappa.
pub fn write_observables(path: &Path, obs: &CorrelationObservables) -> Result<()> {
    let mut w = csv_writer(path)?;
    put(&mut w, path, ["quantity", "value", "fit_residual"])?;
    for p in Pair::ALL {
        let i = p.index();
        put(
            &mut w,
            path,
            [format!("lambda_{p}"), fmt_opt(obs.lambda[i]), fmt_opt(obs.lambda_residual[i])],
        )?;
    }
    for p in Pair::ALL {
        put(
            &mut w,
            path,
            [format!("sigma_{p}"), fmt_f64(obs.sigma[p.index()]), String::new()],
        )?;
    }
    put(
        &mut w,
        path,
        ["kappa".to_string(), fmt_opt(obs.kappa), fmt_opt(obs.kappa_residual)],
    )?;
    done(w, path)
}

/// `value, direction, b_x, mu_x, residual, converged` per record.
pub fn write_bimodality(path: &Path, records: &[SteadyStateRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    put(&mut w, path, ["value", "direction", "b_x", "mu_x", "residual", "converged"])?;
    for r in records {
        put(
            &mut w,
            path,
            [
                fmt_f64(r.value()),
                r.direction.to_string(),
                fmt_opt(r.b_x),
                fmt_f64(r.mu.x),
                fmt_opt(r.residual),
                r.converged.to_string(),
            ],
        )?;
    }
    done(w, path)
}

/// `value, k, re, im` for the leading eigenvalues at each grid point.
pub fn write_spectrum(path: &Path, rows: &[(f64, Vec<Complex64>)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    put(&mut w, path, ["value", "k", "re", "im"])?;
    for (v, ev) in rows {
        for (k, z) in ev.iter().enumerate() {
            put(&mut w, path, [fmt_f64(*v), k.to_string(), fmt_f64(z.re), fmt_f64(z.im)])?;
        }
    }
    done(w, path)
}

/// Every fixed point of a meanfield scan with its stability and slowest
/// linear rate.
pub fn write_fixed_points(path: &Path, scan: &BistabilityScan) -> Result<()> {
    let mut w = csv_writer(path)?;
    put(&mut w, path, ["value", "index", "mu_x", "mu_y", "mu_z", "stability", "slowest_rate"])?;
    for g in &scan.points {
        for (i, fp) in g.fixed_points.points.iter().enumerate() {
            let stability = match fp.stability {
                Stability::Stable => "stable",
                Stability::Unstable => "unstable",
                Stability::Marginal => "marginal",
            };
            put(
                &mut w,
                path,
                [
                    fmt_f64(g.value),
                    i.to_string(),
                    fmt_f64(fp.mu.x),
                    fmt_f64(fp.mu.y),
                    fmt_f64(fp.mu.z),
                    stability.to_string(),
                    fmt_f64(fp.slowest_rate()),
                ],
            )?;
        }
    }
    done(w, path)
}

/// Bisected edges of the meanfield bistable intervals.
pub fn write_mf_intervals(path: &Path, scan: &BistabilityScan) -> Result<()> {
    let mut w = csv_writer(path)?;
    put(&mut w, path, ["lower", "upper"])?;
    for &(a, b) in &scan.region.intervals {
        put(&mut w, path, [fmt_f64(a), fmt_f64(b)])?;
    }
    done(w, path)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlotCurve {
    pub name: String,
    pub comments: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl PlotCurve {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = String::new();
        for c in &self.comments {
            text.push_str(&format!("# {c}\n"));
        }
        text.push_str(&format!("# {}\n", self.columns.join(" ")));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
            text.push_str(&cells.join(" "));
            text.push('\n');
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// A figure analogue and the record columns it plots against the swept
/// parameter.
#[derive(Clone, Copy, Debug)]
pub struct FigureSpec {
    pub id: &'static str,
    pub title: &'static str,
    pub columns: &'static [&'static str],
}

pub const FIGURES: &[FigureSpec] = &[
    FigureSpec { id: "fig1a", title: "mu_x steady state vs detuning, MF branches and MFQF in 1D", columns: &["mu_x"] },
    FigureSpec { id: "fig1b", title: "correlation length lambda_xx vs detuning", columns: &["lambda_xx"] },
    FigureSpec { id: "fig1c", title: "total correlation Sigma_xx vs detuning", columns: &["sigma_xx"] },
    FigureSpec { id: "fig2a", title: "bimodality index b_x vs detuning", columns: &["b_x"] },
    FigureSpec { id: "fig2b", title: "bimodality index for increasing lattice size", columns: &["b_x"] },
    FigureSpec { id: "fig3a", title: "mu_x steady-state branches in 2D", columns: &["mu_x"] },
    FigureSpec { id: "fig3b", title: "total correlation Sigma_xx per branch in 2D", columns: &["sigma_xx"] },
    FigureSpec { id: "fig3c", title: "relaxation rate kappa per branch in 2D", columns: &["kappa"] },
    FigureSpec { id: "ising2", title: "Ising mu_x and mu_z vs drive", columns: &["mu_x", "mu_z"] },
    FigureSpec { id: "ising3", title: "Ising mu_x and mu_z vs drive near the bistable edge", columns: &["mu_x", "mu_z"] },
    FigureSpec { id: "ising3corr", title: "Ising lambda_zz and Sigma_zz per branch", columns: &["lambda_zz", "sigma_zz"] },
];

pub fn figure(id: &str) -> Result<&'static FigureSpec> {
    FIGURES.iter().find(|f| f.id == id).ok_or_else(|| {
        let known: Vec<&str> = FIGURES.iter().map(|f| f.id).collect();
        Error::Config(format!("unknown figure '{id}' (known: {})", known.join(", ")))
    })
}

fn column(r: &SteadyStateRecord, name: &str) -> Option<f64> {
    let pair = |s: &str| s.parse::<Pair>().ok().map(|p| p.index());
    match name {
        "mu_x" => Some(r.mu.x),
        "mu_y" => Some(r.mu.y),
        "mu_z" => Some(r.mu.z),
        "kappa" => r.kappa,
        "b_x" => r.b_x,
        n if n.starts_with("lambda_") => r.lambda[pair(&n[7..])?],
        n if n.starts_with("sigma_") => r.sigma[pair(&n[6..])?],
        _ => None,
    }
}

/// Curves of one result set: one per branch when the sweep is bistable
/// somewhere, a single curve otherwise. Unconverged records and cells the
/// tier does not provide are left out.
pub fn curves_for(
    fig: &FigureSpec,
    source: &str,
    records: &[SteadyStateRecord],
) -> Result<Vec<PlotCurve>> {
    let diagram = detect_branches(records)?;
    let branches: Vec<_> = if diagram.intervals.is_empty() {
        diagram.branches.iter().take(1).collect()
    } else {
        diagram.branches.iter().collect()
    };
    let mut out = Vec::new();
    for b in branches {
        let mut recs: Vec<&SteadyStateRecord> = b.records.iter().filter(|r| r.converged).collect();
        recs.sort_by(|a, c| a.value().total_cmp(&c.value()));
        let rows: Vec<Vec<f64>> = recs
            .iter()
            .filter_map(|r| {
                let ys: Option<Vec<f64>> = fig.columns.iter().map(|c| column(r, c)).collect();
                ys.map(|ys| std::iter::once(r.value()).chain(ys).collect())
            })
            .collect();
        let first = b.records.first().expect("branches are nonempty");
        let label = if diagram.intervals.is_empty() { "single".to_string() } else { b.label.clone() };
        let mut columns = vec![diagram.parameter.to_string()];
        columns.extend(fig.columns.iter().map(|c| c.to_string()));
        out.push(PlotCurve {
            name: format!("{}_{}_{}_{}", fig.id, source, first.tier, label),
            comments: vec![
                format!("{}: {}", fig.id, fig.title),
                format!(
                    "tier {} kind {} D {} Z {} branch {}",
                    first.tier, first.params.kind, first.dimension, first.connectivity, label
                ),
            ],
            columns,
            rows,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub source: String,
    pub tier: Tier,
    pub columns: Vec<String>,
    pub rows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotManifest {
    pub figure: String,
    pub title: String,
    pub curves: Vec<ManifestEntry>,
}

/// Plot files for `figure_id` from result directories written by
/// [`crate::sweep::persist_results`]. Each input is validated before any
/// file is written.
pub fn emit_plotdata(figure_id: &str, inputs: &[PathBuf], out: &Path) -> Result<PlotManifest> {
    let fig = figure(figure_id)?;
    if inputs.is_empty() {
        return Err(Error::Config("emit-plotdata needs at least one result directory".into()));
    }
    let mut sets = Vec::new();
    for dir in inputs {
        if !dir.is_dir() {
            return Err(Error::io(
                dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "result directory not found"),
            ));
        }
        let (side, recs) = load_results(dir)?;
        let source = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "results".into());
        sets.push((source, side.plan.tier, recs));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut curves = Vec::new();
    for (source, tier, recs) in &sets {
        for c in curves_for(fig, source, recs)? {
            let file = format!("{}.dat", c.name);
            c.write(&out.join(&file))?;
            curves.push(ManifestEntry {
                file,
                source: source.clone(),
                tier: *tier,
                columns: c.columns.clone(),
                rows: c.rows.len(),
            });
        }
    }
    let manifest = PlotManifest {
        figure: fig.id.to_string(),
        title: fig.title.to_string(),
        curves,
    };
    let path = out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::format(&path, e.to_string()))?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
