//! Cartesian parameter sweeps with a deterministic, resumable CSV output.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cache::Cache;
use super::config::{ExperimentKind, RsbFamily, SweepConfig};
use crate::codes::{
    bin_codewords, cat_alpha_for_nbar, cat_codewords_minimal, gkp_codewords, gkp_required_dim,
    mean_photon_number, GkpSpec, RotationCodeSpec, CUTOFF_TOL,
};
use crate::error::{Error, Result};
use crate::fock::TruncatedSpace;
use crate::measure::{PhaseGrid, Scheme, AHD_SERIES_TOL};
use crate::noise::{LindbladParams, INTEGRATOR_TOL};
use crate::telecorrect::{
    break_even_channel, gkp_fidelity, rsb_fidelity, EfficiencyModel, FidelityReport, GkpCircuitConfig,
    RsbCircuitConfig, CPTP_TOL, GKP_SERIES_TOL,
};
use crate::twirl::{twirl_fidelity, TwirlParams};

pub const CSV_HEADER: [&str; 18] = [
    "kind",
    "family",
    "order",
    "nbar",
    "code_param",
    "scheme",
    "eta",
    "efficiency",
    "kappa_tau",
    "kappa_phi_tau",
    "dim",
    "bins",
    "entanglement_fidelity",
    "avg_gate_fidelity",
    "infidelity",
    "break_even_infidelity",
    "trace_defect",
    "status",
];

/// One grid point to evaluate.
#[derive(Clone, Debug, PartialEq)]
pub enum Point {
    BreakEven {
        noise: LindbladParams,
    },
    Rsb {
        family: RsbFamily,
        order: usize,
        nbar: f64,
        scheme: Scheme,
        eta: f64,
        ancilla_alpha: f64,
        noise: LindbladParams,
    },
    Gkp {
        delta: f64,
        eta: f64,
        model: EfficiencyModel,
        noise: LindbladParams,
    },
    Twirl {
        delta: f64,
        eta: f64,
        model: EfficiencyModel,
    },
}

/// One line of the results table. Unused fields are empty in the CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub kind: ExperimentKind,
    pub family: Option<String>,
    pub order: Option<usize>,
    /// Requested mean photon number for rotation codes, actual for GKP.
    pub nbar: Option<f64>,
    /// Binomial `K`, cat `α` or GKP `δ`.
    pub code_param: Option<f64>,
    pub scheme: Option<Scheme>,
    pub eta: Option<f64>,
    pub efficiency: Option<EfficiencyModel>,
    pub kappa_tau: f64,
    pub kappa_phi_tau: f64,
    pub dim: Option<usize>,
    pub bins: Option<usize>,
    pub entanglement_fidelity: f64,
    pub avg_gate_fidelity: f64,
    pub infidelity: f64,
    pub break_even_infidelity: f64,
    pub trace_defect: f64,
    pub status: String,
}

/// 17 significant digits, enough for an exact round trip.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x:.16e}")
    }
}

fn opt<T>(v: &Option<T>, f: impl Fn(&T) -> String) -> String {
    v.as_ref().map(f).unwrap_or_default()
}

fn parse_opt<T>(s: &str, f: impl Fn(&str) -> Result<T>) -> Result<Option<T>> {
    if s.is_empty() {
        Ok(None)
    } else {
        f(s).map(Some)
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Config(format!("bad number {s:?} in results")))
}

fn parse_usize(s: &str) -> Result<usize> {
    s.parse().map_err(|_| Error::Config(format!("bad integer {s:?} in results")))
}

fn parse_model(s: &str) -> Result<EfficiencyModel> {
    match s {
        "amplified" => Ok(EfficiencyModel::Amplified),
        "loss-with-rescaled-boundaries" => Ok(EfficiencyModel::LossWithRescaledBoundaries),
        other => Err(Error::Config(format!("unknown efficiency model {other:?}"))),
    }
}

impl ResultRow {
    fn empty(kind: ExperimentKind, noise: LindbladParams) -> Self {
        Self {
            kind,
            family: None,
            order: None,
            nbar: None,
            code_param: None,
            scheme: None,
            eta: None,
            efficiency: None,
            kappa_tau: noise.kappa_tau,
            kappa_phi_tau: noise.kappa_phi_tau,
            dim: None,
            bins: None,
            entanglement_fidelity: f64::NAN,
            avg_gate_fidelity: f64::NAN,
            infidelity: f64::NAN,
            break_even_infidelity: f64::NAN,
            trace_defect: f64::NAN,
            status: String::new(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    fn fill(&mut self, r: &FidelityReport) {
        self.entanglement_fidelity = r.entanglement_fidelity();
        self.avg_gate_fidelity = r.avg_gate_fidelity();
        self.infidelity = r.infidelity();
        self.break_even_infidelity = r.break_even_infidelity();
        self.trace_defect = r.trace_defect();
        self.status = "ok".into();
    }

    /// Identity of the grid point, built from the requested parameters only
    /// (the binomial `K`, cat `α` and GKP `n̄` are derived).
    pub fn key(&self) -> String {
        let mut rec = self.to_record();
        rec.truncate(10);
        match self.kind {
            ExperimentKind::Rsb => rec[4].clear(),
            ExperimentKind::Gkp | ExperimentKind::Twirl => rec[3].clear(),
            ExperimentKind::BreakEven => {}
        }
        rec.join("|")
    }

    pub fn to_record(&self) -> Vec<String> {
        vec![
            self.kind.name().to_string(),
            opt(&self.family, |s| s.clone()),
            opt(&self.order, |n| n.to_string()),
            opt(&self.nbar, |x| fmt_f64(*x)),
            opt(&self.code_param, |x| fmt_f64(*x)),
            opt(&self.scheme, |s| s.name().to_string()),
            opt(&self.eta, |x| fmt_f64(*x)),
            opt(&self.efficiency, |m| m.name().to_string()),
            fmt_f64(self.kappa_tau),
            fmt_f64(self.kappa_phi_tau),
            opt(&self.dim, |n| n.to_string()),
            opt(&self.bins, |n| n.to_string()),
            fmt_f64(self.entanglement_fidelity),
            fmt_f64(self.avg_gate_fidelity),
            fmt_f64(self.infidelity),
            fmt_f64(self.break_even_infidelity),
            fmt_f64(self.trace_defect),
            self.status.clone(),
        ]
    }

    pub fn from_record(r: &csv::StringRecord) -> Result<Self> {
        if r.len() != CSV_HEADER.len() {
            return Err(Error::Config(format!("results row has {} fields, expected {}", r.len(), CSV_HEADER.len())));
        }
        Ok(Self {
            kind: ExperimentKind::parse(&r[0])?,
            family: parse_opt(&r[1], |s| Ok(s.to_string()))?,
            order: parse_opt(&r[2], parse_usize)?,
            nbar: parse_opt(&r[3], parse_f64)?,
            code_param: parse_opt(&r[4], parse_f64)?,
            scheme: parse_opt(&r[5], |s| s.parse::<Scheme>())?,
            eta: parse_opt(&r[6], parse_f64)?,
            efficiency: parse_opt(&r[7], parse_model)?,
            kappa_tau: parse_f64(&r[8])?,
            kappa_phi_tau: parse_f64(&r[9])?,
            dim: parse_opt(&r[10], parse_usize)?,
            bins: parse_opt(&r[11], parse_usize)?,
            entanglement_fidelity: parse_f64(&r[12])?,
            avg_gate_fidelity: parse_f64(&r[13])?,
            infidelity: parse_f64(&r[14])?,
            break_even_infidelity: parse_f64(&r[15])?,
            trace_defect: parse_f64(&r[16])?,
            status: r[17].to_string(),
        })
    }
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Config(format!("{} is not a results table", path.display())));
    }
    rdr.records().map(|r| ResultRow::from_record(&r?)).collect()
}

/// Grid points in output order: for each noise pair, the break-even point
/// first, then the experiment grid.
pub fn points(cfg: &SweepConfig) -> Result<Vec<Point>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for noise in cfg.noise.pairs()? {
        out.push(Point::BreakEven { noise });
        match cfg.kind {
            ExperimentKind::BreakEven => {}
            ExperimentKind::Rsb => {
                let g = cfg.rsb.as_ref().expect("validated");
                for &nbar in &g.nbar {
                    for &scheme in &g.schemes {
                        for &eta in &g.eta {
                            out.push(Point::Rsb {
                                family: g.family,
                                order: g.order,
                                nbar,
                                scheme,
                                eta,
                                ancilla_alpha: g.ancilla_alpha,
                                noise,
                            });
                        }
                    }
                }
            }
            ExperimentKind::Gkp | ExperimentKind::Twirl => {
                let g = cfg.gkp.as_ref().expect("validated");
                for &delta in &g.delta {
                    for &eta in &g.eta {
                        for &model in &g.efficiency_model {
                            out.push(if cfg.kind == ExperimentKind::Gkp {
                                Point::Gkp {
                                    delta,
                                    eta,
                                    model,
                                    noise,
                                }
                            } else {
                                Point::Twirl { delta, eta, model }
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

fn skeleton(p: &Point) -> ResultRow {
    match *p {
        Point::BreakEven { noise } => ResultRow::empty(ExperimentKind::BreakEven, noise),
        Point::Rsb {
            family,
            order,
            nbar,
            scheme,
            eta,
            noise,
            ..
        } => ResultRow {
            family: Some(family.name().into()),
            order: Some(order),
            nbar: Some(nbar),
            scheme: Some(scheme),
            eta: Some(eta),
            ..ResultRow::empty(ExperimentKind::Rsb, noise)
        },
        Point::Gkp {
            delta,
            eta,
            model,
            noise,
        } => ResultRow {
            family: Some("gkp".into()),
            code_param: Some(delta),
            eta: Some(eta),
            efficiency: Some(model),
            ..ResultRow::empty(ExperimentKind::Gkp, noise)
        },
        Point::Twirl { delta, eta, model } => ResultRow {
            family: Some("gkp".into()),
            code_param: Some(delta),
            eta: Some(eta),
            efficiency: Some(model),
            ..ResultRow::empty(ExperimentKind::Twirl, LindbladParams::noiseless())
        },
    }
}

fn check_dim(dim: usize, cfg: &SweepConfig) -> Result<()> {
    if dim > cfg.numerics.max_dim {
        return Err(Error::CutoffInadequate {
            dim: cfg.numerics.max_dim,
            required: dim,
            weight: f64::NAN,
        });
    }
    Ok(())
}

fn evaluate_into(p: &Point, cfg: &SweepConfig, cache: &Cache, row: &mut ResultRow) -> Result<()> {
    match *p {
        Point::BreakEven { noise } => row.fill(&break_even_channel(noise)?),
        Point::Rsb {
            family,
            order,
            nbar,
            scheme,
            eta,
            ancilla_alpha,
            noise,
        } => {
            let data = match family {
                RsbFamily::Bin => {
                    let k = (2.0 * nbar / order as f64).round() as usize;
                    row.code_param = Some(k as f64);
                    let dim = cfg.numerics.dim.unwrap_or(k * order + 1);
                    check_dim(dim, cfg)?;
                    cache.codewords(&format!("bin/{order}/{k}/{dim}"), || {
                        bin_codewords(&RotationCodeSpec::bin(order, k, TruncatedSpace::new(dim)?)?)
                    })?
                }
                RsbFamily::Cat => {
                    let alpha = cat_alpha_for_nbar(order, nbar)?;
                    row.code_param = Some(alpha);
                    let key = format!("cat/{order}/{}/{:?}", fmt_f64(alpha), cfg.numerics.dim);
                    cache.codewords(&key, || match cfg.numerics.dim {
                        Some(dim) => crate::codes::cat_codewords(&RotationCodeSpec::cat(
                            order,
                            alpha,
                            TruncatedSpace::new(dim)?,
                        )?),
                        None => cat_codewords_minimal(order, alpha),
                    })?
                }
            };
            let dim = data.space().dim();
            row.dim = Some(dim);
            check_dim(dim, cfg)?;
            let ancilla = cache.codewords(&format!("cat/1/{}/min", fmt_f64(ancilla_alpha)), || {
                cat_codewords_minimal(1, ancilla_alpha)
            })?;
            let bins = cfg.numerics.bins;
            row.bins = Some(bins);
            let circuit = RsbCircuitConfig {
                data_h: (*cache.h_matrix(scheme, dim)?).clone(),
                ancilla_h: (*cache.h_matrix(Scheme::Can, ancilla.space().dim())?).clone(),
                data: (*data).clone(),
                ancilla: (*ancilla).clone(),
                data_eta: eta,
                noise,
                grid: PhaseGrid::new(bins)?,
            };
            row.fill(&rsb_fidelity(&circuit)?);
        }
        Point::Gkp {
            delta,
            eta,
            model,
            noise,
        } => {
            let dim = cfg.numerics.dim.unwrap_or_else(|| gkp_required_dim(delta));
            row.dim = Some(dim);
            check_dim(dim, cfg)?;
            let spec = GkpSpec::new(delta, TruncatedSpace::new(dim)?)?;
            row.nbar = Some(mean_photon_number(&gkp_codewords(&spec)?));
            row.fill(&gkp_fidelity(&GkpCircuitConfig {
                data: spec,
                ancilla: spec,
                eta,
                efficiency_model: model,
                noise,
            })?);
        }
        Point::Twirl { delta, eta, model } => {
            let cc = model == EfficiencyModel::LossWithRescaledBoundaries;
            row.fill(&twirl_fidelity(&TwirlParams::new(delta, delta, eta)?, cc)?);
        }
    }
    Ok(())
}

/// Evaluates one point. Failures end up in the row's status.
pub fn evaluate(p: &Point, cfg: &SweepConfig, cache: &Cache) -> ResultRow {
    let mut row = skeleton(p);
    if let Err(e) = evaluate_into(p, cfg, cache, &mut row) {
        log::warn!("point {} failed: {e}", row.key());
        let mut failed = skeleton(p);
        failed.dim = row.dim;
        failed.bins = row.bins;
        failed.code_param = row.code_param.or(failed.code_param);
        failed.status = format!("error: {e}");
        row = failed;
    }
    row
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct Tolerances {
    pub cptp: f64,
    pub gkp_series: f64,
    pub ahd_series: f64,
    pub integrator: f64,
    pub cutoff: f64,
}

impl Tolerances {
    pub fn current() -> Self {
        Self {
            cptp: CPTP_TOL,
            gkp_series: GKP_SERIES_TOL,
            ahd_series: AHD_SERIES_TOL,
            integrator: INTEGRATOR_TOL,
            cutoff: CUTOFF_TOL,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SweepMeta {
    pub config_hash: String,
    pub version: String,
    pub tolerances: Tolerances,
    pub config: SweepConfig,
    pub points: usize,
    /// `None` while the sweep is still running.
    pub failed: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepSummary {
    pub points: usize,
    pub computed: usize,
    pub reused: usize,
    pub failed: usize,
}

pub fn meta_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn timing_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".timing.json");
    PathBuf::from(s)
}

/// Rows of a previous run of the same configuration, by key.
fn previous_rows(out: &Path, hash: &str) -> HashMap<String, ResultRow> {
    let Ok(text) = std::fs::read_to_string(meta_path(out)) else {
        return HashMap::new();
    };
    let Ok(meta) = serde_json::from_str::<SweepMeta>(&text) else {
        return HashMap::new();
    };
    if meta.config_hash != hash || meta.version != env!("CARGO_PKG_VERSION") || meta.tolerances != Tolerances::current() {
        return HashMap::new();
    }
    match read_results(out) {
        Ok(rows) => rows.into_iter().filter(|r| r.is_ok()).map(|r| (r.key(), r)).collect(),
        Err(e) => {
            log::warn!("cannot reuse {}: {e}", out.display());
            HashMap::new()
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TimingEntry {
    key: String,
    wall_time_s: Option<f64>,
}

fn previous_timings(out: &Path) -> HashMap<String, f64> {
    std::fs::read_to_string(timing_path(out))
        .ok()
        .and_then(|t| serde_json::from_str::<Vec<TimingEntry>>(&t).ok())
        .unwrap_or_default()
        .into_iter()
        .filter_map(|e| Some((e.key, e.wall_time_s?)))
        .collect()
}

fn write_csv_line(w: &mut impl Write, fields: &[String]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    wtr.write_record(fields)?;
    let bytes = wtr.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    w.write_all(&bytes)?;
    Ok(())
}

/// Runs the sweep on the current rayon pool and writes `out` plus its
/// `.meta.json` and `.timing.json` sidecars.
///
/// Rows are written in grid order as soon as all earlier rows are done.
/// Points already present with status `ok` in a previous output of the same
/// configuration are copied instead of recomputed.
pub fn run_sweep(cfg: &SweepConfig, out: &Path, cache: &Cache) -> Result<SweepSummary> {
    let pts = points(cfg)?;
    let hash = cfg.hash();
    let previous = previous_rows(out, &hash);
    let previous_times = if previous.is_empty() { HashMap::new() } else { previous_timings(out) };
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut stored = cfg.clone();
    stored.output = None;
    let mut meta = SweepMeta {
        config_hash: hash,
        version: env!("CARGO_PKG_VERSION").to_string(),
        tolerances: Tolerances::current(),
        config: stored,
        points: pts.len(),
        failed: None,
    };
    // Written first so that an interrupted run can be resumed.
    std::fs::write(meta_path(out), serde_json::to_string_pretty(&meta)? + "\n")?;
    let file = std::fs::File::create(out)?;
    let mut writer = std::io::BufWriter::new(file);
    write_csv_line(&mut writer, &CSV_HEADER.map(String::from))?;
    writer.flush()?;

    let (tx, rx) = mpsc::channel::<(usize, ResultRow, Option<f64>)>();
    let total = pts.len();
    let (rows, timings) = std::thread::scope(|s| -> Result<(Vec<ResultRow>, Vec<Option<f64>>)> {
        let sink = s.spawn(move || -> Result<(Vec<ResultRow>, Vec<Option<f64>>)> {
            let mut pending = BTreeMap::new();
            let mut next = 0;
            let mut rows = Vec::with_capacity(total);
            let mut times = Vec::with_capacity(total);
            for (i, row, t) in rx {
                pending.insert(i, (row, t));
                while let Some((row, t)) = pending.remove(&next) {
                    write_csv_line(&mut writer, &row.to_record())?;
                    writer.flush()?;
                    rows.push(row);
                    times.push(t);
                    next += 1;
                }
            }
            Ok((rows, times))
        });
        pts.par_iter().enumerate().for_each_with(tx, |tx, (i, p)| {
            let key = skeleton(p).key();
            let msg = match previous.get(&key) {
                Some(row) => (i, row.clone(), None),
                None => {
                    let start = Instant::now();
                    let row = evaluate(p, cfg, cache);
                    log::info!("{key}: {}", row.status);
                    (i, row, Some(start.elapsed().as_secs_f64()))
                }
            };
            // The sink only stops early on an I/O error, reported below.
            let _ = tx.send(msg);
        });
        sink.join().expect("writer thread panicked")
    })?;
    if rows.len() != total {
        return Err(Error::Config("sweep output incomplete".into()));
    }

    let failed = rows.iter().filter(|r| !r.is_ok()).count();
    let reused = timings.iter().filter(|t| t.is_none()).count();
    meta.failed = Some(failed);
    std::fs::write(meta_path(out), serde_json::to_string_pretty(&meta)? + "\n")?;
    // Reused rows keep the time measured when they were computed.
    let timing: Vec<_> = rows
        .iter()
        .zip(&timings)
        .map(|(r, t)| {
            let key = r.key();
            let wall_time_s = t.or_else(|| previous_times.get(&key).copied());
            TimingEntry { key, wall_time_s }
        })
        .collect();
    std::fs::write(timing_path(out), serde_json::to_string_pretty(&timing)? + "\n")?;
    Ok(SweepSummary {
        points: total,
        computed: total - reused,
        reused,
        failed,
    })
}

/// [`run_sweep`] on a dedicated pool of `threads` workers.
pub fn run_sweep_with_threads(cfg: &SweepConfig, out: &Path, cache: &Cache, threads: Option<usize>) -> Result<SweepSummary> {
    match threads {
        None => run_sweep(cfg, out, cache),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            pool.install(|| run_sweep(cfg, out, cache))
        }
    }
}
