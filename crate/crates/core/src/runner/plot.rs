//! Per-panel CSV tables for plotting, built from sweep results.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use super::config::ExperimentKind;
use super::sweep::{fmt_f64, ResultRow};
use crate::codes::squeezing_db;
use crate::error::{Error, Result};
use crate::measure::Scheme;
use crate::telecorrect::EfficiencyModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Recipe {
    /// Infidelity vs n̄, one column per measurement scheme at η = 1.
    Fig5,
    /// Infidelity vs n̄, one column per efficiency, one panel per scheme.
    Fig6,
    /// GKP infidelity vs δ, Fock simulation and twirl model side by side.
    Fig9,
}

impl Recipe {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fig5" => Ok(Recipe::Fig5),
            "fig6" => Ok(Recipe::Fig6),
            "fig9" => Ok(Recipe::Fig9),
            other => Err(Error::Config(format!("unknown recipe {other:?} (expected fig5, fig6 or fig9)"))),
        }
    }
}

/// One output table.
#[derive(Clone, Debug, PartialEq)]
pub struct Panel {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Panel {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|x| fmt_f64(*x)))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let columns = rdr.headers()?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|_| Error::Config(format!("bad number {s:?}"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Ok(Self { name, columns, rows })
    }
}

/// Bit pattern of a float, usable as an ordered map key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct Key(u64);

impl Key {
    fn of(x: f64) -> Self {
        Key(x.to_bits())
    }
}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        f64::from_bits(self.0).total_cmp(&f64::from_bits(other.0))
    }
}

fn label(x: f64) -> String {
    format!("{x}")
}

fn noise_label(r: &ResultRow) -> String {
    format!("kt{}_kpt{}", label(r.kappa_tau), label(r.kappa_phi_tau))
}

/// Break-even infidelity per noise pair.
fn break_even(rows: &[ResultRow]) -> BTreeMap<(Key, Key), f64> {
    rows.iter()
        .filter(|r| r.kind == ExperimentKind::BreakEven && r.is_ok())
        .map(|r| ((Key::of(r.kappa_tau), Key::of(r.kappa_phi_tau)), r.infidelity))
        .collect()
}

/// Collects `x -> column -> value` for one panel, then fills a dense table.
/// Any cell without an `ok` row is reported as missing.
struct Builder {
    name: String,
    x_name: String,
    columns: Vec<String>,
    cells: BTreeMap<Key, BTreeMap<String, f64>>,
    break_even: Option<f64>,
    missing_break_even: bool,
}

impl Builder {
    fn into_panel(self, missing: &mut Vec<String>) -> Panel {
        let mut columns = vec![self.x_name.clone()];
        columns.extend(self.columns.iter().cloned());
        columns.push("break_even".into());
        if self.missing_break_even {
            missing.push(format!("{}: break-even row", self.name));
        }
        let mut rows = Vec::new();
        for (x, cells) in &self.cells {
            let x = f64::from_bits(x.0);
            let mut row = vec![x];
            for c in &self.columns {
                match cells.get(c) {
                    Some(v) => row.push(*v),
                    None => {
                        missing.push(format!("{}: {}={} {c}", self.name, self.x_name, label(x)));
                        row.push(f64::NAN);
                    }
                }
            }
            row.push(self.break_even.unwrap_or(f64::NAN));
            rows.push(row);
        }
        Panel {
            name: self.name,
            columns,
            rows,
        }
    }
}

fn group_panels<F>(rows: &[ResultRow], kinds: &[ExperimentKind], x_name: &str, mut assign: F) -> Result<Vec<Panel>>
where
    F: FnMut(&ResultRow) -> Option<(String, f64, String)>,
{
    let be = break_even(rows);
    let mut builders: BTreeMap<String, Builder> = BTreeMap::new();
    let mut col_sets: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut xs: BTreeMap<String, BTreeSet<Key>> = BTreeMap::new();
    // Grid cells are keyed on every row, ok or not, so failed points show up
    // as missing rather than silently vanishing.
    for r in rows.iter().filter(|r| kinds.contains(&r.kind)) {
        let Some((panel, x, column)) = assign(r) else { continue };
        let b = builders.entry(panel.clone()).or_insert_with(|| {
            let noise = (Key::of(r.kappa_tau), Key::of(r.kappa_phi_tau));
            Builder {
                name: panel.clone(),
                x_name: x_name.to_string(),
                columns: Vec::new(),
                cells: BTreeMap::new(),
                break_even: be.get(&noise).copied(),
                missing_break_even: !be.contains_key(&noise),
            }
        });
        col_sets.entry(panel.clone()).or_default().insert(column.clone());
        xs.entry(panel.clone()).or_default().insert(Key::of(x));
        if r.is_ok() {
            b.cells.entry(Key::of(x)).or_default().insert(column, r.infidelity);
        }
    }
    if builders.is_empty() {
        return Err(Error::MissingPoints("no rows match this recipe".into()));
    }
    let mut missing = Vec::new();
    let mut panels = Vec::new();
    for (name, mut b) in builders {
        b.columns = col_sets.remove(&name).unwrap_or_default().into_iter().collect();
        sort_columns(&mut b.columns);
        for x in xs.remove(&name).unwrap_or_default() {
            b.cells.entry(x).or_default();
        }
        panels.push(b.into_panel(&mut missing));
    }
    if !missing.is_empty() {
        return Err(Error::MissingPoints(missing.join("; ")));
    }
    Ok(panels)
}

/// Scheme columns in the order can, ahd, het; numeric suffixes ascending.
fn sort_columns(cols: &mut [String]) {
    let rank = |c: &str| -> (usize, String, f64) {
        if let Some(i) = Scheme::ALL.iter().position(|s| s.name() == c) {
            return (0, String::new(), i as f64);
        }
        let (prefix, num) = match c.rfind('_') {
            Some(i) => (&c[..i], c[i + 1..].parse::<f64>().unwrap_or(f64::INFINITY)),
            None => (c, f64::INFINITY),
        };
        let group = ["fock_eta", "fock_cc_eta", "twirl_eta", "twirl_cc_eta", "eta"]
            .iter()
            .position(|p| *p == prefix)
            .unwrap_or(9);
        (1 + group, prefix.to_string(), num)
    };
    cols.sort_by(|a, b| {
        let (ra, rb) = (rank(a), rank(b));
        ra.0.cmp(&rb.0).then(ra.1.cmp(&rb.1)).then(ra.2.total_cmp(&rb.2))
    });
}

fn rsb_prefix(r: &ResultRow) -> String {
    format!(
        "{}{}",
        r.family.as_deref().unwrap_or("rsb"),
        r.order.map(|n| n.to_string()).unwrap_or_default()
    )
}

pub fn build_panels(recipe: Recipe, rows: &[ResultRow]) -> Result<Vec<Panel>> {
    match recipe {
        Recipe::Fig5 => group_panels(rows, &[ExperimentKind::Rsb], "nbar", |r| {
            if r.eta != Some(1.0) {
                return None;
            }
            let panel = format!("fig5_{}_{}", rsb_prefix(r), noise_label(r));
            Some((panel, r.nbar?, r.scheme?.name().to_string()))
        }),
        Recipe::Fig6 => group_panels(rows, &[ExperimentKind::Rsb], "nbar", |r| {
            let scheme = r.scheme?.name();
            let panel = format!("fig6_{}_{scheme}_{}", rsb_prefix(r), noise_label(r));
            Some((panel, r.nbar?, format!("eta_{}", label(r.eta?))))
        }),
        Recipe::Fig9 => {
            let panels = group_panels(rows, &[ExperimentKind::Gkp, ExperimentKind::Twirl], "delta", |r| {
                let source = if r.kind == ExperimentKind::Gkp { "fock" } else { "twirl" };
                let cc = match r.efficiency? {
                    EfficiencyModel::Amplified => "",
                    EfficiencyModel::LossWithRescaledBoundaries => "cc_",
                };
                // Twirl rows carry no Lindblad noise; they join the noiseless panel.
                let panel = format!("fig9_{}", noise_label(r));
                Some((panel, r.code_param?, format!("{source}_{cc}eta_{}", label(r.eta?))))
            })?;
            Ok(panels
                .into_iter()
                .map(|mut p| {
                    p.columns.insert(1, "dB".into());
                    for row in &mut p.rows {
                        row.insert(1, squeezing_db(row[0]));
                    }
                    p
                })
                .collect())
        }
    }
}

/// Writes one CSV per panel into `out_dir` and returns the paths.
pub fn emit_plot_data(recipe: Recipe, rows: &[ResultRow], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let panels = build_panels(recipe, rows)?;
    std::fs::create_dir_all(out_dir)?;
    let mut paths = Vec::new();
    for p in &panels {
        let path = out_dir.join(format!("{}.csv", p.name));
        p.write(&path)?;
        paths.push(path);
    }
    Ok(paths)
}
