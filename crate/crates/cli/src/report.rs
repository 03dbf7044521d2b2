//! `report`: merge every summary CSV under a directory into per-experiment
//! tables and power-law fits.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use fredholm::metrics::{fit_rate, read_summary_csv, SummaryRow};

/// Sweep keys whose values are a scale worth fitting a rate against.
const RATE_KEYS: [&str; 2] = ["n_particles", "step"];

/// Summary files written by `solve` and `baseline`.
fn is_summary(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "csv")
        && path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.contains("summary"))
}

fn collect(dir: &Path, skip: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.path());
    for entry in entries {
        let path = entry.path();
        if path == skip {
            continue;
        }
        if entry.file_type()?.is_dir() {
            collect(&path, skip, out)?;
        } else if is_summary(&path) {
            out.push(path);
        }
    }
    Ok(())
}

/// Splits `base/key=value` into the base label and the sweep coordinate.
pub fn split_label(label: &str) -> (&str, Option<(&str, f64)>) {
    match label.split_once('/') {
        Some((base, rest)) => {
            let coord = rest
                .split_once('=')
                .and_then(|(k, v)| v.parse().ok().map(|v| (k, v)));
            (base, coord)
        }
        None => (label, None),
    }
}

#[derive(Debug, Default, Clone)]
pub struct Cell {
    pub values: Vec<f64>,
}

impl Cell {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Sample standard deviation; zero for a single value.
    pub fn sd(&self) -> f64 {
        let n = self.values.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        (self.values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    }
}

/// Key: experiment label, N, γ, α, metric. Float keys are kept as their
/// written text so grouping is exact.
type GroupKey = (String, usize, String, String, String);

pub fn aggregate(rows: &[SummaryRow]) -> BTreeMap<GroupKey, Cell> {
    let mut groups: BTreeMap<GroupKey, Cell> = BTreeMap::new();
    for r in rows {
        groups
            .entry((
                r.experiment.clone(),
                r.n_particles,
                r.gamma.to_string(),
                r.alpha.to_string(),
                r.metric.clone(),
            ))
            .or_default()
            .values
            .push(r.value);
    }
    groups
}

fn create(path: &Path) -> anyhow::Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

pub fn report(dir: &Path, out: &Path) -> anyhow::Result<()> {
    if !dir.is_dir() {
        bail!("{} is not a directory", dir.display());
    }
    let mut files = Vec::new();
    collect(dir, out, &mut files).with_context(|| format!("scanning {}", dir.display()))?;

    let mut rows = Vec::new();
    for path in &files {
        match File::open(path).map_err(anyhow::Error::from).and_then(|f| Ok(read_summary_csv(f)?)) {
            Ok(r) => rows.extend(r),
            Err(e) => eprintln!("skipping {}: {e}", path.display()),
        }
    }
    if rows.is_empty() {
        bail!("nothing to aggregate: no readable summary CSV under {}", dir.display());
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let groups = aggregate(&rows);

    let mut table = create(&out.join("table.csv"))?;
    table.write_record(["experiment", "N", "gamma", "alpha", "metric_name", "mean", "sd", "count"])?;
    for ((exp, n, gamma, alpha, metric), cell) in &groups {
        table.write_record([
            exp.clone(),
            n.to_string(),
            gamma.clone(),
            alpha.clone(),
            metric.clone(),
            cell.mean().to_string(),
            cell.sd().to_string(),
            cell.values.len().to_string(),
        ])?;
    }
    table.flush()?;

    // Plot-ready view: one file per base experiment, sweep value on the x axis.
    let mut by_base: BTreeMap<&str, Vec<(String, f64, &str, &Cell)>> = BTreeMap::new();
    for ((exp, _, _, _, metric), cell) in &groups {
        let (base, coord) = split_label(exp);
        let (key, value) = coord.map_or((String::new(), f64::NAN), |(k, v)| (k.to_string(), v));
        by_base.entry(base).or_default().push((key, value, metric, cell));
    }
    let stdout = std::io::stdout();
    let mut console = stdout.lock();
    for (base, entries) in &by_base {
        let file = format!("{}.csv", base.replace(['/', '\\'], "_"));
        let mut w = create(&out.join(file))?;
        w.write_record(["sweep_key", "sweep_value", "metric_name", "mean", "sd", "count"])?;
        let mut sorted = entries.clone();
        sorted.sort_by(|a, b| a.2.cmp(b.2).then(a.1.total_cmp(&b.1)));
        writeln!(console, "{base}")?;
        for (key, value, metric, cell) in &sorted {
            let value_text = if value.is_nan() { String::new() } else { value.to_string() };
            w.write_record([
                key.clone(),
                value_text.clone(),
                metric.to_string(),
                cell.mean().to_string(),
                cell.sd().to_string(),
                cell.values.len().to_string(),
            ])?;
            let at = if key.is_empty() { String::new() } else { format!("{key}={value_text} ") };
            writeln!(
                console,
                "  {at}{metric}: {:.6e} ± {:.2e} (n={})",
                cell.mean(),
                cell.sd(),
                cell.values.len()
            )?;
        }
        w.flush()?;
    }

    // Rates of √MSE(mean) and W1 against N or γ for rate sweeps.
    let mut rates = create(&out.join("rates.csv"))?;
    rates.write_record(["experiment", "sweep_key", "metric_name", "slope", "intercept", "r2", "points"])?;
    for (base, entries) in &by_base {
        for metric in ["sq_err_mean", "w1"] {
            let mut points: Vec<(String, f64, f64)> = entries
                .iter()
                .filter(|e| e.2 == metric && RATE_KEYS.contains(&e.0.as_str()))
                .map(|e| {
                    let err = if metric == "sq_err_mean" { e.3.mean().sqrt() } else { e.3.mean() };
                    (e.0.clone(), e.1, err)
                })
                .collect();
            points.sort_by(|a, b| a.1.total_cmp(&b.1));
            let Some(key) = points.first().map(|p| p.0.clone()) else {
                continue;
            };
            let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.1, p.2)).collect();
            let name = if metric == "sq_err_mean" { "rmse_mean" } else { metric };
            match fit_rate(&xy) {
                Ok(fit) => {
                    rates.write_record([
                        base.to_string(),
                        key.clone(),
                        name.to_string(),
                        fit.slope.to_string(),
                        fit.intercept.to_string(),
                        fit.r2.to_string(),
                        xy.len().to_string(),
                    ])?;
                    writeln!(console, "{base}: {name} ~ {key}^{:.3} (r2 {:.3})", fit.slope, fit.r2)?;
                }
                Err(e) => eprintln!("{base}: no {name} rate fit: {e}"),
            }
        }
    }
    rates.flush()?;
    writeln!(console, "report written to {}", out.display())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_split_into_base_and_coordinate() {
        assert_eq!(split_label("toy"), ("toy", None));
        assert_eq!(
            split_label("rate-N/n_particles=200"),
            ("rate-N", Some(("n_particles", 200.0)))
        );
        assert_eq!(split_label("kl-expansion/nystrom"), ("kl-expansion", None));
    }

    #[test]
    fn cells_average_over_seeds() {
        let row = |seed, value| SummaryRow {
            experiment: "toy".into(),
            seed,
            n_particles: 100,
            gamma: 0.01,
            alpha: 0.01,
            metric: "ise".into(),
            value,
        };
        let g = aggregate(&[row(0, 1.0), row(1, 3.0)]);
        let cell = g.values().next().unwrap();
        assert_eq!(cell.mean(), 2.0);
        assert!((cell.sd() - 2f64.sqrt()).abs() < 1e-15);
    }
}
