use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use repheur_core::survey::Regime;

use crate::compute::{Metric, MetricsReport, Summary, UnitMetrics, UnitValue, EMPIRICAL};
use crate::ReportError;

/// A rectangular table of preformatted cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub name: &'static str,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &'static str, header: &[&str]) -> Self {
        Table {
            name,
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "{}", self.name);
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String, ReportError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| ReportError::Csv(e.into_error().into()))?;
        Ok(String::from_utf8(bytes).expect("cells are utf-8"))
    }

    /// Space-padded columns under a dashed rule.
    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for r in &self.rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let mut s = String::new();
            for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
                if i > 0 {
                    s.push_str("  ");
                }
                let _ = write!(s, "{c:<w$}");
            }
            s.trim_end().to_string() + "\n"
        };
        let mut out = line(&self.header);
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        out.push_str(&line(&rule));
        for r in &self.rows {
            out.push_str(&line(r));
        }
        out
    }
}

fn std_cell(v: &UnitValue) -> String {
    v.std.as_ref().map_or("NA:single_topic".into(), Metric::cell)
}

fn summary_cells(s: &Summary) -> [String; 2] {
    [s.mean.cell(), s.std.cell()]
}

/// Units ordered by predictor, dataset, regime, then registry order.
fn sorted_units(report: &MetricsReport) -> Vec<&UnitMetrics> {
    let mut units: Vec<&UnitMetrics> = report.units.iter().collect();
    units.sort_by(|a, b| (&a.predictor, a.dataset, a.regime).cmp(&(&b.predictor, b.dataset, b.regime)));
    units
}

fn unit_prefix(u: &UnitMetrics) -> Vec<String> {
    vec![
        u.predictor.clone(),
        u.dataset.to_string(),
        u.regime.to_string(),
        u.unit.clone(),
    ]
}

/// Distinct items in order of first appearance.
fn unique<T: PartialEq>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out = Vec::new();
    for i in items {
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

pub fn build_tables(report: &MetricsReport) -> Vec<Table> {
    let units = sorted_units(report);
    let na = |r: &str| format!("NA:{r}");

    let mut gamma_summary = Table::new(
        "gamma_summary",
        &["predictor", "dataset", "regime", "gamma_mean", "gamma_std", "units", "undefined"],
    );
    let mut epsilon_summary = Table::new(
        "epsilon_summary",
        &[
            "predictor",
            "dataset",
            "regime",
            "eps_target_mean",
            "eps_target_std",
            "eps_reference_mean",
            "eps_reference_std",
            "units",
            "undefined_target",
            "undefined_reference",
        ],
    );
    for a in &report.aggregates {
        let head = [a.predictor.clone(), a.dataset.to_string(), a.regime.to_string()];
        let mut row = head.to_vec();
        row.extend(summary_cells(&a.gamma));
        row.extend([a.units.to_string(), a.gamma.undefined.to_string()]);
        gamma_summary.push(row);
        let mut row = head.to_vec();
        row.extend(summary_cells(&a.epsilon_target));
        row.extend(summary_cells(&a.epsilon_reference));
        row.extend([
            a.units.to_string(),
            a.epsilon_target.undefined.to_string(),
            a.epsilon_reference.undefined.to_string(),
        ]);
        epsilon_summary.push(row);
    }

    let mut per_topic_gamma = Table::new(
        "per_topic_gamma",
        &["predictor", "dataset", "regime", "unit", "gamma", "gamma_std"],
    );
    let mut per_topic_epsilon = Table::new(
        "per_topic_epsilon",
        &[
            "predictor",
            "dataset",
            "regime",
            "unit",
            "eps_target",
            "eps_target_std",
            "eps_reference",
            "eps_reference_std",
        ],
    );
    let mut response_means = Table::new(
        "response_means",
        &[
            "predictor",
            "dataset",
            "regime",
            "unit",
            "target_mean",
            "target_std",
            "reference_mean",
            "reference_std",
            "target_refusals",
            "reference_refusals",
        ],
    );
    let mut cv_table = Table::new(
        "cv_table",
        &["predictor", "dataset", "regime", "unit", "cv_target", "cv_reference"],
    );
    for u in &units {
        let mut row = unit_prefix(u);
        row.extend([u.gamma.value.cell(), std_cell(&u.gamma)]);
        per_topic_gamma.push(row);

        let mut row = unit_prefix(u);
        row.extend([
            u.epsilon_target.value.cell(),
            std_cell(&u.epsilon_target),
            u.epsilon_reference.value.cell(),
            std_cell(&u.epsilon_reference),
        ]);
        per_topic_epsilon.push(row);

        let mut row = unit_prefix(u);
        row.extend([
            u.target.mean.cell(),
            u.target.std.cell(),
            u.reference.mean.cell(),
            u.reference.std.cell(),
            u.target.refusals.to_string(),
            u.reference.refusals.to_string(),
        ]);
        response_means.push(row);

        let mut row = unit_prefix(u);
        row.extend([u.cv_target.value.cell(), u.cv_reference.value.cell()]);
        cv_table.push(row);
    }
    for e in &report.empirical {
        response_means.push(vec![
            EMPIRICAL.into(),
            e.dataset.to_string(),
            na("not_applicable"),
            e.unit.clone(),
            e.target.mean.cell(),
            e.target.std.cell(),
            e.reference.mean.cell(),
            e.reference.std.cell(),
            na("not_applicable"),
            na("not_applicable"),
        ]);
    }

    // κ: one column per regime
    let mut header = vec!["predictor", "dataset", "unit"];
    header.extend(Regime::ALL.iter().map(|r| r.as_str()));
    let mut kappa_by_regime = Table::new("kappa_by_regime", &header);
    let keys = unique(units.iter().map(|u| (u.predictor.as_str(), u.dataset, u.unit.as_str())));
    for (p, d, unit) in &keys {
        let mut row = vec![p.to_string(), d.to_string(), unit.to_string()];
        for r in Regime::ALL {
            let cell = units
                .iter()
                .find(|u| u.predictor == *p && u.dataset == *d && u.unit == *unit && u.regime == r)
                .map_or(na("not_run"), |u| u.kappa.value.cell());
            row.push(cell);
        }
        kappa_by_regime.push(row);
    }
    for e in &report.empirical {
        let mut row = vec![EMPIRICAL.into(), e.dataset.to_string(), e.unit.clone()];
        row.push(e.kappa.value.cell());
        row.extend((1..Regime::ALL.len()).map(|_| na("empirical_only")));
        kappa_by_regime.push(row);
    }

    let mut header = vec!["predictor".to_string(), "dataset".to_string()];
    for r in Regime::ALL {
        header.push(format!("{}_mean", r.as_str()));
        header.push(format!("{}_std", r.as_str()));
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut kappa_summary = Table::new("kappa_summary", &header);
    let keys = unique(report.aggregates.iter().map(|a| (a.predictor.as_str(), a.dataset)));
    for (p, d) in keys {
        let mut row = vec![p.to_string(), d.to_string()];
        for r in Regime::ALL {
            match report
                .aggregates
                .iter()
                .find(|a| a.predictor == p && a.dataset == d && a.regime == r)
            {
                Some(a) => row.extend(summary_cells(&a.kappa)),
                None => row.extend([na("not_run"), na("not_run")]),
            }
        }
        kappa_summary.push(row);
    }
    for (d, s) in &report.empirical_kappa {
        let mut row = vec![EMPIRICAL.into(), d.to_string()];
        row.extend(summary_cells(s));
        row.extend((2..2 * Regime::ALL.len()).map(|_| na("empirical_only")));
        kappa_summary.push(row);
    }

    vec![
        gamma_summary,
        epsilon_summary,
        per_topic_gamma,
        per_topic_epsilon,
        kappa_by_regime,
        kappa_summary,
        response_means,
        cv_table,
    ]
}

/// Writes every table as `<name>.csv` and `<name>.txt` into `out_dir`.
pub fn emit_tables(report: &MetricsReport, out_dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    if report.is_empty() {
        log::warn!("report is empty; writing header-only tables");
    }
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |e| ReportError::Io { path, source: e }
    };
    std::fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let mut written = Vec::new();
    for t in build_tables(report) {
        let csv_path = out_dir.join(format!("{}.csv", t.name));
        std::fs::write(&csv_path, t.to_csv()?).map_err(io(&csv_path))?;
        let txt_path = out_dir.join(format!("{}.txt", t.name));
        std::fs::write(&txt_path, t.to_text()).map_err(io(&txt_path))?;
        written.extend([csv_path, txt_path]);
    }
    Ok(written)
}
