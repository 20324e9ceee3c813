//! Correlation between bias sources and fairness gaps, and before/after
//! delta tables with arrow markers.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{DatasetBiasReport, FairnessReport};

/// Below this many samples a correlation is flagged as small-sample.
pub const SMALL_SAMPLE: usize = 10;

/// Sample Pearson correlation, accumulated in one pass with running
/// co-moments.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch(format!(
            "pearson inputs have lengths {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::EmptyInput("pearson needs at least two samples".into()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::InvalidValue("pearson inputs must be finite".into()));
    }
    let (mut mx, mut my) = (0.0, 0.0);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (i, (&x, &y)) in xs.iter().zip(ys).enumerate() {
        let n = (i + 1) as f64;
        let dx = x - mx;
        let dy = y - my;
        mx += dx / n;
        my += dy / n;
        sxx += dx * (x - mx);
        syy += dy * (y - my);
        sxy += dx * (y - my);
    }
    if sxx <= 0.0 {
        return Err(Error::ZeroVariance("first argument is constant".into()));
    }
    if syy <= 0.0 {
        return Err(Error::ZeroVariance("second argument is constant".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiasSource {
    Selection,
    Overamplification,
    /// Representation-bias scores measured outside the toolkit.
    External,
}

impl BiasSource {
    pub fn name(self) -> &'static str {
        match self {
            BiasSource::Selection => "selection",
            BiasSource::Overamplification => "overamplification",
            BiasSource::External => "external",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "selection" => Ok(BiasSource::Selection),
            "overamplification" => Ok(BiasSource::Overamplification),
            "external" => Ok(BiasSource::External),
            other => Err(Error::InvalidArgument(format!("unknown bias source `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub row_names: Vec<String>,
    pub col_names: Vec<String>,
    pub values: Vec<Vec<f64>>,
    /// Attributes correlated over, in order.
    pub attributes: Vec<String>,
    pub n: usize,
    pub small_sample: bool,
}

/// Pearson correlation across attributes between each bias source and each
/// fairness gap.
pub fn correlate_bias_fairness(
    bias: &[DatasetBiasReport],
    fairness: &[FairnessReport],
    sources: &[BiasSource],
    external: Option<&BTreeMap<String, f64>>,
) -> Result<CorrelationMatrix> {
    if fairness.len() < 2 {
        return Err(Error::EmptyInput("correlation needs at least two attributes".into()));
    }
    if bias.len() != fairness.len() {
        return Err(Error::LengthMismatch(format!(
            "{} bias reports for {} fairness reports",
            bias.len(),
            fairness.len()
        )));
    }
    let attributes: Vec<String> = fairness.iter().map(|f| f.attribute.clone()).collect();
    let bias_for = |attr: &str| {
        bias.iter()
            .find(|b| b.attribute == attr)
            .ok_or_else(|| Error::UnknownAttribute(attr.to_string()))
    };

    let mut rows = Vec::with_capacity(sources.len());
    for &source in sources {
        let mut xs = Vec::with_capacity(attributes.len());
        for attr in &attributes {
            let v = match source {
                BiasSource::Selection => bias_for(attr)?.selection.ok_or_else(|| Error::EmptyGroup {
                    attribute: attr.clone(),
                    group: "selection bias undefined".into(),
                })?,
                BiasSource::Overamplification => bias_for(attr)?.overamplification_norm,
                BiasSource::External => *external
                    .ok_or_else(|| Error::InvalidArgument("external source requested without scores".into()))?
                    .get(attr)
                    .ok_or_else(|| Error::UnknownAttribute(attr.clone()))?,
            };
            xs.push(v);
        }
        rows.push(xs);
    }
    type Column = (&'static str, fn(&FairnessReport) -> f64);
    let cols: [Column; 3] = [
        ("fpr_gap", |f| f.fpr_gap),
        ("tpr_gap", |f| f.tpr_gap),
        ("auc_gap", |f| f.auc_gap),
    ];
    let mut values = Vec::with_capacity(rows.len());
    for (xs, source) in rows.iter().zip(sources) {
        let mut row = Vec::with_capacity(cols.len());
        for (name, get) in &cols {
            let ys: Vec<f64> = fairness.iter().map(get).collect();
            let r = pearson(xs, &ys).map_err(|e| match e {
                Error::ZeroVariance(_) => Error::ZeroVariance(format!(
                    "{} vs {name} over {} attributes",
                    source.name(),
                    attributes.len()
                )),
                other => other,
            })?;
            row.push(r);
        }
        values.push(row);
    }
    let n = attributes.len();
    Ok(CorrelationMatrix {
        row_names: sources.iter().map(|s| s.name().to_string()).collect(),
        col_names: cols.iter().map(|(n, _)| n.to_string()).collect(),
        values,
        attributes,
        n,
        small_sample: n < SMALL_SAMPLE,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "AUC")]
    Auc,
    #[serde(rename = "FPR_gap")]
    FprGap,
    #[serde(rename = "TPR_gap")]
    TprGap,
    #[serde(rename = "AUC_gap")]
    AucGap,
    #[serde(rename = "SenseScore")]
    SenseScore,
}

impl Metric {
    /// Gaps and SenseScore are fairer when smaller; AUC is better when larger.
    pub fn lower_is_better(self) -> bool {
        !matches!(self, Metric::Auc)
    }

    pub fn label(self) -> &'static str {
        match self {
            Metric::Auc => "AUC",
            Metric::FprGap => "FPR_gap",
            Metric::TprGap => "TPR_gap",
            Metric::AucGap => "AUC_gap",
            Metric::SenseScore => "SenseScore",
        }
    }

    fn of(self, r: &FairnessReport) -> f64 {
        match self {
            Metric::Auc => r.auc_overall,
            Metric::FprGap => r.fpr_gap,
            Metric::TprGap => r.tpr_gap,
            Metric::AucGap => r.auc_gap,
            Metric::SenseScore => f64::NAN,
        }
    }
}

/// Column order of the delta tables.
pub const TABLE_METRICS: [Metric; 4] = [Metric::Auc, Metric::FprGap, Metric::TprGap, Metric::AucGap];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Improved,
    Worsened,
    Unchanged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub metric: Metric,
    pub baseline: f64,
    pub treated: f64,
    pub direction: Direction,
    pub rendered: String,
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// Three decimals without trailing zeros: 0.090 -> "0.09", 0 -> "0".
pub fn format_score(v: f64) -> String {
    let s = format!("{:.3}", round3(v));
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

/// Compares one metric; the rendering is the treated value behind an arrow
/// giving the direction the score moved (no arrow when unchanged at three
/// decimals).
pub fn delta(metric: Metric, baseline: f64, treated: f64) -> DeltaReport {
    let (direction, rendered) = if round3(treated) == round3(baseline) {
        (Direction::Unchanged, format_score(treated))
    } else {
        let rose = treated > baseline;
        let arrow = if rose { '↑' } else { '↓' };
        let better = rose != metric.lower_is_better();
        (
            if better {
                Direction::Improved
            } else {
                Direction::Worsened
            },
            format!("{arrow}{}", format_score(treated)),
        )
    };
    DeltaReport {
        metric,
        baseline,
        treated,
        direction,
        rendered,
    }
}

/// AUC, FPR_gap, TPR_gap and AUC_gap deltas of `treated` against `baseline`.
pub fn delta_report(baseline: &FairnessReport, treated: &FairnessReport) -> Result<Vec<DeltaReport>> {
    if baseline.attribute != treated.attribute {
        return Err(Error::InvalidArgument(format!(
            "cannot compare attribute `{}` with `{}`",
            baseline.attribute, treated.attribute
        )));
    }
    Ok(TABLE_METRICS
        .iter()
        .map(|&m| delta(m, m.of(baseline), m.of(treated)))
        .collect())
}

/// One attribute's table: a baseline row followed by treated rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaTable {
    pub attribute: String,
    pub baseline_label: String,
    pub baseline: FairnessReport,
    pub rows: Vec<(String, FairnessReport)>,
}

impl DeltaTable {
    pub fn deltas(&self) -> Result<Vec<(String, Vec<DeltaReport>)>> {
        self.rows
            .iter()
            .map(|(label, r)| Ok((label.clone(), delta_report(&self.baseline, r)?)))
            .collect()
    }
}

/// Markdown tables laid out as `Model | AUC | FPR_gap | TPR_gap | AUC_gap`.
/// The baseline row prints plain values; treated rows print AUC plain and
/// gaps with arrows.
pub fn render_markdown(tables: &[DeltaTable]) -> Result<String> {
    let mut out = String::new();
    for (i, t) in tables.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "**Sensitive attribute: {}**\n", t.attribute);
        out.push_str("| Model | AUC | FPR_gap | TPR_gap | AUC_gap |\n");
        out.push_str("|---|---|---|---|---|\n");
        let b = &t.baseline;
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} |",
            t.baseline_label,
            format_score(b.auc_overall),
            format_score(b.fpr_gap),
            format_score(b.tpr_gap),
            format_score(b.auc_gap)
        );
        for (label, deltas) in t.deltas()? {
            let cells: Vec<String> = deltas
                .iter()
                .map(|d| match d.metric {
                    Metric::Auc => format_score(d.treated),
                    _ => d.rendered.clone(),
                })
                .collect();
            let _ = writeln!(out, "| {label} | {} |", cells.join(" | "));
        }
    }
    Ok(out)
}

pub fn render_csv(tables: &[DeltaTable]) -> Result<String> {
    let mut out = String::from("attribute,model,metric,baseline,treated,direction,rendered\n");
    for t in tables {
        for (label, deltas) in t.deltas()? {
            for d in deltas {
                let direction = serde_json::to_value(d.direction)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default();
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    csv_field(&t.attribute),
                    csv_field(&label),
                    d.metric.label(),
                    d.baseline,
                    d.treated,
                    direction,
                    d.rendered
                );
            }
        }
    }
    Ok(out)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::GroupCounts;

    fn report(attr: &str, auc: f64, fpr: f64, tpr: f64, aucg: f64) -> FairnessReport {
        FairnessReport {
            attribute: attr.into(),
            auc_overall: auc,
            fpr_gap: fpr,
            tpr_gap: tpr,
            auc_gap: aucg,
            groups: vec![],
        }
    }

    fn bias(attr: &str, sel: f64, over: f64) -> DatasetBiasReport {
        DatasetBiasReport {
            attribute: attr.into(),
            selection: Some(sel),
            overamplification_raw: over,
            overamplification_norm: over,
            groups: Vec::<GroupCounts>::new(),
        }
    }

    #[test]
    fn pearson_examples() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        assert!((pearson(&xs, &ys).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert!((pearson(&xs, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0]), Err(Error::LengthMismatch(_))));
        assert!(matches!(pearson(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::ZeroVariance(_))));
    }

    #[test]
    fn identical_and_reversed_inputs() {
        let fair = vec![
            report("gender", 0.8, 0.01, 0.02, 0.03),
            report("race", 0.8, 0.05, 0.04, 0.01),
            report("religion", 0.8, 0.09, 0.07, 0.02),
        ];
        let b: Vec<_> = fair.iter().map(|f| bias(&f.attribute, f.fpr_gap, f.fpr_gap)).collect();
        let m = correlate_bias_fairness(&b, &fair, &[BiasSource::Selection], None).unwrap();
        assert!((m.values[0][0] - 1.0).abs() < 1e-12);
        assert_eq!(m.n, 3);
        assert!(m.small_sample);

        let rev: Vec<_> = fair.iter().map(|f| bias(&f.attribute, -f.fpr_gap, 0.0)).collect();
        let m = correlate_bias_fairness(&rev, &fair, &[BiasSource::Selection], None).unwrap();
        assert!((m.values[0][0] + 1.0).abs() < 1e-12);

        let ext: BTreeMap<String, f64> = [("gender", 0.2), ("race", 0.5), ("religion", 0.9)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let m = correlate_bias_fairness(&b, &fair, &[BiasSource::External], Some(&ext)).unwrap();
        assert_eq!(m.row_names, ["external"]);
        assert!(correlate_bias_fairness(&b, &fair, &[BiasSource::Overamplification], None).is_ok());
        assert!(matches!(
            correlate_bias_fairness(&rev, &fair, &[BiasSource::Overamplification], None),
            Err(Error::ZeroVariance(_))
        ));
        assert!(correlate_bias_fairness(&b[..1], &fair[..1], &[BiasSource::Selection], None).is_err());
    }

    #[test]
    fn delta_directions_follow_polarity() {
        let d = delta(Metric::FprGap, 0.09, 0.011);
        assert_eq!((d.direction, d.rendered.as_str()), (Direction::Improved, "↓0.011"));
        let d = delta(Metric::TprGap, 0.036, 0.049);
        assert_eq!((d.direction, d.rendered.as_str()), (Direction::Worsened, "↑0.049"));
        let d = delta(Metric::Auc, 0.83, 0.841);
        assert_eq!(d.direction, Direction::Improved);
        let d = delta(Metric::AucGap, 0.0061, 0.0059);
        assert_eq!((d.direction, d.rendered.as_str()), (Direction::Unchanged, "0.006"));
        assert_eq!(format_score(0.0), "0");
        assert_eq!(format_score(0.09), "0.09");
    }

    #[test]
    fn identical_reports_unchanged() {
        let r = report("gender", 0.83, 0.09, 0.036, 0.01);
        let ds = delta_report(&r, &r).unwrap();
        assert_eq!(ds.len(), 4);
        assert!(ds.iter().all(|d| d.direction == Direction::Unchanged));
        assert!(delta_report(&r, &report("race", 0.8, 0.0, 0.0, 0.0)).is_err());
    }
}
