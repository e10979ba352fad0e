//! Text renderings of posterior odds ratios.

use crate::mcmc::{ContrastSummary, PosteriorSummary};
use crate::nma::SummaryLayout;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReportError {
    #[error("degenerate interval ({0}, {1})")]
    DegenerateInterval(f64, f64),
    #[error("line {line}: no posterior for {treat_k} vs {treat_b} although both are estimable")]
    MissingContrast { line: usize, treat_b: String, treat_k: String },
    #[error("cannot parse cell `{0}`")]
    Parse(String),
}

/// Formats an odds ratio with at most two decimals (trailing zeros dropped,
/// at least one kept); values below 0.01 keep three significant figures.
pub fn format_value(x: f64) -> String {
    if x != 0.0 && x.abs() < 0.01 {
        let digits = (2 - x.abs().log10().floor() as i32).max(0) as usize;
        return format!("{x:.digits$}");
    }
    let s = format!("{x:.2}");
    let s = s.strip_suffix('0').unwrap_or(&s).to_string();
    s
}

pub fn format_cell(median: f64, lo: f64, hi: f64) -> String {
    format!("{} ({}, {})", format_value(median), format_value(lo), format_value(hi))
}

/// Inverse of [`format_cell`] up to displayed precision.
pub fn parse_cell(cell: &str) -> Result<(f64, f64, f64), ReportError> {
    let err = || ReportError::Parse(cell.to_string());
    let (m, rest) = cell.trim().split_once(" (").ok_or_else(err)?;
    let inner = rest.strip_suffix(')').ok_or_else(err)?;
    let (lo, hi) = inner.split_once(", ").ok_or_else(err)?;
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| err());
    Ok((num(m)?, num(lo)?, num(hi)?))
}

/// Percentage by which interval `b` is narrower than interval `a`.
pub fn cri_reduction(a: (f64, f64), b: (f64, f64)) -> Result<f64, ReportError> {
    for (lo, hi) in [a, b] {
        if !(hi > lo) {
            return Err(ReportError::DegenerateInterval(lo, hi));
        }
    }
    Ok(100.0 * (1.0 - (b.1 - b.0) / (a.1 - a.0)))
}

/// One fitted analysis restricted to a line.
#[derive(Debug, Clone, Copy)]
pub struct Analysis<'a> {
    pub summary: &'a PosteriorSummary,
    pub layout: &'a SummaryLayout,
    pub line: usize,
}

impl Analysis<'_> {
    fn available(&self, code: &str) -> bool {
        self.layout
            .treatments
            .iter()
            .position(|t| t == code)
            .is_some_and(|i| self.layout.lines.contains(&self.line) && self.layout.available[self.line - 1][i])
    }

    /// Odds ratio of `num` against `den` as (median, lo, hi), or `None` when
    /// either treatment has no estimate.
    fn odds_ratio(&self, num: &str, den: &str) -> Result<Option<(f64, f64, f64)>, ReportError> {
        if !self.available(num) || !self.available(den) {
            return Ok(None);
        }
        let pick = |c: &ContrastSummary| (c.or.median, c.or.lo, c.or.hi);
        if let Some(c) = self.summary.contrast(self.line, den, num) {
            return Ok(Some(pick(c)));
        }
        if let Some(c) = self.summary.contrast(self.line, num, den) {
            let (m, lo, hi) = pick(c);
            return Ok(Some((1.0 / m, 1.0 / hi, 1.0 / lo)));
        }
        Err(ReportError::MissingContrast { line: self.line, treat_b: den.to_string(), treat_k: num.to_string() })
    }

    fn cell(&self, num: &str, den: &str) -> Result<String, ReportError> {
        Ok(self.odds_ratio(num, den)?.map_or_else(|| "--".to_string(), |(m, lo, hi)| format_cell(m, lo, hi)))
    }
}

fn render(treatments: &[String], cells: Vec<Vec<String>>) -> String {
    let width = cells.iter().flatten().map(String::len).chain(treatments.iter().map(String::len)).max().unwrap_or(0);
    let mut out = String::new();
    let row = |first: &str, rest: &mut dyn Iterator<Item = &String>| {
        let mut line = format!("{first:<width$}");
        for c in rest {
            line.push_str("  ");
            line.push_str(&format!("{c:<width$}"));
        }
        line.trim_end().to_string() + "\n"
    };
    out.push_str(&row("", &mut treatments.iter()));
    for (t, r) in treatments.iter().zip(&cells) {
        out.push_str(&row(t, &mut r.iter()));
    }
    out
}

/// Square table: cell (row, column) is the odds ratio of the column
/// treatment against the row treatment; the diagonal is blank and
/// treatments without an estimate show `--`.
pub fn or_matrix_report(analysis: Analysis<'_>, treatments: &[String]) -> Result<String, ReportError> {
    let mut cells = Vec::with_capacity(treatments.len());
    for (i, row) in treatments.iter().enumerate() {
        let mut r = Vec::with_capacity(treatments.len());
        for (j, col) in treatments.iter().enumerate() {
            r.push(if i == j { String::new() } else { analysis.cell(col, row)? });
        }
        cells.push(r);
    }
    Ok(render(treatments, cells))
}

/// Two analyses in one table: the lower triangle comes from `lower`, the
/// upper from `upper`. Both triangles show the later treatment in the
/// ordering against the earlier one.
pub fn or_matrix_two(lower: Analysis<'_>, upper: Analysis<'_>, treatments: &[String]) -> Result<String, ReportError> {
    let mut cells = Vec::with_capacity(treatments.len());
    for i in 0..treatments.len() {
        let mut r = Vec::with_capacity(treatments.len());
        for j in 0..treatments.len() {
            r.push(match i.cmp(&j) {
                std::cmp::Ordering::Equal => String::new(),
                std::cmp::Ordering::Less => upper.cell(&treatments[j], &treatments[i])?,
                std::cmp::Ordering::Greater => lower.cell(&treatments[i], &treatments[j])?,
            });
        }
        cells.push(r);
    }
    Ok(render(treatments, cells))
}

/// Reads a contrast summary CSV back into a summary and the layout implied by
/// the treatments it mentions. Log-scale fields are recovered from the odds
/// ratios; means are not stored and come back as NaN.
pub fn read_summary_csv<R: std::io::Read>(
    reader: R,
    treatments: &[String],
) -> Result<(PosteriorSummary, SummaryLayout), ReportError> {
    use crate::mcmc::{Quantiles, SUMMARY_CSV_HEADER};
    let bad = |m: String| ReportError::Parse(m);
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != SUMMARY_CSV_HEADER {
        return Err(bad(format!("summary header `{}`", header.iter().collect::<Vec<_>>().join(","))));
    }
    let mut available = [vec![false; treatments.len()], vec![false; treatments.len()]];
    let mut lines = Vec::new();
    let mut contrasts = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(format!("value `{}`", &rec[i])));
        let opt = |i: usize| if &rec[i] == "NA" { Ok(None) } else { num(i).map(Some) };
        let line: usize =
            rec[0].parse().ok().filter(|l| *l == 1 || *l == 2).ok_or_else(|| bad(format!("line `{}`", &rec[0])))?;
        for code in [&rec[1], &rec[2]] {
            let i = treatments.iter().position(|t| t == code).ok_or_else(|| bad(format!("treatment `{code}`")))?;
            available[line - 1][i] = true;
        }
        if !lines.contains(&line) {
            lines.push(line);
        }
        let or = Quantiles { mean: f64::NAN, median: num(3)?, lo: num(4)?, hi: num(5)? };
        let log_or = Quantiles { mean: f64::NAN, median: or.median.ln(), lo: or.lo.ln(), hi: or.hi.ln() };
        contrasts.push(ContrastSummary {
            line,
            treat_b: rec[1].to_string(),
            treat_k: rec[2].to_string(),
            log_or,
            or,
            rhat: opt(6)?,
            ess: opt(7)?,
        });
    }
    lines.sort_unstable();
    let summary = PosteriorSummary { parameters: vec![], contrasts, converged: true, warnings: vec![] };
    Ok((summary, SummaryLayout { treatments: treatments.to_vec(), lines, available }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_decimal_cell() {
        assert_eq!(format_cell(11.34, 0.37, 59.4), "11.34 (0.37, 59.4)");
        assert_eq!(format_cell(11.0, 0.6, 0.004567), "11.0 (0.6, 0.00457)");
    }

    #[test]
    fn reduction_examples() {
        let r = cri_reduction((0.37, 59.4), (0.48, 14.5)).unwrap();
        assert_eq!(r.round(), 76.0);
        assert_eq!(cri_reduction((1.0, 2.0), (1.0, 2.0)).unwrap(), 0.0);
        assert!(cri_reduction((1.0, 2.0), (0.0, 3.0)).unwrap() < 0.0);
        assert!(cri_reduction((2.0, 2.0), (0.0, 3.0)).is_err());
    }

    #[test]
    fn parse_round_trip() {
        assert_eq!(parse_cell("11.34 (0.37, 59.4)").unwrap(), (11.34, 0.37, 59.4));
        assert!(parse_cell("--").is_err());
    }
}
