use std::fmt::Write as _;

use crate::bma::PosteriorSummary;
use crate::error::{Error, Result};
use crate::report::evidence::{classify_evidence, EvidenceClass, POSITIVE_THRESHOLD};

pub const MARKER: char = '►';
const NAME_WIDTH: usize = 36;
const RULE: &str = "------------------------------------------------------------------------------";

/// One variable as it appears in a results table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub label: String,
    pub endogenous: bool,
    pub pip: f64,
    pub post_mean: f64,
    pub post_sd: f64,
}

impl TableRow {
    /// Rows in summary order, labelled by `labels` and flagged by `endogenous`.
    pub fn from_summary(summary: &PosteriorSummary, labels: &[String], endogenous: &[bool]) -> Vec<TableRow> {
        summary
            .variables
            .iter()
            .enumerate()
            .map(|(j, v)| TableRow {
                label: labels.get(j).cloned().unwrap_or_else(|| v.name.clone()),
                endogenous: endogenous.get(j).copied().unwrap_or(false),
                pip: v.pip,
                post_mean: v.post_mean,
                post_sd: v.post_sd,
            })
            .collect()
    }
}

/// Renders a results table sorted by descending PIP; ties keep input order.
///
/// `header` lines are printed verbatim above the column titles.
pub fn render_table(title: &str, header: &[String], rows: &[TableRow]) -> Result<String> {
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| rows[b].pip.total_cmp(&rows[a].pip));

    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    for line in header {
        let _ = writeln!(out, "{line}");
    }
    let _ = writeln!(out, "{RULE}");
    let _ = writeln!(
        out,
        "  {:<NAME_WIDTH$} {:>7} {:>10} {:>9}  {}",
        "Variable", "PIP", "Post Mean", "Post SD", "Evidence"
    );
    let _ = writeln!(out, "{RULE}");
    for &i in &order {
        let r = &rows[i];
        let class = classify_evidence(r.pip)?;
        let marker = if r.pip > POSITIVE_THRESHOLD { MARKER } else { ' ' };
        let name = if r.endogenous { format!("{}*", r.label) } else { r.label.clone() };
        let _ = writeln!(
            out,
            "{marker} {name:<NAME_WIDTH$} {:>7.3} {:>10.3} {:>9.3}  {class}",
            r.pip, r.post_mean, r.post_sd
        );
    }
    let _ = writeln!(out, "{RULE}");
    let _ = writeln!(out, "{MARKER} marks PIP > 0.75. * marks a potentially endogenous variable.");
    let _ = writeln!(
        out,
        "Evidence: Decisive PIP > 0.99; Strong 0.95 < PIP <= 0.99; Positive 0.75 < PIP <= 0.95; Weak PIP <= 0.75."
    );
    let _ = writeln!(out, "A PIP exactly on a threshold is assigned to the lower class.");
    Ok(out)
}

/// A row read back from a rendered table.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedRow {
    pub label: String,
    pub endogenous: bool,
    pub marked: bool,
    pub pip: f64,
    pub post_mean: f64,
    pub post_sd: f64,
    pub evidence: EvidenceClass,
}

/// Parses the body of a table produced by [`render_table`].
pub fn parse_table(text: &str) -> Result<Vec<ParsedRow>> {
    let lines: Vec<&str> = text.lines().collect();
    let rules: Vec<usize> = lines
        .iter()
        .enumerate()
        .filter(|(_, l)| **l == RULE)
        .map(|(i, _)| i)
        .collect();
    if rules.len() < 3 {
        return Err(Error::Parse {
            line: 0,
            message: "not a rendered results table".into(),
        });
    }
    let bad = |i: usize, message: &str| Error::Parse {
        line: i as u64 + 1,
        message: message.to_string(),
    };
    let mut rows = Vec::new();
    for (i, line) in lines.iter().enumerate().take(rules[2]).skip(rules[1] + 1) {
        let mut chars = line.chars();
        let marked = chars.next() == Some(MARKER);
        let rest: String = chars.collect();
        let fields: Vec<&str> = rest.split_whitespace().collect();
        if fields.len() < 5 {
            return Err(bad(i, "expected label, PIP, mean, SD and evidence"));
        }
        let nf = fields.len();
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(i, &format!("bad number {s:?}")));
        let label_tokens = &fields[..nf - 4];
        let mut label = label_tokens.join(" ");
        let endogenous = label.ends_with('*');
        if endogenous {
            label.pop();
        }
        rows.push(ParsedRow {
            label,
            endogenous,
            marked,
            pip: num(fields[nf - 4])?,
            post_mean: num(fields[nf - 3])?,
            post_sd: num(fields[nf - 2])?,
            evidence: fields[nf - 1].parse()?,
        });
    }
    Ok(rows)
}
