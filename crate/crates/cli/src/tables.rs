//! Side-by-side comparison tables in Markdown and CSV.

use pdt_synth::{AlignmentReport, CostReport, DiversityReport};

pub const UNDEFINED: &str = "undefined";

pub struct Table {
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn to_markdown(&self) -> String {
        let mut out = format!("### {}\n\n| {} |\n|", self.title, self.header.join(" | "));
        out.push_str(&"---|".repeat(self.header.len()));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("| {} |\n", row.join(" | ")));
        }
        out
    }

    pub fn to_csv(&self) -> anyhow::Result<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }
}

fn f4(v: f64) -> String {
    format!("{v:.4}")
}

fn opt4(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED.to_string(), f4)
}

/// Statistics as rows, one column per dataset.
pub fn alignment(entries: &[(&str, Option<&AlignmentReport>)]) -> Table {
    type Stat = fn(&AlignmentReport) -> String;
    let stats: [(&str, Stat); 10] = [
        ("n", |r| r.n.to_string()),
        ("Mean (target)", |r| f4(r.mean_target)),
        ("Mean (evaluated)", |r| f4(r.mean_evaluated)),
        ("Variance (target)", |r| opt4(r.var_target)),
        ("Variance (evaluated)", |r| opt4(r.var_evaluated)),
        ("MAD", |r| f4(r.mad)),
        ("MSD", |r| f4(r.msd)),
        ("Pearson", |r| opt4(r.pearson)),
        ("tStat", |r| r.t_stat.map_or_else(|| UNDEFINED.to_string(), |t| format!("{t:.2}"))),
        ("Exact matches (%)", |r| format!("{:.1}", r.diff_histogram.bins[0].percentage)),
    ];
    let mut header = vec!["Statistic".to_string()];
    header.extend(entries.iter().map(|(l, _)| l.to_string()));
    let rows = stats
        .iter()
        .map(|(name, f)| {
            let mut row = vec![name.to_string()];
            row.extend(entries.iter().map(|(_, r)| r.map_or_else(|| "n/a".to_string(), f)));
            row
        })
        .collect();
    Table {
        title: "Target vs evaluated scores".into(),
        header,
        rows,
    }
}

pub fn diversity(entries: &[(&str, &DiversityReport)]) -> Table {
    Table {
        title: "Text diversity".into(),
        header: ["Dataset", "Words", "CR", "CR-POS", "HS", "NDS"].map(String::from).to_vec(),
        rows: entries
            .iter()
            .map(|(label, d)| {
                vec![
                    label.to_string(),
                    d.word_count.to_string(),
                    format!("{:.3}", d.cr),
                    format!("{:.3}", d.cr_pos),
                    d.hs.map_or_else(|| "skipped".to_string(), |h| format!("{h:.3}")),
                    format!("{:.3}", d.nds),
                ]
            })
            .collect(),
    }
}

pub fn cost(entries: &[(&str, Option<&CostReport>)]) -> Table {
    Table {
        title: "Generation cost".into(),
        header: ["Dataset", "Rows", "Time (s)", "Input", "Output", "Total", "Price"]
            .map(String::from)
            .to_vec(),
        rows: entries
            .iter()
            .map(|(label, c)| match c {
                Some(c) => vec![
                    label.to_string(),
                    c.rows.to_string(),
                    format!("{:.0}", c.wall_time_s),
                    c.input_tokens.to_string(),
                    c.output_tokens.to_string(),
                    c.total_tokens.to_string(),
                    c.price_display.clone(),
                ],
                None => {
                    let mut row = vec![label.to_string()];
                    row.extend(std::iter::repeat_n("n/a".to_string(), 6));
                    row
                }
            })
            .collect(),
    }
}
