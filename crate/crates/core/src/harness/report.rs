use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize, Serializer};

use crate::pipeline::{Aggregate, EpisodeReport, Variant, METRICS};

/// Floats are written with 9 significant digits.
pub fn fmt_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.8e}")
    } else {
        format!("{v}")
    }
}

fn ser_float<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&fmt_float(*v))
}

/// CSV columns, in order.
pub const COLUMNS: [&str; 14] = [
    "variant",
    "seed",
    "transfers_succeeded",
    "transfers_attempted",
    "pick_attempts",
    "topple_count",
    "drop_back_count",
    "correction_count",
    "correction_timed_out",
    "final_defects",
    "unoccupied_fraction",
    "goal_satisfied",
    "action_count",
    "failure_reason",
];

/// One episode as a CSV row. Wall time is left out so that identical runs
/// give identical files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub variant: Variant,
    pub seed: u64,
    pub transfers_succeeded: usize,
    pub transfers_attempted: usize,
    pub pick_attempts: usize,
    pub topple_count: usize,
    pub drop_back_count: usize,
    pub correction_count: usize,
    pub correction_timed_out: bool,
    pub final_defects: usize,
    #[serde(serialize_with = "ser_float")]
    pub unoccupied_fraction: f64,
    pub goal_satisfied: bool,
    pub action_count: usize,
    pub failure_reason: String,
}

impl From<&EpisodeReport> for ReportRow {
    fn from(r: &EpisodeReport) -> Self {
        Self {
            variant: r.variant,
            seed: r.seed,
            transfers_succeeded: r.transfers_succeeded,
            transfers_attempted: r.transfers_attempted,
            pick_attempts: r.pick_attempts,
            topple_count: r.topple_count,
            drop_back_count: r.drop_back_count,
            correction_count: r.correction_count,
            correction_timed_out: r.correction_timed_out,
            final_defects: r.final_defects,
            unoccupied_fraction: r.unoccupied_fraction,
            goal_satisfied: r.goal_satisfied,
            action_count: r.action_count,
            failure_reason: r.failure_reason.clone().unwrap_or_default(),
        }
    }
}

impl ReportRow {
    /// Back to a report; wall time is unknown and set to zero.
    pub fn to_report(&self) -> EpisodeReport {
        EpisodeReport {
            variant: self.variant,
            seed: self.seed,
            transfers_succeeded: self.transfers_succeeded,
            transfers_attempted: self.transfers_attempted,
            pick_attempts: self.pick_attempts,
            topple_count: self.topple_count,
            drop_back_count: self.drop_back_count,
            correction_count: self.correction_count,
            correction_timed_out: self.correction_timed_out,
            final_defects: self.final_defects,
            unoccupied_fraction: self.unoccupied_fraction,
            goal_satisfied: self.goal_satisfied,
            failure_reason: (!self.failure_reason.is_empty()).then(|| self.failure_reason.clone()),
            action_count: self.action_count,
            wall_time: 0.0,
        }
    }
}

pub fn write_csv<W: io::Write>(reports: &[EpisodeReport], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(ReportRow::from(r))?;
    }
    if reports.is_empty() {
        w.write_record(COLUMNS)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: io::Read>(input: R) -> Result<Vec<ReportRow>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// Per-variant aggregates, sorted by variant.
pub fn summarize(reports: &[EpisodeReport], n_objects: usize) -> Vec<Aggregate> {
    let mut variants: Vec<Variant> = reports.iter().map(|r| r.variant).collect();
    variants.sort();
    variants.dedup();
    variants
        .into_iter()
        .map(|v| {
            let rows: Vec<EpisodeReport> = reports.iter().filter(|r| r.variant == v).cloned().collect();
            Aggregate::of(v, &rows, n_objects)
        })
        .collect()
}

/// Summary as CSV: `variant,episodes` then `<metric>_mean,<metric>_sd` for
/// every metric.
pub fn summary_csv(aggs: &[Aggregate]) -> String {
    let mut s = String::from("variant,episodes");
    for (name, _) in METRICS {
        let _ = write!(s, ",{name}_mean,{name}_sd");
    }
    s.push('\n');
    for a in aggs {
        let _ = write!(s, "{},{}", a.variant, a.episodes);
        for (_, st) in &a.stats {
            let _ = write!(s, ",{},{}", fmt_float(st.mean), fmt_float(st.sd));
        }
        s.push('\n');
    }
    s
}

/// Human-readable summary grouped like the three result panels: transfer
/// success, packing quality, action counts.
pub fn summary_text(aggs: &[Aggregate]) -> String {
    let groups: [(&str, &[&str]); 3] = [
        ("success", &["success_fraction", "transfers_succeeded", "goal_satisfied"]),
        ("packing", &["unoccupied_fraction", "final_defects"]),
        (
            "actions",
            &[
                "pick_attempts",
                "picks_per_transfer",
                "topple_count",
                "drop_back_count",
                "correction_count",
                "action_count",
            ],
        ),
    ];
    let mut s = String::new();
    for (title, names) in groups {
        let _ = writeln!(s, "[{title}]");
        let _ = write!(s, "{:<8}", "variant");
        for n in names {
            let _ = write!(s, " {n:>24}");
        }
        s.push('\n');
        for a in aggs {
            let _ = write!(s, "{:<8}", a.variant.to_string());
            for n in names {
                let st = a.get(n);
                let _ = write!(s, " {:>24}", format!("{:.3} ± {:.3}", st.mean, st.sd));
            }
            s.push('\n');
        }
    }
    s
}
