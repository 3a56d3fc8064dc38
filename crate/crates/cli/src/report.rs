//! Comparison table in CSV and aligned-text form.

use quadtrack::metrics::MetricsReport;

pub struct Row {
    pub controller: String,
    pub metrics: Option<MetricsReport>,
    /// `ok`, or the fault message.
    pub status: String,
}

pub const COLUMNS: [&str; 8] = [
    "rmse_x", "rmse_y", "rmse_z", "rmse_xyz", "rmse_phi", "rmse_theta", "rmse_psi", "rmse_att",
];

fn values(m: &MetricsReport) -> [f64; 8] {
    [
        m.rmse_x,
        m.rmse_y,
        m.rmse_z,
        m.rmse_xyz,
        m.rmse_phi,
        m.rmse_theta,
        m.rmse_psi,
        m.rmse_att,
    ]
}

/// Full-precision CSV: every value round-trips exactly.
pub fn to_csv(rows: &[Row]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["controller"];
    header.extend(COLUMNS);
    header.push("status");
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.controller.clone()];
        match &r.metrics {
            Some(m) => rec.extend(values(m).iter().map(|v| v.to_string())),
            None => rec.extend(std::iter::repeat_n(String::new(), COLUMNS.len())),
        }
        rec.push(r.status.clone());
        w.write_record(&rec)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn to_text(rows: &[Row]) -> String {
    let titles = [
        "controller", "x (m)", "y (m)", "z (m)", "xyz (m)", "phi (rad)", "theta (rad)", "psi (rad)", "att (rad)",
        "status",
    ];
    let mut cells: Vec<Vec<String>> = vec![titles.iter().map(|s| s.to_string()).collect()];
    for r in rows {
        let mut line = vec![r.controller.clone()];
        match &r.metrics {
            Some(m) => line.extend(values(m).iter().map(|v| format!("{v:.5}"))),
            None => line.extend(std::iter::repeat_n("-".to_string(), COLUMNS.len())),
        }
        line.push(r.status.clone());
        cells.push(line);
    }
    let widths: Vec<usize> = (0..titles.len())
        .map(|c| cells.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, line) in cells.iter().enumerate() {
        let padded: Vec<String> = line
            .iter()
            .enumerate()
            .map(|(c, s)| {
                if c == 0 || c == titles.len() - 1 {
                    format!("{s:<w$}", w = widths[c])
                } else {
                    format!("{s:>w$}", w = widths[c])
                }
            })
            .collect();
        out.push_str(padded.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}
