//! Benchmark report rows: one per trial plus a `mean` row.

use serde::Serialize;

use rankone::experiment::{Summary, TrialReport};

#[derive(Serialize)]
pub struct JsonReport<'a> {
    pub trials: &'a [TrialReport],
    pub summary: &'a Summary,
}

/// 17 significant digits; empty for missing values.
fn num(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => format!("{v:.16e}"),
        Some(v) => v.to_string(),
        None => String::new(),
    }
}

fn dims_label(dims: &[usize]) -> String {
    dims.iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join("x")
}

const BASE_COLUMNS: [&str; 12] = [
    "row",
    "trial",
    "seed",
    "dims",
    "den",
    "eps",
    "err_ab",
    "err_rt",
    "sin_theta",
    "time",
    "status",
    "levels",
];

const NLS_COLUMNS: [&str; 8] = [
    "nls_err_ab",
    "nls_err_rt",
    "nls_sin_theta",
    "nls_time",
    "nls_iterations",
    "nls_termination",
    "alg_more_accurate",
    "alg_faster",
];

pub fn csv(reports: &[TrialReport], summary: &Summary, compare_nls: bool) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = BASE_COLUMNS.to_vec();
    if compare_nls {
        header.extend(NLS_COLUMNS);
    }
    w.write_record(&header).expect("in-memory write");

    for (i, r) in reports.iter().enumerate() {
        let m = &r.metrics;
        let levels = r
            .levels
            .iter()
            .map(|l| format!("{}:{}:{}", l.mode, num(Some(l.sigma_min)), num(Some(l.gap))))
            .collect::<Vec<_>>()
            .join("|");
        let mut row = vec![
            "trial".to_string(),
            i.to_string(),
            r.seed.to_string(),
            dims_label(&r.dims),
            num(Some(m.density)),
            num(Some(r.eps)),
            num(Some(m.err_ab)),
            num(m.err_rt),
            num(Some(m.sin_theta)),
            num(Some(m.runtime_seconds)),
            r.status.to_string(),
            levels,
        ];
        if compare_nls {
            match &r.nls {
                Some(n) => {
                    let more_accurate =
                        matches!((m.err_rt, n.metrics.err_rt), (Some(a), Some(b)) if a < b);
                    row.extend([
                        num(Some(n.metrics.err_ab)),
                        num(n.metrics.err_rt),
                        num(Some(n.metrics.sin_theta)),
                        num(Some(n.metrics.runtime_seconds)),
                        n.iterations.to_string(),
                        serde_json::to_value(n.termination)
                            .ok()
                            .and_then(|v| v.as_str().map(str::to_owned))
                            .unwrap_or_default(),
                        u8::from(more_accurate).to_string(),
                        u8::from(m.runtime_seconds < n.metrics.runtime_seconds).to_string(),
                    ]);
                }
                None => row.extend(std::iter::repeat_n(String::new(), NLS_COLUMNS.len())),
            }
        }
        w.write_record(&row).expect("in-memory write");
    }

    let dims = reports
        .first()
        .map(|r| dims_label(&r.dims))
        .unwrap_or_default();
    let eps = reports.first().map(|r| r.eps);
    let mut row = vec![
        "mean".to_string(),
        String::new(),
        String::new(),
        dims,
        num(Some(summary.density)),
        num(eps),
        num(Some(summary.err_ab)),
        num(summary.err_rt),
        num(Some(summary.sin_theta)),
        num(Some(summary.runtime_seconds)),
        format!("failed={}", summary.failed),
        String::new(),
    ];
    if compare_nls {
        match &summary.nls {
            Some(n) => row.extend([
                num(Some(n.err_ab)),
                num(n.err_rt),
                num(Some(n.sin_theta)),
                num(Some(n.runtime_seconds)),
                String::new(),
                String::new(),
                n.algorithm_more_accurate.to_string(),
                n.algorithm_faster.to_string(),
            ]),
            None => row.extend(std::iter::repeat_n(String::new(), NLS_COLUMNS.len())),
        }
    }
    w.write_record(&row).expect("in-memory write");
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_carry_seventeen_digits() {
        assert_eq!(num(Some(0.1)), "1.0000000000000001e-1");
        assert_eq!(num(Some(0.1)).parse::<f64>().unwrap(), 0.1);
        assert_eq!(num(None), "");
        assert_eq!(num(Some(f64::NAN)), "NaN");
    }

    #[test]
    fn dims_are_joined() {
        assert_eq!(dims_label(&[80, 100, 120]), "80x100x120");
    }
}
