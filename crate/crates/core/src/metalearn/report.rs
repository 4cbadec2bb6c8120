//! CSV tables and the shared number format (12 significant digits).

use super::{CertifiedTask, SweepOutcome};

/// `x` with 12 significant digits, trailing zeros dropped; plain decimal for
/// exponents in `[-5, 12)`, scientific otherwise.
pub fn format_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

pub const CERTIFICATES_HEADER: &[&str] = &[
    "task_id",
    "architecture",
    "kind",
    "loss",
    "m_prime",
    "c_effective",
    "b",
    "delta",
    "emp_loss",
    "mc_stderr",
    "emp_complement_loss_01",
    "emp_complement_loss_linear",
    "test_query_error",
    "tau_star",
    "breakdown",
];

/// One row per task per certificate. `breakdown` lists
/// `label=nats/cumulative_tau` terms separated by `;`.
pub fn certificates_csv(tasks: &[CertifiedTask]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CERTIFICATES_HEADER)?;
    for t in tasks {
        let r = &t.row;
        for b in &r.bounds {
            let breakdown: Vec<String> = b
                .certificate
                .breakdown
                .iter()
                .map(|term| format!("{}={}/{}", term.label, format_num(term.nats), format_num(term.cumulative_tau)))
                .collect();
            w.write_record([
                r.task_id.to_string(),
                r.architecture.to_string(),
                b.certificate.kind.to_string(),
                b.loss.as_str().to_string(),
                r.m_prime.to_string(),
                r.c_effective.to_string(),
                r.b.to_string(),
                format_num(b.certificate.delta),
                format_num(b.emp_loss),
                b.mc_stderr.map(format_num).unwrap_or_default(),
                format_num(r.emp_complement_loss_01),
                format_num(r.emp_complement_loss_linear),
                format_num(r.test_query_error),
                format_num(b.certificate.tau_star),
                breakdown.join(";"),
            ])?;
        }
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv output is utf-8"))
}

pub const SWEEP_HEADER: &[&str] =
    &["point", "architecture", "learning_rate", "mlp1", "mlp2", "mlp3", "c", "b", "status", "val_error", "best_epoch", "epochs", "selected"];

fn sizes(v: &[usize]) -> String {
    v.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" ")
}

/// One row per valid grid point; failed runs carry their reason in `status`.
pub fn sweep_csv(outcome: &SweepOutcome) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_HEADER)?;
    for r in &outcome.results {
        let p = &r.point;
        let (status, val, best, epochs) = match &r.log {
            Ok(log) => (
                "ok".to_string(),
                format_num(log.best_val_error),
                log.best_epoch.to_string(),
                log.epochs.len().to_string(),
            ),
            Err(reason) => (reason.clone(), String::new(), String::new(), String::new()),
        };
        w.write_record([
            p.index.to_string(),
            p.config.architecture.to_string(),
            format_num(p.learning_rate),
            sizes(&p.config.mlp1),
            sizes(&p.config.mlp2),
            sizes(&p.config.mlp3),
            p.config.c.to_string(),
            p.config.b.to_string(),
            status,
            val,
            best,
            epochs,
            (outcome.best == Some(p.index)).to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv output is utf-8"))
}
