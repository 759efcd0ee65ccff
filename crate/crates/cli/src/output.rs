use hho_core::afem::{ConvergenceHistory, Rates};
use hho_core::Error;
use serde_json::json;

pub const CSV_HEADER: [&str; 8] = ["level", "ndof", "eta", "err_sigma", "err_l2", "eff_index", "rate_eta", "rate_err"];

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.10e}")).unwrap_or_default()
}

pub fn history_csv(history: &ConvergenceHistory, rates: &Rates) -> Result<String, Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for (i, l) in history.levels.iter().enumerate() {
        w.write_record([
            l.level.to_string(),
            l.ndof.to_string(),
            cell(Some(l.eta)),
            cell(l.err_sigma),
            cell(l.err_l2),
            cell(l.eff_index),
            cell(rates.eta[i]),
            cell(rates.err_sigma[i]),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is ascii"))
}

pub fn history_json(history: &ConvergenceHistory, rates: &Rates) -> Result<String, Error> {
    let doc = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": history.config,
        "levels": history.levels,
        "rates": rates,
    });
    serde_json::to_string_pretty(&doc).map_err(|e| Error::Io(e.into()))
}

pub fn history_table(history: &ConvergenceHistory, rates: &Rates) -> String {
    let opt = |v: Option<f64>, p: usize| v.map(|x| format!("{x:.p$e}")).unwrap_or_else(|| "-".into());
    let mut s = format!(
        "{:>5} {:>9} {:>11} {:>11} {:>11} {:>7} {:>7} {:>7}\n",
        "level", "ndof", "eta", "err_sigma", "err_l2", "eff", "r_eta", "r_err"
    );
    for (i, l) in history.levels.iter().enumerate() {
        s += &format!(
            "{:>5} {:>9} {:>11} {:>11} {:>11} {:>7} {:>7} {:>7}\n",
            l.level,
            l.ndof,
            opt(Some(l.eta), 4),
            opt(l.err_sigma, 4),
            opt(l.err_l2, 4),
            l.eff_index.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into()),
            rates.eta[i].map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into()),
            rates.err_sigma[i].map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into()),
        );
    }
    let fit = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
    s += &format!(
        "least-squares rates over the last {} levels: eta {}, err_sigma {}, err_l2 {}\n",
        rates.window,
        fit(rates.eta_fit),
        fit(rates.err_sigma_fit),
        fit(rates.err_l2_fit)
    );
    s
}
