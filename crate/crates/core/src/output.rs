//! CSV emission. Numbers use Rust's shortest round-trip formatting and every
//! file starts with a `#`-prefixed JSON provenance line.

use std::fmt::Write as _;

use serde::Serialize;
use serde_json::{json, Value};

use crate::dynamics::MseSeries;

pub const TOOL_NAME: &str = "lsam";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Shortest decimal string that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// `# {"tool": …, "version": …, "seed": …, "config": …}` followed by a newline.
pub fn provenance_header<C: Serialize>(config: &C, seed: u64) -> String {
    let config = serde_json::to_value(config).unwrap_or(Value::Null);
    let header = json!({
        "tool": TOOL_NAME,
        "version": TOOL_VERSION,
        "seed": seed,
        "config": config,
    });
    format!("# {header}\n")
}

/// Columns `n,mse,stderr,bias,variance_lb`; missing values are left empty.
pub fn series_csv(series: &MseSeries) -> String {
    let mut out = String::from("n,mse,stderr,bias,variance_lb\n");
    for (i, p) in series.points.iter().enumerate() {
        let bias = series.bias.as_ref().map(|b| b[i]);
        let var = series.variance_lb.as_ref().map(|v| v[i]);
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            p.n,
            fmt_f64(p.mse),
            fmt_f64(p.stderr),
            fmt_opt(bias),
            fmt_opt(var)
        );
    }
    out
}

/// Long format `n,quantity,value` for external plotting.
pub fn series_plot_data(series: &MseSeries) -> String {
    let mut out = String::from("n,quantity,value\n");
    for (i, p) in series.points.iter().enumerate() {
        let _ = writeln!(out, "{},mse,{}", p.n, fmt_f64(p.mse));
        let _ = writeln!(out, "{},stacked_mse,{}", p.n, fmt_f64(p.stacked_mse));
        if let Some(b) = &series.bias {
            let _ = writeln!(out, "{},bias,{}", p.n, fmt_f64(b[i]));
        }
        if let Some(v) = &series.variance_lb {
            let _ = writeln!(out, "{},variance_lb,{}", p.n, fmt_f64(v[i]));
        }
    }
    out
}
