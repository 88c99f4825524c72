use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use log::info;
use serde_json::Value;

use crate::args::{EstimateArgs, Format, SimulateArgs};
use crate::exit_code;
use crate::settings::{resolve_estimate, resolve_simulate};
use nddid::balancing::save_weights_csv;
use nddid::data::{csv_headers, load_csv_filtered, ColumnSchema, Filter};
use nddid::pipeline::{run_methods, NuisanceSource};
use nddid::simulation::{run_trials, SetupSpec};
use nddid::{Error, EstimateReport, Result};

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|source| Error::Io { path: path.display().to_string(), source })
}

fn io_err(path: &str) -> impl Fn(io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_string(), source }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<u8> {
    println!("{}", serde_json::to_string_pretty(value).expect("settings serialize"));
    Ok(0)
}

pub fn simulate(a: SimulateArgs) -> Result<u8> {
    let s = resolve_simulate(&a)?;
    if a.common.print_config {
        return print_json(&s);
    }
    let specs: Vec<SetupSpec> = s
        .setups
        .iter()
        .flat_map(|&setup| s.n.iter().map(move |&n| SetupSpec::new(setup, n, s.d, 0)))
        .collect();
    info!("running {} designs × {} methods × {} reps", specs.len(), s.shared.methods.len(), s.reps);
    let table = run_trials(&specs, &s.shared.methods, s.reps, s.shared.estimation.seed, &s.shared.estimation)?;
    print!("{}", table.render());
    if let Some(path) = &s.shared.out {
        let file = create(path)?;
        match s.shared.format {
            Format::Csv => table.write_csv(file)?,
            Format::Json => {
                let mut file = file;
                writeln!(file, "{}", table.to_json()).map_err(io_err(&path.display().to_string()))?;
            }
        }
    }
    Ok(0)
}

fn report_value(r: &EstimateReport, placebo: bool) -> Value {
    let mut v = serde_json::to_value(r).expect("report serializes");
    if placebo {
        v["contains_zero"] = Value::Bool(r.covers(0.0));
    }
    v
}

fn render(reports: &[&EstimateReport], placebo: bool) -> String {
    let mut out = format!("{:<13} {:>11} {:>10} {:>11} {:>11} {:>7}", "method", "estimate", "std.err", "ci_low", "ci_high", "n");
    if placebo {
        out.push_str("  contains_zero");
    }
    out.push('\n');
    for r in reports {
        out.push_str(&format!(
            "{:<13} {:>11.4} {:>10.4} {:>11.4} {:>11.4} {:>7}",
            r.method.name(),
            r.tau_hat,
            r.std_err,
            r.ci_low,
            r.ci_high,
            r.n_used
        ));
        if placebo {
            out.push_str(&format!("  {}", r.covers(0.0)));
        }
        out.push('\n');
    }
    out
}

fn write_reports_csv<W: Write>(mut w: W, reports: &[&EstimateReport], placebo: bool) -> io::Result<()> {
    write!(w, "method,tau_hat,std_err,ci_low,ci_high,n_used")?;
    if placebo {
        write!(w, ",contains_zero")?;
    }
    writeln!(w)?;
    for r in reports {
        write!(w, "{},{},{},{},{},{}", r.method, r.tau_hat, r.std_err, r.ci_low, r.ci_high, r.n_used)?;
        if placebo {
            write!(w, ",{}", r.covers(0.0))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn estimate(a: EstimateArgs, placebo: bool) -> Result<u8> {
    let s = resolve_estimate(&a, placebo)?;
    if a.common.print_config {
        return print_json(&s);
    }
    let filters = s.filter.iter().map(|f| f.parse::<Filter>()).collect::<Result<Vec<_>>>()?;
    let covariates = match &s.covariate_cols {
        Some(c) => c.clone(),
        None => {
            let skip: Vec<&str> = [s.outcome_col.as_str(), s.state_col.as_str(), s.time_col.as_str()]
                .into_iter()
                .chain(filters.iter().map(|f| f.column.as_str()))
                .collect();
            csv_headers(&s.input)?.into_iter().filter(|h| !skip.contains(&h.as_str())).collect()
        }
    };
    let schema = ColumnSchema::new(s.outcome_col.clone(), s.state_col.clone(), s.time_col.clone(), covariates);
    let data = load_csv_filtered(&s.input, &schema, &filters)?;
    info!("loaded {} rows with {} covariates", data.n(), data.d());
    let run = run_methods(&data, &s.shared.methods, &s.shared.estimation, NuisanceSource::CrossFit)?;
    let reports: Vec<&EstimateReport> = run.reports().collect();

    match &s.shared.out {
        Some(path) => {
            let p = path.display().to_string();
            let mut file = create(path)?;
            match s.shared.format {
                Format::Json => {
                    for r in &reports {
                        writeln!(file, "{}", report_value(r, placebo)).map_err(io_err(&p))?;
                    }
                }
                Format::Csv => write_reports_csv(&mut file, &reports, placebo).map_err(io_err(&p))?,
            }
        }
        None => {
            for r in &reports {
                println!("{}", report_value(r, placebo));
            }
        }
    }
    print!("{}", render(&reports, placebo));
    if let (Some(path), Some(w)) = (&s.weights_out, &run.weights) {
        save_weights_csv(w, path)?;
    }
    let mut code = 0;
    for (m, r) in &run.results {
        if let Err(e) = r {
            eprintln!("error: {m} failed: {e}");
            if code == 0 {
                code = exit_code(e);
            }
        }
    }
    Ok(code)
}
