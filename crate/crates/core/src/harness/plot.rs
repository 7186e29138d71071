use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::HarnessError;
use crate::optimize::RunTrace;

/// Renders every `*.dat` passed to it as a log-scale gap curve.
pub const GNUPLOT_SCRIPT: &str = "\
# usage: gnuplot -e \"files='a.dat b.dat'\" plot.gp
set terminal pngcairo size 900,600
set output 'gap.png'
set logscale y
set xlabel 'iteration'
set ylabel 'f(x_t) - f*'
set key outside
plot for [f in files] f using 1:2 with lines title f
";

fn data(trace: &RunTrace) -> String {
    let mut s = String::from("# t f_gap\n");
    for r in &trace.records {
        writeln!(s, "{} {:.16e}", r.t, r.f_gap).unwrap();
    }
    s
}

/// Writes `<stem>.dat` (two columns, `t gap`) per trace plus `plot.gp` in `dir`.
pub fn write_plot_files(dir: &Path, traces: &[(String, &RunTrace)]) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::with_capacity(traces.len() + 1);
    for (stem, trace) in traces {
        let path = dir.join(format!("{stem}.dat"));
        fs::write(&path, data(trace))?;
        written.push(path);
    }
    let script = dir.join("plot.gp");
    fs::write(&script, GNUPLOT_SCRIPT)?;
    written.push(script);
    Ok(written)
}
