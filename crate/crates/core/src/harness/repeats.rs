use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::experiment::{run_experiment, ExperimentOutcome, RunSummary};
use super::{ExperimentConfig, HarnessError};

/// Caps the number of worker threads for repeats and sweeps.
pub const THREADS_ENV: &str = "AQGD_THREADS";

pub fn thread_pool() -> Result<rayon::ThreadPool, HarnessError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| HarnessError::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
        if n == 0 {
            return Err(HarnessError::Config(format!("{THREADS_ENV} must be positive")));
        }
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| HarnessError::Config(e.to_string()))
}

/// Runs `count` copies of `cfg` with seeds `seed, seed+1, …`, in seed order.
pub fn run_repeats(cfg: &ExperimentConfig, count: usize) -> Result<Vec<ExperimentOutcome>, HarnessError> {
    let pool = thread_pool()?;
    pool.install(|| {
        (0..count as u64)
            .into_par_iter()
            .map(|i| {
                run_experiment(&ExperimentConfig {
                    seed: cfg.seed.wrapping_add(i),
                    ..cfg.clone()
                })
            })
            .collect()
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileRow {
    pub t: usize,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

/// Linear interpolation between order statistics.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Per-iteration gap quantiles over equally long runs.
pub fn quantile_rows(gaps: &[Vec<f64>]) -> Vec<QuantileRow> {
    let len = gaps.iter().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .map(|t| {
            let mut col: Vec<f64> = gaps.iter().map(|g| g[t]).collect();
            col.sort_by(f64::total_cmp);
            QuantileRow {
                t,
                min: col[0],
                q25: quantile(&col, 0.25),
                median: quantile(&col, 0.5),
                q75: quantile(&col, 0.75),
                max: col[col.len() - 1],
            }
        })
        .collect()
}

pub fn write_quantiles(path: &Path, rows: &[QuantileRow]) -> Result<(), HarnessError> {
    let mut s = String::from("t,min,q25,median,q75,max\n");
    for r in rows {
        writeln!(
            s,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.t, r.min, r.q25, r.median, r.q75, r.max
        )
        .unwrap();
    }
    fs::write(path, s)?;
    Ok(())
}

/// Cartesian product of the axes, first axis varying slowest.
pub fn grid_points(axes: &[(String, Vec<String>)]) -> Vec<Vec<(String, String)>> {
    axes.iter().fold(vec![Vec::new()], |acc, (key, values)| {
        acc.into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push((key.clone(), v.clone()));
                    p
                })
            })
            .collect()
    })
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub assignments: Vec<(String, String)>,
    pub result: Result<RunSummary, String>,
    pub exit_code: i32,
}

/// Runs `base` at every grid point; a failing point is recorded, not fatal.
pub fn sweep(base: &ExperimentConfig, axes: &[(String, Vec<String>)]) -> Result<Vec<SweepPoint>, HarnessError> {
    let points = grid_points(axes);
    let mut configs = Vec::with_capacity(points.len());
    for p in &points {
        let mut cfg = base.clone();
        for (k, v) in p {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        configs.push(cfg);
    }
    let pool = thread_pool()?;
    Ok(pool.install(|| {
        points
            .into_par_iter()
            .zip(configs)
            .map(|(assignments, cfg)| match run_experiment(&cfg) {
                Ok(out) => SweepPoint {
                    assignments,
                    exit_code: if out.summary.violations == 0 { 0 } else { 2 },
                    result: Ok(out.summary),
                },
                Err(e) => SweepPoint {
                    assignments,
                    exit_code: e.exit_code(),
                    result: Err(e.to_string()),
                },
            })
            .collect()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Algorithm;

    #[test]
    fn quantiles_of_known_columns() {
        let gaps = vec![
            vec![1.0, 5.0],
            vec![2.0, 4.0],
            vec![3.0, 3.0],
            vec![4.0, 2.0],
            vec![5.0, 1.0],
        ];
        let rows = quantile_rows(&gaps);
        assert_eq!(rows.len(), 2);
        assert_eq!(
            (rows[0].min, rows[0].q25, rows[0].median, rows[0].q75, rows[0].max),
            (1.0, 2.0, 3.0, 4.0, 5.0)
        );
        assert_eq!(rows[1].median, 3.0);
    }

    #[test]
    fn grid_is_a_cartesian_product() {
        let axes = vec![
            ("bits".to_string(), vec!["3".into(), "4".into()]),
            ("dim".to_string(), vec!["2".into(), "5".into(), "9".into()]),
        ];
        let g = grid_points(&axes);
        assert_eq!(g.len(), 6);
        assert_eq!(g[0], vec![("bits".into(), "3".into()), ("dim".into(), "2".into())]);
        assert_eq!(g[5], vec![("bits".into(), "4".into()), ("dim".into(), "9".into())]);
    }

    #[test]
    fn sweep_and_repeats_are_deterministic() {
        let base = ExperimentConfig {
            iters: 50,
            dim: 5,
            ..ExperimentConfig::default()
        };
        let axes = vec![("algorithm".to_string(), vec!["aqgd".into(), "gd-unquantized".into()])];
        let a = sweep(&base, &axes).unwrap();
        let b = sweep(&base, &axes).unwrap();
        assert_eq!(a.len(), 2);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.result, y.result);
            assert_eq!(x.exit_code, 0);
        }
        let reps = run_repeats(
            &ExperimentConfig {
                algorithm: Algorithm::GdUnquantized,
                ..base
            },
            3,
        )
        .unwrap();
        assert_eq!(reps.len(), 3);
        assert_eq!(reps[2].config.seed, 2);
    }
}
