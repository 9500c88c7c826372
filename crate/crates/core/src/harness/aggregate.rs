//! Per-iteration statistics across trials.

use std::fs;
use std::io::{BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::solver::{fmt_f64, read_trace_csv, IterationRecord};

pub const AGGREGATE_HEADER: &str =
    "k,m,n,mean_err_trunc_sq,std_err_trunc_sq,mean_err_full_sq,std_err_full_sq,mean_elapsed_ns";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateRow {
    pub k: usize,
    pub m: usize,
    /// Trials that reached iteration `k`.
    pub n: usize,
    pub mean_err_trunc_sq: f64,
    pub std_err_trunc_sq: f64,
    pub mean_err_full_sq: f64,
    pub std_err_full_sq: f64,
    pub mean_elapsed_ns: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateCurve {
    pub name: String,
    pub rows: Vec<AggregateRow>,
    /// Final `elapsed_ns` of every trial, in trial order.
    pub trial_wall_ns: Vec<u64>,
    /// Trials cut short by the divergence guard.
    pub aborted: usize,
    /// `K + 1`: the record count of a complete trial.
    pub expected_len: usize,
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (mut n, mut sum) = (0usize, 0.0);
    for x in xs.clone() {
        n += 1;
        sum += x;
    }
    let mean = sum / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.map(|x| (x - mean).powi(2)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

impl AggregateCurve {
    /// Sums run in trial order, so the result does not depend on the order
    /// in which trials finished.
    pub fn from_records(name: impl Into<String>, trials: &[Vec<IterationRecord>], expected_len: usize) -> Self {
        let longest = trials.iter().map(Vec::len).max().unwrap_or(0);
        let mut rows = Vec::with_capacity(longest);
        for k in 0..longest {
            let at: Vec<&IterationRecord> = trials.iter().filter_map(|t| t.get(k)).collect();
            let (mt, st) = mean_std(at.iter().map(|r| r.err_trunc_sq));
            let (mf, sf) = mean_std(at.iter().map(|r| r.err_full_sq));
            let (me, _) = mean_std(at.iter().map(|r| r.elapsed_ns as f64));
            rows.push(AggregateRow {
                k: at[0].k,
                m: at[0].m,
                n: at.len(),
                mean_err_trunc_sq: mt,
                std_err_trunc_sq: st,
                mean_err_full_sq: mf,
                std_err_full_sq: sf,
                mean_elapsed_ns: me,
            });
        }
        Self {
            name: name.into(),
            rows,
            trial_wall_ns: trials.iter().map(|t| t.last().map_or(0, |r| r.elapsed_ns)).collect(),
            aborted: trials.iter().filter(|t| t.len() < expected_len).count(),
            expected_len,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{AGGREGATE_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.k,
                r.m,
                r.n,
                fmt_f64(r.mean_err_trunc_sq),
                fmt_f64(r.std_err_trunc_sq),
                fmt_f64(r.mean_err_full_sq),
                fmt_f64(r.std_err_full_sq),
                fmt_f64(r.mean_elapsed_ns)
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }

    /// Recomputes the aggregate from the `trial_*.csv` files in `dir`.
    pub fn rederive(name: impl Into<String>, dir: &Path, expected_len: usize) -> Result<Self> {
        let mut files: Vec<_> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("trial_") && n.ends_with(".csv"))
            })
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::Io(format!("no trial files in {}", dir.display())));
        }
        let trials = files
            .iter()
            .map(|f| read_trace_csv(BufReader::new(fs::File::open(f)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_records(name, &trials, expected_len))
    }

    pub fn mean_trunc(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.mean_err_trunc_sq).collect()
    }

    pub fn final_mean_trunc(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.mean_err_trunc_sq)
    }

    pub fn mean_wall_ns(&self) -> f64 {
        self.trial_wall_ns.iter().map(|&t| t as f64).sum::<f64>() / self.trial_wall_ns.len().max(1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(k: usize, e: f64) -> IterationRecord {
        IterationRecord {
            k,
            m: 5,
            step: 0.1,
            err_trunc_sq: e,
            err_full_sq: 2.0 * e,
            grad_norm: 0.0,
            elapsed_ns: k as u64 * 10,
        }
    }

    #[test]
    fn mean_and_sample_std() {
        let a = vec![rec(0, 1.0), rec(1, 2.0)];
        let b = vec![rec(0, 3.0)];
        let c = AggregateCurve::from_records("x", &[a, b], 2);
        assert_eq!(c.rows.len(), 2);
        assert_eq!(c.rows[0].n, 2);
        assert_eq!(c.rows[0].mean_err_trunc_sq, 2.0);
        assert!((c.rows[0].std_err_trunc_sq - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(c.rows[1].n, 1);
        assert_eq!(c.rows[1].std_err_trunc_sq, 0.0);
        assert_eq!(c.aborted, 1);
        assert_eq!(c.trial_wall_ns, vec![10, 0]);
        assert!(c.to_csv_string().starts_with(AGGREGATE_HEADER));
    }
}
