//! Every model evaluated on every sample.
//!
//! Row `i` is the model trained on sample `i`; column `j` is the sample it is
//! evaluated on. Entries are relative to the row's own training sample:
//! `(Q_ij - Q_ii) / Q_ii`, so the diagonal is zero and an invalid `Q_ij` gives
//! `+inf`. The entropy table does the same with the likelihood term alone.

use std::fmt::Write as _;

use bitfit_core::{q_total_with_precision, repair_delta_m, Dataset, FitResult, VariationMode};
use serde::Serialize;

use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossTable {
    pub models: Vec<String>,
    pub samples: Vec<String>,
    /// `[train][test]`
    pub q: Vec<Vec<f64>>,
    pub q_l: Vec<Vec<f64>>,
    pub rel_q: Vec<Vec<f64>>,
    pub rel_entropy: Vec<Vec<f64>>,
}

fn relative(row: &[f64], i: usize) -> Vec<f64> {
    row.iter()
        .enumerate()
        .map(|(j, v)| {
            if j == i {
                0.0
            } else if v.is_finite() {
                (v - row[i]) / row[i]
            } else {
                f64::INFINITY
            }
        })
        .collect()
}

/// Evaluates fit `i` on every sample; fit `i` must have been trained on
/// sample `i`.
pub fn crosstab(
    fits: &[FitResult],
    samples: &[Dataset],
    mode: VariationMode,
    delta_x: f64,
) -> Result<CrossTable, Error> {
    if fits.len() != samples.len() {
        return Err(Error::Usage(format!(
            "{} models for {} samples; need one model per sample",
            fits.len(),
            samples.len()
        )));
    }
    let n = fits.len();
    let mut q = vec![vec![0.0; n]; n];
    let mut q_l = vec![vec![0.0; n]; n];
    for (i, f) in fits.iter().enumerate() {
        for (j, s) in samples.iter().enumerate() {
            let b = q_total_with_precision(s, &f.params, &f.delta_m, mode, delta_x)?;
            q[i][j] = b.q_total;
            q_l[i][j] = b.q_l;
        }
    }
    let rel_q = (0..n).map(|i| relative(&q[i], i)).collect();
    let rel_entropy = (0..n).map(|i| relative(&q_l[i], i)).collect();
    Ok(CrossTable {
        models: (0..n).map(|i| format!("m{i}")).collect(),
        samples: (0..n).map(|i| format!("s{i}")).collect(),
        q,
        q_l,
        rel_q,
        rel_entropy,
    })
}

/// A cell whose `Q` was invalid, after shrinking the model's ranges for that sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepairedCell {
    pub train: usize,
    pub test: usize,
    pub scale: f64,
    /// Relative `Q` on the test sample with the repaired ranges.
    pub rel_q: f64,
    /// Relative change of the model's own-sample `Q` caused by the repair.
    pub own_sample_change: f64,
}

pub fn repair_cells(
    table: &CrossTable,
    fits: &[FitResult],
    samples: &[Dataset],
    mode: VariationMode,
) -> Result<Vec<RepairedCell>, Error> {
    let mut out = Vec::new();
    for (i, row) in table.rel_q.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if v.is_finite() {
                continue;
            }
            let f = &fits[i];
            let r = repair_delta_m(&samples[j], &f.params, &f.delta_m, mode)?;
            let own = bitfit_core::q_total(&samples[i], &f.params, &r.delta_m, mode)?;
            let base = table.q[i][i];
            out.push(RepairedCell {
                train: i,
                test: j,
                scale: r.scale,
                rel_q: (r.q.q_total - base) / base,
                own_sample_change: (own.q_total - base) / base,
            });
        }
    }
    Ok(out)
}

fn percent(v: f64) -> String {
    if v.is_finite() {
        format!("{:.1}%", 100.0 * v)
    } else {
        "inf".into()
    }
}

impl CrossTable {
    pub fn off_diagonal(&self, m: &[Vec<f64>]) -> Vec<f64> {
        let mut v = Vec::new();
        for (i, row) in m.iter().enumerate() {
            for (j, x) in row.iter().enumerate() {
                if i != j {
                    v.push(*x);
                }
            }
        }
        v
    }

    /// Both tables as aligned percentage columns.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (title, m) in [("relative Q", &self.rel_q), ("relative entropy", &self.rel_entropy)] {
            let _ = writeln!(s, "# {title} (row: training sample, column: test sample)");
            let _ = write!(s, "{:>6}", "");
            for name in &self.samples {
                let _ = write!(s, "{name:>9}");
            }
            s.push('\n');
            for (name, row) in self.models.iter().zip(m) {
                let _ = write!(s, "{name:>6}");
                for v in row {
                    let _ = write!(s, "{:>9}", percent(*v));
                }
                s.push('\n');
            }
            s.push('\n');
        }
        s
    }

    /// One line per cell: `train,test,q,q_l,rel_q,rel_entropy`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("train,test,q,q_l,rel_q,rel_entropy\n");
        for i in 0..self.models.len() {
            for j in 0..self.samples.len() {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    self.models[i],
                    self.samples[j],
                    self.q[i][j],
                    self.q_l[i][j],
                    self.rel_q[i][j],
                    self.rel_entropy[i][j]
                );
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_row_has_exact_zero_diagonal_and_inf() {
        let r = relative(&[10.0, 11.0, f64::INFINITY], 0);
        assert_eq!(r[0], 0.0);
        assert!((r[1] - 0.1).abs() < 1e-15);
        assert_eq!(r[2], f64::INFINITY);
        assert_eq!(percent(r[2]), "inf");
        assert_eq!(percent(0.123), "12.3%");
    }
}
