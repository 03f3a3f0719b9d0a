//! Per-lead-time NRV transition matrices estimated by pair counting.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binning::BinScheme;
use crate::error::{Error, Result};
use crate::market_data::QuarterSeries;

/// Row-stochasticity tolerance.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Estimated transition probabilities from the bin at `t` to the bin at `t + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    /// Lead time in quarters.
    pub k: usize,
    pub rows: Vec<Vec<f64>>,
    /// Number of counted pairs starting in each bin. Zero marks a row that
    /// was filled with the marginal distribution.
    pub origin_counts: Vec<u64>,
}

impl TransitionMatrix {
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn is_fallback_row(&self, i: usize) -> bool {
        self.origin_counts[i] == 0
    }

    pub fn fallback_rows(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.is_fallback_row(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrixSet {
    pub scheme: BinScheme,
    /// Bin frequencies over the learning set; used for unseen origin bins.
    pub marginal: Vec<f64>,
    pub matrices: Vec<TransitionMatrix>,
}

fn check_lead_times(lead_times: &[usize]) -> Result<()> {
    if lead_times.is_empty() {
        return Err(Error::InvalidArgument("no lead times given".into()));
    }
    if lead_times.contains(&0) {
        return Err(Error::InvalidArgument("lead times must be positive".into()));
    }
    let mut sorted = lead_times.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != lead_times.len() {
        return Err(Error::InvalidArgument("lead times must be distinct".into()));
    }
    Ok(())
}

/// Count bin-to-bin transitions over the whole series for every lead time.
///
/// `p[i][j] = #{t : v(t) in bin i and v(t+k) in bin j} / #{t : v(t) in bin i}`,
/// the normalization that makes each row a conditional distribution. A pair
/// is skipped when any quarter in `[t, t+k]` was forward-filled.
pub fn estimate_transitions(
    series: &QuarterSeries,
    scheme: &BinScheme,
    lead_times: &[usize],
) -> Result<TransitionMatrixSet> {
    check_lead_times(lead_times)?;
    let n = scheme.n_bins();
    let len = series.len();
    let max_k = *lead_times.iter().max().expect("non-empty");
    if len <= max_k {
        return Err(Error::InsufficientData(format!(
            "series of {len} quarters is too short for lead time {max_k}"
        )));
    }

    let bins = series
        .nrv()
        .iter()
        .map(|v| scheme.bin_index(*v))
        .collect::<Result<Vec<usize>>>()?;
    // filled_prefix[i] = number of filled quarters in [0, i)
    let mut filled_prefix = Vec::with_capacity(len + 1);
    filled_prefix.push(0usize);
    for f in series.filled() {
        filled_prefix.push(filled_prefix.last().unwrap() + *f as usize);
    }

    let mut marginal_counts = vec![0u64; n];
    for (b, f) in bins.iter().zip(series.filled()) {
        if !f {
            marginal_counts[*b] += 1;
        }
    }
    let total: u64 = marginal_counts.iter().sum();
    if total == 0 {
        return Err(Error::InsufficientData(
            "every quarter is forward-filled".into(),
        ));
    }
    let marginal: Vec<f64> = marginal_counts
        .iter()
        .map(|c| *c as f64 / total as f64)
        .collect();

    let matrices = lead_times
        .par_iter()
        .map(|&k| {
            let mut counts = vec![vec![0u64; n]; n];
            let mut origin = vec![0u64; n];
            for t in 0..len - k {
                if filled_prefix[t + k + 1] - filled_prefix[t] != 0 {
                    continue;
                }
                counts[bins[t]][bins[t + k]] += 1;
                origin[bins[t]] += 1;
            }
            if origin.iter().all(|c| *c == 0) {
                return Err(Error::InsufficientData(format!(
                    "no valid transition pair for lead time {k}"
                )));
            }
            let rows = counts
                .iter()
                .zip(&origin)
                .map(|(row, &o)| {
                    if o == 0 {
                        marginal.clone()
                    } else {
                        row.iter().map(|c| *c as f64 / o as f64).collect()
                    }
                })
                .collect();
            Ok(TransitionMatrix {
                k,
                rows,
                origin_counts: origin,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(TransitionMatrixSet {
        scheme: scheme.clone(),
        marginal,
        matrices,
    })
}

fn check_stochastic(what: &str, row: &[f64]) -> Result<()> {
    if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidArgument(format!(
            "{what} has entries outside [0,1]"
        )));
    }
    let s: f64 = row.iter().sum();
    if (s - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::InvalidArgument(format!("{what} sums to {s}")));
    }
    Ok(())
}

impl TransitionMatrixSet {
    /// Build from known matrices, e.g. a ground-truth chain. Every row is
    /// treated as observed.
    pub fn from_rows(
        scheme: BinScheme,
        marginal: Vec<f64>,
        rows_per_k: Vec<(usize, Vec<Vec<f64>>)>,
    ) -> Result<Self> {
        let n = scheme.n_bins();
        let ks: Vec<usize> = rows_per_k.iter().map(|(k, _)| *k).collect();
        check_lead_times(&ks)?;
        if marginal.len() != n {
            return Err(Error::InvalidArgument(
                "marginal length differs from bin count".into(),
            ));
        }
        check_stochastic("marginal", &marginal)?;
        let matrices = rows_per_k
            .into_iter()
            .map(|(k, rows)| {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::InvalidArgument(format!(
                        "matrix for k={k} is not {n}x{n}"
                    )));
                }
                for (i, r) in rows.iter().enumerate() {
                    check_stochastic(&format!("row {i} of k={k}"), r)?;
                }
                Ok(TransitionMatrix {
                    k,
                    rows,
                    origin_counts: vec![1; n],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TransitionMatrixSet {
            scheme,
            marginal,
            matrices,
        })
    }

    pub fn lead_times(&self) -> Vec<usize> {
        self.matrices.iter().map(|m| m.k).collect()
    }

    pub fn matrix(&self, k: usize) -> Result<&TransitionMatrix> {
        self.matrices
            .iter()
            .find(|m| m.k == k)
            .ok_or_else(|| Error::InvalidArgument(format!("lead time {k} was not estimated")))
    }

    /// Distribution of the bin at `t + k` given the current NRV.
    pub fn row_for(&self, k: usize, current_nrv: f64) -> Result<&[f64]> {
        let i = self.scheme.bin_index(current_nrv)?;
        Ok(self.matrix(k)?.row(i))
    }

    /// Mean and standard deviation of NRV at `t + k` over the bin centers.
    pub fn nrv_moments(&self, k: usize, current_nrv: f64) -> Result<(f64, f64)> {
        let row = self.row_for(k, current_nrv)?;
        let centers = self.scheme.centers();
        let mean: f64 = row.iter().zip(centers).map(|(p, c)| p * c).sum();
        let var: f64 = row
            .iter()
            .zip(centers)
            .map(|(p, c)| p * (c - mean) * (c - mean))
            .sum();
        Ok((mean, var.max(0.0).sqrt()))
    }

    /// `N x N` matrix as CSV with bin-center labels on the first row and column.
    pub fn export_heatmap(&self, k: usize) -> Result<String> {
        let m = self.matrix(k)?;
        let mut out = String::from("from_mw\\to_mw");
        for c in self.scheme.centers() {
            write!(out, ",{c}").unwrap();
        }
        out.push('\n');
        for (c, row) in self.scheme.centers().iter().zip(&m.rows) {
            write!(out, "{c}").unwrap();
            for p in row {
                write!(out, ",{p}").unwrap();
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::QuarterIndex;

    fn two_bin() -> BinScheme {
        BinScheme::new(vec![0.0], vec![-50.0, 50.0]).unwrap()
    }

    fn series_of(nrv: Vec<f64>) -> QuarterSeries {
        let n = nrv.len();
        QuarterSeries::new(QuarterIndex::new(0), nrv, vec![0.0; n], vec![0.0; n]).unwrap()
    }

    #[test]
    fn hand_counted_example() {
        // bins 1,1,2,1,2 -> transitions 1->1, 1->2, 2->1, 1->2
        let s = series_of(vec![-50.0, -50.0, 50.0, -50.0, 50.0]);
        let tm = estimate_transitions(&s, &two_bin(), &[1]).unwrap();
        let m = tm.matrix(1).unwrap();
        assert_eq!(m.origin_counts, vec![3, 1]);
        assert!((m.rows[0][0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.rows[0][1] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.rows[1], vec![1.0, 0.0]);
    }

    #[test]
    fn constant_series_gives_identity_row_and_marginal_fallback() {
        let s = series_of(vec![50.0; 10]);
        let tm = estimate_transitions(&s, &two_bin(), &[1, 3]).unwrap();
        for k in [1, 3] {
            let m = tm.matrix(k).unwrap();
            assert_eq!(m.rows[1], vec![0.0, 1.0]);
            assert_eq!(m.fallback_rows(), vec![0]);
            assert_eq!(m.rows[0], tm.marginal);
        }
        assert_eq!(tm.marginal, vec![0.0, 1.0]);
    }

    #[test]
    fn filled_quarters_never_contribute() {
        let n = 6;
        let s = QuarterSeries::with_filled(
            QuarterIndex::new(0),
            vec![-50.0, 50.0, 50.0, -50.0, -50.0, 50.0],
            vec![0.0; n],
            vec![0.0; n],
            vec![false, false, true, false, false, false],
        )
        .unwrap();
        let tm = estimate_transitions(&s, &two_bin(), &[1]).unwrap();
        // valid pairs: (0,1), (3,4), (4,5)
        assert_eq!(tm.matrix(1).unwrap().origin_counts, vec![3, 0]);
        assert_eq!(tm.marginal, vec![0.6, 0.4]);
    }

    #[test]
    fn errors() {
        let s = series_of(vec![0.0; 4]);
        assert!(matches!(
            estimate_transitions(&s, &two_bin(), &[4]),
            Err(Error::InsufficientData(_))
        ));
        assert!(matches!(
            estimate_transitions(&s, &two_bin(), &[1, 1]),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            estimate_transitions(&s, &two_bin(), &[0]),
            Err(Error::InvalidArgument(_))
        ));
        let tm = estimate_transitions(&s, &two_bin(), &[1]).unwrap();
        assert!(tm.nrv_moments(2, 0.0).is_err());
    }

    fn moments_oracle(row: &[f64], centers: &[f64]) -> (f64, f64) {
        // E[X], sqrt(E[X^2] - E[X]^2), a different algebraic route.
        let m1: f64 = row.iter().zip(centers).map(|(p, c)| p * c).sum();
        let m2: f64 = row.iter().zip(centers).map(|(p, c)| p * c * c).sum();
        (m1, (m2 - m1 * m1).max(0.0).sqrt())
    }

    #[test]
    fn moment_examples() {
        let scheme = two_bin();
        let set = |row: Vec<f64>| {
            TransitionMatrixSet::from_rows(
                scheme.clone(),
                vec![0.5, 0.5],
                vec![(1, vec![row.clone(), row])],
            )
            .unwrap()
        };
        let (m, s) = set(vec![1.0 / 3.0, 2.0 / 3.0])
            .nrv_moments(1, -10.0)
            .unwrap();
        assert!((m - 16.666_666_666_666_668).abs() < 1e-9);
        assert!((s - 47.140_452_079_103_17).abs() < 1e-9);
        let (o_m, o_s) = moments_oracle(&[1.0 / 3.0, 2.0 / 3.0], scheme.centers());
        assert!((m - o_m).abs() <= 1e-12 * o_m.abs());
        assert!((s - o_s).abs() <= 1e-12 * o_s.abs());

        assert_eq!(
            set(vec![0.0, 1.0]).nrv_moments(1, 5.0).unwrap(),
            (50.0, 0.0)
        );
        assert_eq!(
            set(vec![0.5, 0.5]).nrv_moments(1, 5.0).unwrap(),
            (0.0, 50.0)
        );
    }

    #[test]
    fn heatmap_format() {
        let tm = TransitionMatrixSet::from_rows(
            two_bin(),
            vec![0.5, 0.5],
            vec![(1, vec![vec![1.0, 0.0], vec![0.0, 1.0]])],
        )
        .unwrap();
        let csv = tm.export_heatmap(1).unwrap();
        assert_eq!(csv, "from_mw\\to_mw,-50,50\n-50,1,0\n50,0,1\n");
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().all(|l| l.split(',').count() == 3));
    }

    #[test]
    fn json_round_trip() {
        let s = series_of(vec![-50.0, -50.0, 50.0, -50.0, 50.0, 50.0, -50.0]);
        let tm = estimate_transitions(&s, &two_bin(), &[1, 2]).unwrap();
        let j = tm.to_json().unwrap();
        assert!(j.contains(r#""k":2,"rows":[["#));
        assert_eq!(TransitionMatrixSet::from_json(&j).unwrap(), tm);
    }
}
