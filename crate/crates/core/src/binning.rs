//! NRV discretization into bins with representative centers.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bins are half-open `[lo, hi)`; the first is `(-inf, edges[0])` and the
/// last `[edges[N-2], +inf)`. `centers[i]` is the NRV value standing for bin
/// `i` (0-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScheme", into = "RawScheme")]
pub struct BinScheme {
    edges: Vec<f64>,
    centers: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawScheme {
    edges: Vec<f64>,
    centers: Vec<f64>,
}

impl TryFrom<RawScheme> for BinScheme {
    type Error = Error;
    fn try_from(raw: RawScheme) -> Result<Self> {
        BinScheme::new(raw.edges, raw.centers)
    }
}

impl From<BinScheme> for RawScheme {
    fn from(s: BinScheme) -> Self {
        RawScheme {
            edges: s.edges,
            centers: s.centers,
        }
    }
}

impl BinScheme {
    pub fn new(edges: Vec<f64>, centers: Vec<f64>) -> Result<Self> {
        if centers.len() != edges.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "{} edges need {} centers, got {}",
                edges.len(),
                edges.len() + 1,
                centers.len()
            )));
        }
        if edges.iter().chain(&centers).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "bin edges and centers must be finite".into(),
            ));
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "bin edges must be strictly increasing".into(),
            ));
        }
        let scheme = BinScheme { edges, centers };
        for (i, c) in scheme.centers.iter().enumerate() {
            if scheme.bin_index(*c)? != i {
                return Err(Error::InvalidArgument(format!(
                    "center {c} does not lie in bin {i}"
                )));
            }
        }
        Ok(scheme)
    }

    /// 22 bins aligned with the ARC activation ranges: edges every 100 MW
    /// from -1000 to 1000, interior centers at range midpoints and tail
    /// centers one range-width beyond the last finite edge (±1100 MW).
    pub fn default_scheme() -> Self {
        let edges: Vec<f64> = (-10..=10).map(|e| e as f64 * 100.0).collect();
        let mut centers = vec![-1100.0];
        centers.extend(edges.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        centers.push(1100.0);
        BinScheme::new(edges, centers).expect("default scheme is valid")
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    pub fn n_bins(&self) -> usize {
        self.centers.len()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn center(&self, i: usize) -> f64 {
        self.centers[i]
    }

    /// 0-based bin containing `v`.
    pub fn bin_index(&self, v: f64) -> Result<usize> {
        if !v.is_finite() {
            return Err(Error::Value(format!("cannot bin non-finite NRV {v}")));
        }
        Ok(self.edges.partition_point(|e| *e <= v))
    }

    /// `[lo, hi)` bounds of bin `i`, infinite at the tails.
    pub fn bounds(&self, i: usize) -> (f64, f64) {
        let lo = if i == 0 {
            f64::NEG_INFINITY
        } else {
            self.edges[i - 1]
        };
        let hi = self.edges.get(i).copied().unwrap_or(f64::INFINITY);
        (lo, hi)
    }
}

impl Default for BinScheme {
    fn default() -> Self {
        Self::default_scheme()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force_bin(s: &BinScheme, v: f64) -> Vec<usize> {
        (0..s.n_bins())
            .filter(|&i| {
                let (lo, hi) = s.bounds(i);
                lo <= v && v < hi
            })
            .collect()
    }

    #[test]
    fn default_layout() {
        let s = BinScheme::default_scheme();
        assert_eq!(s.n_bins(), 22);
        assert_eq!(s.edges().len(), 21);
        let i = s.bin_index(0.0).unwrap();
        assert_eq!(s.bounds(i), (0.0, 100.0));
        assert_eq!(s.center(i), 50.0);
        assert_eq!(s.center(0), -1100.0);
        assert_eq!(s.center(21), 1100.0);
        assert_eq!(s.bounds(0).1, -1000.0);
    }

    #[test]
    fn boundary_values() {
        let s = BinScheme::default_scheme();
        assert_eq!(s.bin_index(-1200.0).unwrap(), 0);
        assert_eq!(s.bounds(s.bin_index(99.999).unwrap()), (0.0, 100.0));
        assert_eq!(s.bounds(s.bin_index(100.0).unwrap()), (100.0, 200.0));
        for e in s.edges() {
            assert_eq!(brute_force_bin(&s, *e), vec![s.bin_index(*e).unwrap()]);
        }
        assert!(matches!(s.bin_index(f64::NAN), Err(Error::Value(_))));
        assert!(matches!(s.bin_index(f64::INFINITY), Err(Error::Value(_))));
    }

    #[test]
    fn centers_map_to_their_bins() {
        let s = BinScheme::default_scheme();
        for i in 0..s.n_bins() {
            assert_eq!(s.bin_index(s.center(i)).unwrap(), i);
        }
    }

    #[test]
    fn invalid_schemes() {
        assert!(BinScheme::new(vec![0.0, 0.0], vec![-1.0, 0.0, 1.0]).is_err());
        assert!(BinScheme::new(vec![0.0], vec![1.0]).is_err());
        assert!(BinScheme::new(vec![0.0], vec![1.0, 2.0]).is_err());
        assert!(BinScheme::new(vec![], vec![3.0]).is_ok());
    }

    #[test]
    fn json_form() {
        let s = BinScheme::new(vec![0.0], vec![-50.0, 50.0]).unwrap();
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(j, r#"{"edges":[0.0],"centers":[-50.0,50.0]}"#);
        let back: BinScheme = serde_json::from_str(&j).unwrap();
        assert_eq!(back, s);
        assert!(
            serde_json::from_str::<BinScheme>(r#"{"edges":[1,0],"centers":[0,0.5,2]}"#).is_err()
        );
    }

    proptest! {
        #[test]
        fn exactly_one_bin_matches(v in -3000.0f64..3000.0, snap in any::<bool>()) {
            let s = BinScheme::default_scheme();
            let v = if snap { (v / 100.0).round() * 100.0 } else { v };
            prop_assert_eq!(brute_force_bin(&s, v), vec![s.bin_index(v).unwrap()]);
        }
    }
}
