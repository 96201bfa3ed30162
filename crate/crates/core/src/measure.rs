//! Weighted-atom and histogram estimates of Radon measures on `(0, ∞)`.

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateTag {
    Empirical,
    SemiAnalytic,
    ClosedForm,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub weight: f64,
    pub se: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Atom {
    pub location: f64,
    pub weight: f64,
    pub se: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MomentValue {
    pub p: f64,
    pub value: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeasureEstimate {
    pub bins: Vec<Bin>,
    pub atoms: Vec<Atom>,
    pub moments: Vec<MomentValue>,
    pub tag: EstimateTag,
}

impl MeasureEstimate {
    pub fn empty(tag: EstimateTag) -> Self {
        Self {
            bins: Vec::new(),
            atoms: Vec::new(),
            moments: Vec::new(),
            tag,
        }
    }

    pub fn total_weight(&self) -> f64 {
        self.bins.iter().map(|b| b.weight).sum::<f64>() + self.atoms.iter().map(|a| a.weight).sum::<f64>()
    }

    pub fn moment(&self, p: f64) -> Option<MomentValue> {
        self.moments.iter().copied().find(|m| m.p == p)
    }
}

/// Compensated (Neumaier) sum.
pub fn exact_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Histogram counts of `masses` over consecutive `edges` (half-open bins).
pub fn histogram(masses: &[f64], edges: &[f64]) -> Vec<f64> {
    let mut counts = vec![0.0; edges.len().saturating_sub(1)];
    for &m in masses {
        if let Some(i) = bin_index(edges, m) {
            counts[i] += 1.0;
        }
    }
    counts
}

pub fn bin_index(edges: &[f64], x: f64) -> Option<usize> {
    if edges.len() < 2 || x < edges[0] || x >= edges[edges.len() - 1] {
        return None;
    }
    Some(edges.partition_point(|&e| e <= x) - 1)
}

/// `n + 1` log-spaced edges from `lo` to `hi`.
pub fn log_edges(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..=n).map(|i| (a + (b - a) * i as f64 / n as f64).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let xs = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(exact_sum(xs), 2.0);
    }

    #[test]
    fn histogram_half_open() {
        let edges = [0.0, 1.0, 2.0];
        assert_eq!(histogram(&[0.0, 0.5, 1.0, 1.99, 2.0], &edges), vec![2.0, 2.0]);
    }
}
