//! Evaluation metrics: cell-count SMAPE, Matthews correlation and the
//! per-model alignment report.

use crate::error::{Error, Result};

/// Symmetric absolute percentage error between two counts, in `[0, 200]`.
/// `smape(0, 0)` is 0.
pub fn smape(pred: usize, truth: usize) -> f64 {
    let denom = pred as f64 + truth as f64;
    if denom == 0.0 {
        0.0
    } else {
        200.0 * (pred as f64 - truth as f64).abs() / denom
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn from_labels(pred: &[u8], gold: &[u8]) -> Result<Self> {
        if pred.len() != gold.len() {
            return Err(Error::LengthMismatch { expected: gold.len(), got: pred.len() });
        }
        let mut c = Confusion::default();
        for (&p, &g) in pred.iter().zip(gold) {
            match (p != 0, g != 0) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    /// Standard MCC; 0 when any marginal is empty.
    pub fn mcc(&self) -> f64 {
        let (tp, tn, fp, fn_) = (self.tp as f64, self.tn as f64, self.fp as f64, self.fn_ as f64);
        let denom = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
        if denom == 0.0 {
            0.0
        } else {
            (tp * tn - fp * fn_) / denom
        }
    }
}

pub fn mcc(pred: &[u8], gold: &[u8]) -> Result<f64> {
    if gold.is_empty() {
        return Err(Error::EmptyInput("mcc labels"));
    }
    Ok(Confusion::from_labels(pred, gold)?.mcc())
}

/// Nearest-rank percentile of an ascending slice: element `ceil(p/100 * n)`.
pub fn nearest_rank(sorted: &[f64], percentile: f64) -> f64 {
    assert!(!sorted.is_empty());
    let rank = ((percentile / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub const REPORT_PERCENTILES: [u32; 5] = [10, 25, 50, 75, 90];

/// Distribution of per-table cell-count SMAPE.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentReport {
    pub tables: usize,
    pub per_table: Vec<f64>,
    /// Values at [`REPORT_PERCENTILES`].
    pub quantiles: [f64; 5],
    pub max: f64,
    pub perfect_pct: f64,
    pub token_mcc: Option<f64>,
}

impl AlignmentReport {
    pub fn median(&self) -> f64 {
        self.quantiles[2]
    }

    pub fn csv_header() -> &'static str {
        "model,params,p10,p25,p50,p75,p90,max,perfect_pct,mcc"
    }

    pub fn csv_row(&self, model: &str, params: usize) -> String {
        let q = &self.quantiles;
        let mcc = self.token_mcc.map_or(String::new(), |m| format!("{m:.4}"));
        format!(
            "{model},{params},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2},{mcc}",
            q[0], q[1], q[2], q[3], q[4], self.max, self.perfect_pct
        )
    }
}

/// `counts` holds `(predicted cells, true cells)` per table; `labels`
/// optionally carries pooled `(predicted, gold)` token labels.
pub fn eval_alignment(counts: &[(usize, usize)], labels: Option<(&[u8], &[u8])>) -> Result<AlignmentReport> {
    if counts.is_empty() {
        return Err(Error::EmptyInput("alignment results"));
    }
    let per_table: Vec<f64> = counts.iter().map(|&(p, t)| smape(p, t)).collect();
    let mut sorted = per_table.clone();
    sorted.sort_by(f64::total_cmp);
    let quantiles = REPORT_PERCENTILES.map(|p| nearest_rank(&sorted, p as f64));
    let perfect = per_table.iter().filter(|&&s| s == 0.0).count();
    let token_mcc = labels.map(|(p, g)| mcc(p, g)).transpose()?;
    Ok(AlignmentReport {
        tables: counts.len(),
        max: *sorted.last().unwrap(),
        perfect_pct: 100.0 * perfect as f64 / counts.len() as f64,
        per_table,
        quantiles,
        token_mcc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn smape_examples() {
        assert_eq!(smape(10, 10), 0.0);
        assert_eq!(smape(0, 5), 200.0);
        assert!((smape(8, 10) - 200.0 * 2.0 / 18.0).abs() < 1e-12);
        assert_eq!(smape(0, 0), 0.0);
    }

    /// Builds the label vectors for a confusion matrix, then counts them back.
    fn labels_for(tp: usize, tn: usize, fp: usize, fn_: usize) -> (Vec<u8>, Vec<u8>) {
        let mut p = Vec::new();
        let mut g = Vec::new();
        for (n, pv, gv) in [(tp, 1, 1), (tn, 0, 0), (fp, 1, 0), (fn_, 0, 1)] {
            p.extend(std::iter::repeat(pv).take(n));
            g.extend(std::iter::repeat(gv).take(n));
        }
        (p, g)
    }

    #[test]
    fn mcc_examples() {
        let g = [1, 0, 1, 1, 0];
        assert_eq!(mcc(&g, &g).unwrap(), 1.0);
        let inv: Vec<u8> = g.iter().map(|v| 1 - v).collect();
        assert_eq!(mcc(&inv, &g).unwrap(), -1.0);
        let (p, g) = labels_for(4, 3, 2, 1);
        let m = mcc(&p, &g).unwrap();
        assert!((m - 10.0 / 600f64.sqrt()).abs() < 1e-12);
        assert!(mcc(&[1], &[1, 0]).is_err());
        assert!(mcc(&[], &[]).is_err());
        assert_eq!(mcc(&[1, 1], &[1, 1]).unwrap(), 0.0);
    }

    #[test]
    fn report_examples() {
        let r = eval_alignment(&[(5, 5), (3, 3)], None).unwrap();
        assert_eq!(r.quantiles, [0.0; 5]);
        assert_eq!(r.perfect_pct, 100.0);

        let r = eval_alignment(&[(8, 10)], None).unwrap();
        for q in r.quantiles {
            assert!((q - 22.222).abs() < 1e-3);
        }
        assert_eq!(r.perfect_pct, 0.0);
        assert!(eval_alignment(&[], None).is_err());
    }

    #[test]
    fn nearest_rank_small() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(nearest_rank(&v, 10.0), 1.0);
        assert_eq!(nearest_rank(&v, 50.0), 2.0);
        assert_eq!(nearest_rank(&v, 75.0), 3.0);
        assert_eq!(nearest_rank(&v, 90.0), 4.0);
    }

    proptest! {
        #[test]
        fn smape_properties(a in 0usize..500, b in 0usize..500) {
            let s = smape(a, b);
            prop_assert_eq!(s, smape(b, a));
            prop_assert!((0.0..=200.0).contains(&s));
            prop_assert_eq!(s == 0.0, a == b);
        }
    }
}
