//! Edge-recovery scores, precision RMSE and label-aligned state accuracy.

use nalgebra::DMatrix;
use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EdgeConfusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl EdgeConfusion {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Scores with `None` where a denominator vanishes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub acc: Option<f64>,
    pub sens: Option<f64>,
    pub spec: Option<f64>,
    pub f1: Option<f64>,
    pub mcc: Option<f64>,
}

fn check_square_pair(a: &DMatrix<bool>, b: &DMatrix<bool>) -> Result<usize> {
    if !a.is_square() || a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!(
            "adjacency shapes {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(a.nrows())
}

/// Counts over the strict upper triangle.
pub fn confusion(truth: &DMatrix<bool>, est: &DMatrix<bool>) -> Result<EdgeConfusion> {
    let d = check_square_pair(truth, est)?;
    let mut c = EdgeConfusion::default();
    for i in 0..d {
        for l in (i + 1)..d {
            match (truth[(i, l)], est[(i, l)]) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
            }
        }
    }
    Ok(c)
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

pub fn scores(c: &EdgeConfusion) -> Scores {
    let (tp, tn, fp, fn_) = (c.tp as f64, c.tn as f64, c.fp as f64, c.fn_ as f64);
    let sens = ratio(tp, tp + fn_);
    // F1 is reported only when the truth has edges to recover
    let f1 = if c.tp + c.fn_ == 0 {
        None
    } else {
        ratio(2.0 * tp, 2.0 * tp + fp + fn_)
    };
    let mcc_den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    Scores {
        acc: ratio(tp + tn, tp + tn + fp + fn_),
        sens,
        spec: ratio(tn, tn + fp),
        f1,
        mcc: ratio(tp * tn - fp * fn_, mcc_den),
    }
}

/// `sqrt((1/D) Σ_{i<l} (ω_il − ω̂_il)²)`.
pub fn rmse_offdiag(truth: &DMatrix<f64>, est: &DMatrix<f64>) -> Result<f64> {
    if !truth.is_square() || truth.shape() != est.shape() {
        return Err(Error::DimensionMismatch(format!(
            "precision shapes {:?} and {:?}",
            truth.shape(),
            est.shape()
        )));
    }
    let d = truth.nrows();
    let mut ss = 0.0;
    for i in 0..d {
        for l in (i + 1)..d {
            let e = truth[(i, l)] - est[(i, l)];
            ss += e * e;
        }
    }
    Ok((ss / d as f64).sqrt())
}

/// Assignment maximizing `Σ_r weights[r][assign[r]]` over a square matrix.
pub fn max_weight_assignment(weights: &[Vec<i64>]) -> (i64, Vec<usize>) {
    let n = weights.len();
    if n == 0 {
        return (0, Vec::new());
    }
    let m = Matrix::from_rows(weights.iter().cloned()).expect("square weight matrix");
    kuhn_munkres(&m)
}

/// Fraction of agreeing labels after the best relabeling of `est`.
pub fn state_accuracy(truth: &[usize], est: &[usize]) -> Result<f64> {
    if truth.len() != est.len() {
        return Err(Error::LengthMismatch {
            left: truth.len(),
            right: est.len(),
        });
    }
    if truth.is_empty() {
        return Ok(1.0);
    }
    let k = truth.iter().chain(est).max().map_or(0, |&x| x + 1);
    let mut counts = vec![vec![0i64; k]; k];
    for (&a, &b) in truth.iter().zip(est) {
        counts[a][b] += 1;
    }
    let (matched, _) = max_weight_assignment(&counts);
    Ok(matched as f64 / truth.len() as f64)
}

/// `mean (sd)` cell with three decimals and trailing zeros trimmed;
/// a hyphen when no replicate defines the score.
pub fn format_mean_sd(values: &[Option<f64>]) -> String {
    let xs: Vec<f64> = values.iter().flatten().copied().collect();
    if xs.is_empty() {
        return "-".to_string();
    }
    let m = crate::numerics::stats::mean(&xs);
    let sd = if xs.len() > 1 {
        crate::numerics::stats::std_dev(&xs)
    } else {
        0.0
    };
    format!("{} ({})", trim3(m), trim3(sd))
}

fn trim3(x: f64) -> String {
    let s = format!("{x:.3}");
    let s = s.trim_end_matches('0');
    let s = if s.ends_with('.') { format!("{s}0") } else { s.to_string() };
    if s == "-0.0" {
        "0.0".to_string()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn adj(d: usize, edges: &[(usize, usize)]) -> DMatrix<bool> {
        let mut a = DMatrix::from_element(d, d, false);
        for &(i, l) in edges {
            a[(i, l)] = true;
            a[(l, i)] = true;
        }
        a
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn identical_adjacency() {
        let a = adj(5, &[(0, 1), (1, 2), (3, 4)]);
        let c = confusion(&a, &a).unwrap();
        assert_eq!(c, EdgeConfusion { tp: 3, tn: 7, fp: 0, fn_: 0 });
        let s = scores(&c);
        assert_eq!((s.acc, s.sens, s.spec, s.f1, s.mcc), (Some(1.0), Some(1.0), Some(1.0), Some(1.0), Some(1.0)));
    }

    #[test]
    fn empty_estimate_misses_everything() {
        let a = adj(5, &[(0, 1), (2, 4)]);
        let c = confusion(&a, &adj(5, &[])).unwrap();
        assert_eq!(c.fn_, 2);
        assert_eq!(c.tp, 0);
    }

    #[test]
    fn complement_swaps_counts() {
        let a = adj(4, &[(0, 1), (2, 3)]);
        let b = adj(4, &[(0, 2), (0, 1)]);
        let mut comp = b.map(|x| !x);
        for i in 0..4 {
            comp[(i, i)] = false;
        }
        let c = confusion(&a, &b).unwrap();
        let cc = confusion(&a, &comp).unwrap();
        assert_eq!((c.tp, c.fn_, c.tn, c.fp), (cc.fn_, cc.tp, cc.fp, cc.tn));
    }

    #[test]
    fn empty_truth_scores() {
        let e = adj(4, &[]);
        let s = scores(&confusion(&e, &e).unwrap());
        assert_eq!(s.acc, Some(1.0));
        assert_eq!(s.spec, Some(1.0));
        assert_eq!((s.sens, s.f1, s.mcc), (None, None, None));
    }

    #[test]
    fn balanced_counts() {
        let s = scores(&EdgeConfusion { tp: 1, tn: 1, fp: 1, fn_: 1 });
        assert_eq!(s.mcc, Some(0.0));
        assert_eq!(s.f1, Some(0.5));
        assert_eq!(s.acc, Some(0.5));
    }

    #[test]
    fn rmse_cases() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]);
        assert_eq!(rmse_offdiag(&a, &a).unwrap(), 0.0);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 1.0]);
        assert!((rmse_offdiag(&a, &b).unwrap() - (0.04f64 / 2.0).sqrt()).abs() < 1e-15);
        let c = DMatrix::from_row_slice(2, 2, &[1.0, -0.1, -0.1, 1.0]);
        assert!((rmse_offdiag(&a, &c).unwrap() - 2.0 * rmse_offdiag(&a, &b).unwrap()).abs() < 1e-15);
        assert!(rmse_offdiag(&a, &DMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn accuracy_cases() {
        let g = vec![0, 0, 1, 2, 2, 1];
        assert_eq!(state_accuracy(&g, &g).unwrap(), 1.0);
        let swapped: Vec<usize> = g.iter().map(|&x| [2, 0, 1][x]).collect();
        assert_eq!(state_accuracy(&g, &swapped).unwrap(), 1.0);
        assert!(matches!(state_accuracy(&g, &g[1..]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn accuracy_beats_brute_force_never() {
        let mut rng = crate::numerics::RngStream::new(5, 0);
        use rand::Rng;
        for _ in 0..200 {
            let a: Vec<usize> = (0..30).map(|_| rng.random_range(0..3)).collect();
            let b: Vec<usize> = (0..30).map(|_| rng.random_range(0..3)).collect();
            let best = permutations(3)
                .iter()
                .map(|p| a.iter().zip(&b).filter(|(&x, &y)| p[y] == x).count())
                .max()
                .unwrap() as f64
                / 30.0;
            let raw = a.iter().zip(&b).filter(|(x, y)| x == y).count() as f64 / 30.0;
            let acc = state_accuracy(&a, &b).unwrap();
            assert_eq!(acc, best);
            assert!(acc >= raw);
        }
    }

    #[test]
    fn table_cells() {
        assert_eq!(format_mean_sd(&[Some(1.0), Some(1.0)]), "1.0 (0.0)");
        assert_eq!(format_mean_sd(&[Some(0.998), Some(0.998)]), "0.998 (0.0)");
        assert_eq!(format_mean_sd(&[None, None]), "-");
        assert_eq!(format_mean_sd(&[Some(0.5), Some(0.7)]), "0.6 (0.141)");
    }

    proptest! {
        #[test]
        fn self_accuracy_one(edges in proptest::collection::vec((0usize..6, 0usize..6), 0..10)) {
            let e: Vec<(usize, usize)> = edges.into_iter().filter(|(a, b)| a != b).collect();
            let a = adj(6, &e);
            prop_assert_eq!(scores(&confusion(&a, &a).unwrap()).acc, Some(1.0));
        }

        #[test]
        fn bounded_scores(tp in 0usize..20, tn in 0usize..20, fp in 0usize..20, fn_ in 0usize..20) {
            let s = scores(&EdgeConfusion { tp, tn, fp, fn_ });
            if let Some(m) = s.mcc { prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&m)); }
            if let Some(f) = s.f1 { prop_assert!((0.0..=1.0).contains(&f)); }
        }

        #[test]
        fn rmse_symmetric(v in proptest::collection::vec(-2.0f64..2.0, 18)) {
            let a = DMatrix::from_row_slice(3, 3, &v[..9]);
            let b = DMatrix::from_row_slice(3, 3, &v[9..]);
            prop_assert_eq!(rmse_offdiag(&a, &b).unwrap(), rmse_offdiag(&b, &a).unwrap());
        }
    }
}
