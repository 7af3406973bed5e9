use rand::Rng;

use crate::data::Dataset;
use crate::numerics::RngStream;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centers: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub within_ss: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus_seed(rng: &mut RngStream, rows: &[Vec<f64>], k: usize) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut centers = vec![rows[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = rows.iter().map(|r| sq_dist(r, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let u = rng.open01() * total;
            let mut acc = 0.0;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if u < acc {
                    idx = i;
                    break;
                }
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centers.push(rows[pick].clone());
        for (i, r) in rows.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, &centers[centers.len() - 1]));
        }
    }
    centers
}

fn lloyd(rows: &[Vec<f64>], mut centers: Vec<Vec<f64>>, max_iter: usize) -> KMeans {
    let k = centers.len();
    let d = rows[0].len();
    let mut labels = vec![usize::MAX; rows.len()];
    for _ in 0..max_iter {
        let mut changed = false;
        for (i, r) in rows.iter().enumerate() {
            let (j, _) = nearest(r, &centers);
            if labels[i] != j {
                labels[i] = j;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (r, &l) in rows.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(r) {
                *s += x;
            }
        }
        for j in 0..k {
            // an emptied cluster keeps its previous center
            if counts[j] > 0 {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
    }
    let within_ss = rows.iter().zip(&labels).map(|(r, &l)| sq_dist(r, &centers[l])).sum();
    KMeans {
        centers,
        labels,
        within_ss,
    }
}

/// k-means with k-means++ seeding, keeping the best of `restarts` runs.
pub fn kmeans(rng: &mut RngStream, data: &Dataset, k: usize, restarts: usize, max_iter: usize) -> KMeans {
    let rows = data.rows();
    let mut best: Option<KMeans> = None;
    for _ in 0..restarts.max(1) {
        let seeds = plus_plus_seed(rng, &rows, k);
        let fit = lloyd(&rows, seeds, max_iter);
        if best.as_ref().is_none_or(|b| fit.within_ss < b.within_ss) {
            best = Some(fit);
        }
    }
    best.expect("at least one restart")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_clear_clusters() {
        let mut rows = Vec::new();
        for i in 0..50 {
            let e = (i % 5) as f64 * 0.01;
            rows.push(vec![e, e]);
            rows.push(vec![10.0 + e, 10.0 - e]);
            rows.push(vec![-10.0 + e, 5.0]);
        }
        let data = Dataset::from_rows(&rows).unwrap();
        let fit = kmeans(&mut RngStream::new(1, 0), &data, 3, 10, 100);
        for c in 0..3 {
            let ls: Vec<usize> = fit.labels.iter().skip(c).step_by(3).copied().collect();
            assert!(ls.iter().all(|&l| l == ls[0]));
        }
        assert!(fit.within_ss < 1.0);
    }
}
