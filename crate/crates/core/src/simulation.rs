//! Synthetic regime-switching data: structured precision matrices, state
//! means, DAR state sequences and Gaussian emissions.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::numerics::{mvn_sample, RngStream, SymMatrix};
use crate::sampler::dists::std_normal;

const RANDOM_GRAPH_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GraphKind {
    Identity,
    Star,
    Hub,
    Ar2,
    Random,
}

impl GraphKind {
    pub const ALL: [GraphKind; 5] = [Self::Identity, Self::Star, Self::Hub, Self::Ar2, Self::Random];

    pub fn name(self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Star => "star",
            Self::Hub => "hub",
            Self::Ar2 => "ar2",
            Self::Random => "random",
        }
    }
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GraphKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid("graph_kinds", format!("unknown graph kind `{s}`")))
    }
}

/// Precision matrix with unit diagonal for the given structure. Hub blocks
/// carry `+2/√D` within each block.
pub fn make_graph(kind: GraphKind, d: usize, hub_blocks: usize, rng: &mut RngStream) -> Result<SymMatrix> {
    if d == 0 {
        return Err(invalid("D", "must be positive"));
    }
    let mut w = DMatrix::<f64>::identity(d, d);
    match kind {
        GraphKind::Identity => {}
        GraphKind::Star => {
            for l in 1..d {
                w[(0, l)] = -1.0 / d as f64;
                w[(l, 0)] = -1.0 / d as f64;
            }
        }
        GraphKind::Hub => {
            if hub_blocks == 0 || d % hub_blocks != 0 {
                return Err(invalid("hub_blocks", format!("{hub_blocks} does not divide D = {d}")));
            }
            let size = d / hub_blocks;
            let a = 2.0 / (d as f64).sqrt();
            for i in 0..d {
                for l in 0..d {
                    if i != l && i / size == l / size {
                        w[(i, l)] = a;
                    }
                }
            }
        }
        GraphKind::Ar2 => {
            for i in 0..d {
                if i + 1 < d {
                    w[(i, i + 1)] = 0.5;
                    w[(i + 1, i)] = 0.5;
                }
                if i + 2 < d {
                    w[(i, i + 2)] = 0.25;
                    w[(i + 2, i)] = 0.25;
                }
            }
        }
        GraphKind::Random => return random_graph(d, rng),
    }
    let out = SymMatrix::new(w)?;
    if !out.is_positive_definite() {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(out)
}

/// Upper-triangle positions `(i, l)` with `i < l` chosen for a random graph.
pub fn random_graph_positions(d: usize, rng: &mut RngStream) -> Vec<(usize, usize)> {
    let mut all: Vec<(usize, usize)> = (0..d).flat_map(|i| ((i + 1)..d).map(move |l| (i, l))).collect();
    all.shuffle(rng);
    all.truncate((3 * d / 2).min(all.len()));
    all.sort_unstable();
    all
}

fn random_graph(d: usize, rng: &mut RngStream) -> Result<SymMatrix> {
    if d < 5 {
        return Err(invalid("D", "random graphs need D >= 5"));
    }
    for _ in 0..RANDOM_GRAPH_ATTEMPTS {
        let mut a = DMatrix::<f64>::zeros(d, d);
        for (i, l) in random_graph_positions(d, rng) {
            let mag = rng.random_range(0.4..=1.0);
            let v = if rng.random_bool(0.5) { mag } else { -mag };
            a[(i, l)] = v;
            a[(l, i)] = v;
        }
        // divide each row by the absolute sum of its off-diagonal entries
        for i in 0..d {
            let s: f64 = a.row(i).iter().map(|x| x.abs()).sum();
            if s > 0.0 {
                a.row_mut(i).iter_mut().for_each(|x| *x /= s);
            }
        }
        let mut w = (&a + a.transpose()) * 0.5;
        w.fill_diagonal(1.0);
        let out = SymMatrix::new(w)?;
        if out.is_positive_definite() {
            return Ok(out);
        }
    }
    Err(Error::NotPositiveDefinite)
}

/// `(−5/D, …, 5/D)` as a length-`D` linear grid.
pub fn mean_template(d: usize) -> Vec<f64> {
    let df = d as f64;
    if d == 1 {
        return vec![0.0];
    }
    (0..d).map(|i| -5.0 / df + 10.0 / df * i as f64 / (df - 1.0)).collect()
}

/// One mean per state: a freshly shuffled template plus standard normal noise.
pub fn make_means(m: usize, d: usize, rng: &mut RngStream, zero_means: bool) -> Vec<DVector<f64>> {
    if zero_means {
        return vec![DVector::zeros(d); m];
    }
    let template = mean_template(d);
    (0..m)
        .map(|_| {
            let mut b = template.clone();
            b.shuffle(rng);
            DVector::from_iterator(d, b.into_iter().map(|x| x + std_normal(rng)))
        })
        .collect()
}

fn draw_categorical(rng: &mut RngStream, p: &[f64]) -> usize {
    let u: f64 = rng.random::<f64>();
    let mut acc = 0.0;
    for (j, &pj) in p.iter().enumerate() {
        acc += pj;
        if u < acc {
            return j;
        }
    }
    // rounding: last index with positive mass
    p.iter().rposition(|&x| x > 0.0).unwrap_or(0)
}

/// First `P` states i.i.d. from π, then innovate with probability φ₀ or copy
/// the state `k` steps back with probability φ_k.
pub fn simulate_dar_sequence(t_len: usize, phi: &[f64], pi: &[f64], rng: &mut RngStream) -> Result<Vec<usize>> {
    check_simplex(phi, "phi")?;
    check_simplex(pi, "pi")?;
    let p = phi.len() - 1;
    let mut g = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let s = if t < p {
            draw_categorical(rng, pi)
        } else {
            match draw_categorical(rng, phi) {
                0 => draw_categorical(rng, pi),
                k => g[t - k],
            }
        };
        g.push(s);
    }
    Ok(g)
}

fn check_simplex(p: &[f64], field: &str) -> Result<()> {
    if p.is_empty() || p.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(invalid(field, "entries must be finite and nonnegative"));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(invalid(field, format!("entries sum to {s}, not 1")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub d: usize,
    pub t: usize,
    pub m: usize,
    pub p: usize,
    pub phi: Vec<f64>,
    pub pi: Vec<f64>,
    pub graph_kinds: Vec<GraphKind>,
    pub hub_blocks: usize,
    pub seed: u64,
    pub scale_to_unit_sd: bool,
    pub zero_means: bool,
}

impl SimConfig {
    /// Five regimes, D = 15, T = 2000, order two.
    pub fn five_state_study(seed: u64) -> Self {
        Self {
            d: 15,
            t: 2000,
            m: 5,
            p: 2,
            phi: vec![0.1, 0.75, 0.15],
            pi: vec![0.6, 0.1, 0.1, 0.1, 0.1],
            graph_kinds: GraphKind::ALL.to_vec(),
            hub_blocks: 5,
            seed,
            scale_to_unit_sd: true,
            zero_means: false,
        }
    }

    /// Three regimes (identity, hub, random) for the sample-size study.
    pub fn sample_size_study(t: usize, seed: u64) -> Self {
        Self {
            t,
            m: 3,
            phi: vec![0.2, 0.5, 0.3],
            pi: vec![0.5, 0.3, 0.2],
            graph_kinds: vec![GraphKind::Identity, GraphKind::Hub, GraphKind::Random],
            ..Self::five_state_study(seed)
        }
    }

    /// Three regimes (identity, hub with four blocks, random) in higher
    /// dimension.
    pub fn high_dim_study(d: usize, t: usize, seed: u64) -> Self {
        Self {
            d,
            t,
            m: 3,
            pi: vec![0.6, 0.2, 0.2],
            graph_kinds: vec![GraphKind::Identity, GraphKind::Hub, GraphKind::Random],
            hub_blocks: 4,
            ..Self::five_state_study(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.t == 0 || self.m == 0 || self.p == 0 {
            return Err(invalid("simulation", "D, T, M and P must be positive"));
        }
        if self.phi.len() != self.p + 1 {
            return Err(invalid("simulation.phi", format!("length {} but P + 1 = {}", self.phi.len(), self.p + 1)));
        }
        check_simplex(&self.phi, "simulation.phi")?;
        if self.pi.len() != self.m {
            return Err(invalid("simulation.pi", format!("length {} but M = {}", self.pi.len(), self.m)));
        }
        check_simplex(&self.pi, "simulation.pi")?;
        if self.graph_kinds.len() != self.m {
            return Err(invalid(
                "simulation.graph_kinds",
                format!("length {} but M = {}", self.graph_kinds.len(), self.m),
            ));
        }
        if self.graph_kinds.contains(&GraphKind::Hub) && (self.hub_blocks == 0 || self.d % self.hub_blocks != 0) {
            return Err(invalid(
                "simulation.hub_blocks",
                format!("{} does not divide D = {}", self.hub_blocks, self.d),
            ));
        }
        if self.graph_kinds.contains(&GraphKind::Random) && self.d < 5 {
            return Err(invalid("simulation.d", "random graphs need D >= 5"));
        }
        Ok(())
    }
}

/// Generated data with the unscaled generating parameters. Observation
/// column `i` was divided by `scales[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimDataset {
    pub data: Dataset,
    pub gamma: Vec<usize>,
    pub phi: Vec<f64>,
    pub pi: Vec<f64>,
    pub mu: Vec<DVector<f64>>,
    pub omega: Vec<SymMatrix>,
    pub graph_kinds: Vec<GraphKind>,
    pub scales: Vec<f64>,
}

impl SimDataset {
    /// Precision of state `j` in the coordinates of the stored data.
    pub fn omega_scaled(&self, j: usize) -> DMatrix<f64> {
        let s = DMatrix::from_diagonal(&DVector::from_vec(self.scales.clone()));
        &s * self.omega[j].as_matrix() * &s
    }

    /// True edge sets (nonzero off-diagonal entries).
    pub fn adjacency(&self, j: usize) -> DMatrix<bool> {
        adjacency_of(&self.omega[j])
    }
}

pub fn adjacency_of(omega: &SymMatrix) -> DMatrix<bool> {
    let w = omega.as_matrix();
    DMatrix::from_fn(w.nrows(), w.ncols(), |i, l| i != l && w[(i, l)] != 0.0)
}

pub fn simulate_dataset(cfg: &SimConfig) -> Result<SimDataset> {
    cfg.validate()?;
    let mut graph_rng = RngStream::new(cfg.seed, 1);
    let mut mean_rng = RngStream::new(cfg.seed, 2);
    let mut state_rng = RngStream::new(cfg.seed, 3);
    let mut obs_rng = RngStream::new(cfg.seed, 4);
    let omega = cfg
        .graph_kinds
        .iter()
        .map(|&k| make_graph(k, cfg.d, cfg.hub_blocks, &mut graph_rng))
        .collect::<Result<Vec<_>>>()?;
    let mu = make_means(cfg.m, cfg.d, &mut mean_rng, cfg.zero_means);
    let gamma = simulate_dar_sequence(cfg.t, &cfg.phi, &cfg.pi, &mut state_rng)?;
    let mut y = DMatrix::zeros(cfg.t, cfg.d);
    for (t, &g) in gamma.iter().enumerate() {
        let x = mvn_sample(&mut obs_rng, &mu[g], &omega[g])?;
        y.row_mut(t).copy_from(&x.transpose());
    }
    let mut scales = vec![1.0; cfg.d];
    if cfg.scale_to_unit_sd && cfg.t > 1 {
        for (i, s) in scales.iter_mut().enumerate() {
            let col: Vec<f64> = y.column(i).iter().copied().collect();
            *s = crate::numerics::stats::std_dev(&col);
            if *s > 0.0 {
                y.column_mut(i).iter_mut().for_each(|v| *v /= *s);
            } else {
                *s = 1.0;
            }
        }
    }
    Ok(SimDataset {
        data: Dataset::from_matrix(&y)?,
        gamma,
        phi: cfg.phi.clone(),
        pi: cfg.pi.clone(),
        mu,
        omega,
        graph_kinds: cfg.graph_kinds.clone(),
        scales,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::partial_correlation;
    use crate::numerics::stats::{mean, std_dev};

    #[test]
    fn identity_and_star() {
        let mut rng = RngStream::new(0, 0);
        assert_eq!(make_graph(GraphKind::Identity, 3, 5, &mut rng).unwrap(), SymMatrix::identity(3));
        let s = make_graph(GraphKind::Star, 15, 5, &mut rng).unwrap();
        for l in 1..15 {
            assert_eq!(s.get(0, l), -1.0 / 15.0);
            assert_eq!(s.get(l, 0), -1.0 / 15.0);
            assert_eq!(s.get(l, l), 1.0);
        }
        assert_eq!(s.get(3, 4), 0.0);
    }

    #[test]
    fn hub_blocks() {
        let mut rng = RngStream::new(0, 0);
        let h = make_graph(GraphKind::Hub, 15, 5, &mut rng).unwrap();
        let a = 2.0 / 15f64.sqrt();
        assert_eq!(h.get(0, 2), a);
        assert_eq!(h.get(0, 3), 0.0);
        assert_eq!(h.get(12, 14), a);
        assert!(make_graph(GraphKind::Hub, 14, 5, &mut rng).is_err());
        assert!(make_graph(GraphKind::Hub, 40, 5, &mut rng).unwrap().is_positive_definite());
        assert!(make_graph(GraphKind::Hub, 100, 4, &mut rng).unwrap().is_positive_definite());
    }

    #[test]
    fn ar2_bands() {
        let mut rng = RngStream::new(0, 0);
        let g = make_graph(GraphKind::Ar2, 6, 5, &mut rng).unwrap();
        assert_eq!(g.get(2, 3), 0.5);
        assert_eq!(g.get(2, 4), 0.25);
        assert_eq!(g.get(2, 5), 0.0);
    }

    #[test]
    fn random_graph_structure() {
        let mut rng = RngStream::new(4, 0);
        assert_eq!(random_graph_positions(15, &mut rng).len(), 22);
        for seed in 0..50 {
            let mut rng = RngStream::new(seed, 0);
            let g = make_graph(GraphKind::Random, 15, 5, &mut rng).unwrap();
            assert!(g.is_positive_definite());
            let nz = (0..15).flat_map(|i| ((i + 1)..15).map(move |l| (i, l))).filter(|&(i, l)| g.get(i, l) != 0.0).count();
            assert_eq!(nz, 22);
            assert!((0..15).all(|i| g.get(i, i) == 1.0));
        }
    }

    #[test]
    fn graph_names_parse() {
        for k in GraphKind::ALL {
            assert_eq!(k.name().parse::<GraphKind>().unwrap(), k);
        }
        assert!("tree".parse::<GraphKind>().is_err());
    }

    #[test]
    fn template_matches_eleven() {
        let t = mean_template(11);
        for (i, x) in t.iter().enumerate() {
            assert!((x - (i as f64 - 5.0) / 11.0).abs() < 1e-15);
        }
    }

    #[test]
    fn means_center_on_template() {
        let mut rng = RngStream::new(6, 0);
        assert!(make_means(3, 4, &mut rng, true).iter().all(|m| m.iter().all(|&x| x == 0.0)));
        let d = 15;
        let draws = make_means(10_000, d, &mut rng, false);
        let xs: Vec<f64> = draws.iter().flat_map(|m| m.iter().copied()).collect();
        let target = mean(&mean_template(d));
        let se = std_dev(&xs) / (xs.len() as f64).sqrt();
        assert!((mean(&xs) - target).abs() < 3.0 * se);
        let a = make_means(2, d, &mut RngStream::new(9, 0), false);
        let b = make_means(2, d, &mut RngStream::new(9, 0), false);
        assert_eq!(a, b);
    }

    #[test]
    fn innovation_only_is_iid() {
        let mut rng = RngStream::new(2, 0);
        let pi = [0.5, 0.3, 0.2];
        let g = simulate_dar_sequence(100_000, &[1.0, 0.0], &pi, &mut rng).unwrap();
        let n = g.len() as f64;
        let mut chi2 = 0.0;
        for (j, &p) in pi.iter().enumerate() {
            let c = g.iter().filter(|&&x| x == j).count() as f64;
            assert!((c / n - p).abs() < 3.0 * (p * (1.0 - p) / n).sqrt());
            chi2 += (c - n * p).powi(2) / (n * p);
        }
        // 2 degrees of freedom: P(χ² > 9.21) = 0.01
        assert!(chi2 < 9.21, "{chi2}");
    }

    #[test]
    fn pure_copy_is_constant() {
        let mut rng = RngStream::new(3, 0);
        let g = simulate_dar_sequence(200, &[0.0, 1.0], &[0.5, 0.5], &mut rng).unwrap();
        assert!(g.iter().all(|&x| x == g[0]));
    }

    #[test]
    fn transition_frequencies_match_law() {
        let mut rng = RngStream::new(8, 0);
        let phi = [0.1, 0.75, 0.15];
        let pi = [0.6, 0.1, 0.1, 0.1, 0.1];
        let g = simulate_dar_sequence(100_000, &phi, &pi, &mut rng).unwrap();
        // p(γ_t = a | γ_{t−1} = a, γ_{t−2} = b) for a ≠ b
        let (a, b) = (0, 1);
        let (mut hit, mut tot) = (0.0, 0.0);
        for t in 2..g.len() {
            if g[t - 1] == a && g[t - 2] == b {
                tot += 1.0;
                if g[t] == a {
                    hit += 1.0;
                }
            }
        }
        let law = phi[0] * pi[a] + phi[1];
        assert!((hit / tot - law).abs() < 0.02, "{} vs {law}", hit / tot);
        let (mut hit, mut tot) = (0.0, 0.0);
        for t in 2..g.len() {
            if g[t - 1] == 0 && g[t - 2] == 0 {
                tot += 1.0;
                if g[t] == 0 {
                    hit += 1.0;
                }
            }
        }
        assert!((hit / tot - (phi[0] * pi[0] + phi[1] + phi[2])).abs() < 0.02);
    }

    #[test]
    fn identity_sample_covariance() {
        let cfg = SimConfig {
            d: 3,
            t: 10_000,
            m: 1,
            p: 1,
            phi: vec![0.5, 0.5],
            pi: vec![1.0],
            graph_kinds: vec![GraphKind::Identity],
            hub_blocks: 1,
            seed: 5,
            scale_to_unit_sd: false,
            zero_means: true,
        };
        let sim = simulate_dataset(&cfg).unwrap();
        let y = sim.data.to_matrix();
        let cov = y.transpose() * &y / cfg.t as f64;
        for i in 0..3 {
            for l in 0..3 {
                let target = if i == l { 1.0 } else { 0.0 };
                assert!((cov[(i, l)] - target).abs() < 0.05);
            }
        }
    }

    #[test]
    fn scaling_and_partial_correlations() {
        let sim = simulate_dataset(&SimConfig::five_state_study(11)).unwrap();
        assert_eq!((sim.data.len(), sim.data.dim()), (2000, 15));
        for col in sim.data.to_matrix().column_iter() {
            let v: Vec<f64> = col.iter().copied().collect();
            assert!((std_dev(&v) - 1.0).abs() < 1e-12);
        }
        for j in 0..5 {
            let raw = partial_correlation(&sim.omega[j]);
            let scaled = partial_correlation(&SymMatrix::symmetrize(sim.omega_scaled(j)).unwrap());
            assert!((raw - scaled).abs().max() < 1e-12);
        }
        let counts = crate::model::state_counts(&sim.gamma, 5);
        assert!(counts.iter().all(|&c| c > 0));
    }

    #[test]
    fn config_validation_names_fields() {
        let mut c = SimConfig::five_state_study(0);
        c.pi = vec![0.5, 0.1, 0.1, 0.1, 0.1];
        match c.validate() {
            Err(Error::InvalidParameter { field, .. }) => assert_eq!(field, "simulation.pi"),
            other => panic!("{other:?}"),
        }
        let mut c = SimConfig::five_state_study(0);
        c.hub_blocks = 4;
        assert!(c.validate().is_err());
        assert!(SimConfig::high_dim_study(40, 1000, 0).validate().is_ok());
        assert!(SimConfig::sample_size_study(100, 0).validate().is_ok());
    }
}
