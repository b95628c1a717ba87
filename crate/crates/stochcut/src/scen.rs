//! Scenario models: k-means quantization of sample paths, Markov
//! transition estimates, and sampled (SAA) stage data.

use std::io::Read;

use log::info;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Dependence, MarkovLattice, MultistageProblem, StageBlock};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Error)]
pub enum ScenError {
    #[error("{0}")]
    Invalid(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, ScenError>;

const MAX_SWEEPS: usize = 500;
const REL_IMPROVEMENT: f64 = 1e-9;

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest center, lowest index on ties.
pub fn nearest(centers: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = dist2(c, x);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Observed paths: `paths[k][t]` is ξ_t on path k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSeries {
    pub paths: Vec<Vec<Vec<f64>>>,
}

impl SampleSeries {
    /// Cuts one long record into consecutive paths of `period` steps; an
    /// incomplete tail is dropped.
    pub fn from_periodic(rows: &[Vec<f64>], period: usize) -> Result<Self> {
        if period == 0 {
            return Err(ScenError::Invalid("period must be positive".into()));
        }
        let paths: Vec<Vec<Vec<f64>>> = rows.chunks_exact(period).map(|c| c.to_vec()).collect();
        if paths.is_empty() {
            return Err(ScenError::Invalid(format!("{} rows do not fill one period of {period}", rows.len())));
        }
        Ok(SampleSeries { paths })
    }

    pub fn stages(&self) -> usize {
        self.paths.first().map_or(0, |p| p.len())
    }

    pub fn at(&self, t: usize) -> Vec<Vec<f64>> {
        self.paths.iter().map(|p| p[t].clone()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let t_len = self.stages();
        for (k, p) in self.paths.iter().enumerate() {
            if p.len() != t_len {
                return Err(ScenError::Invalid(format!("path {k} has {} steps, expected {t_len}", p.len())));
            }
        }
        for t in 0..t_len {
            let d = self.paths[0][t].len();
            if self.paths.iter().any(|p| p[t].len() != d) {
                return Err(ScenError::Invalid(format!("step {t}: inconsistent dimension")));
            }
        }
        Ok(())
    }
}

/// One row per time step, numeric columns; a non-numeric first row is
/// taken as a header.
pub fn read_series_csv(reader: impl Read) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(|s| s.parse::<f64>()).collect();
        match parsed {
            Ok(v) => rows.push(v),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(ScenError::Invalid(format!("row {}: {e}", i + 1))),
        }
    }
    if let Some(first) = rows.first() {
        let d = first.len();
        if let Some(k) = rows.iter().position(|r| r.len() != d) {
            return Err(ScenError::Invalid(format!("row {} has {} columns, expected {d}", k + 1, rows[k].len())));
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Quantization {
    pub centers: Vec<Vec<f64>>,
    /// Mean squared distance to the nearest center.
    pub distortion: f64,
    pub sweeps: usize,
    /// Distortion at the start of each sweep.
    pub history: Vec<f64>,
}

/// Lloyd's algorithm with k-means++ seeding; empty cells are reseeded at the
/// sample farthest from its center.
pub fn fit_centers(samples: &[Vec<f64>], n: usize, seed: u64, stage: u64) -> Result<Quantization> {
    if n == 0 {
        return Err(ScenError::Invalid("need at least one center".into()));
    }
    let mut distinct: Vec<&Vec<f64>> = samples.iter().collect();
    distinct.sort_by(|a, b| a.iter().zip(b.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    distinct.dedup();
    if distinct.len() < n {
        return Err(ScenError::Invalid(format!("{} distinct samples for {n} centers", distinct.len())));
    }
    let mut rng = stream_rng(seed, Stream::KMeans, stage);
    let mut centers = vec![samples[rng.gen_range(0..samples.len())].clone()];
    while centers.len() < n {
        let d: Vec<f64> = samples.iter().map(|x| nearest(&centers, x).1).collect();
        let total: f64 = d.iter().sum();
        let mut target = rng.gen::<f64>() * total;
        let mut pick = d.iter().rposition(|&v| v > 0.0).expect("distinct samples remain");
        for (i, &v) in d.iter().enumerate() {
            if v > 0.0 && target < v {
                pick = i;
                break;
            }
            target -= v;
        }
        centers.push(samples[pick].clone());
    }
    let dim = samples[0].len();
    let mut distortion = f64::INFINITY;
    let mut sweeps = 0;
    let mut history = Vec::new();
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let assign: Vec<(usize, f64)> = samples.par_iter().map(|x| nearest(&centers, x)).collect();
        let current = assign.iter().map(|a| a.1).sum::<f64>() / samples.len() as f64;
        history.push(current);
        let mut sums = vec![vec![0.0; dim]; n];
        let mut counts = vec![0usize; n];
        for (x, &(k, _)) in samples.iter().zip(&assign) {
            counts[k] += 1;
            for i in 0..dim {
                sums[k][i] += x[i];
            }
        }
        let mut taken = vec![false; samples.len()];
        for k in 0..n {
            if counts[k] == 0 {
                let far = (0..samples.len())
                    .filter(|&i| !taken[i])
                    .max_by(|&a, &b| assign[a].1.total_cmp(&assign[b].1).then(b.cmp(&a)))
                    .expect("samples remain");
                taken[far] = true;
                centers[k] = samples[far].clone();
            } else {
                centers[k] = sums[k].iter().map(|s| s / counts[k] as f64).collect();
            }
        }
        let improved = distortion - current;
        distortion = current;
        if improved.is_finite() && improved <= REL_IMPROVEMENT * current.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    // distortion of the final centers
    distortion = samples.par_iter().map(|x| nearest(&centers, x).1).sum::<f64>() / samples.len() as f64;
    Ok(Quantization { centers, distortion, sweeps, history })
}

/// Divides by the row sum, then sets the last positive entry to one minus
/// the sum before it, so the row adds up to exactly 1 in index order.
fn normalize_row(row: &mut [f64]) {
    let s: f64 = row.iter().sum();
    row.iter_mut().for_each(|v| *v /= s);
    if let Some(last) = row.iter().rposition(|&v| v > 0.0) {
        let head: f64 = row[..last].iter().sum();
        row[last] = (1.0 - head).max(0.0);
    }
}

/// Row-stochastic `p_ij = P(ξ_{t+1} in cell j | ξ_t in cell i)` from paired
/// samples. A row with no observations gets a count of one per cell.
pub fn estimate_transitions(pairs: &[(Vec<f64>, Vec<f64>)], from: &[Vec<f64>], to: &[Vec<f64>]) -> DMatrix<f64> {
    let mut counts = DMatrix::zeros(from.len(), to.len());
    for (a, b) in pairs {
        counts[(nearest(from, a).0, nearest(to, b).0)] += 1.0;
    }
    for i in 0..from.len() {
        let mut row: Vec<f64> = counts.row(i).iter().copied().collect();
        if row.iter().all(|&v| v == 0.0) {
            info!("transition row {i} has no observations; smoothing");
            row.iter_mut().for_each(|v| *v = 1.0);
        }
        normalize_row(&mut row);
        for (j, v) in row.into_iter().enumerate() {
            counts[(i, j)] = v;
        }
    }
    counts
}

/// Lattice with `clusters[t]` nodes at stage t; the first stage has one
/// node at the sample mean.
pub fn fit_lattice(series: &SampleSeries, clusters: &[usize], seed: u64) -> Result<MarkovLattice> {
    series.validate()?;
    let t_len = series.stages();
    if clusters.len() != t_len {
        return Err(ScenError::Invalid(format!("{} cluster counts for {t_len} stages", clusters.len())));
    }
    let mut centers = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let s = series.at(t);
        if t == 0 {
            let dim = s[0].len();
            let mean = (0..dim).map(|i| s.iter().map(|x| x[i]).sum::<f64>() / s.len() as f64).collect();
            centers.push(vec![mean]);
        } else {
            centers.push(fit_centers(&s, clusters[t], seed, t as u64)?.centers);
        }
    }
    let transitions = (0..t_len.saturating_sub(1))
        .map(|t| {
            let pairs: Vec<_> = series.paths.iter().map(|p| (p[t].clone(), p[t + 1].clone())).collect();
            estimate_transitions(&pairs, &centers[t], &centers[t + 1])
        })
        .collect();
    Ok(MarkovLattice { centers, transitions })
}

/// Lattice problem from a template whose stages have one realization each:
/// node i of stage t copies the template with right-hand side `centers[t][i]`.
pub fn lattice_problem(template: &MultistageProblem, lattice: &MarkovLattice) -> Result<MultistageProblem> {
    if template.stages.len() != lattice.centers.len() {
        return Err(ScenError::Invalid("template and lattice horizons differ".into()));
    }
    let stages = template
        .stages
        .iter()
        .zip(&lattice.centers)
        .enumerate()
        .map(|(t, (s, cs))| {
            let base = s.realizations.first().ok_or_else(|| ScenError::Invalid(format!("stage {t} is empty")))?;
            let realizations = cs
                .iter()
                .map(|c| {
                    if c.len() != base.m() {
                        return Err(ScenError::Invalid(format!("stage {t}: center of dimension {} for {} rows", c.len(), base.m())));
                    }
                    let mut r = base.clone();
                    r.rhs = c.clone();
                    r.prob = 1.0 / cs.len() as f64;
                    Ok(r)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(StageBlock {
                realizations,
                lower: s.lower.clone(),
                upper: s.upper.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MultistageProblem {
        stages,
        dependence: Dependence::MarkovLattice(lattice.clone()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    Discrete { atoms: Vec<Vec<f64>>, probs: Vec<f64> },
    UniformBox { lower: Vec<f64>, upper: Vec<f64> },
    /// Mean and covariance.
    Gaussian { mean: Vec<f64>, covariance: Vec<Vec<f64>> },
}

/// N iid draws, each with probability 1/N; `stage` selects the substream.
pub fn saa_sample(generator: &Generator, n: usize, seed: u64, stage: u64) -> Result<Vec<(Vec<f64>, f64)>> {
    if n == 0 {
        return Err(ScenError::Invalid("sample size must be positive".into()));
    }
    let mut rng = stream_rng(seed, Stream::Saa, stage);
    let p = 1.0 / n as f64;
    let draws: Vec<Vec<f64>> = match generator {
        Generator::Discrete { atoms, probs } => {
            if atoms.is_empty() || atoms.len() != probs.len() {
                return Err(ScenError::Invalid("discrete generator needs one probability per atom".into()));
            }
            (0..n).map(|_| atoms[crate::rng::sample_index(&mut rng, probs)].clone()).collect()
        }
        Generator::UniformBox { lower, upper } => {
            if lower.len() != upper.len() || lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
                return Err(ScenError::Invalid("uniform box bounds are inconsistent".into()));
            }
            (0..n)
                .map(|_| lower.iter().zip(upper).map(|(l, u)| l + (u - l) * rng.gen::<f64>()).collect())
                .collect()
        }
        Generator::Gaussian { mean, covariance } => {
            let d = mean.len();
            if covariance.len() != d || covariance.iter().any(|r| r.len() != d) {
                return Err(ScenError::Invalid("covariance shape does not match the mean".into()));
            }
            let cov = DMatrix::from_fn(d, d, |i, j| covariance[i][j]);
            let l = cov
                .cholesky()
                .ok_or_else(|| ScenError::Invalid("covariance is not positive definite".into()))?
                .l();
            let mu = DVector::from_column_slice(mean);
            (0..n)
                .map(|_| {
                    let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
                    (&mu + &l * z).iter().copied().collect()
                })
                .collect()
        }
    };
    Ok(draws.into_iter().map(|x| (x, p)).collect())
}

/// Stage block whose realizations copy `template` realization 0 with the
/// right-hand side replaced by N sampled vectors.
pub fn saa_stage(template: &StageBlock, generator: &Generator, n: usize, seed: u64, stage: u64) -> Result<StageBlock> {
    let base = template
        .realizations
        .first()
        .ok_or_else(|| ScenError::Invalid("template stage is empty".into()))?;
    let realizations = saa_sample(generator, n, seed, stage)?
        .into_iter()
        .map(|(x, p)| {
            if x.len() != base.m() {
                return Err(ScenError::Invalid(format!("draw of dimension {} for {} rows", x.len(), base.m())));
            }
            let mut r = base.clone();
            r.rhs = x;
            r.prob = p;
            Ok(r)
        })
        .collect::<Result<_>>()?;
    Ok(StageBlock {
        realizations,
        lower: template.lower.clone(),
        upper: template.upper.clone(),
    })
}

/// Random subset of paths, for holding out data.
pub fn split_paths(series: &SampleSeries, keep: usize, seed: u64) -> SampleSeries {
    let mut rng = stream_rng(seed, Stream::Saa, u64::MAX);
    let mut paths = series.paths.clone();
    paths.shuffle(&mut rng);
    paths.truncate(keep);
    SampleSeries { paths }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::{prelude::prop, prop_assert, prop_assert_eq, proptest};

    fn sorted(mut c: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        c.sort_by(|a, b| a[0].total_cmp(&b[0]));
        c
    }

    #[test]
    fn two_points_two_centers() {
        let q = fit_centers(&[vec![0.0], vec![1.0]], 2, 3, 1).unwrap();
        assert_eq!(sorted(q.centers), vec![vec![0.0], vec![1.0]]);
        assert_eq!(q.distortion, 0.0);
    }

    #[test]
    fn one_center_is_the_mean() {
        let q = fit_centers(&[vec![0.0], vec![2.0]], 1, 0, 1).unwrap();
        assert_eq!(q.centers, vec![vec![1.0]]);
    }

    #[test]
    fn too_few_distinct_samples() {
        assert!(fit_centers(&[vec![1.0], vec![1.0], vec![1.0]], 2, 0, 1).is_err());
    }

    fn cloud(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let g = Generator::Gaussian { mean: vec![0.0, 1.0], covariance: vec![vec![1.0, 0.3], vec![0.3, 0.5]] };
        saa_sample(&g, n, seed, 0).unwrap().into_iter().map(|x| x.0).collect()
    }

    #[test]
    fn more_centers_less_distortion() {
        let s = cloud(500, 4);
        let one = fit_centers(&s, 1, 1, 1).unwrap();
        let four = fit_centers(&s, 4, 1, 1).unwrap();
        assert!(four.distortion <= one.distortion);
        assert_eq!(fit_centers(&s, 4, 1, 1).unwrap(), four);
    }

    #[test]
    fn deterministic_successor_gives_permutation() {
        let from = vec![vec![0.0], vec![1.0], vec![2.0]];
        let to = vec![vec![10.0], vec![11.0], vec![12.0]];
        let pairs: Vec<_> = (0..30).map(|k| (vec![(k % 3) as f64], vec![10.0 + ((k + 1) % 3) as f64])).collect();
        let p = estimate_transitions(&pairs, &from, &to);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(p[(i, j)], if j == (i + 1) % 3 { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn single_center_gives_unit_matrix() {
        let pairs = vec![(vec![0.3], vec![0.7]), (vec![5.0], vec![-1.0])];
        let p = estimate_transitions(&pairs, &[vec![0.0]], &[vec![1.0]]);
        assert_eq!(p, DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn unobserved_row_is_smoothed() {
        let pairs = vec![(vec![0.0], vec![0.0])];
        let p = estimate_transitions(&pairs, &[vec![0.0], vec![9.0]], &[vec![0.0], vec![9.0]]);
        assert_eq!(p.row(1).iter().copied().collect::<Vec<_>>(), vec![0.5, 0.5]);
    }

    #[test]
    fn independent_samples_give_similar_rows() {
        let mut rng = stream_rng(8, Stream::Saa, 3);
        let pairs: Vec<_> = (0..20000).map(|_| (vec![rng.gen::<f64>()], vec![rng.gen::<f64>()])).collect();
        let cells = vec![vec![0.25], vec![0.75]];
        let p = estimate_transitions(&pairs, &cells, &cells);
        // chi-square with one degree of freedom per row against the pooled split
        for i in 0..2 {
            let row_n = pairs.iter().filter(|(a, _)| nearest(&cells, a).0 == i).count() as f64;
            let stat: f64 = (0..2).map(|j| (p[(i, j)] - 0.5).powi(2) / 0.5 * row_n).sum();
            assert!(stat < 10.83, "row {i}: {stat}");
        }
    }

    #[test]
    fn discrete_single_atom() {
        let g = Generator::Discrete { atoms: vec![vec![2.5, -1.0]], probs: vec![1.0] };
        let s = saa_sample(&g, 7, 0, 2).unwrap();
        assert!(s.iter().all(|(x, p)| x == &vec![2.5, -1.0] && *p == 1.0 / 7.0));
    }

    #[test]
    fn uniform_mean_within_clt_band() {
        let n = 100_000;
        let g = Generator::UniformBox { lower: vec![0.0], upper: vec![1.0] };
        let s = saa_sample(&g, n, 11, 0).unwrap();
        let mean = s.iter().map(|x| x.0[0]).sum::<f64>() / n as f64;
        let sigma = (1.0f64 / 12.0).sqrt();
        assert!((mean - 0.5).abs() <= 3.0 * sigma / (n as f64).sqrt());
        assert_eq!(s, saa_sample(&g, n, 11, 0).unwrap());
        assert_ne!(s, saa_sample(&g, n, 12, 0).unwrap());
    }

    #[test]
    fn csv_with_header() {
        let text = "a,b\n1,2\n3.5, 4\n";
        assert_eq!(read_series_csv(text.as_bytes()).unwrap(), vec![vec![1.0, 2.0], vec![3.5, 4.0]]);
        assert!(read_series_csv("1,2\n3\n".as_bytes()).is_err());
    }

    #[test]
    fn lattice_from_periodic_record() {
        let rows: Vec<Vec<f64>> = (0..120).map(|k| vec![(k % 12) as f64 + 0.1 * ((k / 12) % 3) as f64]).collect();
        let series = SampleSeries::from_periodic(&rows, 12).unwrap();
        assert_eq!(series.paths.len(), 10);
        let mut clusters = vec![2; 12];
        clusters[0] = 1;
        let lat = fit_lattice(&series, &clusters, 0).unwrap();
        assert_eq!(lat.centers.len(), 12);
        assert_eq!(lat.transitions.len(), 11);
        for p in &lat.transitions {
            for i in 0..p.nrows() {
                assert_eq!(p.row(i).iter().sum::<f64>(), 1.0);
            }
        }
    }

    proptest! {
        #[test]
        fn rows_sum_to_one(counts in prop::collection::vec(prop::collection::vec(0u32..50, 1..8), 1..6)) {
            for c in counts {
                let mut row: Vec<f64> = c.iter().map(|&v| v as f64).collect();
                if row.iter().all(|&v| v == 0.0) { row[0] = 1.0; }
                normalize_row(&mut row);
                prop_assert_eq!(row.iter().sum::<f64>(), 1.0);
                prop_assert!(row.iter().all(|&v| v >= 0.0));
            }
        }

        #[test]
        fn lloyd_distortion_not_worse_than_seeding(seed in 0u64..50, n in 1usize..5) {
            let s = cloud(120, seed);
            let q = fit_centers(&s, n, seed, 1).unwrap();
            let one = fit_centers(&s, 1, seed, 1).unwrap();
            prop_assert!(q.distortion <= one.distortion + 1e-12);
            prop_assert!(q.sweeps <= MAX_SWEEPS);
            for w in q.history.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
            }
            prop_assert!(q.distortion <= q.history[q.history.len() - 1] * (1.0 + 1e-12));
        }
    }
}
