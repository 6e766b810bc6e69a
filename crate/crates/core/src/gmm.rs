//! Diagonal-covariance Gaussian mixtures: density evaluation, EM fitting and
//! the sufficient-statistic accumulators reused by HMM re-estimation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{log_sum_exp, mean_and_variance, LN_2PI};

/// Relative variance floor applied to the global per-dimension variance.
pub const VARIANCE_FLOOR_SCALE: f64 = 1e-4;
/// Absolute lower bound so constant dimensions still yield a proper density.
pub const MIN_VARIANCE: f64 = 1e-10;

/// `log N(x; mean, diag(var))`.
pub fn log_gaussian(x: &[f64], mean: &[f64], var: &[f64]) -> Result<f64> {
    if x.len() != mean.len() || x.len() != var.len() {
        return Err(Error::DimensionMismatch {
            expected: mean.len(),
            got: x.len(),
        });
    }
    let mut acc = 0.0;
    for ((xi, mi), vi) in x.iter().zip(mean).zip(var) {
        let d = xi - mi;
        acc += LN_2PI + vi.ln() + d * d / vi;
    }
    Ok(-0.5 * acc)
}

pub fn variance_floor(samples: &[&[f64]]) -> Vec<f64> {
    let (_, var) = mean_and_variance(samples);
    var.into_iter()
        .map(|v| (v * VARIANCE_FLOOR_SCALE).max(MIN_VARIANCE))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GmmRepr {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GmmRepr", into = "GmmRepr")]
pub struct Gmm {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
    // ln(weight) - 0.5 * sum(ln(2 pi var)), per component
    log_consts: Vec<f64>,
    inv_vars: Vec<Vec<f64>>,
}

impl PartialEq for Gmm {
    fn eq(&self, other: &Self) -> bool {
        self.weights == other.weights && self.means == other.means && self.variances == other.variances
    }
}

impl TryFrom<GmmRepr> for Gmm {
    type Error = Error;

    fn try_from(r: GmmRepr) -> Result<Self> {
        Gmm::new(r.weights, r.means, r.variances)
    }
}

impl From<Gmm> for GmmRepr {
    fn from(g: Gmm) -> Self {
        GmmRepr {
            weights: g.weights,
            means: g.means,
            variances: g.variances,
        }
    }
}

impl Gmm {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || variances.len() != k {
            return Err(Error::Data("mixture needs matching, non-empty weights/means/variances".into()));
        }
        let dim = means[0].len();
        if dim == 0 {
            return Err(Error::Data("mixture dimension must be at least 1".into()));
        }
        for (m, v) in means.iter().zip(&variances) {
            if m.len() != dim || v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: m.len().min(v.len()),
                });
            }
            if v.iter().any(|x| !x.is_finite() || *x <= 0.0) || m.iter().any(|x| !x.is_finite()) {
                return Err(Error::Data("mixture variances must be positive and means finite".into()));
            }
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| w.is_nan() || *w < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Data(format!("mixture weights must be non-negative and sum to 1 (got {total})")));
        }
        let mut g = Self {
            weights,
            means,
            variances,
            log_consts: Vec::new(),
            inv_vars: Vec::new(),
        };
        g.refresh();
        Ok(g)
    }

    /// A single Gaussian.
    pub fn single(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![variance])
    }

    fn refresh(&mut self) {
        self.log_consts = self
            .weights
            .iter()
            .zip(&self.variances)
            .map(|(w, v)| w.ln() - 0.5 * v.iter().map(|x| LN_2PI + x.ln()).sum::<f64>())
            .collect();
        self.inv_vars = self
            .variances
            .iter()
            .map(|v| v.iter().map(|x| 1.0 / x).collect())
            .collect();
    }

    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn variances(&self) -> &[Vec<f64>] {
        &self.variances
    }

    #[inline]
    fn component_log_joint(&self, k: usize, x: &[f64]) -> f64 {
        let mut q = 0.0;
        for ((xi, mi), iv) in x.iter().zip(&self.means[k]).zip(&self.inv_vars[k]) {
            let d = xi - mi;
            q += d * d * iv;
        }
        self.log_consts[k] - 0.5 * q
    }

    /// Writes `ln(w_k) + ln N_k(x)` into `out` and returns their log-sum-exp.
    /// Caller guarantees `x.len() == self.dim()`.
    pub fn log_joint_into(&self, x: &[f64], out: &mut Vec<f64>) -> f64 {
        out.clear();
        out.extend((0..self.num_components()).map(|k| self.component_log_joint(k, x)));
        log_sum_exp(out)
    }

    /// Draws one vector: a component by weight, then each dimension independently.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut u: f64 = rng.random();
        let mut k = self.weights.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            if u < *w {
                k = i;
                break;
            }
            u -= w;
        }
        self.means[k]
            .iter()
            .zip(&self.variances[k])
            .map(|(m, v)| {
                let z: f64 = rand_distr::StandardNormal.sample(rng);
                m + v.sqrt() * z
            })
            .collect()
    }

    pub fn log_density_unchecked(&self, x: &[f64]) -> f64 {
        if self.num_components() == 1 {
            return self.component_log_joint(0, x);
        }
        let mut buf = Vec::with_capacity(self.num_components());
        self.log_joint_into(x, &mut buf)
    }
}

pub fn log_mixture(gmm: &Gmm, x: &[f64]) -> Result<f64> {
    if x.len() != gmm.dim() {
        return Err(Error::DimensionMismatch {
            expected: gmm.dim(),
            got: x.len(),
        });
    }
    Ok(gmm.log_density_unchecked(x))
}

/// Weighted sufficient statistics for one mixture. Sums are taken relative to
/// the previous component means to limit cancellation in the variance update.
#[derive(Debug, Clone)]
pub struct GmmStats {
    occupancy: Vec<f64>,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    buf: Vec<f64>,
}

impl GmmStats {
    pub fn new(gmm: &Gmm) -> Self {
        let (k, d) = (gmm.num_components(), gmm.dim());
        Self {
            occupancy: vec![0.0; k],
            first: vec![vec![0.0; d]; k],
            second: vec![vec![0.0; d]; k],
            buf: Vec::with_capacity(k),
        }
    }

    /// Adds `x` with total weight `weight`, split across components by their
    /// posterior under `gmm`.
    pub fn accumulate(&mut self, gmm: &Gmm, x: &[f64], weight: f64) {
        if weight <= 0.0 {
            return;
        }
        let mut buf = std::mem::take(&mut self.buf);
        let total = gmm.log_joint_into(x, &mut buf);
        for (k, lj) in buf.iter().enumerate() {
            let r = weight * (lj - total).exp();
            if r == 0.0 {
                continue;
            }
            self.occupancy[k] += r;
            for (((f, s), xi), mi) in self.first[k]
                .iter_mut()
                .zip(self.second[k].iter_mut())
                .zip(x)
                .zip(&gmm.means[k])
            {
                let d = xi - mi;
                *f += r * d;
                *s += r * d * d;
            }
        }
        self.buf = buf;
    }

    pub fn total(&self) -> f64 {
        self.occupancy.iter().sum()
    }

    pub fn merge(&mut self, other: &GmmStats) {
        for k in 0..self.occupancy.len() {
            self.occupancy[k] += other.occupancy[k];
            for d in 0..self.first[k].len() {
                self.first[k][d] += other.first[k][d];
                self.second[k][d] += other.second[k][d];
            }
        }
    }

    /// M-step. Components with no occupancy keep their parameters with zero
    /// weight; a mixture with no data at all is returned unchanged.
    pub fn maximize(&self, gmm: &Gmm, floor: &[f64]) -> Gmm {
        let total = self.total();
        if total <= 0.0 {
            return gmm.clone();
        }
        let mut weights = Vec::with_capacity(self.occupancy.len());
        let mut means = Vec::with_capacity(self.occupancy.len());
        let mut variances = Vec::with_capacity(self.occupancy.len());
        for k in 0..self.occupancy.len() {
            let occ = self.occupancy[k];
            weights.push(occ / total);
            if occ <= 0.0 {
                means.push(gmm.means[k].clone());
                variances.push(gmm.variances[k].clone());
                continue;
            }
            let mut mean = Vec::with_capacity(floor.len());
            let mut var = Vec::with_capacity(floor.len());
            for (d, &fl) in floor.iter().enumerate() {
                let shift = self.first[k][d] / occ;
                mean.push(gmm.means[k][d] + shift);
                let v = self.second[k][d] / occ - shift * shift;
                var.push(v.max(fl));
            }
            means.push(mean);
            variances.push(var);
        }
        let norm: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= norm);
        let mut out = Gmm {
            weights,
            means,
            variances,
            log_consts: Vec::new(),
            inv_vars: Vec::new(),
        };
        out.refresh();
        out
    }
}

#[derive(Debug, Clone)]
pub struct EmOptions {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop when the mean per-sample log-likelihood improves by less than this.
    pub tol: f64,
    /// Per-dimension variance floor; defaults to the global-variance rule.
    pub var_floor: Option<Vec<f64>>,
}

impl EmOptions {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iter: 100,
            tol: 1e-6,
            var_floor: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmFit {
    pub gmm: Gmm,
    /// Total log-likelihood before the first M-step and after each one.
    pub log_likelihoods: Vec<f64>,
}

fn total_log_likelihood(gmm: &Gmm, samples: &[&[f64]]) -> f64 {
    let mut buf = Vec::with_capacity(gmm.num_components());
    samples.iter().map(|x| gmm.log_joint_into(x, &mut buf)).sum()
}

fn count_distinct(samples: &[&[f64]], cap: usize) -> usize {
    let mut keys: Vec<Vec<u64>> = samples
        .iter()
        .map(|s| s.iter().map(|v| (v + 0.0).to_bits()).collect())
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len().min(cap)
}

/// k-means++ seeding: first centre uniform, later ones proportional to the
/// squared distance from the nearest existing centre.
fn kmeans_pp(samples: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut centers = vec![samples[rng.random_range(0..samples.len())].to_vec()];
    let mut dist: Vec<f64> = samples.iter().map(|s| sq(s, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = dist.len() - 1;
            for (i, d) in dist.iter().enumerate() {
                if target < *d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            rng.random_range(0..samples.len())
        };
        let c = samples[idx].to_vec();
        for (d, s) in dist.iter_mut().zip(samples) {
            *d = d.min(sq(s, &c));
        }
        centers.push(c);
    }
    centers
}

pub fn fit_em_with(samples: &[&[f64]], opts: &EmOptions) -> Result<EmFit> {
    let k = opts.k;
    if k == 0 {
        return Err(Error::Config("component count must be at least 1".into()));
    }
    if samples.len() < k {
        return Err(Error::TooFewSamples {
            needed: k,
            got: samples.len(),
        });
    }
    let dim = samples[0].len();
    if let Some(bad) = samples.iter().find(|s| s.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    if k > 1 {
        let distinct = count_distinct(samples, k);
        if distinct < k {
            return Err(Error::Collapse { k, distinct });
        }
    }
    let floor = opts.var_floor.clone().unwrap_or_else(|| variance_floor(samples));
    if floor.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: floor.len(),
        });
    }

    let (global_mean, global_var) = mean_and_variance(samples);
    let init_var: Vec<f64> = global_var.iter().zip(&floor).map(|(v, f)| v.max(*f)).collect();
    let means = if k == 1 {
        vec![global_mean]
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        kmeans_pp(samples, k, &mut rng)
    };
    let mut gmm = Gmm::new(vec![1.0 / k as f64; k], means, vec![init_var; k])?;

    let n = samples.len() as f64;
    let mut history = vec![total_log_likelihood(&gmm, samples)];
    for _ in 0..opts.max_iter {
        let mut stats = GmmStats::new(&gmm);
        for x in samples {
            stats.accumulate(&gmm, x, 1.0);
        }
        gmm = stats.maximize(&gmm, &floor);
        let ll = total_log_likelihood(&gmm, samples);
        let prev = *history.last().expect("history is never empty");
        history.push(ll);
        if (ll - prev) / n < opts.tol {
            break;
        }
    }
    Ok(EmFit {
        gmm,
        log_likelihoods: history,
    })
}

/// EM from seeded k-means++ initialisation.
pub fn fit_em(samples: &[&[f64]], k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<Gmm> {
    let opts = EmOptions {
        k,
        seed,
        max_iter,
        tol,
        var_floor: None,
    };
    fit_em_with(samples, &opts).map(|f| f.gmm)
}

/// Like [`fit_em_with`] but shrinks the component count when the data cannot
/// support `k` distinct components, down to a single Gaussian.
pub(crate) fn fit_em_lenient(samples: &[&[f64]], opts: &EmOptions) -> Result<Gmm> {
    let k = opts.k.min(samples.len()).max(1);
    let k = if k > 1 { count_distinct(samples, k) } else { 1 };
    let opts = EmOptions { k, ..opts.clone() };
    fit_em_with(samples, &opts).map(|f| f.gmm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::Normal;
    use rand::Rng;

    fn refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn standard_normal_values() {
        let at_mean = log_gaussian(&[0.0], &[0.0], &[1.0]).unwrap();
        assert!((at_mean - (-0.918_938_533_204_672_7)).abs() < 1e-6);
        assert!((at_mean - 0.398_942_f64.ln()).abs() < 1e-6);
        let two_d = log_gaussian(&[1.0, 2.0], &[1.0, 2.0], &[1.0, 1.0]).unwrap();
        assert!((two_d + (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
        let one_sigma = log_gaussian(&[1.0], &[0.0], &[1.0]).unwrap();
        assert!((one_sigma - (at_mean - 0.5)).abs() < 1e-12);
        assert!(log_gaussian(&[0.0, 1.0], &[0.0], &[1.0]).is_err());
    }

    #[test]
    fn mixture_identities() {
        let single = Gmm::single(vec![0.3, -1.0], vec![0.5, 2.0]).unwrap();
        let x = [0.1, 0.7];
        let direct = log_gaussian(&x, &[0.3, -1.0], &[0.5, 2.0]).unwrap();
        assert_eq!(log_mixture(&single, &x).unwrap(), direct);

        let doubled = Gmm::new(
            vec![0.5, 0.5],
            vec![vec![0.3, -1.0]; 2],
            vec![vec![0.5, 2.0]; 2],
        )
        .unwrap();
        assert!((log_mixture(&doubled, &x).unwrap() - direct).abs() < 1e-12);
        assert!(log_mixture(&doubled, &[1.0]).is_err());
    }

    #[test]
    fn separated_components_match_direct_sum() {
        let gmm = Gmm::new(
            vec![0.3, 0.7],
            vec![vec![-10.0], vec![10.0]],
            vec![vec![1.0], vec![1.0]],
        )
        .unwrap();
        // direct summation in linear space
        let x = -10.0f64;
        let pdf = |m: f64| (-(x - m) * (x - m) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let oracle = (0.3 * pdf(-10.0) + 0.7 * pdf(10.0)).ln();
        let v = log_mixture(&gmm, &[x]).unwrap();
        assert!((v - oracle).abs() < 1e-12);
        let peak = 0.3f64.ln() + log_gaussian(&[x], &[-10.0], &[1.0]).unwrap();
        assert!((v - peak).abs() < 1e-6);
    }

    #[test]
    fn single_component_fit_is_closed_form() {
        let data: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 0.37 - 2.0, (i * i) as f64 * 0.01]).collect();
        let gmm = fit_em(&refs(&data), 1, 7, 50, 1e-9).unwrap();
        let (mean, var) = mean_and_variance(&refs(&data));
        for d in 0..2 {
            assert!((gmm.means()[0][d] - mean[d]).abs() < 1e-9);
            assert!((gmm.variances()[0][d] - var[d]).abs() < 1e-9);
        }
    }

    #[test]
    fn recovers_two_separated_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let data: Vec<Vec<f64>> = (0..400)
            .map(|i| {
                let c = if i % 2 == 0 { -10.0 } else { 10.0 };
                vec![c + noise.sample(&mut rng)]
            })
            .collect();
        let gmm = fit_em(&refs(&data), 2, 11, 200, 1e-10).unwrap();
        let mut comps: Vec<(f64, f64)> = gmm.means().iter().map(|m| m[0]).zip(gmm.weights().iter().copied()).collect();
        comps.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!((comps[0].0 + 10.0).abs() < 0.05 && (comps[1].0 - 10.0).abs() < 0.05);
        assert!((comps[0].1 - 0.5).abs() < 0.05 && (comps[1].1 - 0.5).abs() < 0.05);
    }

    #[test]
    fn rejects_too_many_components() {
        let data = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert!(matches!(fit_em(&refs(&data), 5, 0, 10, 1e-6), Err(Error::TooFewSamples { .. })));
        let same = vec![vec![1.0]; 10];
        assert!(matches!(fit_em(&refs(&same), 2, 0, 10, 1e-6), Err(Error::Collapse { .. })));
        assert!(fit_em_lenient(&refs(&same), &EmOptions::new(4, 0)).is_ok());
    }

    #[test]
    fn serialization_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<Vec<f64>> = (0..60).map(|_| vec![rng.random::<f64>(), rng.random::<f64>() * 3.0]).collect();
        let gmm = fit_em(&refs(&data), 3, 1, 20, 1e-8).unwrap();
        let json = serde_json::to_string(&gmm).unwrap();
        let back: Gmm = serde_json::from_str(&json).unwrap();
        for (a, b) in gmm.means().iter().flatten().zip(back.means().iter().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in gmm.variances().iter().flatten().zip(back.variances().iter().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in gmm.weights().iter().zip(back.weights()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    proptest! {
        #[test]
        fn em_log_likelihood_never_decreases(seed in 0u64..500, k in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<Vec<f64>> = (0..80)
                .map(|i| vec![(i % 3) as f64 * 2.0 + rng.random::<f64>(), rng.random::<f64>()])
                .collect();
            let fit = fit_em_with(&refs(&data), &EmOptions { max_iter: 30, tol: 0.0, ..EmOptions::new(k, seed) }).unwrap();
            for w in fit.log_likelihoods.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-8 * w[0].abs(), "{} -> {}", w[0], w[1]);
            }
        }

        #[test]
        fn mixture_respects_lse_bound(x in -5.0f64..5.0, y in -5.0f64..5.0, w in 0.05f64..0.95) {
            let gmm = Gmm::new(
                vec![w, 1.0 - w],
                vec![vec![-1.0, 0.5], vec![2.0, -0.3]],
                vec![vec![0.7, 1.2], vec![0.4, 2.0]],
            ).unwrap();
            let v = log_mixture(&gmm, &[x, y]).unwrap();
            let mut comps = Vec::new();
            gmm.log_joint_into(&[x, y], &mut comps);
            let max = comps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(v <= max + 2f64.ln() + 1e-12);
            prop_assert!(v >= max - 1e-12);
        }
    }
}
