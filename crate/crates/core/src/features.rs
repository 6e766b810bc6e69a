//! Frame features: PCA on base descriptors, sliding-window Fisher vectors over
//! a GMM codebook, a second PCA, then per-clip L2 normalisation of every
//! output dimension.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::FeatureSequence;
use crate::error::{Error, Result};
use crate::gmm::{fit_em_with, EmOptions, Gmm};

/// Eigenvalues below this fraction of the largest are treated as zero.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Principal directions as unit columns, strongest first.
    pub basis: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.basis.len()
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(self.project_unchecked(x))
    }

    fn project_unchecked(&self, x: &[f64]) -> Vec<f64> {
        self.basis
            .iter()
            .map(|col| col.iter().zip(x).zip(&self.mean).map(|((b, xi), m)| b * (xi - m)).sum())
            .collect()
    }

    pub fn reconstruct(&self, y: &[f64]) -> Vec<f64> {
        let mut x = self.mean.clone();
        for (col, yi) in self.basis.iter().zip(y) {
            for (xi, b) in x.iter_mut().zip(col) {
                *xi += b * yi;
            }
        }
        x
    }
}

/// Top principal directions of the sample covariance. Each basis column is
/// signed so that its largest-magnitude entry is positive.
pub fn fit_pca(samples: &[&[f64]], target_dim: usize) -> Result<PcaModel> {
    let n = samples.len();
    if target_dim == 0 {
        return Err(Error::Config("PCA target dimension must be at least 1".into()));
    }
    let dim = samples.first().map_or(0, |s| s.len());
    if let Some(bad) = samples.iter().find(|s| s.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    if n < 2 || target_dim > dim {
        return Err(Error::RankDeficient {
            requested: target_dim,
            achievable: n.saturating_sub(1).min(dim),
        });
    }
    let mut mean = vec![0.0; dim];
    for s in samples {
        for (m, x) in mean.iter_mut().zip(*s) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, dim, |i, j| samples[i][j] - mean[j]);
    let denom = (n - 1) as f64;

    // Eigenpairs of the covariance, via the Gram matrix when it is smaller.
    let (values, vectors): (Vec<f64>, Vec<Vec<f64>>) = if n < dim {
        let gram = (&centered * centered.transpose()) / denom;
        let eig = SymmetricEigen::new(gram);
        let mut pairs: Vec<(f64, Vec<f64>)> = eig
            .eigenvalues
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.0)
            .map(|(i, &v)| {
                let u = eig.eigenvectors.column(i);
                let w = centered.transpose() * u;
                let norm = w.norm();
                (v, w.iter().map(|x| x / norm).collect())
            })
            .collect();
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        pairs.into_iter().unzip()
    } else {
        let cov = (centered.transpose() * &centered) / denom;
        let eig = SymmetricEigen::new(cov);
        let mut pairs: Vec<(f64, Vec<f64>)> = eig
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, eig.eigenvectors.column(i).iter().copied().collect()))
            .collect();
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        pairs.into_iter().unzip()
    };

    let top = values.first().copied().unwrap_or(0.0);
    let rank = values.iter().filter(|v| top > 0.0 && **v > top * RANK_TOLERANCE).count();
    if rank < target_dim {
        return Err(Error::RankDeficient {
            requested: target_dim,
            achievable: rank,
        });
    }
    let basis = vectors
        .into_iter()
        .take(target_dim)
        .map(|mut col| {
            let pivot = col
                .iter()
                .copied()
                .max_by(|a, b| a.abs().total_cmp(&b.abs()))
                .unwrap_or(0.0);
            if pivot < 0.0 {
                col.iter_mut().for_each(|x| *x = -*x);
            }
            col
        })
        .collect();
    Ok(PcaModel {
        mean,
        basis,
        eigenvalues: values.into_iter().take(target_dim).collect(),
    })
}

pub fn apply_pca(model: &PcaModel, x: &[f64]) -> Result<Vec<f64>> {
    model.project(x)
}

pub const DEFAULT_WINDOW: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FvEncoderConfig {
    pub gmm: Gmm,
    pub window: usize,
    #[serde(default)]
    pub signed_sqrt: bool,
}

impl FvEncoderConfig {
    pub fn new(gmm: Gmm) -> Self {
        Self {
            gmm,
            window: DEFAULT_WINDOW,
            signed_sqrt: false,
        }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.gmm.num_components() * self.gmm.dim()
    }

    /// Inclusive frame range of the window centred on `t`, clamped to the clip.
    pub fn window_bounds(&self, t: usize, len: usize) -> (usize, usize) {
        let lo = t.saturating_sub(self.window / 2);
        let hi = (t + (self.window.max(1) - 1) / 2).min(len - 1);
        (lo, hi)
    }

    /// Adds one frame's unnormalised gradient statistics into `acc`.
    fn accumulate_frame(&self, x: &[f64], acc: &mut [f64], buf: &mut Vec<f64>) {
        let g = &self.gmm;
        let d = g.dim();
        let total = g.log_joint_into(x, buf);
        for (k, &lj) in buf.iter().enumerate() {
            let q = (lj - total).exp();
            if q == 0.0 {
                continue;
            }
            let base = 2 * k * d;
            for i in 0..d {
                let z = (x[i] - g.means()[k][i]) / g.variances()[k][i].sqrt();
                acc[base + i] += q * z;
                acc[base + d + i] += q * (z * z - 1.0);
            }
        }
    }

    fn finish(&self, mut acc: Vec<f64>, count: usize) -> Vec<f64> {
        let g = &self.gmm;
        let d = g.dim();
        for k in 0..g.num_components() {
            let w = g.weights()[k];
            let (mean_scale, var_scale) = if w > 0.0 {
                (1.0 / (count as f64 * w.sqrt()), 1.0 / (count as f64 * (2.0 * w).sqrt()))
            } else {
                (0.0, 0.0)
            };
            let base = 2 * k * d;
            acc[base..base + d].iter_mut().for_each(|v| *v *= mean_scale);
            acc[base + d..base + 2 * d].iter_mut().for_each(|v| *v *= var_scale);
        }
        if self.signed_sqrt {
            acc.iter_mut().for_each(|v| *v = v.signum() * v.abs().sqrt());
        }
        acc
    }

    fn encode_window(&self, frames: &FeatureSequence, lo: usize, hi: usize) -> Vec<f64> {
        let mut acc = vec![0.0; self.output_dim()];
        let mut buf = Vec::with_capacity(self.gmm.num_components());
        for t in lo..=hi {
            self.accumulate_frame(frames.frame(t), &mut acc, &mut buf);
        }
        self.finish(acc, hi + 1 - lo)
    }
}

/// Fisher vector of the window around frame `t`: per component, the
/// normalised gradients with respect to the mean and the variance.
pub fn encode_fv(frames: &FeatureSequence, cfg: &FvEncoderConfig, t: usize) -> Result<Vec<f64>> {
    if frames.is_empty() {
        return Err(Error::Data("cannot encode an empty clip".into()));
    }
    if t >= frames.len() {
        return Err(Error::Data(format!("frame {t} outside clip of {} frames", frames.len())));
    }
    if frames.dim() != cfg.gmm.dim() {
        return Err(Error::DimensionMismatch {
            expected: cfg.gmm.dim(),
            got: frames.dim(),
        });
    }
    if cfg.window == 0 {
        return Err(Error::Config("window must be at least 1 frame".into()));
    }
    let (lo, hi) = cfg.window_bounds(t, frames.len());
    Ok(cfg.encode_window(frames, lo, hi))
}

/// Scales every dimension to unit L2 norm over the clip; all-zero dimensions
/// stay zero.
pub fn l2_normalize_dims(seq: &FeatureSequence) -> FeatureSequence {
    let dim = seq.dim();
    let mut norms = vec![0.0; dim];
    for x in seq.frames() {
        for (n, v) in norms.iter_mut().zip(x) {
            *n += v * v;
        }
    }
    norms.iter_mut().for_each(|n| *n = n.sqrt());
    let data = seq
        .frames()
        .flat_map(|x| x.iter().zip(&norms).map(|(v, n)| if *n > 0.0 { v / n } else { 0.0 }))
        .collect();
    FeatureSequence::from_flat(seq.clip_id(), dim, data, seq.frame_rate()).expect("same shape as input")
}

pub fn encode_clip(
    frames: &FeatureSequence,
    pca1: &PcaModel,
    cfg: &FvEncoderConfig,
    pca2: &PcaModel,
) -> Result<FeatureSequence> {
    if cfg.output_dim() != pca2.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: pca2.input_dim(),
            got: cfg.output_dim(),
        });
    }
    let reduced = reduce(frames, pca1)?;
    let fvs = encode_all(&reduced, cfg)?;
    let mut data = Vec::with_capacity(frames.len() * pca2.output_dim());
    for fv in &fvs {
        data.extend(pca2.project_unchecked(fv));
    }
    let out = FeatureSequence::from_flat(frames.clip_id(), pca2.output_dim(), data, frames.frame_rate())?;
    Ok(l2_normalize_dims(&out))
}

fn reduce(frames: &FeatureSequence, pca: &PcaModel) -> Result<FeatureSequence> {
    let mut data = Vec::with_capacity(frames.len() * pca.output_dim());
    for x in frames.frames() {
        data.extend(pca.project(x)?);
    }
    FeatureSequence::from_flat(frames.clip_id(), pca.output_dim(), data, frames.frame_rate())
}

fn encode_all(frames: &FeatureSequence, cfg: &FvEncoderConfig) -> Result<Vec<Vec<f64>>> {
    (0..frames.len()).map(|t| encode_fv(frames, cfg, t)).collect()
}

pub const FEATURE_MODEL_VERSION: u32 = 1;
pub const DEFAULT_SAMPLE_CAP: usize = 200_000;

#[derive(Debug, Clone)]
pub struct PipelineFitOptions {
    pub pca1_dim: usize,
    pub fv_components: usize,
    pub window: usize,
    pub pca2_dim: usize,
    pub signed_sqrt: bool,
    /// Maximum number of base descriptors sampled for PCA and GMM fitting.
    pub sample_cap: usize,
    /// Maximum number of Fisher vectors sampled for the second PCA.
    pub fv_sample_cap: usize,
    pub seed: u64,
}

impl Default for PipelineFitOptions {
    fn default() -> Self {
        Self {
            pca1_dim: 64,
            fv_components: 64,
            window: DEFAULT_WINDOW,
            pca2_dim: 64,
            signed_sqrt: false,
            sample_cap: DEFAULT_SAMPLE_CAP,
            fv_sample_cap: 10_000,
            seed: 0,
        }
    }
}

/// Fitted feature transform, stored as one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureModel {
    pub version: u32,
    pub seed: u64,
    pub sample_cap: usize,
    pub pca1: PcaModel,
    pub encoder: FvEncoderConfig,
    pub pca2: PcaModel,
}

impl FeatureModel {
    pub fn fit(clips: &[FeatureSequence], opts: &PipelineFitOptions) -> Result<Self> {
        let total: usize = clips.iter().map(FeatureSequence::len).sum();
        if total == 0 {
            return Err(Error::Data("no frames to fit the feature model on".into()));
        }
        let all: Vec<&[f64]> = clips.iter().flat_map(FeatureSequence::frames).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut picked = sample_indices(&mut rng, all.len(), opts.sample_cap.min(all.len())).into_vec();
        picked.sort_unstable();
        let sample: Vec<&[f64]> = picked.iter().map(|&i| all[i]).collect();

        let pca1 = fit_pca(&sample, opts.pca1_dim)?;
        let projected: Vec<Vec<f64>> = sample.iter().map(|x| pca1.project_unchecked(x)).collect();
        let refs: Vec<&[f64]> = projected.iter().map(Vec::as_slice).collect();
        let mut em = EmOptions::new(opts.fv_components, opts.seed);
        em.max_iter = 50;
        let gmm = fit_em_with(&refs, &em)?.gmm;
        let encoder = FvEncoderConfig {
            gmm,
            window: opts.window,
            signed_sqrt: opts.signed_sqrt,
        };

        let reduced: Vec<FeatureSequence> = clips.iter().map(|c| reduce(c, &pca1)).collect::<Result<_>>()?;
        let positions: Vec<(usize, usize)> = reduced
            .iter()
            .enumerate()
            .flat_map(|(c, seq)| (0..seq.len()).map(move |t| (c, t)))
            .collect();
        let mut fv_pick = sample_indices(&mut rng, positions.len(), opts.fv_sample_cap.min(positions.len())).into_vec();
        fv_pick.sort_unstable();
        let fvs: Vec<Vec<f64>> = fv_pick
            .iter()
            .map(|&i| {
                let (c, t) = positions[i];
                encode_fv(&reduced[c], &encoder, t)
            })
            .collect::<Result<_>>()?;
        let fv_refs: Vec<&[f64]> = fvs.iter().map(Vec::as_slice).collect();
        let pca2 = fit_pca(&fv_refs, opts.pca2_dim)?;
        Ok(Self {
            version: FEATURE_MODEL_VERSION,
            seed: opts.seed,
            sample_cap: opts.sample_cap,
            pca1,
            encoder,
            pca2,
        })
    }

    pub fn encode(&self, clip: &FeatureSequence) -> Result<FeatureSequence> {
        encode_clip(clip, &self.pca1, &self.encoder, &self.pca2)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        if model.version != FEATURE_MODEL_VERSION {
            return Err(Error::Data(format!("unsupported feature model version {}", model.version)));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(Vec::as_slice).collect()
    }

    fn seq(frames: &[Vec<f64>]) -> FeatureSequence {
        FeatureSequence::new("c", frames, 15.0).unwrap()
    }

    fn unit_codebook(k: usize, d: usize) -> Gmm {
        Gmm::new(
            vec![1.0 / k as f64; k],
            (0..k).map(|i| vec![i as f64 * 5.0; d]).collect(),
            vec![vec![1.0; d]; k],
        )
        .unwrap()
    }

    #[test]
    fn pca_on_diagonal_line() {
        let pts: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, i as f64]).collect();
        let pca = fit_pca(&refs(&pts), 1).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((pca.basis[0][0] - s).abs() < 1e-9 && (pca.basis[0][1] - s).abs() < 1e-9);
    }

    #[test]
    fn full_rank_pca_reconstructs_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Vec<f64>> = (0..200).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let pca = fit_pca(&refs(&pts), 3).unwrap();
        for p in &pts {
            let back = pca.reconstruct(&pca.project(p).unwrap());
            for (a, b) in back.iter().zip(p) {
                assert!((a - b).abs() < 1e-9);
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = pca.basis[i].iter().zip(&pca.basis[j]).map(|(a, b)| a * b).sum();
                assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn pca_reports_achievable_rank() {
        let pts = vec![vec![0.0; 6], vec![1.0; 6], vec![0.5, 2.0, 0.0, 1.0, 3.0, 1.0]];
        match fit_pca(&refs(&pts), 5) {
            Err(Error::RankDeficient { requested: 5, achievable }) => assert!(achievable <= 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pca_projection_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<Vec<f64>> = (0..50).map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect();
        let pca = fit_pca(&refs(&pts), 2).unwrap();
        assert!(apply_pca(&pca, &pca.mean).unwrap().iter().all(|v| v.abs() < 1e-12));
        let x: Vec<f64> = pca.mean.iter().zip(&pca.basis[0]).map(|(m, b)| m + b).collect();
        let y = apply_pca(&pca, &x).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-9 && y[1].abs() < 1e-9);
        assert!(apply_pca(&pca, &[1.0]).is_err());
    }

    #[test]
    fn fv_single_gaussian_closed_form() {
        let cfg = FvEncoderConfig {
            gmm: Gmm::single(vec![0.0], vec![1.0]).unwrap(),
            window: 1,
            signed_sqrt: false,
        };
        for x in [-1.7, 0.0, 0.4, 2.5] {
            let fv = encode_fv(&seq(&[vec![x]]), &cfg, 0).unwrap();
            // gradient oracle for K=1, d=1, N(0,1): d/dmu = x, d/dsigma-term = (x^2-1)/sqrt(2)
            assert!((fv[0] - x).abs() < 1e-12);
            assert!((fv[1] - (x * x - 1.0) / 2f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn fv_at_component_mean_has_zero_mean_gradient() {
        let cfg = FvEncoderConfig {
            gmm: unit_codebook(2, 3),
            window: 4,
            signed_sqrt: false,
        };
        let frames = vec![vec![5.0; 3]; 6];
        let fv = encode_fv(&seq(&frames), &cfg, 2).unwrap();
        // component 1 sits at 5.0; its mean block is entries 6..9
        assert!(fv[6..9].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn window_is_centred_and_clamped() {
        let cfg = FvEncoderConfig::new(unit_codebook(1, 1));
        assert_eq!(cfg.window_bounds(0, 5), (0, 4));
        assert_eq!(cfg.window_bounds(50, 100), (40, 59));
        assert_eq!(cfg.window_bounds(99, 100), (89, 99));
        let one = FvEncoderConfig { window: 1, ..cfg.clone() };
        assert_eq!(one.window_bounds(3, 5), (3, 3));
    }

    #[test]
    fn fv_is_mean_of_frame_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let frames: Vec<Vec<f64>> = (0..9).map(|_| (0..2).map(|_| rng.random::<f64>() * 6.0).collect()).collect();
        let s = seq(&frames);
        let cfg = FvEncoderConfig {
            gmm: unit_codebook(2, 2),
            window: 5,
            signed_sqrt: false,
        };
        let single = FvEncoderConfig { window: 1, ..cfg.clone() };
        let t = 4;
        let (lo, hi) = cfg.window_bounds(t, s.len());
        let win = encode_fv(&s, &cfg, t).unwrap();
        let mut mean = vec![0.0; win.len()];
        for u in lo..=hi {
            for (m, v) in mean.iter_mut().zip(encode_fv(&s, &single, u).unwrap()) {
                *m += v / (hi + 1 - lo) as f64;
            }
        }
        for (a, b) in win.iter().zip(&mean) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn identical_frames_normalize_to_inverse_sqrt_len() {
        let frames = vec![vec![2.0, -3.0, 0.0]; 4];
        let out = l2_normalize_dims(&seq(&frames));
        for x in out.frames() {
            assert!((x[0] - 0.5).abs() < 1e-12);
            assert!((x[1] + 0.5).abs() < 1e-12);
            assert_eq!(x[2], 0.0);
        }
        let single = l2_normalize_dims(&seq(&[vec![0.3, -7.0]]));
        assert_eq!(single.frame(0), &[1.0, -1.0]);
    }

    fn fitted_model() -> (Vec<FeatureSequence>, FeatureModel) {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let clips: Vec<FeatureSequence> = (0..4)
            .map(|c| {
                let frames: Vec<Vec<f64>> = (0..30)
                    .map(|t| (0..6).map(|d| ((t + d + c) % 5) as f64 + rng.random::<f64>()).collect())
                    .collect();
                seq(&frames).with_clip_id(format!("c{c}"))
            })
            .collect();
        let opts = PipelineFitOptions {
            pca1_dim: 3,
            fv_components: 2,
            window: 5,
            pca2_dim: 4,
            seed: 9,
            ..Default::default()
        };
        let model = FeatureModel::fit(&clips, &opts).unwrap();
        (clips, model)
    }

    #[test]
    fn encoded_clip_dims_have_unit_norm() {
        let (clips, model) = fitted_model();
        assert_eq!(model.encoder.output_dim(), 12);
        let out = model.encode(&clips[0]).unwrap();
        assert_eq!((out.len(), out.dim()), (30, 4));
        for d in 0..4 {
            let n: f64 = out.frames().map(|x| x[d] * x[d]).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-9 || n == 0.0);
        }
        let back = FeatureModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn translation_with_mean_is_invisible() {
        let (clips, model) = fitted_model();
        let shift = [3.0, -1.0, 0.5, 2.0, 0.0, 7.0];
        let moved_frames: Vec<Vec<f64>> = clips[1]
            .frames()
            .map(|x| x.iter().zip(&shift).map(|(a, b)| a + b).collect())
            .collect();
        let mut moved_model = model.clone();
        moved_model.pca1.mean.iter_mut().zip(&shift).for_each(|(m, s)| *m += s);
        let a = model.encode(&clips[1]).unwrap();
        let b = moved_model.encode(&seq(&moved_frames)).unwrap();
        for (x, y) in a.as_flat().iter().zip(b.as_flat()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn paper_scale_dimensions() {
        let cfg = FvEncoderConfig::new(unit_codebook(64, 64));
        assert_eq!(cfg.output_dim(), 8192);
    }

    proptest! {
        #[test]
        fn projection_is_idempotent(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Vec<f64>> = (0..30).map(|_| (0..5).map(|_| rng.random::<f64>()).collect()).collect();
            let pca = fit_pca(&refs(&pts), 3).unwrap();
            let x: Vec<f64> = (0..5).map(|_| rng.random::<f64>() * 4.0).collect();
            let y = pca.project(&x).unwrap();
            let y2 = pca.project(&pca.reconstruct(&y)).unwrap();
            for (a, b) in y.iter().zip(&y2) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
