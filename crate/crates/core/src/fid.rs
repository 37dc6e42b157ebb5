//! Frechet distance between Gaussian fits of feature sets.
//!
//! `d^2 = |mu_r - mu_g|^2 + tr(S_r + S_g - 2 (S_r^1/2 S_g S_r^1/2)^1/2)`
//!
//! Two feature extractors are provided. [`PixelStats`] needs no training
//! and is the default; [`TrainedProbe`] uses the trunk of a small
//! domain classifier trained on the dataset. Neither is comparable to
//! Inception-based scores.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{one_hot, Discriminator, Generator, ModelConfig, Variant};
use crate::optim::{AdamConfig, AdamState};
use crate::rng::Rng;
use crate::tape::Tape;
use crate::tensor::Tensor;

const SYMMETRY_TOL: f64 = 1e-6;
const NEGATIVE_TOL: f64 = 1e-8;
const GEN_BATCH: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianStats {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub n: usize,
}

impl GaussianStats {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Column means and unbiased covariance of `features` (one row per sample).
pub fn gaussian_stats(features: &DMatrix<f64>) -> Result<GaussianStats> {
    let (n, d) = features.shape();
    if n < 2 {
        return Err(Error::invalid(
            "gaussian_stats",
            format!("need at least 2 samples, got {n}"),
        ));
    }
    let mu = DVector::from_iterator(d, features.column_iter().map(|c| c.sum() / n as f64));
    let mut centered = features.clone();
    for mut row in centered.row_iter_mut() {
        row -= mu.transpose();
    }
    let s = centered.transpose() * &centered / (n as f64 - 1.0);
    let sigma = (&s + s.transpose()) * 0.5;
    Ok(GaussianStats { mu, sigma, n })
}

fn check_symmetric(op: &'static str, a: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() {
        return Err(Error::invalid(
            op,
            format!("matrix is {}x{}, not square", a.nrows(), a.ncols()),
        ));
    }
    let asym = (a - a.transpose()).amax();
    if asym > SYMMETRY_TOL * a.amax().max(1.0) {
        return Err(Error::invalid(
            op,
            format!("matrix is not symmetric (max |a - a^T| = {asym:e})"),
        ));
    }
    Ok(())
}

fn sym_eigen(a: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    SymmetricEigen::new((a + a.transpose()) * 0.5)
}

/// Principal square root of a symmetric PSD matrix, negative eigenvalues clamped to 0.
pub fn sqrtm_psd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric("sqrtm_psd", a)?;
    let e = sym_eigen(a);
    let root = e.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &e.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&root) * v.transpose())
}

pub fn frechet_distance(r: &GaussianStats, g: &GaussianStats) -> Result<f64> {
    if r.dim() != g.dim() || r.sigma.nrows() != r.dim() || g.sigma.nrows() != g.dim() {
        return Err(Error::invalid(
            "frechet_distance",
            format!("dimension mismatch: {} vs {}", r.dim(), g.dim()),
        ));
    }
    let root_r = sqrtm_psd(&r.sigma)?;
    check_symmetric("frechet_distance", &g.sigma)?;
    let sandwich = &root_r * &g.sigma * &root_r;
    let cross: f64 = sym_eigen(&sandwich)
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .sum();
    let mean_term = (&r.mu - &g.mu).norm_squared();
    let d2 = mean_term + r.sigma.trace() + g.sigma.trace() - 2.0 * cross;
    let scale = (r.sigma.trace() + g.sigma.trace() + mean_term).max(1.0);
    if d2 < 0.0 {
        if d2 < -NEGATIVE_TOL * scale {
            log::warn!("frechet distance residue {d2:e} below tolerance, clamped to 0");
        }
        return Ok(0.0);
    }
    Ok(d2)
}

/// Maps `(n, 3, h, w)` images to an `n x dim` feature matrix.
pub trait FeatureExtractor: Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn features(&self, images: &Tensor) -> Result<DMatrix<f64>>;
}

/// 64 hand-made features: a 4x4 average-pooled thumbnail per channel (48),
/// per-channel mean, std and mean absolute horizontal/vertical gradient
/// (12), pairwise channel correlations (3) and luminance std (1).
#[derive(Clone, Copy, Debug, Default)]
pub struct PixelStats;

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (
        m,
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt(),
    )
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, sa) = mean_std(a);
    let (mb, sb) = mean_std(b);
    if sa < 1e-12 || sb < 1e-12 {
        return 0.0;
    }
    let cov = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / a.len() as f64;
    cov / (sa * sb)
}

impl PixelStats {
    pub const DIM: usize = 64;

    fn one(image: &[f64], h: usize, w: usize) -> Vec<f64> {
        let plane = h * w;
        let ch: Vec<&[f64]> = image.chunks(plane).collect();
        let mut f = Vec::with_capacity(Self::DIM);
        for c in &ch {
            for gy in 0..4 {
                for gx in 0..4 {
                    let (y0, y1) = (gy * h / 4, (gy + 1) * h / 4);
                    let (x0, x1) = (gx * w / 4, (gx + 1) * w / 4);
                    let mut s = 0.0;
                    for y in y0..y1 {
                        s += c[y * w + x0..y * w + x1].iter().sum::<f64>();
                    }
                    f.push(s / ((y1 - y0) * (x1 - x0)) as f64);
                }
            }
        }
        for c in &ch {
            let (m, s) = mean_std(c);
            let mut dx = 0.0;
            let mut dy = 0.0;
            for y in 0..h {
                for x in 0..w {
                    if x + 1 < w {
                        dx += (c[y * w + x + 1] - c[y * w + x]).abs();
                    }
                    if y + 1 < h {
                        dy += (c[(y + 1) * w + x] - c[y * w + x]).abs();
                    }
                }
            }
            f.extend([m, s, dx / (h * (w - 1)) as f64, dy / ((h - 1) * w) as f64]);
        }
        f.push(correlation(ch[0], ch[1]));
        f.push(correlation(ch[1], ch[2]));
        f.push(correlation(ch[0], ch[2]));
        let lum: Vec<f64> = (0..plane)
            .map(|i| 0.299 * ch[0][i] + 0.587 * ch[1][i] + 0.114 * ch[2][i])
            .collect();
        f.push(mean_std(&lum).1);
        f
    }
}

impl FeatureExtractor for PixelStats {
    fn name(&self) -> &str {
        "pixel-stats"
    }

    fn dim(&self) -> usize {
        Self::DIM
    }

    fn features(&self, images: &Tensor) -> Result<DMatrix<f64>> {
        let s = images.shape();
        if s.c != 3 || s.h < 4 || s.w < 4 {
            return Err(Error::invalid(
                "PixelStats",
                format!("expected (n, 3, h>=4, w>=4), got {s}"),
            ));
        }
        let rows: Vec<Vec<f64>> = (0..s.n)
            .into_par_iter()
            .map(|i| Self::one(images.sample(i), s.h, s.w))
            .collect();
        Ok(DMatrix::from_row_iterator(
            s.n,
            Self::DIM,
            rows.into_iter().flatten(),
        ))
    }
}

/// Trunk of a discriminator-shaped domain classifier, trained only on the
/// classification loss; features are the spatially averaged trunk output.
#[derive(Clone, Debug)]
pub struct TrainedProbe {
    net: Discriminator,
}

impl TrainedProbe {
    pub fn train(dataset: &Dataset, iters: usize, seed: u64) -> Result<Self> {
        let mut model = ModelConfig::preset(crate::models::Scale::Desk, Variant::Baseline);
        model.image_size = dataset.image_size();
        model.num_domains = dataset.num_domains();
        model.d_repeat = 3.min(model.image_size.trailing_zeros() as usize);
        let mut rng = Rng::new(seed);
        let mut net = Discriminator::new(model, &mut rng)?;
        let mut opt = AdamState::new(net.params());
        let adam = AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            ..AdamConfig::default()
        };
        let batch = 16.min(dataset.len());
        for _ in 0..iters {
            let idx: Vec<usize> = (0..batch).map(|_| rng.below(dataset.len())).collect();
            let b = dataset.batch(&idx);
            let mut tape = Tape::new();
            let bound = net.params().bind(&mut tape, true);
            let x = tape.constant(b.images);
            let (_, cls) = net.forward(&mut tape, &bound, x)?;
            let loss = tape.softmax_cross_entropy(cls, &b.labels)?;
            tape.backward(loss)?;
            let grads = net.params().grads(&tape, &bound);
            opt.update(&adam, net.params_mut(), &grads)?;
        }
        Ok(TrainedProbe { net })
    }

    /// Fraction of `dataset` the probe's classification head gets right.
    pub fn accuracy(&self, dataset: &Dataset) -> Result<f64> {
        let (_, cls) = self.net.discriminate(dataset.images())?;
        let k = dataset.num_domains();
        let correct = cls
            .data()
            .chunks(k)
            .zip(dataset.labels())
            .filter(|(row, &l)| row.iter().enumerate().all(|(j, &v)| j == l || v < row[l]))
            .count();
        Ok(correct as f64 / dataset.len() as f64)
    }
}

impl FeatureExtractor for TrainedProbe {
    fn name(&self) -> &str {
        "trained-probe"
    }

    fn dim(&self) -> usize {
        let cfg = self.net.config();
        cfg.base_channels << (cfg.d_repeat - 1)
    }

    fn features(&self, images: &Tensor) -> Result<DMatrix<f64>> {
        let mut tape = Tape::new();
        let bound = self.net.params().bind(&mut tape, false);
        let x = tape.constant(images.clone());
        let h = self.net.features(&mut tape, &bound, x)?;
        let t = tape.value(h);
        let s = t.shape();
        let plane = s.plane() as f64;
        let pooled = t
            .data()
            .chunks(s.plane())
            .map(|p| p.iter().sum::<f64>() / plane);
        Ok(DMatrix::from_row_iterator(s.n, s.c, pooled))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FidReport {
    pub extractor: String,
    pub dim: usize,
    pub n_real: usize,
    pub n_gen: usize,
    pub fid: f64,
}

impl FidReport {
    pub const HEADER: &'static str = "extractor,d,n_real,n_gen,fid";

    pub fn line(&self) -> String {
        format!(
            "{},{},{},{},{:.6}",
            self.extractor, self.dim, self.n_real, self.n_gen, self.fid
        )
    }
}

fn extract(extractor: &dyn FeatureExtractor, images: &Tensor) -> Result<DMatrix<f64>> {
    let f = extractor.features(images)?;
    if f.ncols() != extractor.dim() || f.nrows() != images.shape().n {
        return Err(Error::invalid(
            "fid",
            format!(
                "extractor {} produced {}x{} features, expected {}x{}",
                extractor.name(),
                f.nrows(),
                f.ncols(),
                images.shape().n,
                extractor.dim()
            ),
        ));
    }
    Ok(f)
}

/// FID between two image sets.
pub fn fid_between(
    real: &Tensor,
    generated: &Tensor,
    extractor: &dyn FeatureExtractor,
) -> Result<FidReport> {
    let (n_real, n_gen) = (real.shape().n, generated.shape().n);
    if n_real.min(n_gen) <= extractor.dim() {
        log::warn!(
            "{} samples for {}-dimensional features: covariance is rank-deficient",
            n_real.min(n_gen),
            extractor.dim()
        );
    }
    let r = gaussian_stats(&extract(extractor, real)?)?;
    let g = gaussian_stats(&extract(extractor, generated)?)?;
    Ok(FidReport {
        extractor: extractor.name().to_string(),
        dim: extractor.dim(),
        n_real,
        n_gen,
        fid: frechet_distance(&r, &g)?,
    })
}

/// Seeded inputs and target labels for FID evaluation. Inputs walk a
/// seeded permutation of the dataset, cycling when `n` exceeds its size.
pub fn fid_inputs(dataset: &Dataset, n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = Rng::with_stream(seed, 0xf1d);
    let perm = rng.permutation(dataset.len());
    let idx = (0..n).map(|i| perm[i % perm.len()]).collect();
    let targets = (0..n).map(|_| rng.below(dataset.num_domains())).collect();
    (idx, targets)
}

/// FID of `translate(x, c)` against the inputs `x` themselves.
pub fn fid_of_translation(
    translate: impl Fn(&Tensor, &Tensor) -> Result<Tensor>,
    dataset: &Dataset,
    extractor: &dyn FeatureExtractor,
    n_samples: usize,
    seed: u64,
) -> Result<FidReport> {
    let (idx, targets) = fid_inputs(dataset, n_samples, seed);
    let real = dataset.images().gather(&idx);
    let mut parts = Vec::new();
    for (i, t) in idx.chunks(GEN_BATCH).zip(targets.chunks(GEN_BATCH)) {
        let x = dataset.images().gather(i);
        parts.push(translate(&x, &one_hot(t, dataset.num_domains())?)?);
    }
    fid_between(&real, &Tensor::stack(&parts)?, extractor)
}

pub fn fid_of_model(
    g: &Generator,
    dataset: &Dataset,
    extractor: &dyn FeatureExtractor,
    n_samples: usize,
    seed: u64,
) -> Result<FidReport> {
    if dataset.num_domains() > g.config().num_domains {
        return Err(Error::invalid(
            "fid_of_model",
            "dataset has more domains than the generator",
        ));
    }
    let n = g.config().num_domains;
    fid_of_translation(
        |x, c| {
            // widen the label if the dataset uses fewer domains than the model
            let mut wide = Tensor::zeros([c.shape().n, n, 1, 1]);
            for i in 0..c.shape().n {
                for j in 0..c.shape().c {
                    wide.set(i, j, 0, 0, c.at(i, j, 0, 0));
                }
            }
            g.generate(x, &wide)
        },
        dataset,
        extractor,
        n_samples,
        seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DomainSpec;

    fn stats1(mu: f64, var: f64) -> GaussianStats {
        GaussianStats {
            mu: DVector::from_element(1, mu),
            sigma: DMatrix::from_element(1, 1, var),
            n: 2,
        }
    }

    #[test]
    fn two_point_stats() {
        let f = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 2.0, 2.0]);
        let s = gaussian_stats(&f).unwrap();
        assert_eq!(s.mu.as_slice(), &[1.0, 1.0]);
        assert_eq!(s.sigma, DMatrix::from_element(2, 2, 2.0));
        assert!(gaussian_stats(&DMatrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn constant_rows_have_zero_covariance() {
        let f = DMatrix::from_fn(5, 3, |_, j| j as f64);
        assert_eq!(gaussian_stats(&f).unwrap().sigma, DMatrix::zeros(3, 3));
    }

    #[test]
    fn small_square_roots() {
        let i = DMatrix::<f64>::identity(3, 3);
        assert!((sqrtm_psd(&i).unwrap() - &i).amax() < 1e-15);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let s = sqrtm_psd(&d).unwrap();
        assert!((s - DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]))).amax() < 1e-14);
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(sqrtm_psd(&asym).is_err());
    }

    #[test]
    fn one_dimensional_closed_forms() {
        assert!(
            (frechet_distance(&stats1(0.0, 1.0), &stats1(1.0, 1.0)).unwrap() - 1.0).abs() < 1e-9
        );
        assert!(
            (frechet_distance(&stats1(0.0, 4.0), &stats1(0.0, 1.0)).unwrap() - 1.0).abs() < 1e-9
        );
        assert!(frechet_distance(
            &stats1(0.0, 1.0),
            &GaussianStats {
                mu: DVector::zeros(2),
                sigma: DMatrix::identity(2, 2),
                n: 2
            }
        )
        .is_err());
    }

    #[test]
    fn pixel_stats_shape_and_determinism() {
        let data = Dataset::render(DomainSpec::new(2).unwrap(), 3, 16, 1).unwrap();
        let a = PixelStats.features(data.images()).unwrap();
        assert_eq!(a.shape(), (6, 64));
        assert_eq!(a, PixelStats.features(data.images()).unwrap());
        // the thumbnail of a constant image is that constant
        let f = PixelStats
            .features(&Tensor::full([1, 3, 8, 8], 0.25))
            .unwrap();
        assert!(f.row(0).iter().take(48).all(|&v| v == 0.25));
    }

    #[test]
    fn pass_through_scores_zero() {
        let data = Dataset::render(DomainSpec::new(2).unwrap(), 40, 16, 2).unwrap();
        let r = fid_of_translation(|x, _| Ok(x.clone()), &data, &PixelStats, 100, 3).unwrap();
        assert!(r.fid < 1e-6, "{}", r.fid);
        assert_eq!(r.line().split(',').count(), 5);
        let noise =
            fid_of_translation(|x, _| Ok(x.map(|v| 0.2 * v)), &data, &PixelStats, 100, 3).unwrap();
        assert!(noise.fid > r.fid);
    }
}
