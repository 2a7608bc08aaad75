//! Multinomial logistic regression with a folded-in bias row.
//!
//! Weights form a `(pixels + 1) × 10` matrix acting on pixel vectors
//! extended by a constant-1 feature.  Training is full batch: one
//! gradient step per epoch over the whole training split.
//!
//! The low-precision path quantizes the training pixels into the target
//! format once (round-to-nearest, cached per format) and then rounds every
//! forward product, partial sum, softmax intermediate, residual, and
//! backward accumulation under the configured mode.  Zero pixels
//! contribute exact zeros and are skipped, which changes no result bits.
//! Held-out evaluation and the exact gradient path stay in working
//! precision on the raw pixels.

use std::sync::{Arc, Mutex};

use crate::format::FloatFormat;
use crate::kernels::LPVector;
use crate::problems::{Dataset, Problem};
use crate::rng::RandomStream;
use crate::rounding::{round_f64, RoundingError, RoundingMode};

pub const CLASSES: usize = 10;

pub struct MlrProblem {
    train: Dataset,
    test: Dataset,
    prepared: Mutex<Vec<(FloatFormat, Arc<LPVector>)>>,
}

impl MlrProblem {
    /// Both datasets must be nonempty, share the pixel count, and carry
    /// full 0-9 labels.
    pub fn new(train: Dataset, test: Dataset) -> Self {
        assert!(!train.is_empty() && !test.is_empty(), "datasets must be nonempty");
        assert_eq!(train.pixels(), test.pixels(), "pixel shape mismatch");
        MlrProblem {
            train,
            test,
            prepared: Mutex::new(Vec::new()),
        }
    }

    pub fn train_set(&self) -> &Dataset {
        &self.train
    }

    pub fn test_set(&self) -> &Dataset {
        &self.test
    }

    /// Pixel features plus the constant-1 bias feature.
    pub fn features(&self) -> usize {
        self.train.pixels() + 1
    }

    /// The zero matrix; every format represents it exactly.
    pub fn initial_weights(&self) -> Vec<f64> {
        vec![0.0; self.features() * CLASSES]
    }

    /// Fraction of the test split misclassified by argmax score, evaluated
    /// in working precision.  Ties resolve to the lowest class index.
    pub fn test_error(&self, x: &[f64]) -> f64 {
        let mut wrong = 0usize;
        for i in 0..self.test.len() {
            let s = scores(x, self.test.image(i));
            let mut best = 0usize;
            for c in 1..CLASSES {
                if s[c] > s[best] {
                    best = c;
                }
            }
            if best != self.test.label(i) as usize {
                wrong += 1;
            }
        }
        wrong as f64 / self.test.len() as f64
    }

    pub(crate) fn prepare(&self, fmt: FloatFormat) -> Result<Arc<LPVector>, RoundingError> {
        let mut cache = self.prepared.lock().unwrap();
        if let Some((_, p)) = cache.iter().find(|(f, _)| *f == fmt) {
            return Ok(p.clone());
        }
        // Training pixels enter the format once, deterministically.
        let mut qs = RandomStream::new(0);
        let q = LPVector::quantize(
            self.train.images_flat(),
            fmt,
            RoundingMode::NearestEven,
            &mut qs,
        )?;
        let p = Arc::new(q);
        cache.push((fmt, p.clone()));
        Ok(p)
    }
}

/// Class scores `Wᵀ[x;1]` in working precision, skipping zero pixels.
fn scores(x: &[f64], image: &[f64]) -> [f64; CLASSES] {
    let mut s = [0.0; CLASSES];
    for (j, &v) in image.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let row = &x[j * CLASSES..(j + 1) * CLASSES];
        for c in 0..CLASSES {
            s[c] += v * row[c];
        }
    }
    let bias = &x[image.len() * CLASSES..(image.len() + 1) * CLASSES];
    for c in 0..CLASSES {
        s[c] += bias[c];
    }
    s
}

/// Stable in-place softmax.
fn softmax(s: &mut [f64; CLASSES]) {
    let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in s.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    for v in s.iter_mut() {
        *v /= sum;
    }
}

impl Problem for MlrProblem {
    fn dim(&self) -> usize {
        self.features() * CLASSES
    }

    /// Mean cross-entropy loss over the training split, working precision.
    fn objective(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for i in 0..self.train.len() {
            let s = scores(x, self.train.image(i));
            let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = s.iter().map(|v| (v - m).exp()).sum();
            total += m + sum.ln() - s[self.train.label(i) as usize];
        }
        total / self.train.len() as f64
    }

    fn gradient_exact(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let pixels = self.train.pixels();
        for i in 0..self.train.len() {
            let mut p = scores(x, self.train.image(i));
            softmax(&mut p);
            p[self.train.label(i) as usize] -= 1.0;
            for (j, &v) in self.train.image(i).iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                let row = &mut out[j * CLASSES..(j + 1) * CLASSES];
                for c in 0..CLASSES {
                    row[c] += v * p[c];
                }
            }
            let bias = &mut out[pixels * CLASSES..(pixels + 1) * CLASSES];
            for c in 0..CLASSES {
                bias[c] += p[c];
            }
        }
        let inv = 1.0 / self.train.len() as f64;
        for v in out.iter_mut() {
            *v *= inv;
        }
    }

    /// Full-batch gradient with every operation rounded under `mode`:
    /// forward scores, shifted exponentials, their sum and quotients, the
    /// residual, each backward product and accumulation, and the final
    /// scaling by the rounded `1/n`.  Sample `i` draws from a fork of the
    /// stream keyed by `i`, so draws do not depend on sparsity patterns.
    fn gradient_lp(
        &self,
        x: &LPVector,
        mode: RoundingMode,
        stream: &mut RandomStream,
    ) -> Result<LPVector, RoundingError> {
        let fmt = x.format();
        let pix = self.prepare(fmt)?;
        let pix = pix.as_slice();
        let xs = x.as_slice();
        let pixels = self.train.pixels();
        let n = self.train.len();

        let mut g = vec![0.0f64; self.dim()];
        let base = stream.derive();
        for i in 0..n {
            let mut rng = base.fork(i as u64);
            let image = &pix[i * pixels..(i + 1) * pixels];

            let mut s = [0.0f64; CLASSES];
            for (j, &v) in image.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                let row = &xs[j * CLASSES..(j + 1) * CLASSES];
                for c in 0..CLASSES {
                    if row[c] == 0.0 {
                        continue;
                    }
                    let p = round_f64(v * row[c], mode, &fmt, &mut rng, 0.0)?;
                    s[c] = round_f64(s[c] + p, mode, &fmt, &mut rng, 0.0)?;
                }
            }
            let bias = &xs[pixels * CLASSES..(pixels + 1) * CLASSES];
            for c in 0..CLASSES {
                s[c] = round_f64(s[c] + bias[c], mode, &fmt, &mut rng, 0.0)?;
            }

            // Shifting by the max keeps every exponential in [0,1], so no
            // format can overflow here.
            let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in s.iter_mut() {
                let shifted = round_f64(*v - m, mode, &fmt, &mut rng, 0.0)?;
                *v = round_f64(shifted.exp(), mode, &fmt, &mut rng, 0.0)?;
                sum = round_f64(sum + *v, mode, &fmt, &mut rng, 0.0)?;
            }
            let y = self.train.label(i) as usize;
            for (c, v) in s.iter_mut().enumerate() {
                let p = round_f64(*v / sum, mode, &fmt, &mut rng, 0.0)?;
                let target = if c == y { 1.0 } else { 0.0 };
                *v = round_f64(p - target, mode, &fmt, &mut rng, 0.0)?;
            }

            for (j, &v) in image.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                let row = &mut g[j * CLASSES..(j + 1) * CLASSES];
                for c in 0..CLASSES {
                    if s[c] == 0.0 {
                        continue;
                    }
                    let p = round_f64(v * s[c], mode, &fmt, &mut rng, 0.0)?;
                    row[c] = round_f64(row[c] + p, mode, &fmt, &mut rng, 0.0)?;
                }
            }
            let bias = &mut g[pixels * CLASSES..(pixels + 1) * CLASSES];
            for c in 0..CLASSES {
                bias[c] = round_f64(bias[c] + s[c], mode, &fmt, &mut rng, 0.0)?;
            }
        }

        let mut rng = base.fork(n as u64);
        let inv = fmt.round_nearest_even(1.0 / n as f64)?;
        for v in g.iter_mut() {
            if *v == 0.0 {
                continue;
            }
            *v = round_f64(*v * inv, mode, &fmt, &mut rng, 0.0)?;
        }
        Ok(LPVector::trusted(g, fmt))
    }

    fn metrics(&self, x: &[f64]) -> Vec<(String, f64)> {
        vec![("test_error".to_string(), self.test_error(x))]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::Split;
    use approx::assert_relative_eq;

    fn toy_dataset(images: Vec<f64>, pixels: usize, labels: Vec<u8>) -> Dataset {
        Dataset::from_parts(images, pixels, labels, Split::Train)
    }

    fn small_problem(seed: u64, n: usize, pixels: usize) -> MlrProblem {
        let mut rng = RandomStream::new(seed);
        let mut images = Vec::with_capacity(n * pixels);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            for _ in 0..pixels {
                // Sparse like the real corpus.
                let v = if rng.next_uniform() < 0.6 { 0.0 } else { rng.next_uniform() };
                images.push(v);
            }
            labels.push((rng.next_uniform() * 10.0) as u8);
        }
        let ds = toy_dataset(images, pixels, labels);
        MlrProblem::new(ds.clone(), ds)
    }

    fn random_weights(dim: usize, seed: u64) -> Vec<f64> {
        let mut rng = RandomStream::new(seed);
        (0..dim).map(|_| rng.next_uniform() - 0.5).collect()
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut rng = RandomStream::new(3);
        for _ in 0..50 {
            let mut s = [0.0; CLASSES];
            for v in s.iter_mut() {
                *v = 40.0 * (rng.next_uniform() - 0.5);
            }
            softmax(&mut s);
            assert_relative_eq!(s.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            assert!(s.iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let prob = small_problem(11, 8, 5);
        let x = random_weights(prob.dim(), 12);
        let mut grad = vec![0.0; prob.dim()];
        prob.gradient_exact(&x, &mut grad);

        let h = 1e-6;
        for idx in [0, 7, 23, prob.dim() - 1] {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[idx] += h;
            xm[idx] -= h;
            let fd = (prob.objective(&xp) - prob.objective(&xm)) / (2.0 * h);
            assert_relative_eq!(grad[idx], fd, max_relative = 1e-5, epsilon = 1e-10);
        }
    }

    #[test]
    fn zero_weights_give_uniform_probability_residual() {
        // Two samples: e1 with label 0, e2 with label 1.
        let ds = toy_dataset(vec![1.0, 0.0, 0.0, 1.0], 2, vec![0, 1]);
        let prob = MlrProblem::new(ds.clone(), ds);
        let x = prob.initial_weights();
        let mut grad = vec![0.0; prob.dim()];
        prob.gradient_exact(&x, &mut grad);

        // Feature j contributes (1/2)(0.1 - [c == label_j]) from its one
        // active sample; the bias row sees both residuals.
        for c in 0..CLASSES {
            let want0 = 0.5 * (0.1 - if c == 0 { 1.0 } else { 0.0 });
            let want1 = 0.5 * (0.1 - if c == 1 { 1.0 } else { 0.0 });
            let want_bias = want0 + want1;
            assert_relative_eq!(grad[c], want0, epsilon = 1e-15);
            assert_relative_eq!(grad[CLASSES + c], want1, epsilon = 1e-15);
            assert_relative_eq!(grad[2 * CLASSES + c], want_bias, epsilon = 1e-15);
        }
    }

    #[test]
    fn loss_is_convex_along_random_segments() {
        let prob = small_problem(21, 10, 6);
        let mut rng = RandomStream::new(22);
        for _ in 0..100 {
            let a = random_weights(prob.dim(), rng.next_u64());
            let b = random_weights(prob.dim(), rng.next_u64());
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            let lhs = prob.objective(&mid);
            let rhs = 0.5 * (prob.objective(&a) + prob.objective(&b));
            assert!(lhs <= rhs + 1e-12, "{lhs} > {rhs}");
        }
    }

    #[test]
    fn lp_gradient_in_binary32_tracks_exact() {
        let prob = small_problem(31, 6, 5);
        let fmt = FloatFormat::binary32();
        let x = random_weights(prob.dim(), 32);
        let mut stream = RandomStream::new(33);
        let xq = LPVector::quantize(&x, fmt, RoundingMode::NearestEven, &mut stream).unwrap();

        let mut exact = vec![0.0; prob.dim()];
        prob.gradient_exact(xq.as_slice(), &mut exact);
        let lp = prob
            .gradient_lp(&xq, RoundingMode::NearestEven, &mut stream)
            .unwrap();
        let scale = exact.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (l, e) in lp.as_slice().iter().zip(&exact) {
            assert!((l - e).abs() <= 1e-4 * scale.max(1.0), "{l} vs {e}");
        }
    }

    #[test]
    fn test_error_pinned_cases() {
        // Balanced labels 0..9; zero weights score every class equally, so
        // argmax picks class 0 and exactly the label-0 sample is right.
        let images: Vec<f64> = (0..10 * 3).map(|i| (i % 3) as f64 / 3.0).collect();
        let labels: Vec<u8> = (0..10).collect();
        let ds = toy_dataset(images, 3, labels);
        let prob = MlrProblem::new(ds.clone(), ds);
        assert_eq!(prob.test_error(&prob.initial_weights()), 0.9);

        // A bias-only oracle classifies a separable set perfectly.
        let ds2 = toy_dataset(vec![1.0, 0.0, 0.0, 1.0], 2, vec![4, 7]);
        let prob2 = MlrProblem::new(ds2.clone(), ds2);
        let mut oracle = vec![0.0; prob2.dim()];
        oracle[4] = 10.0; // feature 0 votes class 4
        oracle[CLASSES + 7] = 10.0; // feature 1 votes class 7
        assert_eq!(prob2.test_error(&oracle), 0.0);
    }

    #[test]
    fn lp_gradient_is_deterministic_per_stream() {
        let prob = small_problem(41, 5, 4);
        let fmt = FloatFormat::binary8();
        let x = prob.initial_weights();
        let xq = LPVector::quantize(&x, fmt, RoundingMode::NearestEven, &mut RandomStream::new(0))
            .unwrap();
        let g1 = prob
            .gradient_lp(&xq, RoundingMode::Sr, &mut RandomStream::new(7))
            .unwrap();
        let g2 = prob
            .gradient_lp(&xq, RoundingMode::Sr, &mut RandomStream::new(7))
            .unwrap();
        let g3 = prob
            .gradient_lp(&xq, RoundingMode::Sr, &mut RandomStream::new(8))
            .unwrap();
        assert_eq!(g1.as_slice(), g2.as_slice());
        assert_ne!(g1.as_slice(), g3.as_slice());
    }

    #[test]
    fn pixel_quantization_is_cached_per_format() {
        let prob = small_problem(51, 4, 4);
        let a = prob.prepare(FloatFormat::binary8()).unwrap();
        let b = prob.prepare(FloatFormat::binary8()).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        let c = prob.prepare(FloatFormat::bfloat16()).unwrap();
        assert!(!Arc::ptr_eq(&a, &c));
    }
}
