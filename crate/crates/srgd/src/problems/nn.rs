//! Two-layer binary classifier: ReLU hidden layer, sigmoid output,
//! binary cross-entropy loss, full-batch training.
//!
//! Parameters flatten into one vector `[W1 | b1 | w2 | b2]` with `W1`
//! stored feature-major, giving `pixels·100 + 100 + 100 + 1` entries.
//! The low-precision path mirrors the MLR module: training pixels are
//! quantized once per format, every forward and backward operation is
//! rounded under the configured mode, and exact-zero operands (zero
//! pixels, inactive ReLU units, zero residuals) are skipped since they
//! round exactly and draw nothing.  The hidden width is fixed at 100 and
//! a sample is assigned class 1 when its predicted score is at least 0.5.

use std::sync::{Arc, Mutex};

use rand::Rng;
use rand_distr::Uniform;

use crate::format::FloatFormat;
use crate::kernels::LPVector;
use crate::problems::{Dataset, Problem};
use crate::rng::RandomStream;
use crate::rounding::{round_f64, RoundingError, RoundingMode};

pub const HIDDEN: usize = 100;

pub struct NnProblem {
    train: Dataset,
    test: Dataset,
    prepared: Mutex<Vec<(FloatFormat, Arc<LPVector>)>>,
}

impl NnProblem {
    /// Both datasets must be nonempty, share the pixel count, and carry
    /// binary labels.
    pub fn new(train: Dataset, test: Dataset) -> Self {
        assert!(!train.is_empty() && !test.is_empty(), "datasets must be nonempty");
        assert_eq!(train.pixels(), test.pixels(), "pixel shape mismatch");
        assert!(
            train.labels().iter().chain(test.labels()).all(|&l| l <= 1),
            "labels must be binary"
        );
        NnProblem {
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

    fn pixels(&self) -> usize {
        self.train.pixels()
    }

    fn b1_off(&self) -> usize {
        self.pixels() * HIDDEN
    }

    fn w2_off(&self) -> usize {
        self.b1_off() + HIDDEN
    }

    fn b2_off(&self) -> usize {
        self.w2_off() + HIDDEN
    }

    /// Xavier-uniform weights (`±√(6/(fan_in + fan_out))` per layer) with
    /// zero biases, fully determined by the seed.
    pub fn xavier_init(&self, seed: u64) -> Vec<f64> {
        let mut rng = RandomStream::new(seed);
        let mut x = vec![0.0; self.dim()];
        let limit1 = (6.0 / (self.pixels() + HIDDEN) as f64).sqrt();
        let dist1 = Uniform::new(-limit1, limit1);
        for v in x[..self.b1_off()].iter_mut() {
            *v = rng.sample(dist1);
        }
        let limit2 = (6.0 / (HIDDEN + 1) as f64).sqrt();
        let dist2 = Uniform::new(-limit2, limit2);
        for v in x[self.w2_off()..self.b2_off()].iter_mut() {
            *v = rng.sample(dist2);
        }
        x
    }

    /// Working-precision forward pass: hidden activations and the sigmoid
    /// output score.
    fn forward(&self, x: &[f64], image: &[f64]) -> (Vec<f64>, f64) {
        let mut z1 = x[self.b1_off()..self.w2_off()].to_vec();
        for (j, &v) in image.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let row = &x[j * HIDDEN..(j + 1) * HIDDEN];
            for k in 0..HIDDEN {
                z1[k] += v * row[k];
            }
        }
        for z in z1.iter_mut() {
            *z = z.max(0.0);
        }
        let w2 = &x[self.w2_off()..self.b2_off()];
        let z2 = x[self.b2_off()] + z1.iter().zip(w2).map(|(a, w)| a * w).sum::<f64>();
        (z1, sigmoid(z2))
    }

    /// Fraction of the test split misclassified at threshold 0.5 (scores
    /// `>= 0.5` mean class 1), evaluated in working precision.
    pub fn test_error(&self, x: &[f64]) -> f64 {
        let mut wrong = 0usize;
        for i in 0..self.test.len() {
            let (_, yhat) = self.forward(x, self.test.image(i));
            let predicted = (yhat >= 0.5) as u8;
            if predicted != self.test.label(i) {
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

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Problem for NnProblem {
    fn dim(&self) -> usize {
        self.pixels() * HIDDEN + 2 * HIDDEN + 1
    }

    /// Mean binary cross-entropy over the training split, working
    /// precision; scores are clamped away from {0,1} before the logs.
    fn objective(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for i in 0..self.train.len() {
            let (_, yhat) = self.forward(x, self.train.image(i));
            let p = yhat.clamp(1e-12, 1.0 - 1e-12);
            total -= if self.train.label(i) == 1 {
                p.ln()
            } else {
                (1.0 - p).ln()
            };
        }
        total / self.train.len() as f64
    }

    fn gradient_exact(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let w2_off = self.w2_off();
        let b1_off = self.b1_off();
        let b2_off = self.b2_off();
        for i in 0..self.train.len() {
            let image = self.train.image(i);
            let (a, yhat) = self.forward(x, image);
            let dz2 = yhat - self.train.label(i) as f64;
            out[b2_off] += dz2;
            for k in 0..HIDDEN {
                out[w2_off + k] += a[k] * dz2;
            }
            for k in 0..HIDDEN {
                if a[k] == 0.0 {
                    continue;
                }
                let dz1 = x[w2_off + k] * dz2;
                out[b1_off + k] += dz1;
                for (j, &v) in image.iter().enumerate() {
                    if v != 0.0 {
                        out[j * HIDDEN + k] += v * dz1;
                    }
                }
            }
        }
        let inv = 1.0 / self.train.len() as f64;
        for v in out.iter_mut() {
            *v *= inv;
        }
    }

    /// Full-batch backpropagation with every operation rounded under
    /// `mode`.  Sample `i` draws from a fork of the stream keyed by `i`.
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
        assert_eq!(xs.len(), self.dim(), "parameter length mismatch");
        let pixels = self.pixels();
        let n = self.train.len();
        let b1_off = self.b1_off();
        let w2_off = self.w2_off();
        let b2_off = self.b2_off();

        let mut g = vec![0.0f64; self.dim()];
        let base = stream.derive();
        for i in 0..n {
            let mut rng = base.fork(i as u64);
            let image = &pix[i * pixels..(i + 1) * pixels];

            let mut z1 = vec![0.0f64; HIDDEN];
            for (j, &v) in image.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                let row = &xs[j * HIDDEN..(j + 1) * HIDDEN];
                for k in 0..HIDDEN {
                    if row[k] == 0.0 {
                        continue;
                    }
                    let p = round_f64(v * row[k], mode, &fmt, &mut rng, 0.0)?;
                    z1[k] = round_f64(z1[k] + p, mode, &fmt, &mut rng, 0.0)?;
                }
            }
            for k in 0..HIDDEN {
                let b = xs[b1_off + k];
                if b != 0.0 {
                    z1[k] = round_f64(z1[k] + b, mode, &fmt, &mut rng, 0.0)?;
                }
            }
            // ReLU is exact in any format: it either keeps a representable
            // value or produces zero.
            let a: Vec<f64> = z1.iter().map(|&z| z.max(0.0)).collect();

            let mut z2 = 0.0f64;
            for k in 0..HIDDEN {
                if a[k] == 0.0 || xs[w2_off + k] == 0.0 {
                    continue;
                }
                let p = round_f64(a[k] * xs[w2_off + k], mode, &fmt, &mut rng, 0.0)?;
                z2 = round_f64(z2 + p, mode, &fmt, &mut rng, 0.0)?;
            }
            if xs[b2_off] != 0.0 {
                z2 = round_f64(z2 + xs[b2_off], mode, &fmt, &mut rng, 0.0)?;
            }
            let yhat = round_f64(sigmoid(z2), mode, &fmt, &mut rng, 0.0)?;
            let dz2 = round_f64(yhat - self.train.label(i) as f64, mode, &fmt, &mut rng, 0.0)?;
            if dz2 == 0.0 {
                continue;
            }

            g[b2_off] = round_f64(g[b2_off] + dz2, mode, &fmt, &mut rng, 0.0)?;
            for k in 0..HIDDEN {
                if a[k] == 0.0 {
                    continue;
                }
                let p = round_f64(a[k] * dz2, mode, &fmt, &mut rng, 0.0)?;
                g[w2_off + k] = round_f64(g[w2_off + k] + p, mode, &fmt, &mut rng, 0.0)?;
            }
            for k in 0..HIDDEN {
                if a[k] == 0.0 || xs[w2_off + k] == 0.0 {
                    continue;
                }
                let dz1 = round_f64(xs[w2_off + k] * dz2, mode, &fmt, &mut rng, 0.0)?;
                if dz1 == 0.0 {
                    continue;
                }
                g[b1_off + k] = round_f64(g[b1_off + k] + dz1, mode, &fmt, &mut rng, 0.0)?;
                for (j, &v) in image.iter().enumerate() {
                    if v == 0.0 {
                        continue;
                    }
                    let p = round_f64(v * dz1, mode, &fmt, &mut rng, 0.0)?;
                    let slot = &mut g[j * HIDDEN + k];
                    *slot = round_f64(*slot + p, mode, &fmt, &mut rng, 0.0)?;
                }
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
