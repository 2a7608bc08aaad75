//! Quadratic objectives `f(x) = ½ (x − x*)ᵀ A (x − x*)`.
//!
//! Curvature is stored either as a diagonal or as a dense symmetric
//! matrix.  The low-precision gradient path quantizes `A` and `x*` into
//! the target format once (round-to-nearest, cached per format) and then
//! rounds every subtraction, multiply, and partial sum under the
//! configured mode.

use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::format::FloatFormat;
use crate::kernels::{hadamard, matvec, LPMatrix, LPVector};
use crate::problems::Problem;
use crate::rng::RandomStream;
use crate::rounding::{round_f64, RoundingError, RoundingMode};

enum Curvature {
    Diag(Vec<f64>),
    Dense(DMatrix<f64>),
}

struct Prepared {
    a_diag: Option<LPVector>,
    a_dense: Option<LPMatrix>,
    x_star: LPVector,
}

pub struct QuadraticProblem {
    a: Curvature,
    x_star: Vec<f64>,
    l: f64,
    m_bound: f64,
    prepared: Mutex<Vec<(FloatFormat, Arc<Prepared>)>>,
}

impl QuadraticProblem {
    /// Diagonal curvature; `diag` entries must be strictly positive.
    pub fn diagonal(diag: Vec<f64>, x_star: Vec<f64>) -> Self {
        assert_eq!(diag.len(), x_star.len(), "shape mismatch");
        assert!(!diag.is_empty());
        assert!(diag.iter().all(|&d| d.is_finite() && d > 0.0));
        let l = diag.iter().cloned().fold(0.0, f64::max);
        QuadraticProblem {
            a: Curvature::Diag(diag),
            x_star,
            l,
            m_bound: 1.0,
            prepared: Mutex::new(Vec::new()),
        }
    }

    /// Dense symmetric curvature.  `l` is the largest eigenvalue; when not
    /// supplied it is computed numerically.
    pub fn dense(a: DMatrix<f64>, x_star: Vec<f64>, l: Option<f64>) -> Self {
        assert!(a.is_square(), "curvature must be square");
        assert_eq!(a.nrows(), x_star.len(), "shape mismatch");
        let scale = a.amax();
        for i in 0..a.nrows() {
            for j in 0..i {
                assert!(
                    (a[(i, j)] - a[(j, i)]).abs() <= 1e-12 * scale,
                    "curvature must be symmetric"
                );
            }
        }
        let l = l.unwrap_or_else(|| {
            a.clone()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max)
        });
        QuadraticProblem {
            a: Curvature::Dense(a),
            x_star,
            l,
            m_bound: 1.0,
            prepared: Mutex::new(Vec::new()),
        }
    }

    /// Sets the iterate-magnitude bound `M` used by the dense
    /// gradient-error constant.
    pub fn with_iterate_bound(mut self, m: f64) -> Self {
        assert!(m.is_finite() && m > 0.0);
        self.m_bound = m;
        self
    }

    fn prepare(&self, fmt: FloatFormat) -> Result<Arc<Prepared>, RoundingError> {
        let mut cache = self.prepared.lock().unwrap();
        if let Some((_, p)) = cache.iter().find(|(f, _)| *f == fmt) {
            return Ok(p.clone());
        }
        // Problem data enters the format once, deterministically.
        let mut qs = RandomStream::new(0);
        let rn = RoundingMode::NearestEven;
        let x_star = LPVector::quantize(&self.x_star, fmt, rn, &mut qs)?;
        let p = Arc::new(match &self.a {
            Curvature::Diag(d) => Prepared {
                a_diag: Some(LPVector::quantize(d, fmt, rn, &mut qs)?),
                a_dense: None,
                x_star,
            },
            Curvature::Dense(m) => {
                let n = m.nrows();
                let row_major: Vec<f64> = (0..n)
                    .flat_map(|i| (0..n).map(move |j| m[(i, j)]))
                    .collect();
                Prepared {
                    a_diag: None,
                    a_dense: Some(LPMatrix::quantize(&row_major, n, n, fmt, rn, &mut qs)?),
                    x_star,
                }
            }
        });
        cache.push((fmt, p.clone()));
        Ok(p)
    }

    fn residual(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(x.len(), x.iter().zip(&self.x_star).map(|(a, b)| a - b))
    }
}

impl Problem for QuadraticProblem {
    fn dim(&self) -> usize {
        self.x_star.len()
    }

    fn objective(&self, x: &[f64]) -> f64 {
        match &self.a {
            Curvature::Diag(d) => {
                0.5 * x
                    .iter()
                    .zip(&self.x_star)
                    .zip(d)
                    .map(|((xi, si), di)| di * (xi - si) * (xi - si))
                    .sum::<f64>()
            }
            Curvature::Dense(a) => {
                let r = self.residual(x);
                0.5 * r.dot(&(a * &r))
            }
        }
    }

    fn gradient_exact(&self, x: &[f64], out: &mut [f64]) {
        match &self.a {
            Curvature::Diag(d) => {
                for i in 0..x.len() {
                    out[i] = d[i] * (x[i] - self.x_star[i]);
                }
            }
            Curvature::Dense(a) => {
                let g = a * self.residual(x);
                out.copy_from_slice(g.as_slice());
            }
        }
    }

    fn gradient_lp(
        &self,
        x: &LPVector,
        mode: RoundingMode,
        stream: &mut RandomStream,
    ) -> Result<LPVector, RoundingError> {
        let fmt = x.format();
        let p = self.prepare(fmt)?;
        let xs = x.as_slice();
        let ss = p.x_star.as_slice();
        let mut r = Vec::with_capacity(xs.len());
        for i in 0..xs.len() {
            r.push(round_f64(xs[i] - ss[i], mode, &fmt, stream, 0.0)?);
        }
        let r = LPVector::trusted(r, fmt);
        match (&p.a_diag, &p.a_dense) {
            (Some(d), _) => hadamard(d, &r, mode, stream),
            (_, Some(m)) => matvec(m, &r, mode, stream),
            _ => unreachable!(),
        }
    }

    fn smoothness(&self) -> Option<f64> {
        Some(self.l)
    }

    fn error_constant(&self, fmt: &FloatFormat) -> Option<f64> {
        match &self.a {
            Curvature::Diag(_) => Some(2.0),
            Curvature::Dense(a) => {
                let n = self.dim() as f64;
                let u = fmt.unit_roundoff();
                let denom = 1.0 - 2.0 * n * u;
                if denom <= 0.0 {
                    return None;
                }
                let norm_inf = (0..a.nrows())
                    .map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>())
                    .fold(0.0, f64::max);
                Some(2.0 * n * u * norm_inf * self.m_bound / denom)
            }
        }
    }

    fn optimum(&self) -> Option<&[f64]> {
        Some(&self.x_star)
    }

    fn f_star(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// The two benchmark families: a diagonal ill-conditioned quadratic and a
/// dense symmetric quadratic with spectrum `1..n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SettingId {
    One,
    Two,
}

/// A generated benchmark problem with its starting point and recommended
/// stepsize `1/L`.
pub struct QuadraticSetting {
    pub problem: QuadraticProblem,
    pub x0: Vec<f64>,
    pub t: f64,
}

/// Builds one of the benchmark quadratics at dimension `n`.
///
/// Setting One: `A = diag(10⁻³, …, 10⁻³, 1)`, `x⁰ = [10⁻³, …, 10⁻³, 1]`,
/// `x* = 0`, `t = 10⁻⁵`.  Setting Two: a dense symmetric matrix with no
/// zero entries and eigenvalues `1, …, n`, `x⁰ = [n, …, 1]`, `x* = 2⁻⁴·1`.
/// The benchmark stepsize is `10⁻³` (which is `1/L` at the canonical
/// `n = 1000`), capped by `1/L` so smaller instances stay convergent while
/// keeping the slowest mode as marginal as in the full-size benchmark.
pub fn quadratic_setting(id: SettingId, n: usize, stream: &mut RandomStream) -> QuadraticSetting {
    assert!(n >= 2);
    match id {
        SettingId::One => {
            let mut diag = vec![1e-3; n];
            diag[n - 1] = 1.0;
            let x0 = diag.clone();
            let problem = QuadraticProblem::diagonal(diag, vec![0.0; n]);
            QuadraticSetting {
                problem,
                x0,
                t: 1e-5,
            }
        }
        SettingId::Two => {
            let l = n as f64;
            let a = nonzero_conjugated_matrix(n, stream);
            let x0: Vec<f64> = (0..n).map(|i| (n - i) as f64).collect();
            let problem = QuadraticProblem::dense(a, vec![2f64.powi(-4); n], Some(l))
                .with_iterate_bound(l);
            QuadraticSetting {
                problem,
                x0,
                t: 1e-3f64.min(1.0 / l),
            }
        }
    }
}

/// Conjugates `diag(1, …, n)` by the Q factor of a Gaussian matrix, then
/// symmetrizes.  Regenerates in the (improbable) event of an exactly zero
/// entry.
fn nonzero_conjugated_matrix(n: usize, stream: &mut RandomStream) -> DMatrix<f64> {
    loop {
        let g = DMatrix::from_fn(n, n, |_, _| {
            let v: f64 = StandardNormal.sample(stream);
            v
        });
        let q = g.qr().q();
        let d: DMatrix<f64> = DMatrix::from_diagonal(&DVector::from_iterator(
            n,
            (1..=n).map(|i| i as f64),
        ));
        let a: DMatrix<f64> = &q * d * q.transpose();
        let a = (&a + a.transpose()) * 0.5;
        if a.iter().all(|&v| v != 0.0) {
            return a;
        }
    }
}
