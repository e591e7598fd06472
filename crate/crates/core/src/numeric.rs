//! Dense vector/matrix kernels shared by every model layer.
//!
//! Everything here is 64-bit and allocation-light; the model sizes this crate
//! targets are small enough that plain row-major loops are the right tool.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default step for central finite differences.
pub const DEFAULT_FD_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(data: Vec<f64>) -> Self {
        Vector(data)
    }

    pub fn zeros(dim: usize) -> Self {
        Vector(vec![0.0; dim])
    }

    pub fn ones(dim: usize) -> Self {
        Vector(vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &Vector) -> Result<f64> {
        check_dims("dot", self.dim(), other.dim())?;
        Ok(self.iter().zip(other.iter()).map(|(a, b)| a * b).sum())
    }

    pub fn add(&self, other: &Vector) -> Result<Vector> {
        check_dims("add", self.dim(), other.dim())?;
        Ok(self.iter().zip(other.iter()).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Vector) -> Result<Vector> {
        check_dims("sub", self.dim(), other.dim())?;
        Ok(self.iter().zip(other.iter()).map(|(a, b)| a - b).collect())
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Vector) -> Result<()> {
        check_dims("axpy", self.dim(), other.dim())?;
        for (a, b) in self.0.iter_mut().zip(other.iter()) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&self, alpha: f64) -> Vector {
        self.iter().map(|a| alpha * a).collect()
    }

    pub fn norm(&self) -> f64 {
        self.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

impl Deref for Vector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Vector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for Vector {
    fn from(data: Vec<f64>) -> Self {
        Vector(data)
    }
}

impl FromIterator<f64> for Vector {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        Vector(iter.into_iter().collect())
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "matrix from_vec",
                left: rows * cols,
                right: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            check_dims("matrix from_rows", cols, row.len())?;
            data.extend_from_slice(row);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `Wᵀ x`, the adjoint of [`matvec`].
    pub fn matvec_transposed(&self, x: &Vector) -> Result<Vector> {
        check_dims("matvec_transposed", self.rows, x.dim())?;
        let mut out = vec![0.0; self.cols];
        for (r, &xr) in x.iter().enumerate() {
            for (o, w) in out.iter_mut().zip(self.row(r)) {
                *o += w * xr;
            }
        }
        Ok(Vector(out))
    }

    /// `self += alpha * a bᵀ`.
    pub fn add_outer(&mut self, alpha: f64, a: &Vector, b: &Vector) -> Result<()> {
        if a.dim() != self.rows || b.dim() != self.cols {
            return Err(Error::ShapeMismatch {
                op: "add_outer",
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: a.dim(),
                right_cols: b.dim(),
            });
        }
        for (r, &ar) in a.iter().enumerate() {
            let scale = alpha * ar;
            if scale == 0.0 {
                continue;
            }
            for (w, bc) in self.row_mut(r).iter_mut().zip(b.iter()) {
                *w += scale * bc;
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Per-slot validity flags; `true` marks a real (non-null) slot.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SlotMask(Vec<bool>);

impl SlotMask {
    pub fn new(flags: Vec<bool>) -> Self {
        SlotMask(flags)
    }

    pub fn all(len: usize) -> Self {
        SlotMask(vec![true; len])
    }

    pub fn none(len: usize) -> Self {
        SlotMask(vec![false; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn any(&self) -> bool {
        self.0.iter().any(|&f| f)
    }

    pub fn is_set(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn flags(&self) -> &[bool] {
        &self.0
    }
}

fn check_dims(op: &'static str, left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::DimensionMismatch { op, left, right });
    }
    Ok(())
}

pub fn hadamard(a: &Vector, b: &Vector) -> Result<Vector> {
    check_dims("hadamard", a.dim(), b.dim())?;
    Ok(a.iter().zip(b.iter()).map(|(x, y)| x * y).collect())
}

pub fn tanh_map(v: &Vector) -> Vector {
    v.iter().map(|x| x.tanh()).collect()
}

pub fn matvec(w: &Matrix, x: &Vector) -> Result<Vector> {
    check_dims("matvec", w.cols, x.dim())?;
    Ok((0..w.rows)
        .map(|r| w.row(r).iter().zip(x.iter()).map(|(a, b)| a * b).sum())
        .collect())
}

/// Softmax over the unmasked entries only. Masked slots are treated as
/// `-inf` scores, so they receive exactly zero mass.
pub fn masked_softmax(scores: &Vector, mask: &SlotMask) -> Result<Vector> {
    check_dims("masked_softmax", scores.dim(), mask.len())?;
    let max = scores
        .iter()
        .zip(mask.flags())
        .filter(|(_, &m)| m)
        .map(|(&s, _)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::AllMasked);
    }
    let mut out: Vector = scores
        .iter()
        .zip(mask.flags())
        .map(|(&s, &m)| if m { (s - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = out.iter().sum();
    for v in out.iter_mut() {
        *v /= total;
    }
    Ok(out)
}

pub fn softmax(scores: &Vector) -> Vector {
    masked_softmax(scores, &SlotMask::all(scores.dim())).unwrap_or_default()
}

pub fn log_sum_exp(v: &Vector) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `-log softmax(logits)[label]` via log-sum-exp.
pub fn cross_entropy_loss(logits: &Vector, label: usize) -> Result<f64> {
    if label >= logits.dim() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: logits.dim(),
        });
    }
    // Clamp the tiny negative values rounding can produce when one logit dominates.
    Ok((log_sum_exp(logits) - logits[label]).max(0.0))
}

/// Plain SGD: `p <- p - lr * g` for every parameter entry.
pub fn sgd_step<'a, 'b, P, G>(params: P, grads: G, lr: f64) -> Result<()>
where
    P: IntoIterator<Item = &'a mut Matrix>,
    G: IntoIterator<Item = &'b Matrix>,
{
    let params: Vec<&mut Matrix> = params.into_iter().collect();
    let grads: Vec<&Matrix> = grads.into_iter().collect();
    check_dims("sgd_step", params.len(), grads.len())?;
    for (p, g) in params.iter().zip(&grads) {
        if p.shape() != g.shape() {
            return Err(Error::ShapeMismatch {
                op: "sgd_step",
                left_rows: p.rows,
                left_cols: p.cols,
                right_rows: g.rows,
                right_cols: g.cols,
            });
        }
    }
    for (p, g) in params.into_iter().zip(grads) {
        for (pv, gv) in p.data.iter_mut().zip(&g.data) {
            *pv -= lr * gv;
        }
    }
    Ok(())
}

/// Central-difference gradient of `loss_fn` with respect to every entry of
/// every matrix in `params`.
pub fn finite_diff_grad<F>(mut loss_fn: F, params: &[Matrix], eps: f64) -> Vec<Matrix>
where
    F: FnMut(&[Matrix]) -> f64,
{
    let mut work = params.to_vec();
    let mut grads: Vec<Matrix> = params
        .iter()
        .map(|p| Matrix::zeros(p.rows, p.cols))
        .collect();
    for m in 0..work.len() {
        for i in 0..work[m].data.len() {
            let orig = work[m].data[i];
            work[m].data[i] = orig + eps;
            let plus = loss_fn(&work);
            work[m].data[i] = orig - eps;
            let minus = loss_fn(&work);
            work[m].data[i] = orig;
            grads[m].data[i] = (plus - minus) / (2.0 * eps);
        }
    }
    grads
}

/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Largest [`relative_error`] over all paired entries.
pub fn max_relative_error(analytic: &[Matrix], numeric: &[Matrix]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .flat_map(|(a, n)| a.data.iter().zip(&n.data))
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::new(xs.to_vec())
    }

    #[test]
    fn hadamard_examples() {
        let x = v(&[0.3, -2.0, 7.5]);
        assert_eq!(hadamard(&Vector::ones(3), &x).unwrap(), x);
        assert_eq!(hadamard(&v(&[0.0, 0.0]), &v(&[5.0, -3.0])).unwrap(), v(&[0.0, 0.0]));
        assert_eq!(hadamard(&v(&[1.0, 2.0]), &v(&[3.0, 4.0])).unwrap(), v(&[3.0, 8.0]));
    }

    #[test]
    fn hadamard_rejects_mismatch() {
        let err = hadamard(&v(&[1.0]), &v(&[1.0, 2.0])).unwrap_err();
        assert!(matches!(
            err,
            Error::DimensionMismatch {
                left: 1,
                right: 2,
                ..
            }
        ));
    }

    #[test]
    fn tanh_examples() {
        assert_eq!(tanh_map(&v(&[0.0, 0.0])), v(&[0.0, 0.0]));
        for x in [-3.0, -0.5, 0.1, 2.2] {
            assert_eq!(tanh_map(&v(&[x]))[0], -tanh_map(&v(&[-x]))[0]);
        }
        // 1 - tanh(20) = 2 e^{-40} / (1 + e^{-40}) ~ 8.5e-18
        assert!((tanh_map(&v(&[20.0]))[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn masked_softmax_examples() {
        let p = masked_softmax(&v(&[4.2, 4.2, 4.2]), &SlotMask::all(3)).unwrap();
        for x in p.iter() {
            assert_abs_diff_eq!(*x, 1.0 / 3.0, epsilon = 1e-15);
        }
        let p = masked_softmax(&v(&[1.0, 99.0]), &SlotMask::new(vec![true, false])).unwrap();
        assert_eq!(p, v(&[1.0, 0.0]));
        // e^z / sum e^z for z = 1, 2, 3 evaluated independently in closed form.
        let denom = 1.0 + 1f64.exp() + 2f64.exp();
        let expected = [1.0 / denom, 1f64.exp() / denom, 2f64.exp() / denom];
        let p = masked_softmax(&v(&[1.0, 2.0, 3.0]), &SlotMask::all(3)).unwrap();
        for (got, (want, frozen)) in p
            .iter()
            .zip(expected.iter().zip([0.09003057, 0.24472847, 0.66524096]))
        {
            assert_abs_diff_eq!(*got, *want, epsilon = 1e-15);
            assert_abs_diff_eq!(*got, frozen, epsilon = 1e-8);
        }
    }

    #[test]
    fn masked_softmax_rejects_all_masked() {
        let err = masked_softmax(&v(&[1.0, 2.0]), &SlotMask::none(2)).unwrap_err();
        assert!(matches!(err, Error::AllMasked));
    }

    #[test]
    fn masked_softmax_survives_large_scores() {
        let p = masked_softmax(&v(&[1000.0, 999.0, -1000.0]), &SlotMask::all(3)).unwrap();
        assert!(p.is_finite());
        assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn matvec_examples() {
        let x = v(&[1.5, -2.0]);
        assert_eq!(matvec(&Matrix::identity(2), &x).unwrap(), x);
        assert_eq!(matvec(&Matrix::zeros(3, 2), &x).unwrap(), Vector::zeros(3));
        let w = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        assert_eq!(matvec(&w, &v(&[1.0, 1.0])).unwrap(), v(&[3.0, 7.0]));
        assert!(matvec(&w, &v(&[1.0])).is_err());
        assert_eq!(w.matvec_transposed(&v(&[1.0, 1.0])).unwrap(), v(&[4.0, 6.0]));
    }

    #[test]
    fn cross_entropy_examples() {
        for k in [2usize, 3, 7] {
            let loss = cross_entropy_loss(&Vector::new(vec![0.37; k]), k - 1).unwrap();
            assert_abs_diff_eq!(loss, (k as f64).ln(), epsilon = 1e-12);
        }
        // log(1 + e^-20) ~ 2.06e-9
        assert!(cross_entropy_loss(&v(&[10.0, -10.0]), 0).unwrap() < 1e-4);
        assert_abs_diff_eq!(
            cross_entropy_loss(&v(&[0.0, 0.0]), 1).unwrap(),
            2f64.ln(),
            epsilon = 1e-15
        );
        assert!(matches!(
            cross_entropy_loss(&v(&[0.0, 0.0]), 2),
            Err(Error::LabelOutOfRange { label: 2, classes: 2 })
        ));
    }

    #[test]
    fn sgd_examples() {
        let mut p = [Matrix::from_vec(1, 1, vec![1.0]).unwrap()];
        let g = [Matrix::from_vec(1, 1, vec![2.0]).unwrap()];
        sgd_step(p.iter_mut(), g.iter(), 0.0).unwrap();
        assert_eq!(p[0].data(), &[1.0]);
        sgd_step(p.iter_mut(), g.iter(), 0.5).unwrap();
        assert_eq!(p[0].data(), &[0.0]);

        let start = Matrix::from_vec(1, 2, vec![0.25, -1.0]).unwrap();
        let g = [Matrix::from_vec(1, 2, vec![0.5, 0.125]).unwrap()];
        let mut twice = vec![start.clone()];
        sgd_step(twice.iter_mut(), g.iter(), 0.25).unwrap();
        sgd_step(twice.iter_mut(), g.iter(), 0.25).unwrap();
        let mut once = vec![start];
        sgd_step(once.iter_mut(), g.iter(), 0.5).unwrap();
        assert_eq!(twice, once);

        let bad = [Matrix::zeros(2, 1)];
        assert!(matches!(
            sgd_step(once.iter_mut(), bad.iter(), 0.1),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn finite_diff_examples() {
        let p = vec![Matrix::from_vec(1, 1, vec![3.0]).unwrap()];
        let g = finite_diff_grad(|ps| ps[0].data().iter().map(|x| x * x).sum(), &p, DEFAULT_FD_EPS);
        assert_abs_diff_eq!(g[0].data()[0], 6.0, epsilon = 1e-6);
        let g = finite_diff_grad(|_| 4.0, &p, DEFAULT_FD_EPS);
        assert_eq!(g[0].data(), &[0.0]);
    }

    #[test]
    fn composite_gradient_matches_finite_differences() {
        // loss = CE(W2 tanh(W1 x) ⊙ y, label)
        let x = v(&[0.3, -0.7, 1.1]);
        let y = v(&[0.9, -1.2]);
        let w1 = Matrix::from_vec(2, 3, vec![0.1, -0.4, 0.25, 0.6, 0.05, -0.3]).unwrap();
        let w2 = Matrix::from_vec(3, 2, vec![0.7, -0.2, 0.15, 0.5, -0.6, 0.33]).unwrap();
        let label = 2;
        let loss = |ps: &[Matrix]| {
            let h = hadamard(&tanh_map(&matvec(&ps[0], &x).unwrap()), &y).unwrap();
            cross_entropy_loss(&matvec(&ps[1], &h).unwrap(), label).unwrap()
        };
        let pre = matvec(&w1, &x).unwrap();
        let a = tanh_map(&pre);
        let h = hadamard(&a, &y).unwrap();
        let logits = matvec(&w2, &h).unwrap();
        let mut dlogits = softmax(&logits);
        dlogits[label] -= 1.0;
        let mut g2 = Matrix::zeros(3, 2);
        g2.add_outer(1.0, &dlogits, &h).unwrap();
        let dh = w2.matvec_transposed(&dlogits).unwrap();
        let dpre: Vector = dh
            .iter()
            .zip(y.iter())
            .zip(a.iter())
            .map(|((d, yy), aa)| d * yy * (1.0 - aa * aa))
            .collect();
        let mut g1 = Matrix::zeros(2, 3);
        g1.add_outer(1.0, &dpre, &x).unwrap();
        let numeric = finite_diff_grad(loss, &[w1, w2], DEFAULT_FD_EPS);
        assert!(max_relative_error(&[g1, g2], &numeric) <= 1e-4);
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one_and_ignores_masked(
            scores in proptest::collection::vec(-50.0f64..50.0, 1..12),
            flags in proptest::collection::vec(any::<bool>(), 12),
            shift in -100.0f64..100.0,
        ) {
            let n = scores.len();
            let mut flags = flags[..n].to_vec();
            flags[0] = true;
            let mask = SlotMask::new(flags);
            let p = masked_softmax(&Vector::new(scores.clone()), &mask).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            for i in 0..n {
                if !mask.is_set(i) {
                    prop_assert_eq!(p[i], 0.0);
                }
            }
            let shifted: Vector = scores.iter().map(|s| s + shift).collect();
            let q = masked_softmax(&shifted, &mask).unwrap();
            for (a, b) in p.iter().zip(q.iter()) {
                let denom = a.abs().max(b.abs());
                if denom > 0.0 {
                    prop_assert!((a - b).abs() / denom <= 1e-12);
                }
            }
        }

        #[test]
        fn hadamard_commutes(pairs in proptest::collection::vec((-1e6f64..1e6, -1e6f64..1e6), 0..16)) {
            let a: Vector = pairs.iter().map(|p| p.0).collect();
            let b: Vector = pairs.iter().map(|p| p.1).collect();
            prop_assert_eq!(hadamard(&a, &b).unwrap(), hadamard(&b, &a).unwrap());
        }

        #[test]
        // f64 tanh rounds to exactly ±1 once |x| exceeds ~19.06.
        fn tanh_stays_open_interval(xs in proptest::collection::vec(-18.0f64..18.0, 1..16)) {
            for y in tanh_map(&Vector::new(xs)).iter() {
                prop_assert!(*y > -1.0 && *y < 1.0);
            }
        }

        #[test]
        fn cross_entropy_non_negative(
            logits in proptest::collection::vec(-500.0f64..500.0, 1..10),
            pick in 0usize..10,
        ) {
            let label = pick % logits.len();
            let loss = cross_entropy_loss(&Vector::new(logits), label).unwrap();
            prop_assert!(loss >= 0.0 && loss.is_finite());
        }
    }
}
