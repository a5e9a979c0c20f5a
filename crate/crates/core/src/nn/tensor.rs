use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major array of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Uniform in `(-bound, bound)`.
    pub fn uniform(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Self {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    /// Glorot-uniform `rows × cols` matrix.
    pub fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        Self::uniform(&[rows, cols], (6.0 / (rows + cols) as f64).sqrt(), rng)
    }

    /// `rows × cols` matrix with orthonormal columns (rows ≥ cols) or
    /// orthonormal rows, from Gram-Schmidt on a Gaussian draw.
    pub fn orthogonal(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let (n, len) = if rows >= cols { (cols, rows) } else { (rows, cols) };
        let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(n);
        while vectors.len() < n {
            let mut v: Vec<f64> = (0..len).map(|_| normal.sample(rng)).collect();
            for u in &vectors {
                let d = dot(u, &v);
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
            }
            let norm = dot(&v, &v).sqrt();
            if norm > 1e-8 {
                v.iter_mut().for_each(|a| *a /= norm);
                vectors.push(v);
            }
        }
        let data = if rows >= cols {
            (0..rows).flat_map(|r| vectors.iter().map(move |v| v[r])).collect()
        } else {
            vectors.concat()
        };
        Tensor {
            shape: vec![rows, cols],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Anything built from [`Tensor`]s that a gradient of the same structure
/// can be accumulated into. Tensors are visited in a fixed order.
pub trait Params: Clone {
    fn tensors(&self) -> Vec<&Tensor>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for t in self.tensors() {
            out.extend_from_slice(t.data());
        }
        out
    }

    fn set_flat(&mut self, flat: &[f64]) {
        let mut off = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        assert_eq!(off, flat.len(), "flat parameter length mismatch");
    }

    /// `self += scale * other`
    fn accumulate(&mut self, other: &Self, scale: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            axpy(scale, b.data(), a.data_mut());
        }
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }
}

impl<P: Params> Params for Vec<P> {
    fn tensors(&self) -> Vec<&Tensor> {
        self.iter().flat_map(|p| p.tensors()).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.iter_mut().flat_map(|p| p.tensors_mut()).collect()
    }
}

impl<P: Params> Params for Option<P> {
    fn tensors(&self) -> Vec<&Tensor> {
        self.as_ref().map(|p| p.tensors()).unwrap_or_default()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.as_mut().map(|p| p.tensors_mut()).unwrap_or_default()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = i * 4;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in chunks * 4..a.len() {
        s += a[j] * b[j];
    }
    s
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out += W x` for a row-major `rows × cols` block.
#[inline]
pub(crate) fn matvec_acc(w: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(w.len(), cols * out.len());
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += dot(row, x);
    }
}

/// `dx += Wᵀ dy`
#[inline]
pub(crate) fn matvec_t_acc(w: &[f64], cols: usize, dy: &[f64], dx: &mut [f64]) {
    debug_assert_eq!(dx.len(), cols);
    for (d, row) in dy.iter().zip(w.chunks_exact(cols)) {
        if *d != 0.0 {
            axpy(*d, row, dx);
        }
    }
}

/// `G += dy xᵀ`
#[inline]
pub(crate) fn outer_acc(g: &mut [f64], cols: usize, dy: &[f64], x: &[f64]) {
    debug_assert_eq!(x.len(), cols);
    for (d, row) in dy.iter().zip(g.chunks_exact_mut(cols)) {
        if *d != 0.0 {
            axpy(*d, x, row);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn orthogonal_columns_and_rows() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for (rows, cols) in [(12, 3), (3, 12), (5, 5)] {
            let q = Tensor::orthogonal(rows, cols, &mut rng);
            let d = q.data();
            let k = rows.min(cols);
            for a in 0..k {
                for b in 0..k {
                    let g: f64 = if rows >= cols {
                        (0..rows).map(|r| d[r * cols + a] * d[r * cols + b]).sum()
                    } else {
                        (0..cols).map(|c| d[a * cols + c] * d[b * cols + c]).sum()
                    };
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((g - want).abs() < 1e-12, "{rows}x{cols} gram[{a}][{b}] = {g}");
                }
            }
        }
    }

    #[test]
    fn shape_checked() {
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 5]).is_err());
        let t = Tensor::from_vec(&[2, 3], (0..6).map(f64::from).collect()).unwrap();
        assert_eq!(t.row(1), &[3.0, 4.0, 5.0]);
    }

    #[test]
    fn kernels_match_naive() {
        let w: Vec<f64> = (0..15).map(|i| (i as f64 * 0.37).sin()).collect();
        let x: Vec<f64> = (0..5).map(|i| i as f64 - 2.0).collect();
        let mut out = vec![1.0; 3];
        matvec_acc(&w, 5, &x, &mut out);
        for r in 0..3 {
            let naive: f64 = 1.0 + (0..5).map(|c| w[r * 5 + c] * x[c]).sum::<f64>();
            assert!((out[r] - naive).abs() < 1e-12);
        }
        let dy = [0.5, -1.0, 2.0];
        let mut dx = vec![0.0; 5];
        matvec_t_acc(&w, 5, &dy, &mut dx);
        for c in 0..5 {
            let naive: f64 = (0..3).map(|r| w[r * 5 + c] * dy[r]).sum();
            assert!((dx[c] - naive).abs() < 1e-12);
        }
    }
}
