use crate::error::{shape_err, Result};

/// Dense (batch, channel, height, width) array of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    dims: [usize; 4],
    values: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(dims: [usize; 4]) -> Self {
        Tensor4 { dims, values: vec![0.0; dims.iter().product()] }
    }

    pub fn filled(dims: [usize; 4], v: f64) -> Self {
        Tensor4 { dims, values: vec![v; dims.iter().product()] }
    }

    pub fn from_vec(dims: [usize; 4], values: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if values.len() != n {
            return shape_err(format!("tensor {dims:?} needs {n} values, got {}", values.len()));
        }
        Ok(Tensor4 { dims, values })
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn n(&self) -> usize {
        self.dims[0]
    }

    pub fn c(&self) -> usize {
        self.dims[1]
    }

    pub fn h(&self) -> usize {
        self.dims[2]
    }

    pub fn w(&self) -> usize {
        self.dims[3]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn offset(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.dims[1] + c) * self.dims[2] + y) * self.dims[3] + x
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.values[self.offset(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: f64) {
        let o = self.offset(n, c, y, x);
        self.values[o] = v;
    }

    /// Contiguous (c, h, w) block of sample `n`.
    pub fn sample(&self, n: usize) -> &[f64] {
        let s = self.dims[1] * self.dims[2] * self.dims[3];
        &self.values[n * s..(n + 1) * s]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [f64] {
        let s = self.dims[1] * self.dims[2] * self.dims[3];
        &mut self.values[n * s..(n + 1) * s]
    }

    pub fn same_dims(&self, other: &Tensor4, what: &str) -> Result<()> {
        if self.dims != other.dims {
            return shape_err(format!("{what}: {:?} vs {:?}", self.dims, other.dims));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor4 {
        Tensor4 { dims: self.dims, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn add_assign(&mut self, other: &Tensor4) -> Result<()> {
        self.same_dims(other, "add")?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}
