//! Point-major storage for multi-component grid fields.

/// A field with `ncomp` real components at every grid point, stored point-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    ncomp: usize,
    data: Vec<f64>,
}

impl Field {
    pub fn zeros(points: usize, ncomp: usize) -> Self {
        Self {
            ncomp,
            data: vec![0.0; points * ncomp],
        }
    }

    pub fn from_vec(ncomp: usize, data: Vec<f64>) -> Self {
        assert!(
            ncomp > 0 && data.len() % ncomp == 0,
            "field length mismatch"
        );
        Self { ncomp, data }
    }

    /// Scalar field.
    pub fn scalar(data: Vec<f64>) -> Self {
        Self { ncomp: 1, data }
    }

    /// Builds a field by filling each point's components.
    pub fn from_fn(points: usize, ncomp: usize, mut f: impl FnMut(usize, &mut [f64])) -> Self {
        let mut out = Self::zeros(points, ncomp);
        for (p, chunk) in out.data.chunks_mut(ncomp).enumerate() {
            f(p, chunk);
        }
        out
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    /// Number of grid points.
    pub fn points(&self) -> usize {
        self.data.len() / self.ncomp
    }

    #[inline]
    pub fn at(&self, p: usize) -> &[f64] {
        &self.data[p * self.ncomp..(p + 1) * self.ncomp]
    }

    #[inline]
    pub fn at_mut(&mut self, p: usize) -> &mut [f64] {
        &mut self.data[p * self.ncomp..(p + 1) * self.ncomp]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Extracts component `c` as a scalar field.
    pub fn component(&self, c: usize) -> Field {
        Field::scalar(
            self.data
                .iter()
                .skip(c)
                .step_by(self.ncomp)
                .copied()
                .collect(),
        )
    }

    pub fn scaled(&self, a: f64) -> Field {
        Field {
            ncomp: self.ncomp,
            data: self.data.iter().map(|v| a * v).collect(),
        }
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &Field) {
        assert_eq!(self.data.len(), other.data.len());
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
    }

    pub fn add(&self, other: &Field) -> Field {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &Field) -> Field {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Maximum over points of the Euclidean norm of the component vector.
    pub fn max_norm(&self) -> f64 {
        self.data
            .chunks(self.ncomp)
            .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Maximum absolute component.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Pairwise summation; deterministic and well conditioned for long sums.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}
