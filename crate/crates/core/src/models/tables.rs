use rand::Rng;

use super::ModelSpec;
use crate::error::{KgeError, Result};
use crate::real::Real;
use crate::rng;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(KgeError::contract(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> Self {
        let data = (0..rows * cols)
            .map(|_| T::lit(rng.gen_range(-bound..=bound)))
            .collect();
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| U::lit(x.to_f64_lossy())).collect(),
        }
    }
}

/// Entity vectors, one row of length `dim` per entity.
#[derive(Clone, Debug, PartialEq)]
pub struct EntityTable<T>(pub Matrix<T>);

impl<T: Real> EntityTable<T> {
    pub fn new(matrix: Matrix<T>) -> Self {
        EntityTable(matrix)
    }

    pub fn len(&self) -> usize {
        self.0.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }

    pub fn get(&self, id: u32) -> Result<&[T]> {
        if id as usize >= self.len() {
            return Err(KgeError::contract(format!(
                "entity id {id} out of range for {} entities",
                self.len()
            )));
        }
        Ok(self.0.row(id as usize))
    }

    pub fn row(&self, id: u32) -> &[T] {
        self.0.row(id as usize)
    }

    /// Rescales every row to unit L2 norm (zero rows stay zero).
    pub fn renormalize_rows(&mut self, rows: impl IntoIterator<Item = u32>) {
        for i in rows {
            let row = self.0.row_mut(i as usize);
            let norm = row.iter().map(|&x| x * x).sum::<T>().sqrt();
            if norm > T::zero() {
                row.iter_mut().for_each(|x| *x /= norm);
            }
        }
    }
}

/// Relation parameters laid out as contiguous `dim`-wide segments,
/// `[r]` for TransE, `[r_h | r_t]` for PairRE and `[r_h | r_m | r_t]` for
/// TripleRE.
#[derive(Clone, Debug, PartialEq)]
pub struct RelationParams<T>(pub Matrix<T>);

impl<T: Real> RelationParams<T> {
    pub fn new(matrix: Matrix<T>) -> Self {
        RelationParams(matrix)
    }

    pub fn len(&self) -> usize {
        self.0.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.rows() == 0
    }

    pub fn get(&self, id: u32) -> Result<&[T]> {
        if id as usize >= self.len() {
            return Err(KgeError::contract(format!(
                "relation id {id} out of range for {} relations",
                self.len()
            )));
        }
        Ok(self.0.row(id as usize))
    }

    pub fn row(&self, id: u32) -> &[T] {
        self.0.row(id as usize)
    }

    /// Columns `[s·dim, (s+1)·dim)` of relation `id`.
    pub fn segment(&self, id: u32, s: usize, dim: usize) -> &[T] {
        &self.0.row(id as usize)[s * dim..(s + 1) * dim]
    }
}

/// Uniform initialization in `[-γ/d, γ/d]`, seeded.
pub fn init_params<T: Real>(
    spec: &ModelSpec,
    n_entities: usize,
    n_relations: usize,
    seed: u64,
) -> (EntityTable<T>, RelationParams<T>) {
    let bound = spec.gamma / spec.dim as f64;
    let mut rng = rng::stream(seed, "init", 0);
    let entities = Matrix::uniform(n_entities, spec.dim, bound, &mut rng);
    let relations = Matrix::uniform(n_relations, spec.relation_width(), bound, &mut rng);
    (EntityTable(entities), RelationParams(relations))
}
