//! Flat views over parameter tensors, used for optimizer updates,
//! checkpoints and gradient checks.

use ndarray::{Array1, Array2};

#[derive(Debug)]
pub struct TensorRef<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

#[derive(Debug)]
pub struct TensorMut<'a> {
    pub name: String,
    pub data: &'a mut [f64],
}

impl<'a> TensorRef<'a> {
    pub(crate) fn matrix(name: String, m: &'a Array2<f64>) -> Self {
        TensorRef {
            name,
            shape: m.shape().to_vec(),
            data: m.as_slice().expect("parameters use standard layout"),
        }
    }

    pub(crate) fn vector(name: String, v: &'a Array1<f64>) -> Self {
        TensorRef {
            name,
            shape: vec![v.len()],
            data: v.as_slice().expect("parameters use standard layout"),
        }
    }
}

impl<'a> TensorMut<'a> {
    pub(crate) fn matrix(name: String, m: &'a mut Array2<f64>) -> Self {
        TensorMut {
            name,
            data: m.as_slice_mut().expect("parameters use standard layout"),
        }
    }

    pub(crate) fn vector(name: String, v: &'a mut Array1<f64>) -> Self {
        TensorMut {
            name,
            data: v.as_slice_mut().expect("parameters use standard layout"),
        }
    }
}

/// `m += a ⊗ b`.
pub(crate) fn outer_add(m: &mut Array2<f64>, a: &Array1<f64>, b: &Array1<f64>) {
    for (mut row, &ai) in m.rows_mut().into_iter().zip(a) {
        if ai != 0.0 {
            row.scaled_add(ai, b);
        }
    }
}
