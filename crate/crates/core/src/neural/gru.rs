//! Gated recurrent unit cell.
//!
//! ```text
//! r  = σ(W_r x + U_r h + b_r)
//! z  = σ(W_z x + U_z h + b_z)
//! h̃  = tanh(W_x x + U_x (r ∘ h))
//! h' = (1 − z) ∘ h + z ∘ h̃
//! ```
//!
//! The candidate state has no bias term.

use ndarray::{Array1, Array2, ArrayView1, Zip};
use rand::Rng;

use super::tensor::{outer_add, TensorMut, TensorRef};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub w_r: Array2<f64>,
    pub w_z: Array2<f64>,
    pub w_x: Array2<f64>,
    pub u_r: Array2<f64>,
    pub u_z: Array2<f64>,
    pub u_x: Array2<f64>,
    pub b_r: Array1<f64>,
    pub b_z: Array1<f64>,
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone)]
pub(crate) struct GruStep {
    pub x: Array1<f64>,
    pub h_prev: Array1<f64>,
    pub r: Array1<f64>,
    pub z: Array1<f64>,
    pub cand: Array1<f64>,
    pub h: Array1<f64>,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl GruParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let wi = || Array2::zeros((hidden_dim, input_dim));
        let wh = || Array2::zeros((hidden_dim, hidden_dim));
        GruParams {
            w_r: wi(),
            w_z: wi(),
            w_x: wi(),
            u_r: wh(),
            u_z: wh(),
            u_x: wh(),
            b_r: Array1::zeros(hidden_dim),
            b_z: Array1::zeros(hidden_dim),
        }
    }

    /// Matrices uniform in `[-scale, scale]`, biases zero.
    pub fn uniform<R: Rng>(input_dim: usize, hidden_dim: usize, scale: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(input_dim, hidden_dim);
        for m in [&mut p.w_r, &mut p.w_z, &mut p.w_x, &mut p.u_r, &mut p.u_z, &mut p.u_x] {
            m.mapv_inplace(|_| rng.random_range(-scale..=scale));
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w_r.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_r.nrows()
    }

    pub fn check_shapes(&self) -> Result<()> {
        let (h, i) = (self.hidden_dim(), self.input_dim());
        let mats = [
            ("w_r", &self.w_r, (h, i)),
            ("w_z", &self.w_z, (h, i)),
            ("w_x", &self.w_x, (h, i)),
            ("u_r", &self.u_r, (h, h)),
            ("u_z", &self.u_z, (h, h)),
            ("u_x", &self.u_x, (h, h)),
        ];
        for (name, m, want) in mats {
            if m.dim() != want {
                return Err(Error::Shape(format!("gru {name} is {:?}, expected {want:?}", m.dim())));
            }
        }
        for (name, b) in [("b_r", &self.b_r), ("b_z", &self.b_z)] {
            if b.len() != h {
                return Err(Error::Shape(format!("gru {name} has length {}, expected {h}", b.len())));
            }
        }
        Ok(())
    }

    /// One recurrence step with shape validation.
    pub fn step(&self, x: &Array1<f64>, h_prev: &Array1<f64>) -> Result<Array1<f64>> {
        self.check_shapes()?;
        if x.len() != self.input_dim() || h_prev.len() != self.hidden_dim() {
            return Err(Error::Shape(format!(
                "gru step got x of {} and h of {}, expected {} and {}",
                x.len(),
                h_prev.len(),
                self.input_dim(),
                self.hidden_dim()
            )));
        }
        Ok(self.forward(x.view(), h_prev.view()).h)
    }

    pub(crate) fn forward(&self, x: ArrayView1<f64>, h_prev: ArrayView1<f64>) -> GruStep {
        let r = (self.w_r.dot(&x) + self.u_r.dot(&h_prev) + &self.b_r).mapv(sigmoid);
        let z = (self.w_z.dot(&x) + self.u_z.dot(&h_prev) + &self.b_z).mapv(sigmoid);
        let gated = &r * &h_prev;
        let cand = (self.w_x.dot(&x) + self.u_x.dot(&gated)).mapv(f64::tanh);
        let h = Zip::from(&z)
            .and(&h_prev)
            .and(&cand)
            .map_collect(|&z, &hp, &c| (1.0 - z) * hp + z * c);
        GruStep {
            x: x.to_owned(),
            h_prev: h_prev.to_owned(),
            r,
            z,
            cand,
            h,
        }
    }

    /// Accumulates parameter gradients for one step into `grad` and returns
    /// `(∂L/∂x, ∂L/∂h_prev)` given `dh = ∂L/∂h`.
    pub(crate) fn backward(
        &self,
        step: &GruStep,
        dh: &Array1<f64>,
        grad: &mut GruParams,
    ) -> (Array1<f64>, Array1<f64>) {
        let GruStep {
            x,
            h_prev,
            r,
            z,
            cand,
            ..
        } = step;

        // h' = (1 - z) h + z c
        let dz = dh * &(cand - h_prev);
        let dcand = dh * z;
        let mut dh_prev = dh * &z.mapv(|v| 1.0 - v);

        // c = tanh(W_x x + U_x (r ∘ h))
        let da_c = &dcand * &cand.mapv(|c| 1.0 - c * c);
        let gated = r * h_prev;
        outer_add(&mut grad.w_x, &da_c, x);
        outer_add(&mut grad.u_x, &da_c, &gated);
        let dgated = self.u_x.t().dot(&da_c);
        let mut dx = self.w_x.t().dot(&da_c);
        let dr = &dgated * h_prev;
        dh_prev += &(&dgated * r);

        let da_z = &dz * &z.mapv(|v| v * (1.0 - v));
        outer_add(&mut grad.w_z, &da_z, x);
        outer_add(&mut grad.u_z, &da_z, h_prev);
        grad.b_z += &da_z;
        dx += &self.w_z.t().dot(&da_z);
        dh_prev += &self.u_z.t().dot(&da_z);

        let da_r = &dr * &r.mapv(|v| v * (1.0 - v));
        outer_add(&mut grad.w_r, &da_r, x);
        outer_add(&mut grad.u_r, &da_r, h_prev);
        grad.b_r += &da_r;
        dx += &self.w_r.t().dot(&da_r);
        dh_prev += &self.u_r.t().dot(&da_r);

        (dx, dh_prev)
    }

    pub(crate) fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<TensorRef<'a>>) {
        for (name, m) in [
            ("w_r", &self.w_r),
            ("w_z", &self.w_z),
            ("w_x", &self.w_x),
            ("u_r", &self.u_r),
            ("u_z", &self.u_z),
            ("u_x", &self.u_x),
        ] {
            out.push(TensorRef::matrix(format!("{prefix}.{name}"), m));
        }
        out.push(TensorRef::vector(format!("{prefix}.b_r"), &self.b_r));
        out.push(TensorRef::vector(format!("{prefix}.b_z"), &self.b_z));
    }

    pub(crate) fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorMut<'a>>) {
        let GruParams {
            w_r,
            w_z,
            w_x,
            u_r,
            u_z,
            u_x,
            b_r,
            b_z,
        } = self;
        for (name, m) in [
            ("w_r", w_r),
            ("w_z", w_z),
            ("w_x", w_x),
            ("u_r", u_r),
            ("u_z", u_z),
            ("u_x", u_x),
        ] {
            out.push(TensorMut::matrix(format!("{prefix}.{name}"), m));
        }
        out.push(TensorMut::vector(format!("{prefix}.b_r"), b_r));
        out.push(TensorMut::vector(format!("{prefix}.b_z"), b_z));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_params_halve_the_state() {
        let p = GruParams::zeros(3, 2);
        let h = p.step(&array![0.4, -1.0, 2.0], &array![0.6, -0.2]).unwrap();
        assert_abs_diff_eq!(h[0], 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(h[1], -0.1, epsilon = 1e-15);
    }

    #[test]
    fn zero_input_zero_state_stays_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = GruParams::uniform(3, 4, 0.5, &mut rng);
        let h = p.step(&Array1::zeros(3), &Array1::zeros(4)).unwrap();
        assert!(h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let p = GruParams::zeros(3, 2);
        assert!(p.step(&array![1.0, 2.0], &array![0.0, 0.0]).is_err());
        assert!(p.step(&array![1.0, 2.0, 3.0], &array![0.0]).is_err());
        let mut bad = GruParams::zeros(3, 2);
        bad.u_z = Array2::zeros((2, 3));
        assert!(bad.check_shapes().is_err());
    }

    /// Scalar re-statement of the cell, written out index by index.
    fn scalar_step(p: &GruParams, x: &[f64], h: &[f64]) -> Vec<f64> {
        let nh = h.len();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let affine = |w: &Array2<f64>, u: &Array2<f64>, hv: &[f64], i: usize| {
            let mut s = 0.0;
            for (j, xj) in x.iter().enumerate() {
                s += w[[i, j]] * xj;
            }
            for (j, hj) in hv.iter().enumerate() {
                s += u[[i, j]] * hj;
            }
            s
        };
        let r: Vec<f64> = (0..nh).map(|i| sig(affine(&p.w_r, &p.u_r, h, i) + p.b_r[i])).collect();
        let z: Vec<f64> = (0..nh).map(|i| sig(affine(&p.w_z, &p.u_z, h, i) + p.b_z[i])).collect();
        let rh: Vec<f64> = (0..nh).map(|i| r[i] * h[i]).collect();
        (0..nh)
            .map(|i| {
                let c = affine(&p.w_x, &p.u_x, &rh, i).tanh();
                (1.0 - z[i]) * h[i] + z[i] * c
            })
            .collect()
    }

    #[test]
    fn matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (i, h) in [(2, 2), (3, 2), (2, 3), (3, 3)] {
            let mut p = GruParams::uniform(i, h, 0.9, &mut rng);
            p.b_r.mapv_inplace(|_| rng.random_range(-0.5..0.5));
            p.b_z.mapv_inplace(|_| rng.random_range(-0.5..0.5));
            let x = Array1::from_shape_fn(i, |_| rng.random_range(-1.0..1.0));
            let hp = Array1::from_shape_fn(h, |_| rng.random_range(-1.0..1.0));
            let got = p.step(&x, &hp).unwrap();
            let want = scalar_step(&p, x.as_slice().unwrap(), hp.as_slice().unwrap());
            for (g, w) in got.iter().zip(&want) {
                assert_abs_diff_eq!(g, w, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn distinct_update_gate_matrix_is_used() {
        let mut p = GruParams::zeros(1, 1);
        p.u_z[[0, 0]] = 5.0;
        let h = p.step(&array![0.0], &array![1.0]).unwrap();
        // z = σ(5), candidate 0 → h = 1 − σ(5)
        assert_abs_diff_eq!(h[0], 1.0 - sigmoid(5.0), epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn state_stays_bounded(seed: u64, scale in 0.0f64..3.0, hscale in 0.0f64..4.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = GruParams::uniform(3, 4, scale, &mut rng);
            let x = Array1::from_shape_fn(3, |_| rng.random_range(-5.0..5.0));
            let h = Array1::from_shape_fn(4, |_| rng.random_range(-hscale..=hscale));
            let next = p.step(&x, &h).unwrap();
            let prev_norm = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let norm = next.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            prop_assert!(norm <= prev_norm.max(1.0) + 1e-12);
        }
    }
}
