//! Layer primitives composed from tape operations.

use crate::error::Result;
use crate::nn::tape::{Tape, ValueId};

/// Activation applied after the affine transform of [`dense`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    None,
    Relu,
    Softmax,
}

/// Affine transform plus activation: `act(input . weights + bias)`.
pub fn dense(
    tape: &mut Tape,
    input: ValueId,
    weights: ValueId,
    bias: ValueId,
    activation: Activation,
) -> Result<ValueId> {
    let z = tape.matmul(input, weights)?;
    let z = tape.add_row_broadcast(z, bias)?;
    match activation {
        Activation::None => Ok(z),
        Activation::Relu => tape.relu(z),
        Activation::Softmax => tape.softmax_rows(z),
    }
}

/// Gate matrices of one GRU cell. Inputs are `[batch x m]`, states `[batch x n]`.
#[derive(Clone, Copy, Debug)]
pub struct GruIds {
    pub wz: ValueId,
    pub uz: ValueId,
    pub bz: ValueId,
    pub wr: ValueId,
    pub ur: ValueId,
    pub br: ValueId,
    pub wc: ValueId,
    pub uc: ValueId,
    pub bc: ValueId,
}

/// Standard GRU step.
///
/// ```text
/// z  = sigmoid(x.Wz + h.Uz + bz)        update gate
/// r  = sigmoid(x.Wr + h.Ur + br)        reset gate
/// c  = tanh(x.Wc + (r o h).Uc + bc)     candidate
/// h' = (1 - z) o h + z o c
/// ```
pub fn gru_cell(tape: &mut Tape, state: ValueId, input: ValueId, p: &GruIds) -> Result<ValueId> {
    let zx = tape.matmul(input, p.wz)?;
    let zh = tape.matmul(state, p.uz)?;
    let z = tape.add(zx, zh)?;
    let z = tape.add_row_broadcast(z, p.bz)?;
    let z = tape.sigmoid(z)?;

    let rx = tape.matmul(input, p.wr)?;
    let rh = tape.matmul(state, p.ur)?;
    let r = tape.add(rx, rh)?;
    let r = tape.add_row_broadcast(r, p.br)?;
    let r = tape.sigmoid(r)?;

    let rh = tape.mul(r, state)?;
    let cx = tape.matmul(input, p.wc)?;
    let ch = tape.matmul(rh, p.uc)?;
    let c = tape.add(cx, ch)?;
    let c = tape.add_row_broadcast(c, p.bc)?;
    let c = tape.tanh(c)?;

    // h + z o (c - h) == (1 - z) o h + z o c
    let diff = tape.sub(c, state)?;
    let step = tape.mul(z, diff)?;
    tape.add(state, step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tape::sigmoid;
    use crate::nn::tensor::Tensor;

    fn tensor(shape: &[usize], data: Vec<f64>) -> Tensor {
        Tensor::from_vec(shape, data).unwrap()
    }

    #[test]
    fn dense_identity_weights_passes_input_through() {
        let mut tape = Tape::new();
        let input = tape.leaf(tensor(&[2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, -1.5]));
        let mut eye = vec![0.0; 9];
        for i in 0..3 {
            eye[i * 3 + i] = 1.0;
        }
        let w = tape.leaf(tensor(&[3, 3], eye));
        let b = tape.leaf(Tensor::zeros(&[3]));
        let out = dense(&mut tape, input, w, b, Activation::None).unwrap();
        assert_eq!(tape.value(out).data(), tape.value(input).data());
    }

    #[test]
    fn dense_relu_clamps() {
        let mut tape = Tape::new();
        let input = tape.leaf(tensor(&[1, 2], vec![-1.0, 2.0]));
        let mut eye = vec![0.0; 4];
        eye[0] = 1.0;
        eye[3] = 1.0;
        let w = tape.leaf(tensor(&[2, 2], eye));
        let b = tape.leaf(Tensor::zeros(&[2]));
        let out = dense(&mut tape, input, w, b, Activation::Relu).unwrap();
        assert_eq!(tape.value(out).data(), &[0.0, 2.0]);
    }

    struct GruFixture {
        n: usize,
        m: usize,
        mats: Vec<Vec<f64>>, // wz, uz, wr, ur, wc, uc
        biases: Vec<Vec<f64>>, // bz, br, bc
    }

    impl GruFixture {
        fn random(n: usize, m: usize, seed: u64) -> Self {
            let mut state = seed;
            let mut next = || {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            };
            let mats = vec![
                (0..m * n).map(|_| next()).collect(),
                (0..n * n).map(|_| next()).collect(),
                (0..m * n).map(|_| next()).collect(),
                (0..n * n).map(|_| next()).collect(),
                (0..m * n).map(|_| next()).collect(),
                (0..n * n).map(|_| next()).collect(),
            ];
            let biases = vec![
                (0..n).map(|_| next()).collect(),
                (0..n).map(|_| next()).collect(),
                (0..n).map(|_| next()).collect(),
            ];
            GruFixture { n, m, mats, biases }
        }

        fn register(&self, tape: &mut Tape) -> GruIds {
            GruIds {
                wz: tape.leaf(tensor(&[self.m, self.n], self.mats[0].clone())),
                uz: tape.leaf(tensor(&[self.n, self.n], self.mats[1].clone())),
                bz: tape.leaf(tensor(&[self.n], self.biases[0].clone())),
                wr: tape.leaf(tensor(&[self.m, self.n], self.mats[2].clone())),
                ur: tape.leaf(tensor(&[self.n, self.n], self.mats[3].clone())),
                br: tape.leaf(tensor(&[self.n], self.biases[1].clone())),
                wc: tape.leaf(tensor(&[self.m, self.n], self.mats[4].clone())),
                uc: tape.leaf(tensor(&[self.n, self.n], self.mats[5].clone())),
                bc: tape.leaf(tensor(&[self.n], self.biases[2].clone())),
            }
        }

        /// Scalar-loop reference, written against the gate equations directly.
        fn oracle(&self, h: &[f64], x: &[f64]) -> Vec<f64> {
            let (n, m) = (self.n, self.m);
            let dot = |mat: &[f64], vin: &[f64], rows: usize, j: usize| -> f64 {
                let mut acc = 0.0;
                for i in 0..rows {
                    acc += vin[i] * mat[i * n + j];
                }
                acc
            };
            let mut out = vec![0.0; n];
            for j in 0..n {
                let z = sigmoid(
                    dot(&self.mats[0], x, m, j) + dot(&self.mats[1], h, n, j) + self.biases[0][j],
                );
                let r = sigmoid(
                    dot(&self.mats[2], x, m, j) + dot(&self.mats[3], h, n, j) + self.biases[1][j],
                );
                // candidate needs r applied to h before the recurrent matmul
                let rh: Vec<f64> = (0..n)
                    .map(|i| {
                        let ri = sigmoid(
                            dot(&self.mats[2], x, m, i)
                                + dot(&self.mats[3], h, n, i)
                                + self.biases[1][i],
                        );
                        ri * h[i]
                    })
                    .collect();
                let c = (dot(&self.mats[4], x, m, j) + dot(&self.mats[5], &rh, n, j)
                    + self.biases[2][j])
                    .tanh();
                let _ = r;
                out[j] = (1.0 - z) * h[j] + z * c;
            }
            out
        }
    }

    #[test]
    fn gru_update_gate_closed_keeps_state() {
        // huge negative bz forces z ~= 0 so h' = h
        let n = 3;
        let mut fx = GruFixture::random(n, n, 7);
        fx.biases[0] = vec![-1e4; n];
        let mut tape = Tape::new();
        let ids = fx.register(&mut tape);
        let h = tape.leaf(tensor(&[1, n], vec![0.4, -0.7, 1.2]));
        let x = tape.leaf(tensor(&[1, n], vec![1.0, 2.0, -3.0]));
        let out = gru_cell(&mut tape, h, x, &ids).unwrap();
        for (a, b) in tape.value(out).data().iter().zip(tape.value(h).data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gru_full_overwrite_with_zero_candidate_is_zero() {
        // z ~= 1 and zero candidate weights/biases: h' = 0
        let n = 3;
        let mut fx = GruFixture::random(n, n, 11);
        fx.biases[0] = vec![1e4; n];
        fx.mats[4] = vec![0.0; n * n];
        fx.mats[5] = vec![0.0; n * n];
        fx.biases[2] = vec![0.0; n];
        let mut tape = Tape::new();
        let ids = fx.register(&mut tape);
        let h = tape.leaf(tensor(&[1, n], vec![0.4, -0.7, 1.2]));
        let x = tape.leaf(tensor(&[1, n], vec![1.0, 2.0, -3.0]));
        let out = gru_cell(&mut tape, h, x, &ids).unwrap();
        for v in tape.value(out).data() {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn gru_matches_scalar_loop_oracle() {
        let fx = GruFixture::random(4, 3, 99);
        let h = vec![0.25, -0.5, 0.75, -1.0];
        let x = vec![1.5, -0.25, 0.8];
        let expected = fx.oracle(&h, &x);

        let mut tape = Tape::new();
        let ids = fx.register(&mut tape);
        let hid = tape.leaf(tensor(&[1, 4], h));
        let xid = tape.leaf(tensor(&[1, 3], x));
        let out = gru_cell(&mut tape, hid, xid, &ids).unwrap();
        for (got, want) in tape.value(out).data().iter().zip(&expected) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }
}
