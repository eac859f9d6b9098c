use ndarray::{s, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gru::GruParams;
use super::tensor::{TensorMut, TensorRef};
use crate::{Error, Result};

/// Default init range for weight matrices.
pub const INIT_SCALE: f64 = 0.08;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Architecture {
    /// Query encoder only.
    #[serde(rename = "seq2seq")]
    Seq2Seq,
    /// Query encoder plus retrieved-reply encoder.
    #[serde(rename = "biseq2seq")]
    BiSeq2Seq,
}

impl Architecture {
    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Seq2Seq => "seq2seq",
            Architecture::BiSeq2Seq => "biseq2seq",
        }
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seq2seq" => Ok(Architecture::Seq2Seq),
            "biseq2seq" => Ok(Architecture::BiSeq2Seq),
            other => Err(Error::invalid(format!("unknown architecture {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Vocabulary size shared by both encoders.
    pub enc_vocab: usize,
    pub dec_vocab: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub embedding: Array2<f64>,
    pub gru: GruParams,
}

/// Affine map from the concatenated sentence vectors to the decoder's
/// initial state. No nonlinearity.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgeParams {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    pub embedding: Array2<f64>,
    pub gru: GruParams,
    /// Row `i` scores decoder token `i`.
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
}

/// A seq2seq or biseq2seq generator. The encoders, bridge and decoder own
/// separate parameters; nothing is shared.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorModel {
    pub arch: Architecture,
    pub dims: ModelDims,
    pub enc_q: EncoderParams,
    /// Present only for [`Architecture::BiSeq2Seq`].
    pub enc_r: Option<EncoderParams>,
    pub bridge: BridgeParams,
    pub dec: DecoderParams,
}

fn uniform_matrix<R: Rng>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-scale..=scale))
}

impl EncoderParams {
    fn init<R: Rng>(vocab: usize, embed: usize, hidden: usize, scale: f64, rng: &mut R) -> Self {
        EncoderParams {
            embedding: uniform_matrix(vocab, embed, scale, rng),
            gru: GruParams::uniform(embed, hidden, scale, rng),
        }
    }

    fn zeros_like(&self) -> Self {
        EncoderParams {
            embedding: Array2::zeros(self.embedding.raw_dim()),
            gru: GruParams::zeros(self.gru.input_dim(), self.gru.hidden_dim()),
        }
    }

    /// Final hidden state after reading `ids` from a zero state.
    pub fn encode(&self, ids: &[usize]) -> Result<Array1<f64>> {
        if ids.is_empty() {
            return Err(Error::invalid("cannot encode an empty sequence"));
        }
        let vocab = self.embedding.nrows();
        if let Some(&bad) = ids.iter().find(|&&id| id >= vocab) {
            return Err(Error::invalid(format!("encoder id {bad} out of range ({vocab})")));
        }
        let mut h = Array1::zeros(self.gru.hidden_dim());
        for &id in ids {
            h = self.gru.forward(self.embedding.row(id), h.view()).h;
        }
        Ok(h)
    }

    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<TensorRef<'a>>) {
        out.push(TensorRef::matrix(format!("{prefix}.embedding"), &self.embedding));
        self.gru.tensors(&format!("{prefix}.gru"), out);
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorMut<'a>>) {
        out.push(TensorMut::matrix(format!("{prefix}.embedding"), &mut self.embedding));
        self.gru.tensors_mut(&format!("{prefix}.gru"), out);
    }
}

impl GeneratorModel {
    /// Seeded initialization: matrices uniform in ±[`INIT_SCALE`], biases 0.
    pub fn new(arch: Architecture, dims: ModelDims, seed: u64) -> Self {
        Self::with_init_scale(arch, dims, seed, INIT_SCALE)
    }

    pub fn with_init_scale(arch: Architecture, dims: ModelDims, seed: u64, scale: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ModelDims {
            enc_vocab,
            dec_vocab,
            embed_dim: e,
            hidden_dim: h,
        } = dims;
        let enc_q = EncoderParams::init(enc_vocab, e, h, scale, &mut rng);
        let enc_r = match arch {
            Architecture::Seq2Seq => None,
            Architecture::BiSeq2Seq => Some(EncoderParams::init(enc_vocab, e, h, scale, &mut rng)),
        };
        let ctx = h * arch_inputs(arch);
        let bridge = BridgeParams {
            w: uniform_matrix(h, ctx, scale, &mut rng),
            b: Array1::zeros(h),
        };
        let dec = DecoderParams {
            embedding: uniform_matrix(dec_vocab, e, scale, &mut rng),
            gru: GruParams::uniform(e, h, scale, &mut rng),
            w_out: uniform_matrix(dec_vocab, h, scale, &mut rng),
            b_out: Array1::zeros(dec_vocab),
        };
        GeneratorModel {
            arch,
            dims,
            enc_q,
            enc_r,
            bridge,
            dec,
        }
    }

    /// Same structure with every entry zero.
    pub fn zeros_like(&self) -> Self {
        GeneratorModel {
            arch: self.arch,
            dims: self.dims,
            enc_q: self.enc_q.zeros_like(),
            enc_r: self.enc_r.as_ref().map(EncoderParams::zeros_like),
            bridge: BridgeParams {
                w: Array2::zeros(self.bridge.w.raw_dim()),
                b: Array1::zeros(self.bridge.b.len()),
            },
            dec: DecoderParams {
                embedding: Array2::zeros(self.dec.embedding.raw_dim()),
                gru: GruParams::zeros(self.dec.gru.input_dim(), self.dec.gru.hidden_dim()),
                w_out: Array2::zeros(self.dec.w_out.raw_dim()),
                b_out: Array1::zeros(self.dec.b_out.len()),
            },
        }
    }

    /// Zeroes the decoder's output weights and bias, which makes every
    /// next-token distribution uniform.
    pub fn zero_output_layer(&mut self) {
        self.dec.w_out.fill(0.0);
        self.dec.b_out.fill(0.0);
    }

    /// Parameter tensors in a fixed catalog order.
    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = Vec::new();
        self.enc_q.tensors("enc_q", &mut out);
        if let Some(enc_r) = &self.enc_r {
            enc_r.tensors("enc_r", &mut out);
        }
        out.push(TensorRef::matrix("bridge.w".into(), &self.bridge.w));
        out.push(TensorRef::vector("bridge.b".into(), &self.bridge.b));
        out.push(TensorRef::matrix("dec.embedding".into(), &self.dec.embedding));
        self.dec.gru.tensors("dec.gru", &mut out);
        out.push(TensorRef::matrix("dec.w_out".into(), &self.dec.w_out));
        out.push(TensorRef::vector("dec.b_out".into(), &self.dec.b_out));
        out
    }

    /// Mutable tensors in the same order as [`GeneratorModel::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let mut out = Vec::new();
        let GeneratorModel {
            enc_q,
            enc_r,
            bridge,
            dec,
            ..
        } = self;
        enc_q.tensors_mut("enc_q", &mut out);
        if let Some(enc_r) = enc_r {
            enc_r.tensors_mut("enc_r", &mut out);
        }
        out.push(TensorMut::matrix("bridge.w".into(), &mut bridge.w));
        out.push(TensorMut::vector("bridge.b".into(), &mut bridge.b));
        let DecoderParams {
            embedding,
            gru,
            w_out,
            b_out,
        } = dec;
        out.push(TensorMut::matrix("dec.embedding".into(), embedding));
        gru.tensors_mut("dec.gru", &mut out);
        out.push(TensorMut::matrix("dec.w_out".into(), w_out));
        out.push(TensorMut::vector("dec.b_out".into(), b_out));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    /// `self += other`, tensor by tensor.
    pub fn add_assign(&mut self, other: &GeneratorModel) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.data.iter_mut().zip(src.data) {
                *d += s;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Validates every tensor shape against `dims` and the architecture.
    pub fn check_shapes(&self) -> Result<()> {
        let ModelDims {
            enc_vocab,
            dec_vocab,
            embed_dim: e,
            hidden_dim: h,
        } = self.dims;
        let expect = |name: &str, got: &[usize], want: &[usize]| {
            if got == want {
                Ok(())
            } else {
                Err(Error::Shape(format!("{name} is {got:?}, expected {want:?}")))
            }
        };
        let encs = std::iter::once(("enc_q", Some(&self.enc_q)))
            .chain(std::iter::once(("enc_r", self.enc_r.as_ref())));
        for (name, enc) in encs {
            match (name, enc, self.arch) {
                ("enc_r", None, Architecture::Seq2Seq) => continue,
                ("enc_r", Some(_), Architecture::Seq2Seq) => {
                    return Err(Error::Shape("seq2seq model carries an enc_r".into()))
                }
                (_, None, _) => return Err(Error::Shape(format!("{name} missing"))),
                (_, Some(enc), _) => {
                    expect(name, enc.embedding.shape(), &[enc_vocab, e])?;
                    expect(name, &[enc.gru.hidden_dim(), enc.gru.input_dim()], &[h, e])?;
                    enc.gru.check_shapes()?;
                }
            }
        }
        expect("bridge.w", self.bridge.w.shape(), &[h, h * arch_inputs(self.arch)])?;
        expect("bridge.b", self.bridge.b.shape(), &[h])?;
        expect("dec.embedding", self.dec.embedding.shape(), &[dec_vocab, e])?;
        expect("dec.gru", &[self.dec.gru.hidden_dim(), self.dec.gru.input_dim()], &[h, e])?;
        self.dec.gru.check_shapes()?;
        expect("dec.w_out", self.dec.w_out.shape(), &[dec_vocab, h])?;
        expect("dec.b_out", self.dec.b_out.shape(), &[dec_vocab])
    }

    /// Affine bridge over `[q; r]` (biseq2seq) or `q` (seq2seq).
    pub fn bridge(&self, q_vec: &Array1<f64>, r_vec: Option<&Array1<f64>>) -> Result<Array1<f64>> {
        let input = self.bridge_input(q_vec, r_vec)?;
        if input.len() != self.bridge.w.ncols() {
            return Err(Error::Shape(format!(
                "bridge expects {} inputs, got {}",
                self.bridge.w.ncols(),
                input.len()
            )));
        }
        Ok(self.bridge.w.dot(&input) + &self.bridge.b)
    }

    pub(crate) fn bridge_input(&self, q_vec: &Array1<f64>, r_vec: Option<&Array1<f64>>) -> Result<Array1<f64>> {
        match (self.arch, r_vec) {
            (Architecture::Seq2Seq, _) => Ok(q_vec.clone()),
            (Architecture::BiSeq2Seq, Some(r)) => {
                let mut cat = Array1::zeros(q_vec.len() + r.len());
                cat.slice_mut(s![..q_vec.len()]).assign(q_vec);
                cat.slice_mut(s![q_vec.len()..]).assign(r);
                Ok(cat)
            }
            (Architecture::BiSeq2Seq, None) => Err(Error::invalid(
                "biseq2seq needs a retrieved reply to condition on",
            )),
        }
    }

    /// Decoder initial state for a query and optional retrieved reply.
    pub fn initial_state(&self, q_ids: &[usize], rstar_ids: Option<&[usize]>) -> Result<Array1<f64>> {
        let q_vec = self.enc_q.encode(q_ids)?;
        let r_vec = match (&self.enc_r, rstar_ids) {
            (Some(enc_r), Some(ids)) => Some(enc_r.encode(ids)?),
            _ => None,
        };
        self.bridge(&q_vec, r_vec.as_ref())
    }

    /// `W_out h + b_out`.
    pub fn logits(&self, h: &Array1<f64>) -> Array1<f64> {
        self.dec.w_out.dot(h) + &self.dec.b_out
    }
}

fn arch_inputs(arch: Architecture) -> usize {
    match arch {
        Architecture::Seq2Seq => 1,
        Architecture::BiSeq2Seq => 2,
    }
}

/// Max-subtracted softmax.
pub fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut e = logits.mapv(|v| (v - max).exp());
    let total = e.sum();
    e /= total;
    e
}

/// Log-softmax computed with the log-sum-exp shift.
pub fn log_softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    logits.mapv(|v| v - lse)
}

/// Probability floor used inside the log of the cross-entropy.
pub const PROB_FLOOR: f64 = 1e-12;

/// `−Σ log y[target]` over positions, with probabilities floored at
/// [`PROB_FLOOR`]. Returns the loss and how many positions hit the floor.
pub fn cross_entropy(probs: &[Array1<f64>], targets: &[usize]) -> Result<(f64, usize)> {
    if probs.len() != targets.len() {
        return Err(Error::invalid(format!(
            "{} distributions for {} targets",
            probs.len(),
            targets.len()
        )));
    }
    let mut loss = 0.0;
    let mut clamped = 0;
    for (p, &t) in probs.iter().zip(targets) {
        let pt = *p
            .get(t)
            .ok_or_else(|| Error::invalid(format!("target {t} out of range ({})", p.len())))?;
        if pt < PROB_FLOOR {
            clamped += 1;
        }
        loss -= pt.max(PROB_FLOOR).ln();
    }
    Ok((loss, clamped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn dims() -> ModelDims {
        ModelDims {
            enc_vocab: 9,
            dec_vocab: 7,
            embed_dim: 3,
            hidden_dim: 2,
        }
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&array![0.0, 0.0]), array![0.5, 0.5]);
        let p = softmax(&array![1f64.ln(), 3f64.ln()]);
        assert_abs_diff_eq!(p[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.75, epsilon = 1e-15);
        let ls = log_softmax(&array![1f64.ln(), 3f64.ln()]);
        assert_abs_diff_eq!(ls[1], 0.75f64.ln(), epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn softmax_is_a_shift_invariant_distribution(
            v in prop::collection::vec(-30.0f64..30.0, 1..12),
            c in -50.0f64..50.0,
        ) {
            let a = Array1::from(v.clone());
            let p = softmax(&a);
            prop_assert!((p.sum() - 1.0).abs() < 1e-6);
            prop_assert!(p.iter().all(|&x| x > 0.0 && x <= 1.0));
            let q = softmax(&a.mapv(|x| x + c));
            for (x, y) in p.iter().zip(q.iter()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cross_entropy_examples() {
        let perfect = vec![array![0.0, 1.0, 0.0]; 3];
        assert_eq!(cross_entropy(&perfect, &[1, 1, 1]).unwrap(), (0.0, 0));
        let uniform = vec![Array1::from_elem(5, 0.2); 4];
        assert_abs_diff_eq!(cross_entropy(&uniform, &[0, 1, 2, 3]).unwrap().0, 4.0 * 5f64.ln(), epsilon = 1e-12);
        let (loss, clamped) = cross_entropy(&[array![1.0, 0.0]], &[1]).unwrap();
        assert_eq!(clamped, 1);
        assert_abs_diff_eq!(loss, -(PROB_FLOOR.ln()), epsilon = 1e-9);
        assert!(cross_entropy(&perfect, &[1, 1]).is_err());
        assert!(cross_entropy(&perfect[..1], &[7]).is_err());
    }

    #[test]
    fn cross_entropy_matches_direct_sum() {
        let probs = vec![array![0.1, 0.6, 0.3], array![0.25, 0.25, 0.5]];
        let want = -(0.6f64.ln() + 0.5f64.ln());
        assert_abs_diff_eq!(cross_entropy(&probs, &[1, 2]).unwrap().0, want, epsilon = 1e-15);
    }

    #[test]
    fn bridge_examples() {
        let mut m = GeneratorModel::new(Architecture::BiSeq2Seq, dims(), 0);
        m.bridge.w = array![[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]];
        m.bridge.b = Array1::zeros(2);
        let q = array![0.3, -0.7];
        let r = array![0.9, 0.1];
        assert_eq!(m.bridge(&q, Some(&r)).unwrap(), q);
        m.bridge.w.fill(0.0);
        m.bridge.b = array![2.0, -1.0];
        assert_eq!(m.bridge(&q, Some(&r)).unwrap(), array![2.0, -1.0]);
        assert!(m.bridge(&q, None).is_err());

        // hand-computed: [[1,2,0,-1],[0.5,0,1,1]]·[1,2,3,4] + [0.1,0.2]
        m.bridge.w = array![[1.0, 2.0, 0.0, -1.0], [0.5, 0.0, 1.0, 1.0]];
        m.bridge.b = array![0.1, 0.2];
        let out = m.bridge(&array![1.0, 2.0], Some(&array![3.0, 4.0])).unwrap();
        assert_abs_diff_eq!(out[0], 1.1, epsilon = 1e-15);
        assert_abs_diff_eq!(out[1], 7.7, epsilon = 1e-15);

        let s2s = GeneratorModel::new(Architecture::Seq2Seq, dims(), 0);
        assert_eq!(s2s.bridge.w.dim(), (2, 2));
        assert!(s2s.bridge(&q, None).is_ok());
    }

    #[test]
    fn encode_examples() {
        let mut m = GeneratorModel::new(Architecture::Seq2Seq, dims(), 3);
        let one = m.enc_q.encode(&[5]).unwrap();
        let manual = m
            .enc_q
            .gru
            .step(&m.enc_q.embedding.row(5).to_owned(), &Array1::zeros(2))
            .unwrap();
        assert_eq!(one, manual);
        assert_eq!(m.enc_q.encode(&[4, 5, 6]).unwrap(), m.enc_q.encode(&[4, 5, 6]).unwrap());
        assert!(m.enc_q.encode(&[]).is_err());
        assert!(m.enc_q.encode(&[9]).is_err());

        m.enc_q = m.enc_q.zeros_like();
        assert!(m.enc_q.encode(&[4, 5, 6]).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn parameter_sets_are_disjoint() {
        let m = GeneratorModel::new(Architecture::BiSeq2Seq, dims(), 1);
        assert_ne!(m.enc_q.embedding, m.enc_r.as_ref().unwrap().embedding);
        let names: Vec<String> = m.tensors().into_iter().map(|t| t.name).collect();
        let unique: std::collections::BTreeSet<_> = names.iter().collect();
        assert_eq!(unique.len(), names.len());
        m.check_shapes().unwrap();
    }

    #[test]
    fn seeded_init_ranges() {
        let a = GeneratorModel::new(Architecture::BiSeq2Seq, dims(), 5);
        assert_eq!(a, GeneratorModel::new(Architecture::BiSeq2Seq, dims(), 5));
        assert_ne!(a, GeneratorModel::new(Architecture::BiSeq2Seq, dims(), 6));
        for t in a.tensors() {
            assert!(t.data.iter().all(|v| v.abs() <= INIT_SCALE));
            if t.name.ends_with(".b_r") || t.name.ends_with(".b_z") || t.name.ends_with(".b") || t.name.ends_with("b_out") {
                assert!(t.data.iter().all(|&v| v == 0.0), "{}", t.name);
            }
        }
    }
}
