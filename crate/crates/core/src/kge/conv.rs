use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{KgeConfig, TripleScorer};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::kg::Triple;
use crate::math::{self, neg_log_sigmoid, sigmoid};

const CHECKPOINT_FORMAT: &str = "kgfuse-kge";
const CHECKPOINT_VERSION: u32 = 1;

/// Offsets of each parameter group inside [`KgeModel::params`].
///
/// Layout: `m` kernels of shape `3 x w` (row-major), then `m` kernel biases,
/// then `m` output weights, then the output bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub num_kernels: usize,
    pub width: usize,
}

impl ParamLayout {
    pub fn kernel_len(&self) -> usize {
        3 * self.width
    }

    pub fn kernel(&self, n: usize, row: usize, col: usize) -> usize {
        n * self.kernel_len() + row * self.width + col
    }

    pub fn bias(&self, n: usize) -> usize {
        self.num_kernels * self.kernel_len() + n
    }

    pub fn out_weight(&self, n: usize) -> usize {
        self.num_kernels * (self.kernel_len() + 1) + n
    }

    pub fn out_bias(&self) -> usize {
        self.num_kernels * (self.kernel_len() + 2)
    }

    pub fn len(&self) -> usize {
        self.out_bias() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Named `(group, range)` spans, used for per-group diagnostics.
    pub fn groups(&self) -> [(&'static str, std::ops::Range<usize>); 4] {
        let k = self.num_kernels * self.kernel_len();
        let m = self.num_kernels;
        [
            ("kernels", 0..k),
            ("kernel_biases", k..k + m),
            ("out_weights", k + m..k + 2 * m),
            ("out_bias", k + 2 * m..k + 2 * m + 1),
        ]
    }
}

/// Convolutional triple likelihood.
///
/// The head, relation and tail mention vectors are stacked as a `3 x h`
/// matrix. Every kernel spans all three rows and slides along the embedding
/// axis; each response gets its bias, a ReLU and a global max-pool, and the
/// `m` pooled values pass through an affine map and a sigmoid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KgeModel {
    dim: usize,
    num_kernels: usize,
    width: usize,
    params: Vec<f64>,
    pub emb: EmbeddingTable,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    model: KgeModel,
}

/// Cached activations of one forward pass.
#[derive(Debug, Clone)]
pub(crate) struct Forward {
    pub rows: [Vec<f64>; 3],
    pub pooled: Vec<f64>,
    /// Window offset of the max response per kernel, `None` when the ReLU is off.
    pub active: Vec<Option<usize>>,
    pub prob: f64,
}

/// Gradient accumulator: dense over scorer parameters, sparse over token rows.
#[derive(Debug, Clone)]
pub(crate) struct Gradient {
    pub params: Vec<f64>,
    pub tokens: BTreeMap<usize, Vec<f64>>,
}

impl Gradient {
    pub fn zeros(n: usize) -> Self {
        Gradient {
            params: vec![0.0; n],
            tokens: BTreeMap::new(),
        }
    }
}

/// Token row ids of the three mentions of a triple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct CompiledTriple(pub [Vec<usize>; 3]);

impl KgeModel {
    /// Random initialisation: kernels uniform in `±1/sqrt(3w)`, output
    /// weights uniform in `±1/sqrt(m)`, biases zero.
    pub fn new(cfg: &KgeConfig, emb: EmbeddingTable) -> Result<Self> {
        cfg.validate()?;
        let mut model = Self::zeros(emb, cfg.num_kernels, cfg.kernel_width, cfg.seed)?;
        let layout = model.layout();
        let mut rng = math::rng(cfg.seed, 2);
        let kb = 1.0 / ((3 * cfg.kernel_width) as f64).sqrt();
        for n in 0..cfg.num_kernels {
            for r in 0..3 {
                for c in 0..cfg.kernel_width {
                    model.params[layout.kernel(n, r, c)] = rng.gen_range(-kb..=kb);
                }
            }
        }
        let ob = 1.0 / (cfg.num_kernels as f64).sqrt();
        for n in 0..cfg.num_kernels {
            model.params[layout.out_weight(n)] = rng.gen_range(-ob..=ob);
        }
        Ok(model)
    }

    /// All scorer parameters zero; the likelihood of every triple is 0.5.
    pub fn zeros(emb: EmbeddingTable, num_kernels: usize, width: usize, seed: u64) -> Result<Self> {
        let dim = emb.dim();
        if num_kernels == 0 {
            return Err(Error::Config("at least one kernel is required".into()));
        }
        if width == 0 || width > dim {
            return Err(Error::Config(format!(
                "kernel width {width} must lie in 1..={dim} (embedding dimension)"
            )));
        }
        let layout = ParamLayout { num_kernels, width };
        Ok(KgeModel {
            dim,
            num_kernels,
            width,
            params: vec![0.0; layout.len()],
            emb,
            seed,
        })
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout {
            num_kernels: self.num_kernels,
            width: self.width,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_kernels(&self) -> usize {
        self.num_kernels
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn positions(&self) -> usize {
        self.dim - self.width + 1
    }

    /// Likelihood of a triple in `(0, 1)`.
    pub fn likelihood(&self, t: &Triple) -> f64 {
        let rows = [
            self.emb.mention_vector_or_zero(&t.head),
            self.emb.mention_vector_or_zero(&t.relation),
            self.emb.mention_vector_or_zero(&t.tail),
        ];
        self.forward(rows).prob
    }

    pub(crate) fn compile(&mut self, t: &Triple) -> CompiledTriple {
        CompiledTriple([
            self.emb.compile_mention(&t.head),
            self.emb.compile_mention(&t.relation),
            self.emb.compile_mention(&t.tail),
        ])
    }

    pub(crate) fn forward_compiled(&self, t: &CompiledTriple) -> Forward {
        self.forward([
            self.emb.compose(&t.0[0]),
            self.emb.compose(&t.0[1]),
            self.emb.compose(&t.0[2]),
        ])
    }

    pub(crate) fn forward(&self, rows: [Vec<f64>; 3]) -> Forward {
        let l = self.layout();
        let mut pooled = vec![0.0; self.num_kernels];
        let mut active = vec![None; self.num_kernels];
        let mut logit = self.params[l.out_bias()];
        for n in 0..self.num_kernels {
            let bias = self.params[l.bias(n)];
            let mut best: Option<(usize, f64)> = None;
            for p in 0..self.positions() {
                let mut z = bias;
                for (r, row) in rows.iter().enumerate() {
                    for c in 0..self.width {
                        z += self.params[l.kernel(n, r, c)] * row[p + c];
                    }
                }
                if best.is_none_or(|(_, b)| z > b) {
                    best = Some((p, z));
                }
            }
            let (p, z) = best.expect("at least one window");
            if z > 0.0 {
                pooled[n] = z;
                active[n] = Some(p);
            }
            logit += self.params[l.out_weight(n)] * pooled[n];
        }
        Forward {
            rows,
            pooled,
            active,
            prob: sigmoid(logit),
        }
    }

    /// Back-propagates `d_prob` (the loss derivative w.r.t. the likelihood)
    /// into `grad.params` and returns the derivative w.r.t. each stacked row.
    pub(crate) fn backward(&self, fw: &Forward, d_prob: f64, grad: &mut [f64]) -> [Vec<f64>; 3] {
        let l = self.layout();
        let d_logit = d_prob * fw.prob * (1.0 - fw.prob);
        let mut d_rows = [
            vec![0.0; self.dim],
            vec![0.0; self.dim],
            vec![0.0; self.dim],
        ];
        grad[l.out_bias()] += d_logit;
        for n in 0..self.num_kernels {
            grad[l.out_weight(n)] += d_logit * fw.pooled[n];
            let Some(p) = fw.active[n] else { continue };
            let d_z = d_logit * self.params[l.out_weight(n)];
            grad[l.bias(n)] += d_z;
            for (r, d_row) in d_rows.iter_mut().enumerate() {
                for c in 0..self.width {
                    let k = l.kernel(n, r, c);
                    grad[k] += d_z * fw.rows[r][p + c];
                    d_row[p + c] += d_z * self.params[k];
                }
            }
        }
        d_rows
    }

    /// Scatters stacked-row derivatives onto the token rows of a compiled triple.
    pub(crate) fn scatter_rows(
        &self,
        t: &CompiledTriple,
        d_rows: &[Vec<f64>; 3],
        grad: &mut Gradient,
    ) {
        for (ids, d) in t.0.iter().zip(d_rows) {
            let w = self.emb.token_weight(ids.len());
            for &id in ids {
                let g = grad.tokens.entry(id).or_insert_with(|| vec![0.0; self.dim]);
                for (gi, di) in g.iter_mut().zip(d) {
                    *gi += w * di;
                }
            }
        }
    }

    /// BPR loss of one pair and its gradient contribution.
    pub(crate) fn pair_loss_and_grad(
        &self,
        pos: &CompiledTriple,
        neg: &CompiledTriple,
        grad: &mut Gradient,
    ) -> f64 {
        let fp = self.forward_compiled(pos);
        let fn_ = self.forward_compiled(neg);
        let diff = fp.prob - fn_.prob;
        // d/d diff of -ln σ(diff) = -σ(-diff)
        let d_diff = -sigmoid(-diff);
        let d_rows = self.backward(&fp, d_diff, &mut grad.params);
        self.scatter_rows(pos, &d_rows, grad);
        let d_rows = self.backward(&fn_, -d_diff, &mut grad.params);
        self.scatter_rows(neg, &d_rows, grad);
        neg_log_sigmoid(diff)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model: self.clone(),
        };
        fs::write(path, serde_json::to_vec(&ck)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_slice(&fs::read(path)?)?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Data(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        let m = ck.model;
        let layout = m.layout();
        if m.width == 0 || m.width > m.dim || m.num_kernels == 0 || m.params.len() != layout.len() {
            return Err(Error::Data("checkpoint geometry is inconsistent".into()));
        }
        if m.emb.dim() != m.dim {
            return Err(Error::Data(
                "checkpoint embedding dimension mismatch".into(),
            ));
        }
        Ok(m)
    }
}

impl TripleScorer for KgeModel {
    fn likelihood(&self, t: &Triple) -> f64 {
        KgeModel::likelihood(self, t)
    }
}

/// Convolutional likelihood of `t` under `model`, always in `(0, 1)`.
pub fn conv_likelihood(model: &KgeModel, t: &Triple) -> f64 {
    model.likelihood(t)
}

/// `Σ -ln σ(f(pos) - f(neg))` over position-paired lists.
pub fn bpr_kge_loss<S: TripleScorer + ?Sized>(
    scorer: &S,
    positives: &[Triple],
    negatives: &[Triple],
) -> Result<f64> {
    if positives.len() != negatives.len() {
        return Err(Error::Data(format!(
            "{} positives but {} negatives",
            positives.len(),
            negatives.len()
        )));
    }
    Ok(positives
        .iter()
        .zip(negatives)
        .map(|(p, n)| neg_log_sigmoid(scorer.likelihood(p) - scorer.likelihood(n)))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kge::KgeConfig;
    use proptest::prelude::*;

    fn t(h: &str, r: &str, tl: &str) -> Triple {
        Triple::new(h, r, tl).unwrap()
    }

    fn table(dim: usize) -> EmbeddingTable {
        EmbeddingTable::init_random(["a", "b", "c", "r", "s"], dim, 3).unwrap()
    }

    #[test]
    fn zero_model_scores_one_half() {
        let m = KgeModel::zeros(table(6), 4, 3, 0).unwrap();
        assert_eq!(conv_likelihood(&m, &t("a", "r", "b")), 0.5);
    }

    #[test]
    fn single_window_hand_computation() {
        // m = 1, w = h = 4, all-ones kernel, head = e1, everything else zero.
        let mut emb = EmbeddingTable::new(4, 0).unwrap();
        emb.insert("h", &[1.0, 0.0, 0.0, 0.0]).unwrap();
        emb.insert("r", &[0.0; 4]).unwrap();
        emb.insert("t", &[0.0; 4]).unwrap();
        let mut m = KgeModel::zeros(emb, 1, 4, 0).unwrap();
        let l = m.layout();
        for r in 0..3 {
            for c in 0..4 {
                m.params[l.kernel(0, r, c)] = 1.0;
            }
        }
        m.params[l.out_weight(0)] = 1.0;
        let p = conv_likelihood(&m, &t("h", "r", "t"));
        assert!((p - 0.7310585786300049).abs() < 1e-15);
    }

    #[test]
    fn width_larger_than_dim_is_rejected() {
        assert!(KgeModel::zeros(table(2), 1, 3, 0).is_err());
        let cfg = KgeConfig {
            kernel_width: 7,
            ..KgeConfig::default()
        };
        assert!(KgeModel::new(&cfg, table(6)).is_err());
    }

    #[test]
    fn bpr_values() {
        let flat = |_: &Triple| 0.3;
        let l = bpr_kge_loss(&flat, &[t("a", "r", "b")], &[t("b", "r", "a")]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);

        let gap = |x: &Triple| if x.head == "a" { 10.0 } else { 0.0 };
        let l = bpr_kge_loss(&gap, &[t("a", "r", "b")], &[t("b", "r", "a")]).unwrap();
        assert!((l - 4.5398899216870535e-5).abs() < 1e-15);

        assert!(bpr_kge_loss(&flat, &[t("a", "r", "b")], &[]).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let cfg = KgeConfig {
            seed: 9,
            ..KgeConfig::default()
        };
        let mut m = KgeModel::new(&cfg, table(8)).unwrap();
        m.params[0] = -0.0;
        m.params[1] = 1e-310;
        m.save(&path).unwrap();
        let back = KgeModel::load(&path).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(back.params()), bits(m.params()));
        assert_eq!(bits(back.emb.values()), bits(m.emb.values()));
        assert_eq!(back, m);
    }

    proptest! {
        #[test]
        fn likelihood_in_open_unit_interval(seed in 0u64..500, scale in 0.1f64..4.0) {
            let cfg = KgeConfig { seed, ..KgeConfig::default() };
            let mut m = KgeModel::new(&cfg, table(6)).unwrap();
            m.params.iter_mut().for_each(|p| *p *= scale);
            let p = conv_likelihood(&m, &t("a b", "r", "c"));
            prop_assert!(p > 0.0 && p < 1.0);
            // Huge logits saturate in floating point but stay in range.
            m.params.iter_mut().for_each(|p| *p *= 1e6);
            let p = conv_likelihood(&m, &t("a b", "r", "c"));
            prop_assert!((0.0..=1.0).contains(&p));
        }

        #[test]
        fn kernel_permutation_invariance(seed in 0u64..200) {
            let cfg = KgeConfig { seed, num_kernels: 3, ..KgeConfig::default() };
            let m = KgeModel::new(&cfg, table(6)).unwrap();
            let l = m.layout();
            // Reverse the kernel order together with biases and output weights.
            let mut p = m.clone();
            for n in 0..3 {
                let src = 2 - n;
                for r in 0..3 {
                    for c in 0..l.width {
                        p.params[l.kernel(n, r, c)] = m.params[l.kernel(src, r, c)];
                    }
                }
                p.params[l.bias(n)] = m.params[l.bias(src)];
                p.params[l.out_weight(n)] = m.params[l.out_weight(src)];
            }
            let x = t("a", "s", "c");
            prop_assert!((conv_likelihood(&m, &x) - conv_likelihood(&p, &x)).abs() < 1e-14);
        }

        #[test]
        fn bpr_strictly_decreasing_in_gap(a in -5.0f64..5.0, delta in 0.01f64..3.0) {
            prop_assert!(neg_log_sigmoid(a + delta) < neg_log_sigmoid(a));
        }
    }
}
