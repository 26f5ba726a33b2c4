//! Trainable parameters of the network and their checkpoint format.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BtnError, Result};
use crate::io::{self, NamedTensor};
use crate::linalg::Mat;
use crate::vocab::{VocabId, Vocabulary, VocabularyFile};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Width `r` of the representation layer.
    pub rank: usize,
    /// Width of the dynamic context layer.
    pub hidden: usize,
    /// Width of the raw feature vectors fed to the encoder.
    pub feature_dim: usize,
    /// One matrix for both directions between index and representation layer.
    pub symmetric: bool,
    /// Carry `h` over from the previous decode instead of resetting it.
    pub carry_context: bool,
    /// Half-width of the uniform initialization of embedding columns.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            rank: 64,
            hidden: 32,
            feature_dim: 48,
            symmetric: true,
            carry_context: false,
            init_scale: 0.5,
            seed: 0,
        }
    }
}

/// Parameter blocks, used to address freeze masks and gradients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Block {
    /// Embedding matrix `A`; column `c` is stored as row `c`.
    Embed,
    /// Index-to-representation matrix of the asymmetric variant.
    EmbedUp,
    W,
    B,
    V,
    ABar,
    EncoderWeight,
    EncoderBias,
}

impl Block {
    pub const ALL: [Block; 8] = [
        Block::Embed,
        Block::EmbedUp,
        Block::W,
        Block::B,
        Block::V,
        Block::ABar,
        Block::EncoderWeight,
        Block::EncoderBias,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Block::Embed => "A",
            Block::EmbedUp => "A_up",
            Block::W => "W",
            Block::B => "B",
            Block::V => "V",
            Block::ABar => "a_bar",
            Block::EncoderWeight => "encoder.weight",
            Block::EncoderBias => "encoder.bias",
        }
    }
}

/// Tensors shared by parameters and their gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensors {
    /// `d × r`: row `c` is the embedding `a_c`.
    pub embed: Mat,
    /// `d × r`, present only in the asymmetric variant.
    pub embed_up: Option<Mat>,
    /// `r × h`
    pub w: Mat,
    /// `h × h`
    pub b: Mat,
    /// `h × r`
    pub v: Mat,
    pub a_bar: Vec<f64>,
    /// `r × r_f`
    pub enc_w: Mat,
    pub enc_b: Vec<f64>,
}

impl Tensors {
    pub fn zeros_like(other: &Tensors) -> Tensors {
        let z = |m: &Mat| Mat::zeros(m.rows, m.cols);
        Tensors {
            embed: z(&other.embed),
            embed_up: other.embed_up.as_ref().map(z),
            w: z(&other.w),
            b: z(&other.b),
            v: z(&other.v),
            a_bar: vec![0.0; other.a_bar.len()],
            enc_w: z(&other.enc_w),
            enc_b: vec![0.0; other.enc_b.len()],
        }
    }

    pub fn block(&self, b: Block) -> Option<&[f64]> {
        Some(match b {
            Block::Embed => &self.embed.data,
            Block::EmbedUp => &self.embed_up.as_ref()?.data,
            Block::W => &self.w.data,
            Block::B => &self.b.data,
            Block::V => &self.v.data,
            Block::ABar => &self.a_bar,
            Block::EncoderWeight => &self.enc_w.data,
            Block::EncoderBias => &self.enc_b,
        })
    }

    pub fn block_mut(&mut self, b: Block) -> Option<&mut [f64]> {
        Some(match b {
            Block::Embed => &mut self.embed.data,
            Block::EmbedUp => &mut self.embed_up.as_mut()?.data,
            Block::W => &mut self.w.data,
            Block::B => &mut self.b.data,
            Block::V => &mut self.v.data,
            Block::ABar => &mut self.a_bar,
            Block::EncoderWeight => &mut self.enc_w.data,
            Block::EncoderBias => &mut self.enc_b,
        })
    }

    /// Present blocks with their values.
    pub fn blocks(&self) -> Vec<(Block, &[f64])> {
        Block::ALL.iter().filter_map(|&b| self.block(b).map(|d| (b, d))).collect()
    }

    /// First block holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<Block> {
        self.blocks()
            .into_iter()
            .find(|(_, d)| d.iter().any(|v| !v.is_finite()))
            .map(|(b, _)| b)
    }

    pub fn scale(&mut self, k: f64) {
        for b in Block::ALL {
            if let Some(d) = self.block_mut(b) {
                d.iter_mut().for_each(|v| *v *= k);
            }
        }
    }

    /// `self += other`, block by block.
    pub fn add_assign(&mut self, other: &Tensors) {
        for b in Block::ALL {
            if let (Some(dst), Some(src)) = (self.block_mut(b), other.block(b)) {
                dst.iter_mut().zip(src).for_each(|(x, y)| *x += y);
            }
        }
    }
}

/// Gradients of a scalar loss; same shapes as the parameters.
pub type GradientBundle = Tensors;

#[derive(Clone, Debug, PartialEq)]
pub struct BtnParams {
    pub config: ModelConfig,
    pub t: Tensors,
}

impl BtnParams {
    /// Random initialization for a vocabulary of `num_columns` ids.
    pub fn init(config: ModelConfig, num_columns: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (r, h, rf) = (config.rank, config.hidden, config.feature_dim);
        let s = config.init_scale;
        let mut uni = |rows: usize, cols: usize, half: f64| {
            Mat::from_fn(rows, cols, |_, _| rng.random_range(-half..half))
        };
        let embed = uni(num_columns, r, s);
        let embed_up = (!config.symmetric).then(|| uni(num_columns, r, s));
        let w = uni(r, h, (3.0 / h as f64).sqrt());
        let b = uni(h, h, (3.0 / h as f64).sqrt());
        let v = uni(h, r, (3.0 / r as f64).sqrt());
        let enc_w = uni(r, rf, (3.0 / rf as f64).sqrt());
        let a_bar = uni(1, r, s).data;
        BtnParams {
            config,
            t: Tensors { embed, embed_up, w, b, v, a_bar, enc_w, enc_b: vec![0.0; r] },
        }
    }

    pub fn rank(&self) -> usize {
        self.config.rank
    }

    pub fn hidden(&self) -> usize {
        self.config.hidden
    }

    pub fn num_columns(&self) -> usize {
        self.t.embed.rows
    }

    /// Embedding read by the representation-to-index direction.
    pub fn column(&self, id: VocabId) -> &[f64] {
        self.t.embed.row(id.index())
    }

    /// Embedding written by the index-to-representation direction.
    pub fn column_up(&self, id: VocabId) -> &[f64] {
        match &self.t.embed_up {
            Some(up) => up.row(id.index()),
            None => self.t.embed.row(id.index()),
        }
    }

    /// Appends a column for a newly registered id.
    pub fn push_column(&mut self, init: &[f64]) -> VocabId {
        let id = VocabId(self.t.embed.rows as u32);
        self.t.embed.push_row(init);
        if let Some(up) = &mut self.t.embed_up {
            up.push_row(init);
        }
        id
    }

    /// Encoder standing in for the fine-tuned last backbone layer: `E x + b`.
    pub fn encode(&self, x: &[f64]) -> Vec<f64> {
        let mut f = self.t.enc_w.matvec(x);
        crate::linalg::axpy(1.0, &self.t.enc_b, &mut f);
        f
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.t.first_non_finite() {
            Some(b) => Err(BtnError::NonFinite(b.name().to_string())),
            None => Ok(()),
        }
    }

    /// Writes `checkpoint.json`, `checkpoint.bin` and `vocab.json`. Embedding
    /// rows are stored in canonical vocabulary order.
    pub fn save(&self, dir: &Path, vocab: &Vocabulary) -> Result<()> {
        if vocab.len() != self.num_columns() {
            return Err(BtnError::InvalidInput(format!(
                "vocabulary has {} ids but the model has {} columns",
                vocab.len(),
                self.num_columns()
            )));
        }
        let (canon, perm) = vocab.canonical()?;
        let permute = |m: &Mat| {
            let mut out = Mat::zeros(0, m.cols);
            for old in &perm {
                out.push_row(m.row(old.index()));
            }
            out
        };
        let mut tensors = vec![];
        let mut push = |b: Block, shape: Vec<usize>, data: Vec<f64>| {
            tensors.push(NamedTensor::new(b.name(), shape, data));
        };
        let e = permute(&self.t.embed);
        push(Block::Embed, vec![e.rows, e.cols], e.data);
        if let Some(up) = &self.t.embed_up {
            let u = permute(up);
            push(Block::EmbedUp, vec![u.rows, u.cols], u.data);
        }
        for (b, m) in [(Block::W, &self.t.w), (Block::B, &self.t.b), (Block::V, &self.t.v)] {
            push(b, vec![m.rows, m.cols], m.data.clone());
        }
        push(Block::ABar, vec![self.t.a_bar.len()], self.t.a_bar.clone());
        push(
            Block::EncoderWeight,
            vec![self.t.enc_w.rows, self.t.enc_w.cols],
            self.t.enc_w.data.clone(),
        );
        push(Block::EncoderBias, vec![self.t.enc_b.len()], self.t.enc_b.clone());
        io::write_archive(
            dir,
            "checkpoint",
            self.rank(),
            self.hidden(),
            &canon.fingerprint(),
            serde_json::to_value(&self.config)?,
            &tensors,
        )?;
        io::write_json(&dir.join("vocab.json"), &canon.to_file())?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<(BtnParams, Vocabulary)> {
        let vf: VocabularyFile = io::read_json(&dir.join("vocab.json"))?;
        let vocab = Vocabulary::from_file(&vf)?;
        let (manifest, tensors) = io::read_archive(dir, "checkpoint")?;
        if manifest.vocab_hash != vocab.fingerprint() {
            return Err(BtnError::Format("checkpoint vocabulary hash mismatch".into()));
        }
        let config: ModelConfig = serde_json::from_value(manifest.meta.clone())?;
        let find = |b: Block| tensors.iter().find(|t| t.name == b.name());
        let mat = |b: Block| -> Result<Mat> {
            let t = find(b).ok_or_else(|| BtnError::Format(format!("missing tensor {}", b.name())))?;
            if t.shape.len() != 2 {
                return Err(BtnError::Format(format!("tensor {} is not a matrix", b.name())));
            }
            Ok(Mat { rows: t.shape[0], cols: t.shape[1], data: t.data.clone() })
        };
        let vector = |b: Block| -> Result<Vec<f64>> {
            find(b)
                .map(|t| t.data.clone())
                .ok_or_else(|| BtnError::Format(format!("missing tensor {}", b.name())))
        };
        let embed = mat(Block::Embed)?;
        if embed.rows != vocab.len() || embed.cols != manifest.r {
            return Err(BtnError::Format("embedding shape disagrees with manifest".into()));
        }
        let embed_up = if config.symmetric { None } else { Some(mat(Block::EmbedUp)?) };
        let params = BtnParams {
            config,
            t: Tensors {
                embed,
                embed_up,
                w: mat(Block::W)?,
                b: mat(Block::B)?,
                v: mat(Block::V)?,
                a_bar: vector(Block::ABar)?,
                enc_w: mat(Block::EncoderWeight)?,
                enc_b: vector(Block::EncoderBias)?,
            },
        };
        params.check_finite()?;
        Ok((params, vocab))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seeded_and_shaped() {
        let cfg = ModelConfig { rank: 8, hidden: 4, feature_dim: 6, ..Default::default() };
        let a = BtnParams::init(cfg.clone(), 10);
        assert_eq!(a, BtnParams::init(cfg.clone(), 10));
        assert_eq!((a.t.embed.rows, a.t.embed.cols), (10, 8));
        assert_eq!((a.t.w.rows, a.t.w.cols), (8, 4));
        assert_eq!((a.t.v.rows, a.t.v.cols), (4, 8));
        assert_eq!((a.t.enc_w.rows, a.t.enc_w.cols), (8, 6));
        assert!(a.t.embed_up.is_none());
        let asym = BtnParams::init(ModelConfig { symmetric: false, ..cfg }, 10);
        assert!(asym.t.embed_up.is_some());
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut v = Vocabulary::new();
        v.add_entity("a").unwrap();
        v.add_instance("t").unwrap();
        v.add_entity("b").unwrap(); // out of canonical order on purpose
        let cfg = ModelConfig { rank: 4, hidden: 3, feature_dim: 2, ..Default::default() };
        let p = BtnParams::init(cfg, v.len());
        let dir = tempfile::tempdir().unwrap();
        p.save(dir.path(), &v).unwrap();
        let (q, v2) = BtnParams::load(dir.path()).unwrap();
        let b_old = v.id("b").unwrap();
        let b_new = v2.id("b").unwrap();
        for (x, y) in p.column(b_old).iter().zip(q.column(b_new)) {
            assert_eq!(*x as f32, *y as f32);
        }
        let h1 = io::sha256_file(&dir.path().join("checkpoint.bin")).unwrap();
        q.save(dir.path(), &v2).unwrap();
        assert_eq!(h1, io::sha256_file(&dir.path().join("checkpoint.bin")).unwrap());
    }
}
