use rand::Rng;

use super::config::{ModelConfig, PrefixMode};
use super::sequence::{prefix_layout, ComposedSequence};
use crate::blocks::norm::{layer_norm, layer_norm_rows, layer_norm_rows_backward, NormTrace};
use crate::blocks::{reverse_speech_rows, BlockCache, BlockTrace, MambaBlock, PrefixLayout};
use crate::error::{check_len, Error, Result};
use crate::linalg::{add_assign, linear, linear_backward, matvec};
use crate::scalar::Scalar;
use crate::ssm::ScanMode;
use crate::tensor::{join, Parameters, Tensor};

/// Embedding, block stack, final normalization and an untied output head.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    config: ModelConfig,
    /// `V × M_in`
    pub embedding: Tensor<T>,
    pub blocks: Vec<MambaBlock<T>>,
    pub final_gain: Tensor<T>,
    pub final_bias: Tensor<T>,
    /// `V × M_in`
    pub head: Tensor<T>,
    pub head_bias: Tensor<T>,
}

/// Per-block recurrent state after consuming a prefix of the sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct StateCache<T> {
    pub blocks: Vec<BlockCache<T>>,
    pub consumed_len: usize,
}

/// Activations recorded by [`Model::forward_trace`].
#[derive(Debug, Clone)]
pub struct ModelTrace<T> {
    ids: Vec<u32>,
    layout: PrefixLayout,
    masked: Vec<bool>,
    blocks: Vec<BlockTrace<T>>,
    final_in: Vec<T>,
    final_norm: NormTrace<T>,
    final_out: Vec<T>,
}

impl<T> ModelTrace<T> {
    /// Positions whose input embedding was zeroed.
    pub fn masked_positions(&self) -> &[bool] {
        &self.masked
    }
}

/// Replace whole embedding rows by the zero vector, each independently with
/// probability `prob`. Returns which rows were masked.
pub fn embedding_mask_augment<T: Scalar, R: Rng>(
    embeddings: &mut [T],
    dim: usize,
    prob: f64,
    rng: &mut R,
) -> Result<Vec<bool>> {
    if !(0.0..1.0).contains(&prob) {
        return Err(Error::Domain(format!("mask probability {prob} not in [0, 1)")));
    }
    if dim == 0 || !embeddings.len().is_multiple_of(dim) {
        return Err(Error::Domain("embedding rows do not tile the buffer".into()));
    }
    let mut masked = Vec::with_capacity(embeddings.len() / dim);
    for row in embeddings.chunks_exact_mut(dim) {
        let hit = prob > 0.0 && rng.gen::<f64>() < prob;
        if hit {
            row.fill(T::zero());
        }
        masked.push(hit);
    }
    Ok(masked)
}

impl<T: Scalar> Model<T> {
    pub fn new<R: Rng>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (v, md) = (config.vocab_size, config.m_in);
        let block_cfg = config.block_config();
        let embedding = Tensor::normal(&[v, md], 1.0, rng);
        let blocks = (0..config.n_blocks)
            .map(|_| MambaBlock::new(&block_cfg, rng))
            .collect::<Result<Vec<_>>>()?;
        let head = Tensor::uniform(&[v, md], 1.0 / (md as f64).sqrt(), rng);
        Ok(Self {
            config,
            embedding,
            blocks,
            final_gain: Tensor::filled(&[md], T::one()),
            final_bias: Tensor::zeros(&[md]),
            head,
            head_bias: Tensor::zeros(&[v]),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Switch between prefix modes that share a parameter layout (`none` and
    /// `serial` both use unidirectional blocks).
    pub fn with_prefix_mode(mut self, mode: PrefixMode) -> Result<Self> {
        let has_backward = mode == PrefixMode::Parallel;
        if has_backward != (self.config.prefix_mode == PrefixMode::Parallel) {
            return Err(Error::Config(format!(
                "cannot switch prefix mode from {} to {mode}: parameter layouts differ",
                self.config.prefix_mode
            )));
        }
        self.config.prefix_mode = mode;
        Ok(self)
    }

    pub fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn serial(&self) -> bool {
        self.config.prefix_mode == PrefixMode::Serial
    }

    /// Whether the final block output sits in reversed speech order and needs
    /// a compensating reversal.
    fn serial_needs_restore(&self) -> bool {
        self.serial() && (self.blocks.len() - 1) % 2 == 1
    }

    fn block_layout(&self, layout: &PrefixLayout) -> PrefixLayout {
        if self.config.prefix_mode == PrefixMode::Parallel {
            *layout
        } else {
            PrefixLayout::causal(layout.total_len)
        }
    }

    fn embed(&self, ids: &[u32]) -> Result<Vec<T>> {
        let (v, md) = (self.vocab_size(), self.config.m_in);
        let mut out = Vec::with_capacity(ids.len() * md);
        for &id in ids {
            if id as usize >= v {
                return Err(Error::InvalidToken { id, vocab: v });
            }
            let k = id as usize;
            out.extend_from_slice(&self.embedding.data()[k * md..(k + 1) * md]);
        }
        Ok(out)
    }

    fn check_length(&self, len: usize) -> Result<()> {
        if len == 0 {
            return Err(Error::Domain("empty sequence".into()));
        }
        if len > self.config.max_seq_len {
            return Err(Error::SequenceTooLong {
                len,
                max: self.config.max_seq_len,
            });
        }
        Ok(())
    }

    fn readout(&self, h: &[T], rows: usize) -> Vec<T> {
        let (md, v) = (self.config.m_in, self.vocab_size());
        let (hn, _) = layer_norm_rows(h, md, self.final_gain.data(), self.final_bias.data());
        let mut logits = linear(&hn, rows, md, self.head.data(), v);
        for row in logits.chunks_exact_mut(v) {
            add_assign(row, self.head_bias.data());
        }
        logits
    }

    /// Block stack over full rows, optionally continuing from and returning
    /// caches.
    fn run_blocks(
        &self,
        mut h: Vec<T>,
        layout: &PrefixLayout,
        caches: Option<&[BlockCache<T>]>,
        mode: ScanMode,
    ) -> Result<(Vec<T>, Vec<BlockCache<T>>)> {
        let md = self.config.m_in;
        let block_layout = self.block_layout(layout);
        let mut next = Vec::with_capacity(self.blocks.len());
        for (k, block) in self.blocks.iter().enumerate() {
            if self.serial() && k > 0 {
                reverse_speech_rows(&mut h, md, layout)?;
            }
            let (y, c) = block.forward(&h, &block_layout, caches.map(|c| &c[k]), mode)?;
            h = y;
            next.push(c);
        }
        if self.serial_needs_restore() {
            reverse_speech_rows(&mut h, md, layout)?;
        }
        Ok((h, next))
    }

    /// Logits (`L × V`) for every position of `ids`; row `l` scores the token at `l + 1`.
    pub fn forward_logits(&self, ids: &[u32], layout: &PrefixLayout) -> Result<Vec<T>> {
        self.forward_logits_with(ids, layout, ScanMode::Sequential)
    }

    pub fn forward_logits_with(
        &self,
        ids: &[u32],
        layout: &PrefixLayout,
        mode: ScanMode,
    ) -> Result<Vec<T>> {
        self.check_length(ids.len())?;
        check_len("layout length", ids.len(), layout.total_len)?;
        let h = self.embed(ids)?;
        let (h, _) = self.run_blocks(h, layout, None, mode)?;
        Ok(self.readout(&h, ids.len()))
    }

    pub fn forward_sequence(&self, seq: &ComposedSequence) -> Result<Vec<T>> {
        self.forward_logits(&seq.ids, &seq.layout)
    }

    /// Training forward pass. With `mask_rng` set, input embeddings are
    /// masked with the configured probability.
    pub fn forward_trace<R: Rng>(
        &self,
        seq: &ComposedSequence,
        mask_rng: Option<&mut R>,
        mode: ScanMode,
    ) -> Result<(Vec<T>, ModelTrace<T>)> {
        let len = seq.len();
        self.check_length(len)?;
        let md = self.config.m_in;
        let layout = &seq.layout;
        let mut h = self.embed(&seq.ids)?;
        let masked = match mask_rng {
            Some(rng) => embedding_mask_augment(&mut h, md, self.config.embed_mask_prob, rng)?,
            None => vec![false; len],
        };
        let block_layout = self.block_layout(layout);
        let mut traces = Vec::with_capacity(self.blocks.len());
        for (k, block) in self.blocks.iter().enumerate() {
            if self.serial() && k > 0 {
                reverse_speech_rows(&mut h, md, layout)?;
            }
            let (y, t) = block.forward_trace(&h, &block_layout, mode)?;
            h = y;
            traces.push(t);
        }
        if self.serial_needs_restore() {
            reverse_speech_rows(&mut h, md, layout)?;
        }
        let v = self.vocab_size();
        let (hn, norm) = layer_norm_rows(&h, md, self.final_gain.data(), self.final_bias.data());
        let mut logits = linear(&hn, len, md, self.head.data(), v);
        for row in logits.chunks_exact_mut(v) {
            add_assign(row, self.head_bias.data());
        }
        Ok((
            logits,
            ModelTrace {
                ids: seq.ids.clone(),
                layout: *layout,
                masked,
                blocks: traces,
                final_in: h,
                final_norm: norm,
                final_out: hn,
            },
        ))
    }

    /// Accumulate parameter gradients for `dlogits` into `grads`.
    pub fn backward(&self, trace: &ModelTrace<T>, dlogits: &[T], grads: &mut Self) {
        let (md, v) = (self.config.m_in, self.vocab_size());
        let layout = &trace.layout;
        let len = trace.ids.len();
        for row in dlogits.chunks_exact(v) {
            add_assign(grads.head_bias.data_mut(), row);
        }
        let dhn = linear_backward(&trace.final_out, len, md, self.head.data(), v, dlogits, grads.head.data_mut());
        let mut dh = layer_norm_rows_backward(
            &trace.final_in,
            md,
            self.final_gain.data(),
            &trace.final_norm,
            &dhn,
            grads.final_gain.data_mut(),
            grads.final_bias.data_mut(),
        );
        if self.serial_needs_restore() {
            reverse_speech_rows(&mut dh, md, layout).expect("layout was validated in forward");
        }
        for k in (0..self.blocks.len()).rev() {
            dh = self.blocks[k].backward(&trace.blocks[k], &dh, &mut grads.blocks[k]);
            if self.serial() && k > 0 {
                reverse_speech_rows(&mut dh, md, layout).expect("layout was validated in forward");
            }
        }
        let g = grads.embedding.data_mut();
        for (l, (&id, &masked)) in trace.ids.iter().zip(&trace.masked).enumerate() {
            if masked {
                continue;
            }
            let k = id as usize;
            add_assign(&mut g[k * md..(k + 1) * md], &dh[l * md..(l + 1) * md]);
        }
    }

    /// Consume `[<Speech>, speech.., <BOS>]`; returns the cache and the logits
    /// for the first text token.
    pub fn prefill(&self, prefix: &[u32]) -> Result<(StateCache<T>, Vec<T>)> {
        let layout = prefix_layout(prefix)?;
        self.check_length(prefix.len())?;
        let h = self.embed(prefix)?;
        let (h, caches) = self.run_blocks(h, &layout, None, ScanMode::Sequential)?;
        let md = self.config.m_in;
        let last = &h[(prefix.len() - 1) * md..];
        Ok((
            StateCache {
                blocks: caches,
                consumed_len: prefix.len(),
            },
            self.readout(last, 1),
        ))
    }

    /// Consume one token after the prefix; cost does not depend on how much
    /// has been consumed.
    pub fn decode_step(&self, token: u32, cache: &mut StateCache<T>) -> Result<Vec<T>> {
        let md = self.config.m_in;
        if cache.blocks.len() != self.blocks.len() {
            return Err(Error::Domain("cache does not belong to this model".into()));
        }
        if cache.consumed_len >= self.config.max_seq_len {
            return Err(Error::SequenceTooLong {
                len: cache.consumed_len + 1,
                max: self.config.max_seq_len,
            });
        }
        let mut h = self.embed(&[token])?;
        for (block, c) in self.blocks.iter().zip(cache.blocks.iter_mut()) {
            h = block.step(&h, c)?;
        }
        cache.consumed_len += 1;
        let hn = layer_norm(&h, self.final_gain.data(), self.final_bias.data());
        let mut logits = matvec(self.head.data(), self.vocab_size(), &hn);
        add_assign(&mut logits, self.head_bias.data());
        debug_assert_eq!(h.len(), md);
        Ok(logits)
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.zero_grad();
        z
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            embedding: self.embedding.cast(),
            blocks: self.blocks.iter().map(|b| b.cast()).collect(),
            final_gain: self.final_gain.cast(),
            final_bias: self.final_bias.cast(),
            head: self.head.cast(),
            head_bias: self.head_bias.cast(),
        }
    }
}

impl<T: Scalar> Parameters<T> for Model<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        f(join(prefix, "embedding"), &self.embedding);
        for (k, b) in self.blocks.iter().enumerate() {
            b.visit(&join(prefix, &format!("blocks.{k}")), f);
        }
        f(join(prefix, "final_norm.gain"), &self.final_gain);
        f(join(prefix, "final_norm.bias"), &self.final_bias);
        f(join(prefix, "head"), &self.head);
        f(join(prefix, "head_bias"), &self.head_bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        f(join(prefix, "embedding"), &mut self.embedding);
        for (k, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&join(prefix, &format!("blocks.{k}")), f);
        }
        f(join(prefix, "final_norm.gain"), &mut self.final_gain);
        f(join(prefix, "final_norm.bias"), &mut self.final_bias);
        f(join(prefix, "head"), &mut self.head);
        f(join(prefix, "head_bias"), &mut self.head_bias);
    }
}
