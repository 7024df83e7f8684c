//! The gated SSM block, optionally with a second SSM branch that reads the
//! speech span back to front (parallel speech-prefix block).

use rand::Rng;

use super::conv::{causal_conv1d, causal_conv1d_backward};
use super::norm::{layer_norm, layer_norm_rows, layer_norm_rows_backward, silu, silu_grad, NormTrace};
use super::reversal::{reverse_speech_rows, PrefixLayout};
use crate::error::{check_len, Error, Result};
use crate::linalg::{add_assign, linear, linear_backward, matvec, split_cols, write_cols};
use crate::scalar::Scalar;
use crate::ssm::{DiagonalSsm, ScalarSsm, ScanMode, SelectiveSsm, SsmParams, SsmTrace, SsmVariant};
use crate::tensor::{join, Parameters, Tensor};

/// Shape of a single block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockConfig {
    /// Residual stream width `M_in`.
    pub model_dim: usize,
    /// Expanded width `M`.
    pub inner_dim: usize,
    /// State size `N` of each SSM branch.
    pub state_size: usize,
    pub conv_width: usize,
    pub variant: SsmVariant,
    /// Mamba-2 only; `heads * head_dim == inner_dim`.
    pub heads: usize,
    pub head_dim: usize,
    /// Add a backward branch over the speech span.
    pub parallel_sp: bool,
}

impl BlockConfig {
    pub fn validate(&self) -> Result<()> {
        if self.model_dim == 0 || self.inner_dim == 0 || self.state_size == 0 {
            return Err(Error::Config("block dimensions must be positive".into()));
        }
        if self.conv_width == 0 {
            return Err(Error::Config("conv width must be at least 1".into()));
        }
        if self.variant == SsmVariant::Mamba2 && self.heads * self.head_dim != self.inner_dim {
            return Err(Error::Config(format!(
                "mamba2 needs heads * head_dim == inner_dim ({} * {} != {})",
                self.heads, self.head_dim, self.inner_dim
            )));
        }
        Ok(())
    }
}

fn new_ssm<T: Scalar, R: Rng>(cfg: &BlockConfig, rng: &mut R) -> SsmParams<T> {
    match cfg.variant {
        SsmVariant::S4d => SsmParams::Lti(DiagonalSsm::init(cfg.inner_dim, cfg.state_size, rng)),
        SsmVariant::Mamba => {
            SsmParams::Selective(SelectiveSsm::init(cfg.inner_dim, cfg.state_size, rng))
        }
        SsmVariant::Mamba2 => SsmParams::Scalar(ScalarSsm::init(
            cfg.model_dim,
            cfg.heads,
            cfg.head_dim,
            cfg.state_size,
            rng,
        )),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MambaBlock<T> {
    pub norm_gain: Tensor<T>,
    pub norm_bias: Tensor<T>,
    /// `2M × M_in`: rows `[0, M)` feed the SSM branch, `[M, 2M)` the gate.
    pub in_proj: Tensor<T>,
    /// `M × W` depthwise causal kernel.
    pub conv_weight: Tensor<T>,
    pub conv_bias: Tensor<T>,
    pub ssm: SsmParams<T>,
    /// Backward-over-speech branch of a parallel speech-prefix block.
    pub ssm_backward: Option<SsmParams<T>>,
    /// `M_in × M`
    pub out_proj: Tensor<T>,
}

/// Recurrent state of one block between decoding steps.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCache<T> {
    /// Last `W-1` conv inputs, oldest first.
    pub conv: Vec<T>,
    pub state: Vec<T>,
    pub state_backward: Option<Vec<T>>,
}

/// Activations recorded by [`MambaBlock::forward_trace`].
#[derive(Debug, Clone)]
pub struct BlockTrace<T> {
    layout: PrefixLayout,
    x: Vec<T>,
    xn: Vec<T>,
    norm: NormTrace<T>,
    xs: Vec<T>,
    z: Vec<T>,
    conv_out: Vec<T>,
    fwd: SsmTrace<T>,
    bwd: Option<SsmTrace<T>>,
    ys: Vec<T>,
    gated: Vec<T>,
}

impl<T: Scalar> MambaBlock<T> {
    pub fn new<R: Rng>(cfg: &BlockConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let (md, mi) = (cfg.model_dim, cfg.inner_dim);
        let ssm = new_ssm(cfg, rng);
        let ssm_backward = cfg.parallel_sp.then(|| new_ssm(cfg, rng));
        Ok(Self {
            norm_gain: Tensor::filled(&[md], T::one()),
            norm_bias: Tensor::zeros(&[md]),
            in_proj: Tensor::uniform(&[2 * mi, md], 1.0 / (md as f64).sqrt(), rng),
            conv_weight: Tensor::uniform(&[mi, cfg.conv_width], 1.0 / (cfg.conv_width as f64).sqrt(), rng),
            conv_bias: Tensor::zeros(&[mi]),
            ssm,
            ssm_backward,
            out_proj: Tensor::uniform(&[md, mi], 1.0 / (mi as f64).sqrt(), rng),
        })
    }

    pub fn model_dim(&self) -> usize {
        self.norm_gain.len()
    }

    pub fn inner_dim(&self) -> usize {
        self.conv_bias.len()
    }

    pub fn conv_width(&self) -> usize {
        self.conv_weight.shape()[1]
    }

    pub fn is_parallel_sp(&self) -> bool {
        self.ssm_backward.is_some()
    }

    pub fn empty_cache(&self) -> BlockCache<T> {
        BlockCache {
            conv: vec![T::zero(); (self.conv_width() - 1) * self.inner_dim()],
            state: vec![T::zero(); self.ssm.state_len()],
            state_backward: self
                .ssm_backward
                .as_ref()
                .map(|s| vec![T::zero(); s.state_len()]),
        }
    }

    /// Whole-sequence evaluation, optionally continuing from `cache`.
    ///
    /// A continuation must not contain a reversible span: the backward
    /// branch only ever reverses the speech prefix, which is consumed in the
    /// first call.
    pub fn forward(
        &self,
        x: &[T],
        layout: &PrefixLayout,
        cache: Option<&BlockCache<T>>,
        mode: ScanMode,
    ) -> Result<(Vec<T>, BlockCache<T>)> {
        if cache.is_some() && !layout.is_trivial() {
            return Err(Error::Config(
                "cannot reverse a speech span while continuing from a cache".into(),
            ));
        }
        let (y, next, _) = self.run(x, layout, cache, mode, false)?;
        Ok((y, next))
    }

    /// Forward pass from an empty state that records activations for [`Self::backward`].
    pub fn forward_trace(
        &self,
        x: &[T],
        layout: &PrefixLayout,
        mode: ScanMode,
    ) -> Result<(Vec<T>, BlockTrace<T>)> {
        let (y, _, trace) = self.run(x, layout, None, mode, true)?;
        Ok((y, trace.expect("recording requested")))
    }

    fn run(
        &self,
        x: &[T],
        layout: &PrefixLayout,
        cache: Option<&BlockCache<T>>,
        mode: ScanMode,
        record: bool,
    ) -> Result<(Vec<T>, BlockCache<T>, Option<BlockTrace<T>>)> {
        layout.validate()?;
        let (md, mi, width) = (self.model_dim(), self.inner_dim(), self.conv_width());
        let len = layout.total_len;
        check_len("block input", len * md, x.len())?;

        let (xn, norm) = layer_norm_rows(x, md, self.norm_gain.data(), self.norm_bias.data());
        let proj = linear(&xn, len, md, self.in_proj.data(), 2 * mi);
        let xs = split_cols(&proj, len, 2 * mi, 0, mi);
        let z = split_cols(&proj, len, 2 * mi, mi, mi);
        let (mut conv_out, carry) = causal_conv1d(
            &xs,
            mi,
            self.conv_weight.data(),
            width,
            cache.map(|c| c.conv.as_slice()),
        )?;
        for row in conv_out.chunks_exact_mut(mi) {
            add_assign(row, self.conv_bias.data());
        }
        let u: Vec<T> = conv_out.iter().map(|&v| silu(v)).collect();

        let zeros_f;
        let h0_f = match cache {
            Some(c) => c.state.as_slice(),
            None => {
                zeros_f = vec![T::zero(); self.ssm.state_len()];
                &zeros_f
            }
        };
        let fwd = self.ssm.trace_forward(&u, &xn, len, h0_f, mode, record);
        let mut ys = fwd.output.y.clone();

        let bwd = match &self.ssm_backward {
            Some(ssm_b) => {
                let mut u_r = u.clone();
                reverse_speech_rows(&mut u_r, mi, layout)?;
                let mut xn_r = xn.clone();
                reverse_speech_rows(&mut xn_r, md, layout)?;
                let zeros_b;
                let h0_b = match cache.and_then(|c| c.state_backward.as_ref()) {
                    Some(s) => s.as_slice(),
                    None => {
                        zeros_b = vec![T::zero(); ssm_b.state_len()];
                        &zeros_b
                    }
                };
                let tb = ssm_b.trace_forward(&u_r, &xn_r, len, h0_b, mode, record);
                let mut yb = tb.output.y.clone();
                reverse_speech_rows(&mut yb, mi, layout)?;
                add_assign(&mut ys, &yb);
                Some(tb)
            }
            None => None,
        };

        let gated: Vec<T> = ys.iter().zip(&z).map(|(&s, &g)| s * silu(g)).collect();
        let out = linear(&gated, len, mi, self.out_proj.data(), md);
        let y: Vec<T> = x.iter().zip(&out).map(|(&a, &b)| a + b).collect();

        let next = BlockCache {
            conv: carry,
            state: fwd.output.final_state.clone(),
            state_backward: bwd.as_ref().map(|t| t.output.final_state.clone()),
        };
        let trace = record.then(|| BlockTrace {
            layout: *layout,
            x: x.to_vec(),
            xn,
            norm,
            xs,
            z,
            conv_out,
            fwd,
            bwd,
            ys,
            gated,
        });
        Ok((y, next, trace))
    }

    /// Backpropagate `dy` through a recorded pass, accumulating parameter
    /// gradients into `grads`; returns the gradient w.r.t. the block input.
    pub fn backward(&self, trace: &BlockTrace<T>, dy: &[T], grads: &mut Self) -> Vec<T> {
        let (md, mi, width) = (self.model_dim(), self.inner_dim(), self.conv_width());
        let len = trace.layout.total_len;
        let layout = &trace.layout;

        let mut dx = dy.to_vec();
        let dgated = linear_backward(&trace.gated, len, mi, self.out_proj.data(), md, dy, grads.out_proj.data_mut());

        let mut dys = vec![T::zero(); len * mi];
        let mut dz = vec![T::zero(); len * mi];
        for k in 0..len * mi {
            let zk = trace.z[k];
            dys[k] = dgated[k] * silu(zk);
            dz[k] = dgated[k] * trace.ys[k] * silu_grad(zk);
        }

        let ig = self.ssm.backward(&trace.fwd, &dys, &mut grads.ssm);
        let mut du = ig.du;
        let mut dxn = if ig.dxn.is_empty() {
            vec![T::zero(); len * md]
        } else {
            ig.dxn
        };
        if let (Some(ssm_b), Some(tb), Some(gb)) =
            (&self.ssm_backward, &trace.bwd, grads.ssm_backward.as_mut())
        {
            let mut dyb = dys.clone();
            reverse_speech_rows(&mut dyb, mi, layout).expect("recorded layout is valid");
            let igb = ssm_b.backward(tb, &dyb, gb);
            let mut du_b = igb.du;
            reverse_speech_rows(&mut du_b, mi, layout).expect("recorded layout is valid");
            add_assign(&mut du, &du_b);
            if !igb.dxn.is_empty() {
                let mut dxn_b = igb.dxn;
                reverse_speech_rows(&mut dxn_b, md, layout).expect("recorded layout is valid");
                add_assign(&mut dxn, &dxn_b);
            }
        }

        let dconv: Vec<T> = du
            .iter()
            .zip(&trace.conv_out)
            .map(|(&g, &c)| g * silu_grad(c))
            .collect();
        for row in dconv.chunks_exact(mi) {
            add_assign(grads.conv_bias.data_mut(), row);
        }
        let dxs = causal_conv1d_backward(
            &trace.xs,
            mi,
            self.conv_weight.data(),
            width,
            &dconv,
            grads.conv_weight.data_mut(),
        );
        let mut dproj = vec![T::zero(); len * 2 * mi];
        write_cols(&mut dproj, len, 2 * mi, 0, mi, &dxs);
        write_cols(&mut dproj, len, 2 * mi, mi, mi, &dz);
        let dxn_proj = linear_backward(&trace.xn, len, md, self.in_proj.data(), 2 * mi, &dproj, grads.in_proj.data_mut());
        add_assign(&mut dxn, &dxn_proj);

        let dx_norm = layer_norm_rows_backward(
            &trace.x,
            md,
            self.norm_gain.data(),
            &trace.norm,
            &dxn,
            grads.norm_gain.data_mut(),
            grads.norm_bias.data_mut(),
        );
        add_assign(&mut dx, &dx_norm);
        dx
    }

    /// Consume one position causally, updating `cache`.
    pub fn step(&self, x_l: &[T], cache: &mut BlockCache<T>) -> Result<Vec<T>> {
        let (md, mi) = (self.model_dim(), self.inner_dim());
        check_len("block step input", md, x_l.len())?;
        let xn = layer_norm(x_l, self.norm_gain.data(), self.norm_bias.data());
        let proj = matvec(self.in_proj.data(), 2 * mi, &xn);
        let (xs, z) = proj.split_at(mi);
        let (mut cv, carry) = causal_conv1d(
            xs,
            mi,
            self.conv_weight.data(),
            self.conv_width(),
            Some(&cache.conv),
        )?;
        cache.conv = carry;
        add_assign(&mut cv, self.conv_bias.data());
        let u: Vec<T> = cv.iter().map(|&v| silu(v)).collect();
        let mut ys = self.ssm.step(&u, &xn, &mut cache.state);
        if let (Some(ssm_b), Some(state_b)) = (&self.ssm_backward, cache.state_backward.as_mut()) {
            let yb = ssm_b.step(&u, &xn, state_b);
            add_assign(&mut ys, &yb);
        }
        let gated: Vec<T> = ys.iter().zip(z).map(|(&s, &g)| s * silu(g)).collect();
        let out = matvec(self.out_proj.data(), md, &gated);
        Ok(x_l.iter().zip(&out).map(|(&a, &b)| a + b).collect())
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.zero_grad();
        z
    }

    pub fn cast<U: Scalar>(&self) -> MambaBlock<U> {
        MambaBlock {
            norm_gain: self.norm_gain.cast(),
            norm_bias: self.norm_bias.cast(),
            in_proj: self.in_proj.cast(),
            conv_weight: self.conv_weight.cast(),
            conv_bias: self.conv_bias.cast(),
            ssm: self.ssm.cast(),
            ssm_backward: self.ssm_backward.as_ref().map(|s| s.cast()),
            out_proj: self.out_proj.cast(),
        }
    }
}

impl<T: Scalar> Parameters<T> for MambaBlock<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        f(join(prefix, "norm.gain"), &self.norm_gain);
        f(join(prefix, "norm.bias"), &self.norm_bias);
        f(join(prefix, "in_proj"), &self.in_proj);
        f(join(prefix, "conv.weight"), &self.conv_weight);
        f(join(prefix, "conv.bias"), &self.conv_bias);
        self.ssm.visit(&join(prefix, "ssm"), f);
        if let Some(b) = &self.ssm_backward {
            b.visit(&join(prefix, "ssm_backward"), f);
        }
        f(join(prefix, "out_proj"), &self.out_proj);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        f(join(prefix, "norm.gain"), &mut self.norm_gain);
        f(join(prefix, "norm.bias"), &mut self.norm_bias);
        f(join(prefix, "in_proj"), &mut self.in_proj);
        f(join(prefix, "conv.weight"), &mut self.conv_weight);
        f(join(prefix, "conv.bias"), &mut self.conv_bias);
        self.ssm.visit_mut(&join(prefix, "ssm"), f);
        if let Some(b) = &mut self.ssm_backward {
            b.visit_mut(&join(prefix, "ssm_backward"), f);
        }
        f(join(prefix, "out_proj"), &mut self.out_proj);
    }
}
