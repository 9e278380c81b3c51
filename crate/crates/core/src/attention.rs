//! Multi-head attention and the three-layer cross-modal alignment block.
//!
//! The block runs "self-attention → bidirectional cross-attention →
//! self-attention" over a text stream and an acoustic stream, each sublayer
//! post-norm (`LayerNorm(x + MHA(…))`) with its own parameters — six
//! independent attention sets and six layer norms, no feed-forward
//! sublayers (those live in the DiT backbone).

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Shared forward-pass context: training phase plus the rng that feeds
/// dropout masks. Eval mode never consumes randomness.
pub struct FwdCtx<'a> {
    pub train: bool,
    pub rng: &'a mut ChaCha8Rng,
}

impl<'a> FwdCtx<'a> {
    pub fn train(rng: &'a mut ChaCha8Rng) -> Self {
        FwdCtx { train: true, rng }
    }

    pub fn eval(rng: &'a mut ChaCha8Rng) -> Self {
        FwdCtx { train: false, rng }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionConfig {
    pub dim: usize,
    pub heads: usize,
    pub dropout: f64,
}

impl AttentionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.heads == 0 || self.dim % self.heads != 0 {
            return Err(Error::contract(
                "attention",
                format!("dim {} not divisible by heads {}", self.dim, self.heads),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::contract(
                "attention",
                format!("dropout {} not in [0,1)", self.dropout),
            ));
        }
        Ok(())
    }
}

/// Boolean keep-mask over query×key positions (`true` = attend).
#[derive(Debug, Clone)]
pub struct AttnMask {
    pub rows: usize,
    pub cols: usize,
    pub keep: Vec<bool>,
}

impl AttnMask {
    pub fn new(rows: usize, cols: usize, keep: Vec<bool>) -> Result<Self> {
        if keep.len() != rows * cols {
            return Err(Error::contract(
                "attention",
                format!("mask length {} != {rows}×{cols}", keep.len()),
            ));
        }
        Ok(AttnMask { rows, cols, keep })
    }

    fn check_no_empty_row(&self) -> Result<()> {
        for r in 0..self.rows {
            if !self.keep[r * self.cols..(r + 1) * self.cols].iter().any(|&k| k) {
                return Err(Error::contract(
                    "attention",
                    format!("mask row {r} has no unmasked entry"),
                ));
            }
        }
        Ok(())
    }
}

/// Draw from a normal truncated at ±2σ (rejection sampling).
pub fn trunc_normal<S: Scalar>(std: f64, rng: &mut ChaCha8Rng) -> S {
    use rand_distr::{Distribution, StandardNormal};
    loop {
        let v: f64 = StandardNormal.sample(rng);
        if v.abs() <= 2.0 {
            return S::c(v * std);
        }
    }
}

pub fn trunc_normal_vec<S: Scalar>(n: usize, std: f64, rng: &mut ChaCha8Rng) -> Vec<S> {
    (0..n).map(|_| trunc_normal(std, rng)).collect()
}

/// Weight matrix with fan-in-scaled truncated-normal init (`1/√fan_in`,
/// truncated at ±2σ). A fixed 0.02 undertrains narrow desk-scale widths.
pub fn init_linear_weight<S: Scalar>(
    rows: usize,
    cols: usize,
    rng: &mut ChaCha8Rng,
) -> Tensor<S> {
    let std = 1.0 / (rows as f64).sqrt();
    Tensor::param(trunc_normal_vec(rows * cols, std, rng), &[rows, cols]).expect("shape")
}

fn linear_param<S: Scalar>(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor<S> {
    init_linear_weight(rows, cols, rng)
}

fn zero_param<S: Scalar>(shape: &[usize]) -> Tensor<S> {
    let n: usize = shape.iter().product();
    Tensor::param(vec![S::zero(); n], shape).expect("shape")
}

/// One multi-head attention parameter set: Q/K/V/output projections.
pub struct MhaParams<S: Scalar> {
    pub wq: Tensor<S>,
    pub bq: Tensor<S>,
    pub wk: Tensor<S>,
    pub bk: Tensor<S>,
    pub wv: Tensor<S>,
    pub bv: Tensor<S>,
    pub wo: Tensor<S>,
    pub bo: Tensor<S>,
    cfg: AttentionConfig,
}

impl<S: Scalar> MhaParams<S> {
    pub fn init(cfg: AttentionConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.dim;
        Ok(MhaParams {
            wq: linear_param(d, d, rng),
            bq: zero_param(&[d]),
            wk: linear_param(d, d, rng),
            bk: zero_param(&[d]),
            wv: linear_param(d, d, rng),
            bv: zero_param(&[d]),
            wo: linear_param(d, d, rng),
            bo: zero_param(&[d]),
            cfg,
        })
    }

    pub fn named(&self, prefix: &str, out: &mut Vec<(String, Tensor<S>)>) {
        for (name, t) in [
            ("wq", &self.wq),
            ("bq", &self.bq),
            ("wk", &self.wk),
            ("bk", &self.bk),
            ("wv", &self.wv),
            ("bv", &self.bv),
            ("wo", &self.wo),
            ("bo", &self.bo),
        ] {
            out.push((format!("{prefix}.{name}"), t.clone()));
        }
    }

    /// Scaled dot-product attention over `heads` slices of the last dim.
    /// Masked positions get zero weight; a fully-masked query row is a
    /// contract error. When `probe` is given, each head's row-stochastic
    /// weight matrix is pushed into it.
    pub fn forward(
        &self,
        q_in: &Tensor<S>,
        k_in: &Tensor<S>,
        v_in: &Tensor<S>,
        mask: Option<&AttnMask>,
        ctx: &mut FwdCtx,
        mut probe: Option<&mut Vec<Tensor<S>>>,
    ) -> Result<Tensor<S>> {
        let d = self.cfg.dim;
        let (m, n) = (q_in.shape()[0], k_in.shape()[0]);
        if q_in.shape() != [m, d] || k_in.shape() != [n, d] || v_in.shape() != [n, d] {
            return Err(Error::contract(
                "multi_head_attention",
                format!(
                    "bad shapes q={:?} k={:?} v={:?} for dim {d}",
                    q_in.shape(),
                    k_in.shape(),
                    v_in.shape()
                ),
            ));
        }
        if let Some(msk) = mask {
            if msk.rows != m || msk.cols != n {
                return Err(Error::contract(
                    "multi_head_attention",
                    format!("mask {}×{} does not match {m}×{n}", msk.rows, msk.cols),
                ));
            }
            msk.check_no_empty_row()?;
        }

        let q = q_in.matmul(&self.wq)?.add_row(&self.bq)?;
        let k = k_in.matmul(&self.wk)?.add_row(&self.bk)?;
        let v = v_in.matmul(&self.wv)?.add_row(&self.bv)?;

        let dh = d / self.cfg.heads;
        let scale = S::c(1.0 / (dh as f64).sqrt());
        let mut head_outs = Vec::with_capacity(self.cfg.heads);
        for h in 0..self.cfg.heads {
            let qh = q.narrow(1, h * dh, dh)?;
            let kh = k.narrow(1, h * dh, dh)?;
            let vh = v.narrow(1, h * dh, dh)?;
            let scores = qh.matmul(&kh.transpose()?)?.mul_scalar(scale)?;
            let probs = scores.softmax_masked(1, mask.map(|m| m.keep.as_slice()))?;
            if let Some(p) = probe.as_deref_mut() {
                p.push(probs.clone());
            }
            let probs = probs.dropout(self.cfg.dropout, ctx.train, ctx.rng)?;
            head_outs.push(probs.matmul(&vh)?);
        }
        let merged = Tensor::concat(&head_outs, 1)?;
        merged.matmul(&self.wo)?.add_row(&self.bo)
    }
}

/// Learned affine layer-norm parameters (γ initialized to 1, β to 0).
pub struct LayerNormParams<S: Scalar> {
    pub gamma: Tensor<S>,
    pub beta: Tensor<S>,
}

impl<S: Scalar> LayerNormParams<S> {
    pub fn init(d: usize) -> Self {
        LayerNormParams {
            gamma: Tensor::param(vec![S::one(); d], &[d]).expect("shape"),
            beta: zero_param(&[d]),
        }
    }

    pub fn named(&self, prefix: &str, out: &mut Vec<(String, Tensor<S>)>) {
        out.push((format!("{prefix}.gamma"), self.gamma.clone()));
        out.push((format!("{prefix}.beta"), self.beta.clone()));
    }

    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        x.layer_norm(&self.gamma, &self.beta)
    }
}

/// Aligned output pair; lengths always equal the respective inputs.
pub struct AlignedPair<S: Scalar> {
    pub f_t_out: Tensor<S>,
    pub f_a_out: Tensor<S>,
}

/// Per-modality keep masks for padded positions (`None` = everything kept).
#[derive(Default, Clone, Copy)]
pub struct StreamMasks<'a> {
    pub text_keep: Option<&'a [bool]>,
    pub audio_keep: Option<&'a [bool]>,
}

/// The three-layer cross-modal attention block.
pub struct CrossModalBlock<S: Scalar> {
    pub text_self1: MhaParams<S>,
    pub audio_self1: MhaParams<S>,
    pub text_cross: MhaParams<S>,
    pub audio_cross: MhaParams<S>,
    pub text_self2: MhaParams<S>,
    pub audio_self2: MhaParams<S>,
    pub ln_t1: LayerNormParams<S>,
    pub ln_a1: LayerNormParams<S>,
    pub ln_t2: LayerNormParams<S>,
    pub ln_a2: LayerNormParams<S>,
    pub ln_t3: LayerNormParams<S>,
    pub ln_a3: LayerNormParams<S>,
    cfg: AttentionConfig,
}

impl<S: Scalar> CrossModalBlock<S> {
    pub fn init(cfg: AttentionConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        Ok(CrossModalBlock {
            text_self1: MhaParams::init(cfg, rng)?,
            audio_self1: MhaParams::init(cfg, rng)?,
            text_cross: MhaParams::init(cfg, rng)?,
            audio_cross: MhaParams::init(cfg, rng)?,
            text_self2: MhaParams::init(cfg, rng)?,
            audio_self2: MhaParams::init(cfg, rng)?,
            ln_t1: LayerNormParams::init(cfg.dim),
            ln_a1: LayerNormParams::init(cfg.dim),
            ln_t2: LayerNormParams::init(cfg.dim),
            ln_a2: LayerNormParams::init(cfg.dim),
            ln_t3: LayerNormParams::init(cfg.dim),
            ln_a3: LayerNormParams::init(cfg.dim),
            cfg,
        })
    }

    pub fn named(&self, prefix: &str, out: &mut Vec<(String, Tensor<S>)>) {
        self.text_self1.named(&format!("{prefix}.text_self1"), out);
        self.audio_self1.named(&format!("{prefix}.audio_self1"), out);
        self.text_cross.named(&format!("{prefix}.text_cross"), out);
        self.audio_cross.named(&format!("{prefix}.audio_cross"), out);
        self.text_self2.named(&format!("{prefix}.text_self2"), out);
        self.audio_self2.named(&format!("{prefix}.audio_self2"), out);
        self.ln_t1.named(&format!("{prefix}.ln_t1"), out);
        self.ln_a1.named(&format!("{prefix}.ln_a1"), out);
        self.ln_t2.named(&format!("{prefix}.ln_t2"), out);
        self.ln_a2.named(&format!("{prefix}.ln_a2"), out);
        self.ln_t3.named(&format!("{prefix}.ln_t3"), out);
        self.ln_a3.named(&format!("{prefix}.ln_a3"), out);
    }

    pub fn forward(
        &self,
        f_t: &Tensor<S>,
        f_a: &Tensor<S>,
        masks: StreamMasks,
        ctx: &mut FwdCtx,
    ) -> Result<AlignedPair<S>> {
        self.forward_probed(f_t, f_a, masks, ctx, None)
    }

    /// Forward with an optional probe collecting every attention weight
    /// matrix in evaluation order (test inspection hook).
    pub fn forward_probed(
        &self,
        f_t: &Tensor<S>,
        f_a: &Tensor<S>,
        masks: StreamMasks,
        ctx: &mut FwdCtx,
        mut probe: Option<&mut Vec<Tensor<S>>>,
    ) -> Result<AlignedPair<S>> {
        let d = self.cfg.dim;
        if f_t.shape().len() != 2 || f_t.shape()[1] != d {
            return Err(Error::contract(
                "cross_modal_align",
                format!("text features {:?} do not end in dim {d}", f_t.shape()),
            ));
        }
        if f_a.shape().len() != 2 || f_a.shape()[1] != d {
            return Err(Error::contract(
                "cross_modal_align",
                format!("audio features {:?} do not end in dim {d}", f_a.shape()),
            ));
        }
        let t_len = f_t.shape()[0];
        let a_len = f_a.shape()[0];
        let self_mask = |keep: Option<&[bool]>, len: usize| -> Result<Option<AttnMask>> {
            match keep {
                None => Ok(None),
                Some(k) => Ok(Some(square_keep_mask(k, len)?)),
            }
        };
        let cross_mask = |q_keep: Option<&[bool]>,
                          k_keep: Option<&[bool]>,
                          q_len: usize,
                          k_len: usize|
         -> Result<Option<AttnMask>> {
            if q_keep.is_none() && k_keep.is_none() {
                return Ok(None);
            }
            Ok(Some(rect_keep_mask(q_keep, k_keep, q_len, k_len)?))
        };

        let run = |p: &MhaParams<S>,
                       q: &Tensor<S>,
                       kv: &Tensor<S>,
                       mask: Option<AttnMask>,
                       ln: &LayerNormParams<S>,
                       ctx: &mut FwdCtx,
                       probe: &mut Option<&mut Vec<Tensor<S>>>|
         -> Result<Tensor<S>> {
            let att = p.forward(q, kv, kv, mask.as_ref(), ctx, probe.as_deref_mut())?;
            ln.forward(&q.add(&att)?)
        };

        // layer 1: intra-modal self-attention
        let t1 = run(
            &self.text_self1,
            f_t,
            f_t,
            self_mask(masks.text_keep, t_len)?,
            &self.ln_t1,
            ctx,
            &mut probe,
        )?;
        let a1 = run(
            &self.audio_self1,
            f_a,
            f_a,
            self_mask(masks.audio_keep, a_len)?,
            &self.ln_a1,
            ctx,
            &mut probe,
        )?;

        // layer 2: bidirectional cross-attention, both sides reading layer-1
        let t2 = run(
            &self.text_cross,
            &t1,
            &a1,
            cross_mask(masks.text_keep, masks.audio_keep, t_len, a_len)?,
            &self.ln_t2,
            ctx,
            &mut probe,
        )?;
        let a2 = run(
            &self.audio_cross,
            &a1,
            &t1,
            cross_mask(masks.audio_keep, masks.text_keep, a_len, t_len)?,
            &self.ln_a2,
            ctx,
            &mut probe,
        )?;

        // layer 3: intra-modal self-attention again
        let f_t_out = run(
            &self.text_self2,
            &t2,
            &t2,
            self_mask(masks.text_keep, t_len)?,
            &self.ln_t3,
            ctx,
            &mut probe,
        )?;
        let f_a_out = run(
            &self.audio_self2,
            &a2,
            &a2,
            self_mask(masks.audio_keep, a_len)?,
            &self.ln_a3,
            ctx,
            &mut probe,
        )?;

        debug_assert_eq!(f_t_out.shape(), f_t.shape());
        debug_assert_eq!(f_a_out.shape(), f_a.shape());
        Ok(AlignedPair { f_t_out, f_a_out })
    }

    /// Zero every MHA output projection; the block then reduces to a triple
    /// layer norm of each stream (at initialization γ=1, β=0).
    pub fn zero_output_projections(&self) {
        for p in [
            &self.text_self1,
            &self.audio_self1,
            &self.text_cross,
            &self.audio_cross,
            &self.text_self2,
            &self.audio_self2,
        ] {
            p.wo.with_data_mut(|d| d.fill(S::zero()));
            p.bo.with_data_mut(|d| d.fill(S::zero()));
        }
    }
}

fn square_keep_mask(keep: &[bool], len: usize) -> Result<AttnMask> {
    if keep.len() != len {
        return Err(Error::contract(
            "cross_modal_align",
            format!("keep mask length {} != stream length {len}", keep.len()),
        ));
    }
    let mut m = vec![false; len * len];
    for i in 0..len {
        for j in 0..len {
            m[i * len + j] = keep[j];
        }
    }
    AttnMask::new(len, len, m)
}

fn rect_keep_mask(
    _q_keep: Option<&[bool]>,
    k_keep: Option<&[bool]>,
    q_len: usize,
    k_len: usize,
) -> Result<AttnMask> {
    let cols: Vec<bool> = match k_keep {
        Some(k) if k.len() == k_len => k.to_vec(),
        Some(k) => {
            return Err(Error::contract(
                "cross_modal_align",
                format!("keep mask length {} != stream length {k_len}", k.len()),
            ))
        }
        None => vec![true; k_len],
    };
    let mut m = vec![false; q_len * k_len];
    for i in 0..q_len {
        for j in 0..k_len {
            m[i * k_len + j] = cols[j];
        }
    }
    AttnMask::new(q_len, k_len, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck::{finite_difference_check, MODEL_TOL};
    use rand::SeedableRng;

    fn cfg(d: usize, h: usize) -> AttentionConfig {
        AttentionConfig {
            dim: d,
            heads: h,
            dropout: 0.0,
        }
    }

    fn randn64(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::<f64>::randn(shape, rng)
    }

    #[test]
    fn config_rejects_indivisible_heads() {
        assert!(cfg(6, 4).validate().is_err());
        assert!(cfg(8, 2).validate().is_ok());
    }

    #[test]
    fn single_key_attention_weight_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = cfg(8, 2);
        let mha = MhaParams::<f64>::init(c, &mut rng).unwrap();
        let q = randn64(&[3, 8], &mut rng);
        let kv = randn64(&[1, 8], &mut rng);
        let mut probe = Vec::new();
        let mut ctx = FwdCtx::eval(&mut rng);
        mha.forward(&q, &kv, &kv, None, &mut ctx, Some(&mut probe))
            .unwrap();
        for p in &probe {
            assert!(p.to_vec().iter().all(|&w| (w - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn identical_keys_give_uniform_attention() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let c = cfg(8, 2);
        let mha = MhaParams::<f64>::init(c, &mut rng).unwrap();
        let q = randn64(&[2, 8], &mut rng);
        let row = randn64(&[1, 8], &mut rng);
        let kv = Tensor::concat(&[row.clone(), row.clone(), row.clone(), row], 0).unwrap();
        let mut probe = Vec::new();
        let mut ctx = FwdCtx::eval(&mut rng);
        mha.forward(&q, &kv, &kv, None, &mut ctx, Some(&mut probe))
            .unwrap();
        for p in &probe {
            for &w in p.to_vec().iter() {
                assert!((w - 0.25).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn permuting_keys_and_values_together_preserves_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let c = cfg(8, 2);
        let mha = MhaParams::<f64>::init(c, &mut rng).unwrap();
        let q = randn64(&[3, 8], &mut rng);
        let kv = randn64(&[5, 8], &mut rng);
        let mut ctx_rng = ChaCha8Rng::seed_from_u64(0);
        let mut ctx = FwdCtx::eval(&mut ctx_rng);
        let base = mha.forward(&q, &kv, &kv, None, &mut ctx, None).unwrap();

        // brute-force: every rotation of the rows must match
        let rows: Vec<Tensor<f64>> = (0..5).map(|i| kv.narrow(0, i, 1).unwrap()).collect();
        for shift in 1..5 {
            let perm: Vec<Tensor<f64>> =
                (0..5).map(|i| rows[(i + shift) % 5].clone()).collect();
            let kvp = Tensor::concat(&perm, 0).unwrap();
            let out = mha.forward(&q, &kvp, &kvp, None, &mut ctx, None).unwrap();
            for (a, b) in base.to_vec().iter().zip(out.to_vec()) {
                assert!((a - b).abs() <= 1e-5, "permutation changed output");
            }
        }
    }

    #[test]
    fn fully_masked_row_is_contract_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let c = cfg(4, 1);
        let mha = MhaParams::<f64>::init(c, &mut rng).unwrap();
        let q = randn64(&[2, 4], &mut rng);
        let kv = randn64(&[3, 4], &mut rng);
        let mask = AttnMask::new(2, 3, vec![true, true, true, false, false, false]).unwrap();
        let mut ctx = FwdCtx::eval(&mut rng);
        assert!(mha.forward(&q, &kv, &kv, Some(&mask), &mut ctx, None).is_err());
    }

    #[test]
    fn attention_rows_are_stochastic() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let c = cfg(8, 4);
        let block = CrossModalBlock::<f64>::init(c, &mut rng).unwrap();
        let f_t = randn64(&[3, 8], &mut rng);
        let f_a = randn64(&[5, 8], &mut rng);
        let mut probe = Vec::new();
        let mut ctx = FwdCtx::eval(&mut rng);
        block
            .forward_probed(&f_t, &f_a, StreamMasks::default(), &mut ctx, Some(&mut probe))
            .unwrap();
        assert_eq!(probe.len(), 6 * 4); // six sublayers × four heads
        for p in &probe {
            let rows = p.shape()[0];
            let cols = p.shape()[1];
            let d = p.to_vec();
            for r in 0..rows {
                let s: f64 = d[r * cols..(r + 1) * cols].iter().sum();
                assert!((s - 1.0).abs() < 1e-9, "row sum {s}");
                assert!(d[r * cols..(r + 1) * cols].iter().all(|&w| w >= 0.0));
            }
        }
    }

    #[test]
    fn zero_update_identity_is_triple_layer_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let c = cfg(8, 2);
        let block = CrossModalBlock::<f64>::init(c, &mut rng).unwrap();
        block.zero_output_projections();
        let f_t = randn64(&[4, 8], &mut rng);
        let f_a = randn64(&[6, 8], &mut rng);
        let mut ctx = FwdCtx::eval(&mut rng);
        let out = block
            .forward(&f_t, &f_a, StreamMasks::default(), &mut ctx)
            .unwrap();

        let gamma = Tensor::<f64>::from_vec(vec![1.0; 8], &[8]).unwrap();
        let beta = Tensor::<f64>::from_vec(vec![0.0; 8], &[8]).unwrap();
        let triple = |x: &Tensor<f64>| {
            x.layer_norm(&gamma, &beta)
                .unwrap()
                .layer_norm(&gamma, &beta)
                .unwrap()
                .layer_norm(&gamma, &beta)
                .unwrap()
        };
        for (a, b) in out.f_t_out.to_vec().iter().zip(triple(&f_t).to_vec()) {
            assert!((a - b).abs() <= 1e-6);
        }
        for (a, b) in out.f_a_out.to_vec().iter().zip(triple(&f_a).to_vec()) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn degenerate_lengths_preserve_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let c = cfg(8, 2);
        let block = CrossModalBlock::<f64>::init(c, &mut rng).unwrap();
        let f_t = randn64(&[1, 8], &mut rng);
        let f_a = randn64(&[1, 8], &mut rng);
        let mut ctx = FwdCtx::eval(&mut rng);
        let out = block
            .forward(&f_t, &f_a, StreamMasks::default(), &mut ctx)
            .unwrap();
        assert_eq!(out.f_t_out.shape(), &[1, 8]);
        assert_eq!(out.f_a_out.shape(), &[1, 8]);
    }

    #[test]
    fn audio_perturbation_reaches_text_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let c = cfg(8, 2);
        let block = CrossModalBlock::<f64>::init(c, &mut rng).unwrap();
        let f_t = randn64(&[3, 8], &mut rng);
        let f_a = randn64(&[4, 8], &mut rng);
        let mut ctx = FwdCtx::eval(&mut rng);
        let base = block
            .forward(&f_t, &f_a, StreamMasks::default(), &mut ctx)
            .unwrap();
        let mut bumped = f_a.to_vec();
        bumped[5] += 1.0;
        let f_a2 = Tensor::from_vec(bumped, &[4, 8]).unwrap();
        let out = block
            .forward(&f_t, &f_a2, StreamMasks::default(), &mut ctx)
            .unwrap();
        let max_diff = base
            .f_t_out
            .to_vec()
            .iter()
            .zip(out.f_t_out.to_vec())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_diff > 0.0, "text output ignored the audio stream");
    }

    #[test]
    fn block_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let c = cfg(8, 2);
        let block = CrossModalBlock::<f64>::init(c, &mut rng).unwrap();
        let f_t = Tensor::param(randn64(&[3, 8], &mut rng).to_vec(), &[3, 8]).unwrap();
        let f_a = Tensor::param(randn64(&[4, 8], &mut rng).to_vec(), &[4, 8]).unwrap();
        let mut leaves = vec![
            ("f_t".to_string(), f_t.clone()),
            ("f_a".to_string(), f_a.clone()),
        ];
        block.named("block", &mut leaves);
        let proj_t = randn64(&[3, 8], &mut rng);
        let proj_a = randn64(&[4, 8], &mut rng);
        let mut check_rng = ChaCha8Rng::seed_from_u64(20);
        let report = finite_difference_check(
            "cross_modal_align",
            &leaves,
            &mut || {
                let mut r = ChaCha8Rng::seed_from_u64(0);
                let mut ctx = FwdCtx::eval(&mut r);
                let out = block.forward(&f_t, &f_a, StreamMasks::default(), &mut ctx)?;
                let lt = out.f_t_out.mul(&proj_t)?.sum_all()?;
                let la = out.f_a_out.mul(&proj_a)?.sum_all()?;
                lt.add(&la)
            },
            4,
            &mut check_rng,
        )
        .unwrap();
        assert!(
            report.passed(MODEL_TOL),
            "max rel err {:.3e}",
            report.max_rel_err
        );
    }
}
