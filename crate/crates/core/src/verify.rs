//! The full finite-difference verification suite: every tensor primitive,
//! the cross-modal block, and the desk-config model end to end.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::{AttentionConfig, CrossModalBlock, FwdCtx, StreamMasks};
use crate::error::Result;
use crate::flow::{interpolate_path, target_field};
use crate::frontend::Frontend;
use crate::hca::Tier;
use crate::model::{Model, ModelConfig, TierMask};
use crate::tensor::gradcheck::{
    finite_difference_check, primitive_reports, MODEL_TOL, PRIMITIVE_TOL,
};
use crate::tensor::{GradReport, Tensor};

/// One suite entry: the report plus the tolerance it must meet.
pub struct SuiteEntry {
    pub report: GradReport,
    pub tolerance: f64,
}

impl SuiteEntry {
    pub fn passed(&self) -> bool {
        self.report.passed(self.tolerance)
    }
}

fn block_report() -> Result<GradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA11CE);
    let cfg = AttentionConfig {
        dim: 8,
        heads: 2,
        dropout: 0.0,
    };
    let block = CrossModalBlock::<f64>::init(cfg, &mut rng)?;
    let f_t = Tensor::param(Tensor::<f64>::randn(&[3, 8], &mut rng).to_vec(), &[3, 8])?;
    let f_a = Tensor::param(Tensor::<f64>::randn(&[4, 8], &mut rng).to_vec(), &[4, 8])?;
    let mut leaves = vec![
        ("f_t".to_string(), f_t.clone()),
        ("f_a".to_string(), f_a.clone()),
    ];
    block.named("block", &mut leaves);
    let proj_t = Tensor::<f64>::randn(&[3, 8], &mut rng);
    let proj_a = Tensor::<f64>::randn(&[4, 8], &mut rng);
    let mut check_rng = ChaCha8Rng::seed_from_u64(0xA11CF);
    finite_difference_check(
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
        3,
        &mut check_rng,
    )
}

fn model_report(cfg: ModelConfig) -> Result<GradReport> {
    let model = Model::<f64>::init(cfg, 0xD15C)?;
    let frontend = Frontend::builtin();
    let ht = frontend.build_hierarchical_representation("šunggira boode.")?;
    let mut rng = ChaCha8Rng::seed_from_u64(0xD15D);
    let frames = 6usize;
    let x1 = Tensor::<f64>::randn(&[frames, cfg.mel_bins], &mut rng);
    let x0 = Tensor::<f64>::randn(&[frames, cfg.mel_bins], &mut rng);
    let t = 0.41;
    let x_t = interpolate_path(&x0, &x1, t)?;
    let u = target_field(&x0, &x1)?;
    let leaves = model.named_parameters();
    let mut check_rng = ChaCha8Rng::seed_from_u64(0xD15E);
    finite_difference_check(
        "full_model_cfm",
        &leaves,
        &mut || {
            let mut r = ChaCha8Rng::seed_from_u64(0);
            let mut ctx = FwdCtx::eval(&mut r);
            let cond = model.encode_conditions(&ht, 1, TierMask::default(), &mut ctx)?;
            let out = model.forward_field_full(&x_t, t, &cond, &mut ctx)?;
            let diff = out.velocity.sub(&u)?;
            let cfm = diff.mul(&diff)?.mean_all()?;
            let dur = model.predict_duration_log(&cond.seq)?;
            let e_x = model.hca_speech_embedding(&out.hidden)?;
            let e_c = model.hca_condition_embedding(Tier::Syllable, &cond.pooled_syll)?;
            let aux = e_x.mul(&e_c)?.sum_all()?.mul_scalar(0.01)?;
            cfm.add(&dur.mul_scalar(0.01)?)?.add(&aux)
        },
        2,
        &mut check_rng,
    )
}

/// Run everything; primitives at 1e-4, composite blocks at 1e-3.
pub fn run_gradient_suite() -> Result<Vec<SuiteEntry>> {
    let mut entries: Vec<SuiteEntry> = primitive_reports()?
        .into_iter()
        .map(|report| SuiteEntry {
            report,
            tolerance: PRIMITIVE_TOL,
        })
        .collect();
    entries.push(SuiteEntry {
        report: block_report()?,
        tolerance: MODEL_TOL,
    });
    let mut desk = ModelConfig::desk();
    // full desk width, light dropout off, fewer vocab rows to keep the
    // perturbation loop snappy
    desk.dropout_attention = 0.0;
    desk.dropout_ffn = 0.0;
    entries.push(SuiteEntry {
        report: model_report(desk)?,
        tolerance: MODEL_TOL,
    });
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_suite_passes() {
        for e in run_gradient_suite().unwrap() {
            assert!(
                e.passed(),
                "{}: max rel err {:.3e} ≥ {:.0e}",
                e.report.op,
                e.report.max_rel_err,
                e.tolerance
            );
        }
    }
}
