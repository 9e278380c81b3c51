// throwaway diagnostic, deleted before commit
use mftts::attention::FwdCtx;
use mftts::corpus::generate_synthetic_corpus;
use mftts::flow::{interpolate_path, target_field};
use mftts::model::{Model, TierMask};
use mftts::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
#[ignore]
fn reconstruct_x1_at_low_t() {
    let model = Model::<f32>::load_checkpoint_auto(std::path::Path::new(
        "/tmp/sweepM/checkpoints/final.ckpt",
    ))
    .unwrap();
    let corpus = generate_synthetic_corpus(42, 64, 16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    let item = &corpus.items[0];
    println!("text: {}", item.text);
    let x1 = Tensor::from_vec(item.mel.clone(), &[item.frames, 16]).unwrap();
    let t = 0.01;
    let x0 = Tensor::<f32>::randn(x1.shape(), &mut rng);
    let x_t = interpolate_path(&x0, &x1, t).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(0);
    let mut ctx = FwdCtx::eval(&mut r);
    let cond = model
        .encode_conditions(&item.ht, item.speaker, TierMask::default(), &mut ctx)
        .unwrap();
    let v = model.forward_field(&x_t, t, &cond, &mut ctx).unwrap();
    // implied x̂1 = v + x0 (approximately, since u = x1 − x0)
    let xhat: Vec<f32> = v
        .to_vec()
        .iter()
        .zip(x0.to_vec())
        .map(|(a, b)| a + b)
        .collect();
    let truth = &item.mel;
    // per-frame mean (contour axis)
    println!("frame, mean_hat, mean_true, bin_profile_err");
    for f in (0..item.frames).step_by(4) {
        let mh: f32 = xhat[f * 16..(f + 1) * 16].iter().sum::<f32>() / 16.0;
        let mt: f32 = truth[f * 16..(f + 1) * 16].iter().sum::<f32>() / 16.0;
        let prof_err: f32 = (0..16)
            .map(|b| {
                let h = xhat[f * 16 + b] - mh;
                let t = truth[f * 16 + b] - mt;
                (h - t) * (h - t)
            })
            .sum::<f32>()
            / 16.0;
        println!("{f:3}  {mh:7.3}  {mt:7.3}  {prof_err:7.4}");
    }
    let u = target_field(&x0, &x1).unwrap();
    let d = v.sub(&u).unwrap();
    let l = d.mul(&d).unwrap().mean_all().unwrap().item().unwrap();
    println!("total cfm at t=0.01: {l:.4}");
}
