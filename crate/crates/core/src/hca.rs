//! Hierarchical contrastive alignment loss.
//!
//! Per tier (phoneme / syllable / prosody) an InfoNCE term ties a pooled
//! speech embedding to its own condition embedding against in-batch
//! negatives; the tier terms are λ-weighted and summed. Similarity is
//! temperature-scaled cosine. Each term is computed as
//! `logsumexp([s_pos, s_neg…]) − s_pos`, which is the literal
//! `−log(exp(s_pos)/Σexp)` in stable form.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tier {
    Phoneme,
    Syllable,
    Prosody,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Phoneme, Tier::Syllable, Tier::Prosody];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&t| t == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            Tier::Phoneme => "phoneme",
            Tier::Syllable => "syllable",
            Tier::Prosody => "prosody",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HcaConfig {
    /// λ per tier, ordered phoneme / syllable / prosody.
    pub lambdas: [f64; 3],
    /// Similarity temperature τ.
    pub temperature: f64,
    /// Negatives per positive the batch builder should supply.
    pub negatives_per_positive: usize,
}

impl Default for HcaConfig {
    fn default() -> Self {
        HcaConfig {
            lambdas: [1.0, 1.0, 1.0],
            temperature: 0.1,
            negatives_per_positive: 1,
        }
    }
}

impl HcaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambdas.iter().any(|&l| l < 0.0) {
            return Err(Error::contract("hca", "negative λ"));
        }
        if self.temperature <= 0.0 {
            return Err(Error::contract(
                "hca",
                format!("temperature {} must be > 0", self.temperature),
            ));
        }
        if self.negatives_per_positive == 0 {
            return Err(Error::contract("hca", "need ≥ 1 negative per positive"));
        }
        Ok(())
    }
}

/// One positive pair plus its negative condition embeddings.
pub struct ContrastiveInstance<S: Scalar> {
    pub speech: Tensor<S>,
    pub positive: Tensor<S>,
    pub negatives: Vec<Tensor<S>>,
}

/// All instances of one tier.
pub struct TierPairs<S: Scalar> {
    pub tier: Tier,
    pub instances: Vec<ContrastiveInstance<S>>,
}

/// Temperature-scaled cosine similarity of two equal-dim vectors.
pub fn similarity<S: Scalar>(e_x: &Tensor<S>, e_c: &Tensor<S>, tau: f64) -> Result<Tensor<S>> {
    if e_x.shape() != e_c.shape() || e_x.shape().len() != 1 {
        return Err(Error::ShapeMismatch {
            op: "similarity",
            lhs: e_x.shape().to_vec(),
            rhs: e_c.shape().to_vec(),
        });
    }
    if tau <= 0.0 {
        return Err(Error::contract("similarity", format!("τ={tau} must be > 0")));
    }
    let sq = |v: &Tensor<S>| -> Result<Tensor<S>> { v.mul(v)?.sum_all() };
    if sq(e_x)?.item()? == S::zero() || sq(e_c)?.item()? == S::zero() {
        return Err(Error::contract("similarity", "zero-norm vector"));
    }
    let dot = e_x.mul(e_c)?.sum_all()?;
    let denom = sq(e_x)?.sqrt()?.mul(&sq(e_c)?.sqrt()?)?;
    dot.div(&denom)?.mul_scalar(S::c(1.0 / tau))
}

/// InfoNCE for one instance: `logsumexp([s_pos, s_negs…]) − s_pos`.
fn instance_loss<S: Scalar>(inst: &ContrastiveInstance<S>, tau: f64) -> Result<Tensor<S>> {
    if inst.negatives.is_empty() {
        return Err(Error::contract("hca_loss", "empty negative set"));
    }
    let s_pos = similarity(&inst.speech, &inst.positive, tau)?;
    let mut sims = vec![s_pos.clone()];
    for neg in &inst.negatives {
        sims.push(similarity(&inst.speech, neg, tau)?);
    }
    let stacked = Tensor::concat(&sims, 0)?;
    stacked.log_sum_exp()?.sub(&s_pos)
}

/// Tier-weighted sum of per-tier InfoNCE means. Tiers with λ=0 still have
/// their instances validated but contribute nothing.
pub fn hca_loss<S: Scalar>(tiers: &[TierPairs<S>], cfg: &HcaConfig) -> Result<Tensor<S>> {
    cfg.validate()?;
    if tiers.is_empty() {
        return Err(Error::contract("hca_loss", "no tiers given"));
    }
    let mut total = Tensor::scalar(S::zero());
    for tp in tiers {
        if tp.instances.is_empty() {
            return Err(Error::contract(
                "hca_loss",
                format!("tier {} has no positives", tp.tier.name()),
            ));
        }
        for inst in &tp.instances {
            if inst.negatives.is_empty() {
                return Err(Error::contract("hca_loss", "empty negative set"));
            }
        }
        let lambda = cfg.lambdas[tp.tier.index()];
        if lambda == 0.0 {
            continue;
        }
        let mut tier_sum: Option<Tensor<S>> = None;
        for inst in &tp.instances {
            let l = instance_loss(inst, cfg.temperature)?;
            tier_sum = Some(match tier_sum {
                Some(acc) => acc.add(&l)?,
                None => l,
            });
        }
        let tier_mean = tier_sum
            .expect("non-empty tier")
            .mul_scalar(S::c(1.0 / tp.instances.len() as f64))?;
        total = total.add(&tier_mean.mul_scalar(S::c(lambda))?)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck::{finite_difference_check, PRIMITIVE_TOL};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vecf(v: Vec<f64>) -> Tensor<f64> {
        let n = v.len();
        Tensor::from_vec(v, &[n]).unwrap()
    }

    #[test]
    fn similarity_closed_forms() {
        let a = vecf(vec![1.0, 2.0, -1.0]);
        let s = similarity(&a, &a, 1.0).unwrap().item().unwrap();
        assert!((s - 1.0).abs() < 1e-12);

        let x = vecf(vec![1.0, 0.0]);
        let y = vecf(vec![0.0, 3.0]);
        assert_eq!(similarity(&x, &y, 1.0).unwrap().item().unwrap(), 0.0);

        let neg = vecf(vec![-1.0, -2.0, 1.0]);
        let s = similarity(&a, &neg, 0.5).unwrap().item().unwrap();
        assert!((s + 2.0).abs() < 1e-12);
    }

    #[test]
    fn similarity_rejects_zero_norm() {
        let a = vecf(vec![0.0, 0.0]);
        let b = vecf(vec![1.0, 0.0]);
        assert!(similarity(&a, &b, 1.0).is_err());
    }

    fn uniform_tier(tier: Tier, n_negs: usize) -> TierPairs<f64> {
        // identical vectors: every similarity equals 1/τ
        let e = vecf(vec![0.5, 0.5, 0.5]);
        TierPairs {
            tier,
            instances: vec![ContrastiveInstance {
                speech: e.clone(),
                positive: e.clone(),
                negatives: (0..n_negs).map(|_| e.clone()).collect(),
            }],
        }
    }

    #[test]
    fn uniform_similarities_give_three_ln_two() {
        let cfg = HcaConfig::default();
        let tiers: Vec<TierPairs<f64>> =
            Tier::ALL.iter().map(|&t| uniform_tier(t, 1)).collect();
        let loss = hca_loss(&tiers, &cfg).unwrap().item().unwrap();
        assert!((loss - 3.0 * 2f64.ln()).abs() < 1e-6, "loss {loss}");
    }

    #[test]
    fn uniform_with_n_negatives_gives_ln_n_plus_one() {
        for n in [1usize, 3, 7] {
            let cfg = HcaConfig {
                lambdas: [1.0, 0.0, 0.0],
                ..HcaConfig::default()
            };
            let tiers = vec![
                uniform_tier(Tier::Phoneme, n),
                uniform_tier(Tier::Syllable, n),
                uniform_tier(Tier::Prosody, n),
            ];
            let loss = hca_loss(&tiers, &cfg).unwrap().item().unwrap();
            assert!(
                (loss - ((n + 1) as f64).ln()).abs() < 1e-6,
                "n={n} loss {loss}"
            );
        }
    }

    #[test]
    fn saturated_positive_drives_loss_to_zero() {
        // cos=1 at τ=0.05 → s_pos=20; orthogonal negative → s_neg=0
        let cfg = HcaConfig {
            lambdas: [1.0, 0.0, 0.0],
            temperature: 0.05,
            negatives_per_positive: 1,
        };
        let speech = vecf(vec![1.0, 0.0]);
        let tiers = vec![
            TierPairs {
                tier: Tier::Phoneme,
                instances: vec![ContrastiveInstance {
                    speech: speech.clone(),
                    positive: speech.clone(),
                    negatives: vec![vecf(vec![0.0, 1.0])],
                }],
            },
            uniform_tier(Tier::Syllable, 1),
            uniform_tier(Tier::Prosody, 1),
        ];
        let loss = hca_loss(&tiers, &cfg).unwrap().item().unwrap();
        assert!(loss >= 0.0 && loss < 1e-8, "loss {loss}");
    }

    #[test]
    fn lambda_masking_matches_standalone_tier() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let inst = |rng: &mut ChaCha8Rng| ContrastiveInstance {
            speech: Tensor::<f64>::randn(&[5], rng),
            positive: Tensor::<f64>::randn(&[5], rng),
            negatives: vec![Tensor::<f64>::randn(&[5], rng), Tensor::<f64>::randn(&[5], rng)],
        };
        let tiers = vec![
            TierPairs {
                tier: Tier::Phoneme,
                instances: vec![inst(&mut rng), inst(&mut rng)],
            },
            TierPairs {
                tier: Tier::Syllable,
                instances: vec![inst(&mut rng)],
            },
            TierPairs {
                tier: Tier::Prosody,
                instances: vec![inst(&mut rng)],
            },
        ];
        let masked = HcaConfig {
            lambdas: [1.0, 0.0, 0.0],
            ..HcaConfig::default()
        };
        let full = hca_loss(&tiers, &masked).unwrap().item().unwrap();
        let standalone = hca_loss(&tiers[..1], &masked).unwrap().item().unwrap();
        assert!((full - standalone).abs() < 1e-12);
    }

    #[test]
    fn loss_nonnegative_and_monotone_in_positive_similarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..200 {
            let speech = Tensor::<f64>::randn(&[4], &mut rng);
            let positive = Tensor::<f64>::randn(&[4], &mut rng);
            let negatives = vec![Tensor::<f64>::randn(&[4], &mut rng)];
            let cfg = HcaConfig {
                lambdas: [1.0, 0.0, 0.0],
                ..HcaConfig::default()
            };
            let mk = |pos: Tensor<f64>| {
                vec![TierPairs {
                    tier: Tier::Phoneme,
                    instances: vec![ContrastiveInstance {
                        speech: speech.clone(),
                        positive: pos,
                        negatives: negatives.clone(),
                    }],
                }]
            };
            let base = hca_loss(&mk(positive.clone()), &cfg).unwrap().item().unwrap();
            assert!(base >= 0.0);
            // nudging the positive toward the speech vector raises s_pos
            let better: Vec<f64> = positive
                .to_vec()
                .iter()
                .zip(speech.to_vec())
                .map(|(p, s)| p + 0.2 * (s - p))
                .collect();
            let improved = hca_loss(&mk(vecf(better)), &cfg).unwrap().item().unwrap();
            assert!(improved < base, "{improved} !< {base}");
        }
    }

    #[test]
    fn empty_negatives_is_contract_error() {
        let e = vecf(vec![1.0, 0.0]);
        let tiers = vec![TierPairs {
            tier: Tier::Phoneme,
            instances: vec![ContrastiveInstance {
                speech: e.clone(),
                positive: e.clone(),
                negatives: vec![],
            }],
        }];
        assert!(hca_loss(&tiers, &HcaConfig::default()).is_err());
    }

    #[test]
    fn gradients_through_similarity_and_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let speech = Tensor::<f64>::param(
            Tensor::<f64>::randn(&[6], &mut rng).to_vec(),
            &[6],
        )
        .unwrap();
        let positive = Tensor::<f64>::param(
            Tensor::<f64>::randn(&[6], &mut rng).to_vec(),
            &[6],
        )
        .unwrap();
        let neg = Tensor::<f64>::param(
            Tensor::<f64>::randn(&[6], &mut rng).to_vec(),
            &[6],
        )
        .unwrap();
        let leaves = vec![
            ("speech".to_string(), speech.clone()),
            ("positive".to_string(), positive.clone()),
            ("neg".to_string(), neg.clone()),
        ];
        let cfg = HcaConfig::default();
        let report = finite_difference_check(
            "hca_loss",
            &leaves,
            &mut || {
                hca_loss(
                    &[TierPairs {
                        tier: Tier::Phoneme,
                        instances: vec![ContrastiveInstance {
                            speech: speech.clone(),
                            positive: positive.clone(),
                            negatives: vec![neg.clone()],
                        }],
                    }],
                    &cfg,
                )
            },
            0,
            &mut rng,
        )
        .unwrap();
        assert!(
            report.passed(PRIMITIVE_TOL),
            "max rel err {:.3e}",
            report.max_rel_err
        );
    }
}
