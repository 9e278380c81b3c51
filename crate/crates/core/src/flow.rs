//! Conditional flow matching: linear interpolation path, constant target
//! field, the CFM training objective, and the ODE samplers.
//!
//! The path is `x_t = (1−t)·x₀ + t·x₁` with `x₀ ~ N(0,I)`, so the target
//! velocity is the displacement `x₁ − x₀`, independent of `t`. Sampling
//! integrates the learned field from `t=0` to `t=1` with Euler or midpoint
//! steps.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{no_grad, Scalar, Tensor};

/// A learned (or oracle) velocity field `v(x_t, t, c)`.
pub trait VectorField<S: Scalar> {
    type Cond;
    fn velocity(&self, x_t: &Tensor<S>, t: f64, cond: &Self::Cond) -> Result<Tensor<S>>;
}

/// Closure-backed field, mainly for tests and oracles.
pub struct FnField<S, C, F>
where
    S: Scalar,
    F: Fn(&Tensor<S>, f64, &C) -> Result<Tensor<S>>,
{
    f: F,
    _marker: std::marker::PhantomData<(S, C)>,
}

impl<S, C, F> FnField<S, C, F>
where
    S: Scalar,
    F: Fn(&Tensor<S>, f64, &C) -> Result<Tensor<S>>,
{
    pub fn new(f: F) -> Self {
        FnField {
            f,
            _marker: std::marker::PhantomData,
        }
    }
}

impl<S, C, F> VectorField<S> for FnField<S, C, F>
where
    S: Scalar,
    F: Fn(&Tensor<S>, f64, &C) -> Result<Tensor<S>>,
{
    type Cond = C;
    fn velocity(&self, x_t: &Tensor<S>, t: f64, cond: &C) -> Result<Tensor<S>> {
        (self.f)(x_t, t, cond)
    }
}

/// One draw of the interpolation path.
#[derive(Debug, Clone)]
pub struct FlowSample<S: Scalar> {
    pub x0: Tensor<S>,
    pub x1: Tensor<S>,
    pub t: f64,
    pub x_t: Tensor<S>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OdeMethod {
    Euler,
    Midpoint,
}

impl OdeMethod {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(OdeMethod::Euler),
            "midpoint" => Ok(OdeMethod::Midpoint),
            other => Err(Error::Config(format!("unknown ode method {other:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OdeMethod::Euler => "euler",
            OdeMethod::Midpoint => "midpoint",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OdeConfig {
    pub steps: usize,
    pub method: OdeMethod,
    /// Seed for the initial noise draw.
    pub seed: u64,
}

impl Default for OdeConfig {
    fn default() -> Self {
        OdeConfig {
            steps: 32,
            method: OdeMethod::Euler,
            seed: 0,
        }
    }
}

impl OdeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::contract("sample_ode", "steps must be ≥ 1"));
        }
        Ok(())
    }
}

/// `x_t = (1−t)·x₀ + t·x₁`. Exact at the endpoints.
pub fn interpolate_path<S: Scalar>(x0: &Tensor<S>, x1: &Tensor<S>, t: f64) -> Result<Tensor<S>> {
    if x0.shape() != x1.shape() {
        return Err(Error::ShapeMismatch {
            op: "interpolate_path",
            lhs: x0.shape().to_vec(),
            rhs: x1.shape().to_vec(),
        });
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::contract(
            "interpolate_path",
            format!("t={t} outside [0,1]"),
        ));
    }
    if t == 0.0 {
        return Ok(x0.clone());
    }
    if t == 1.0 {
        return Ok(x1.clone());
    }
    x0.mul_scalar(S::c(1.0 - t))?.add(&x1.mul_scalar(S::c(t))?)
}

/// The constant displacement field `u = x₁ − x₀`.
pub fn target_field<S: Scalar>(x0: &Tensor<S>, x1: &Tensor<S>) -> Result<Tensor<S>> {
    if x0.shape() != x1.shape() {
        return Err(Error::ShapeMismatch {
            op: "target_field",
            lhs: x0.shape().to_vec(),
            rhs: x1.shape().to_vec(),
        });
    }
    x1.sub(x0)
}

/// Draw `(t, x₀)` for one target and build the path point. Draw order is
/// fixed (t first, then the noise) so a seeded rng replays exactly.
pub fn draw_flow_sample<S: Scalar>(x1: &Tensor<S>, rng: &mut ChaCha8Rng) -> FlowSample<S> {
    let t: f64 = rng.random();
    let x0 = Tensor::randn(x1.shape(), rng);
    let x_t = interpolate_path(&x0, x1, t).expect("shapes match by construction");
    FlowSample {
        x0,
        x1: x1.clone(),
        t,
        x_t,
    }
}

/// CFM objective over a batch: per item draw `(t, x₀)`, form `x_t`, and
/// average `‖v(x_t,t,c) − (x₁−x₀)‖²` over elements; then average items.
pub fn cfm_loss<S: Scalar, V: VectorField<S>>(
    field: &V,
    batch: &[(Tensor<S>, V::Cond)],
    rng: &mut ChaCha8Rng,
) -> Result<Tensor<S>> {
    if batch.is_empty() {
        return Err(Error::contract("cfm_loss", "empty batch"));
    }
    let mut total: Option<Tensor<S>> = None;
    for (x1, cond) in batch {
        let sample = draw_flow_sample(x1, rng);
        let u = target_field(&sample.x0, x1)?;
        let v = field.velocity(&sample.x_t, sample.t, cond)?;
        if v.shape() != x1.shape() {
            return Err(Error::ShapeMismatch {
                op: "cfm_loss",
                lhs: v.shape().to_vec(),
                rhs: x1.shape().to_vec(),
            });
        }
        let diff = v.sub(&u)?;
        let item = diff.mul(&diff)?.mean_all()?;
        total = Some(match total {
            Some(acc) => acc.add(&item)?,
            None => item,
        });
    }
    total
        .expect("non-empty batch")
        .mul_scalar(S::c(1.0 / batch.len() as f64))
}

/// Integrate the field from seeded Gaussian noise at `t=0` to `t=1`.
/// Runs without gradient recording. Non-finite field output aborts with the
/// offending step index.
pub fn sample_ode<S: Scalar, V: VectorField<S>>(
    field: &V,
    cond: &V::Cond,
    shape: &[usize],
    cfg: &OdeConfig,
) -> Result<Tensor<S>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let x0 = Tensor::<S>::randn(shape, &mut rng);
    integrate(field, cond, x0, cfg)
}

/// Integration core, exposed so callers can supply their own start state
/// (reference-conditioned synthesis seeds only the generated frames).
pub fn integrate<S: Scalar, V: VectorField<S>>(
    field: &V,
    cond: &V::Cond,
    x0: Tensor<S>,
    cfg: &OdeConfig,
) -> Result<Tensor<S>> {
    cfg.validate()?;
    no_grad(|| {
        let n = cfg.steps;
        let h = 1.0 / n as f64;
        let hs = S::c(h);
        let mut x = x0;
        for k in 0..n {
            let t_k = k as f64 / n as f64;
            let step = |v: &Tensor<S>| -> Result<()> {
                if !v.all_finite() {
                    return Err(Error::numeric(
                        "sample_ode",
                        format!("non-finite field output at step {k}"),
                    ));
                }
                Ok(())
            };
            match cfg.method {
                OdeMethod::Euler => {
                    let v = field.velocity(&x, t_k, cond)?;
                    step(&v)?;
                    x = x.add(&v.mul_scalar(hs)?)?;
                }
                OdeMethod::Midpoint => {
                    let v1 = field.velocity(&x, t_k, cond)?;
                    step(&v1)?;
                    let xm = x.add(&v1.mul_scalar(S::c(h / 2.0))?)?;
                    let v2 = field.velocity(&xm, t_k + h / 2.0, cond)?;
                    step(&v2)?;
                    x = x.add(&v2.mul_scalar(hs)?)?;
                }
            }
        }
        Ok(x)
    })
}
