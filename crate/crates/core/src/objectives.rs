//! Loss functions: L1 reconstruction, least-squares adversarial terms, the
//! combined generator objective, and the epoch-scheduled adversarial weight.

use ndarray::{ArrayBase, Data, Dimension};

use crate::error::{Error, Result};
use crate::nn::Real;

/// λ_rec plus the three-step λ_adv schedule.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossWeights {
    pub lambda_rec: f64,
    pub adv_early: f64,
    pub adv_mid: f64,
    pub adv_late: f64,
    pub adv_break1: u32,
    pub adv_break2: u32,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_rec: 1.0,
            adv_early: 0.001,
            adv_mid: 0.005,
            adv_late: 0.015,
            adv_break1: 10,
            adv_break2: 30,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_rec", self.lambda_rec),
            ("lambda_adv_early", self.adv_early),
            ("lambda_adv_mid", self.adv_mid),
            ("lambda_adv_late", self.adv_late),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be a finite value >= 0, got {v}")));
            }
        }
        if self.adv_break1 > self.adv_break2 {
            return Err(Error::Config(format!(
                "lambda_adv_break1 ({}) must not exceed lambda_adv_break2 ({})",
                self.adv_break1, self.adv_break2
            )));
        }
        Ok(())
    }

    /// Adversarial weight for 1-based epoch `n`.
    pub fn lambda_adv(&self, n: u32) -> Result<f64> {
        if n < 1 {
            return Err(Error::InvalidInput("epoch index must be >= 1".into()));
        }
        Ok(if n <= self.adv_break1 {
            self.adv_early
        } else if n <= self.adv_break2 {
            self.adv_mid
        } else {
            self.adv_late
        })
    }

    /// All-zero adversarial schedule (pure reconstruction training).
    pub fn without_adversarial(mut self) -> Self {
        self.adv_early = 0.0;
        self.adv_mid = 0.0;
        self.adv_late = 0.0;
        self
    }
}

/// λ_adv(n) with the default 0.001 / 0.005 / 0.015 schedule.
pub fn lambda_adv(n: u32) -> Result<f64> {
    LossWeights::default().lambda_adv(n)
}

fn check_same_shape<S, D, A, B>(context: &str, a: &ArrayBase<A, D>, b: &ArrayBase<B, D>) -> Result<()>
where
    D: Dimension,
    A: Data<Elem = S>,
    B: Data<Elem = S>,
{
    if a.shape() != b.shape() {
        return Err(Error::shape(
            context,
            format!("{:?}", a.shape()),
            format!("{:?}", b.shape()),
        ));
    }
    Ok(())
}

/// Mean absolute elementwise difference.
pub fn rec_loss<S, D, A, B>(x: &ArrayBase<A, D>, gx: &ArrayBase<B, D>) -> Result<f64>
where
    S: Real,
    D: Dimension,
    A: Data<Elem = S>,
    B: Data<Elem = S>,
{
    check_same_shape("rec_loss", x, gx)?;
    let mut acc = 0.0f64;
    for (a, b) in x.iter().zip(gx.iter()) {
        acc += (*a - *b).as_f64().abs();
    }
    Ok(acc / x.len() as f64)
}

/// d rec_loss / d gx, elementwise sign(gx - x) / N.
pub fn rec_loss_grad<S, D, A, B>(
    x: &ArrayBase<A, D>,
    gx: &ArrayBase<B, D>,
) -> Result<ndarray::Array<S, D>>
where
    S: Real,
    D: Dimension,
    A: Data<Elem = S>,
    B: Data<Elem = S>,
{
    check_same_shape("rec_loss_grad", x, gx)?;
    let inv = S::from_f64(1.0 / x.len() as f64);
    let mut g = gx.to_owned();
    g.zip_mut_with(&x.view(), |gv, &xv| {
        *gv = if *gv > xv {
            inv
        } else if *gv < xv {
            -inv
        } else {
            S::default()
        };
    });
    Ok(g)
}

/// Generator-side least-squares adversarial loss: mean of (score - 1)^2.
pub fn adv_loss_gen<S, D, A>(scores: &ArrayBase<A, D>) -> f64
where
    S: Real,
    D: Dimension,
    A: Data<Elem = S>,
{
    let mut acc = 0.0f64;
    for s in scores.iter() {
        let d = s.as_f64() - 1.0;
        acc += d * d;
    }
    acc / scores.len() as f64
}

/// d adv_loss_gen / d scores = 2 (score - 1) / N.
pub fn adv_loss_gen_grad<S, D, A>(scores: &ArrayBase<A, D>) -> ndarray::Array<S, D>
where
    S: Real,
    D: Dimension,
    A: Data<Elem = S>,
{
    let inv = S::from_f64(2.0 / scores.len() as f64);
    scores.map(|&s| (s - S::one()) * inv)
}

/// Discriminator loss: mean of (real - 1)^2 plus mean of fake^2.
pub fn disc_loss<S, D, A, B>(real: &ArrayBase<A, D>, fake: &ArrayBase<B, D>) -> f64
where
    S: Real,
    D: Dimension,
    A: Data<Elem = S>,
    B: Data<Elem = S>,
{
    let mut acc = 0.0f64;
    for r in real.iter() {
        let d = r.as_f64() - 1.0;
        acc += d * d;
    }
    let mut out = acc / real.len() as f64;
    acc = 0.0;
    for f in fake.iter() {
        let v = f.as_f64();
        acc += v * v;
    }
    out += acc / fake.len() as f64;
    out
}

/// Gradients of [`disc_loss`] with respect to both score maps.
pub fn disc_loss_grads<S, D, A, B>(
    real: &ArrayBase<A, D>,
    fake: &ArrayBase<B, D>,
) -> (ndarray::Array<S, D>, ndarray::Array<S, D>)
where
    S: Real,
    D: Dimension,
    A: Data<Elem = S>,
    B: Data<Elem = S>,
{
    let ir = S::from_f64(2.0 / real.len() as f64);
    let i_f = S::from_f64(2.0 / fake.len() as f64);
    (
        real.map(|&r| (r - S::one()) * ir),
        fake.map(|&f| f * i_f),
    )
}

/// Combined generator loss λ_rec·L_rec + λ_adv(n)·L_adv.
pub fn gen_total(l_rec: f64, l_adv: f64, n: u32, w: &LossWeights) -> Result<f64> {
    if l_rec < 0.0 || l_adv < 0.0 {
        return Err(Error::InvalidInput(format!(
            "loss terms must be non-negative (l_rec={l_rec}, l_adv={l_adv})"
        )));
    }
    Ok(w.lambda_rec * l_rec + w.lambda_adv(n)? * l_adv)
}
