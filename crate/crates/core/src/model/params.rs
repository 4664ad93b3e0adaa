use rand::Rng;

use super::config::GranConfig;
use crate::autodiff::{Checkpoint, Gru, Linear, Mlp, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Parameters of one message-passing round.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundParams<T> {
    /// Message function on `h_i − h_j`.
    pub msg: Mlp<T>,
    /// Attention logit on `[h_i − h_j, x_i − x_j]`.
    pub att: Mlp<T>,
    pub gru: Gru<T>,
}

impl<T> RoundParams<T> {
    pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> RoundParams<U> {
        RoundParams {
            msg: self.msg.map(f),
            att: self.att.map(f),
            gru: self.gru.map(f),
        }
    }

    pub fn visit<'a>(&'a self, prefix: &str, f: &mut impl FnMut(String, &'a T)) {
        self.msg.visit(&format!("{prefix}.msg"), f);
        self.att.visit(&format!("{prefix}.att"), f);
        self.gru.visit(&format!("{prefix}.gru"), f);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut impl FnMut(String, &mut T)) {
        self.msg.visit_mut(&format!("{prefix}.msg"), f);
        self.att.visit_mut(&format!("{prefix}.att"), f);
        self.gru.visit_mut(&format!("{prefix}.gru"), f);
    }
}

/// All learnable weights, generic over the leaf type (`Tensor` or `Var`).
#[derive(Clone, Debug, PartialEq)]
pub struct GranParamsOf<T> {
    /// Row embedding, `[n_max, H]`.
    pub embed: Linear<T>,
    pub rounds: Vec<RoundParams<T>>,
    pub alpha: Mlp<T>,
    pub theta: Mlp<T>,
}

pub type GranParams = GranParamsOf<Tensor>;

impl GranParams {
    pub fn init<R: Rng + ?Sized>(config: &GranConfig, rng: &mut R) -> Self {
        let h = config.hidden;
        let b = config.block_size;
        let k = config.mixtures;
        let embed = Linear::init(config.n_max, h, rng);
        let rounds = (0..config.round_sets())
            .map(|_| RoundParams {
                msg: Mlp::init(h, h, h, rng),
                att: Mlp::init(h + b, h, 1, rng),
                gru: Gru::init(h, h, rng),
            })
            .collect();
        Self {
            embed,
            rounds,
            alpha: Mlp::init(h, h, k, rng),
            theta: Mlp::init(h, h, k, rng),
        }
    }

    pub fn zeros(config: &GranConfig) -> Self {
        let h = config.hidden;
        let b = config.block_size;
        let k = config.mixtures;
        Self {
            embed: Linear::zeros(config.n_max, h),
            rounds: (0..config.round_sets())
                .map(|_| RoundParams {
                    msg: Mlp::zeros(h, h, h),
                    att: Mlp::zeros(h + b, h, 1),
                    gru: Gru::zeros(h, h),
                })
                .collect(),
            alpha: Mlp::zeros(h, h, k),
            theta: Mlp::zeros(h, h, k),
        }
    }

    /// Places every weight on the tape; `trainable` decides whether they
    /// collect gradients.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> GranParamsOf<Var> {
        self.map(&mut |t: &Tensor| {
            if trainable {
                tape.param(t)
            } else {
                tape.constant(t.clone())
            }
        })
    }

    pub fn num_scalars(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t| n += t.numel());
        n
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut v = Vec::new();
        self.visit(&mut |_, t| v.push(t.numel()));
        v
    }

    pub fn named(&self) -> Vec<(String, Tensor)> {
        let mut v = Vec::new();
        self.visit(&mut |n, t| v.push((n, t.clone())));
        v
    }

    /// Refills every weight from `lookup`, checking shapes.
    pub fn load_from(&mut self, lookup: impl Fn(&str) -> Option<Tensor>) -> Result<()> {
        let mut err = None;
        self.visit_mut(&mut |name, t| {
            if err.is_some() {
                return;
            }
            match lookup(&name) {
                Some(src) if src.shape() == t.shape() => *t = src,
                Some(src) => {
                    err = Some(Error::Config(format!(
                        "parameter {name}: stored shape {:?}, expected {:?}",
                        src.shape(),
                        t.shape()
                    )))
                }
                None => err = Some(Error::Config(format!("parameter {name} missing"))),
            }
        });
        err.map_or(Ok(()), Err)
    }

    pub fn from_checkpoint(config: &GranConfig, ck: &Checkpoint) -> Result<Self> {
        let mut p = Self::zeros(config);
        p.load_from(|name| ck.tensor(&format!("param.{name}")).cloned())?;
        Ok(p)
    }
}

impl<T> GranParamsOf<T> {
    /// Round parameters used at round `r`.
    pub fn round(&self, r: usize) -> &RoundParams<T> {
        if self.rounds.len() == 1 {
            &self.rounds[0]
        } else {
            &self.rounds[r]
        }
    }

    pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> GranParamsOf<U> {
        GranParamsOf {
            embed: self.embed.map(f),
            rounds: self.rounds.iter().map(|r| r.map(f)).collect(),
            alpha: self.alpha.map(f),
            theta: self.theta.map(f),
        }
    }

    /// Visits leaves in a fixed order shared by gradients, optimizer state
    /// and checkpoints.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(String, &'a T)) {
        self.embed.visit("embed", f);
        for (i, r) in self.rounds.iter().enumerate() {
            r.visit(&format!("round.{i}"), f);
        }
        self.alpha.visit("alpha", f);
        self.theta.visit("theta", f);
    }

    pub fn visit_mut(&mut self, f: &mut impl FnMut(String, &mut T)) {
        self.embed.visit_mut("embed", f);
        for (i, r) in self.rounds.iter_mut().enumerate() {
            r.visit_mut(&format!("round.{i}"), f);
        }
        self.alpha.visit_mut("alpha", f);
        self.theta.visit_mut("theta", f);
    }

    pub fn leaves(&self) -> Vec<&T> {
        let mut v = Vec::new();
        self.visit(&mut |_, t| v.push(t));
        v
    }

    pub fn leaves_mut(&mut self) -> Vec<&mut T> {
        let mut v: Vec<*mut T> = Vec::new();
        self.visit_mut(&mut |_, t| v.push(t as *mut T));
        // SAFETY: every leaf is a distinct field, visited exactly once, and
        // the returned borrows share the lifetime of `&mut self`.
        v.into_iter().map(|p| unsafe { &mut *p }).collect()
    }
}
