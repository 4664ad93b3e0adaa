use crate::error::{Error, Result};

/// Rows advanced per conditional term during training.
pub const TRAIN_STRIDE: usize = 1;

/// Lower/upper clamp applied to edge probabilities before taking logs.
pub const THETA_CLAMP: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GranConfig {
    /// Rows generated per step (B).
    pub block_size: usize,
    /// Node state width (H).
    pub hidden: usize,
    /// Message-passing rounds (R).
    pub rounds: usize,
    /// Bernoulli mixture components (K).
    pub mixtures: usize,
    /// Row padding width; the largest graph the model can emit.
    pub n_max: usize,
    /// Share one set of round parameters across all rounds.
    pub tie_rounds: bool,
    /// Score every row of each training block instead of only its first row.
    /// Overlapping blocks then count edges more than once.
    pub count_all_block_rows: bool,
}

impl GranConfig {
    /// H=128, K=20, R=7 untied rounds, B=1.
    pub fn paper_grid(n_max: usize) -> Self {
        Self {
            block_size: 1,
            hidden: 128,
            rounds: 7,
            mixtures: 20,
            n_max,
            tie_rounds: false,
            count_all_block_rows: false,
        }
    }

    /// Small model sized for CPU runs in minutes.
    pub fn desk(n_max: usize) -> Self {
        Self {
            block_size: 1,
            hidden: 32,
            rounds: 3,
            mixtures: 20,
            n_max,
            tie_rounds: false,
            count_all_block_rows: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.block_size == 0 {
            return bad("block size must be at least 1".into());
        }
        if self.hidden == 0 {
            return bad("hidden dimension must be at least 1".into());
        }
        if self.rounds == 0 {
            return bad("need at least one message-passing round".into());
        }
        if self.mixtures == 0 {
            return bad("need at least one mixture component".into());
        }
        if self.n_max < self.block_size {
            return bad(format!(
                "n_max {} is smaller than the block size {}",
                self.n_max, self.block_size
            ));
        }
        Ok(())
    }

    /// Number of distinct round parameter sets.
    pub fn round_sets(&self) -> usize {
        if self.tie_rounds {
            1
        } else {
            self.rounds
        }
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        vec![
            ("block_size".into(), self.block_size.to_string()),
            ("hidden".into(), self.hidden.to_string()),
            ("rounds".into(), self.rounds.to_string()),
            ("mixtures".into(), self.mixtures.to_string()),
            ("n_max".into(), self.n_max.to_string()),
            ("tie_rounds".into(), self.tie_rounds.to_string()),
            ("count_all_block_rows".into(), self.count_all_block_rows.to_string()),
        ]
    }

    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let get = |key: &str| -> Result<&str> {
            pairs
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Config(format!("missing model key {key}")))
        };
        let num = |key: &str| -> Result<usize> {
            get(key)?
                .parse()
                .map_err(|e| Error::Config(format!("bad value for {key}: {e}")))
        };
        let flag = |key: &str| -> Result<bool> {
            get(key)?
                .parse()
                .map_err(|e| Error::Config(format!("bad value for {key}: {e}")))
        };
        let cfg = Self {
            block_size: num("block_size")?,
            hidden: num("hidden")?,
            rounds: num("rounds")?,
            mixtures: num("mixtures")?,
            n_max: num("n_max")?,
            tie_rounds: flag("tie_rounds")?,
            count_all_block_rows: flag("count_all_block_rows")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(GranConfig::desk(64).validate().is_ok());
        let mut c = GranConfig::desk(64);
        c.mixtures = 0;
        assert!(c.validate().is_err());
        let mut c = GranConfig::desk(8);
        c.block_size = 16;
        assert!(c.validate().is_err());
    }

    #[test]
    fn pairs_roundtrip() {
        let mut c = GranConfig::paper_grid(400);
        c.tie_rounds = true;
        assert_eq!(GranConfig::from_pairs(&c.to_pairs()).unwrap(), c);
    }
}
