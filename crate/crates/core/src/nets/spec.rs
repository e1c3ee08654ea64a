use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::SgdSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    LstmAcd,
    AttnLstmAcd,
}

/// The five models of the experiment design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Acd,
    LstmAcd,
    AttnLstmAcd,
    LstmAcdM,
    AttnLstmAcdM,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Acd,
        ModelKind::LstmAcd,
        ModelKind::AttnLstmAcd,
        ModelKind::LstmAcdM,
        ModelKind::AttnLstmAcdM,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Acd => "acd",
            ModelKind::LstmAcd => "lstm_acd",
            ModelKind::AttnLstmAcd => "attn_lstm_acd",
            ModelKind::LstmAcdM => "lstm_acd_m",
            ModelKind::AttnLstmAcdM => "attn_lstm_acd_m",
        }
    }

    /// Display name as used in comparison tables.
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Acd => "ACD",
            ModelKind::LstmAcd => "LSTM-ACD",
            ModelKind::AttnLstmAcd => "Attention-LSTM-ACD",
            ModelKind::LstmAcdM => "LSTM-ACD (M)",
            ModelKind::AttnLstmAcdM => "Attention-LSTM-ACD (M)",
        }
    }

    /// Default architecture, `None` for the classic ACD.
    pub fn hybrid_spec(self) -> Option<HybridModelSpec> {
        let (variant, features) = match self {
            ModelKind::Acd => return None,
            ModelKind::LstmAcd => (Variant::LstmAcd, 1),
            ModelKind::AttnLstmAcd => (Variant::AttnLstmAcd, 1),
            ModelKind::LstmAcdM => (Variant::LstmAcd, 3),
            ModelKind::AttnLstmAcdM => (Variant::AttnLstmAcd, 3),
        };
        Some(HybridModelSpec::new(variant, features))
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<_> = ModelKind::ALL.iter().map(|k| k.name()).collect();
            Error::InvalidArgument(format!("unknown model {s:?}; valid models: {}", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HybridModelSpec {
    pub variant: Variant,
    /// 1 (duration only) or 3 (duration, volume, side code).
    pub input_features: usize,
    pub timesteps: usize,
    pub hidden: usize,
    pub attention_size: Option<usize>,
    pub dense_hidden: usize,
}

impl HybridModelSpec {
    /// 50 timesteps, 5 LSTM units, attention size 2, 2 dense units.
    pub fn new(variant: Variant, input_features: usize) -> Self {
        HybridModelSpec {
            variant,
            input_features,
            timesteps: 50,
            hidden: 5,
            attention_size: (variant == Variant::AttnLstmAcd).then_some(2),
            dense_hidden: 2,
        }
    }

    pub fn kind(&self) -> ModelKind {
        match (self.variant, self.input_features > 1) {
            (Variant::LstmAcd, false) => ModelKind::LstmAcd,
            (Variant::AttnLstmAcd, false) => ModelKind::AttnLstmAcd,
            (Variant::LstmAcd, true) => ModelKind::LstmAcdM,
            (Variant::AttnLstmAcd, true) => ModelKind::AttnLstmAcdM,
        }
    }

    /// Features plus the fed-back `ln μ̂`.
    pub fn lstm_input(&self) -> usize {
        self.input_features + 1
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.input_features, 1 | 3) {
            return Err(Error::InvalidArgument(format!(
                "input features must be 1 or 3, got {}",
                self.input_features
            )));
        }
        if self.timesteps == 0 || self.hidden == 0 || self.dense_hidden == 0 {
            return Err(Error::InvalidArgument("model dimensions must be positive".into()));
        }
        match (self.variant, self.attention_size) {
            (Variant::AttnLstmAcd, Some(a)) if a > 0 => Ok(()),
            (Variant::LstmAcd, None) => Ok(()),
            _ => Err(Error::InvalidArgument(
                "attention size is required for, and only for, attention variants".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub schedule: SgdSchedule,
    /// Validation cadence in training steps.
    pub eval_every: u64,
    /// Consecutive non-improving evaluations tolerated before stopping.
    pub patience: usize,
    pub max_steps: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 300,
            schedule: SgdSchedule::default(),
            eval_every: 100,
            patience: 10,
            max_steps: 20_000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.batch_size == 0 || self.eval_every == 0 || self.patience == 0 || self.max_steps == 0 {
            return Err(Error::InvalidArgument("training settings must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
            if let Some(spec) = k.hybrid_spec() {
                assert_eq!(spec.kind(), k);
                spec.validate().unwrap();
            }
        }
        let err = "garch".parse::<ModelKind>().unwrap_err().to_string();
        assert!(err.contains("attn_lstm_acd_m"));
    }

    #[test]
    fn input_widths() {
        assert_eq!(ModelKind::AttnLstmAcdM.hybrid_spec().unwrap().lstm_input(), 4);
        assert_eq!(ModelKind::LstmAcd.hybrid_spec().unwrap().lstm_input(), 2);
    }

    #[test]
    fn attention_size_iff_attention() {
        let mut s = HybridModelSpec::new(Variant::LstmAcd, 1);
        s.attention_size = Some(2);
        assert!(s.validate().is_err());
        let mut a = HybridModelSpec::new(Variant::AttnLstmAcd, 3);
        a.attention_size = None;
        assert!(a.validate().is_err());
    }
}
