use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{DiqpError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Codec {
    Hevc,
    Av1,
    Synthetic,
}

impl fmt::Display for Codec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Codec::Hevc => "hevc",
            Codec::Av1 => "av1",
            Codec::Synthetic => "synthetic",
        })
    }
}

impl FromStr for Codec {
    type Err = DiqpError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hevc" | "h265" | "x265" => Ok(Codec::Hevc),
            "av1" => Ok(Codec::Av1),
            "synthetic" => Ok(Codec::Synthetic),
            other => Err(DiqpError::Config(format!(
                "unknown codec `{other}` (expected hevc, av1 or synthetic)"
            ))),
        }
    }
}

impl Codec {
    pub fn qp_max(self, synthetic_max: u32) -> u32 {
        match self {
            Codec::Hevc => 51,
            Codec::Av1 => 255,
            Codec::Synthetic => synthetic_max,
        }
    }
}

/// `3, 6, ..., max`.
pub fn enumerate_qp_levels(codec: Codec, synthetic_max: u32) -> Result<Vec<u32>> {
    let max = codec.qp_max(synthetic_max);
    if max < 3 {
        return Err(DiqpError::Config(format!("{codec} QP maximum {max} is below 3")));
    }
    Ok((3..=max).step_by(3).collect())
}
