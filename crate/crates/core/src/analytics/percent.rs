use std::fmt;

use serde::{Deserialize, Serialize, Serializer};

use super::AnalyticsError;

/// How a share is turned into a displayed percentage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PercentMode {
    /// floor to one decimal
    Truncate1,
    /// floor to two decimals
    #[default]
    Truncate2,
    /// round half up to two decimals
    Round2,
}

impl PercentMode {
    fn decimals(self) -> u32 {
        match self {
            PercentMode::Truncate1 => 1,
            PercentMode::Truncate2 | PercentMode::Round2 => 2,
        }
    }
}

/// A fixed-point percentage: `scaled / 10^decimals` percent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Percent {
    scaled: u64,
    decimals: u32,
}

impl Percent {
    pub fn zero(mode: PercentMode) -> Self {
        Percent {
            scaled: 0,
            decimals: mode.decimals(),
        }
    }

    /// Value in units of 10^-decimals percent.
    pub fn scaled(&self) -> u64 {
        self.scaled
    }

    pub fn decimals(&self) -> u32 {
        self.decimals
    }

    pub fn as_f64(&self) -> f64 {
        self.scaled as f64 / 10u64.pow(self.decimals) as f64
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let unit = 10u64.pow(self.decimals);
        write!(
            f,
            "{}.{:0width$}",
            self.scaled / unit,
            self.scaled % unit,
            width = self.decimals as usize
        )
    }
}

impl Serialize for Percent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

/// `count / base` as a percentage, computed in integers so truncation is
/// exact.
pub fn percent(count: u64, base: u64, mode: PercentMode) -> Result<Percent, AnalyticsError> {
    if base == 0 {
        return Err(AnalyticsError::ZeroBase);
    }
    let decimals = mode.decimals();
    let num = count as u128 * 100 * 10u128.pow(decimals);
    let base = base as u128;
    let scaled = match mode {
        PercentMode::Truncate1 | PercentMode::Truncate2 => num / base,
        PercentMode::Round2 => (2 * num + base) / (2 * base),
    };
    Ok(Percent {
        scaled: scaled as u64,
        decimals,
    })
}
