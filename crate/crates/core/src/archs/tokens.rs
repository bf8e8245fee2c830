use std::fmt;

use crate::error::{Error, Result};

/// Speech duration covered by one token, held as an exact ratio of
/// milliseconds so that resolutions like 40/3 ms count tokens exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TokenResolution {
    numer: u64,
    denom: u64,
}

impl TokenResolution {
    pub const fn from_ms(ms: u64) -> Self {
        Self { numer: ms, denom: 1 }
    }

    pub fn from_ratio(numer: u64, denom: u64) -> Result<Self> {
        if numer == 0 || denom == 0 {
            return Err(Error::Usage("token resolution must be positive".into()));
        }
        let g = gcd(numer, denom);
        Ok(Self { numer: numer / g, denom: denom / g })
    }

    /// Recover an exact ratio from a decimal such as `13.333333333333334`,
    /// trying small denominators first.
    pub fn from_ms_f64(ms: f64) -> Result<Self> {
        if !(ms.is_finite() && ms > 0.0) {
            return Err(Error::Usage(format!("token resolution must be positive, got {ms}")));
        }
        for denom in 1..=1000u64 {
            let n = ms * denom as f64;
            if (n - n.round()).abs() < 1e-6 * denom as f64 {
                return Self::from_ratio(n.round() as u64, denom);
            }
        }
        Err(Error::Usage(format!("token resolution {ms} ms is not a simple fraction")))
    }

    pub fn ms(&self) -> f64 {
        self.numer as f64 / self.denom as f64
    }

    pub fn numer(&self) -> u64 {
        self.numer
    }

    pub fn denom(&self) -> u64 {
        self.denom
    }
}

impl fmt::Display for TokenResolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denom == 1 {
            write!(f, "{}", self.numer)
        } else {
            write!(f, "{}/{}", self.numer, self.denom)
        }
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// `floor(duration / resolution)` tokens. The duration is rounded to whole
/// microseconds and the division done in integers.
pub fn tokens_for_duration(duration_ms: f64, res: TokenResolution) -> Result<usize> {
    if !(duration_ms.is_finite() && duration_ms > 0.0) {
        return Err(Error::Usage(format!("duration must be positive, got {duration_ms} ms")));
    }
    let us = (duration_ms * 1000.0).round() as u128;
    Ok((us * res.denom as u128 / (res.numer as u128 * 1000)) as usize)
}

pub fn tokens_for_seconds(seconds: f64, res: TokenResolution) -> Result<usize> {
    tokens_for_duration(seconds * 1000.0, res)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_seconds() {
        assert_eq!(tokens_for_duration(10_000.0, TokenResolution::from_ms(1)).unwrap(), 10_000);
        assert_eq!(tokens_for_duration(10_000.0, TokenResolution::from_ms(40)).unwrap(), 250);
        let r = TokenResolution::from_ratio(40, 3).unwrap();
        assert_eq!(tokens_for_duration(10_000.0, r).unwrap(), 750);
        assert_eq!(tokens_for_seconds(10.0, r).unwrap(), 750);
    }

    #[test]
    fn decimal_resolutions_become_exact() {
        assert_eq!(TokenResolution::from_ms_f64(40.0 / 3.0).unwrap(), TokenResolution::from_ratio(40, 3).unwrap());
        assert_eq!(TokenResolution::from_ms_f64(13.333333333333334).unwrap().to_string(), "40/3");
        assert_eq!(TokenResolution::from_ms_f64(40.0).unwrap(), TokenResolution::from_ms(40));
        assert!(TokenResolution::from_ms_f64(0.0).is_err());
    }

    #[test]
    fn non_positive_rejected() {
        let r = TokenResolution::from_ms(1);
        assert!(tokens_for_duration(0.0, r).unwrap_err().is_usage());
        assert!(tokens_for_duration(-5.0, r).is_err());
        assert_eq!(tokens_for_duration(0.5, r).unwrap(), 0);
    }
}
