//! Distances in descriptor space.

use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

/// Distance used both for relevance (KNN) and inside the similarity kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Euclidean,
    Manhattan,
}

impl Metric {
    /// Distance between equal-length slices. Callers guarantee the lengths.
    #[inline]
    pub(crate) fn eval(self, u: &[f64], v: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), v.len());
        match self {
            Metric::Euclidean => {
                let sq: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
                libm::sqrt(sq)
            }
            Metric::Manhattan => u.iter().zip(v).map(|(a, b)| libm::fabs(a - b)).sum(),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Euclidean => "euclidean",
            Metric::Manhattan => "manhattan",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "euclidean" | "l2" => Ok(Metric::Euclidean),
            "manhattan" | "l1" => Ok(Metric::Manhattan),
            other => Err(Error::InvalidParameter(alloc::format!("unknown metric `{other}`"))),
        }
    }
}

/// L2 or L1 distance between two vectors of equal dimension.
pub fn distance(u: &[f64], v: &[f64], metric: Metric) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            id: alloc::string::String::from("<vector>"),
            expected: u.len(),
            found: v.len(),
        });
    }
    Ok(metric.eval(u, v))
}
