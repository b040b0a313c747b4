//! Three-way classification of finite-difference residuals.

use std::fmt;

/// A residual at or below `accept` holds; above `reject` fails; anything
/// in between is inconclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub accept: f64,
    pub reject: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            accept: 1e-4,
            reject: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Holds,
    Fails,
    Inconclusive,
}

impl Thresholds {
    pub fn classify(&self, residual: f64) -> Verdict {
        if !residual.is_finite() {
            Verdict::Inconclusive
        } else if residual <= self.accept {
            Verdict::Holds
        } else if residual > self.reject {
            Verdict::Fails
        } else {
            Verdict::Inconclusive
        }
    }
}

/// Integrability of an almost complex structure as judged by its Nijenhuis tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Integrability {
    Integrable,
    NonIntegrable,
    Inconclusive,
}

impl From<Verdict> for Integrability {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Holds => Self::Integrable,
            Verdict::Fails => Self::NonIntegrable,
            Verdict::Inconclusive => Self::Inconclusive,
        }
    }
}

impl fmt::Display for Integrability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Integrable => "INTEGRABLE",
            Self::NonIntegrable => "NOT_INTEGRABLE",
            Self::Inconclusive => "INCONCLUSIVE",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Harmonicity {
    Harmonic,
    NotHarmonic,
    Inconclusive,
}

impl From<Verdict> for Harmonicity {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Holds => Self::Harmonic,
            Verdict::Fails => Self::NotHarmonic,
            Verdict::Inconclusive => Self::Inconclusive,
        }
    }
}

impl fmt::Display for Harmonicity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Harmonic => "HARMONIC",
            Self::NotHarmonic => "NOT_HARMONIC",
            Self::Inconclusive => "INCONCLUSIVE",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bands() {
        let t = Thresholds::default();
        assert_eq!(t.classify(0.0), Verdict::Holds);
        assert_eq!(t.classify(1e-4), Verdict::Holds);
        assert_eq!(t.classify(1e-3), Verdict::Inconclusive);
        assert_eq!(t.classify(1e-2), Verdict::Inconclusive);
        assert_eq!(t.classify(0.5), Verdict::Fails);
        assert_eq!(t.classify(f64::NAN), Verdict::Inconclusive);
    }
}
