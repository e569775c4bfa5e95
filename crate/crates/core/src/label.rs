use crate::error::{CoreError, Result};

/// Tolerance for the sum-to-one invariant of a [`SoftLabel`].
pub const LABEL_SUM_TOLERANCE: f64 = 1e-12;

/// A probability distribution over the two classes for one sample.
///
/// Class 0 is the negative class, class 1 the positive one. The two
/// probabilities are finite, nonnegative, and sum to 1 within
/// [`LABEL_SUM_TOLERANCE`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftLabel {
    p: [f64; 2],
}

impl SoftLabel {
    pub fn new(p0: f64, p1: f64) -> Result<Self> {
        if !p0.is_finite() || !p1.is_finite() {
            return Err(CoreError::NonFinite("soft label".into()));
        }
        if p0 < 0.0 || p1 < 0.0 {
            return Err(CoreError::InvalidArgument(format!(
                "soft label probabilities must be nonnegative, got [{p0}, {p1}]"
            )));
        }
        if (p0 + p1 - 1.0).abs() > LABEL_SUM_TOLERANCE {
            return Err(CoreError::InvalidArgument(format!(
                "soft label must sum to 1 within {LABEL_SUM_TOLERANCE:e}, got [{p0}, {p1}]"
            )));
        }
        Ok(Self { p: [p0, p1] })
    }

    /// One-hot label for `class` (0 or 1).
    pub fn from_class(class: usize) -> Self {
        match class {
            0 => Self { p: [1.0, 0.0] },
            1 => Self { p: [0.0, 1.0] },
            other => panic!("binary label class out of range: {other}"),
        }
    }

    pub fn p0(&self) -> f64 {
        self.p[0]
    }

    pub fn p1(&self) -> f64 {
        self.p[1]
    }

    pub fn prob(&self, class: usize) -> f64 {
        self.p[class]
    }

    /// Most probable class; an exact tie resolves to class 0.
    pub fn argmax(&self) -> usize {
        if self.p[1] > self.p[0] {
            1
        } else {
            0
        }
    }

    /// True when both probabilities are equal.
    pub fn is_tie(&self) -> bool {
        self.p[0] == self.p[1]
    }

    /// One-hot version of this label under the argmax tie rule.
    pub fn hardened(&self) -> Self {
        Self::from_class(self.argmax())
    }
}
