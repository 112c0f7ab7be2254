use std::fmt;
use std::ops::{Div, Mul};

use serde::{Deserialize, Serialize};

/// Physical dimension as integer exponents over the base dimensions
/// length and time. Velocity is `L·T⁻¹`, acceleration `L·T⁻²`, and a
/// plain number is the all-zero vector.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct Dimension {
    pub length: i8,
    pub time: i8,
}

impl Dimension {
    pub const DIMENSIONLESS: Dimension = Dimension { length: 0, time: 0 };
    pub const LENGTH: Dimension = Dimension { length: 1, time: 0 };
    pub const TIME: Dimension = Dimension { length: 0, time: 1 };
    pub const VELOCITY: Dimension = Dimension { length: 1, time: -1 };
    pub const ACCELERATION: Dimension = Dimension { length: 1, time: -2 };

    pub fn is_dimensionless(self) -> bool {
        self == Self::DIMENSIONLESS
    }

    /// Dimension of the reciprocal, e.g. the sharpness parameter of a
    /// logistic threshold over a velocity feature carries `T·L⁻¹`.
    pub fn inverse(self) -> Dimension {
        Dimension { length: -self.length, time: -self.time }
    }
}

impl Mul for Dimension {
    type Output = Dimension;
    fn mul(self, rhs: Dimension) -> Dimension {
        Dimension { length: self.length + rhs.length, time: self.time + rhs.time }
    }
}

impl Div for Dimension {
    type Output = Dimension;
    fn div(self, rhs: Dimension) -> Dimension {
        Dimension { length: self.length - rhs.length, time: self.time - rhs.time }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_dimensionless() {
            return write!(f, "1");
        }
        let mut first = true;
        for (sym, exp) in [("L", self.length), ("T", self.time)] {
            if exp == 0 {
                continue;
            }
            if !first {
                write!(f, "·")?;
            }
            first = false;
            if exp == 1 {
                write!(f, "{sym}")?;
            } else {
                write!(f, "{sym}^{exp}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_adds_exponents() {
        assert_eq!(Dimension::LENGTH / Dimension::TIME, Dimension::VELOCITY);
        assert_eq!(Dimension::VELOCITY / Dimension::TIME, Dimension::ACCELERATION);
        assert_eq!(Dimension::VELOCITY * Dimension::TIME, Dimension::LENGTH);
        assert_eq!(
            Dimension::VELOCITY * Dimension::VELOCITY / Dimension::ACCELERATION,
            Dimension::LENGTH
        );
    }

    #[test]
    fn inverse_negates() {
        assert_eq!(Dimension::VELOCITY.inverse(), Dimension { length: -1, time: 1 });
        assert_eq!(Dimension::DIMENSIONLESS.inverse(), Dimension::DIMENSIONLESS);
    }

    #[test]
    fn display_forms() {
        assert_eq!(Dimension::DIMENSIONLESS.to_string(), "1");
        assert_eq!(Dimension::VELOCITY.to_string(), "L·T^-1");
        assert_eq!(Dimension::LENGTH.to_string(), "L");
    }
}
