use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Transmitter identity. Class 0 is the legitimate transmitter, class 1 the
/// spoofer. The classifier works on signs: class 0 ↔ −1, class 1 ↔ +1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Identity {
    Alice,
    Eve,
}

impl Identity {
    pub fn class(self) -> u8 {
        match self {
            Identity::Alice => 0,
            Identity::Eve => 1,
        }
    }

    pub fn from_class(class: u8) -> Result<Self> {
        match class {
            0 => Ok(Identity::Alice),
            1 => Ok(Identity::Eve),
            c => Err(Error::InvalidInput(format!("identity class {c} is not 0 or 1"))),
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Identity::Alice => -1.0,
            Identity::Eve => 1.0,
        }
    }

    pub fn from_sign(sign: f64) -> Self {
        if sign > 0.0 {
            Identity::Eve
        } else {
            Identity::Alice
        }
    }
}

impl From<Identity> for u8 {
    fn from(id: Identity) -> u8 {
        id.class()
    }
}

impl TryFrom<u8> for Identity {
    type Error = Error;
    fn try_from(class: u8) -> Result<Self> {
        Identity::from_class(class)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_sign_bijection() {
        for id in [Identity::Alice, Identity::Eve] {
            assert_eq!(Identity::from_class(id.class()).unwrap(), id);
            assert_eq!(Identity::from_sign(id.sign()), id);
        }
        assert_eq!(Identity::Alice.sign(), -1.0);
        assert_eq!(Identity::Eve.sign(), 1.0);
        assert!(Identity::from_class(2).is_err());
    }
}
