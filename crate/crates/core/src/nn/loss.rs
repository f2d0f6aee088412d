//! Binary cross-entropy on logits.

use super::tape::{bce_value, sigmoid};
use crate::{Error, Result};

/// Loss and its derivative with respect to the logit.
pub fn bce_loss(logit: f64, label: u8) -> Result<(f64, f64)> {
    if label > 1 {
        return Err(Error::arg("label must be 0 or 1"));
    }
    if !logit.is_finite() {
        return Err(Error::NonFinite("logit".into()));
    }
    let y = label as f64;
    Ok((bce_value(logit, y), sigmoid(logit) - y))
}
