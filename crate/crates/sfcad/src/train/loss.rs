//! Binary cross-entropy on extracted probabilities.

use crate::error::{Error, Result};

/// `J = -y ln(p) - (1-y) ln(1-p)`. The training path computes the same
/// quantity from the logit on the tape; this form serves reporting and
/// verification against extracted probabilities.
pub fn bce_loss(y: u8, p: f64) -> Result<f64> {
    if y > 1 {
        return Err(Error::Contract(format!("label must be 0 or 1, got {y}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Contract(format!(
            "probability {p} outside [0,1]"
        )));
    }
    // ln(1-p) via ln_1p(-p) keeps precision for small p
    Ok(if y == 1 { -p.ln() } else { -(-p).ln_1p() })
}
