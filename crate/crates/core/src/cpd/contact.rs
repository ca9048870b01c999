use serde::{Deserialize, Serialize};

use crate::geometry::{perimeter_fraction_within, OrientedBox};

/// How a donor-recipient pair's geometry maps to a relative conjugation propensity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ContactFn {
    /// 1 if any part of the recipient is within range of the donor, else 0.
    Base,
    /// Fraction of the recipient's perimeter within range of the donor.
    Edge,
}

impl ContactFn {
    pub fn name(self) -> &'static str {
        match self {
            ContactFn::Base => "Base",
            ContactFn::Edge => "Edge",
        }
    }
}

/// Unnormalised conjugation weight for `donor -> recipient`, in `[0, 1]`.
pub fn contact_raw_weight(donor: &OrientedBox, recipient: &OrientedBox, func: ContactFn, range: f64) -> f64 {
    contact_raw_weight_with_separation(donor, recipient, func, range, donor.separation(recipient))
}

/// Same as [`contact_raw_weight`] with the box separation already known.
pub fn contact_raw_weight_with_separation(
    donor: &OrientedBox,
    recipient: &OrientedBox,
    func: ContactFn,
    range: f64,
    separation: f64,
) -> f64 {
    if separation > range {
        return 0.0;
    }
    match func {
        ContactFn::Base => 1.0,
        ContactFn::Edge => perimeter_fraction_within(recipient, donor, range),
    }
}
