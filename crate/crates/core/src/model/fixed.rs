//! Frozen cores that turn the block term model into classic bilinear models.

use crate::score::CoreTensor;

/// Interaction pattern of a frozen core.
///
/// | pattern  | `C_e` | `C_r` | matching block          |
/// |----------|-------|-------|-------------------------|
/// | DistMult | 1     | 1     | `[r]`                   |
/// | ComplEx  | 2     | 2     | `[[r₁, −r₂], [r₂, r₁]]` |
/// | SimplE   | 2     | 2     | `[[0, r], [rᵃ, 0]]`     |
/// | CP       | 2     | 2     | `[[0, r], [0, 0]]`      |
///
/// A ComplEx partition holds the real and imaginary part of one complex
/// entry; a SimplE/CP partition holds entry `k` of the head-role and the
/// tail-role embedding, and for SimplE the second relation component is the
/// inverse-relation entry `rᵃ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FixedPattern {
    DistMult,
    ComplEx,
    SimplE,
    Cp,
}

impl FixedPattern {
    pub const ALL: [FixedPattern; 4] = [
        FixedPattern::DistMult,
        FixedPattern::ComplEx,
        FixedPattern::SimplE,
        FixedPattern::Cp,
    ];

    /// `(C_e, C_r)` required by the pattern.
    pub fn widths(self) -> (usize, usize) {
        match self {
            FixedPattern::DistMult => (1, 1),
            _ => (2, 2),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FixedPattern::DistMult => "distmult",
            FixedPattern::ComplEx => "complex",
            FixedPattern::SimplE => "simple",
            FixedPattern::Cp => "cp",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        let lower = name.to_ascii_lowercase();
        FixedPattern::ALL.into_iter().find(|p| p.name() == lower)
    }

    pub fn core(self) -> CoreTensor {
        make_fixed_core(self)
    }
}

pub fn make_fixed_core(pattern: FixedPattern) -> CoreTensor {
    let (ce, cr) = pattern.widths();
    let mut w = CoreTensor::zeros(ce, cr);
    match pattern {
        FixedPattern::DistMult => w.set(0, 0, 0, 1.0),
        FixedPattern::ComplEx => {
            w.set(0, 0, 0, 1.0);
            w.set(0, 1, 1, -1.0);
            w.set(1, 0, 1, 1.0);
            w.set(1, 1, 0, 1.0);
        }
        FixedPattern::SimplE => {
            w.set(0, 1, 0, 1.0);
            w.set(1, 0, 1, 1.0);
        }
        FixedPattern::Cp => w.set(0, 1, 0, 1.0),
    }
    w
}
