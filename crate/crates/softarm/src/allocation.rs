//! Control allocation for the antagonistic actuator triplet.
//!
//! Three absolute actuator pressures (p_A, p_B, p_C) are represented by two
//! pairwise differences plus the lower pressure level p̄, and the differences
//! are rotated into decoupled coordinates (Δp_α, Δp_β) aligned with the two
//! arm orientations. The composed map ξ is a bijection, so motion control can
//! act on (Δp_α, Δp_β) while p̄ independently sets the joint stiffness.

use crate::error::{Error, Result};

/// Fixed decoupling matrix, row-major: [Δp_α; Δp_β] = M · [Δp_AB; Δp_BC].
pub const DECOUPLE_MATRIX: [[f64; 2]; 2] = [[0.0, SQRT3_HALF], [-1.0, -0.5]];

const SQRT3_HALF: f64 = 0.866_025_403_784_438_6;
const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Absolute gauge pressures of the three actuators, in bar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbsolutePressures {
    pub p_a: f64,
    pub p_b: f64,
    pub p_c: f64,
}

impl AbsolutePressures {
    pub fn new(p_a: f64, p_b: f64, p_c: f64) -> Self {
        Self { p_a, p_b, p_c }
    }

    pub fn uniform(p: f64) -> Self {
        Self::new(p, p, p)
    }

    pub fn min(&self) -> f64 {
        self.p_a.min(self.p_b).min(self.p_c)
    }

    pub fn max(&self) -> f64 {
        self.p_a.max(self.p_b).max(self.p_c)
    }

    pub fn is_finite(&self) -> bool {
        self.p_a.is_finite() && self.p_b.is_finite() && self.p_c.is_finite()
    }
}

/// Pairwise pressure differences Δp_AB = p_A − p_B and Δp_BC = p_B − p_C.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairwiseDifferences {
    pub dp_ab: f64,
    pub dp_bc: f64,
}

impl PairwiseDifferences {
    pub fn new(dp_ab: f64, dp_bc: f64) -> Self {
        Self { dp_ab, dp_bc }
    }

    pub fn is_finite(&self) -> bool {
        self.dp_ab.is_finite() && self.dp_bc.is_finite()
    }
}

/// Point in the Delta Representation space: the lower pressure level p̄ plus
/// the decoupled differences driving the α and β orientations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaRepresentation {
    pub p_bar: f64,
    pub dp_alpha: f64,
    pub dp_beta: f64,
}

impl DeltaRepresentation {
    pub fn new(p_bar: f64, dp_alpha: f64, dp_beta: f64) -> Self {
        Self {
            p_bar,
            dp_alpha,
            dp_beta,
        }
    }

    pub fn rest(p_bar: f64) -> Self {
        Self::new(p_bar, 0.0, 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.p_bar.is_finite() && self.dp_alpha.is_finite() && self.dp_beta.is_finite()
    }

    /// The mapping itself is total in p̄; callers that care about the
    /// admissible stiffness interval check here and warn or reject.
    pub fn p_bar_in_range(&self, p_bar_min: f64, p_bar_max: f64) -> bool {
        self.p_bar >= p_bar_min && self.p_bar <= p_bar_max
    }
}

/// Pairwise differences and the lower pressure level of an absolute triple.
pub fn differences_from_absolute(p: &AbsolutePressures) -> Result<(PairwiseDifferences, f64)> {
    if !p.is_finite() {
        return Err(Error::invalid("non-finite absolute pressures"));
    }
    Ok((
        PairwiseDifferences::new(p.p_a - p.p_b, p.p_b - p.p_c),
        p.min(),
    ))
}

/// Unique absolute pressures with the given differences whose minimum equals
/// `p_bar`. Written as p̄ plus a nonnegative offset per actuator; at least one
/// offset is exactly zero, so `min` recovers `p_bar` bit-exactly.
pub fn absolute_from_differences(d: &PairwiseDifferences, p_bar: f64) -> Result<AbsolutePressures> {
    if !d.is_finite() || !p_bar.is_finite() {
        return Err(Error::invalid("non-finite pairwise differences or p_bar"));
    }
    let (a, b) = (d.dp_ab, d.dp_bc);
    let o_a = 0f64.max(a).max(a + b);
    let o_b = 0f64.max(b).max(-a);
    let o_c = 0f64.max(-b).max(-(a + b));
    Ok(AbsolutePressures::new(p_bar + o_a, p_bar + o_b, p_bar + o_c))
}

/// Rotate pairwise differences into the decoupled (Δp_α, Δp_β) coordinates.
pub fn decouple(d: &PairwiseDifferences) -> Result<(f64, f64)> {
    if !d.is_finite() {
        return Err(Error::invalid("non-finite pairwise differences"));
    }
    let m = &DECOUPLE_MATRIX;
    Ok((
        m[0][0] * d.dp_ab + m[0][1] * d.dp_bc,
        m[1][0] * d.dp_ab + m[1][1] * d.dp_bc,
    ))
}

/// Exact inverse of [`decouple`].
pub fn recouple(dp_alpha: f64, dp_beta: f64) -> Result<PairwiseDifferences> {
    if !dp_alpha.is_finite() || !dp_beta.is_finite() {
        return Err(Error::invalid("non-finite decoupled differences"));
    }
    Ok(PairwiseDifferences::new(
        -dp_alpha / SQRT3 - dp_beta,
        2.0 * dp_alpha / SQRT3,
    ))
}

/// The bijection ξ from the Delta Representation to absolute pressures.
pub fn xi(delta: &DeltaRepresentation) -> Result<AbsolutePressures> {
    let d = recouple(delta.dp_alpha, delta.dp_beta)?;
    absolute_from_differences(&d, delta.p_bar)
}

/// Inverse of [`xi`].
pub fn xi_inverse(p: &AbsolutePressures) -> Result<DeltaRepresentation> {
    let (d, p_bar) = differences_from_absolute(p)?;
    let (dp_alpha, dp_beta) = decouple(&d)?;
    Ok(DeltaRepresentation::new(p_bar, dp_alpha, dp_beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn differences_identical_pressures() {
        let (d, p_bar) =
            differences_from_absolute(&AbsolutePressures::new(1.0, 1.0, 1.0)).unwrap();
        assert_eq!(d.dp_ab, 0.0);
        assert_eq!(d.dp_bc, 0.0);
        assert_eq!(p_bar, 1.0);
    }

    #[test]
    fn differences_direct_subtraction() {
        let (d, p_bar) =
            differences_from_absolute(&AbsolutePressures::new(1.5, 1.0, 1.2)).unwrap();
        assert_abs_diff_eq!(d.dp_ab, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d.dp_bc, -0.2, epsilon = 1e-15);
        assert_eq!(p_bar, 1.0);

        let (d, p_bar) =
            differences_from_absolute(&AbsolutePressures::new(1.05, 1.35, 1.25)).unwrap();
        assert_abs_diff_eq!(d.dp_ab, -0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(d.dp_bc, 0.1, epsilon = 1e-15);
        assert_eq!(p_bar, 1.05);
    }

    #[test]
    fn differences_reject_non_finite() {
        assert!(differences_from_absolute(&AbsolutePressures::new(f64::NAN, 1.0, 1.0)).is_err());
        assert!(
            differences_from_absolute(&AbsolutePressures::new(1.0, f64::INFINITY, 1.0)).is_err()
        );
    }

    #[test]
    fn absolute_zero_differences() {
        let p = absolute_from_differences(&PairwiseDifferences::new(0.0, 0.0), 1.0).unwrap();
        assert_eq!(p, AbsolutePressures::new(1.0, 1.0, 1.0));
    }

    #[test]
    fn absolute_hand_evaluated() {
        // max(1.0, 1.5, 1.3), max(1.0, 0.8, 0.5), max(1.0, 1.2, 0.7)
        let p = absolute_from_differences(&PairwiseDifferences::new(0.5, -0.2), 1.0).unwrap();
        assert_abs_diff_eq!(p.p_a, 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p.p_b, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.p_c, 1.2, epsilon = 1e-15);

        let p = absolute_from_differences(&PairwiseDifferences::new(-0.3, 0.1), 1.05).unwrap();
        assert_abs_diff_eq!(p.p_a, 1.05, epsilon = 1e-15);
        assert_abs_diff_eq!(p.p_b, 1.35, epsilon = 1e-15);
        assert_abs_diff_eq!(p.p_c, 1.25, epsilon = 1e-15);
    }

    #[test]
    fn decouple_matrix_columns() {
        assert_eq!(decouple(&PairwiseDifferences::new(0.0, 0.0)).unwrap(), (0.0, 0.0));
        let (da, db) = decouple(&PairwiseDifferences::new(1.0, 0.0)).unwrap();
        assert_eq!((da, db), (0.0, -1.0));
        let (da, db) = decouple(&PairwiseDifferences::new(0.0, 1.0)).unwrap();
        assert_abs_diff_eq!(da, 3f64.sqrt() / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(db, -0.5, epsilon = 1e-15);
    }

    #[test]
    fn recouple_inverts_decouple_examples() {
        let d = recouple(3f64.sqrt() / 2.0, -0.5).unwrap();
        assert_abs_diff_eq!(d.dp_ab, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.dp_bc, 1.0, epsilon = 1e-15);

        let d = recouple(0.0, -1.0).unwrap();
        assert_abs_diff_eq!(d.dp_ab, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.dp_bc, 0.0, epsilon = 1e-15);

        assert_eq!(recouple(0.0, 0.0).unwrap(), PairwiseDifferences::new(0.0, 0.0));
    }

    #[test]
    fn xi_rest_point() {
        let p = xi(&DeltaRepresentation::new(1.05, 0.0, 0.0)).unwrap();
        assert_eq!(p, AbsolutePressures::new(1.05, 1.05, 1.05));
    }

    // Hand composition: recouple(√3/2, −1/2) = (0, 1), then the max-form
    // gives p_A = max(1,1,2) = 2, p_B = max(1,2,1) = 2, p_C = max(1,0,0) = 1.
    #[test]
    fn xi_hand_composition() {
        let p = xi(&DeltaRepresentation::new(1.0, 3f64.sqrt() / 2.0, -0.5)).unwrap();
        assert_abs_diff_eq!(p.p_a, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.p_b, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.p_c, 1.0, epsilon = 1e-15);
        assert_eq!(p.min(), 1.0);
    }

    #[test]
    fn xi_inverse_rest_and_composed() {
        let d = xi_inverse(&AbsolutePressures::new(1.0, 1.0, 1.0)).unwrap();
        assert_eq!(d, DeltaRepresentation::new(1.0, 0.0, 0.0));

        // (1.5, 1.0, 1.2): p̄ = 1.0 plus decouple(0.5, −0.2).
        let d = xi_inverse(&AbsolutePressures::new(1.5, 1.0, 1.2)).unwrap();
        let (exp_a, exp_b) = decouple(&PairwiseDifferences::new(0.5, -0.2)).unwrap();
        assert_eq!(d.p_bar, 1.0);
        assert_abs_diff_eq!(d.dp_alpha, exp_a, epsilon = 1e-15);
        assert_abs_diff_eq!(d.dp_beta, exp_b, epsilon = 1e-15);
    }

    proptest! {
        // ξ⁻¹ ∘ ξ = identity, floor constraint, and difference recovery.
        #[test]
        fn prop_round_trip(
            p_bar in 0.5f64..2.0,
            dp_alpha in -1.0f64..1.0,
            dp_beta in -1.0f64..1.0,
        ) {
            let x = DeltaRepresentation::new(p_bar, dp_alpha, dp_beta);
            let p = xi(&x).unwrap();
            prop_assert_eq!(p.min(), p_bar); // floor is bit-exact by construction
            prop_assert!(p.p_a >= p_bar && p.p_b >= p_bar && p.p_c >= p_bar);
            prop_assert!(p.p_a == p_bar || p.p_b == p_bar || p.p_c == p_bar);

            let y = xi_inverse(&p).unwrap();
            prop_assert!((y.p_bar - x.p_bar).abs() <= 1e-12);
            prop_assert!((y.dp_alpha - x.dp_alpha).abs() <= 1e-12);
            prop_assert!((y.dp_beta - x.dp_beta).abs() <= 1e-12);
        }

        #[test]
        fn prop_difference_recovery(
            dp_ab in -1.0f64..1.0,
            dp_bc in -1.0f64..1.0,
            p_bar in 0.5f64..2.0,
        ) {
            let d = PairwiseDifferences::new(dp_ab, dp_bc);
            let p = absolute_from_differences(&d, p_bar).unwrap();
            prop_assert!((p.p_a - p.p_b - dp_ab).abs() <= 1e-12);
            prop_assert!((p.p_b - p.p_c - dp_bc).abs() <= 1e-12);
            let (d2, pb2) = differences_from_absolute(&p).unwrap();
            prop_assert!((d2.dp_ab - dp_ab).abs() <= 1e-12);
            prop_assert!((d2.dp_bc - dp_bc).abs() <= 1e-12);
            prop_assert_eq!(pb2, p_bar);
        }

        // decouple and recouple are linear maps.
        #[test]
        fn prop_linearity(
            a1 in -1.0f64..1.0, b1 in -1.0f64..1.0,
            a2 in -1.0f64..1.0, b2 in -1.0f64..1.0,
            s in -2.0f64..2.0,
        ) {
            let d1 = PairwiseDifferences::new(a1, b1);
            let d2 = PairwiseDifferences::new(a2, b2);
            let sum = PairwiseDifferences::new(a1 + a2, b1 + b2);
            let (xa, xb) = decouple(&d1).unwrap();
            let (ya, yb) = decouple(&d2).unwrap();
            let (sa, sb) = decouple(&sum).unwrap();
            prop_assert!((sa - (xa + ya)).abs() <= 1e-12);
            prop_assert!((sb - (xb + yb)).abs() <= 1e-12);

            let scaled = PairwiseDifferences::new(s * a1, s * b1);
            let (za, zb) = decouple(&scaled).unwrap();
            prop_assert!((za - s * xa).abs() <= 1e-12);
            prop_assert!((zb - s * xb).abs() <= 1e-12);

            let r = recouple(xa + ya, xb + yb).unwrap();
            prop_assert!((r.dp_ab - (a1 + a2)).abs() <= 1e-12);
            prop_assert!((r.dp_bc - (b1 + b2)).abs() <= 1e-12);
        }
    }
}
