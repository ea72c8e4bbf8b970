//! Spike projector: continuous fluxes ↔ signed integer spike counts.

use crate::domain::{FaceField, Grid, QuotaParam, SpikeField};
use crate::error::{Error, Result};

/// Largest |n| representable exactly in binary64.
pub const MAX_QUANTA: f64 = 9_007_199_254_740_992.0;

/// Quantizes one flux value. Rounds half away from zero, then nudges by one
/// quantum if floating-point rounding of `flux / quota` left the
/// reconstruction more than half a quantum away.
#[inline]
pub fn quantize_value(flux: f64, quota: f64) -> Option<i64> {
    let ratio = flux / quota;
    if !ratio.is_finite() || ratio.abs() > MAX_QUANTA {
        return None;
    }
    let mut n = ratio.round();
    let half = 0.5 * quota;
    let err = n * quota - flux;
    if err > half {
        n -= 1.0;
    } else if err < -half {
        n += 1.0;
    }
    Some(n as i64)
}

fn quantize_slice(flux: &[f64], quota: f64, out: &mut [i64], offset: usize) -> Result<()> {
    for (k, (&f, n)) in flux.iter().zip(out.iter_mut()).enumerate() {
        *n = quantize_value(f, quota).ok_or(Error::QuotaTooSmall {
            face: offset + k,
            ratio: f / quota,
        })?;
    }
    Ok(())
}

/// Quantizes into a preallocated spike field. Face indices in errors count
/// x-faces first, then y-faces.
pub fn quantize_into(flux: &FaceField, quota: QuotaParam, out: &mut SpikeField) -> Result<()> {
    if flux.x.len() != out.x.len() || flux.y.len() != out.y.len() {
        return Err(Error::ShapeMismatch {
            expected: out.len(),
            found: flux.len(),
        });
    }
    let q = quota.get();
    quantize_slice(&flux.x, q, &mut out.x, 0)?;
    quantize_slice(&flux.y, q, &mut out.y, flux.x.len())
}

/// `n = round(F / quota)` per face.
pub fn quantize(flux: &FaceField, quota: QuotaParam) -> Result<SpikeField> {
    let mut out = SpikeField {
        x: vec![0; flux.x.len()],
        y: vec![0; flux.y.len()],
    };
    quantize_into(flux, quota, &mut out)?;
    Ok(out)
}

/// Checked variant of [`quantize`] that also validates the field shape.
pub fn quantize_on(grid: &Grid, flux: &FaceField, quota: QuotaParam) -> Result<SpikeField> {
    flux.check_shape(grid)?;
    quantize(flux, quota)
}

pub fn reconstruct_into(spikes: &SpikeField, quota: QuotaParam, out: &mut FaceField) {
    let q = quota.get();
    out.x.clear();
    out.x.extend(spikes.x.iter().map(|&n| n as f64 * q));
    out.y.clear();
    out.y.extend(spikes.y.iter().map(|&n| n as f64 * q));
}

/// `f_disc = n · quota` per face.
pub fn reconstruct(spikes: &SpikeField, quota: QuotaParam) -> FaceField {
    let mut out = FaceField {
        x: Vec::with_capacity(spikes.x.len()),
        y: Vec::with_capacity(spikes.y.len()),
    };
    reconstruct_into(spikes, quota, &mut out);
    out
}

/// Total events Σ|n|; positive and negative quanta both count.
pub fn count_spikes(spikes: &SpikeField) -> u64 {
    spikes.iter().map(|n| n.unsigned_abs()).sum()
}

/// Number of faces with `n = 0`.
pub fn silent_faces(spikes: &SpikeField) -> usize {
    spikes.iter().filter(|&&n| n == 0).count()
}

/// Fraction of faces with `n = 0`. An empty field is fully sparse.
pub fn sparsity(spikes: &SpikeField) -> f64 {
    let total = spikes.len();
    if total == 0 {
        return 1.0;
    }
    silent_faces(spikes) as f64 / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(v: f64) -> QuotaParam {
        QuotaParam::new(v).unwrap()
    }

    fn faces(x: Vec<f64>) -> FaceField {
        FaceField { x, y: vec![] }
    }

    fn spikes(x: Vec<i64>) -> SpikeField {
        SpikeField { x, y: vec![] }
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize(&faces(vec![0.37]), q(0.1)).unwrap().x, vec![4]);
        assert_eq!(quantize(&faces(vec![0.0]), q(0.1)).unwrap().x, vec![0]);
        assert_eq!(quantize(&faces(vec![0.0]), q(1e-9)).unwrap().x, vec![0]);
        assert_eq!(quantize(&faces(vec![-0.05]), q(0.1)).unwrap().x, vec![-1]);
        assert_eq!(quantize(&faces(vec![0.05]), q(0.1)).unwrap().x, vec![1]);
        assert_eq!(quantize(&faces(vec![0.25]), q(0.5)).unwrap().x, vec![1]);
        assert_eq!(quantize(&faces(vec![-0.25]), q(0.5)).unwrap().x, vec![-1]);
    }

    #[test]
    fn quota_too_small() {
        let err = quantize(&faces(vec![0.0, 1.0]), q(1e-300)).unwrap_err();
        assert!(matches!(err, Error::QuotaTooSmall { face: 1, .. }));
    }

    #[test]
    fn non_finite_flux_rejected() {
        assert!(quantize(&faces(vec![f64::NAN]), q(0.1)).is_err());
    }

    #[test]
    fn reconstruct_examples() {
        let r = reconstruct(&spikes(vec![4, 0, -3]), q(0.1));
        assert_eq!(r.x[0], 4.0 * 0.1);
        assert!((r.x[0] - 0.4).abs() < 1e-16);
        assert_eq!(r.x[1], 0.0);
        for quota in [1e-12, 0.3, 7.0] {
            assert_eq!(reconstruct(&spikes(vec![0]), q(quota)).x, vec![0.0]);
        }
    }

    #[test]
    fn count_and_sparsity_examples() {
        assert_eq!(count_spikes(&spikes(vec![3, -2, 0])), 5);
        assert_eq!(count_spikes(&spikes(vec![0; 7])), 0);
        assert_eq!(sparsity(&spikes(vec![0; 7])), 1.0);
        assert_eq!(sparsity(&spikes(vec![1, -1, 2])), 0.0);
        assert_eq!(sparsity(&spikes(vec![3, 0, 0, -1])), 0.5);
    }

    #[test]
    fn n_plus_minus_sum_to_count() {
        let s = SpikeField {
            x: vec![3, -2, 0, 9],
            y: vec![-4, 1],
        };
        assert_eq!(s.n_plus() + s.n_minus(), count_spikes(&s));
    }

    #[test]
    fn error_bound_on_random_faces() {
        // Deterministic LCG so the check is reproducible.
        let mut state = 0x2545_f491_4f6c_dd1du64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..10_000 {
            let flux = (next() - 0.5) * 10f64.powf(next() * 8.0 - 4.0);
            let quota = 10f64.powf(next() * 8.0 - 6.0);
            let n = quantize_value(flux, quota).unwrap();
            assert!((n as f64 * quota - flux).abs() <= quota / 2.0);
        }
    }

    proptest! {
        #[test]
        fn bounded_error(flux in -1e3f64..1e3, quota in 1e-6f64..10.0) {
            let n = quantize_value(flux, quota).unwrap();
            prop_assert!((n as f64 * quota - flux).abs() <= quota / 2.0);
        }

        #[test]
        fn odd(flux in -1e3f64..1e3, quota in 1e-6f64..10.0) {
            prop_assert_eq!(quantize_value(-flux, quota), quantize_value(flux, quota).map(|n| -n));
        }

        #[test]
        fn monotone_in_quota(flux in -1e3f64..1e3, q1 in 1e-6f64..1.0, factor in 1.0f64..100.0) {
            let q2 = q1 * factor;
            let n1 = quantize_value(flux, q1).unwrap();
            let n2 = quantize_value(flux, q2).unwrap();
            prop_assert!(n1.abs() >= n2.abs());
        }

        #[test]
        fn roundtrip_power_of_two(ns in proptest::collection::vec(-1_000_000i64..1_000_000, 1..50), e in -30i32..10) {
            let quota = q(2f64.powi(e));
            let s = spikes(ns);
            prop_assert_eq!(quantize(&reconstruct(&s, quota), quota).unwrap(), s);
        }

        #[test]
        fn roundtrip_general_quota(ns in proptest::collection::vec(-1_000_000i64..1_000_000, 1..50), quota in 1e-8f64..10.0) {
            let quota = q(quota);
            let s = spikes(ns);
            let back = quantize(&reconstruct(&s, quota), quota).unwrap();
            prop_assert_eq!(back, s);
        }
    }
}
