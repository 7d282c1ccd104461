use crate::error::{Error, Result};

/// Componentwise `sign(x)·max(|x| − t, 0)`. A zero threshold returns `x`
/// bit-for-bit.
pub fn soft_shrink(x: &[f64], threshold: f64) -> Result<Vec<f64>> {
    let mut out = x.to_vec();
    soft_shrink_in_place(&mut out, threshold)?;
    Ok(out)
}

pub fn soft_shrink_in_place(x: &mut [f64], threshold: f64) -> Result<()> {
    if !(threshold >= 0.0) {
        return Err(Error::invalid(format!(
            "shrinkage threshold must be nonnegative, got {threshold}"
        )));
    }
    for v in x.iter_mut() {
        *v = v.signum() * (v.abs() - threshold).max(0.0);
    }
    Ok(())
}

pub fn project_nonneg(x: &[f64]) -> Vec<f64> {
    let mut out = x.to_vec();
    project_nonneg_in_place(&mut out);
    out
}

#[inline]
pub fn project_nonneg_in_place(x: &mut [f64]) {
    for v in x.iter_mut() {
        if !(*v > 0.0) {
            *v = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm2;
    use proptest::prelude::*;

    #[test]
    fn shrink_examples() {
        assert_eq!(soft_shrink(&[3.0, -0.5, 1.0], 1.0).unwrap(), vec![2.0, 0.0, 0.0]);
        assert_eq!(soft_shrink(&[-4.0], 1.5).unwrap(), vec![-2.5]);
        let x = [1.5, -0.0, 0.0, -7.25, 1e-300];
        let y = soft_shrink(&x, 0.0).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert!(soft_shrink(&[1.0], -1e-9).is_err());
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_nonneg(&[1.0, -2.0, 0.0]), vec![1.0, 0.0, 0.0]);
        assert_eq!(project_nonneg(&[-1.0, -1.0]), vec![0.0, 0.0]);
        assert_eq!(project_nonneg(&[0.5, 2.0]), vec![0.5, 2.0]);
    }

    proptest! {
        #[test]
        fn shrink_is_nonexpansive(
            pair in (1usize..20).prop_flat_map(|n| (
                prop::collection::vec(-10.0f64..10.0, n),
                prop::collection::vec(-10.0f64..10.0, n),
            )),
            t in 0.0f64..5.0,
        ) {
            let (x, y) = pair;
            let sx = soft_shrink(&x, t).unwrap();
            let sy = soft_shrink(&y, t).unwrap();
            let d_out = norm2(&crate::linalg::sub(&sx, &sy));
            let d_in = norm2(&crate::linalg::sub(&x, &y));
            prop_assert!(d_out <= d_in + 1e-12);
        }

        #[test]
        fn projection_is_idempotent(x in prop::collection::vec(-10.0f64..10.0, 0..30)) {
            let once = project_nonneg(&x);
            prop_assert_eq!(project_nonneg(&once), once);
        }
    }
}
