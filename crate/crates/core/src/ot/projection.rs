use crate::error::{Error, Result};

/// Euclidean projection of `y` onto `{x ≥ 0, Σx = τ}`.
pub fn project_scaled_simplex(y: &[f64], tau: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; y.len()];
    let mut scratch = Vec::with_capacity(y.len());
    project_into(y, tau, &mut scratch, &mut out)?;
    Ok(out)
}

/// Allocation-free form of [`project_scaled_simplex`]. `scratch` is resized
/// as needed; `out` must have the length of `y`.
pub fn project_into(y: &[f64], tau: f64, scratch: &mut Vec<f64>, out: &mut [f64]) -> Result<()> {
    if !(tau >= 0.0) {
        return Err(Error::Domain(format!("projection radius must be nonnegative, got {tau}")));
    }
    if y.len() != out.len() {
        return Err(Error::Dimension(format!("input has {} entries, output {}", y.len(), out.len())));
    }
    if y.is_empty() {
        return if tau == 0.0 { Ok(()) } else { Err(Error::Dimension("cannot project onto an empty simplex".into())) };
    }
    if tau == 0.0 {
        out.fill(0.0);
        return Ok(());
    }
    let theta = threshold(y, tau, scratch);
    for (o, &v) in out.iter_mut().zip(y) {
        *o = (v - theta).max(0.0);
    }
    Ok(())
}

/// Shift `θ` such that `Σ max(y − θ, 0) = τ`, from the sorted prefix sums.
fn threshold(y: &[f64], tau: f64, sorted: &mut Vec<f64>) -> f64 {
    sorted.clear();
    sorted.extend_from_slice(y);
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = sorted[0] - tau;
    for (k, &v) in sorted.iter().enumerate() {
        cum += v;
        let candidate = (cum - tau) / (k + 1) as f64;
        if v > candidate {
            theta = candidate;
        } else {
            break;
        }
    }
    theta
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shifts_by_half_excess() {
        let x = project_scaled_simplex(&[0.2, 0.9], 1.0).unwrap();
        assert!((x[0] - 0.15).abs() < 1e-15 && (x[1] - 0.85).abs() < 1e-15);
    }

    #[test]
    fn feasible_points_are_fixed() {
        let y = [0.1, 0.3, 0.6];
        let x = project_scaled_simplex(&y, 1.0).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_radius_and_clipping() {
        assert_eq!(project_scaled_simplex(&[3.0, -1.0], 0.0).unwrap(), vec![0.0, 0.0]);
        assert_eq!(project_scaled_simplex(&[5.0, -1.0, 0.0], 0.5).unwrap(), vec![0.5, 0.0, 0.0]);
    }

    #[test]
    fn negative_radius_is_rejected() {
        assert!(matches!(project_scaled_simplex(&[1.0], -1e-3), Err(Error::Domain(_))));
    }
}
