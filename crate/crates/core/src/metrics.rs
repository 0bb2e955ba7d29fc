use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::{check_factors, outer_entry, MultiIndex};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metrics {
    /// `||⊗u - ⊗û||_Ω`.
    pub err_ab: f64,
    /// `err_ab / ||δA||_Ω`; `None` when the data are noise-free.
    pub err_rt: Option<f64>,
    /// Mean of `|sin θ_k|` over the modes.
    pub sin_theta: f64,
    pub sin_theta_per_mode: Vec<f64>,
    pub density: f64,
    pub runtime_seconds: f64,
}

/// `|sin|` of the angle between two nonzero vectors.
///
/// Computed as the length of the component of `u/|u|` orthogonal to `v/|v|`
/// rather than through `acos`, which loses all digits below ~1e-8 for nearly
/// parallel vectors.
pub fn sin_angle(u: &[f64], v: &[f64]) -> Option<f64> {
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return None;
    }
    let c = (u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / (nu * nv)).clamp(-1.0, 1.0);
    let s = u
        .iter()
        .zip(v)
        .map(|(a, b)| (a / nu - c * b / nv).powi(2))
        .sum::<f64>()
        .sqrt();
    Some(s.min(1.0))
}

/// Error measures of an estimate `u_hat` against the ground truth `u_true`
/// on the observation set `omega`. `runtime_seconds` is left at 0 for the
/// caller to fill in.
pub fn completion_errors<V: AsRef<[f64]>, W: AsRef<[f64]>>(
    dims: &[usize],
    omega: &[MultiIndex],
    u_true: &[V],
    u_hat: &[W],
    delta_norm: f64,
) -> Result<Metrics> {
    check_factors(dims, u_true)?;
    check_factors(dims, u_hat)?;
    let sin_theta_per_mode = u_true
        .iter()
        .zip(u_hat)
        .enumerate()
        .map(|(t, (a, b))| {
            sin_angle(a.as_ref(), b.as_ref())
                .ok_or_else(|| Error::arg(format!("factor of mode {} is zero", t + 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    let err_ab = omega
        .iter()
        .map(|i| (outer_entry(u_true, i) - outer_entry(u_hat, i)).powi(2))
        .sum::<f64>()
        .sqrt();
    let total: f64 = dims.iter().map(|&n| n as f64).product();
    Ok(Metrics {
        err_ab,
        err_rt: (delta_norm > 0.0).then(|| err_ab / delta_norm),
        sin_theta: sin_theta_per_mode.iter().sum::<f64>() / dims.len() as f64,
        sin_theta_per_mode,
        density: omega.len() as f64 / total,
        runtime_seconds: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn omega() -> Vec<MultiIndex> {
        vec![[1, 1].into(), [2, 1].into(), [2, 3].into()]
    }

    #[test]
    fn identical_factors() {
        let u = vec![vec![1.0, 2.0], vec![3.0, -1.0, 0.5]];
        let m = completion_errors(&[2, 3], &omega(), &u, &u, 0.1).unwrap();
        assert_eq!(m.err_ab, 0.0);
        assert_eq!(m.err_rt, Some(0.0));
        assert!(m.sin_theta < 1e-15);
        assert_eq!(m.density, 0.5);
    }

    #[test]
    fn compensating_scales() {
        let u = vec![vec![1.0, 2.0], vec![3.0, -1.0, 0.5]];
        let v = vec![vec![-2.0, -4.0], vec![-1.5, 0.5, -0.25]];
        let m = completion_errors(&[2, 3], &omega(), &u, &v, 0.0).unwrap();
        assert!(m.err_ab < 1e-15);
        assert!(m.sin_theta < 1e-15);
        assert_eq!(m.err_rt, None);
    }

    #[test]
    fn orthogonal_factor() {
        let u = vec![vec![1.0, 0.0], vec![1.0]];
        let v = vec![vec![0.0, 1.0], vec![1.0]];
        let om: Vec<MultiIndex> = vec![[1, 1].into(), [2, 1].into()];
        let m = completion_errors(&[2, 1], &om, &u, &v, 1.0).unwrap();
        assert!((m.sin_theta - 0.5).abs() < 1e-15);
        assert!((m.err_ab - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn tiny_angles_are_resolved() {
        let s = sin_angle(&[1.0, 0.0], &[1.0, 1e-12]).unwrap();
        assert!((s - 1e-12).abs() < 1e-24);
    }

    #[test]
    fn zero_factor_is_an_error() {
        let u = vec![vec![1.0, 2.0], vec![1.0, 1.0, 1.0]];
        let v = vec![vec![1.0, 2.0], vec![0.0; 3]];
        let e = completion_errors(&[2, 3], &omega(), &u, &v, 1.0).unwrap_err();
        assert!(e.to_string().contains("mode 2"));
    }
}
