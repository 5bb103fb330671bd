//! Material model: free energy, its convex-concave split, internal energy,
//! entropy, viscosity and mobility, plus a sampling validator for the
//! structural assumptions the scheme relies on.

use faer::{Mat, Side};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhysicsError {
    #[error("domain error: {0}")]
    Domain(String),
}

/// Mobility blocks, each a 2x2 spatial tensor. The full operator acting on
/// `(∇μ, ∇θ)` is `[[L11, -L12], [-L12, L22]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mobility<T> {
    pub l11: [[T; 2]; 2],
    pub l12: [[T; 2]; 2],
    pub l22: [[T; 2]; 2],
}

impl<T: Scalar> Mobility<T> {
    pub fn isotropic(l11: f64, l12: f64, l22: f64) -> Self {
        let iso = |c: f64| [[T::cst(c), T::zero()], [T::zero(), T::cst(c)]];
        Mobility {
            l11: iso(l11),
            l12: iso(l12),
            l22: iso(l22),
        }
    }
}

/// Tensor-vector product for 2x2 blocks.
#[inline]
pub fn apply<T: Scalar>(m: &[[T; 2]; 2], v: [T; 2]) -> [T; 2] {
    [
        m[0][0] * v[0] + m[0][1] * v[1],
        m[1][0] * v[0] + m[1][1] * v[1],
    ]
}

/// A pointwise material law in the phase field `φ` and the inverse
/// temperature `θ > 0`.
///
/// `psi` is the gradient-free part of the Helmholtz free energy; the full
/// density adds `(γ/2)|∇φ|²`. All methods are generic over [`Scalar`] so the
/// same law feeds residuals and exact Jacobians.
pub trait MaterialModel: Send + Sync {
    fn gamma(&self) -> f64;

    fn psi<T: Scalar>(&self, phi: T, theta: T) -> T;
    /// Convex part in `φ` (treated implicitly).
    fn psi_vex<T: Scalar>(&self, phi: T, theta: T) -> T;
    /// Concave part in `φ` (treated explicitly).
    fn psi_cav<T: Scalar>(&self, phi: T, theta: T) -> T;
    fn dphi_psi_vex<T: Scalar>(&self, phi: T, theta: T) -> T;
    fn dphi_psi_cav<T: Scalar>(&self, phi: T, theta: T) -> T;

    /// Internal energy density `e = ∂θ Ψ̃`.
    fn internal_energy<T: Scalar>(&self, phi: T, theta: T) -> T;

    /// Entropy density `s = θ e − Ψ̃`, with `g2 = |∇φ|²`.
    fn entropy<T: Scalar>(&self, phi: T, theta: T, g2: T) -> T {
        theta * self.internal_energy(phi, theta) - self.psi(phi, theta) - g2 * (0.5 * self.gamma())
    }

    fn viscosity<T: Scalar>(&self, phi: T, theta: T) -> T;

    fn mobility<T: Scalar>(&self, phi: T, theta: T) -> Mobility<T>;

    /// Whether the convex-concave split is valid at this inverse temperature.
    fn split_valid(&self, _theta: f64) -> bool {
        true
    }

    /// `∂φ Ψ = ∂φ Ψ_vex + ∂φ Ψ_cav` (unsplit).
    fn dphi_psi<T: Scalar>(&self, phi: T, theta: T) -> T {
        self.dphi_psi_vex(phi, theta) + self.dphi_psi_cav(phi, theta)
    }
}

/// Double-well model with temperature-dependent well depth:
/// `Ψ = ln θ + (2θ − 1) φ²(1 − φ)²`, `η = a + b (φ + 1)²`, constant mobility.
///
/// The split takes `W(φ) = φ⁴ − 2φ³ + φ²` apart as
/// `(φ⁴ − 2φ³ + 1.5φ²) − 0.5φ²`, whose first part has second derivative
/// `3(2φ − 1)² ≥ 0`; it is a valid convex-concave split for `θ > 1/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalDoubleWell {
    pub gamma: f64,
    pub viscosity_base: f64,
    pub viscosity_slope: f64,
    pub l11: f64,
    pub l12: f64,
    pub l22: f64,
}

impl Default for ThermalDoubleWell {
    fn default() -> Self {
        ThermalDoubleWell {
            gamma: 1e-3,
            viscosity_base: 1e-3,
            viscosity_slope: 1.0 / 40.0,
            l11: 1e-2,
            l12: 0.0,
            l22: 1e-2,
        }
    }
}

impl ThermalDoubleWell {
    pub const NAME: &'static str = "chnst-paper-sec3";

    fn well<T: Scalar>(phi: T) -> T {
        let q = phi * (-phi + 1.0);
        q * q
    }
}

impl MaterialModel for ThermalDoubleWell {
    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn psi<T: Scalar>(&self, phi: T, theta: T) -> T {
        theta.ln() + (theta * 2.0 - 1.0) * Self::well(phi)
    }

    fn psi_vex<T: Scalar>(&self, phi: T, theta: T) -> T {
        let p2 = phi * phi;
        theta.ln() + (theta * 2.0 - 1.0) * (p2 * p2 - p2 * phi * 2.0 + p2 * 1.5)
    }

    fn psi_cav<T: Scalar>(&self, phi: T, theta: T) -> T {
        -(theta * 2.0 - 1.0) * phi * phi * 0.5
    }

    fn dphi_psi_vex<T: Scalar>(&self, phi: T, theta: T) -> T {
        let p2 = phi * phi;
        (theta * 2.0 - 1.0) * (p2 * phi * 4.0 - p2 * 6.0 + phi * 3.0)
    }

    fn dphi_psi_cav<T: Scalar>(&self, phi: T, theta: T) -> T {
        -(theta * 2.0 - 1.0) * phi
    }

    fn internal_energy<T: Scalar>(&self, phi: T, theta: T) -> T {
        theta.recip() + Self::well(phi) * 2.0
    }

    fn entropy<T: Scalar>(&self, phi: T, theta: T, g2: T) -> T {
        -theta.ln() + 1.0 + Self::well(phi) - g2 * (0.5 * self.gamma)
    }

    fn viscosity<T: Scalar>(&self, phi: T, _theta: T) -> T {
        let p = phi + 1.0;
        p * p * self.viscosity_slope + self.viscosity_base
    }

    fn mobility<T: Scalar>(&self, _phi: T, _theta: T) -> Mobility<T> {
        Mobility::isotropic(self.l11, self.l12, self.l22)
    }

    fn split_valid(&self, theta: f64) -> bool {
        2.0 * theta - 1.0 > 0.0
    }
}

fn check_theta(theta: f64) -> Result<(), PhysicsError> {
    if theta > 0.0 {
        Ok(())
    } else {
        Err(PhysicsError::Domain(format!(
            "inverse temperature must be positive, got {theta}"
        )))
    }
}

pub fn eval_internal_energy<M: MaterialModel>(m: &M, phi: f64, theta: f64) -> Result<f64, PhysicsError> {
    check_theta(theta)?;
    Ok(m.internal_energy(phi, theta))
}

pub fn eval_entropy<M: MaterialModel>(m: &M, phi: f64, theta: f64, g2: f64) -> Result<f64, PhysicsError> {
    check_theta(theta)?;
    if g2 < 0.0 {
        return Err(PhysicsError::Domain(format!("|∇φ|² must be nonnegative, got {g2}")));
    }
    Ok(m.entropy(phi, theta, g2))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitDerivative {
    pub value: f64,
    /// Set when the split is not convex-concave at `theta_new`.
    pub split_invalid: bool,
}

/// `∂φ Ψ_vex(φ_new, θ_new) + ∂φ Ψ_cav(φ_old, θ_new)`.
pub fn eval_split_derivative<M: MaterialModel>(
    m: &M,
    phi_new: f64,
    phi_old: f64,
    theta_new: f64,
) -> Result<SplitDerivative, PhysicsError> {
    check_theta(theta_new)?;
    Ok(SplitDerivative {
        value: m.dphi_psi_vex(phi_new, theta_new) + m.dphi_psi_cav(phi_old, theta_new),
        split_invalid: !m.split_valid(theta_new),
    })
}

pub fn eval_viscosity<M: MaterialModel>(m: &M, phi: f64, theta: f64) -> Result<f64, PhysicsError> {
    check_theta(theta)?;
    Ok(m.viscosity(phi, theta))
}

pub fn eval_mobility<M: MaterialModel>(m: &M, phi: f64, theta: f64) -> Result<Mobility<f64>, PhysicsError> {
    check_theta(theta)?;
    Ok(m.mobility(phi, theta))
}

/// Smallest eigenvalue of the assembled symmetric 4x4 mobility operator, or
/// `None` if it is not symmetric.
pub fn mobility_min_eigenvalue(l: &Mobility<f64>) -> Option<f64> {
    let block = |i: usize, j: usize| -> f64 {
        let (bi, bj) = (i / 2, j / 2);
        let (r, c) = (i % 2, j % 2);
        match (bi, bj) {
            (0, 0) => l.l11[r][c],
            (1, 1) => l.l22[r][c],
            _ => -l.l12[r][c],
        }
    };
    let m = Mat::<f64>::from_fn(4, 4, block);
    for i in 0..4 {
        for j in 0..4 {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-14 * (1.0 + m[(i, j)].abs()) {
                return None;
            }
        }
    }
    let eig = m.self_adjoint_eigenvalues(Side::Lower).ok()?;
    eig.into_iter().reduce(f64::min)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationCheck {
    pub name: &'static str,
    pub description: &'static str,
    pub passed: bool,
    /// Worst value seen over the samples (meaning depends on the check).
    pub worst: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<ValidationCheck>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&ValidationCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{:<14} {:<6} worst = {:>12.4e}  {}",
                c.name,
                if c.passed { "pass" } else { "FAIL" },
                c.worst,
                c.description
            )?;
        }
        Ok(())
    }
}

/// Finite-difference step for first derivatives in the identity checks.
pub const FD_STEP: f64 = 1e-5;
/// Finite-difference step for second derivatives in the convexity checks.
pub const FD_STEP_SECOND: f64 = 1e-4;
pub const FD_IDENTITY_TOL: f64 = 1e-7;
/// Slack allowed below zero for second-difference sign checks.
pub const FD_SIGN_TOL: f64 = 1e-6;

fn second_difference(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    let h = FD_STEP_SECOND;
    (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
}

fn central_difference(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    let h = FD_STEP;
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Sweeps a `samples x samples` grid of `(φ, θ)` (and a few values of
/// `|∇φ|²`) and reports each structural assumption and identity with its
/// worst-case value.
pub fn validate_model<M: MaterialModel>(
    m: &M,
    phi_range: (f64, f64),
    theta_range: (f64, f64),
    samples: usize,
) -> ValidationReport {
    let samples = samples.max(2);
    let grid = |(a, b): (f64, f64), k: usize| a + (b - a) * k as f64 / (samples - 1) as f64;
    let mut min_eta = f64::INFINITY;
    let mut min_l_eig = f64::INFINITY;
    let mut l_symmetric = true;
    let mut min_vex = f64::INFINITY;
    let mut max_cav = f64::NEG_INFINITY;
    let mut max_theta_curv = f64::NEG_INFINITY;
    let mut e_err: f64 = 0.0;
    let mut s_err: f64 = 0.0;
    let mut split_err: f64 = 0.0;
    let mut dsplit_err: f64 = 0.0;
    let gamma = m.gamma();
    for i in 0..samples {
        let phi = grid(phi_range, i);
        for j in 0..samples {
            let theta = grid(theta_range, j);
            min_eta = min_eta.min(m.viscosity(phi, theta));
            match mobility_min_eigenvalue(&m.mobility(phi, theta)) {
                Some(ev) => min_l_eig = min_l_eig.min(ev),
                None => l_symmetric = false,
            }
            min_vex = min_vex.min(second_difference(|p| m.psi_vex(p, theta), phi));
            max_cav = max_cav.max(second_difference(|p| m.psi_cav(p, theta), phi));
            max_theta_curv = max_theta_curv.max(second_difference(|t| m.psi(phi, t), theta));
            for g2 in [0.0, 0.5, 3.0] {
                let full = |t: f64| m.psi(phi, t) + 0.5 * gamma * g2;
                let e = m.internal_energy(phi, theta);
                e_err = e_err.max((e - central_difference(full, theta)).abs());
                let s = m.entropy(phi, theta, g2);
                s_err = s_err.max((s - (theta * e - full(theta))).abs());
            }
            split_err = split_err
                .max((m.psi_vex(phi, theta) + m.psi_cav(phi, theta) - m.psi(phi, theta)).abs());
            let fd = central_difference(|p| m.psi(p, theta), phi);
            dsplit_err = dsplit_err.max((m.dphi_psi(phi, theta) - fd).abs());
        }
    }
    let checks = vec![
        ValidationCheck {
            name: "(A1)",
            description: "interface parameter gamma is positive",
            passed: gamma > 0.0,
            worst: gamma,
        },
        ValidationCheck {
            name: "(A2)",
            description: "viscosity is strictly positive (worst = min eta)",
            passed: min_eta > 0.0,
            worst: min_eta,
        },
        ValidationCheck {
            name: "(A3)",
            description: "mobility operator symmetric positive definite (worst = min eigenvalue)",
            passed: l_symmetric && min_l_eig > 0.0,
            worst: if l_symmetric { min_l_eig } else { f64::NAN },
        },
        ValidationCheck {
            name: "(A4) vex",
            description: "convex part has nonnegative second phi-difference (worst = min)",
            passed: min_vex >= -FD_SIGN_TOL,
            worst: min_vex,
        },
        ValidationCheck {
            name: "(A4) cav",
            description: "concave part has nonpositive second phi-difference (worst = max)",
            passed: max_cav <= FD_SIGN_TOL,
            worst: max_cav,
        },
        ValidationCheck {
            name: "(A4) theta",
            description: "potential concave in theta (worst = max second theta-difference)",
            passed: max_theta_curv <= FD_SIGN_TOL,
            worst: max_theta_curv,
        },
        ValidationCheck {
            name: "e = dPsi/dth",
            description: "internal energy matches central difference of the free energy",
            passed: e_err <= FD_IDENTITY_TOL,
            worst: e_err,
        },
        ValidationCheck {
            name: "s = th e - Psi",
            description: "entropy identity",
            passed: s_err <= 1e-12,
            worst: s_err,
        },
        ValidationCheck {
            name: "split sum",
            description: "Psi_vex + Psi_cav = Psi",
            passed: split_err <= 1e-13,
            worst: split_err,
        },
        ValidationCheck {
            name: "split deriv",
            description: "split derivatives add up to the central difference of Psi in phi",
            passed: dsplit_err <= FD_IDENTITY_TOL,
            worst: dsplit_err,
        },
    ];
    ValidationReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const PHI: (f64, f64) = (-0.5, 1.5);
    const THETA: (f64, f64) = (0.55, 2.0);

    #[test]
    fn internal_energy_values() {
        let m = ThermalDoubleWell::default();
        assert!((eval_internal_energy(&m, 0.5, 1.0).unwrap() - 1.125).abs() < 1e-15);
        assert!((eval_internal_energy(&m, 0.0, 2.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(eval_internal_energy(&m, 0.0, 0.0).is_err());
        assert!(eval_internal_energy(&m, 0.0, -1.0).is_err());
    }

    #[test]
    fn entropy_values() {
        let m = ThermalDoubleWell::default();
        assert!((eval_entropy(&m, 0.0, 1.0, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((eval_entropy(&m, 0.5, 1.0, 0.0).unwrap() - 1.0625).abs() < 1e-15);
        assert!(eval_entropy(&m, 0.5, 0.0, 0.0).is_err());
        assert!(eval_entropy(&m, 0.5, 1.0, -1.0).is_err());
    }

    #[test]
    fn thermodynamic_identities_at_random_samples() {
        let m = ThermalDoubleWell::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let phi = rng.gen_range(PHI.0..PHI.1);
            let theta = rng.gen_range(THETA.0..THETA.1);
            let g2 = rng.gen_range(0.0..5.0);
            let tilde = |t: f64| m.psi(phi, t) + 0.5 * m.gamma * g2;
            let fd = (tilde(theta + 1e-5) - tilde(theta - 1e-5)) / 2e-5;
            assert!((m.internal_energy(phi, theta) - fd).abs() < 1e-7);
            let s = theta * m.internal_energy(phi, theta) - tilde(theta);
            assert!((m.entropy(phi, theta, g2) - s).abs() < 1e-12);
        }
    }

    #[test]
    fn split_derivative_cases() {
        let m = ThermalDoubleWell::default();
        // consistency with the full derivative when both levels agree
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let phi = rng.gen_range(PHI.0..PHI.1);
            let theta = rng.gen_range(THETA.0..THETA.1);
            let fd = (m.psi(phi + 1e-5, theta) - m.psi(phi - 1e-5, theta)) / 2e-5;
            let d = eval_split_derivative(&m, phi, phi, theta).unwrap();
            assert!((d.value - fd).abs() < 1e-7);
            assert!(!d.split_invalid);
        }
        let mid = eval_split_derivative(&m, 0.5, 0.5, 1.0).unwrap();
        assert!(mid.value.abs() < 1e-15);
        let d = eval_split_derivative(&m, 1.0, 0.0, 1.0).unwrap();
        assert!((d.value - 1.0).abs() < 1e-15);
        assert!(eval_split_derivative(&m, 0.2, 0.1, 0.4).unwrap().split_invalid);
        assert!(eval_split_derivative(&m, 0.2, 0.1, 0.5).unwrap().split_invalid);
    }

    #[test]
    fn viscosity_and_mobility() {
        let m = ThermalDoubleWell::default();
        assert!((eval_viscosity(&m, 1.0, 1.0).unwrap() - 0.101).abs() < 1e-15);
        assert!((eval_viscosity(&m, -1.0, 1.0).unwrap() - 1e-3).abs() < 1e-18);
        let l = eval_mobility(&m, 0.3, 1.0).unwrap();
        assert_eq!(l.l11, [[1e-2, 0.0], [0.0, 1e-2]]);
        assert_eq!(l.l22, [[1e-2, 0.0], [0.0, 1e-2]]);
        assert_eq!(l.l12, [[0.0, 0.0], [0.0, 0.0]]);
    }

    #[test]
    fn split_sums_to_potential() {
        let m = ThermalDoubleWell::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let phi = rng.gen_range(PHI.0..PHI.1);
            let theta = rng.gen_range(THETA.0..THETA.1);
            let diff = m.psi_vex(phi, theta) + m.psi_cav(phi, theta) - m.psi(phi, theta);
            assert!(diff.abs() < 1e-13);
            assert!(m.viscosity(phi, theta) > 0.0);
        }
    }

    #[test]
    fn default_model_validates() {
        let report = validate_model(&ThermalDoubleWell::default(), PHI, THETA, 41);
        assert!(report.all_passed(), "{report}");
    }

    #[test]
    fn negative_gamma_fails_a1() {
        let m = ThermalDoubleWell {
            gamma: -1.0,
            ..Default::default()
        };
        let r = validate_model(&m, PHI, THETA, 11);
        assert!(!r.check("(A1)").unwrap().passed);
        assert!(r.check("(A2)").unwrap().passed);
    }

    #[test]
    fn strong_cross_mobility_fails_a3() {
        let m = ThermalDoubleWell {
            l12: 0.2,
            ..Default::default()
        };
        let r = validate_model(&m, PHI, THETA, 11);
        let a3 = r.check("(A3)").unwrap();
        assert!(!a3.passed);
        // eigenvalues of [[a, -c], [-c, a]] are a ± c
        assert!((a3.worst - (1e-2 - 0.2)).abs() < 1e-12);
    }

    #[test]
    fn split_fails_below_half() {
        let r = validate_model(&ThermalDoubleWell::default(), PHI, (0.1, 0.4), 11);
        assert!(!r.check("(A4) vex").unwrap().passed);
    }
}
