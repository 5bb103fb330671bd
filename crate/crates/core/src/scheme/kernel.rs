//! Pointwise integrands of the discrete system, written once for `f64`
//! residuals and dual-number Jacobians.

use crate::physics::{apply, MaterialModel};
use crate::scalar::Scalar;

/// Number of unknowns on one triangle: φ, μ, θ (3 each), u (2 x 6), π (3).
pub(crate) const LOCAL_DOFS: usize = 24;

pub(crate) const PHI: usize = 0;
pub(crate) const MU: usize = 3;
pub(crate) const THETA: usize = 6;
pub(crate) const UX: usize = 9;
pub(crate) const UY: usize = 15;
pub(crate) const PI: usize = 21;

/// Local coefficients of all fields on one triangle, in the layout above.
pub(crate) type Local<T> = [T; LOCAL_DOFS];

/// Field values and gradients at one quadrature point.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Point<T> {
    pub phi: T,
    pub gphi: [T; 2],
    pub mu: T,
    pub gmu: [T; 2],
    pub theta: T,
    pub gtheta: [T; 2],
    pub u: [T; 2],
    /// `gu[k][l] = ∂_l u_k`
    pub gu: [[T; 2]; 2],
    pub pi: T,
}

fn combine<T: Scalar>(c: &[T], vals: &[f64], grads: &[[f64; 2]]) -> (T, [T; 2]) {
    let mut v = T::zero();
    let mut g = [T::zero(), T::zero()];
    for ((&ci, &b), gb) in c.iter().zip(vals).zip(grads) {
        v += ci * b;
        g[0] += ci * gb[0];
        g[1] += ci * gb[1];
    }
    (v, g)
}

impl<T: Scalar> Point<T> {
    pub fn evaluate(
        local: &Local<T>,
        vals1: &[f64],
        grads1: &[[f64; 2]],
        vals2: &[f64],
        grads2: &[[f64; 2]],
    ) -> Self {
        let (phi, gphi) = combine(&local[PHI..PHI + 3], vals1, grads1);
        let (mu, gmu) = combine(&local[MU..MU + 3], vals1, grads1);
        let (theta, gtheta) = combine(&local[THETA..THETA + 3], vals1, grads1);
        let (ux, gux) = combine(&local[UX..UX + 6], vals2, grads2);
        let (uy, guy) = combine(&local[UY..UY + 6], vals2, grads2);
        let (pi, _) = combine(&local[PI..PI + 3], vals1, grads1);
        Point {
            phi,
            gphi,
            mu,
            gmu,
            theta,
            gtheta,
            u: [ux, uy],
            gu: [gux, guy],
            pi,
        }
    }
}

impl Point<f64> {
    pub fn lift<T: Scalar>(&self) -> Point<T> {
        let c = T::cst;
        Point {
            phi: c(self.phi),
            gphi: self.gphi.map(c),
            mu: c(self.mu),
            gmu: self.gmu.map(c),
            theta: c(self.theta),
            gtheta: self.gtheta.map(c),
            u: self.u.map(c),
            gu: self.gu.map(|r| r.map(c)),
            pi: c(self.pi),
        }
    }
}

/// Test-linear integrand `f0·w + f1·∇w` of each equation. Momentum carries
/// one row per velocity component: `f0[k] v_k + Σ_l f1[k][l] ∂_l v_k`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Flux<T> {
    pub phase: (T, [T; 2]),
    pub potential: (T, [T; 2]),
    pub energy: (T, [T; 2]),
    pub momentum: ([T; 2], [[T; 2]; 2]),
    pub divergence: T,
}

#[inline]
fn dot<T: Scalar>(a: [T; 2], b: [T; 2]) -> T {
    a[0] * b[0] + a[1] * b[1]
}

fn transpose<T: Copy>(m: &[[T; 2]; 2]) -> [[T; 2]; 2] {
    [[m[0][0], m[1][0]], [m[0][1], m[1][1]]]
}

/// Symmetric gradient `½(∇u + ∇uᵀ)` from `gu[k][l] = ∂_l u_k`.
#[inline]
pub(crate) fn sym_grad<T: Scalar>(gu: &[[T; 2]; 2]) -> [[T; 2]; 2] {
    let off = (gu[0][1] + gu[1][0]) * 0.5;
    [[gu[0][0], off], [off, gu[1][1]]]
}

#[inline]
pub(crate) fn frobenius<T: Scalar>(a: &[[T; 2]; 2], b: &[[T; 2]; 2]) -> T {
    a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1]
}

/// Integrands at one quadrature point. `new` holds the unknown level,
/// `old` the previous level and `star` whichever level the starred
/// coefficients are taken from.
pub(crate) fn flux<T: Scalar, M: MaterialModel>(
    model: &M,
    tau: f64,
    new: &Point<T>,
    old: &Point<f64>,
    star: &Point<T>,
) -> Flux<T> {
    let gamma = model.gamma();
    let um = [(new.u[0] + old.u[0]) * 0.5, (new.u[1] + old.u[1]) * 0.5];
    let gum = [
        [(new.gu[0][0] + old.gu[0][0]) * 0.5, (new.gu[0][1] + old.gu[0][1]) * 0.5],
        [(new.gu[1][0] + old.gu[1][0]) * 0.5, (new.gu[1][1] + old.gu[1][1]) * 0.5],
    ];
    let dum = sym_grad(&gum);

    let eta = model.viscosity(star.phi, star.theta);
    let l = model.mobility(star.phi, star.theta);
    let inv_ts = star.theta.recip();
    let inv_ts2 = inv_ts * inv_ts;
    // σ* = (γ/θ*) ∇φ* ⊗ ∇φ*
    let sc = inv_ts * gamma;
    let sigma = [
        [sc * star.gphi[0] * star.gphi[0], sc * star.gphi[0] * star.gphi[1]],
        [sc * star.gphi[1] * star.gphi[0], sc * star.gphi[1] * star.gphi[1]],
    ];
    let g2s = dot(star.gphi, star.gphi);
    let sm = model.entropy(star.phi, star.theta, g2s) + star.phi * star.mu;

    let inv_t = new.theta.recip();
    let sig_gt = apply(&sigma, new.gtheta);
    // (φ*/θ)∇μ − σ*∇θ/θ
    let kort = [
        (star.phi * new.gmu[0] - sig_gt[0]) * inv_t,
        (star.phi * new.gmu[1] - sig_gt[1]) * inv_t,
    ];

    // phase
    let l11_gmu = apply(&l.l11, new.gmu);
    let l12_gt = apply(&l.l12, new.gtheta);
    let phase = (
        (new.phi - old.phi) / tau,
        [
            -star.phi * um[0] + l11_gmu[0] - l12_gt[0],
            -star.phi * um[1] + l11_gmu[1] - l12_gt[1],
        ],
    );

    // chemical potential
    let dpsi = model.dphi_psi_vex(new.phi, new.theta) + model.dphi_psi_cav(T::cst(old.phi), new.theta);
    let potential = (new.mu - dpsi, [-new.gphi[0] * gamma, -new.gphi[1] * gamma]);

    // internal energy
    let de = (model.internal_energy(new.phi, new.theta) - model.internal_energy(T::cst(old.phi), T::cst(old.theta))) / tau;
    let l12t_gmu = apply(&transpose(&l.l12), new.gmu);
    let l22_gt = apply(&l.l22, new.gtheta);
    let sig_um = apply(&sigma, um);
    let smt = sm * new.theta * inv_ts2;
    let energy = (
        de - eta * frobenius(&dum, &dum) - dot(kort, um) + sm * dot(um, new.gtheta) * inv_ts2,
        [
            l12t_gmu[0] - l22_gt[0] - sig_um[0] - smt * um[0],
            l12t_gmu[1] - l22_gt[1] - sig_um[1] - smt * um[1],
        ],
    );

    // momentum
    let conv = |k: usize| (gum[k][0] * star.u[0] + gum[k][1] * star.u[1]) * 0.5;
    let force = |k: usize| kort[k] - sm * new.gtheta[k] * inv_ts2;
    let f0 = [
        (new.u[0] - old.u[0]) / tau + conv(0) + force(0),
        (new.u[1] - old.u[1]) / tau + conv(1) + force(1),
    ];
    let stress = |k: usize, l: usize| {
        let s = -um[k] * star.u[l] * 0.5 + eta * dum[k][l];
        if k == l {
            s - new.pi
        } else {
            s
        }
    };
    let f1 = [[stress(0, 0), stress(0, 1)], [stress(1, 0), stress(1, 1)]];

    Flux {
        phase,
        potential,
        energy,
        momentum: (f0, f1),
        divergence: gum[0][0] + gum[1][1],
    }
}

/// Adds the weighted contribution of one quadrature point to the local
/// residual (rows in the same layout as the local unknowns).
pub(crate) fn accumulate<T: Scalar>(
    f: &Flux<T>,
    w: f64,
    vals1: &[f64],
    grads1: &[[f64; 2]],
    vals2: &[f64],
    grads2: &[[f64; 2]],
    out: &mut Local<T>,
) {
    let tested = |(f0, f1): (T, [T; 2]), v: f64, g: [f64; 2]| (f0 * v + f1[0] * g[0] + f1[1] * g[1]) * w;
    for a in 0..3 {
        let (v, g) = (vals1[a], grads1[a]);
        out[PHI + a] += tested(f.phase, v, g);
        out[MU + a] += tested(f.potential, v, g);
        out[THETA + a] += tested(f.energy, v, g);
        out[PI + a] += f.divergence * (v * w);
    }
    let (f0, f1) = f.momentum;
    for b in 0..6 {
        let (v, g) = (vals2[b], grads2[b]);
        out[UX + b] += tested((f0[0], f1[0]), v, g);
        out[UY + b] += tested((f0[1], f1[1]), v, g);
    }
}
