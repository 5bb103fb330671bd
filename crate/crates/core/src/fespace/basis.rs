//! Lagrange shape functions on a triangle, written in barycentric coordinates.

/// Local node ordering for P2: the three vertices, then the midpoints of the
/// edges opposite vertex 0, 1 and 2.
pub const P2_EDGES: [(usize, usize); 3] = [(1, 2), (2, 0), (0, 1)];

/// Values of the `order`-th degree Lagrange basis (`order` is 1 or 2).
pub fn values(order: usize, lam: [f64; 3], out: &mut [f64]) {
    match order {
        1 => out[..3].copy_from_slice(&lam),
        2 => {
            for i in 0..3 {
                out[i] = lam[i] * (2.0 * lam[i] - 1.0);
            }
            for (k, (a, b)) in P2_EDGES.iter().enumerate() {
                out[3 + k] = 4.0 * lam[*a] * lam[*b];
            }
        }
        _ => unreachable!("only P1 and P2 are supported"),
    }
}

/// Physical gradients of the basis given the barycentric gradients.
pub fn gradients(order: usize, lam: [f64; 3], grad_bary: &[[f64; 2]; 3], out: &mut [[f64; 2]]) {
    match order {
        1 => out[..3].copy_from_slice(grad_bary),
        2 => {
            for i in 0..3 {
                let s = 4.0 * lam[i] - 1.0;
                out[i] = [s * grad_bary[i][0], s * grad_bary[i][1]];
            }
            for (k, (a, b)) in P2_EDGES.iter().enumerate() {
                out[3 + k] = [
                    4.0 * (lam[*a] * grad_bary[*b][0] + lam[*b] * grad_bary[*a][0]),
                    4.0 * (lam[*a] * grad_bary[*b][1] + lam[*b] * grad_bary[*a][1]),
                ];
            }
        }
        _ => unreachable!("only P1 and P2 are supported"),
    }
}

pub fn count(order: usize) -> usize {
    if order == 1 {
        3
    } else {
        6
    }
}
