//! Writers for diagnostics tables and field snapshots.

use std::fmt::Write as _;

use chnst::diagnostics::DiagnosticsRecord;
use chnst::scheme::State;

pub const DIAGNOSTICS_HEADER: &str =
    "step,time,mass,kinetic,internal,total_energy,entropy,tau_dissipation,d_num,newton_iters,min_theta";

pub fn diagnostics_row(r: &DiagnosticsRecord) -> String {
    format!(
        "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e}",
        r.step,
        r.time,
        r.mass,
        r.kinetic,
        r.internal,
        r.total_energy(),
        r.entropy,
        r.dissipation,
        r.d_num,
        r.newton_iterations,
        r.min_theta
    )
}

/// Legacy ASCII VTK file of the vertex values on the unwrapped `(n+1)²` grid.
pub fn vtk_snapshot(state: &State) -> String {
    let mesh = state.phi.space().mesh().clone();
    let n = mesh.n();
    let vertex = |i: usize, j: usize| (i % n) * n + (j % n);
    let mut out = String::new();
    let _ = writeln!(out, "# vtk DataFile Version 3.0");
    let _ = writeln!(out, "chnst t={:.16e}", state.time);
    let _ = writeln!(out, "ASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(out, "POINTS {} double", (n + 1) * (n + 1));
    for i in 0..=n {
        for j in 0..=n {
            let _ = writeln!(out, "{:.16e} {:.16e} 0", i as f64 / n as f64, j as f64 / n as f64);
        }
    }
    let point = |i: usize, j: usize| i * (n + 1) + j;
    let cells = 2 * n * n;
    let _ = writeln!(out, "CELLS {} {}", cells, 4 * cells);
    for i in 0..n {
        for j in 0..n {
            let (a, b, c, d) = (point(i, j), point(i + 1, j), point(i + 1, j + 1), point(i, j + 1));
            let _ = writeln!(out, "3 {a} {b} {c}");
            let _ = writeln!(out, "3 {a} {c} {d}");
        }
    }
    let _ = writeln!(out, "CELL_TYPES {cells}");
    for _ in 0..cells {
        let _ = writeln!(out, "5");
    }
    let _ = writeln!(out, "POINT_DATA {}", (n + 1) * (n + 1));
    let scalars: [(&str, &[f64]); 4] = [
        ("phi", state.phi.coefficients()),
        ("mu", state.mu.coefficients()),
        ("theta", state.theta.coefficients()),
        ("pressure", state.pi.coefficients()),
    ];
    for (name, c) in scalars {
        let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for i in 0..=n {
            for j in 0..=n {
                let _ = writeln!(out, "{:.16e}", c[vertex(i, j)]);
            }
        }
    }
    // P2 vector dofs: x block then y block, vertex dofs first in each block
    let u = state.u.coefficients();
    let block = u.len() / 2;
    let _ = writeln!(out, "VECTORS velocity double");
    for i in 0..=n {
        for j in 0..=n {
            let v = vertex(i, j);
            let _ = writeln!(out, "{:.16e} {:.16e} 0", u[v], u[block + v]);
        }
    }
    out
}

/// All coefficients of a state as `field,index,value` lines.
pub fn raw_snapshot(state: &State) -> String {
    let mut out = String::from("field,index,value\n");
    let fields: [(&str, &[f64]); 5] = [
        ("phi", state.phi.coefficients()),
        ("mu", state.mu.coefficients()),
        ("theta", state.theta.coefficients()),
        ("u", state.u.coefficients()),
        ("pi", state.pi.coefficients()),
    ];
    for (name, c) in fields {
        for (i, v) in c.iter().enumerate() {
            let _ = writeln!(out, "{name},{i},{v:.16e}");
        }
    }
    out
}
