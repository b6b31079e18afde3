//! Exhaustive search on the two-by-two node solid with a clamped bottom edge.

use varistep::geometry::Vec2;
use varistep::steppers::{run, ForceKind, ForceTarget, Mode, SchemeConfig};

const S: f64 = 1.0;

fn grad(p: &[Vec2; 4]) -> (Vec2, Vec2) {
    // nodes (0,0), (1,0), (0,1), (1,1); derivatives at the cell center
    let dx = ((p[1] - p[0]) + (p[3] - p[2])) / (2.0 * S);
    let dy = ((p[2] - p[0]) + (p[3] - p[1])) / (2.0 * S);
    (dx, dy)
}

fn elastic(p: &[Vec2; 4]) -> f64 {
    let (dx, dy) = grad(p);
    let det = dx.x * dy.y - dy.x * dx.y;
    if det <= 0.0 {
        return f64::INFINITY;
    }
    let (c11, c12, c22) = (dx.dot(&dx) - 1.0, dx.dot(&dy), dy.dot(&dy) - 1.0);
    let tr = c11 + c22;
    let a2 = c11 * c11 + 2.0 * c12 * c12 + c22 * c22;
    let mixed = (p[0] - p[1] - p[2] + p[3]) / (S * S);
    let g2 = 2.0 * mixed.norm_squared();
    S * S * (0.125 * (tr * tr + 2.0 * a2) + det.powi(-5) + 0.25 * g2 * g2)
}

fn rate(pk: &[Vec2; 4], b: &[Vec2; 4]) -> f64 {
    let (ex, ey) = grad(pk);
    let (bx, by) = grad(b);
    let s11 = 2.0 * bx.dot(&ex);
    let s12 = bx.dot(&ey) + ex.dot(&by);
    let s22 = 2.0 * by.dot(&ey);
    S * S * (s11 * s11 + 2.0 * s12 * s12 + s22 * s22)
}

/// Step functional in the four free coordinates.
fn functional(z: [f64; 4], pk: &[Vec2; 4], tau: f64, force: Vec2, inertia: Option<(f64, Vec2)>) -> f64 {
    let p = [pk[0], pk[1], Vec2::new(z[0], z[1]), Vec2::new(z[2], z[3])];
    let e = elastic(&p);
    if !e.is_finite() {
        return e;
    }
    let b: [Vec2; 4] = std::array::from_fn(|i| (p[i] - pk[i]) / tau);
    let m = S * S / 4.0;
    let work = tau * m * (force.dot(&b[2]) + force.dot(&b[3]));
    let kin = match inertia {
        Some((h, w)) => tau / (2.0 * h) * m * ((b[2] - w).norm_squared() + (b[3] - w).norm_squared()),
        None => 0.0,
    };
    e + tau * rate(pk, &b) + kin - work
}

fn search(f: &dyn Fn([f64; 4]) -> f64, center: [f64; 4], half: f64) -> ([f64; 4], f64) {
    let n = 41;
    let step = 2.0 * half / (n - 1) as f64;
    let axis = |k: usize, i: usize| center[k] - half + i as f64 * step;
    let mut best = (center, f64::INFINITY);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let z = [axis(0, i), axis(1, j), axis(2, k), axis(3, l)];
                    let v = f(z);
                    if v < best.1 {
                        best = (z, v);
                    }
                }
            }
        }
    }
    best
}

pub fn config(mode: Mode) -> SchemeConfig {
    let mut c = SchemeConfig::new(mode, 0.0125, 0.05, 0.0125);
    c.solid.nodes = [2, 2];
    c.solid.spacing = S;
    c.force.kind = ForceKind::Uniform;
    c.force.value = [0.5, -1.0];
    c.force.target = ForceTarget::Solid;
    c.tolerances.grad_tol = 1e-12;
    c.tolerances.max_iters = 5000;
    c
}

/// Runs one step and compares it with the searched minimizer; `inertia` is
/// `(h, w)` for a uniform previous velocity `w`.
pub fn check(c: &SchemeConfig, inertia: Option<(f64, Vec2)>) -> Result<(), String> {
    let r = run(c).map_err(|e| e.to_string())?;
    let (_, p0) = &r.snapshots[0];
    let (_, p1) = &r.snapshots[1];
    let pk = [p0[0], p0[1], p0[2], p0[3]];
    let force = Vec2::new(c.force.value[0], c.force.value[1]);
    let f = |z: [f64; 4]| functional(z, &pk, c.tau, force, inertia);
    let start = [pk[2].x, pk[2].y, pk[3].x, pk[3].y];
    let (coarse, _) = search(&f, start, 0.6);
    if (0..4).any(|k| (coarse[k] - start[k]).abs() >= 0.599) {
        return Err("coarse minimizer on the box edge".into());
    }
    let (mid, _) = search(&f, coarse, 0.03);
    let (fine, best) = search(&f, mid, 0.0015);
    let got = [p1[2].x, p1[2].y, p1[3].x, p1[3].y];
    let resolution = 0.003 / 40.0;
    for k in 0..4 {
        if (got[k] - fine[k]).abs() > 1.5 * resolution {
            return Err(format!("coordinate {k}: {} vs {}", got[k], fine[k]));
        }
    }
    if f(got) > best + 1e-12 {
        return Err(format!("{} > {best}", f(got)));
    }
    // the ledger stores the same functional
    let e = elastic(&[p1[0], p1[1], p1[2], p1[3]]);
    if (r.rows[1].e - e).abs() >= 1e-12 {
        return Err(format!("ledger E {} vs {e}", r.rows[1].e));
    }
    Ok(())
}
