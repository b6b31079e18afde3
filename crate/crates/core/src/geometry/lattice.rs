/// A k-th order forward difference on a rectangular lattice.
///
/// `weight` already includes the binomial multiplicity of the mixed partial
/// and the lattice cell area, so `Σ weight·|Σ w·u(i,j)|²` is the discrete
/// `‖∇^k u‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeStencil {
    pub weight: f64,
    pub taps: Vec<(usize, usize, f64)>,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn forward(order: usize, h: f64) -> Vec<f64> {
    let scale = h.powi(order as i32);
    (0..=order)
        .map(|p| {
            let sign = if (order - p) % 2 == 0 { 1.0 } else { -1.0 };
            sign * binomial(order, p) / scale
        })
        .collect()
}

/// All order-`k` forward differences that fit on an `nx × ny` lattice.
pub fn difference_stencils(nx: usize, ny: usize, hx: f64, hy: f64, k: usize) -> Vec<LatticeStencil> {
    let mut out = Vec::new();
    for a in 0..=k {
        let b = k - a;
        if a >= nx || b >= ny {
            continue;
        }
        let wx = forward(a, hx);
        let wy = forward(b, hy);
        let weight = binomial(k, a) * hx * hy;
        for j in 0..ny - b {
            for i in 0..nx - a {
                let mut taps = Vec::with_capacity((a + 1) * (b + 1));
                for (q, cy) in wy.iter().enumerate() {
                    for (p, cx) in wx.iter().enumerate() {
                        taps.push((i + p, j + q, cx * cy));
                    }
                }
                out.push(LatticeStencil { weight, taps });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kills_polynomials_below_order() {
        let st = difference_stencils(6, 5, 0.2, 0.3, 3);
        let f = |i: usize, j: usize| {
            let (x, y) = (i as f64 * 0.2, j as f64 * 0.3);
            1.0 + x - 2.0 * y + x * x + 3.0 * y * y - x * y
        };
        for s in &st {
            let v: f64 = s.taps.iter().map(|&(i, j, w)| w * f(i, j)).sum();
            assert!(v.abs() < 1e-8);
        }
    }

    #[test]
    fn cubic_derivative_recovered() {
        let st = difference_stencils(5, 5, 0.1, 0.1, 3);
        // u = x^2 y has only the (2,1) derivative, equal to 2
        let f = |i: usize, j: usize| (i as f64 * 0.1).powi(2) * (j as f64 * 0.1);
        let mut total = 0.0;
        for s in &st {
            let v: f64 = s.taps.iter().map(|&(i, j, w)| w * f(i, j)).sum();
            total += s.weight * v * v;
        }
        // 3 * (4 rows * 3 cols of anchors) * 0.01 * 4
        assert!((total - 3.0 * 12.0 * 0.01 * 4.0).abs() < 1e-8);
    }
}
