//! Stored energy, Kelvin–Voigt dissipation, their derivatives and the
//! h-regularized variants.

mod dissipation;
mod energy;
mod regularized;

pub use dissipation::{dissipation, dissipation_gradient, korn_witness, w12_norm_sq};
pub use energy::{energy, energy_density, energy_gradient};
pub use regularized::{
    regularized_dissipation, regularized_dissipation_gradient, regularized_energy,
    regularized_energy_gradient, Regularizer,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergeticsError {
    #[error("energy is infinite: det F = {min_det:e} at cell {cell}")]
    Infeasible { cell: usize, min_det: f64 },
}

/// Material constants and term weights of the prototype energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialParams {
    pub lam: f64,
    pub mu: f64,
    pub a: f64,
    pub q: f64,
    pub w_svk: f64,
    pub w_bar: f64,
    pub w_reg: f64,
    pub rho_s: f64,
    pub rho_f: f64,
    pub nu: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self { lam: 1.0, mu: 1.0, a: 5.0, q: 4.0, w_svk: 0.125, w_bar: 1.0, w_reg: 0.25, rho_s: 1.0, rho_f: 1.0, nu: 1.0 }
    }
}

impl MaterialParams {
    /// Violated constraints for spatial dimension `n`, as `(field, message)`.
    pub fn violations(&self, n: usize) -> Vec<(String, String)> {
        let n = n as f64;
        let mut v = Vec::new();
        let mut push = |f: &str, m: String| v.push((format!("material.{f}"), m));
        if !(self.q > n) {
            push("q", format!("q > n required (q = {}, n = {n})", self.q));
        } else if !(self.a > self.q * n / (self.q - n)) {
            push("a", format!("a > qn/(q-n) required (a = {}, qn/(q-n) = {})", self.a, self.q * n / (self.q - n)));
        }
        if !(self.lam >= 0.0) {
            push("lam", format!("lam >= 0 required (lam = {})", self.lam));
        }
        if !(self.mu > 0.0) {
            push("mu", format!("mu > 0 required (mu = {})", self.mu));
        }
        for (name, w) in [("w_svk", self.w_svk), ("w_bar", self.w_bar), ("w_reg", self.w_reg)] {
            if !(w > 0.0) {
                push(name, format!("{name} > 0 required ({name} = {w})"));
            }
        }
        for (name, w) in [("rho_s", self.rho_s), ("rho_f", self.rho_f), ("nu", self.nu)] {
            if !(w > 0.0) {
                push(name, format!("{name} > 0 required ({name} = {w})"));
            }
        }
        v
    }
}

/// Parameters of the higher-order regularization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularizationParams {
    pub k0: usize,
    pub a0: f64,
    /// Acceleration scale. Filled from the scheme's `h` when loaded from a config.
    #[serde(skip)]
    pub h: f64,
}

impl Default for RegularizationParams {
    fn default() -> Self {
        Self { k0: 3, a0: 0.5, h: 0.0 }
    }
}

impl RegularizationParams {
    pub fn violations(&self) -> Vec<(String, String)> {
        let mut v = Vec::new();
        if !(self.a0 > 0.0 && self.a0 < 1.0) {
            v.push(("regularization.a0".into(), format!("0 < a0 < 1 required (a0 = {})", self.a0)));
        }
        if self.k0 < 3 {
            v.push(("regularization.k0".into(), format!("k0 >= 3 required (k0 = {})", self.k0)));
        }
        v
    }
}
