use serde::{Deserialize, Serialize};

use crate::energetics::{MaterialParams, RegularizationParams};
use crate::geometry::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    ParabolicSolid,
    ParabolicFsi,
    HyperbolicSolid,
    HyperbolicFsi,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::ParabolicSolid => "parabolic_solid",
            Mode::ParabolicFsi => "parabolic_fsi",
            Mode::HyperbolicSolid => "hyperbolic_solid",
            Mode::HyperbolicFsi => "hyperbolic_fsi",
        }
    }
    pub fn has_fluid(self) -> bool {
        matches!(self, Mode::ParabolicFsi | Mode::HyperbolicFsi)
    }
    pub fn is_hyperbolic(self) -> bool {
        matches!(self, Mode::HyperbolicSolid | Mode::HyperbolicFsi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirichletSide {
    Bottom,
    Left,
}

/// Reference square `Q` and its nodal grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolidSpec {
    pub nodes: [usize; 2],
    pub origin: [f64; 2],
    /// Node spacing.
    pub spacing: f64,
    pub dirichlet: DirichletSide,
}

impl Default for SolidSpec {
    fn default() -> Self {
        Self { nodes: [17, 17], origin: [1.0, 0.5], spacing: 1.0 / 16.0, dirichlet: DirichletSide::Bottom }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContainerSpec {
    pub min: [f64; 2],
    pub max: [f64; 2],
    pub cells: [usize; 2],
}

impl Default for ContainerSpec {
    fn default() -> Self {
        Self { min: [0.0, 0.0], max: [3.0, 2.0], cells: [96, 64] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForceKind {
    None,
    Uniform,
    /// `value·(1 − |x − center|²/radius²)²` inside the disc, zero outside.
    Localized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForceTarget {
    Both,
    Solid,
    Fluid,
}

/// Body force `f(t, x) = ramp(t)·profile(x)·value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForceSpec {
    pub kind: ForceKind,
    pub value: [f64; 2],
    pub center: [f64; 2],
    pub radius: f64,
    pub target: ForceTarget,
    /// Linear ramp-up time; 0 switches the force on at once.
    pub ramp: f64,
}

impl Default for ForceSpec {
    fn default() -> Self {
        Self { kind: ForceKind::None, value: [0.0, 0.0], center: [0.0, 0.0], radius: 1.0, target: ForceTarget::Both, ramp: 0.0 }
    }
}

impl ForceSpec {
    pub fn profile(&self, x: Vec2) -> Vec2 {
        let v = Vec2::new(self.value[0], self.value[1]);
        match self.kind {
            ForceKind::None => Vec2::zeros(),
            ForceKind::Uniform => v,
            ForceKind::Localized => {
                let r2 = (x - Vec2::new(self.center[0], self.center[1])).norm_squared() / (self.radius * self.radius);
                if r2 < 1.0 {
                    v * (1.0 - r2).powi(2)
                } else {
                    Vec2::zeros()
                }
            }
        }
    }

    /// Time average of the ramp over `[t0, t1]`.
    pub fn ramp_average(&self, t0: f64, t1: f64) -> f64 {
        if self.ramp <= 0.0 {
            return 1.0;
        }
        let r = self.ramp;
        let prim = |t: f64| if t <= r { 0.5 * t * t / r } else { 0.5 * r + (t - r) };
        (prim(t1) - prim(t0)) / (t1 - t0)
    }

    pub fn acts_on_solid(&self) -> bool {
        self.kind != ForceKind::None && self.target != ForceTarget::Fluid
    }
    pub fn acts_on_fluid(&self) -> bool {
        self.kind != ForceKind::None && self.target != ForceTarget::Solid
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialDeformation {
    Identity,
    /// A critical point of the mode's energy reached from the identity.
    Relaxed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSpec {
    pub deformation: InitialDeformation,
    /// Uniform initial solid velocity on the non-Dirichlet nodes.
    pub solid_velocity: [f64; 2],
    /// Uniform initial fluid velocity at the markers.
    pub fluid_velocity: [f64; 2],
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self { deformation: InitialDeformation::Identity, solid_velocity: [0.0, 0.0], fluid_velocity: [0.0, 0.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative gradient tolerance of each minimization.
    pub grad_tol: f64,
    pub max_iters: usize,
    pub lin_tol: f64,
    /// Relative inequality tolerance, multiplied by `1 + |E(η₀)|`.
    pub ineq_tol: f64,
    pub subsamples: usize,
    pub det_floor: f64,
    pub contact_gap: f64,
    /// Absolute injectivity tolerance; derived from the raster when absent.
    pub cn_tol: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            grad_tol: 1e-8,
            max_iters: 500,
            lin_tol: 1e-10,
            ineq_tol: 1e-8,
            subsamples: 4,
            det_floor: 1e-3,
            contact_gap: 0.0,
            cn_tol: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Field dump every `stride` steps; 0 writes the ledger only.
    pub stride: usize,
    pub markers: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { stride: 0, markers: true }
    }
}

/// Every parameter of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    pub mode: Mode,
    pub tau: f64,
    pub h: f64,
    pub t_end: f64,
    #[serde(default)]
    pub material: MaterialParams,
    #[serde(default)]
    pub regularization: RegularizationParams,
    #[serde(default)]
    pub solid: SolidSpec,
    #[serde(default)]
    pub container: ContainerSpec,
    #[serde(default)]
    pub force: ForceSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputSpec,
}

impl SchemeConfig {
    pub fn new(mode: Mode, tau: f64, h: f64, t_end: f64) -> Self {
        Self {
            mode,
            tau,
            h,
            t_end,
            material: MaterialParams::default(),
            regularization: RegularizationParams::default(),
            solid: SolidSpec::default(),
            container: ContainerSpec::default(),
            force: ForceSpec::default(),
            initial: InitialSpec::default(),
            tolerances: Tolerances::default(),
            output: OutputSpec::default(),
        }
    }

    /// Steps per epoch.
    pub fn window(&self) -> usize {
        (self.h / self.tau).round() as usize
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.tau - 1e-9).ceil().max(0.0) as usize
    }

    /// All violated invariants as `(field path, message)`.
    pub fn violations(&self) -> Vec<(String, String)> {
        let mut v: Vec<(String, String)> = Vec::new();
        let mut push = |f: &str, m: String| v.push((f.to_string(), m));
        if !(self.tau > 0.0) {
            push("tau", format!("tau > 0 required (tau = {})", self.tau));
        }
        if !(self.h > 0.0) {
            push("h", format!("h > 0 required (h = {})", self.h));
        }
        if self.tau > 0.0 && self.h > 0.0 {
            let r = self.h / self.tau;
            if (r - r.round()).abs() > 1e-9 * r {
                push("h", format!("h/tau must be an integer (h/tau = {r})"));
            }
            if self.tau > self.h / 4.0 * (1.0 + 1e-12) {
                push("tau", format!("tau <= h/4 required (tau = {}, h = {})", self.tau, self.h));
            }
        }
        if !(self.t_end > 0.0) {
            push("t_end", format!("t_end > 0 required (t_end = {})", self.t_end));
        }
        v.extend(self.material.violations(2));
        v.extend(self.regularization.violations());
        let mut push = |f: &str, m: String| v.push((f.to_string(), m));
        let s = &self.solid;
        if s.nodes[0] < 2 || s.nodes[1] < 2 {
            push("solid.nodes", format!("at least 2 nodes per axis required (nodes = {:?})", s.nodes));
        }
        if !(s.spacing > 0.0) {
            push("solid.spacing", format!("spacing > 0 required (spacing = {})", s.spacing));
        }
        let c = &self.container;
        if c.cells[0] < 8 || c.cells[1] < 8 {
            push("container.cells", format!("at least 8 cells per axis required (cells = {:?})", c.cells));
        }
        if !(c.min[0] < c.max[0] && c.min[1] < c.max[1]) {
            push("container", "min < max required on both axes".into());
        } else if s.spacing > 0.0 {
            let lo = [s.origin[0], s.origin[1]];
            let hi = [s.origin[0] + s.spacing * (s.nodes[0].max(1) - 1) as f64, s.origin[1] + s.spacing * (s.nodes[1].max(1) - 1) as f64];
            if !(lo[0] > c.min[0] && lo[1] > c.min[1] && hi[0] < c.max[0] && hi[1] < c.max[1]) {
                push("solid.origin", "the reference solid must lie strictly inside the container".into());
            }
        }
        let f = &self.force;
        if f.kind == ForceKind::Localized && !(f.radius > 0.0) {
            push("force.radius", format!("radius > 0 required (radius = {})", f.radius));
        }
        if !(f.ramp >= 0.0) {
            push("force.ramp", format!("ramp >= 0 required (ramp = {})", f.ramp));
        }
        let t = &self.tolerances;
        for (name, x) in [("grad_tol", t.grad_tol), ("lin_tol", t.lin_tol), ("ineq_tol", t.ineq_tol)] {
            if !(x > 0.0) {
                push(&format!("tolerances.{name}"), format!("{name} > 0 required ({name} = {x})"));
            }
        }
        if t.max_iters == 0 {
            push("tolerances.max_iters", "max_iters >= 1 required".into());
        }
        if t.subsamples == 0 {
            push("tolerances.subsamples", "subsamples >= 1 required".into());
        }
        if !(t.det_floor > 0.0) {
            push("tolerances.det_floor", format!("det_floor > 0 required (det_floor = {})", t.det_floor));
        }
        if !(t.contact_gap >= 0.0) {
            push("tolerances.contact_gap", format!("contact_gap >= 0 required (contact_gap = {})", t.contact_gap));
        }
        if let Some(x) = t.cn_tol {
            if !(x >= 0.0) {
                push("tolerances.cn_tol", format!("cn_tol >= 0 required (cn_tol = {x})"));
            }
        }
        v
    }
}
