//! Coefficient systems and the jump-adapted Euler integrator.
//!
//! The equation is
//!
//! ```text
//! dx = σ(x-) dB + b(x-) dt + ∫ g0(x-, z) Ñ0(dt, dz) + ∫ g1(x-, z) N1(dt, dz)
//! ```
//!
//! with `b = b1 - b2`. Large jumps are applied at their exact times; jumps of
//! `nu0` below the noise threshold enter through the Gaussian substitute (or
//! not at all) and the compensator of the large ones through the drift.

use crate::error::{Error, Result};
use crate::levy_measure::LevyMeasure;
use crate::noise::{Mark, NoiseModel, NoisePath, SmallJumpMode};
use crate::quadrature::gauss_legendre;
use crate::yw::Modulus;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type JumpFn = Arc<dyn Fn(f64, f64, Mark) -> f64 + Send + Sync>;

/// A scalar coefficient `x ↦ f(x)`.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Coefficient {
    Zero,
    Constant { value: f64 },
    /// `slope·x + intercept`.
    Linear { slope: f64, intercept: f64 },
    /// `(scale·|x|)^exponent`.
    AbsPower { scale: f64, exponent: f64 },
    /// `sign(x)·(scale·|x|)^exponent`.
    SignedPower { scale: f64, exponent: f64 },
    /// Piecewise linear through the knots, constant outside.
    Tabulated { knots: Vec<f64>, values: Vec<f64> },
    #[serde(skip)]
    Custom(ScalarFn),
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Zero => write!(f, "Zero"),
            Coefficient::Constant { value } => write!(f, "Constant({value})"),
            Coefficient::Linear { slope, intercept } => write!(f, "Linear({slope}·x + {intercept})"),
            Coefficient::AbsPower { scale, exponent } => write!(f, "AbsPower(({scale}|x|)^{exponent})"),
            Coefficient::SignedPower { scale, exponent } => write!(f, "SignedPower(sign·({scale}|x|)^{exponent})"),
            Coefficient::Tabulated { knots, .. } => write!(f, "Tabulated({} knots)", knots.len()),
            Coefficient::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl PartialEq for Coefficient {
    fn eq(&self, other: &Self) -> bool {
        use Coefficient::*;
        match (self, other) {
            (Zero, Zero) => true,
            (Constant { value: a }, Constant { value: b }) => a == b,
            (Linear { slope: a, intercept: b }, Linear { slope: c, intercept: d }) => a == c && b == d,
            (AbsPower { scale: a, exponent: b }, AbsPower { scale: c, exponent: d }) => a == c && b == d,
            (SignedPower { scale: a, exponent: b }, SignedPower { scale: c, exponent: d }) => a == c && b == d,
            (Tabulated { knots: a, values: b }, Tabulated { knots: c, values: d }) => a == c && b == d,
            (Custom(a), Custom(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl Coefficient {
    pub fn custom<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        Coefficient::Custom(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Coefficient::Zero => 0.0,
            Coefficient::Constant { value } => *value,
            Coefficient::Linear { slope, intercept } => slope * x + intercept,
            Coefficient::AbsPower { scale, exponent } => (scale * x.abs()).powf(*exponent),
            Coefficient::SignedPower { scale, exponent } => {
                if x == 0.0 {
                    0.0
                } else {
                    x.signum() * (scale * x.abs()).powf(*exponent)
                }
            }
            Coefficient::Tabulated { knots, values } => {
                if x <= knots[0] {
                    return values[0];
                }
                if x >= knots[knots.len() - 1] {
                    return values[values.len() - 1];
                }
                let i = knots.partition_point(|&k| k <= x) - 1;
                let w = (x - knots[i]) / (knots[i + 1] - knots[i]);
                values[i] * (1.0 - w) + values[i + 1] * w
            }
            Coefficient::Custom(f) => f(x),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Coefficient::Zero)
    }

    fn validate(&self, name: &str) -> Result<()> {
        let ok = match self {
            Coefficient::AbsPower { scale, exponent } | Coefficient::SignedPower { scale, exponent } => {
                *scale >= 0.0 && *exponent > 0.0
            }
            Coefficient::Tabulated { knots, values } => {
                knots.len() >= 2 && knots.len() == values.len() && knots.windows(2).all(|w| w[1] > w[0])
            }
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("invalid coefficient {name}: {self:?}")))
        }
    }
}

/// Jump action `g(x, z, mark)`.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum JumpCoefficient {
    Zero,
    /// `h(x)·z`.
    Multiplicative { h: Coefficient },
    #[serde(skip)]
    Custom(JumpFn),
}

impl fmt::Debug for JumpCoefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JumpCoefficient::Zero => write!(f, "Zero"),
            JumpCoefficient::Multiplicative { h } => write!(f, "Multiplicative({h:?}·z)"),
            JumpCoefficient::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl PartialEq for JumpCoefficient {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (JumpCoefficient::Zero, JumpCoefficient::Zero) => true,
            (JumpCoefficient::Multiplicative { h: a }, JumpCoefficient::Multiplicative { h: b }) => a == b,
            (JumpCoefficient::Custom(a), JumpCoefficient::Custom(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl JumpCoefficient {
    pub fn multiplicative(h: Coefficient) -> Self {
        JumpCoefficient::Multiplicative { h }
    }

    pub fn custom<F: Fn(f64, f64, Mark) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        JumpCoefficient::Custom(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, x: f64, z: f64, mark: Mark) -> f64 {
        match self {
            JumpCoefficient::Zero => 0.0,
            JumpCoefficient::Multiplicative { h } => h.eval(x) * z,
            JumpCoefficient::Custom(f) => f(x, z, mark),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, JumpCoefficient::Zero)
    }
}

/// Regularity metadata declared alongside the coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regularity {
    /// Growth constant of the linear-growth conditions.
    pub k: f64,
    /// Hölder-type exponent `p` of the jump coefficient.
    pub p: f64,
    /// Modulus `ρ` for `σ` and `g0`.
    pub rho: Modulus,
    /// Modulus `r` for `b1` and `g1`.
    pub r: Modulus,
    /// Whether the non-negativity conditions are claimed.
    pub nonneg_conditions: bool,
    /// Constant `c` of the envelope `f(z) = c·z`.
    pub envelope: f64,
}

/// Parameters of `dx = (a|x|)^{1/r} dB + sign(x)(c|x|)^{1/q} dL0 + (βx + b)dt + dL1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CbiParams {
    pub a: f64,
    pub b: f64,
    pub beta: f64,
    pub c: f64,
    pub r: f64,
    pub q: f64,
}

/// The coefficient tuple `(σ, b1, b2, g0, g1)` with its declared regularity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdeSystem {
    pub sigma: Coefficient,
    pub b1: Coefficient,
    pub b2: Coefficient,
    pub g0: JumpCoefficient,
    pub g1: JumpCoefficient,
    pub regularity: Regularity,
    /// Set for systems built by [`SdeSystem::cbi`].
    pub cbi: Option<CbiParams>,
}

/// Size of the box used for the bounded-box condition checks.
pub const CBI_BOX: f64 = 1000.0;

impl SdeSystem {
    /// Builds the system with every coefficient zero and trivially declared
    /// regularity.
    pub fn zero() -> Self {
        SdeSystem {
            sigma: Coefficient::Zero,
            b1: Coefficient::Zero,
            b2: Coefficient::Zero,
            g0: JumpCoefficient::Zero,
            g1: JumpCoefficient::Zero,
            regularity: Regularity {
                k: 0.0,
                p: 0.5,
                rho: Modulus::power(0.5),
                r: Modulus::Linear { slope: 1.0 },
                nonneg_conditions: false,
                envelope: 1.0,
            },
            cbi: None,
        }
    }

    /// `σ(x) = s·x`, `b(x) = β·x + b0`, no jumps. Declared `K` bounds
    /// `σ² + b² ≤ K(1 + x²)`.
    pub fn linear(sigma_slope: f64, drift_slope: f64, drift_intercept: f64) -> Self {
        let k = 2.0 * (sigma_slope * sigma_slope + drift_slope * drift_slope).max(drift_intercept * drift_intercept);
        let lip = sigma_slope.abs().max(1e-300);
        SdeSystem {
            sigma: Coefficient::Linear { slope: sigma_slope, intercept: 0.0 },
            b1: Coefficient::Linear { slope: drift_slope, intercept: drift_intercept },
            regularity: Regularity {
                k: if drift_intercept == 0.0 { sigma_slope * sigma_slope + drift_slope * drift_slope } else { k },
                p: 0.5,
                rho: Modulus::Linear { slope: lip },
                r: Modulus::Linear { slope: drift_slope.abs().max(1e-300) },
                nonneg_conditions: false,
                envelope: 1.0,
            },
            ..SdeSystem::zero()
        }
    }

    /// The branching-with-immigration system. Declared metadata: `ρ(z) = C√z`
    /// style modulus with exponent `1/r`, `p = 1/q`, `r(z) = |β|z`.
    pub fn cbi(params: CbiParams) -> Result<Self> {
        let CbiParams { a, b, beta, c, r, q } = params;
        if !(a >= 0.0 && b >= 0.0 && c >= 0.0 && (1.0..=2.0).contains(&r) && q >= 1.0 && beta.is_finite()) {
            return Err(Error::domain(format!("CBI parameters out of range: {params:?}")));
        }
        // |σ(x)-σ(y)| ≤ a^{1/r}2^{1-1/r}(2M)^{1/r-1/2}|x-y|^{1/2} and
        // |h0(x)-h0(y)|^{q/2} ≤ √c·2^{(q-1)/2}|x-y|^{1/2} on |x|,|y| ≤ M.
        let m = CBI_BOX;
        let rho_scale = a.powf(1.0 / r) * 2f64.powf(1.0 - 1.0 / r) * (2.0 * m).powf(1.0 / r - 0.5)
            + c.sqrt() * 2f64.powf((q - 1.0) / 2.0);
        let k = a.max(1.0) + beta.abs().max(b) + c.max(1.0) + 1.0;
        Ok(SdeSystem {
            sigma: Coefficient::AbsPower { scale: a, exponent: 1.0 / r },
            b1: Coefficient::Linear { slope: beta, intercept: b },
            b2: Coefficient::Zero,
            g0: JumpCoefficient::multiplicative(Coefficient::SignedPower { scale: c, exponent: 1.0 / q }),
            g1: JumpCoefficient::multiplicative(Coefficient::Constant { value: 1.0 }),
            regularity: Regularity {
                k,
                p: 1.0 / q,
                rho: Modulus::Power { exponent: 0.5, scale: rho_scale.max(1e-300) },
                r: Modulus::Linear { slope: beta.abs().max(1e-300) },
                nonneg_conditions: true,
                envelope: 1.0,
            },
            cbi: Some(params),
        })
    }

    /// `b(x) = b1(x) - b2(x)`.
    #[inline]
    pub fn drift(&self, x: f64) -> f64 {
        self.b1.eval(x) - self.b2.eval(x)
    }

    /// Checks parameter validity and spot-checks the declared monotonicity
    /// and sign conditions on 200 deterministic random triples.
    pub fn validate(&self) -> Result<()> {
        self.sigma.validate("sigma")?;
        self.b1.validate("b1")?;
        self.b2.validate("b2")?;
        let mut rng = crate::rng::StreamKey::new(0x5eed, 0).stream(crate::rng::Purpose::Sampling);
        for _ in 0..200 {
            let u: f64 = rng.random_range(-10.0..10.0);
            let v: f64 = rng.random_range(-10.0..10.0);
            let (x, y) = if u <= v { (u, v) } else { (v, u) };
            let z = (-rng.random::<f64>().max(1e-300).ln()).exp() - 0.99;
            let z = z.abs() + 1e-3;
            let mark = if rng.random::<bool>() { Mark::Driver0 } else { Mark::Driver1 };
            if self.g0.eval(x, z, mark) > self.g0.eval(y, z, mark) + 1e-12 {
                return Err(Error::spec(format!("g0 is not non-decreasing in x: witness x={x}, y={y}, z={z}")));
            }
            if self.b2.eval(x) > self.b2.eval(y) + 1e-12 {
                return Err(Error::spec(format!("b2 is not non-decreasing: witness x={x}, y={y}")));
            }
            if self.regularity.nonneg_conditions {
                let xp = x.abs();
                if self.g1.eval(xp, z, Mark::Driver1) + xp < -1e-12 {
                    return Err(Error::spec(format!("g1(x, z) + x < 0 at x={xp}, z={z}")));
                }
            }
        }
        if self.regularity.nonneg_conditions {
            if self.sigma.eval(0.0) != 0.0 {
                return Err(Error::spec("declared non-negativity conditions need σ(0) = 0"));
            }
            if self.drift(0.0) < 0.0 {
                return Err(Error::spec("declared non-negativity conditions need b(0) ≥ 0"));
            }
            for z in [1e-3, 0.1, 1.0, 10.0] {
                if self.g0.eval(0.0, z, Mark::Driver0) != 0.0 {
                    return Err(Error::spec("declared non-negativity conditions need g0(0, z) = 0"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum SimulationMode {
    Plain,
    /// Coefficients see `χ_m(x)` and jump actions are cut at `±m`.
    Truncated { m: f64 },
    /// Coefficients see `x ∨ 0` and negative states are clamped to 0.
    Nonneg,
    NonnegTruncated { m: f64 },
}

impl SimulationMode {
    fn truncation(&self) -> Option<f64> {
        match self {
            SimulationMode::Truncated { m } | SimulationMode::NonnegTruncated { m } => Some(*m),
            _ => None,
        }
    }

    fn nonneg(&self) -> bool {
        matches!(self, SimulationMode::Nonneg | SimulationMode::NonnegTruncated { .. })
    }
}

#[inline]
pub fn chi(m: f64, x: f64) -> f64 {
    x.clamp(-m, m)
}

/// One simulated trajectory on the noise grid augmented with jump times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionPath {
    pub times: Vec<f64>,
    /// States; at a jump time the stored value is the post-jump state.
    pub states: Vec<f64>,
    /// Position in `times` of each noise grid point.
    pub grid_index: Vec<usize>,
    pub truncation_hit: bool,
    pub clamp_count: u64,
    /// Number of integration steps (continuous pieces).
    pub steps: u64,
}

impl SolutionPath {
    /// States at the noise grid points.
    pub fn grid_states(&self) -> Vec<f64> {
        self.grid_index.iter().map(|&i| self.states[i]).collect()
    }

    pub fn terminal(&self) -> f64 {
        *self.states.last().unwrap()
    }

    /// `sup_{s ≤ t_i} x(s)²` at each grid point, over all stored states.
    pub fn running_sup_sq(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.grid_index.len());
        let mut sup = 0.0f64;
        let mut j = 0;
        for &gi in &self.grid_index {
            while j <= gi {
                sup = sup.max(self.states[j] * self.states[j]);
                j += 1;
            }
            out.push(sup);
        }
        out
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("t,x\n");
        for (t, x) in self.times.iter().zip(&self.states) {
            s.push_str(&format!("{t},{x}\n"));
        }
        s
    }
}

/// Fixed quadrature rule `∫ f dν ≈ Σ w_i f(z_i)` on a range of `z`.
#[derive(Debug, Clone)]
struct NodeRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl NodeRule {
    /// Rule for `∫_θ^∞ f(z) ν(dz)` (`lower = false`) or `∫_0^θ` (`lower = true`)
    /// through `z = θ·e^{±t/(1-t)}` with 16 Gauss–Legendre panels of 16 points.
    fn build(measure: &LevyMeasure, theta: f64, lower: bool, weight_power: i32) -> NodeRule {
        if let crate::levy_measure::MeasureShape::PointMass { location, mass } = measure.shape {
            let inside = if lower { location <= theta } else { location > theta };
            return if inside {
                NodeRule { nodes: vec![location], weights: vec![mass * location.powi(weight_power)] }
            } else {
                NodeRule { nodes: vec![], weights: vec![] }
            };
        }
        let (x, w) = gauss_legendre(16);
        let panels = 16;
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let base = if theta > 0.0 { theta } else { 1.0 };
        let ranges: Vec<(f64, bool)> = if theta > 0.0 { vec![(base, lower)] } else { vec![(1.0, true), (1.0, false)] };
        for (base, lower) in ranges {
            for p in 0..panels {
                let (a, b) = (p as f64 / panels as f64, (p + 1) as f64 / panels as f64);
                for (xi, wi) in x.iter().zip(&w) {
                    let t = 0.5 * (a + b) + 0.5 * (b - a) * xi;
                    let om = 1.0 - t;
                    let s = t / om;
                    let z = if lower { base * (-s).exp() } else { base * s.exp() };
                    let jac = z / (om * om) * 0.5 * (b - a);
                    let dens = measure.density(z).unwrap_or(0.0);
                    let wt = wi * jac * dens * z.powi(weight_power);
                    if z > 0.0 && z.is_finite() && wt.is_finite() && wt != 0.0 {
                        nodes.push(z);
                        weights.push(wt);
                    }
                }
            }
        }
        NodeRule { nodes, weights }
    }

    fn apply<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(z, w)| w * f(*z)).sum()
    }
}

/// Constants tying a system to a noise model.
#[derive(Debug, Clone)]
pub struct Integrator {
    system: Arc<SdeSystem>,
    model: Arc<NoiseModel>,
    /// `∫_θ^∞ z ν0(dz)` for the multiplicative compensator.
    large_first_moment: f64,
    /// `ν0((θ, ∞))`.
    nu0: Option<LevyMeasure>,
    /// Rules for custom `g0`: large-jump compensator and small-jump projection.
    large_rule: Option<NodeRule>,
    small_rule: Option<NodeRule>,
    small_rule_z1: Option<NodeRule>,
    /// Rule for `∫_0^{θ1} g1 ν1` with custom `g1`.
    sub_rule: Option<NodeRule>,
}

impl Integrator {
    pub fn new(system: Arc<SdeSystem>, model: Arc<NoiseModel>) -> Result<Self> {
        let nu0 = model.spec.nu0.clone();
        if nu0.is_none() && !system.g0.is_zero() {
            // g0 without a driver measure simply never acts.
        }
        let theta = model.threshold0;
        let mut large_first_moment = 0.0;
        let mut large_rule = None;
        let mut small_rule = None;
        let mut small_rule_z1 = None;
        if let Some(nu) = &nu0 {
            large_first_moment = nu.moment(1, theta, f64::INFINITY)?;
            if let JumpCoefficient::Custom(_) = system.g0 {
                large_rule = Some(NodeRule::build(nu, theta, false, 0));
                if theta > 0.0 {
                    small_rule = Some(NodeRule::build(nu, theta, true, 0));
                    small_rule_z1 = Some(NodeRule::build(nu, theta, true, 1));
                }
            }
        }
        let mut sub_rule = None;
        if let (Some(nu1), JumpCoefficient::Custom(_)) = (&model.spec.nu1, &system.g1) {
            if model.threshold1 > 0.0 {
                sub_rule = Some(NodeRule::build(nu1, model.threshold1, true, 0));
            }
        }
        Ok(Integrator { system, model, large_first_moment, nu0, large_rule, small_rule, small_rule_z1, sub_rule })
    }

    pub fn system(&self) -> &SdeSystem {
        &self.system
    }

    pub fn model(&self) -> &Arc<NoiseModel> {
        &self.model
    }

    /// Drift seen by the scheme at the evaluation point `xh`, and the
    /// coefficient of the small-jump increment.
    fn drift_and_small(&self, xh: f64, trunc: Option<f64>) -> (f64, f64) {
        let sys = &*self.system;
        let mut drift = sys.drift(xh);
        let mut small = 0.0;
        match &sys.g0 {
            JumpCoefficient::Zero => {}
            JumpCoefficient::Multiplicative { h } => {
                let hv = h.eval(xh);
                drift -= hv * self.large_first_moment;
                small = hv;
                if let (Some(m), Some(nu)) = (trunc, &self.nu0) {
                    let theta = self.model.threshold0;
                    if theta > 0.0 && hv.abs() * theta > m {
                        // ∫_{m/|h|}^{θ} (h z - sign(h) m) ν0(dz)
                        let z0 = m / hv.abs();
                        let g = nu.moment(1, z0, theta).unwrap_or(f64::NAN);
                        let n = nu.moment(0, z0, theta).unwrap_or(f64::NAN);
                        drift -= hv * g - hv.signum() * m * n;
                    }
                }
            }
            JumpCoefficient::Custom(f) => {
                let g = |z: f64| f(xh, z, Mark::Driver0);
                if let Some(rule) = &self.large_rule {
                    drift -= rule.apply(g);
                }
                if let (Some(r0), Some(r1)) = (&self.small_rule, &self.small_rule_z1) {
                    let h = self.model.small_jump_second_moment;
                    if h > 0.0 {
                        small = r1.apply(g) / h;
                    }
                    if let Some(m) = trunc {
                        drift -= r0.apply(|z| {
                            let v = g(z);
                            v - chi(m, v)
                        });
                    }
                }
            }
        }
        if self.model.threshold1 > 0.0 {
            match &sys.g1 {
                JumpCoefficient::Zero => {}
                JumpCoefficient::Multiplicative { h } => drift += h.eval(xh) * self.model.subordinator_small_mean,
                JumpCoefficient::Custom(f) => {
                    if let Some(rule) = &self.sub_rule {
                        drift += rule.apply(|z| f(xh, z, Mark::Driver1));
                    }
                }
            }
        }
        if self.model.mode() == SmallJumpMode::CompensateOnly {
            small = 0.0;
        }
        (drift, small)
    }

    /// Integrates from `x0` along `noise`.
    pub fn simulate(&self, x0: f64, noise: &NoisePath, mode: SimulationMode) -> Result<SolutionPath> {
        if noise.spec() != &self.model.spec {
            return Err(Error::spec("noise path was sampled from a different noise specification"));
        }
        let trunc = mode.truncation();
        if let Some(m) = trunc {
            if !(m > 0.0) {
                return Err(Error::domain("truncation level must be positive"));
            }
        }
        let nonneg = mode.nonneg();
        let sys = &*self.system;
        let eval_point = |x: f64| {
            let x = if nonneg { x.max(0.0) } else { x };
            match trunc {
                Some(m) => chi(m, x),
                None => x,
            }
        };
        let cells = noise.cells();
        let mut times = Vec::with_capacity(cells + 1 + noise.jumps.len());
        let mut states = Vec::with_capacity(cells + 1 + noise.jumps.len());
        let mut grid_index = Vec::with_capacity(cells + 1);
        let mut x = x0;
        let mut truncation_hit = trunc.is_some_and(|m| x0.abs() >= m);
        let mut clamp_count = 0u64;
        let mut steps = 0u64;
        times.push(noise.grid[0]);
        states.push(x);
        grid_index.push(0);
        let mut bridges = noise.bridges();
        let mut jump_pos = 0;
        let jumps = &noise.jumps;
        let mut event_times: Vec<f64> = Vec::new();

        let step = |x: &mut f64, dt: f64, db: f64, ds: f64, t_end: f64, clamp_count: &mut u64| -> Result<()> {
            let xh = eval_point(*x);
            let (drift, small) = self.drift_and_small(xh, trunc);
            let mut next = *x + drift * dt;
            if db != 0.0 {
                next += sys.sigma.eval(xh) * db;
            }
            if ds != 0.0 {
                next += small * ds;
            }
            if nonneg && next < 0.0 {
                next = 0.0;
                *clamp_count += 1;
            }
            if !next.is_finite() {
                return Err(Error::BlowUp { time: t_end });
            }
            *x = next;
            Ok(())
        };

        for i in 0..cells {
            let (s, u) = (noise.grid[i], noise.grid[i + 1]);
            let start = jump_pos;
            while jump_pos < jumps.len() && jumps[jump_pos].time <= u {
                jump_pos += 1;
            }
            let cell_jumps = &jumps[start..jump_pos];
            event_times.clear();
            for j in cell_jumps {
                if j.time < u && event_times.last() != Some(&j.time) {
                    event_times.push(j.time);
                }
            }
            let pieces = if event_times.is_empty() {
                None
            } else {
                Some(bridges.pieces(s, u, noise.brownian[i], noise.small_jumps[i], &event_times))
            };
            let mut lo = s;
            let mut k = 0;
            let n_pieces = event_times.len() + 1;
            for piece in 0..n_pieces {
                let hi = if piece < event_times.len() { event_times[piece] } else { u };
                let (db, ds) = match &pieces {
                    Some(p) => p[piece],
                    None => (noise.brownian[i], noise.small_jumps[i]),
                };
                step(&mut x, hi - lo, db, ds, hi, &mut clamp_count)?;
                steps += 1;
                // Jumps at `hi`.
                while k < cell_jumps.len() && cell_jumps[k].time <= hi {
                    let j = cell_jumps[k];
                    let xh = eval_point(x);
                    let action = match j.mark {
                        Mark::Driver0 => {
                            let g = sys.g0.eval(xh, j.size, j.mark);
                            match trunc {
                                Some(m) => chi(m, g),
                                None => g,
                            }
                        }
                        Mark::Driver1 => sys.g1.eval(xh, j.size, j.mark),
                    };
                    x += action;
                    if nonneg && x < 0.0 {
                        x = 0.0;
                        clamp_count += 1;
                    }
                    if !x.is_finite() {
                        return Err(Error::BlowUp { time: j.time });
                    }
                    k += 1;
                }
                if let Some(m) = trunc {
                    if x.abs() >= m {
                        truncation_hit = true;
                    }
                }
                times.push(hi);
                states.push(x);
                lo = hi;
            }
            grid_index.push(times.len() - 1);
        }
        Ok(SolutionPath { times, states, grid_index, truncation_hit, clamp_count, steps })
    }
}

/// Convenience wrapper building an [`Integrator`] for one path.
pub fn simulate(system: &SdeSystem, x0: f64, noise: &NoisePath, mode: SimulationMode) -> Result<SolutionPath> {
    Integrator::new(Arc::new(system.clone()), Arc::clone(noise.model()))?.simulate(x0, noise, mode)
}

/// Running `E[1 + sup_{s≤t} x(s)²]` at each grid time.
pub fn moment_sup_second(paths: &[SolutionPath]) -> Result<Vec<f64>> {
    if paths.len() < 100 {
        return Err(Error::domain(format!("need at least 100 paths, got {}", paths.len())));
    }
    let n = paths[0].grid_index.len();
    let mut acc = SupMoment::new(n);
    for p in paths {
        if p.grid_index.len() != n {
            return Err(Error::domain("paths are not on a common grid"));
        }
        acc.add(p);
    }
    Ok(acc.mean())
}

/// Streaming accumulator for `E[1 + sup x²]` per grid time.
#[derive(Debug, Clone)]
pub struct SupMoment {
    sums: Vec<f64>,
    count: usize,
}

impl SupMoment {
    pub fn new(points: usize) -> Self {
        SupMoment { sums: vec![0.0; points], count: 0 }
    }

    pub fn add(&mut self, path: &SolutionPath) {
        for (s, v) in self.sums.iter_mut().zip(path.running_sup_sq()) {
            *s += 1.0 + v;
        }
        self.count += 1;
    }

    pub fn add_values(&mut self, sup_sq: &[f64]) {
        for (s, v) in self.sums.iter_mut().zip(sup_sq) {
            *s += 1.0 + v;
        }
        self.count += 1;
    }

    pub fn mean(&self) -> Vec<f64> {
        self.sums.iter().map(|s| s / self.count as f64).collect()
    }
}

/// `(1 + 6E[x0²])·exp(6K(4+t)t)`.
pub fn moment_bound(k: f64, second_moment_x0: f64, t: f64) -> f64 {
    (1.0 + 6.0 * second_moment_x0) * (6.0 * k * (4.0 + t) * t).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_measure::Role;
    use crate::noise::{uniform_grid, NoiseSpec};

    #[test]
    fn linear_ode_limit() {
        let mut sys = SdeSystem::zero();
        sys.b1 = Coefficient::Linear { slope: 0.5, intercept: 0.2 };
        let model = NoiseModel::new(&NoiseSpec::new(1.0, 0), 1000).unwrap();
        let path = model.sample(&uniform_grid(1.0, 1000), 0).unwrap();
        let sol = simulate(&sys, 1.0, &path, SimulationMode::Plain).unwrap();
        let exact = (1.0 + 0.2 / 0.5) * 0.5f64.exp() - 0.2 / 0.5;
        assert!((sol.terminal() - exact).abs() < 2e-3, "{} vs {exact}", sol.terminal());
    }

    #[test]
    fn additive_noise_is_integrated_verbatim() {
        let nu = LevyMeasure::point_mass(0.7, 2.0, Role::CompensatedDriver).unwrap();
        let spec = NoiseSpec::new(1.0, 3).with_driver(nu);
        let model = NoiseModel::new(&spec, 50).unwrap();
        let path = model.sample(&uniform_grid(1.0, 50), 0).unwrap();
        let mut sys = SdeSystem::zero();
        sys.g0 = JumpCoefficient::multiplicative(Coefficient::Constant { value: 1.0 });
        let sol = simulate(&sys, 0.5, &path, SimulationMode::Plain).unwrap();
        // L0(t) = Σ jumps - t·0.7·2
        for (i, &gi) in sol.grid_index.iter().enumerate() {
            let t = path.grid[i];
            let jumps: f64 = path.jumps.iter().filter(|j| j.time <= t).map(|j| j.size).sum();
            let want = 0.5 + jumps - 1.4 * t;
            assert!((sol.states[gi] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn truncated_matches_plain_when_inactive() {
        let sys = SdeSystem::cbi(CbiParams { a: 1.0, b: 0.1, beta: -0.5, c: 1.0, r: 2.0, q: 1.5 }).unwrap();
        let spec = NoiseSpec::new(1.0, 8).with_brownian().with_driver(LevyMeasure::stable(1.5, 1.0).unwrap());
        let model = NoiseModel::new(&spec, 200).unwrap();
        let path = model.sample(&uniform_grid(1.0, 200), 1).unwrap();
        let plain = simulate(&sys, 1.0, &path, SimulationMode::Nonneg).unwrap();
        let trunc = simulate(&sys, 1.0, &path, SimulationMode::NonnegTruncated { m: 1e6 }).unwrap();
        assert_eq!(plain.states.len(), trunc.states.len());
        for (a, b) in plain.states.iter().zip(&trunc.states) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert!(!trunc.truncation_hit);
    }

    #[test]
    fn cbi_validates_and_linear_k() {
        let sys = SdeSystem::cbi(CbiParams { a: 1.0, b: 0.1, beta: 0.0, c: 1.0, r: 2.0, q: 1.5 }).unwrap();
        sys.validate().unwrap();
        assert!(SdeSystem::cbi(CbiParams { a: 1.0, b: 0.1, beta: 0.0, c: 1.0, r: 3.0, q: 1.5 }).is_err());
        let lin = SdeSystem::linear(1.0, -1.0, 0.0);
        assert_eq!(lin.regularity.k, 2.0);
    }

    #[test]
    fn decreasing_g0_is_rejected() {
        let mut sys = SdeSystem::zero();
        sys.g0 = JumpCoefficient::multiplicative(Coefficient::Linear { slope: -1.0, intercept: 0.0 });
        assert!(sys.validate().is_err());
    }

    #[test]
    fn custom_g0_matches_multiplicative() {
        let spec = NoiseSpec::new(1.0, 8).with_brownian().with_driver(LevyMeasure::stable(1.5, 1.0).unwrap());
        let model = NoiseModel::new(&spec, 100).unwrap();
        let path = model.sample(&uniform_grid(1.0, 100), 2).unwrap();
        let mut a = SdeSystem::zero();
        a.sigma = Coefficient::Constant { value: 0.3 };
        a.g0 = JumpCoefficient::multiplicative(Coefficient::Linear { slope: 0.5, intercept: 1.0 });
        let mut b = a.clone();
        b.g0 = JumpCoefficient::custom(|x, z, _| (0.5 * x + 1.0) * z);
        let sa = simulate(&a, 0.2, &path, SimulationMode::Plain).unwrap();
        let sb = simulate(&b, 0.2, &path, SimulationMode::Plain).unwrap();
        assert!((sa.terminal() - sb.terminal()).abs() < 1e-6 * (1.0 + sa.terminal().abs()));
    }

    #[test]
    fn moment_bound_constants() {
        assert_eq!(moment_bound(0.0, 0.0, 1.0), 1.0);
        assert!((moment_bound(1.0, 0.0, 1.0) - 30f64.exp()).abs() < 1e-3 * 30f64.exp());
    }
}
