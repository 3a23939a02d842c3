//! Jump-intensity measures on `(0, ∞)`.
//!
//! A [`LevyMeasure`] is a shape together with the integrability contract it
//! must satisfy: a compensated driver needs `∫(z ∧ z²) ν(dz) < ∞`, a
//! subordinator needs `∫(1 ∧ z) ν(dz) < ∞`. All functionals reduce to the
//! moment integral `∫_{(a,b]} z^j ν(dz)`, evaluated in closed form for the
//! stable and point-mass shapes and by adaptive quadrature otherwise.

use crate::error::{Error, Result};
use crate::quadrature::{self, gauss_legendre, Tolerance};
use crate::rng;
use crate::stats::fit_line;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    CompensatedDriver,
    Subordinator,
}

/// Probability law of the jump sizes of a finite-activity measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum JumpLaw {
    Exponential { mean: f64 },
    Uniform { low: f64, high: f64 },
    Gamma { shape: f64, scale: f64 },
}

impl JumpLaw {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            JumpLaw::Exponential { mean } => mean > 0.0,
            JumpLaw::Uniform { low, high } => low >= 0.0 && high > low,
            JumpLaw::Gamma { shape, scale } => shape > 0.0 && scale > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("invalid jump law {self:?}")))
        }
    }

    pub fn density(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        match *self {
            JumpLaw::Exponential { mean } => (-z / mean).exp() / mean,
            JumpLaw::Uniform { low, high } => {
                if z > low && z <= high {
                    1.0 / (high - low)
                } else {
                    0.0
                }
            }
            JumpLaw::Gamma { shape, scale } => {
                ((shape - 1.0) * z.ln() - z / scale - shape * scale.ln() - libm::lgamma(shape)).exp()
            }
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match *self {
            JumpLaw::Uniform { low, high } if low > 0.0 => vec![low, high],
            JumpLaw::Uniform { high, .. } => vec![high],
            _ => vec![],
        }
    }

    fn near_zero_exponent(&self) -> Option<f64> {
        match *self {
            JumpLaw::Exponential { .. } => Some(0.0),
            JumpLaw::Uniform { low, .. } => (low == 0.0).then_some(0.0),
            JumpLaw::Gamma { shape, .. } => Some(shape - 1.0),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            JumpLaw::Exponential { mean } => mean * rng::standard_exponential(rng),
            JumpLaw::Uniform { low, high } => low + (high - low) * rng::uniform(rng),
            JumpLaw::Gamma { shape, scale } => {
                use rand_distr::Distribution;
                rand_distr::Gamma::new(shape, scale).expect("validated gamma law").sample(rng)
            }
        }
    }
}

/// Behaviour of a tabulated density outside its knot range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EdgeBehavior {
    Zero,
    /// `d(z) = d_edge · (z / z_edge)^exponent`.
    Power { exponent: f64 },
    /// `d(z) = d_edge · exp(-rate · (z - z_edge))`, upper edge only.
    Exponential { rate: f64 },
}

/// A density given at strictly increasing knots, interpolated linearly in
/// `(ln z, ln d)` between knots (linearly in `(z, d)` when an endpoint value
/// is zero).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedDensity {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    pub below: EdgeBehavior,
    pub above: EdgeBehavior,
}

impl TabulatedDensity {
    pub fn new(knots: Vec<f64>, values: Vec<f64>, below: EdgeBehavior, above: EdgeBehavior) -> Result<Self> {
        if knots.len() < 2 || knots.len() != values.len() {
            return Err(Error::domain("tabulated density needs at least two (knot, value) pairs"));
        }
        if knots[0] <= 0.0 {
            return Err(Error::domain("tabulated knots must be positive"));
        }
        if let Some(w) = knots.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::domain(format!("tabulated knots not strictly increasing at {}", w[1])));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::domain(format!("tabulated density value {v} is negative or not finite")));
        }
        if matches!(below, EdgeBehavior::Exponential { .. }) {
            return Err(Error::domain("exponential behaviour is only allowed above the last knot"));
        }
        Ok(TabulatedDensity { knots, values, below, above })
    }

    /// Parse two-column text: abscissa and density per line, `#` comments.
    pub fn parse(text: &str, below: EdgeBehavior, above: EdgeBehavior) -> Result<Self> {
        let mut knots = Vec::new();
        let mut values = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).collect();
            if cols.len() != 2 {
                return Err(Error::Format(format!("line {}: expected two columns, found {}", lineno + 1, cols.len())));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Format(format!("line {}: {e}: {s:?}", lineno + 1)))
            };
            knots.push(parse(cols[0])?);
            values.push(parse(cols[1])?);
        }
        Self::new(knots, values, below, above)
    }

    pub fn load(path: &Path, below: EdgeBehavior, above: EdgeBehavior) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, below, above)
    }

    pub fn density(&self, z: f64) -> f64 {
        let n = self.knots.len();
        if z <= 0.0 {
            return 0.0;
        }
        if z < self.knots[0] {
            return match self.below {
                EdgeBehavior::Power { exponent } => self.values[0] * (z / self.knots[0]).powf(exponent),
                _ => 0.0,
            };
        }
        if z > self.knots[n - 1] {
            let (zn, dn) = (self.knots[n - 1], self.values[n - 1]);
            return match self.above {
                EdgeBehavior::Zero => 0.0,
                EdgeBehavior::Power { exponent } => dn * (z / zn).powf(exponent),
                EdgeBehavior::Exponential { rate } => dn * (-rate * (z - zn)).exp(),
            };
        }
        let i = match self.knots.binary_search_by(|k| k.total_cmp(&z)) {
            Ok(i) => return self.values[i],
            Err(i) => i - 1,
        };
        let (z0, z1) = (self.knots[i], self.knots[i + 1]);
        let (d0, d1) = (self.values[i], self.values[i + 1]);
        if d0 > 0.0 && d1 > 0.0 {
            let w = (z / z0).ln() / (z1 / z0).ln();
            (d0.ln() * (1.0 - w) + d1.ln() * w).exp()
        } else {
            let w = (z - z0) / (z1 - z0);
            d0 * (1.0 - w) + d1 * w
        }
    }

    fn near_zero_exponent(&self) -> Option<f64> {
        match self.below {
            EdgeBehavior::Power { exponent } if self.values[0] > 0.0 => Some(exponent),
            _ => None,
        }
    }

    fn tail_exponent(&self) -> Option<f64> {
        match self.above {
            EdgeBehavior::Power { exponent } if *self.values.last().unwrap() > 0.0 => Some(exponent),
            _ => None,
        }
    }
}

/// Parametric or tabulated shape of a measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MeasureShape {
    /// `scale · z^{-1-alpha} dz`.
    Stable { alpha: f64, scale: f64 },
    /// `scale · z^{-1-alpha} · exp(-tempering · z) dz`.
    TemperedStable { alpha: f64, scale: f64, tempering: f64 },
    /// `rate · law(dz)`.
    FiniteActivity { rate: f64, law: JumpLaw },
    /// `mass · δ_location`.
    PointMass { location: f64, mass: f64 },
    Tabulated(Arc<TabulatedDensity>),
}

/// A σ-finite measure on `(0, ∞)` with the integrability contract of its role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevyMeasure {
    pub shape: MeasureShape,
    pub role: Role,
}

/// Log-spaced abscissae used by the α_ν estimator and decay checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub points_per_decade: usize,
}

impl Default for ScanGrid {
    fn default() -> Self {
        ScanGrid { x_min: 1e-9, x_max: 1e-1, points_per_decade: 10 }
    }
}

impl ScanGrid {
    pub fn decades(&self) -> f64 {
        (self.x_max / self.x_min).log10()
    }

    /// Ascending grid points.
    pub fn points(&self) -> Vec<f64> {
        let n = (self.decades() * self.points_per_decade as f64).round().max(1.0) as usize;
        let (l0, l1) = (self.x_min.ln(), self.x_max.ln());
        (0..=n).map(|i| (l0 + (l1 - l0) * i as f64 / n as f64).exp()).collect()
    }

    fn validate(&self) -> Result<()> {
        if !(self.x_min > 0.0 && self.x_max > self.x_min && self.points_per_decade >= 2) {
            return Err(Error::domain(format!("invalid scan grid {self:?}")));
        }
        Ok(())
    }
}

/// Outcome of the α_ν slope fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimate {
    /// Estimate clamped to `[1, 2]`.
    pub alpha_nu: f64,
    /// Unclamped `1 - slope`.
    pub raw: f64,
    /// Least-squares slope of `ln G` against `ln x` on the smallest decade.
    pub slope: f64,
    pub rms_residual: f64,
}

/// Trace of `x^{alpha-2} H(x)` along the scan grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayTrace {
    pub alpha: f64,
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
    /// Log-log slope of the values over the smallest decade.
    pub tail_slope: f64,
    pub passed: bool,
}

/// Cached first-tail moment `G` and truncated second moment `H` on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFunctions {
    pub xs: Vec<f64>,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

impl TailFunctions {
    /// Interpolated `G` (log-log between grid points, clamped outside).
    pub fn g_at(&self, x: f64) -> f64 {
        interp_loglog(&self.xs, &self.g, x)
    }

    pub fn h_at(&self, x: f64) -> f64 {
        interp_loglog(&self.xs, &self.h, x)
    }
}

fn interp_loglog(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    let i = xs.partition_point(|&v| v <= x) - 1;
    let (y0, y1) = (ys[i], ys[i + 1]);
    let w = (x / xs[i]).ln() / (xs[i + 1] / xs[i]).ln();
    if y0 > 0.0 && y1 > 0.0 {
        (y0.ln() * (1.0 - w) + y1.ln() * w).exp()
    } else {
        y0 * (1.0 - w) + y1 * w
    }
}

/// `e^{-y} - 1 + y` without cancellation for small `y`.
pub(crate) fn compensated_exp(y: f64) -> f64 {
    if y < 1e-3 {
        y * y * (0.5 - y * (1.0 / 6.0 - y / 24.0))
    } else {
        (-y).exp_m1() + y
    }
}

/// `Γ(-α) = Γ(2-α) / (α(α-1))` for `α ∈ (1, 2)`.
pub fn gamma_neg_alpha(alpha: f64) -> f64 {
    libm::tgamma(2.0 - alpha) / (alpha * (alpha - 1.0))
}

impl LevyMeasure {
    pub fn new(shape: MeasureShape, role: Role) -> Result<Self> {
        let m = LevyMeasure { shape, role };
        m.validate_shape()?;
        m.check_contract()?;
        Ok(m)
    }

    /// `scale · z^{-1-alpha} dz` as a compensated driver.
    pub fn stable(alpha: f64, scale: f64) -> Result<Self> {
        Self::new(MeasureShape::Stable { alpha, scale }, Role::CompensatedDriver)
    }

    pub fn point_mass(location: f64, mass: f64, role: Role) -> Result<Self> {
        Self::new(MeasureShape::PointMass { location, mass }, role)
    }

    pub fn finite_activity(rate: f64, law: JumpLaw, role: Role) -> Result<Self> {
        Self::new(MeasureShape::FiniteActivity { rate, law }, role)
    }

    pub fn tempered_stable(alpha: f64, scale: f64, tempering: f64, role: Role) -> Result<Self> {
        Self::new(MeasureShape::TemperedStable { alpha, scale, tempering }, role)
    }

    pub fn tabulated(density: TabulatedDensity, role: Role) -> Result<Self> {
        Self::new(MeasureShape::Tabulated(Arc::new(density)), role)
    }

    fn validate_shape(&self) -> Result<()> {
        let ok = match &self.shape {
            MeasureShape::Stable { alpha, scale } => *alpha > 0.0 && *alpha < 2.0 && *alpha != 1.0 && *scale > 0.0,
            MeasureShape::TemperedStable { alpha, scale, tempering } => {
                *alpha > 0.0 && *alpha < 2.0 && *scale > 0.0 && *tempering > 0.0
            }
            MeasureShape::FiniteActivity { rate, law } => {
                law.validate()?;
                *rate > 0.0
            }
            MeasureShape::PointMass { location, mass } => *location > 0.0 && *mass > 0.0,
            MeasureShape::Tabulated(_) => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("invalid measure parameters {:?}", self.shape)))
        }
    }

    /// Checks the role's integrability contract, numerically.
    pub fn check_contract(&self) -> Result<f64> {
        let value = match self.role {
            Role::CompensatedDriver => self.moment(2, 0.0, 1.0)? + self.moment(1, 1.0, f64::INFINITY)?,
            Role::Subordinator => self.moment(1, 0.0, 1.0)? + self.moment(0, 1.0, f64::INFINITY)?,
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::Integrability(format!("{:?} contract integral is not finite", self.role)))
        }
    }

    /// Density with respect to Lebesgue measure; `None` for atoms.
    pub fn density(&self, z: f64) -> Option<f64> {
        if z <= 0.0 {
            return Some(0.0);
        }
        match &self.shape {
            MeasureShape::Stable { alpha, scale } => Some(scale * z.powf(-1.0 - alpha)),
            MeasureShape::TemperedStable { alpha, scale, tempering } => {
                Some(scale * z.powf(-1.0 - alpha) * (-tempering * z).exp())
            }
            MeasureShape::FiniteActivity { rate, law } => Some(rate * law.density(z)),
            MeasureShape::PointMass { .. } => None,
            MeasureShape::Tabulated(t) => Some(t.density(z)),
        }
    }

    /// Power `e` with `density ~ z^e` as `z → 0+`; `None` if no mass near 0.
    fn near_zero_exponent(&self) -> Option<f64> {
        match &self.shape {
            MeasureShape::Stable { alpha, .. } | MeasureShape::TemperedStable { alpha, .. } => Some(-1.0 - alpha),
            MeasureShape::FiniteActivity { law, .. } => law.near_zero_exponent(),
            MeasureShape::PointMass { .. } => None,
            MeasureShape::Tabulated(t) => t.near_zero_exponent(),
        }
    }

    /// Power `e` with `density ~ z^e` as `z → ∞`; `None` for light tails.
    fn tail_exponent(&self) -> Option<f64> {
        match &self.shape {
            MeasureShape::Stable { alpha, .. } => Some(-1.0 - alpha),
            MeasureShape::Tabulated(t) => t.tail_exponent(),
            _ => None,
        }
    }

    /// Whether `ν((0, ∞)) < ∞`.
    pub fn has_finite_mass(&self) -> bool {
        self.near_zero_exponent().is_none_or(|e| e > -1.0)
    }

    /// The critical exponent when it is known in closed form.
    pub fn alpha_nu_exact(&self) -> Option<f64> {
        match &self.shape {
            MeasureShape::Stable { alpha, .. } | MeasureShape::TemperedStable { alpha, .. } => Some(alpha.max(1.0)),
            MeasureShape::FiniteActivity { .. } | MeasureShape::PointMass { .. } => Some(1.0),
            MeasureShape::Tabulated(_) => None,
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match &self.shape {
            MeasureShape::FiniteActivity { law, .. } => law.breakpoints(),
            MeasureShape::Tabulated(t) => t.knots.clone(),
            _ => vec![],
        }
    }

    /// `∫_{(a, b]} z^j ν(dz)` for `0 ≤ a < b ≤ ∞`.
    pub fn moment(&self, j: i32, a: f64, b: f64) -> Result<f64> {
        if !(a >= 0.0) || !(b > a) {
            if b == a {
                return Ok(0.0);
            }
            return Err(Error::domain(format!("moment interval ({a}, {b}] is invalid")));
        }
        let jf = j as f64;
        if a == 0.0 {
            if let Some(e) = self.near_zero_exponent() {
                if jf + e <= -1.0 {
                    return Err(Error::Integrability(format!("∫_0 z^{j} ν(dz) diverges near 0")));
                }
            }
        }
        if b.is_infinite() {
            if let Some(e) = self.tail_exponent() {
                if jf + e >= -1.0 {
                    return Err(Error::Integrability(format!("∫^∞ z^{j} ν(dz) diverges")));
                }
            }
        }
        match &self.shape {
            MeasureShape::Stable { alpha, scale } => {
                let e = jf - alpha;
                let prim = |z: f64| if z.is_infinite() { 0.0 } else { z.powf(e) / e };
                Ok(scale * (prim(b) - if a == 0.0 { 0.0 } else { prim(a) }))
            }
            MeasureShape::PointMass { location, mass } => {
                Ok(if *location > a && *location <= b { mass * location.powi(j) } else { 0.0 })
            }
            _ => self.moment_quadrature(j, a, b),
        }
    }

    fn moment_quadrature(&self, j: i32, a: f64, b: f64) -> Result<f64> {
        let f = |z: f64| z.powi(j) * self.density(z).unwrap_or(0.0);
        let mut cuts: Vec<f64> = vec![a];
        cuts.extend(self.breakpoints().into_iter().filter(|&p| p > a && p < b));
        cuts.push(b);
        let tol = Tolerance::default();
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let est = if lo == 0.0 && hi.is_infinite() {
                quadrature::integrate_lower(f, 1.0, tol)?.value + quadrature::integrate_upper(f, 1.0, tol)?.value
            } else if lo == 0.0 {
                quadrature::integrate_lower(f, hi, tol)?.value
            } else if hi.is_infinite() {
                quadrature::integrate_upper(f, lo, tol)?.value
            } else {
                quadrature::integrate_log(f, lo, hi, tol)?.value
            };
            total += est;
        }
        Ok(total)
    }

    /// `ν((x, ∞))`.
    pub fn tail_mass(&self, x: f64) -> Result<f64> {
        check_positive(x)?;
        self.moment(0, x, f64::INFINITY)
    }

    /// `G(x) = ∫_x^∞ z ν(dz)`.
    pub fn tail_first_moment(&self, x: f64) -> Result<f64> {
        check_positive(x)?;
        self.moment(1, x, f64::INFINITY)
    }

    /// `H(x) = ∫_0^x z² ν(dz)`.
    pub fn truncated_second_moment(&self, x: f64) -> Result<f64> {
        check_positive(x)?;
        self.moment(2, 0.0, x)
    }

    /// `∫_0^x z ν(dz)`, finite for subordinators.
    pub fn truncated_first_moment(&self, x: f64) -> Result<f64> {
        check_positive(x)?;
        self.moment(1, 0.0, x)
    }

    /// `∫ (e^{-uz} - 1 + uz) ν(dz)`, by quadrature.
    pub fn laplace_exponent(&self, u: f64) -> Result<f64> {
        if self.role != Role::CompensatedDriver {
            return Err(Error::domain("laplace exponent is defined for compensated drivers"));
        }
        if !(u >= 0.0) {
            return Err(Error::domain(format!("laplace argument must be non-negative, got {u}")));
        }
        if u == 0.0 {
            return Ok(0.0);
        }
        if let MeasureShape::PointMass { location, mass } = self.shape {
            return Ok(mass * compensated_exp(u * location));
        }
        let f = |z: f64| compensated_exp(u * z) * self.density(z).unwrap_or(0.0);
        let pivot = 1.0 / u;
        let tol = Tolerance::default();
        let mut cuts: Vec<f64> = self.breakpoints();
        cuts.push(pivot);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut total = quadrature::integrate_lower(f, cuts[0], tol)?.value;
        for w in cuts.windows(2) {
            total += quadrature::integrate_log(f, w[0], w[1], tol)?.value;
        }
        total += quadrature::integrate_upper(f, *cuts.last().unwrap(), tol)?.value;
        Ok(total)
    }

    /// Closed-form Laplace coefficient `scale · Γ(-α)` of a stable driver.
    pub fn stable_laplace_coefficient(&self) -> Option<f64> {
        match self.shape {
            MeasureShape::Stable { alpha, scale } if alpha > 1.0 => Some(scale * gamma_neg_alpha(alpha)),
            _ => None,
        }
    }

    pub fn tail_functions(&self, scan: &ScanGrid) -> Result<TailFunctions> {
        scan.validate()?;
        let xs = scan.points();
        let g = xs.iter().map(|&x| self.tail_first_moment(x)).collect::<Result<Vec<_>>>()?;
        let h = xs.iter().map(|&x| self.truncated_second_moment(x)).collect::<Result<Vec<_>>>()?;
        Ok(TailFunctions { xs, g, h })
    }

    /// Estimates `α_ν = inf{β > 1 : x^{β-1} G(x) → 0}` from the slope of
    /// `ln G` against `ln x` over the smallest decade of the scan.
    pub fn estimate_alpha_nu(&self, scan: &ScanGrid) -> Result<AlphaEstimate> {
        scan.validate()?;
        if scan.decades() < 4.0 - 1e-9 {
            return Err(Error::domain(format!(
                "scan must cover at least 4 decades, covers {:.2}",
                scan.decades()
            )));
        }
        let top = scan.x_min * 10.0;
        let xs: Vec<f64> = scan.points().into_iter().filter(|&x| x <= top * (1.0 + 1e-12)).collect();
        let gs = xs.iter().map(|&x| self.tail_first_moment(x)).collect::<Result<Vec<_>>>()?;
        if gs.iter().all(|&g| g == 0.0) {
            return Ok(AlphaEstimate { alpha_nu: 1.0, raw: 1.0, slope: 0.0, rms_residual: 0.0 });
        }
        if gs.iter().any(|&g| !(g > 0.0)) {
            return Err(Error::Estimation { residual: f64::NAN, reason: "G vanishes inside the fit window".into() });
        }
        let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
        let lg: Vec<f64> = gs.iter().map(|g| g.ln()).collect();
        let fit = fit_line(&lx, &lg);
        let raw = 1.0 - fit.slope;
        if fit.rms_residual > 0.05 {
            return Err(Error::Estimation {
                residual: fit.rms_residual,
                reason: format!("log-log fit of G is not a power law (slope {:.4})", fit.slope),
            });
        }
        if !(0.9..=2.1).contains(&raw) {
            return Err(Error::Estimation {
                residual: fit.rms_residual,
                reason: format!("raw estimate {raw:.4} outside [0.9, 2.1]"),
            });
        }
        Ok(AlphaEstimate { alpha_nu: raw.clamp(1.0, 2.0), raw, slope: fit.slope, rms_residual: fit.rms_residual })
    }

    /// Evaluates `x^{alpha-2} H(x)` on the scan; passes when the values
    /// vanish or decay toward 0 as a positive power of `x`.
    pub fn check_small_jump_decay(&self, alpha: f64, scan: &ScanGrid) -> Result<DecayTrace> {
        scan.validate()?;
        let xs = scan.points();
        let values = xs
            .iter()
            .map(|&x| Ok(x.powf(alpha - 2.0) * self.truncated_second_moment(x)?))
            .collect::<Result<Vec<f64>>>()?;
        let peak = values.iter().cloned().fold(0.0, f64::max);
        let top = scan.x_min * 10.0;
        let window: Vec<(f64, f64)> = xs
            .iter()
            .zip(&values)
            .filter(|(x, _)| **x <= top * (1.0 + 1e-12))
            .map(|(x, v)| (*x, *v))
            .collect();
        let vanished = window.iter().all(|(_, v)| *v <= 1e-12 * peak.max(1.0));
        let tail_slope = if vanished {
            f64::INFINITY
        } else if window.iter().any(|(_, v)| *v <= 0.0) {
            0.0
        } else {
            let lx: Vec<f64> = window.iter().map(|(x, _)| x.ln()).collect();
            let lv: Vec<f64> = window.iter().map(|(_, v)| v.ln()).collect();
            fit_line(&lx, &lv).slope
        };
        // Non-increasing toward 0 along the window, up to rounding.
        let monotone = window.windows(2).all(|w| w[0].1 <= w[1].1 * (1.0 + 1e-9) + 1e-300);
        let passed = vanished || (monotone && tail_slope > 1e-3);
        Ok(DecayTrace { alpha, xs, values, tail_slope, passed })
    }

    /// Threshold `θ` with `ν((θ, ∞)) = rate`, by bisection in `ln θ`.
    pub fn threshold_for_rate(&self, rate: f64) -> Result<f64> {
        if !(rate > 0.0) {
            return Err(Error::domain("target rate must be positive"));
        }
        if let MeasureShape::Stable { alpha, scale } = self.shape {
            return Ok((scale / (alpha * rate)).powf(1.0 / alpha));
        }
        let (mut lo, mut hi) = (-60.0f64, 30.0f64);
        if self.tail_mass(lo.exp())? < rate {
            // The measure never reaches this intensity: take everything.
            return Ok(lo.exp());
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.tail_mass(mid.exp())? > rate {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-12 {
                break;
            }
        }
        Ok(hi.exp())
    }

    /// Sampler for jump sizes of `ν` restricted to `(threshold, ∞)` and normalised.
    pub fn jump_sampler(&self, threshold: f64) -> Result<JumpSampler> {
        if !(threshold >= 0.0) {
            return Err(Error::domain("threshold must be non-negative"));
        }
        if threshold == 0.0 && !self.has_finite_mass() {
            return Err(Error::spec("infinite-activity measure needs a positive jump threshold"));
        }
        let rate = if threshold == 0.0 {
            self.moment(0, 0.0, f64::INFINITY)?
        } else {
            self.tail_mass(threshold)?
        };
        if !rate.is_finite() {
            return Err(Error::spec("large-jump rate is infinite"));
        }
        let kind = match &self.shape {
            MeasureShape::Stable { alpha, .. } => SamplerKind::Stable { alpha: *alpha, threshold },
            MeasureShape::PointMass { location, .. } => SamplerKind::Point { location: *location },
            MeasureShape::FiniteActivity { law, .. } => SamplerKind::Law { law: law.clone(), threshold },
            _ => {
                if rate == 0.0 {
                    SamplerKind::Point { location: threshold }
                } else {
                    SamplerKind::Table(Box::new(TailTable::build(self, threshold, rate)?))
                }
            }
        };
        Ok(JumpSampler { kind, rate, threshold })
    }
}

fn check_positive(x: f64) -> Result<()> {
    if x > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("argument must be positive, got {x}")))
    }
}

/// Draws jump sizes from a measure restricted above a threshold.
#[derive(Debug, Clone)]
pub struct JumpSampler {
    kind: SamplerKind,
    /// `ν((threshold, ∞))`.
    pub rate: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Stable { alpha: f64, threshold: f64 },
    Point { location: f64 },
    Law { law: JumpLaw, threshold: f64 },
    Table(Box<TailTable>),
}

impl JumpSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            SamplerKind::Stable { alpha, threshold } => threshold * rng::uniform(rng).powf(-1.0 / alpha),
            SamplerKind::Point { location } => *location,
            SamplerKind::Law { law, threshold } => loop {
                let z = law.sample(rng);
                if z > *threshold {
                    break z;
                }
            },
            SamplerKind::Table(t) => t.invert(rng::uniform(rng)),
        }
    }
}

/// Inverse-tail table with `TABLE_KNOTS` log-spaced knots and Newton polish
/// inside each panel.
#[derive(Debug, Clone)]
struct TailTable {
    measure: LevyMeasure,
    knots: Vec<f64>,
    /// Normalised tail `ν((z_i, ∞)) / ν((θ, ∞))` at each knot.
    tail: Vec<f64>,
    total: f64,
    /// Exact remainder beyond the last knot for power or exponential edges.
    remainder: Remainder,
    gl: (Vec<f64>, Vec<f64>),
}

#[derive(Debug, Clone, Copy)]
enum Remainder {
    Negligible,
    Power { exponent: f64 },
    Exponential { rate: f64 },
}

const TABLE_KNOTS: usize = 10_000;

impl TailTable {
    fn build(measure: &LevyMeasure, threshold: f64, total: f64) -> Result<Self> {
        let start = if threshold > 0.0 {
            threshold
        } else {
            // Finite mass: start where essentially no mass lies below.
            let mut z = 1e-300f64.max(measure.breakpoints().first().copied().unwrap_or(1.0) * 1e-12);
            while measure.moment(0, 0.0, z)? < 1e-14 * total && z < 1e300 {
                z *= 2.0;
            }
            z / 2.0
        };
        let (upper, remainder) = match &measure.shape {
            MeasureShape::Tabulated(t) => {
                let last = *t.knots.last().unwrap();
                let rem = match t.above {
                    EdgeBehavior::Zero => Remainder::Negligible,
                    EdgeBehavior::Power { exponent } => Remainder::Power { exponent },
                    EdgeBehavior::Exponential { rate } => Remainder::Exponential { rate },
                };
                (last.max(start * 1.0001), rem)
            }
            _ => {
                let mut z = start * 2.0;
                while measure.tail_mass(z)? > 1e-14 * total {
                    z *= 2.0;
                }
                (z, Remainder::Negligible)
            }
        };
        let mut breaks: Vec<f64> = (0..TABLE_KNOTS)
            .map(|i| (start.ln() + (upper / start).ln() * i as f64 / (TABLE_KNOTS - 1) as f64).exp())
            .collect();
        breaks.extend(measure.breakpoints().into_iter().filter(|&b| b > start && b < upper));
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let gl = gauss_legendre(8);
        let beyond = if upper > start { measure.tail_mass(upper)? } else { 0.0 };
        let mut tail = vec![0.0; breaks.len()];
        let mut acc = beyond;
        *tail.last_mut().unwrap() = acc / total;
        for i in (0..breaks.len() - 1).rev() {
            acc += panel_mass(measure, &gl, breaks[i], breaks[i + 1]);
            tail[i] = acc / total;
        }
        // Renormalise so the first knot carries exactly probability one.
        let norm = tail[0];
        for t in &mut tail {
            *t /= norm;
        }
        Ok(TailTable { measure: measure.clone(), knots: breaks, tail, total: total * norm, remainder, gl })
    }

    fn invert(&self, u: f64) -> f64 {
        let n = self.knots.len();
        let last_tail = self.tail[n - 1];
        if u <= last_tail {
            let zn = self.knots[n - 1];
            let v = u / last_tail;
            return match self.remainder {
                Remainder::Negligible => zn,
                Remainder::Power { exponent } => zn * v.powf(1.0 / (exponent + 1.0)),
                Remainder::Exponential { rate } => zn - v.ln() / rate,
            };
        }
        // tail is decreasing: find i with tail[i] >= u > tail[i+1].
        let i = self.tail.partition_point(|&t| t >= u).saturating_sub(1).min(n - 2);
        let (z0, z1) = (self.knots[i], self.knots[i + 1]);
        let (t0, t1) = (self.tail[i], self.tail[i + 1]);
        let mut z = if t0 > 0.0 && t1 > 0.0 && t0 != t1 {
            let w = (u / t0).ln() / (t1 / t0).ln();
            (z0.ln() + w * (z1 / z0).ln()).exp()
        } else {
            z0
        };
        for _ in 0..6 {
            let f = t1 + panel_mass(&self.measure, &self.gl, z, z1) / self.total - u;
            let d = self.measure.density(z).unwrap_or(0.0) / self.total;
            if d <= 0.0 {
                break;
            }
            let next = (z + f / d).clamp(z0, z1);
            if (next - z).abs() <= 1e-15 * z {
                z = next;
                break;
            }
            z = next;
        }
        z
    }
}

fn panel_mass(measure: &LevyMeasure, gl: &(Vec<f64>, Vec<f64>), a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (la, lb) = (a.ln(), b.ln());
    let (mid, half) = (0.5 * (la + lb), 0.5 * (lb - la));
    gl.0.iter()
        .zip(&gl.1)
        .map(|(x, w)| {
            let z = (mid + half * x).exp();
            w * measure.density(z).unwrap_or(0.0) * z
        })
        .sum::<f64>()
        * half
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, StreamKey};

    fn stable(alpha: f64) -> LevyMeasure {
        LevyMeasure::stable(alpha, 1.0).unwrap()
    }

    #[test]
    fn stable_tail_moments_closed_form() {
        let m = stable(1.5);
        assert!((m.tail_first_moment(1.0).unwrap() - 2.0).abs() < 1e-14);
        assert!((m.truncated_second_moment(1.0).unwrap() - 2.0).abs() < 1e-14);
        assert!((m.tail_mass(0.01).unwrap() - 0.01f64.powf(-1.5) / 1.5).abs() < 1e-9);
    }

    #[test]
    fn point_mass_tail_moments() {
        let m = LevyMeasure::point_mass(1.0, 1.0, Role::CompensatedDriver).unwrap();
        assert_eq!(m.tail_first_moment(2.0).unwrap(), 0.0);
        assert_eq!(m.tail_first_moment(0.5).unwrap(), 1.0);
        let m3 = LevyMeasure::point_mass(1.0, 3.0, Role::CompensatedDriver).unwrap();
        assert_eq!(m3.truncated_second_moment(2.0).unwrap(), 3.0);
    }

    #[test]
    fn nonpositive_argument_is_a_domain_error() {
        let m = stable(1.5);
        assert!(matches!(m.tail_first_moment(0.0), Err(Error::Domain(_))));
        assert!(matches!(m.truncated_second_moment(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn contracts_reject_wrong_roles() {
        assert!(LevyMeasure::new(MeasureShape::Stable { alpha: 1.5, scale: 1.0 }, Role::Subordinator).is_err());
        assert!(LevyMeasure::new(MeasureShape::Stable { alpha: 0.5, scale: 1.0 }, Role::CompensatedDriver).is_err());
        assert!(LevyMeasure::new(MeasureShape::Stable { alpha: 0.5, scale: 1.0 }, Role::Subordinator).is_ok());
        let heavy = TabulatedDensity::new(
            vec![1.0, 2.0],
            vec![1.0, 0.5],
            EdgeBehavior::Zero,
            EdgeBehavior::Power { exponent: -1.5 },
        )
        .unwrap();
        assert!(matches!(
            LevyMeasure::tabulated(heavy, Role::CompensatedDriver),
            Err(Error::Integrability(_))
        ));
    }

    #[test]
    fn tabulated_validation() {
        assert!(TabulatedDensity::new(vec![1.0, 1.0], vec![1.0, 1.0], EdgeBehavior::Zero, EdgeBehavior::Zero).is_err());
        assert!(TabulatedDensity::new(vec![1.0, 2.0], vec![1.0, -1.0], EdgeBehavior::Zero, EdgeBehavior::Zero).is_err());
        let t = TabulatedDensity::parse(
            "# z density\n0.5 2.0\n1.0 1.0 # trailing\n\n2.0 0.25\n",
            EdgeBehavior::Zero,
            EdgeBehavior::Zero,
        )
        .unwrap();
        assert_eq!(t.knots, vec![0.5, 1.0, 2.0]);
        assert!(TabulatedDensity::parse("1 2 3\n", EdgeBehavior::Zero, EdgeBehavior::Zero).is_err());
    }

    #[test]
    fn tabulated_power_law_matches_stable() {
        // z^{-2.5} tabulated exactly (log-log interpolation is exact on powers).
        let knots: Vec<f64> = (0..=20).map(|i| 10f64.powf(-3.0 + 0.2 * i as f64)).collect();
        let values: Vec<f64> = knots.iter().map(|z| z.powf(-2.5)).collect();
        let t = TabulatedDensity::new(
            knots,
            values,
            EdgeBehavior::Power { exponent: -2.5 },
            EdgeBehavior::Power { exponent: -2.5 },
        )
        .unwrap();
        let tab = LevyMeasure::tabulated(t, Role::CompensatedDriver).unwrap();
        let st = stable(1.5);
        for x in [1e-4, 0.05, 1.0, 7.0] {
            let (g1, g2) = (tab.tail_first_moment(x).unwrap(), st.tail_first_moment(x).unwrap());
            assert!((g1 - g2).abs() < 1e-7 * g2, "G({x}): {g1} vs {g2}");
            let (h1, h2) = (tab.truncated_second_moment(x).unwrap(), st.truncated_second_moment(x).unwrap());
            assert!((h1 - h2).abs() < 1e-7 * h2, "H({x}): {h1} vs {h2}");
        }
    }

    #[test]
    fn tempered_tail_by_quadrature() {
        let m = LevyMeasure::tempered_stable(1.5, 1.0, 2.0, Role::CompensatedDriver).unwrap();
        // Independent check against composite Simpson on a log grid.
        let x: f64 = 0.3;
        let n = 200_000;
        let (a, b) = (x.ln(), 60f64.ln());
        let h = (b - a) / n as f64;
        let f = |s: f64| {
            let z = s.exp();
            z * z * z.powf(-2.5) * (-2.0 * z).exp()
        };
        let mut simpson = f(a) + f(b);
        for i in 1..n {
            simpson += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
        }
        simpson *= h / 3.0;
        let g = m.tail_first_moment(x).unwrap();
        assert!((g - simpson).abs() < 1e-8 * simpson, "{g} vs {simpson}");
    }

    #[test]
    fn stable_laplace_exponent_matches_closed_form() {
        let m = stable(1.5);
        let q1 = m.laplace_exponent(1.0).unwrap();
        let closed = m.stable_laplace_coefficient().unwrap();
        assert!((q1 - closed).abs() < 1e-8 * closed, "{q1} vs {closed}");
        assert!((closed - 2.363_271_801_207_355).abs() < 1e-9);
        let q2 = m.laplace_exponent(2.0).unwrap();
        assert!((q2 - 2f64.powf(1.5) * q1).abs() < 1e-7 * q2);
        assert_eq!(m.laplace_exponent(0.0).unwrap(), 0.0);
    }

    #[test]
    fn point_mass_laplace_exponent() {
        let m = LevyMeasure::point_mass(2.0, 0.5, Role::CompensatedDriver).unwrap();
        let u = 0.7;
        let want = 0.5 * ((-u * 2.0f64).exp() - 1.0 + u * 2.0);
        assert!((m.laplace_exponent(u).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn alpha_nu_estimates() {
        let scan = ScanGrid::default();
        for a in [1.2, 1.5, 1.8] {
            let est = stable(a).estimate_alpha_nu(&scan).unwrap();
            assert!((est.alpha_nu - a).abs() < 1e-9, "{est:?}");
        }
        let pm = LevyMeasure::point_mass(1.0, 1.0, Role::CompensatedDriver).unwrap();
        assert_eq!(pm.estimate_alpha_nu(&scan).unwrap().alpha_nu, 1.0);
        let short = ScanGrid { x_min: 1e-3, x_max: 1e-1, points_per_decade: 10 };
        assert!(matches!(stable(1.5).estimate_alpha_nu(&short), Err(Error::Domain(_))));
    }

    #[test]
    fn oscillating_tabulated_density_fails_estimation() {
        // Density alternating over several orders of magnitude per knot.
        let knots: Vec<f64> = (0..=60).map(|i| 10f64.powf(-10.0 + 0.25 * i as f64)).collect();
        let values: Vec<f64> = knots
            .iter()
            .enumerate()
            .map(|(i, z)| z.powf(-2.5) * if i % 2 == 0 { 1e-4 } else { 1.0 })
            .collect();
        let t = TabulatedDensity::new(knots, values, EdgeBehavior::Power { exponent: -1.2 }, EdgeBehavior::Zero)
            .unwrap();
        let m = LevyMeasure::tabulated(t, Role::CompensatedDriver).unwrap();
        let scan = ScanGrid { x_min: 1e-9, x_max: 1e-3, points_per_decade: 10 };
        let res = m.estimate_alpha_nu(&scan);
        assert!(matches!(res, Err(Error::Estimation { .. })), "{res:?}");
    }

    #[test]
    fn small_jump_decay_cases() {
        let scan = ScanGrid::default();
        let m = stable(1.5);
        assert!(m.check_small_jump_decay(1.8, &scan).unwrap().passed);
        let boundary = m.check_small_jump_decay(1.5, &scan).unwrap();
        assert!(!boundary.passed);
        assert!(boundary.values.iter().all(|v| (v - 2.0).abs() < 1e-12));
        let pm = LevyMeasure::point_mass(1.0, 1.0, Role::CompensatedDriver).unwrap();
        assert!(pm.check_small_jump_decay(1.5, &scan).unwrap().passed);
    }

    #[test]
    fn stable_threshold_inverts_tail_mass() {
        let m = stable(1.5);
        let th = m.threshold_for_rate(666.666_666_666_666_6).unwrap();
        assert!((th - 0.01).abs() < 1e-12);
    }

    #[test]
    fn table_sampler_tracks_exact_tail() {
        let m = LevyMeasure::tempered_stable(1.5, 1.0, 1.0, Role::CompensatedDriver).unwrap();
        let eps = 0.05;
        let sampler = m.jump_sampler(eps).unwrap();
        let table = match &sampler.kind {
            SamplerKind::Table(t) => t,
            _ => unreachable!(),
        };
        for u in [0.9, 0.5, 0.1, 1e-3, 1e-6] {
            let z = table.invert(u);
            let p = m.tail_mass(z).unwrap() / sampler.rate;
            assert!((p - u).abs() < 1e-9, "u={u} z={z} p={p}");
        }
        let mut rng = StreamKey::new(3, 0).stream(Purpose::Sampling);
        for _ in 0..1000 {
            assert!(sampler.sample(&mut rng) > eps);
        }
    }
}
