//! Sampled realisations of the driving noise.
//!
//! A [`NoisePath`] holds per-cell Brownian and small-jump increments on a time
//! grid plus the list of large jumps of the compensated driver (`nu0`) and of
//! the subordinator (`nu1`). Increments are stored on a fixed binary grain so
//! that bridge splitting is exact: the two children of a cell always sum to
//! the parent bit for bit. Bridge draws are keyed by the time at which a cell
//! is split, so refining a dyadic grid in one step or in several gives the
//! same path.

use crate::error::{Error, Result};
use crate::levy_measure::{JumpSampler, LevyMeasure, Role};
use crate::rng::{self, KeyedNormals, Purpose, StreamKey};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmallJumpMode {
    /// Small jumps are dropped; their compensator is exact.
    CompensateOnly,
    /// Small jumps are replaced by a Gaussian with matched variance `H(ε)`.
    GaussianSubstitute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mark {
    Driver0,
    Driver1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub size: f64,
    pub mark: Mark,
}

/// Declaration of the noise. Unset `epsilon` and `small_jump_mode` are
/// resolved from the grid size when a [`NoiseModel`] is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub brownian: bool,
    pub nu0: Option<LevyMeasure>,
    pub nu1: Option<LevyMeasure>,
    /// Small-jump threshold of `nu0`.
    pub epsilon: Option<f64>,
    /// Threshold of `nu1`; only used when `nu1` has infinite activity.
    pub epsilon1: Option<f64>,
    pub small_jump_mode: Option<SmallJumpMode>,
    pub horizon: f64,
    pub master_seed: u64,
}

/// Cap on the expected number of large jumps per path.
pub const MAX_EXPECTED_JUMPS: f64 = 1e6;

impl NoiseSpec {
    pub fn new(horizon: f64, master_seed: u64) -> Self {
        NoiseSpec {
            brownian: false,
            nu0: None,
            nu1: None,
            epsilon: None,
            epsilon1: None,
            small_jump_mode: None,
            horizon,
            master_seed,
        }
    }

    pub fn with_brownian(mut self) -> Self {
        self.brownian = true;
        self
    }

    pub fn with_driver(mut self, nu0: LevyMeasure) -> Self {
        self.nu0 = Some(nu0);
        self
    }

    pub fn with_subordinator(mut self, nu1: LevyMeasure) -> Self {
        self.nu1 = Some(nu1);
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = Some(epsilon);
        self
    }

    pub fn with_mode(mut self, mode: SmallJumpMode) -> Self {
        self.small_jump_mode = Some(mode);
        self
    }
}

/// Default threshold: about `10·√cells` expected large jumps per path.
pub fn default_threshold(measure: &LevyMeasure, horizon: f64, cells: usize) -> Result<f64> {
    let expected = (10.0 * (cells.max(1) as f64).sqrt()).min(MAX_EXPECTED_JUMPS);
    measure.threshold_for_rate(expected / horizon)
}

/// A resolved noise specification with its samplers and the constants the
/// integrator needs.
#[derive(Debug)]
pub struct NoiseModel {
    /// The specification with every optional field filled in.
    pub spec: NoiseSpec,
    /// Effective threshold of `nu0`; zero when `nu0` has finite mass and
    /// every jump is simulated.
    pub threshold0: f64,
    pub threshold1: f64,
    sampler0: Option<JumpSampler>,
    sampler1: Option<JumpSampler>,
    /// `H(threshold0)`, the variance rate of the aggregated small jumps.
    pub small_jump_second_moment: f64,
    /// `∫_0^{threshold1} z ν1(dz)`, the mean rate of dropped subordinator jumps.
    pub subordinator_small_mean: f64,
}

impl NoiseModel {
    pub fn new(spec: &NoiseSpec, cells: usize) -> Result<Arc<Self>> {
        let mut spec = spec.clone();
        if !(spec.horizon > 0.0 && spec.horizon.is_finite()) {
            return Err(Error::spec(format!("horizon must be positive, got {}", spec.horizon)));
        }
        let mut threshold0 = 0.0;
        let mut sampler0 = None;
        let mut h = 0.0;
        if let Some(nu0) = &spec.nu0 {
            if nu0.role != Role::CompensatedDriver {
                return Err(Error::spec("nu0 must have the compensated-driver role"));
            }
            let eps = match spec.epsilon {
                Some(e) => e,
                None => default_threshold(nu0, spec.horizon, cells)?,
            };
            if !(eps > 0.0) {
                return Err(Error::spec(format!("epsilon must be positive, got {eps}")));
            }
            spec.epsilon = Some(eps);
            if !nu0.has_finite_mass() {
                threshold0 = eps;
                h = nu0.truncated_second_moment(eps)?;
            }
            let mode = spec.small_jump_mode.unwrap_or(if h > 10.0 * eps * eps {
                SmallJumpMode::GaussianSubstitute
            } else {
                SmallJumpMode::CompensateOnly
            });
            spec.small_jump_mode = Some(mode);
            let s = nu0.jump_sampler(threshold0).map_err(|e| Error::spec(format!("nu0 large jumps: {e}")))?;
            if s.rate * spec.horizon > 10.0 * MAX_EXPECTED_JUMPS {
                return Err(Error::spec(format!("large-jump rate {} is too high; raise epsilon", s.rate)));
            }
            sampler0 = Some(s);
        }
        let mut threshold1 = 0.0;
        let mut sampler1 = None;
        let mut sub_mean = 0.0;
        if let Some(nu1) = &spec.nu1 {
            if nu1.role != Role::Subordinator {
                return Err(Error::spec("nu1 must have the subordinator role"));
            }
            if !nu1.has_finite_mass() {
                let eps = match spec.epsilon1 {
                    Some(e) => e,
                    None => default_threshold(nu1, spec.horizon, cells)?,
                };
                if !(eps > 0.0) {
                    return Err(Error::spec("epsilon1 must be positive"));
                }
                spec.epsilon1 = Some(eps);
                threshold1 = eps;
                sub_mean = nu1.truncated_first_moment(eps)?;
            }
            sampler1 = Some(nu1.jump_sampler(threshold1).map_err(|e| Error::spec(format!("nu1 large jumps: {e}")))?);
        }
        let small = if spec.small_jump_mode == Some(SmallJumpMode::GaussianSubstitute) { h } else { 0.0 };
        Ok(Arc::new(NoiseModel {
            spec,
            threshold0,
            threshold1,
            sampler0,
            sampler1,
            small_jump_second_moment: small,
            subordinator_small_mean: sub_mean,
        }))
    }

    /// Rebuilds a model from a fully resolved specification.
    pub fn from_resolved(spec: &NoiseSpec) -> Result<Arc<Self>> {
        Self::new(spec, 1)
    }

    /// `ν0((threshold0, ∞))`.
    pub fn rate0(&self) -> f64 {
        self.sampler0.as_ref().map_or(0.0, |s| s.rate)
    }

    pub fn rate1(&self) -> f64 {
        self.sampler1.as_ref().map_or(0.0, |s| s.rate)
    }

    pub fn mode(&self) -> SmallJumpMode {
        self.spec.small_jump_mode.unwrap_or(SmallJumpMode::CompensateOnly)
    }

    fn brownian_grain(&self) -> f64 {
        grain_for(self.spec.horizon)
    }

    fn small_jump_grain(&self) -> f64 {
        grain_for(self.spec.horizon * self.small_jump_second_moment)
    }

    /// Samples the path with stream index `stream_index` on `grid`.
    pub fn sample(self: &Arc<Self>, grid: &[f64], stream_index: u64) -> Result<NoisePath> {
        validate_grid(grid, self.spec.horizon)?;
        let key = StreamKey::new(self.spec.master_seed, stream_index);
        let cells = grid.len() - 1;
        let mut brownian = vec![0.0; cells];
        if self.spec.brownian {
            let q = self.brownian_grain();
            let mut rng = key.stream(Purpose::BrownianBase);
            for (i, b) in brownian.iter_mut().enumerate() {
                *b = quantize((grid[i + 1] - grid[i]).sqrt() * rng::standard_normal(&mut rng), q);
            }
        }
        let mut small_jumps = vec![0.0; cells];
        if self.small_jump_second_moment > 0.0 {
            let q = self.small_jump_grain();
            let mut rng = key.stream(Purpose::SmallJumpBase);
            for (i, s) in small_jumps.iter_mut().enumerate() {
                let var = (grid[i + 1] - grid[i]) * self.small_jump_second_moment;
                *s = quantize(var.sqrt() * rng::standard_normal(&mut rng), q);
            }
        }
        let mut jumps = Vec::new();
        let horizon = self.spec.horizon;
        if let Some(s) = &self.sampler0 {
            sample_jumps(s, horizon, Mark::Driver0, &mut key.stream(Purpose::Driver0Jumps), &mut jumps)?;
        }
        if let Some(s) = &self.sampler1 {
            sample_jumps(s, horizon, Mark::Driver1, &mut key.stream(Purpose::Driver1Jumps), &mut jumps)?;
        }
        jumps.sort_by(|a, b| a.time.total_cmp(&b.time).then((a.mark as u8).cmp(&(b.mark as u8))));
        Ok(NoisePath { model: Arc::clone(self), grid: grid.to_vec(), brownian, small_jumps, jumps, provenance: key })
    }
}

fn sample_jumps<R: Rng>(sampler: &JumpSampler, horizon: f64, mark: Mark, rng: &mut R, out: &mut Vec<Jump>) -> Result<()> {
    let mean = sampler.rate * horizon;
    if mean <= 0.0 {
        return Ok(());
    }
    let count: f64 = Poisson::new(mean).map_err(|e| Error::spec(format!("poisson mean {mean}: {e}")))?.sample(rng);
    for _ in 0..count as u64 {
        let time = horizon * rng::uniform(rng);
        let size = sampler.sample(rng);
        out.push(Jump { time, size, mark });
    }
    Ok(())
}

/// Binary grain for increments whose scale is `sqrt(variance_scale)`: 45 bits
/// below the scale, leaving 8 bits of headroom for partial sums.
fn grain_for(variance_scale: f64) -> f64 {
    if !(variance_scale > 0.0) {
        return 1.0;
    }
    let e = (0.5 * variance_scale.log2()).ceil() as i32 - 45;
    2f64.powi(e)
}

fn quantize(x: f64, grain: f64) -> f64 {
    (x / grain).round() * grain
}

/// `n` equal cells on `[0, horizon]`, with points `(horizon·i)/n`.
pub fn uniform_grid(horizon: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| horizon * i as f64 / n as f64).collect()
}

fn validate_grid(grid: &[f64], horizon: f64) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::spec("grid needs at least one cell"));
    }
    if grid[0] != 0.0 || grid[grid.len() - 1] != horizon {
        return Err(Error::spec(format!(
            "grid must run from 0 to the horizon {horizon}, got [{}, {}]",
            grid[0],
            grid[grid.len() - 1]
        )));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::spec("grid must be strictly increasing"));
    }
    Ok(())
}

/// Counter used to key a bridge draw at time `t`: `t/T` on a 2^-50 lattice,
/// so points computed by different but equivalent float expressions agree.
fn time_key(t: f64, horizon: f64) -> u64 {
    ((t / horizon) * (1u64 << 50) as f64).round() as u64
}

/// Cells narrower than this fraction of the horizon are split at event
/// times directly instead of at dyadic midpoints.
const LEAF_FRACTION: f64 = 1.0 / (1u64 << 22) as f64;

/// Keyed normal generators for the four bridge purposes of one path.
pub struct Bridges {
    brownian: KeyedNormals,
    small: KeyedNormals,
    event_brownian: KeyedNormals,
    event_small: KeyedNormals,
    horizon: f64,
    grain_b: f64,
    grain_s: f64,
    small_rate: f64,
}

/// Which component a bridge acts on.
#[derive(Clone, Copy)]
enum Component {
    Brownian,
    Small,
}

impl Bridges {
    fn split(&mut self, c: Component, event: bool, s: f64, t: f64, u: f64, d: f64) -> (f64, f64) {
        let (rate, grain) = match c {
            Component::Brownian => (1.0, self.grain_b),
            Component::Small => (self.small_rate, self.grain_s),
        };
        if rate == 0.0 {
            return (0.0, 0.0);
        }
        let gen = match (c, event) {
            (Component::Brownian, false) => &mut self.brownian,
            (Component::Brownian, true) => &mut self.event_brownian,
            (Component::Small, false) => &mut self.small,
            (Component::Small, true) => &mut self.event_small,
        };
        let z = gen.normal(time_key(t, self.horizon));
        let w = (t - s) / (u - s);
        let var = rate * (t - s) * (u - t) / (u - s);
        let left = quantize(d * w + var.sqrt() * z, grain);
        (left, d - left)
    }

    /// Splits the cell `[s, u]` with increments `(db, ds)` at the sorted
    /// interior `times`, returning per-piece increments (`times.len() + 1`
    /// pieces). Large cells are first bisected with the same keyed draws that
    /// grid refinement uses, so event values agree across refinement levels.
    pub fn pieces(&mut self, s: f64, u: f64, db: f64, ds: f64, times: &[f64]) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(times.len() + 1);
        self.pieces_into(s, u, db, ds, times, &mut out);
        out
    }

    fn pieces_into(&mut self, s: f64, u: f64, db: f64, ds: f64, times: &[f64], out: &mut Vec<(f64, f64)>) {
        if times.is_empty() {
            out.push((db, ds));
            return;
        }
        if u - s > LEAF_FRACTION * self.horizon {
            let m = 0.5 * (s + u);
            if m > s && m < u {
                let (bl, br) = self.split(Component::Brownian, false, s, m, u, db);
                let (sl, sr) = self.split(Component::Small, false, s, m, u, ds);
                let k = times.partition_point(|&t| t <= m);
                if k > 0 && times[k - 1] == m {
                    // Event exactly at the midpoint: the split already realises it.
                    self.pieces_into(s, m, bl, sl, &times[..k - 1], out);
                } else {
                    self.pieces_into(s, m, bl, sl, &times[..k], out);
                }
                // The piece ending at m and the one starting at m are only
                // separate when an event sits at m.
                let merge = !(k > 0 && times[k - 1] == m);
                let before = out.len();
                self.pieces_into(m, u, br, sr, &times[k..], out);
                if merge {
                    let first_right = out.remove(before);
                    let last_left = &mut out[before - 1];
                    last_left.0 += first_right.0;
                    last_left.1 += first_right.1;
                }
                return;
            }
        }
        let (mut lo, mut rb, mut rs) = (s, db, ds);
        for &t in times {
            let (bl, br) = self.split(Component::Brownian, true, lo, t, u, rb);
            let (sl, sr) = self.split(Component::Small, true, lo, t, u, rs);
            out.push((bl, sl));
            lo = t;
            rb = br;
            rs = sr;
        }
        out.push((rb, rs));
    }
}

/// One realisation of the driving noise on a grid.
#[derive(Debug, Clone)]
pub struct NoisePath {
    model: Arc<NoiseModel>,
    pub grid: Vec<f64>,
    pub brownian: Vec<f64>,
    pub small_jumps: Vec<f64>,
    pub jumps: Vec<Jump>,
    pub provenance: StreamKey,
}

impl PartialEq for NoisePath {
    fn eq(&self, other: &Self) -> bool {
        self.model.spec == other.model.spec
            && bits_eq(&self.grid, &other.grid)
            && bits_eq(&self.brownian, &other.brownian)
            && bits_eq(&self.small_jumps, &other.small_jumps)
            && self.jumps.len() == other.jumps.len()
            && self.jumps.iter().zip(&other.jumps).all(|(a, b)| {
                a.time.to_bits() == b.time.to_bits() && a.size.to_bits() == b.size.to_bits() && a.mark == b.mark
            })
            && self.provenance == other.provenance
    }
}

fn bits_eq(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

const MAGIC: &[u8; 4] = b"LVYP";
pub const FORMAT_VERSION: u32 = 1;

impl NoisePath {
    pub fn model(&self) -> &Arc<NoiseModel> {
        &self.model
    }

    pub fn spec(&self) -> &NoiseSpec {
        &self.model.spec
    }

    pub fn cells(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    pub fn bridges(&self) -> Bridges {
        Bridges {
            brownian: self.provenance.keyed(Purpose::BrownianBridge),
            small: self.provenance.keyed(Purpose::SmallJumpBridge),
            event_brownian: self.provenance.keyed(Purpose::EventBridgeBrownian),
            event_small: self.provenance.keyed(Purpose::EventBridgeSmallJump),
            horizon: self.model.spec.horizon,
            grain_b: self.model.brownian_grain(),
            grain_s: self.model.small_jump_grain(),
            small_rate: self.model.small_jump_second_moment,
        }
    }

    /// `B(t_n)`, the Brownian value at the end of the grid.
    pub fn brownian_terminal(&self) -> f64 {
        self.brownian.iter().sum()
    }

    /// Sum of jump sizes for one mark.
    pub fn jump_mass(&self, mark: Mark) -> f64 {
        self.jumps.iter().filter(|j| j.mark == mark).map(|j| j.size).sum()
    }

    /// Same realisation on `new_grid`, which must contain the current grid.
    pub fn refine(&self, new_grid: &[f64]) -> Result<NoisePath> {
        validate_grid(new_grid, self.model.spec.horizon)
            .map_err(|e| Error::Refinement(format!("new grid is invalid: {e}")))?;
        if self.horizon() != self.model.spec.horizon {
            return Err(Error::Refinement("a truncated path cannot be refined".into()));
        }
        let mut bridges = self.bridges();
        let mut brownian = Vec::with_capacity(new_grid.len() - 1);
        let mut small = Vec::with_capacity(new_grid.len() - 1);
        let mut j = 0;
        for i in 0..self.cells() {
            let (s, u) = (self.grid[i], self.grid[i + 1]);
            while j < new_grid.len() && new_grid[j] < s {
                j += 1;
            }
            if j == new_grid.len() || new_grid[j] != s {
                return Err(Error::Refinement(format!("new grid does not contain old point {s}")));
            }
            let start = j + 1;
            let mut end = start;
            while end < new_grid.len() && new_grid[end] < u {
                end += 1;
            }
            if end == new_grid.len() || new_grid[end] != u {
                return Err(Error::Refinement(format!("new grid does not contain old point {u}")));
            }
            refine_cell(&mut bridges, &new_grid[j..=end], self.brownian[i], self.small_jumps[i], &mut brownian, &mut small);
            j = end;
        }
        Ok(NoisePath {
            model: Arc::clone(&self.model),
            grid: new_grid.to_vec(),
            brownian,
            small_jumps: small,
            jumps: self.jumps.clone(),
            provenance: self.provenance,
        })
    }

    /// The path restricted to `[0, s]`; `s` must be a grid point.
    pub fn truncate(&self, s: f64) -> Result<NoisePath> {
        let k = self
            .grid
            .iter()
            .position(|&t| t == s)
            .ok_or_else(|| Error::spec(format!("truncation time {s} is not a grid point")))?;
        if k == 0 {
            return Err(Error::spec("cannot truncate to an empty path"));
        }
        Ok(NoisePath {
            model: Arc::clone(&self.model),
            grid: self.grid[..=k].to_vec(),
            brownian: self.brownian[..k].to_vec(),
            small_jumps: self.small_jumps[..k].to_vec(),
            jumps: self.jumps.iter().copied().filter(|j| j.time <= s).collect(),
            provenance: self.provenance,
        })
    }

    /// Little-endian binary encoding: magic, version, grid length, jump count,
    /// grid, Brownian increments, small-jump increments, jumps `(t, z, mark)`,
    /// then the provenance and the resolved spec as JSON.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.grid.len() as u64).to_le_bytes())?;
        w.write_all(&(self.jumps.len() as u64).to_le_bytes())?;
        for v in self.grid.iter().chain(&self.brownian).chain(&self.small_jumps) {
            w.write_all(&v.to_le_bytes())?;
        }
        for j in &self.jumps {
            w.write_all(&j.time.to_le_bytes())?;
            w.write_all(&j.size.to_le_bytes())?;
            w.write_all(&[j.mark as u8])?;
        }
        w.write_all(&self.provenance.master_seed.to_le_bytes())?;
        w.write_all(&self.provenance.stream_index.to_le_bytes())?;
        let spec = serde_json::to_vec(&self.model.spec)?;
        w.write_all(&(spec.len() as u64).to_le_bytes())?;
        w.write_all(&spec)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<NoisePath> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a noise path file (bad magic)".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported noise path version {version}")));
        }
        let n = read_u64(&mut r)? as usize;
        let m = read_u64(&mut r)? as usize;
        if n < 2 || n > 1 << 32 || m > 1 << 40 {
            return Err(Error::Format("implausible noise path header".into()));
        }
        let grid = read_f64s(&mut r, n)?;
        let brownian = read_f64s(&mut r, n - 1)?;
        let small_jumps = read_f64s(&mut r, n - 1)?;
        let mut jumps = Vec::with_capacity(m);
        for _ in 0..m {
            let time = read_f64(&mut r)?;
            let size = read_f64(&mut r)?;
            let mut mark = [0u8; 1];
            r.read_exact(&mut mark)?;
            let mark = match mark[0] {
                0 => Mark::Driver0,
                1 => Mark::Driver1,
                other => return Err(Error::Format(format!("unknown jump mark {other}"))),
            };
            jumps.push(Jump { time, size, mark });
        }
        let provenance = StreamKey::new(read_u64(&mut r)?, read_u64(&mut r)?);
        let len = read_u64(&mut r)? as usize;
        let mut spec = vec![0u8; len];
        r.read_exact(&mut spec)?;
        let spec: NoiseSpec = serde_json::from_slice(&spec)?;
        let model = NoiseModel::from_resolved(&spec)?;
        Ok(NoisePath { model, grid, brownian, small_jumps, jumps, provenance })
    }

    /// CSV with one row per cell: right endpoint, Brownian increment,
    /// small-jump increment.
    pub fn increments_csv(&self) -> String {
        let mut s = String::from("t,brownian_increment,small_jump_increment\n");
        for i in 0..self.cells() {
            s.push_str(&format!("{},{},{}\n", self.grid[i + 1], self.brownian[i], self.small_jumps[i]));
        }
        s
    }

    pub fn jumps_csv(&self) -> String {
        let mut s = String::from("t,z,mark\n");
        for j in &self.jumps {
            let mark = match j.mark {
                Mark::Driver0 => "driver0",
                Mark::Driver1 => "driver1",
            };
            s.push_str(&format!("{},{},{}\n", j.time, j.size, mark));
        }
        s
    }
}

/// Splits one old cell onto the new points `pts` (endpoints included),
/// bisecting at the point nearest the midpoint first.
fn refine_cell(bridges: &mut Bridges, pts: &[f64], db: f64, ds: f64, out_b: &mut Vec<f64>, out_s: &mut Vec<f64>) {
    if pts.len() == 2 {
        out_b.push(db);
        out_s.push(ds);
        return;
    }
    let (s, u) = (pts[0], pts[pts.len() - 1]);
    let mid = 0.5 * (s + u);
    let interior = &pts[1..pts.len() - 1];
    let mut best = 0;
    for (i, &t) in interior.iter().enumerate() {
        if (t - mid).abs() < (interior[best] - mid).abs() {
            best = i;
        }
    }
    let k = best + 1;
    let t = pts[k];
    let (bl, br) = bridges.split(Component::Brownian, false, s, t, u, db);
    let (sl, sr) = bridges.split(Component::Small, false, s, t, u, ds);
    refine_cell(bridges, &pts[..=k], bl, sl, out_b, out_s);
    refine_cell(bridges, &pts[k..], br, sr, out_b, out_s);
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    (0..n).map(|_| read_f64(r)).collect()
}

/// One increment over `dt` of the centred spectrally positive α-stable
/// process with `log E[exp(-uX)] = c·u^α·dt`, via the Chambers–Mallows–Stuck
/// transform with skewness 1.
pub fn stable_increment<R: Rng + ?Sized>(alpha: f64, c: f64, dt: f64, rng: &mut R) -> f64 {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let tan = (half_pi * alpha).tan();
    let b = tan.atan() / alpha;
    let s = (1.0 + tan * tan).powf(0.5 / alpha);
    let v = std::f64::consts::PI * (rng::uniform(rng) - 0.5);
    let w = rng::standard_exponential(rng);
    let x = s * (alpha * (v + b)).sin() / v.cos().powf(1.0 / alpha)
        * ((v - alpha * (v + b)).cos() / w).powf((1.0 - alpha) / alpha);
    let sigma = (c * dt * (half_pi * alpha).cos().abs()).powf(1.0 / alpha);
    sigma * x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stable_spec(seed: u64) -> NoiseSpec {
        NoiseSpec::new(1.0, seed)
            .with_brownian()
            .with_driver(LevyMeasure::stable(1.5, 1.0).unwrap())
            .with_epsilon(0.01)
    }

    #[test]
    fn gaussian_substitute_is_default_for_stable() {
        let model = NoiseModel::new(&stable_spec(1), 1000).unwrap();
        assert_eq!(model.mode(), SmallJumpMode::GaussianSubstitute);
        // H(0.01) = 0.01^0.5 / 0.5
        assert!((model.small_jump_second_moment - 0.2).abs() < 1e-12);
        assert!((model.rate0() - 0.01f64.powf(-1.5) / 1.5).abs() < 1e-9);
    }

    #[test]
    fn grid_must_span_horizon() {
        let model = NoiseModel::new(&stable_spec(1), 10).unwrap();
        assert!(model.sample(&[0.0, 0.5], 0).is_err());
        assert!(model.sample(&[0.0, 0.6, 0.5, 1.0], 0).is_err());
    }

    #[test]
    fn sampling_is_reproducible() {
        let model = NoiseModel::new(&stable_spec(9), 64).unwrap();
        let grid = uniform_grid(1.0, 64);
        let a = model.sample(&grid, 5).unwrap();
        let b = model.sample(&grid, 5).unwrap();
        let c = model.sample(&grid, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.jumps.iter().all(|j| j.time > 0.0 && j.time <= 1.0 && j.size > 0.01));
        assert!(a.jumps.windows(2).all(|w| w[0].time <= w[1].time));
    }

    #[test]
    fn refinement_sums_exactly_and_is_path_independent() {
        let model = NoiseModel::new(&stable_spec(4), 16).unwrap();
        let coarse = model.sample(&uniform_grid(1.0, 16), 0).unwrap();
        let once = coarse.refine(&uniform_grid(1.0, 128)).unwrap();
        let twice = coarse.refine(&uniform_grid(1.0, 32)).unwrap().refine(&uniform_grid(1.0, 128)).unwrap();
        assert_eq!(once, twice);
        for i in 0..16 {
            let b: f64 = once.brownian[8 * i..8 * i + 8].iter().sum();
            let s: f64 = once.small_jumps[8 * i..8 * i + 8].iter().sum();
            assert_eq!(b.to_bits(), coarse.brownian[i].to_bits());
            assert_eq!(s.to_bits(), coarse.small_jumps[i].to_bits());
        }
        assert_eq!(once.jumps, coarse.jumps);
        assert!(coarse.refine(&uniform_grid(1.0, 24)).is_err());
    }

    #[test]
    fn event_pieces_sum_to_cell() {
        let model = NoiseModel::new(&stable_spec(4), 8).unwrap();
        let path = model.sample(&uniform_grid(1.0, 8), 0).unwrap();
        let mut br = path.bridges();
        let times = [0.13, 0.2, 0.2000001, 0.24];
        let pieces = br.pieces(0.125, 0.25, path.brownian[1], path.small_jumps[1], &times);
        assert_eq!(pieces.len(), 5);
        let b: f64 = pieces.iter().map(|p| p.0).sum();
        assert_eq!(b.to_bits(), path.brownian[1].to_bits());
        // A finer grid sees the same value at the event time.
        let fine = path.refine(&uniform_grid(1.0, 64)).unwrap();
        let mut fb = fine.bridges();
        let k = 12; // cell [0.1875, 0.203125]
        let fp = fb.pieces(fine.grid[k], fine.grid[k + 1], fine.brownian[k], fine.small_jumps[k], &[0.2]);
        let upto_coarse: f64 = pieces[..2].iter().map(|p| p.0).sum();
        let upto_fine: f64 = fine.brownian[8..k].iter().sum::<f64>() + fp[0].0;
        assert!((upto_coarse - upto_fine).abs() < 1e-12, "{upto_coarse} vs {upto_fine}");
    }

    #[test]
    fn binary_round_trip() {
        let model = NoiseModel::new(&stable_spec(2), 32).unwrap();
        let path = model.sample(&uniform_grid(1.0, 32), 3).unwrap();
        let mut buf = Vec::new();
        path.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"LVYP");
        let back = NoisePath::read_binary(&buf[..]).unwrap();
        assert_eq!(path, back);
        buf[0] = b'X';
        assert!(matches!(NoisePath::read_binary(&buf[..]), Err(Error::Format(_))));
    }

    #[test]
    fn truncation_keeps_prefix() {
        let model = NoiseModel::new(&stable_spec(2), 10).unwrap();
        let path = model.sample(&uniform_grid(1.0, 10), 0).unwrap();
        let t = path.truncate(path.grid[4]).unwrap();
        assert_eq!(t.cells(), 4);
        assert!(t.jumps.iter().all(|j| j.time <= path.grid[4]));
        assert!(path.truncate(0.55).is_err());
    }

    #[test]
    fn finite_activity_driver_simulates_every_jump() {
        let m = LevyMeasure::point_mass(1.0, 3.0, Role::CompensatedDriver).unwrap();
        let model = NoiseModel::new(&NoiseSpec::new(2.0, 0).with_driver(m), 10).unwrap();
        assert_eq!(model.threshold0, 0.0);
        assert_eq!(model.rate0(), 3.0);
        assert_eq!(model.mode(), SmallJumpMode::CompensateOnly);
    }

    #[test]
    fn stable_increment_laplace_transform() {
        let alpha = 1.5;
        let c = crate::levy_measure::gamma_neg_alpha(alpha);
        let mut rng = StreamKey::new(1, 0).stream(Purpose::Stable);
        let n = 100_000;
        let mean = (0..n).map(|_| (-stable_increment(alpha, c, 1.0, &mut rng)).exp()).sum::<f64>() / n as f64;
        let want = c.exp();
        assert!((mean / want - 1.0).abs() < 0.03, "{mean} vs {want}");
    }
}
