//! Synthetic benchmark problems: looped networks with a single fixed-head
//! source, a known "truth" parameter set, and the sensor readings that the
//! truth produces.
//!
//! The `fossolo-like` profile matches the published counts of the classic
//! benchmark (36 demand junctions, 58 PE pipes, one reservoir at 121 m with
//! a 40 m pressure floor); its geometry is generated, not copied.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::calibration::MeasurementSet;
use crate::hydraulics::{
    extract_observations, simulate_eps, HydraulicError, HydraulicSolver, Loading, SensorSet,
};
use crate::network::{HeadlossFormula, Junction, LinkStatus, NetworkModel, Pipe, Reservoir, Valve};
use crate::rng::{derive, Rng};

pub const SOURCE_HEAD: f64 = 121.0;
pub const PE_ROUGHNESS_MM: f64 = 0.0015;
pub const PRESSURE_FLOOR: f64 = 40.0;

const DIURNAL: [f64; 24] = [
    0.6, 0.5, 0.45, 0.45, 0.5, 0.7, 1.0, 1.3, 1.4, 1.3, 1.2, 1.15, 1.2, 1.1, 1.0, 1.0, 1.05, 1.2,
    1.35, 1.5, 1.25, 1.0, 0.8, 0.7,
];
const COMMERCIAL_DIAMETERS: [f64; 15] = [
    80.0, 100.0, 125.0, 150.0, 200.0, 250.0, 300.0, 350.0, 400.0, 450.0, 500.0, 600.0, 700.0,
    800.0, 1000.0,
];
const BASE_MINOR_LOSS: f64 = 0.5;
const BASE_LEAK_COEFF: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    FossoloLike,
    Scaled(usize),
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "fossolo-like" {
            return Ok(Profile::FossoloLike);
        }
        let inner = s
            .strip_prefix("scaled(")
            .and_then(|r| r.strip_suffix(')'))
            .or_else(|| s.strip_prefix("scaled:"))
            .ok_or_else(|| format!("unknown profile `{s}` (expected fossolo-like or scaled(N))"))?;
        let n: usize = inner
            .parse()
            .map_err(|_| format!("invalid junction count in `{s}`"))?;
        if n < 2 {
            return Err("scaled profile needs at least 2 junctions".into());
        }
        Ok(Profile::Scaled(n))
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::FossoloLike => f.write_str("fossolo-like"),
            Profile::Scaled(n) => write!(f, "scaled({n})"),
        }
    }
}

/// Ranges of the per-kind multiplicative bias applied to the base model
/// to obtain the truth, plus the relative per-element jitter on top.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSpec {
    pub demand: (f64, f64),
    pub leak: (f64, f64),
    pub roughness: (f64, f64),
    pub minor: (f64, f64),
    pub jitter: f64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self {
            demand: (1.1, 1.4),
            leak: (1.5, 3.0),
            roughness: (4.0, 12.0),
            minor: (1.5, 3.0),
            jitter: 0.05,
        }
    }
}

impl PerturbationSpec {
    /// No perturbation at all: the truth equals the base model.
    pub fn none() -> Self {
        Self {
            demand: (1.0, 1.0),
            leak: (1.0, 1.0),
            roughness: (1.0, 1.0),
            minor: (1.0, 1.0),
            jitter: 0.0,
        }
    }
}

impl FromStr for PerturbationSpec {
    type Err = String;

    /// `demand=1.1:1.4,leak=1.5:3,roughness=4:12,minor=1.5:3,jitter=0.05`;
    /// omitted keys keep their defaults, `none` disables perturbation.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim() == "none" {
            return Ok(Self::none());
        }
        let mut spec = Self::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| format!("expected key=value in `{part}`"))?;
            let range = |v: &str| -> Result<(f64, f64), String> {
                let (a, b) = v.split_once(':').unwrap_or((v, v));
                let a: f64 = a.parse().map_err(|_| format!("bad number in `{part}`"))?;
                let b: f64 = b.parse().map_err(|_| format!("bad number in `{part}`"))?;
                if !(a > 0.0 && a <= b) {
                    return Err(format!("range in `{part}` must satisfy 0 < lo <= hi"));
                }
                Ok((a, b))
            };
            match key {
                "demand" => spec.demand = range(value)?,
                "leak" => spec.leak = range(value)?,
                "roughness" => spec.roughness = range(value)?,
                "minor" => spec.minor = range(value)?,
                "jitter" => {
                    spec.jitter = value.parse().map_err(|_| format!("bad jitter `{value}`"))?;
                    if !(0.0..1.0).contains(&spec.jitter) {
                        return Err("jitter must lie in [0, 1)".into());
                    }
                }
                other => return Err(format!("unknown perturbation key `{other}`")),
            }
        }
        Ok(spec)
    }
}

impl fmt::Display for PerturbationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "demand={}:{},leak={}:{},roughness={}:{},minor={}:{},jitter={}",
            self.demand.0,
            self.demand.1,
            self.leak.0,
            self.leak.1,
            self.roughness.0,
            self.roughness.1,
            self.minor.0,
            self.minor.1,
            self.jitter
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub profile: Profile,
    pub seed: u64,
    pub perturbation: PerturbationSpec,
    /// Standard deviation of additive gaussian noise on every reading.
    pub noise_sigma: f64,
    /// s
    pub duration: u64,
    /// s
    pub step: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            profile: Profile::FossoloLike,
            seed: 1,
            perturbation: PerturbationSpec::default(),
            noise_sigma: 0.0,
            duration: 86_400,
            step: 3_600,
        }
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("cannot keep every junction above {floor} m: minimum pressure is {min_pressure:.3} m even without demand")]
    InfeasiblePressureFloor { floor: f64, min_pressure: f64 },
    #[error(transparent)]
    Hydraulic(#[from] HydraulicError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone)]
pub struct SynthProblem {
    pub base: NetworkModel,
    pub truth: NetworkModel,
    pub rules: String,
    pub measurements: MeasurementSet,
    pub sensors: SensorSet,
    /// Multiplicative biases actually drawn, per parameter kind.
    pub factors: BTreeMap<String, f64>,
    /// Factor by which the initial demands were scaled to meet the pressure floor.
    pub demand_scale: f64,
}

struct Layout {
    model: NetworkModel,
    /// Pipe indices of the BFS spanning tree rooted at the source.
    tree: Vec<bool>,
    /// BFS depth of each junction.
    depth: Vec<usize>,
}

/// Grid-based looped layout with `n` junctions and one reservoir at the corner.
/// `extra_links` is the number of loop-closing pipes added to the spanning tree.
fn grid_layout(n: usize, extra_links: Option<usize>, rng: &mut Rng) -> Layout {
    let cols = (n as f64).sqrt().ceil() as usize;
    let pos = |i: usize| (i % cols, i / cols);
    let mut candidates = Vec::new();
    for i in 0..n {
        let (x, y) = pos(i);
        if x + 1 < cols && i + 1 < n {
            candidates.push((i, i + 1));
        }
        if i + cols < n {
            candidates.push((i, i + cols));
        }
        let _ = y;
    }
    candidates.shuffle(rng);

    // Randomized Kruskal spanning tree, then loop-closing extras.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut a: usize) -> usize {
        while parent[a] != a {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        a
    }
    let mut tree_edges = Vec::new();
    let mut rest = Vec::new();
    for &(a, b) in &candidates {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
            tree_edges.push((a, b));
        } else {
            rest.push((a, b));
        }
    }
    let extra = extra_links
        .unwrap_or((rest.len() as f64 * 0.6).round() as usize)
        .min(rest.len());
    let mut edges: Vec<(usize, usize)> = tree_edges.clone();
    edges.extend(rest.iter().take(extra));
    edges.sort_unstable();

    let x_slope = rng.random_range(-1.0..1.0);
    let y_slope = rng.random_range(-1.0..1.0);
    let span = cols.max(2) as f64 - 1.0;
    let junctions: Vec<Junction> = (0..n)
        .map(|i| {
            let (x, y) = pos(i);
            let ramp = 5.0 * (x_slope * x as f64 + y_slope * y as f64) / span;
            let elevation = (60.0 + ramp + rng.random_range(-4.0..4.0)).clamp(50.0, 70.0);
            let mut j = Junction::new(format!("J{}", i + 1), round_to(elevation, 2), 0.0);
            j.pattern_id = Some("DIURNAL".into());
            j.zone = Some(if x < cols / 2 { "Z1".into() } else { "Z2".into() });
            j.age_years = Some(rng.random_range(0..60) as f64);
            j
        })
        .collect();

    let mut model = NetworkModel {
        title: String::new(),
        junctions,
        reservoirs: vec![Reservoir {
            id: "R1".into(),
            head: SOURCE_HEAD,
            head_pattern: None,
        }],
        ..Default::default()
    };
    model.patterns.insert("DIURNAL".into(), DIURNAL.to_vec());
    model.options.headloss = HeadlossFormula::DarcyWeisbach;
    model.options.duration = 86_400;
    model.options.hydraulic_step = 3_600;
    model.options.pattern_step = 3_600;
    model.coordinates.insert("R1".into(), (-200.0, 0.0));
    for i in 0..n {
        let (x, y) = pos(i);
        model
            .coordinates
            .insert(format!("J{}", i + 1), (x as f64 * 200.0, y as f64 * 200.0));
    }

    let mut pipes = vec![("R1".to_string(), "J1".to_string())];
    pipes.extend(
        edges
            .iter()
            .map(|&(a, b)| (format!("J{}", a + 1), format!("J{}", b + 1))),
    );
    for (k, (from, to)) in pipes.into_iter().enumerate() {
        let length = round_to(rng.random_range(100.0..300.0), 1);
        let mut pipe = Pipe::new(format!("P{}", k + 1), from, to, length, 100.0, PE_ROUGHNESS_MM);
        pipe.material = Some("PE".into());
        pipe.minor_loss_k = BASE_MINOR_LOSS;
        pipe.age_years = Some(rng.random_range(0..50) as f64);
        model.pipes.push(pipe);
    }

    // BFS tree from the source over the chosen edges.
    let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (k, &(a, b)) in edges.iter().enumerate() {
        adjacency[a].push((b, k + 1));
        adjacency[b].push((a, k + 1));
    }
    let mut depth = vec![usize::MAX; n];
    let mut tree = vec![false; model.pipes.len()];
    tree[0] = true;
    depth[0] = 1;
    let mut queue = VecDeque::from([0usize]);
    while let Some(a) = queue.pop_front() {
        for &(b, k) in &adjacency[a] {
            if depth[b] == usize::MAX {
                depth[b] = depth[a] + 1;
                tree[k] = true;
                queue.push_back(b);
            }
        }
    }
    Layout { model, tree, depth }
}

fn round_to(v: f64, digits: i32) -> f64 {
    let s = 10f64.powi(digits);
    (v * s).round() / s
}

/// Sizes tree pipes for ~0.8 m/s at peak demand; loop closers get the
/// smaller of their neighbours' sizes.
fn size_pipes(layout: &mut Layout) {
    let model = &mut layout.model;
    let n = model.junctions.len();
    let peak = DIURNAL.iter().copied().fold(0.0, f64::max);
    let index: std::collections::HashMap<String, usize> =
        model.junctions.iter().enumerate().map(|(i, j)| (j.id.clone(), i)).collect();
    let idx = |id: &str| index.get(id).copied();
    // Parent pointers along the BFS tree: accumulate subtree demand.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(layout.depth[i]));
    let mut parent_pipe = vec![usize::MAX; n];
    for (k, p) in model.pipes.iter().enumerate() {
        if !layout.tree[k] {
            continue;
        }
        let (a, b) = (idx(&p.from), idx(&p.to));
        match (a, b) {
            (None, Some(b)) => parent_pipe[b] = k,
            (Some(a), Some(b)) => {
                if layout.depth[a] < layout.depth[b] {
                    parent_pipe[b] = k;
                } else {
                    parent_pipe[a] = k;
                }
            }
            _ => {}
        }
    }
    let mut subtree: Vec<f64> = model
        .junctions
        .iter()
        .map(|j| (j.base_demand * peak + 0.3).max(0.3))
        .collect();
    let mut pipe_flow = vec![0.0; model.pipes.len()];
    for &i in &order {
        let k = parent_pipe[i];
        if k == usize::MAX {
            continue;
        }
        pipe_flow[k] = subtree[i];
        let p = &model.pipes[k];
        let other = if idx(&p.from) == Some(i) { &p.to } else { &p.from };
        if let Some(o) = idx(other) {
            subtree[o] += subtree[i];
        }
    }
    for (k, pipe) in model.pipes.iter_mut().enumerate() {
        if layout.tree[k] {
            let q = pipe_flow[k] / 1000.0;
            let d_mm = (4.0 * q / (std::f64::consts::PI * 0.8)).sqrt() * 1000.0;
            pipe.diameter = COMMERCIAL_DIAMETERS
                .iter()
                .copied()
                .find(|&c| c >= d_mm)
                .unwrap_or(1000.0);
        }
    }
    let tree_diameters: Vec<f64> = model.pipes.iter().map(|p| p.diameter).collect();
    for k in 0..model.pipes.len() {
        if layout.tree[k] {
            continue;
        }
        let p = &model.pipes[k];
        let neighbour = |node: &str| {
            idx(node)
                .map(|i| parent_pipe[i])
                .filter(|&pp| pp != usize::MAX)
                .map(|pp| tree_diameters[pp])
                .unwrap_or(100.0)
        };
        let d = neighbour(&p.from).min(neighbour(&p.to));
        model.pipes[k].diameter = d.max(COMMERCIAL_DIAMETERS[0]);
    }
}

/// Minimum junction pressure at the peak pattern multiplier.
fn peak_min_pressure(model: &NetworkModel) -> Result<f64, HydraulicError> {
    let peak = DIURNAL.iter().copied().fold(0.0, f64::max);
    let state = HydraulicSolver::new(model)?.solve(&Loading::uniform(model, peak))?;
    if !state.converged {
        return Err(HydraulicError::NonConvergence {
            time: 0,
            mass_residual: state.max_mass_residual,
            mean_mass_residual: state.mean_mass_residual,
            energy_residual: state.max_energy_residual,
        });
    }
    Ok(state
        .junction_pressures
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min))
}

fn scaled_demands(model: &NetworkModel, raw: &[f64], scale: f64) -> NetworkModel {
    let mut m = model.clone();
    for (j, d) in m.junctions.iter_mut().zip(raw) {
        j.base_demand = round_to(d * scale, 6);
    }
    m
}

/// Scales demands so the minimum peak pressure sits just above the floor.
fn fit_pressure_floor(model: &NetworkModel, raw: &[f64]) -> Result<(NetworkModel, f64), SynthError> {
    let zero = scaled_demands(model, raw, 0.0);
    let p0 = peak_min_pressure(&zero)?;
    if p0 < PRESSURE_FLOOR {
        return Err(SynthError::InfeasiblePressureFloor {
            floor: PRESSURE_FLOOR,
            min_pressure: p0,
        });
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while peak_min_pressure(&scaled_demands(model, raw, hi))? >= PRESSURE_FLOOR {
        lo = hi;
        hi *= 2.0;
        if hi > 1e4 {
            return Ok((scaled_demands(model, raw, lo), lo));
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let p = peak_min_pressure(&scaled_demands(model, raw, mid))?;
        if p >= PRESSURE_FLOOR {
            lo = mid;
            if p < PRESSURE_FLOOR + 0.5 {
                break;
            }
        } else {
            hi = mid;
        }
    }
    // Rounding of demands can nudge the floor; step down until it holds.
    let mut scale = lo;
    let mut m = scaled_demands(model, raw, scale);
    while peak_min_pressure(&m)? < PRESSURE_FLOOR {
        scale *= 0.999;
        m = scaled_demands(model, raw, scale);
    }
    Ok((m, scale))
}

/// Base network of the given profile, demands fitted to the pressure floor.
pub fn base_network(profile: Profile, seed: u64) -> Result<(NetworkModel, f64), SynthError> {
    let mut rng = derive(seed, 1);
    let (n, extra) = match profile {
        Profile::FossoloLike => (36, Some(22)),
        Profile::Scaled(n) => (n, None),
    };
    let mut layout = grid_layout(n, extra, &mut rng);
    layout.model.title = format!("synthetic {profile} network, seed {seed}");
    let raw: Vec<f64> = (0..n).map(|_| round_to(rng.random_range(0.5..2.0), 3)).collect();
    for (j, d) in layout.model.junctions.iter_mut().zip(&raw) {
        j.base_demand = *d;
        j.emitter_coeff = BASE_LEAK_COEFF;
    }
    size_pipes(&mut layout);
    fit_pressure_floor(&layout.model, &raw)
}

/// Expert rules bracketing every calibrated parameter of a synthetic base model.
pub fn rules_for(base: &NetworkModel) -> String {
    let max_demand = base
        .junctions
        .iter()
        .map(|j| j.base_demand)
        .fold(0.0, f64::max);
    let demand_hi = round_to(2.0 * max_demand, 3).max(0.001);
    let mut materials: Vec<&str> = base
        .pipes
        .iter()
        .filter_map(|p| p.material.as_deref())
        .collect();
    materials.sort_unstable();
    materials.dedup();
    let mut out = String::from("# Expert calibration ranges for the synthetic benchmark.\n\n");
    for m in materials {
        out.push_str(&format!(
            "rule roughness_{m}\nmatch pipe where material == \"{m}\"\nparam roughness\nbounds 0.0005 0.05\ngroup pressure\nend\n\n",
            m = m
        ));
    }
    out.push_str("rule pipe_minor_losses\nmatch pipe\nparam minor_loss\nbounds 0 4\nend\n\n");
    out.push_str(&format!(
        "rule nodal_demand\nmatch junction\nparam base_demand\nbounds 0 {demand_hi}\ngroup flow\nend\n\n"
    ));
    out.push_str("rule leakage\nmatch junction\nparam leak_coeff\nbounds 0 0.2\nend\n");
    if !base.valves.is_empty() {
        out.push_str("\nrule valve_losses\nmatch valve\nparam valve_loss\nbounds 0 50\nend\n");
    }
    out
}

/// Absolute pipe flows at the peak multiplier (pipes first in link order).
fn peak_pipe_flows(model: &NetworkModel) -> Result<Vec<f64>, HydraulicError> {
    let peak = DIURNAL.iter().copied().fold(0.0, f64::max);
    let state = HydraulicSolver::new(model)?.solve(&Loading::uniform(model, peak))?;
    Ok(state.link_flows[..model.pipes.len()].iter().map(|q| q.abs()).collect())
}

fn pick_sensors(base: &NetworkModel, peak_flows: &[f64], rng: &mut Rng) -> SensorSet {
    let n = base.junctions.len();
    let mut junctions: Vec<usize> = (0..n).collect();
    junctions.shuffle(rng);
    // Pressure sensors favour the far half of the network (higher ids sit
    // further from the corner source).
    let far: Vec<usize> = {
        let mut v: Vec<usize> = junctions.iter().copied().filter(|&i| i >= n / 2).collect();
        v.extend(junctions.iter().copied().filter(|&i| i < n / 2));
        v
    };
    let pressure: Vec<String> = far.iter().take(3.min(n)).map(|&i| base.junctions[i].id.clone()).collect();
    let holdout_pressure: Vec<String> = far
        .iter()
        .skip(3)
        .take(1)
        .map(|&i| base.junctions[i].id.clone())
        .collect();
    // Flow meters sit on the busier third of the mains: a near-idle loop
    // closer has almost no signal to fit or to validate against.
    let mut links: Vec<usize> = (1..base.pipes.len()).collect();
    links.sort_by(|&a, &b| peak_flows[b].total_cmp(&peak_flows[a]).then(a.cmp(&b)));
    links.truncate((base.pipes.len() / 3).max(3).min(links.len()));
    links.shuffle(rng);
    let mut flow = vec![base.pipes[0].id.clone()];
    flow.extend(links.iter().take(2).map(|&k| base.pipes[k].id.clone()));
    let holdout_flow = links
        .iter()
        .skip(2)
        .take(1)
        .map(|&k| base.pipes[k].id.clone())
        .collect();
    SensorSet {
        flow,
        pressure,
        holdout_flow,
        holdout_pressure,
    }
}

/// Applies the drawn biases plus jitter to every calibrated attribute.
pub fn perturb(
    base: &NetworkModel,
    spec: &PerturbationSpec,
    rng: &mut Rng,
) -> (NetworkModel, BTreeMap<String, f64>) {
    let mut draw = |(lo, hi): (f64, f64)| if lo == hi { lo } else { rng.random_range(lo..=hi) };
    let factors = BTreeMap::from([
        ("base_demand".to_string(), draw(spec.demand)),
        ("leak_coeff".to_string(), draw(spec.leak)),
        ("roughness".to_string(), draw(spec.roughness)),
        ("minor_loss".to_string(), draw(spec.minor)),
    ]);
    let max_demand = base.junctions.iter().map(|j| j.base_demand).fold(0.0, f64::max);
    let demand_hi = round_to(2.0 * max_demand, 3).max(0.001);
    let mut jitter = || {
        if spec.jitter == 0.0 {
            1.0
        } else {
            1.0 + rng.random_range(-spec.jitter..=spec.jitter)
        }
    };
    let mut truth = base.clone();
    for j in &mut truth.junctions {
        j.base_demand = (j.base_demand * factors["base_demand"] * jitter()).clamp(0.0, demand_hi);
        j.emitter_coeff = (j.emitter_coeff * factors["leak_coeff"] * jitter()).clamp(0.0, 0.2);
    }
    for p in &mut truth.pipes {
        p.roughness = (p.roughness * factors["roughness"] * jitter()).clamp(0.0005, 0.05);
        p.minor_loss_k = (p.minor_loss_k * factors["minor_loss"] * jitter()).clamp(0.0, 4.0);
    }
    (truth, factors)
}

/// Readings of `model` at `sensors` (calibration and holdout) plus noise.
pub fn observe(
    model: &NetworkModel,
    sensors: &SensorSet,
    duration: u64,
    step: u64,
    noise_sigma: f64,
    rng: &mut Rng,
) -> Result<MeasurementSet, SynthError> {
    let result = simulate_eps(model, duration, step)?;
    let mut series = extract_observations(&result, &sensors.all_ids())
        .map_err(|e| SynthError::Config(e.to_string()))?;
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).map_err(|e| SynthError::Config(e.to_string()))?;
        for values in series.values_mut() {
            for (_, v) in values.iter_mut() {
                *v += normal.sample(rng);
            }
        }
    }
    Ok(MeasurementSet::new(series))
}

/// Generates a complete calibration problem.
pub fn generate(config: &SynthConfig) -> Result<SynthProblem, SynthError> {
    if config.step == 0 || config.duration < config.step || config.duration % config.step != 0 {
        return Err(SynthError::Config(
            "duration must be a positive multiple of step".into(),
        ));
    }
    if !(config.noise_sigma >= 0.0) {
        return Err(SynthError::Config("noise sigma must be nonnegative".into()));
    }
    let (mut base, demand_scale) = base_network(config.profile, config.seed)?;
    base.options.duration = config.duration;
    base.options.hydraulic_step = config.step;
    let mut rng = derive(config.seed, 2);
    let flows = peak_pipe_flows(&base).map_err(SynthError::Hydraulic)?;
    let sensors = pick_sensors(&base, &flows, &mut rng);
    let (truth, factors) = perturb(&base, &config.perturbation, &mut rng);
    let mut noise_rng = derive(config.seed, 3);
    let measurements = observe(
        &truth,
        &sensors,
        config.duration,
        config.step,
        config.noise_sigma,
        &mut noise_rng,
    )?;
    Ok(SynthProblem {
        rules: rules_for(&base),
        base,
        truth,
        measurements,
        sensors,
        factors,
        demand_scale,
    })
}

/// Variant of a base model with known attributes (lengths, elevations,
/// demands) perturbed by up to `fraction`, keeping topology and ids.
pub fn variant(base: &NetworkModel, fraction: f64, seed: u64) -> NetworkModel {
    let mut rng = derive(seed, 4);
    let mut out = base.clone();
    let mut f = || 1.0 + rng.random_range(-fraction..=fraction);
    for j in &mut out.junctions {
        j.base_demand = round_to(j.base_demand * f(), 6);
        j.elevation = round_to(j.elevation * (1.0 + (f() - 1.0) * 0.1), 3);
    }
    for p in &mut out.pipes {
        p.length = round_to(p.length * f(), 3);
    }
    out
}

/// The problem `p` moved onto a `variant` of its network: same sensors,
/// same per-kind biases, fresh jitter, fresh readings.
pub fn variant_problem(p: &SynthProblem, config: &SynthConfig, fraction: f64, seed: u64) -> Result<SynthProblem, SynthError> {
    let base = variant(&p.base, fraction, seed);
    let pinned = |k: &str| (p.factors[k], p.factors[k]);
    let spec = PerturbationSpec {
        demand: pinned("base_demand"),
        leak: pinned("leak_coeff"),
        roughness: pinned("roughness"),
        minor: pinned("minor_loss"),
        jitter: config.perturbation.jitter,
    };
    let mut rng = derive(seed, 6);
    let (truth, factors) = perturb(&base, &spec, &mut rng);
    let mut noise_rng = derive(seed, 7);
    let measurements = observe(&truth, &p.sensors, config.duration, config.step, config.noise_sigma, &mut noise_rng)?;
    Ok(SynthProblem {
        rules: rules_for(&base),
        base,
        truth,
        measurements,
        sensors: p.sensors.clone(),
        factors,
        demand_scale: p.demand_scale,
    })
}

/// Random valid network for solver property tests: loops, several
/// sources, emitters, throttle valves, some closed loop links, either
/// head-loss formula.
pub fn random_network(n: usize, seed: u64) -> NetworkModel {
    let mut rng = derive(seed, 5);
    let mut layout = grid_layout(n, None, &mut rng);
    let model = &mut layout.model;
    for j in &mut model.junctions {
        j.base_demand = if rng.random_bool(0.15) {
            0.0
        } else {
            round_to(rng.random_range(0.05..3.0), 4)
        };
        j.emitter_coeff = if rng.random_bool(0.3) {
            round_to(rng.random_range(0.01..0.3), 4)
        } else {
            0.0
        };
        j.elevation = round_to(rng.random_range(0.0..40.0), 2);
    }
    size_pipes(&mut layout);
    let model = &mut layout.model;
    let hazen = rng.random_bool(0.5);
    if hazen {
        model.options.headloss = HeadlossFormula::HazenWilliams;
    }
    for p in &mut model.pipes {
        p.roughness = if hazen {
            round_to(rng.random_range(80.0..150.0), 1)
        } else {
            round_to(rng.random_range(0.001..1.0), 4)
        };
        p.minor_loss_k = if rng.random_bool(0.3) {
            round_to(rng.random_range(0.0..5.0), 2)
        } else {
            0.0
        };
    }
    model.reservoirs[0].head = round_to(rng.random_range(90.0..140.0), 2);

    // Extra sources on random junctions' neighbours.
    let extra_sources = rng.random_range(0..3usize).min(n / 5);
    for s in 0..extra_sources {
        let id = format!("R{}", s + 2);
        let target = model.junctions[rng.random_range(0..n)].id.clone();
        model.reservoirs.push(Reservoir {
            id: id.clone(),
            head: round_to(rng.random_range(90.0..140.0), 2),
            head_pattern: None,
        });
        let k = model.pipes.len() + 1;
        let mut pipe = Pipe::new(format!("P{k}"), id, target, 150.0, 200.0, model.pipes[0].roughness);
        pipe.material = Some("PE".into());
        model.pipes.push(pipe);
        layout.tree.push(true);
    }

    // Turn some loop closers into valves or close them.
    let loop_links: Vec<usize> = (0..model.pipes.len()).filter(|&k| !layout.tree[k]).collect();
    let mut to_valve = Vec::new();
    for k in loop_links {
        let roll: f64 = rng.random();
        if roll < 0.08 {
            to_valve.push(k);
        } else if roll < 0.12 {
            model.pipes[k].status = LinkStatus::Closed;
        }
    }
    for (v, &k) in to_valve.iter().enumerate().rev() {
        let pipe = model.pipes.remove(k);
        model.valves.push(Valve {
            id: format!("V{}", v + 1),
            from: pipe.from,
            to: pipe.to,
            diameter: pipe.diameter,
            kind: "TCV".into(),
            loss_coeff_k: round_to(rng.random_range(0.0..20.0), 2),
            status: LinkStatus::Open,
        });
    }
    model.valves.sort_by(|a, b| a.id.cmp(&b.id));
    model.title = format!("random network n={n} seed={seed}");
    layout.model
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{parse_inp, validate, write_inp};

    #[test]
    fn fossolo_counts_and_floor() {
        let (m, _) = base_network(Profile::FossoloLike, 1).unwrap();
        assert_eq!(m.junctions.len(), 36);
        assert_eq!(m.pipes.len(), 58);
        assert_eq!(m.reservoirs.len(), 1);
        assert_eq!(m.reservoirs[0].head, 121.0);
        assert!(m.pipes.iter().all(|p| p.roughness == 0.0015 && p.material.as_deref() == Some("PE")));
        assert!(validate(&m).is_empty());
        let p = peak_min_pressure(&m).unwrap();
        assert!(p >= 40.0 && p < 41.0, "{p}");
        let (back, _) = parse_inp(&write_inp(&m)).unwrap();
        assert_eq!(back.junctions.len(), 36);
    }

    #[test]
    fn noiseless_measurements_equal_truth_simulation() {
        let cfg = SynthConfig::default();
        let problem = generate(&cfg).unwrap();
        let result = simulate_eps(&problem.truth, cfg.duration, cfg.step).unwrap();
        let direct = extract_observations(&result, &problem.sensors.all_ids()).unwrap();
        assert_eq!(problem.measurements.series(), &direct);
        assert_eq!(problem.sensors.flow.len(), 3);
        assert_eq!(problem.sensors.pressure.len(), 3);
    }

    #[test]
    fn profile_parsing() {
        assert_eq!("fossolo-like".parse::<Profile>().unwrap(), Profile::FossoloLike);
        assert_eq!("scaled(1000)".parse::<Profile>().unwrap(), Profile::Scaled(1000));
        assert!("scaled(x)".parse::<Profile>().is_err());
    }

    #[test]
    fn perturbation_spec_parsing() {
        let spec: PerturbationSpec = "demand=1.2:1.3,jitter=0".parse().unwrap();
        assert_eq!(spec.demand, (1.2, 1.3));
        assert_eq!(spec.jitter, 0.0);
        assert_eq!(spec.leak, PerturbationSpec::default().leak);
        assert_eq!(spec.to_string().parse::<PerturbationSpec>().unwrap(), spec);
    }

    #[test]
    fn random_networks_are_valid() {
        for seed in 0..20 {
            let m = random_network(10 + seed as usize * 7, seed);
            let d = validate(&m);
            assert!(d.is_empty(), "seed {seed}: {d:?}");
        }
    }
}
