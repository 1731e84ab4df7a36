use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::{GaParams, Optimizer, PsoParams, SaParams, SceParams};
use crate::rng::Rng;

fn uniform_point(bounds: &[(f64, f64)], rng: &mut Rng) -> Vec<f64> {
    bounds.iter().map(|(lo, hi)| lo + rng.random::<f64>() * (hi - lo)).collect()
}

fn gauss(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Mirrors `x` back into [lo, hi] once, then clamps. Returns whether it hit.
fn reflect(x: &mut f64, lo: f64, hi: f64) -> bool {
    let hit = *x < lo || *x > hi;
    if *x < lo {
        *x = lo + (lo - *x);
    } else if *x > hi {
        *x = hi - (*x - hi);
    }
    *x = x.clamp(lo, hi);
    hit
}

fn argmin(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc })
        .0
}

/// Independent uniform draws.
pub struct MonteCarlo {
    bounds: Vec<(f64, f64)>,
    rng: Rng,
}

impl MonteCarlo {
    pub fn new(bounds: Vec<(f64, f64)>, rng: Rng) -> Self {
        Self { bounds, rng }
    }
}

impl Optimizer for MonteCarlo {
    fn ask(&mut self) -> Vec<Vec<f64>> {
        (0..64).map(|_| uniform_point(&self.bounds, &mut self.rng)).collect()
    }

    fn tell(&mut self, _values: &[f64]) {}
}

/// One Latin hypercube design with as many points as the budget: each
/// dimension is cut into `n` equal strata and every stratum holds one point.
pub struct LatinHypercube {
    points: Vec<Vec<f64>>,
    next: usize,
}

impl LatinHypercube {
    pub fn new(bounds: Vec<(f64, f64)>, n: usize, mut rng: Rng) -> Self {
        let mut points = vec![vec![0.0; bounds.len()]; n];
        for (d, (lo, hi)) in bounds.iter().enumerate() {
            let mut strata: Vec<usize> = (0..n).collect();
            strata.shuffle(&mut rng);
            for (p, s) in points.iter_mut().zip(strata) {
                let u = (s as f64 + rng.random::<f64>()) / n as f64;
                p[d] = (lo + u * (hi - lo)).clamp(*lo, *hi);
            }
        }
        Self { points, next: 0 }
    }
}

impl Optimizer for LatinHypercube {
    fn ask(&mut self) -> Vec<Vec<f64>> {
        let end = (self.next + 64).min(self.points.len());
        let batch = self.points[self.next..end].to_vec();
        self.next = end;
        batch
    }

    fn tell(&mut self, _values: &[f64]) {}
}

/// Metropolis acceptance with geometric cooling; the gaussian proposal
/// narrows as the temperature falls.
pub struct SimulatedAnnealing {
    bounds: Vec<(f64, f64)>,
    params: SaParams,
    rng: Rng,
    current: Option<(Vec<f64>, f64)>,
    pending: Vec<f64>,
    temperature: f64,
    t0: f64,
}

impl SimulatedAnnealing {
    pub fn new(bounds: Vec<(f64, f64)>, params: SaParams, rng: Rng) -> Self {
        Self {
            bounds,
            params,
            rng,
            current: None,
            pending: Vec::new(),
            temperature: 0.0,
            t0: 0.0,
        }
    }
}

impl Optimizer for SimulatedAnnealing {
    fn ask(&mut self) -> Vec<Vec<f64>> {
        let x = match &self.current {
            None => uniform_point(&self.bounds, &mut self.rng),
            Some((x, _)) => {
                let scale = self.params.step * (self.temperature / self.t0).max(0.0).sqrt();
                let mut y = x.clone();
                for (v, (lo, hi)) in y.iter_mut().zip(&self.bounds) {
                    *v += gauss(&mut self.rng) * scale * (hi - lo);
                    reflect(v, *lo, *hi);
                }
                y
            }
        };
        self.pending = x.clone();
        vec![x]
    }

    fn tell(&mut self, values: &[f64]) {
        let Some(&fy) = values.first() else { return };
        let y = std::mem::take(&mut self.pending);
        match &self.current {
            None => {
                self.t0 = (self.params.initial_temperature * fy.abs()).max(1e-12);
                if !self.t0.is_finite() {
                    self.t0 = 1.0;
                }
                self.temperature = self.t0;
                self.current = Some((y, fy));
            }
            Some((_, fx)) => {
                let accept = fy <= *fx || {
                    let u: f64 = self.rng.random();
                    u < (-(fy - fx) / self.temperature).exp()
                };
                if accept {
                    self.current = Some((y, fy));
                }
                self.temperature *= self.params.cooling_rate;
            }
        }
    }
}

/// Global-best particle swarm with reflection at the bounds.
pub struct ParticleSwarm {
    bounds: Vec<(f64, f64)>,
    params: PsoParams,
    rng: Rng,
    x: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    personal: Vec<(Vec<f64>, f64)>,
    global: Option<(Vec<f64>, f64)>,
}

impl ParticleSwarm {
    pub fn new(bounds: Vec<(f64, f64)>, params: PsoParams, mut rng: Rng) -> Self {
        let n = params.swarm_size;
        let x: Vec<Vec<f64>> = (0..n).map(|_| uniform_point(&bounds, &mut rng)).collect();
        let v = (0..n)
            .map(|_| {
                bounds
                    .iter()
                    .map(|(lo, hi)| (rng.random::<f64>() - 0.5) * (hi - lo) * 0.2)
                    .collect()
            })
            .collect();
        Self {
            bounds,
            params,
            rng,
            x,
            v,
            personal: Vec::new(),
            global: None,
        }
    }
}

impl Optimizer for ParticleSwarm {
    fn ask(&mut self) -> Vec<Vec<f64>> {
        if let Some((g, _)) = &self.global {
            let p = &self.params;
            for i in 0..self.x.len() {
                for d in 0..self.bounds.len() {
                    let (lo, hi) = self.bounds[d];
                    let r1: f64 = self.rng.random();
                    let r2: f64 = self.rng.random();
                    let vel = p.inertia * self.v[i][d]
                        + p.cognitive * r1 * (self.personal[i].0[d] - self.x[i][d])
                        + p.social * r2 * (g[d] - self.x[i][d]);
                    let vel = vel.clamp(-(hi - lo), hi - lo);
                    let mut pos = self.x[i][d] + vel;
                    self.v[i][d] = if reflect(&mut pos, lo, hi) { -vel } else { vel };
                    self.x[i][d] = pos;
                }
            }
        }
        self.x.clone()
    }

    fn tell(&mut self, values: &[f64]) {
        for (i, &f) in values.iter().enumerate() {
            if i >= self.personal.len() {
                self.personal.push((self.x[i].clone(), f));
            } else if f < self.personal[i].1 {
                self.personal[i] = (self.x[i].clone(), f);
            }
        }
        if self.personal.len() < self.x.len() {
            return;
        }
        let values: Vec<f64> = self.personal.iter().map(|p| p.1).collect();
        let b = argmin(&values);
        if self.global.as_ref().is_none_or(|g| self.personal[b].1 < g.1) {
            self.global = Some(self.personal[b].clone());
        }
    }
}

enum SceStage {
    Init,
    Reflect,
    Contract,
    Random,
}

/// Shuffled complex evolution: complexes evolve by simplex reflection and
/// contraction on triangularly sampled subcomplexes, then are shuffled.
pub struct SceUa {
    bounds: Vec<(f64, f64)>,
    rng: Rng,
    p: usize,
    m: usize,
    q: usize,
    beta: usize,
    complexes: Vec<Vec<(Vec<f64>, f64)>>,
    stage: SceStage,
    complex: usize,
    step: usize,
    /// Positions within the current complex of the sampled subcomplex,
    /// worst last.
    sub: Vec<usize>,
    centroid: Vec<f64>,
    pending: Vec<f64>,
    initial: Vec<Vec<f64>>,
}

impl SceUa {
    pub fn new(bounds: Vec<(f64, f64)>, params: SceParams, rng: Rng) -> Self {
        let n = bounds.len();
        let m = if params.complex_size == 0 { 2 * n + 1 } else { params.complex_size };
        Self {
            bounds,
            rng,
            p: params.complexes,
            m,
            q: (n + 1).min(m),
            beta: 2 * n + 1,
            complexes: Vec::new(),
            stage: SceStage::Init,
            complex: 0,
            step: 0,
            sub: Vec::new(),
            centroid: Vec::new(),
            pending: Vec::new(),
            initial: Vec::new(),
        }
    }

    /// Merge, sort, deal out again: complex k gets ranks k, k + p, ...
    fn shuffle(&mut self, mut all: Vec<(Vec<f64>, f64)>) {
        all.sort_by(|a, b| a.1.total_cmp(&b.1));
        let mut complexes = vec![Vec::with_capacity(self.m); self.p];
        for (r, point) in all.into_iter().enumerate() {
            complexes[r % self.p].push(point);
        }
        self.complexes = complexes;
    }

    fn begin_step(&mut self) -> Vec<f64> {
        let c = &self.complexes[self.complex];
        let m = c.len();
        // Triangular selection probabilities favour better ranks.
        let weights: Vec<f64> = (0..m).map(|i| (m - i) as f64).collect();
        let mut chosen: Vec<usize> = Vec::with_capacity(self.q);
        while chosen.len() < self.q {
            let total: f64 = (0..m).filter(|i| !chosen.contains(i)).map(|i| weights[i]).sum();
            let mut u = self.rng.random::<f64>() * total;
            let mut pick = m - 1;
            for i in (0..m).filter(|i| !chosen.contains(i)) {
                pick = i;
                if u < weights[i] {
                    break;
                }
                u -= weights[i];
            }
            if chosen.contains(&pick) {
                pick = (0..m).find(|i| !chosen.contains(i)).expect("q <= m");
            }
            chosen.push(pick);
        }
        chosen.sort_unstable();
        let worst = *chosen.last().expect("q >= 1");
        let n = self.bounds.len();
        let mut centroid = vec![0.0; n];
        let others = &chosen[..chosen.len() - 1];
        for &i in others {
            for d in 0..n {
                centroid[d] += c[i].0[d];
            }
        }
        if !others.is_empty() {
            for v in &mut centroid {
                *v /= others.len() as f64;
            }
        } else {
            centroid.clone_from(&c[worst].0);
        }
        let reflected: Vec<f64> = (0..n).map(|d| 2.0 * centroid[d] - c[worst].0[d]).collect();
        self.sub = chosen;
        self.centroid = centroid;
        if reflected.iter().zip(&self.bounds).any(|(v, (lo, hi))| v < lo || v > hi) {
            self.stage = SceStage::Random;
            self.random_in_complex()
        } else {
            self.stage = SceStage::Reflect;
            reflected
        }
    }

    /// Uniform point in the smallest box holding the current complex.
    fn random_in_complex(&mut self) -> Vec<f64> {
        let c = &self.complexes[self.complex];
        let n = self.bounds.len();
        (0..n)
            .map(|d| {
                let lo = c.iter().map(|p| p.0[d]).fold(f64::INFINITY, f64::min);
                let hi = c.iter().map(|p| p.0[d]).fold(f64::NEG_INFINITY, f64::max);
                lo + self.rng.random::<f64>() * (hi - lo)
            })
            .collect()
    }

    fn replace_worst(&mut self, x: Vec<f64>, f: f64) {
        let worst = *self.sub.last().expect("subcomplex");
        let c = &mut self.complexes[self.complex];
        c[worst] = (x, f);
        c.sort_by(|a, b| a.1.total_cmp(&b.1));
        self.step += 1;
        if self.step >= self.beta {
            self.step = 0;
            self.complex += 1;
            if self.complex >= self.p {
                self.complex = 0;
                let all: Vec<_> = self.complexes.drain(..).flatten().collect();
                self.shuffle(all);
            }
        }
    }
}

impl Optimizer for SceUa {
    fn ask(&mut self) -> Vec<Vec<f64>> {
        if let SceStage::Init = self.stage {
            let n = self.p * self.m;
            self.initial = (0..n).map(|_| uniform_point(&self.bounds, &mut self.rng)).collect();
            return self.initial.clone();
        }
        let x = match self.stage {
            _ if self.sub.is_empty() => self.begin_step(),
            SceStage::Contract => {
                let worst = &self.complexes[self.complex][*self.sub.last().expect("subcomplex")].0;
                self.centroid.iter().zip(worst).map(|(c, w)| 0.5 * (c + w)).collect()
            }
            _ => self.random_in_complex(),
        };
        self.pending = x.clone();
        vec![x]
    }

    fn tell(&mut self, values: &[f64]) {
        if let SceStage::Init = self.stage {
            let points: Vec<_> = std::mem::take(&mut self.initial).into_iter().zip(values.iter().copied()).collect();
            self.shuffle(points);
            self.stage = SceStage::Reflect;
            return;
        }
        let Some(&f) = values.first() else { return };
        let x = std::mem::take(&mut self.pending);
        let worst_f = self.complexes[self.complex][*self.sub.last().expect("subcomplex")].1;
        match self.stage {
            SceStage::Reflect if f < worst_f => self.finish(x, f),
            SceStage::Reflect => self.stage = SceStage::Contract,
            SceStage::Contract if f < worst_f => self.finish(x, f),
            SceStage::Contract => self.stage = SceStage::Random,
            _ => self.finish(x, f),
        }
    }
}

impl SceUa {
    fn finish(&mut self, x: Vec<f64>, f: f64) {
        self.replace_worst(x, f);
        self.sub.clear();
        self.stage = SceStage::Reflect;
    }
}

/// Real-coded GA: tournament selection, blend crossover, gaussian mutation
/// and one elite.
pub struct GeneticAlgorithm {
    bounds: Vec<(f64, f64)>,
    params: GaParams,
    budget: usize,
    rng: Rng,
    population: Vec<(Vec<f64>, f64)>,
    pending: Vec<Vec<f64>>,
    used: usize,
}

impl GeneticAlgorithm {
    pub fn new(bounds: Vec<(f64, f64)>, params: GaParams, budget: usize, rng: Rng) -> Self {
        Self {
            bounds,
            params,
            budget,
            rng,
            population: Vec::new(),
            pending: Vec::new(),
            used: 0,
        }
    }

    fn tournament(&mut self) -> usize {
        let n = self.population.len();
        let mut best = self.rng.random_range(0..n);
        for _ in 1..self.params.tournament_size {
            let c = self.rng.random_range(0..n);
            if self.population[c].1 < self.population[best].1 {
                best = c;
            }
        }
        best
    }
}

impl Optimizer for GeneticAlgorithm {
    fn ask(&mut self) -> Vec<Vec<f64>> {
        let n = self.params.population;
        self.pending = if self.population.is_empty() {
            (0..n).map(|_| uniform_point(&self.bounds, &mut self.rng)).collect()
        } else {
            let progress = (self.used as f64 / self.budget as f64).min(1.0);
            let sigma = self.params.mutation_sigma * (1.0 - 0.99 * progress);
            (1..n)
                .map(|_| {
                    let a = self.tournament();
                    let b = self.tournament();
                    let (pa, pb) = (&self.population[a].0, &self.population[b].0);
                    let cross = self.rng.random::<f64>() < self.params.crossover_rate;
                    let mut child: Vec<f64> = if cross {
                        let alpha = self.params.blend_alpha;
                        pa.iter()
                            .zip(pb)
                            .map(|(x, y)| {
                                let (lo, hi) = (x.min(*y), x.max(*y));
                                let span = hi - lo;
                                lo - alpha * span + self.rng.random::<f64>() * (1.0 + 2.0 * alpha) * span
                            })
                            .collect()
                    } else {
                        pa.clone()
                    };
                    for (v, (lo, hi)) in child.iter_mut().zip(&self.bounds) {
                        if self.rng.random::<f64>() < self.params.mutation_rate {
                            *v += gauss(&mut self.rng) * sigma * (hi - lo);
                        }
                        reflect(v, *lo, *hi);
                    }
                    child
                })
                .collect()
        };
        self.pending.clone()
    }

    fn tell(&mut self, values: &[f64]) {
        let batch = std::mem::take(&mut self.pending);
        self.used += values.len();
        let evaluated: Vec<(Vec<f64>, f64)> = batch.into_iter().zip(values.iter().copied()).collect();
        if self.population.is_empty() {
            self.population = evaluated;
        } else {
            let elite_idx = argmin(&self.population.iter().map(|p| p.1).collect::<Vec<_>>());
            let elite = self.population[elite_idx].clone();
            self.population = std::iter::once(elite).chain(evaluated).collect();
        }
    }
}
