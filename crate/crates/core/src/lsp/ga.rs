//! Genetic search over (node, start) pairs.
//!
//! Two gene encodings share one engine: `Basic` works directly on the
//! discrete pair, `Spectral` works on the node's R⁴ spectral embedding
//! (blend crossover + Gaussian mutation) and snaps each offspring to the
//! nearest candidate node, so hydraulically similar nodes are explored as
//! neighborhoods rather than arbitrary labels.
//!
//! Determinism: one seeded RNG stream drives every draw, fitness is
//! evaluated sequentially with a per-pair cache, and the incumbent
//! shortcut (a pair detected at the best area so far scores 0) keeps the
//! simulation budget small without changing the argmax.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::spectral::{nearest_node, spectral_embedding, NodeEmbedding};
use super::{
    check_coherent, max_undetected_area, EvalContext, FitnessResult, SearchOutcome, SearchSpace,
    TraceRow,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GaVariant {
    Basic,
    Spectral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub tournament_size: usize,
    pub mutation_rate: f64,
    /// Spectral only: mutation scale as a fraction of the per-coordinate
    /// population spread.
    pub mutation_sigma: f64,
    pub seed: u64,
    pub variant: GaVariant,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 20,
            generations: 30,
            tournament_size: 3,
            mutation_rate: 0.1,
            mutation_sigma: 0.2,
            seed: 0,
            variant: GaVariant::Basic,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::Invalid("population must be at least 2".into()));
        }
        if self.tournament_size < 1 || self.tournament_size > self.population {
            return Err(Error::Invalid(format!(
                "tournament size {} must be in 1..={}",
                self.tournament_size, self.population
            )));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(Error::Invalid("mutation rate must be in [0, 1]".into()));
        }
        if self.mutation_sigma < 0.0 {
            return Err(Error::Invalid("mutation sigma must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Indiv {
    node: usize,
    start: usize,
    /// Embedding coordinates of `node` (Spectral); zeros under Basic.
    coords: [f64; 4],
}

/// Sequential fitness evaluation with a per-pair cache and a running
/// incumbent.
struct Evaluator<'a, 'b> {
    ctx: &'b EvalContext<'a>,
    cache: BTreeMap<(usize, usize), FitnessResult>,
    best: Option<(Indiv, FitnessResult)>,
}

impl Evaluator<'_, '_> {
    fn eval(&mut self, ind: Indiv) -> Result<FitnessResult> {
        let key = (ind.node, ind.start);
        if let Some(f) = self.cache.get(&key) {
            return Ok(*f);
        }
        let incumbent = self.best.as_ref().map(|b| b.1.area);
        let f = max_undetected_area(ind.node, ind.start, self.ctx, incumbent)?;
        self.cache.insert(key, f);
        if self.best.as_ref().map_or(true, |b| f.area > b.1.area) {
            self.best = Some((ind, f));
        }
        Ok(f)
    }
}

fn tournament<'p>(
    rng: &mut ChaCha8Rng,
    pop: &'p [(Indiv, FitnessResult)],
    size: usize,
) -> &'p Indiv {
    let mut best: Option<&(Indiv, FitnessResult)> = None;
    for _ in 0..size {
        let cand = &pop[rng.gen_range(0..pop.len())];
        if best.map_or(true, |b| cand.1.area > b.1.area) {
            best = Some(cand);
        }
    }
    &best.unwrap().0
}

/// Per-coordinate standard deviation of a set of embedding points.
fn coord_std<'i>(points: impl Iterator<Item = &'i [f64; 4]> + Clone) -> [f64; 4] {
    let n = points.clone().count().max(1) as f64;
    let mut mean = [0.0f64; 4];
    for p in points.clone() {
        for i in 0..4 {
            mean[i] += p[i] / n;
        }
    }
    let mut var = [0.0f64; 4];
    for p in points {
        for i in 0..4 {
            var[i] += (p[i] - mean[i]).powi(2) / n;
        }
    }
    var.map(f64::sqrt)
}

/// Evolve (node, start) pairs toward the least sensitive point.
pub fn genetic_search(
    space: &SearchSpace,
    ctx: &EvalContext,
    cfg: &GaConfig,
) -> Result<SearchOutcome> {
    space.validate(ctx.model)?;
    check_coherent(space, ctx)?;
    cfg.validate()?;
    let eval0 = ctx.evaluations();

    let emb: Option<NodeEmbedding> = match cfg.variant {
        GaVariant::Basic => None,
        GaVariant::Spectral => Some(spectral_embedding(ctx.model)?),
    };
    // Fallback mutation scale for coordinates on which the population has
    // collapsed: the spread of the whole candidate cloud.
    let space_std: [f64; 4] = match &emb {
        Some(e) => coord_std(space.nodes.iter().map(|&n| &e.coords[n])),
        None => [0.0; 4],
    };
    let coords_of =
        |node: usize| -> [f64; 4] { emb.as_ref().map(|e| e.coords[node]).unwrap_or_default() };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ev = Evaluator {
        ctx,
        cache: BTreeMap::new(),
        best: None,
    };
    let mut trace = Vec::new();

    let seeds: Vec<Indiv> = (0..cfg.population)
        .map(|_| {
            let node = space.nodes[rng.gen_range(0..space.nodes.len())];
            let start = space.starts[rng.gen_range(0..space.starts.len())];
            Indiv {
                node,
                start,
                coords: coords_of(node),
            }
        })
        .collect();
    let mut pop: Vec<(Indiv, FitnessResult)> = Vec::with_capacity(cfg.population);
    for ind in seeds {
        let f = ev.eval(ind)?;
        pop.push((ind, f));
    }
    push_trace(&mut trace, 0, &ev, ctx, eval0);

    for gen in 1..=cfg.generations {
        let pop_std: [f64; 4] = match cfg.variant {
            GaVariant::Spectral => coord_std(pop.iter().map(|(i, _)| &i.coords)),
            GaVariant::Basic => [0.0; 4],
        };

        let elite = ev.best.expect("population evaluated").0;
        let mut children: Vec<Indiv> = Vec::with_capacity(cfg.population);
        while children.len() + 1 < cfg.population {
            let a = *tournament(&mut rng, &pop, cfg.tournament_size);
            let b = *tournament(&mut rng, &pop, cfg.tournament_size);
            let child = match cfg.variant {
                GaVariant::Basic => breed_basic(&mut rng, space, cfg, &a, &b),
                GaVariant::Spectral => breed_spectral(
                    &mut rng,
                    space,
                    cfg,
                    emb.as_ref().unwrap(),
                    &pop_std,
                    &space_std,
                    &a,
                    &b,
                ),
            };
            children.push(child);
        }

        pop.clear();
        let f = ev.eval(elite)?;
        pop.push((elite, f));
        for ind in children {
            let f = ev.eval(ind)?;
            pop.push((ind, f));
        }
        push_trace(&mut trace, gen, &ev, ctx, eval0);
    }

    let (best, fit) = ev.best.expect("population evaluated");
    Ok(SearchOutcome {
        method: match cfg.variant {
            GaVariant::Basic => "ga-basic".into(),
            GaVariant::Spectral => "ga-spectral".into(),
        },
        lsp_node: best.node,
        lsp_node_id: ctx.model.node_id(best.node).to_string(),
        best_start: best.start,
        max_undetected_area: fit.area,
        unbounded: fit.unbounded,
        evaluations: ctx.evaluations() - eval0,
        trace,
        warnings: ctx.warnings(),
    })
}

fn breed_basic(
    rng: &mut ChaCha8Rng,
    space: &SearchSpace,
    cfg: &GaConfig,
    a: &Indiv,
    b: &Indiv,
) -> Indiv {
    let mut node = if rng.gen_bool(0.5) { a.node } else { b.node };
    let mut start = if rng.gen_bool(0.5) { a.start } else { b.start };
    if rng.gen_bool(cfg.mutation_rate) {
        node = space.nodes[rng.gen_range(0..space.nodes.len())];
    }
    if rng.gen_bool(cfg.mutation_rate) {
        start = space.starts[rng.gen_range(0..space.starts.len())];
    }
    Indiv {
        node,
        start,
        coords: [0.0; 4],
    }
}

/// BLX-0.5: each coordinate is drawn uniformly from the parent interval
/// extended by half its width on both sides. Plain interpolation would keep
/// offspring inside the population's hull and could never reach nodes at
/// the embedding's extremes; the extension is what lets the search escape.
fn blend_crossover(rng: &mut ChaCha8Rng, a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    let mut coords = [0.0f64; 4];
    for i in 0..4 {
        let lo = a[i].min(b[i]);
        let d = (a[i] - b[i]).abs();
        let u: f64 = rng.gen();
        coords[i] = lo - 0.5 * d + u * 2.0 * d;
    }
    coords
}

#[allow(clippy::too_many_arguments)]
fn breed_spectral(
    rng: &mut ChaCha8Rng,
    space: &SearchSpace,
    cfg: &GaConfig,
    emb: &NodeEmbedding,
    pop_std: &[f64; 4],
    space_std: &[f64; 4],
    a: &Indiv,
    b: &Indiv,
) -> Indiv {
    let mut coords = blend_crossover(rng, &a.coords, &b.coords);
    let mut start = if rng.gen_bool(0.5) { a.start } else { b.start };
    for i in 0..4 {
        if rng.gen_bool(cfg.mutation_rate) {
            let z: f64 = rng.sample(StandardNormal);
            let sigma = if pop_std[i] > 0.0 {
                pop_std[i]
            } else {
                space_std[i]
            };
            coords[i] += cfg.mutation_sigma * sigma * z;
        }
    }
    if rng.gen_bool(cfg.mutation_rate) {
        start = space.starts[rng.gen_range(0..space.starts.len())];
    }
    // Offspring is the nearest candidate node; its genes snap to that
    // node's embedding so the population stays on valid points.
    let node = nearest_node(emb, &coords, &space.nodes);
    Indiv {
        node,
        start,
        coords: emb.coords[node],
    }
}

fn push_trace(
    trace: &mut Vec<TraceRow>,
    gen: usize,
    ev: &Evaluator,
    ctx: &EvalContext,
    eval0: u64,
) {
    let best = ev.best.as_ref().expect("population evaluated");
    trace.push(TraceRow {
        iteration: gen,
        alpha_lo: best.1.area,
        alpha_hi: best.1.area,
        candidates: ev.cache.len(),
        best_node: Some(best.0.node),
        best_start: Some(best.0.start),
        unbounded: best.1.unbounded,
        evaluations: ctx.evaluations() - eval0,
    });
}
