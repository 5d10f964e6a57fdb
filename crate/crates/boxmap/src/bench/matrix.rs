//! Experiment matrix runner: environments x starts x strategies, parallel
//! episodes with per-episode seeds, CSV/JSON outputs.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boxcalc::{rasterize, BoxSet};
use crate::explore::{run_episode, EpisodeConfig, EpisodeResult, Strategy};
use crate::floorgen::{generate, Floorplan, GenConfig};
use crate::gridworld::{chamfer_tsdf, OccupancyGrid, TsdfGrid, DEFAULT_GAMMA};
use crate::predictor::{FitterConfig, FitterPredictor, OracleConfig, OraclePredictor, Predictor};
use crate::topograph::build_topo;

use super::metrics::{boxmap_memory_bytes, grid_memory_bytes, hamming, ssim};
use super::BenchError;

/// Which predictor implementation drives the graph strategies.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictorChoice {
    Oracle { rho: f64, noise_sigma: f64 },
    Fitter { config: FitterConfig },
}

impl Default for PredictorChoice {
    fn default() -> Self {
        PredictorChoice::Oracle {
            rho: 0.2,
            noise_sigma: 0.0,
        }
    }
}

impl std::str::FromStr for PredictorChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(PredictorChoice::default()),
            "fitter" => Ok(PredictorChoice::Fitter {
                config: FitterConfig {
                    max_iters: 400,
                    restarts: 0,
                    door_iters: 150,
                    ..FitterConfig::default()
                },
            }),
            other => Err(format!("unknown predictor '{other}' (oracle|fitter)")),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub envs: usize,
    pub starts: usize,
    pub strategies: Vec<Strategy>,
    pub predictor: PredictorChoice,
    pub seed: u64,
    pub gen: GenConfig,
    pub episode: EpisodeConfig,
    /// Worker cap; the BOXMAP_THREADS environment variable overrides.
    pub threads: Option<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            envs: 40,
            starts: 3,
            strategies: vec![
                Strategy::Greedy,
                Strategy::RecedingHorizon,
                Strategy::Frontier,
            ],
            predictor: PredictorChoice::default(),
            seed: 7,
            gen: GenConfig::default(),
            episode: EpisodeConfig::default(),
            threads: None,
        }
    }
}

/// One episode's record in the result table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRow {
    pub env: usize,
    pub env_seed: u64,
    pub start: usize,
    pub start_cell: (usize, usize),
    pub strategy: Strategy,
    pub episode_seed: u64,
    pub status: String,
    pub steps: usize,
    pub updates: usize,
    pub map_bytes: usize,
    pub ssim: f64,
    pub hamming: f64,
    pub rooms_visited: usize,
    pub rooms_total: usize,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct StrategyStats {
    pub episodes: usize,
    pub mean_steps: f64,
    pub mean_updates: f64,
    pub mean_map_bytes: f64,
    pub mean_ssim: f64,
    pub mean_hamming: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub rows: Vec<RunRow>,
    pub per_strategy: BTreeMap<String, StrategyStats>,
}

impl RunSummary {
    /// Aggregates are a pure function of the rows.
    pub fn from_rows(rows: Vec<RunRow>) -> Self {
        let mut per_strategy: BTreeMap<String, StrategyStats> = BTreeMap::new();
        for row in &rows {
            let s = per_strategy.entry(row.strategy.to_string()).or_default();
            s.episodes += 1;
            s.mean_steps += row.steps as f64;
            s.mean_updates += row.updates as f64;
            s.mean_map_bytes += row.map_bytes as f64;
            s.mean_ssim += row.ssim;
            s.mean_hamming += row.hamming;
        }
        for s in per_strategy.values_mut() {
            let n = s.episodes as f64;
            s.mean_steps /= n;
            s.mean_updates /= n;
            s.mean_map_bytes /= n;
            s.mean_ssim /= n;
            s.mean_hamming /= n;
        }
        Self { rows, per_strategy }
    }

    /// Versioned CSV with one row per episode.
    pub fn to_csv(&self, config_echo: &str) -> String {
        let mut out = String::new();
        out.push_str("# boxmap bench results v1\n");
        out.push_str(&format!("# config {config_echo}\n"));
        out.push_str(
            "env,env_seed,start,start_x,start_y,strategy,episode_seed,status,steps,updates,map_bytes,ssim,hamming,rooms_visited,rooms_total\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{:.6},{:.6},{},{}\n",
                r.env,
                r.env_seed,
                r.start,
                r.start_cell.0,
                r.start_cell.1,
                r.strategy,
                r.episode_seed,
                r.status,
                r.steps,
                r.updates,
                r.map_bytes,
                r.ssim,
                r.hamming,
                r.rooms_visited,
                r.rooms_total
            ));
        }
        out
    }
}

/// Group labels of the annotation's active rooms (overlap components).
fn annotation_groups(set: &BoxSet) -> Vec<(usize, usize)> {
    let active: Vec<usize> = set
        .rooms
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_active())
        .map(|(i, _)| i)
        .collect();
    let mut parent: Vec<usize> = (0..active.len()).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let r = find(parent, parent[i]);
            parent[i] = r;
        }
        parent[i]
    }
    for a in 0..active.len() {
        for b in (a + 1)..active.len() {
            if set.rooms[active[a]].overlaps(&set.rooms[active[b]]) {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    (0..active.len())
        .map(|i| (active[i], find(&mut parent, i)))
        .collect()
}

fn rooms_visited(fp: &Floorplan, result: &EpisodeResult) -> usize {
    let groups = annotation_groups(&fp.annotations);
    let mut visited: Vec<usize> = groups
        .iter()
        .filter(|&&(room, _)| {
            result
                .measurement_cells
                .iter()
                .any(|&(x, y)| fp.annotations.rooms[room].contains(x as f64, y as f64))
        })
        .map(|&(_, g)| g)
        .collect();
    visited.sort_unstable();
    visited.dedup();
    visited.len()
}

struct EnvData {
    env: usize,
    env_seed: u64,
    fp: Floorplan,
    world_tsdf: TsdfGrid,
    starts: Vec<(usize, usize)>,
}

fn episode_seed(base: u64, env: usize, start: usize, strategy: Strategy) -> u64 {
    let s = match strategy {
        Strategy::Greedy => 1u64,
        Strategy::RecedingHorizon => 2,
        Strategy::Frontier => 3,
        Strategy::Hybrid => 4,
    };
    base.wrapping_mul(0x100000001B3)
        .wrapping_add(env as u64 * 1_000_003)
        .wrapping_add(start as u64 * 10_007)
        .wrapping_add(s)
}

fn run_one(
    env: &EnvData,
    start_idx: usize,
    strategy: Strategy,
    cfg: &BenchConfig,
) -> Result<RunRow, BenchError> {
    let seed = episode_seed(cfg.seed, env.env, start_idx, strategy);
    let predictor: Box<dyn Predictor> = match &cfg.predictor {
        PredictorChoice::Oracle { rho, noise_sigma } => Box::new(OraclePredictor::new(
            env.fp.annotations.clone(),
            OracleConfig {
                rho: *rho,
                noise_sigma: *noise_sigma,
                seed,
            },
        )),
        PredictorChoice::Fitter { config } => {
            let mut config = config.clone();
            config.seed = seed;
            Box::new(FitterPredictor::new(config))
        }
    };
    let ep_cfg = EpisodeConfig {
        strategy,
        seed,
        ..cfg.episode.clone()
    };
    let start_cell = env.starts[start_idx];
    let result = run_episode(&env.fp.world, predictor.as_ref(), start_cell, &ep_cfg)?;

    let gamma = DEFAULT_GAMMA;
    let (final_map, map_bytes): (OccupancyGrid, usize) = if strategy.uses_graph() {
        let raster = rasterize(&result.final_boxes, env.fp.world.geometry());
        let topo = build_topo(&result.final_boxes, &result.accumulated);
        let bytes = boxmap_memory_bytes(&result.final_boxes, &topo);
        (raster, bytes)
    } else {
        let bytes = grid_memory_bytes(&result.accumulated);
        (result.accumulated.clone(), bytes)
    };
    let ssim_value = match chamfer_tsdf(&final_map, gamma) {
        Ok(final_tsdf) => ssim(&final_tsdf, &env.world_tsdf)?,
        Err(_) => 0.0, // a final map with no walls carries no structure
    };
    let hamming_value = hamming(&final_map, &env.fp.world)?;
    Ok(RunRow {
        env: env.env,
        env_seed: env.env_seed,
        start: start_idx,
        start_cell,
        strategy,
        episode_seed: seed,
        status: format!("{:?}", result.status).to_lowercase(),
        steps: result.steps,
        updates: result.updates,
        map_bytes,
        ssim: ssim_value,
        hamming: hamming_value,
        rooms_visited: rooms_visited(&env.fp, &result),
        rooms_total: env.fp.room_count,
    })
}

/// Run the full cartesian product of environments, starts and strategies.
///
/// Episodes execute in parallel with isolated state; rows come back in
/// deterministic (env, start, strategy) order regardless of thread count.
pub fn run_matrix(cfg: &BenchConfig) -> Result<RunSummary, BenchError> {
    let threads = std::env::var("BOXMAP_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .or(cfg.threads);
    let pool = {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(t) = threads {
            builder = builder.num_threads(t.max(1));
        }
        builder
            .build()
            .map_err(|e| BenchError::InvalidInput(e.to_string()))?
    };

    let mut envs = Vec::with_capacity(cfg.envs);
    for env in 0..cfg.envs {
        let env_seed = cfg.seed.wrapping_add(env as u64);
        let fp = generate(env_seed, &cfg.gen)?;
        let world_tsdf = chamfer_tsdf(&fp.world, DEFAULT_GAMMA)?;
        let starts = fp.sample_free_cells(cfg.starts, env_seed.wrapping_mul(31).wrapping_add(17));
        envs.push(EnvData {
            env,
            env_seed,
            fp,
            world_tsdf,
            starts,
        });
    }

    let jobs: Vec<(usize, usize, Strategy)> = envs
        .iter()
        .flat_map(|e| {
            (0..cfg.starts).flat_map(move |s| {
                cfg.strategies
                    .iter()
                    .map(move |&strategy| (e.env, s, strategy))
            })
        })
        .collect();

    let rows: Result<Vec<RunRow>, BenchError> = pool.install(|| {
        jobs.par_iter()
            .map(|&(env, start, strategy)| run_one(&envs[env], start, strategy, cfg))
            .collect()
    });
    Ok(RunSummary::from_rows(rows?))
}
