//! `T(theta)` under sequential exogeneity (predetermined regressors).
//!
//! The model side decomposes over the extreme points `gamma x delta_(a,x1)`:
//! for each fixed-effect value, first-period covariate cell, and candidate
//! `X_2` marginal `q`, the inner problem
//! `max E_pi[phi o psi_theta]` over joint pmfs `pi(v1, v2, x2)` with
//! `X_2`-marginal `q` and `V_2 | X_2 = V_1` is a linear program. The outer
//! supremum over `phi in [0,1]^L` is handled by a genetic optimizer; `q`
//! ranges over a step grid. The returned `T` is therefore a certified lower
//! bound on the population supremum: exclusions are certified, inclusions
//! approximate.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::time::Instant;

use dashmap::DashMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::catalog::PanelSequentialScenario;
use crate::discrepancy::{DiscrepancyError, DiscrepancyResult, FeatureVector, TOL_T};
use crate::lp::{self, LpProblem, LpStatus, SparseRows};
use crate::model::{FiniteSupport, ThetaPoint};
use crate::par;
use crate::prob::ProbabilityVector;

/// Genetic-optimizer settings. Elitism is fixed at 2; identical seeds
/// reproduce identical results bit for bit.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GaSettings {
    pub population: usize,
    pub generations: usize,
    pub mutation_sd: f64,
    pub crossover_rate: f64,
    pub seed: u64,
}

impl Default for GaSettings {
    fn default() -> Self {
        Self {
            population: 64,
            generations: 200,
            mutation_sd: 0.1,
            crossover_rate: 0.5,
            seed: 0,
        }
    }
}

impl GaSettings {
    fn validate(&self) -> Result<(), DiscrepancyError> {
        if self.population < 2 || self.generations < 1 {
            return Err(DiscrepancyError::Dimension(
                "GA needs population >= 2 and generations >= 1",
            ));
        }
        Ok(())
    }
}

const ELITISM: usize = 2;

/// One feature's evaluation: `eta = E_p*[phi] - max over cells of the inner
/// LP value`, with the per-cell values kept for inspection.
#[derive(Debug, Clone)]
pub struct SeqEvaluation {
    pub phi: FeatureVector,
    pub eta: f64,
    /// (a-index, x1-index, q-index) -> inner LP value
    pub per_cell_values: HashMap<(usize, usize, usize), f64>,
}

/// Work space shared by every inner solve at one (scenario, theta): the
/// latent cell enumeration, per-q constraint templates, and the
/// column-to-observable map per (a, x1) cell.
struct SeqWorkspace {
    /// columns enumerate (v1, v2, x2) with v1 slowest
    ncols: usize,
    q_grid: Vec<Vec<f64>>,
    /// per q-index: equality rows and rhs (simplex + marginals + stationarity)
    templates: Vec<(SparseRows, Vec<f64>)>,
    /// per (a_idx, x1_idx): observable row index of each column
    col_z: Vec<Vec<usize>>,
    n_a: usize,
    n_x1: usize,
}

fn z_index(z: &FiniteSupport, cell: usize, y1: f64, y2: f64) -> usize {
    z.position(&[cell as f64, y1, y2])
        .expect("observable support covers all (cell, y) points")
}

impl SeqWorkspace {
    fn new(
        scenario: &PanelSequentialScenario,
        theta: &ThetaPoint,
        q_grid_step: f64,
    ) -> Result<Self, DiscrepancyError> {
        let strict = &scenario.strict;
        let nv = strict.v_support.len();
        let n_x2 = scenario.x2_cells.len();
        let ncols = nv * nv * n_x2;

        let levels = (1.0 / q_grid_step).round();
        if !(levels.is_finite() && (levels * q_grid_step - 1.0).abs() < 1e-9 && levels >= 1.0) {
            return Err(DiscrepancyError::Dimension("q_grid_step must divide 1"));
        }
        let levels = levels as u32;

        // all q with entries on the step grid summing to 1
        let mut q_grid: Vec<Vec<f64>> = Vec::new();
        let mut counts = vec![0u32; n_x2];
        enumerate_compositions(levels, 0, &mut counts, &mut |c| {
            q_grid.push(c.iter().map(|&k| k as f64 / levels as f64).collect());
        });

        let col_of = |v1: usize, v2: usize, x2: usize| (v1 * nv + v2) * n_x2 + x2;

        let templates = q_grid
            .iter()
            .map(|q| {
                let mut rows = SparseRows::new(ncols);
                let mut rhs = Vec::new();
                // simplex
                rows.push_row((0..ncols).map(|j| (j, 1.0)));
                rhs.push(1.0);
                // X2 marginal per x2
                for x2 in 0..n_x2 {
                    rows.push_row(
                        (0..nv).flat_map(|v1| (0..nv).map(move |v2| (col_of(v1, v2, x2), 1.0))),
                    );
                    rhs.push(q[x2]);
                }
                // stationarity: for each (v, x2):
                // sum_{v1} pi(v1, v, x2) - q(x2) * sum_{v2, x2'} pi(v, v2, x2') = 0
                for v in 0..nv {
                    for x2 in 0..n_x2 {
                        let mut coef: HashMap<usize, f64> = HashMap::new();
                        for v1 in 0..nv {
                            *coef.entry(col_of(v1, v, x2)).or_insert(0.0) += 1.0;
                        }
                        for v2 in 0..nv {
                            for x2p in 0..n_x2 {
                                *coef.entry(col_of(v, v2, x2p)).or_insert(0.0) -= q[x2];
                            }
                        }
                        let mut entries: Vec<(usize, f64)> =
                            coef.into_iter().filter(|(_, c)| *c != 0.0).collect();
                        entries.sort_unstable_by_key(|e| e.0);
                        rows.push_row(entries);
                        rhs.push(0.0);
                    }
                }
                (rows, rhs)
            })
            .collect();

        // column -> observable index per (a, x1) cell
        let z = strict.z_support();
        let beta = [
            theta.get("beta1").unwrap_or(strict.beta_true[0]),
            theta.get("beta2").expect("theta carries beta2"),
        ];
        let joint_cell = |x1_idx: usize, x2_idx: usize| x1_idx * n_x2 + x2_idx;
        let indicator = |x: &[f64; 2], a: f64, v: f64| {
            if beta[0] * x[0] + beta[1] * x[1] + a + v >= 0.0 {
                1.0
            } else {
                0.0
            }
        };
        let mut col_z = Vec::new();
        for &a in &scenario.a_outer {
            for (x1_idx, x1) in scenario.x1_cells.iter().enumerate() {
                let mut map = vec![0usize; ncols];
                for v1 in 0..nv {
                    for v2 in 0..nv {
                        for (x2_idx, x2) in scenario.x2_cells.iter().enumerate() {
                            let y1 = indicator(x1, a, strict.v_support[v1]);
                            let y2 = indicator(x2, a, strict.v_support[v2]);
                            map[col_of(v1, v2, x2_idx)] =
                                z_index(&z, joint_cell(x1_idx, x2_idx), y1, y2);
                        }
                    }
                }
                col_z.push(map);
            }
        }

        Ok(Self {
            ncols,
            q_grid,
            templates,
            col_z,
            n_a: scenario.a_outer.len(),
            n_x1: scenario.x1_cells.len(),
        })
    }

    fn n_cells(&self) -> usize {
        self.n_a * self.n_x1 * self.q_grid.len()
    }

    fn cell_indices(&self, cell: usize) -> (usize, usize, usize) {
        let nq = self.q_grid.len();
        let a_idx = cell / (self.n_x1 * nq);
        let x1_idx = (cell / nq) % self.n_x1;
        let q_idx = cell % nq;
        (a_idx, x1_idx, q_idx)
    }

    fn inner_value(&self, phi: &[f64], cell: usize) -> Result<f64, DiscrepancyError> {
        let (a_idx, x1_idx, q_idx) = self.cell_indices(cell);
        let zmap = &self.col_z[a_idx * self.n_x1 + x1_idx];
        let objective: Vec<f64> = (0..self.ncols).map(|j| phi[zmap[j]]).collect();
        let (rows, rhs) = &self.templates[q_idx];
        let mut problem = LpProblem::maximize(objective);
        problem.set_eq(rows.clone(), rhs.clone());
        let sol = lp::solve(&problem)?;
        if sol.status != LpStatus::Optimal {
            // product measures are always feasible, so this is numerical
            return Err(DiscrepancyError::Lp(lp::LpError::NumericalBreakdown));
        }
        Ok(sol.objective_value)
    }
}

fn enumerate_compositions<F: FnMut(&[u32])>(
    left: u32,
    idx: usize,
    buf: &mut Vec<u32>,
    f: &mut F,
) {
    if idx == buf.len() - 1 {
        buf[idx] = left;
        f(buf);
        return;
    }
    for k in 0..=left {
        buf[idx] = k;
        enumerate_compositions(left - k, idx + 1, buf, f);
    }
}

fn hash_phi(phi: &[f64]) -> u64 {
    let mut h = DefaultHasher::new();
    for v in phi {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

/// Inner LP value for one (phi, a, x1, q) cell: the best the model can do
/// against the feature, over joint pmfs with the given X2-marginal and the
/// V2|X2 =d V1 restriction.
pub fn inner_lp_value(
    scenario: &PanelSequentialScenario,
    theta: &ThetaPoint,
    phi: &[f64],
    a_idx: usize,
    x1_idx: usize,
    q: &[f64],
    q_grid_step: f64,
) -> Result<f64, DiscrepancyError> {
    let ws = SeqWorkspace::new(scenario, theta, q_grid_step)?;
    let q_idx = ws
        .q_grid
        .iter()
        .position(|g| g.iter().zip(q).all(|(a, b)| (a - b).abs() < 1e-12))
        .ok_or(DiscrepancyError::Dimension("q not on the step grid"))?;
    let nq = ws.q_grid.len();
    ws.inner_value(phi, (a_idx * ws.n_x1 + x1_idx) * nq + q_idx)
}

/// Evaluates `eta(phi)` against every (a, x1, q) cell, optionally through
/// the shared cache.
fn evaluate_eta(
    ws: &SeqWorkspace,
    p_star: &[f64],
    phi: &[f64],
    cache: &DashMap<(usize, u64), f64>,
) -> Result<(f64, HashMap<(usize, usize, usize), f64>), DiscrepancyError> {
    let h = hash_phi(phi);
    let n = ws.n_cells();
    let values: Vec<Result<f64, DiscrepancyError>> = (0..n)
        .map(|cell| {
            if let Some(v) = cache.get(&(cell, h)) {
                return Ok(*v);
            }
            let v = ws.inner_value(phi, cell)?;
            cache.insert((cell, h), v);
            Ok(v)
        })
        .collect();
    let mut per_cell = HashMap::new();
    let mut best = f64::NEG_INFINITY;
    for (cell, v) in values.into_iter().enumerate() {
        let v = v?;
        per_cell.insert(ws.cell_indices(cell), v);
        if v > best {
            best = v;
        }
    }
    let gain: f64 = phi.iter().zip(p_star).map(|(a, b)| a * b).sum();
    Ok((gain - best, per_cell))
}

/// Evaluates one feature against the sequential model side.
pub fn evaluate_phi(
    scenario: &PanelSequentialScenario,
    theta: &ThetaPoint,
    p_star: &ProbabilityVector,
    phi: &FeatureVector,
    q_grid_step: f64,
) -> Result<SeqEvaluation, DiscrepancyError> {
    let ws = SeqWorkspace::new(scenario, theta, q_grid_step)?;
    let cache = DashMap::new();
    let (eta, per_cell_values) =
        evaluate_eta(&ws, p_star.as_slice(), phi.as_slice(), &cache)?;
    Ok(SeqEvaluation {
        phi: phi.clone(),
        eta,
        per_cell_values,
    })
}

/// Computes `T(theta)` under sequential exogeneity by the GA-over-features,
/// LP-per-cell scheme. Deterministic given `ga.seed`.
pub fn compute_t_sequential(
    scenario: &PanelSequentialScenario,
    theta: &ThetaPoint,
    p_star: &ProbabilityVector,
    ga: &GaSettings,
    q_grid_step: f64,
) -> Result<DiscrepancyResult, DiscrepancyError> {
    let started = Instant::now();
    ga.validate()?;
    let ws = SeqWorkspace::new(scenario, theta, q_grid_step)?;
    let l = scenario.strict.z_support().len();
    if p_star.len() != l {
        return Err(DiscrepancyError::Dimension("p_star length != |Z|"));
    }
    let p = p_star.as_slice();
    let cache: DashMap<(usize, u64), f64> = DashMap::new();

    let mut rng = ChaCha8Rng::seed_from_u64(ga.seed);
    let normal = Normal::new(0.0, ga.mutation_sd).expect("finite sd");

    // initial population: the zero feature (eta = 0 baseline) plus noise
    let mut population: Vec<Vec<f64>> = Vec::with_capacity(ga.population);
    population.push(vec![0.0; l]);
    while population.len() < ga.population {
        population.push((0..l).map(|_| rng.gen::<f64>()).collect());
    }

    let mut best_eta = f64::NEG_INFINITY;
    let mut best_phi = vec![0.0; l];

    for _gen in 0..ga.generations {
        // fitness in parallel; cache handles elites resurfacing
        let fits: Vec<Result<f64, DiscrepancyError>> =
            par::map_indexed(population.len(), |i| {
                evaluate_eta(&ws, p, &population[i], &cache).map(|(eta, _)| eta)
            });
        let mut fitness = Vec::with_capacity(fits.len());
        for f in fits {
            fitness.push(f?);
        }
        for (i, &eta) in fitness.iter().enumerate() {
            if eta > best_eta {
                best_eta = eta;
                best_phi = population[i].clone();
            }
        }

        // rank by fitness, descending, stable in index
        let mut order: Vec<usize> = (0..population.len()).collect();
        order.sort_by(|&a, &b| {
            fitness[b]
                .partial_cmp(&fitness[a])
                .unwrap()
                .then(a.cmp(&b))
        });

        let mut next: Vec<Vec<f64>> = order
            .iter()
            .take(ELITISM)
            .map(|&i| population[i].clone())
            .collect();
        while next.len() < ga.population {
            // tournament of two per parent
            let pick = |rng: &mut ChaCha8Rng| {
                let a = rng.gen_range(0..population.len());
                let b = rng.gen_range(0..population.len());
                if fitness[a] >= fitness[b] {
                    a
                } else {
                    b
                }
            };
            let pa = pick(&mut rng);
            let pb = pick(&mut rng);
            let child: Vec<f64> = (0..l)
                .map(|j| {
                    let gene = if rng.gen::<f64>() < ga.crossover_rate {
                        population[pa][j]
                    } else {
                        population[pb][j]
                    };
                    (gene + normal.sample(&mut rng)).clamp(0.0, 1.0)
                })
                .collect();
            next.push(child);
        }
        population = next;
    }

    // score the final generation too
    let fits: Vec<Result<f64, DiscrepancyError>> = par::map_indexed(population.len(), |i| {
        evaluate_eta(&ws, p, &population[i], &cache).map(|(eta, _)| eta)
    });
    for (i, f) in fits.into_iter().enumerate() {
        let eta = f?;
        if eta > best_eta {
            best_eta = eta;
            best_phi = population[i].clone();
        }
    }

    let t = best_eta.max(0.0);
    Ok(DiscrepancyResult {
        t,
        phi_star: FeatureVector::new(best_phi).expect("GA keeps genes in the box"),
        dual_lambda: Vec::new(),
        member: t <= TOL_T,
        solve_time: started.elapsed(),
    })
}
