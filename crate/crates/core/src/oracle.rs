//! Brute-force lattice verification for small instances.
//!
//! Enumerates every latent pmf on the grid `{0, 1/D, ..., 1}^M` (guard-railed
//! to stay tractable), keeps the ones satisfying the constraint rows within
//! `1/(2D)`, and reports the best total-variation match to `p*` plus a
//! feature-lattice lower bound on `T`. This code is deliberately independent
//! of the LP path it certifies: no solver calls, just enumeration.

use std::collections::HashSet;

use thiserror::Error;

use crate::model::FiniteModel;
use crate::par;
use crate::prob::ProbabilityVector;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("guard rail: instance too large for lattice enumeration ({0})")]
    GuardRail(&'static str),
}

/// Lattice resolution: latent pmf coordinates on `{0, 1/D, ..., 1}`, feature
/// coordinates on `{0, 1/phi_levels, ..., 1}`.
#[derive(Debug, Clone, Copy)]
pub struct LatticeSpec {
    pub denominator: u32,
    pub phi_levels: u32,
}

impl LatticeSpec {
    pub fn new(denominator: u32, phi_levels: u32) -> Self {
        Self {
            denominator,
            phi_levels,
        }
    }

    fn check_membership_rails(&self, model: &FiniteModel) -> Result<(), OracleError> {
        if self.denominator == 0 {
            return Err(OracleError::GuardRail("denominator must be >= 1"));
        }
        if model.nw() > 6 || self.denominator > 60 {
            return Err(OracleError::GuardRail("latent side: need M <= 6, D <= 60"));
        }
        Ok(())
    }

    fn check_feature_rails(&self, model: &FiniteModel) -> Result<(), OracleError> {
        if model.nz() > 6 || self.phi_levels == 0 || self.phi_levels > 20 {
            return Err(OracleError::GuardRail(
                "observable side: need L <= 6, phi_levels in 1..=20",
            ));
        }
        Ok(())
    }
}

pub struct LatticeMembership {
    pub member_approx: bool,
    /// Minimum TV distance from `p*` to the lattice model pmfs;
    /// `f64::INFINITY` when no lattice point satisfies the constraints.
    pub best_tv: f64,
}

/// Visits every composition of `total` into `parts` nonnegative integers
/// with the first coordinate fixed, so callers can parallelize over it.
fn for_each_composition_with_first<F: FnMut(&[u32])>(
    first: u32,
    total: u32,
    parts: usize,
    f: &mut F,
) {
    let mut buf = vec![0u32; parts];
    buf[0] = first;
    fn rec<F: FnMut(&[u32])>(buf: &mut Vec<u32>, idx: usize, left: u32, f: &mut F) {
        if idx == buf.len() - 1 {
            buf[idx] = left;
            f(buf);
            return;
        }
        for k in 0..=left {
            buf[idx] = k;
            rec(buf, idx + 1, left - k, f);
        }
    }
    if parts == 1 {
        if first == total {
            f(&buf);
        }
        return;
    }
    rec(&mut buf, 1, total - first, f);
}

struct DenseConstraints {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
}

impl DenseConstraints {
    fn of(model: &FiniteModel) -> Self {
        let rows = (0..model.constraints.nrows())
            .map(|i| model.constraints.row_dense(i))
            .collect();
        Self {
            rows,
            rhs: model.constraints.rhs().to_vec(),
        }
    }

    fn feasible(&self, counts: &[u32], d: f64, band: f64) -> bool {
        self.rows.iter().zip(&self.rhs).all(|(row, &b)| {
            let dot: f64 = row
                .iter()
                .zip(counts)
                .map(|(&a, &k)| a * k as f64)
                .sum::<f64>()
                / d;
            (dot - b).abs() <= band + 1e-12
        })
    }
}

/// Enumerates lattice latent pmfs satisfying `A p = b` within `1/(2D)` per
/// row and reports the best TV match to `p*`; membership holds when the
/// best match is within the lattice resolution `1/D`.
pub fn lattice_membership(
    model: &FiniteModel,
    p_star: &ProbabilityVector,
    spec: &LatticeSpec,
) -> Result<LatticeMembership, OracleError> {
    spec.check_membership_rails(model)?;
    let d = spec.denominator;
    let m = model.nw();
    let l = model.nz();
    let cons = DenseConstraints::of(model);
    let band = 0.5 / d as f64;
    let row_of_col: Vec<usize> = (0..m).map(|j| model.pushforward.column_row(j)).collect();
    let p_star = p_star.as_slice().to_vec();

    let best_per_first: Vec<f64> = par::map_indexed((d + 1) as usize, |first| {
        let mut best = f64::INFINITY;
        let mut q = vec![0u32; l];
        for_each_composition_with_first(first as u32, d, m, &mut |counts| {
            if !cons.feasible(counts, d as f64, band) {
                return;
            }
            q.iter_mut().for_each(|v| *v = 0);
            for (j, &k) in counts.iter().enumerate() {
                q[row_of_col[j]] += k;
            }
            let tv = 0.5
                * q.iter()
                    .zip(&p_star)
                    .map(|(&k, &p)| (k as f64 / d as f64 - p).abs())
                    .sum::<f64>();
            if tv < best {
                best = tv;
            }
        });
        best
    });
    let best_tv = best_per_first.into_iter().fold(f64::INFINITY, f64::min);
    Ok(LatticeMembership {
        member_approx: best_tv <= 1.0 / d as f64 + 1e-12,
        best_tv,
    })
}

/// Collects the distinct model pmfs (as observable count vectors) induced by
/// feasible lattice latent pmfs.
fn feasible_model_counts(model: &FiniteModel, d: u32) -> Vec<Vec<u16>> {
    let m = model.nw();
    let l = model.nz();
    let cons = DenseConstraints::of(model);
    let band = 0.5 / d as f64;
    let row_of_col: Vec<usize> = (0..m).map(|j| model.pushforward.column_row(j)).collect();
    let sets: Vec<HashSet<Vec<u16>>> = par::map_indexed((d + 1) as usize, |first| {
        let mut set = HashSet::new();
        for_each_composition_with_first(first as u32, d, m, &mut |counts| {
            if !cons.feasible(counts, d as f64, band) {
                return;
            }
            let mut q = vec![0u16; l];
            for (j, &k) in counts.iter().enumerate() {
                q[row_of_col[j]] += k as u16;
            }
            set.insert(q);
        });
        set
    });
    let mut all = HashSet::new();
    for s in sets {
        all.extend(s);
    }
    let mut out: Vec<Vec<u16>> = all.into_iter().collect();
    out.sort_unstable();
    out
}

/// Lower bound on `T` from joint lattice enumeration:
/// `max over the phi-lattice of (phi'p* - max over feasible lattice model
/// pmfs of phi'q)`. Converges to `T` from below as the grids refine;
/// `f64::INFINITY` when the constraint polytope admits no lattice point.
pub fn lattice_t_bound(
    model: &FiniteModel,
    p_star: &ProbabilityVector,
    spec: &LatticeSpec,
) -> Result<f64, OracleError> {
    spec.check_membership_rails(model)?;
    spec.check_feature_rails(model)?;
    let q_set = feasible_model_counts(model, spec.denominator);
    if q_set.is_empty() {
        return Ok(f64::INFINITY);
    }
    let l = model.nz();
    let levels = spec.phi_levels;
    let dinv = 1.0 / spec.denominator as f64;
    let p_star = p_star.as_slice().to_vec();

    // enumerate phi over {0,...,levels}^L / levels, parallel on the first
    // coordinate
    let best_per_first: Vec<f64> = par::map_indexed((levels + 1) as usize, |first| {
        let mut best = f64::NEG_INFINITY;
        let mut phi = vec![0.0f64; l];
        phi[0] = first as f64 / levels as f64;
        fn rec(
            phi: &mut Vec<f64>,
            idx: usize,
            levels: u32,
            p_star: &[f64],
            q_set: &[Vec<u16>],
            dinv: f64,
            best: &mut f64,
        ) {
            if idx == phi.len() {
                let gain: f64 = phi.iter().zip(p_star).map(|(a, b)| a * b).sum();
                let mut max_model = f64::NEG_INFINITY;
                for q in q_set {
                    let v: f64 = phi
                        .iter()
                        .zip(q)
                        .map(|(&f, &k)| f * k as f64)
                        .sum::<f64>()
                        * dinv;
                    if v > max_model {
                        max_model = v;
                    }
                }
                let val = gain - max_model;
                if val > *best {
                    *best = val;
                }
                return;
            }
            for k in 0..=levels {
                phi[idx] = k as f64 / levels as f64;
                rec(phi, idx + 1, levels, p_star, q_set, dinv, best);
            }
        }
        rec(&mut phi, 1, levels, &p_star, &q_set, dinv, &mut best);
        best
    });
    Ok(best_per_first
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Outcome of the randomized LP-vs-lattice agreement suite.
#[derive(Debug, Clone)]
pub struct AgreementReport {
    pub instances: usize,
    /// instances whose |T| fell inside the lattice resolution band 2/D,
    /// where the two verdicts may legitimately differ
    pub band_cases: usize,
    /// disagreements outside the band (must be zero)
    pub disagreements: usize,
}

impl AgreementReport {
    pub fn band_fraction(&self) -> f64 {
        self.band_cases as f64 / self.instances as f64
    }

    pub fn passed(&self, max_band_fraction: f64) -> bool {
        self.disagreements == 0 && self.band_fraction() < max_band_fraction
    }
}

/// Randomized agreement suite: small instances (L <= 4, M <= 5) with a
/// random 0/1 pushforward, random rational `p*`, and constraints
/// `simplex + one moment row` anchored at a feasible interior point so the
/// polytope is never empty. The LP membership verdict must match the
/// lattice oracle outside the resolution band `|T| < 2/D`.
pub fn agreement_suite(
    n_instances: usize,
    denominator: u32,
    seed: u64,
) -> Result<AgreementReport, OracleError> {
    use crate::discrepancy::compute_t;
    use crate::model::{
        ConstraintSystem, FiniteModel, FiniteSupport, PushforwardMatrix, RowTag, ThetaPoint,
    };
    use rand::{Rng, SeedableRng};

    let verdicts: Vec<Result<(bool, bool, f64), OracleError>> =
        par::map_indexed(n_instances, |i| {
            let mut rng =
                rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9E37));
            let l = rng.gen_range(2..=4usize);
            let m = rng.gen_range(2..=5usize);
            let row_of_col: Vec<u32> = (0..m).map(|_| rng.gen_range(0..l) as u32).collect();
            let z = FiniteSupport::new((0..l).map(|k| vec![k as f64]).collect()).unwrap();
            let w = FiniteSupport::new((0..m).map(|k| vec![k as f64]).collect()).unwrap();

            // random rational p* on the 1/20 lattice
            let mut units = vec![0u32; l];
            for _ in 0..20 {
                units[rng.gen_range(0..l)] += 1;
            }
            let p_star = ProbabilityVector::new(
                units.iter().map(|&u| u as f64 / 20.0).collect(),
            )
            .unwrap();

            // moment row anchored at a feasible lattice point (denominator 12)
            let mut anchor = vec![0u32; m];
            for _ in 0..12 {
                anchor[rng.gen_range(0..m)] += 1;
            }
            let coefs: Vec<f64> = (0..m)
                .map(|_| [-1.0, 0.0, 1.0][rng.gen_range(0..3)])
                .collect();
            let rhs: f64 = coefs
                .iter()
                .zip(&anchor)
                .map(|(&c, &k)| c * k as f64 / 12.0)
                .sum();
            let mut constraints = ConstraintSystem::with_simplex(m);
            constraints.push_row(
                coefs.iter().enumerate().filter(|(_, &c)| c != 0.0).map(|(j, &c)| (j, c)),
                rhs,
                RowTag::Moment,
            );

            let model = FiniteModel {
                z_support: z,
                w_support: w,
                theta: ThetaPoint::new(&["t"], vec![0.0]),
                pushforward: PushforwardMatrix::from_row_map(l, row_of_col),
                constraints,
            };
            let lp = compute_t(&model, &p_star).expect("small LP solves");
            let lattice = lattice_membership(
                &model,
                &p_star,
                &LatticeSpec::new(denominator, 10),
            )?;
            Ok((lp.member, lattice.member_approx, lp.t))
        });

    let band = 2.0 / denominator as f64;
    let mut report = AgreementReport {
        instances: n_instances,
        band_cases: 0,
        disagreements: 0,
    };
    for v in verdicts {
        let (lp_member, oracle_member, t) = v?;
        if t.abs() < band {
            report.band_cases += 1;
        } else if lp_member != oracle_member {
            report.disagreements += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrepancy::compute_t;
    use crate::model::{
        build_pushforward, median_zero_rows, ConstraintSystem, FiniteSupport, PushforwardMatrix,
        RowTag, ThetaPoint,
    };

    fn trivial_model(row_of_col: Vec<u32>, l: usize) -> FiniteModel {
        let m = row_of_col.len();
        let z = FiniteSupport::new((0..l).map(|i| vec![i as f64]).collect()).unwrap();
        let w = FiniteSupport::new((0..m).map(|i| vec![i as f64]).collect()).unwrap();
        FiniteModel {
            z_support: z,
            w_support: w,
            theta: ThetaPoint::new(&["t"], vec![0.0]),
            pushforward: PushforwardMatrix::from_row_map(l, row_of_col),
            constraints: ConstraintSystem::with_simplex(m),
        }
    }

    fn worked_model() -> FiniteModel {
        let z = FiniteSupport::new(vec![
            vec![0.0, 1.0],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![1.0, 0.0],
        ])
        .unwrap();
        let w = FiniteSupport::from_product(&[vec![0.0, 1.0], vec![-1.0, 0.0, 1.0]]);
        let theta = ThetaPoint::new(&["theta1", "theta2"], vec![1.0, -0.5]);
        let outcome = |z: &[f64], w: &[f64], th: &ThetaPoint| {
            if z[0] != w[0] {
                return false;
            }
            let score = th.values[0] + z[0] * th.values[1] - w[1];
            z[1] == if score >= 0.0 { 1.0 } else { 0.0 }
        };
        let pushforward = build_pushforward(&z, &w, &theta, outcome).unwrap();
        let mut constraints = ConstraintSystem::with_simplex(w.len());
        for (row, rhs) in median_zero_rows(&w, &[0], 1).unwrap() {
            constraints.push_row(row, rhs, RowTag::MedianZero);
        }
        FiniteModel {
            z_support: z,
            w_support: w,
            theta,
            pushforward,
            constraints,
        }
    }

    #[test]
    fn identity_pushforward_member() {
        let model = trivial_model(vec![0, 1], 2);
        let p = ProbabilityVector::new(vec![0.5, 0.5]).unwrap();
        let r = lattice_membership(&model, &p, &LatticeSpec::new(2, 10)).unwrap();
        assert_eq!(r.best_tv, 0.0);
        assert!(r.member_approx);
    }

    #[test]
    fn collapsed_model_non_member() {
        // model emits only z_1: single model point (1,0)
        let model = trivial_model(vec![0, 0], 2);
        let p = ProbabilityVector::new(vec![0.5, 0.5]).unwrap();
        let r = lattice_membership(&model, &p, &LatticeSpec::new(10, 10)).unwrap();
        assert!((r.best_tv - 0.5).abs() < 1e-12);
        assert!(!r.member_approx);
    }

    #[test]
    fn worked_instance_lattice_separation() {
        let model = worked_model();
        let p = ProbabilityVector::new(vec![0.15, 0.35, 0.25, 0.25]).unwrap();
        let r = lattice_membership(&model, &p, &LatticeSpec::new(60, 10)).unwrap();
        assert!(!r.member_approx);
        assert!(
            (r.best_tv - 0.35).abs() < 1.0 / 60.0,
            "best_tv = {}",
            r.best_tv
        );
    }

    #[test]
    fn guard_rails_fire() {
        let model = trivial_model(vec![0, 1, 0, 1, 0, 1, 0], 2); // M = 7
        let p = ProbabilityVector::new(vec![0.5, 0.5]).unwrap();
        assert!(matches!(
            lattice_membership(&model, &p, &LatticeSpec::new(10, 10)),
            Err(OracleError::GuardRail(_))
        ));
    }

    #[test]
    fn t_bound_member_within_lattice_error() {
        let model = trivial_model(vec![0, 1], 2);
        let p = ProbabilityVector::new(vec![0.5, 0.5]).unwrap();
        let bound = lattice_t_bound(&model, &p, &LatticeSpec::new(10, 10)).unwrap();
        assert!(bound <= 2.0 / 10.0 + 1e-12, "bound = {bound}");
    }

    #[test]
    fn t_bound_brackets_worked_instance() {
        let model = worked_model();
        let p = ProbabilityVector::new(vec![0.15, 0.35, 0.25, 0.25]).unwrap();
        let bound = lattice_t_bound(&model, &p, &LatticeSpec::new(60, 20)).unwrap();
        assert!((0.34..=0.35 + 1e-9).contains(&bound), "bound = {bound}");
        // the phi-lattice contains the optimal vertex indicator, so the
        // bound cannot fall below T by more than the latent resolution
        assert!(bound >= 0.35 - 1.0 / 60.0);
        // and it never exceeds the LP value on this instance
        let t = compute_t(&model, &p).unwrap().t;
        assert!(bound <= t + 1e-9);
    }

    #[test]
    fn agreement_suite_smoke() {
        let report = agreement_suite(50, 60, 123).unwrap();
        assert_eq!(report.disagreements, 0);
        assert!(report.band_fraction() < 0.05, "{report:?}");
    }

    #[test]
    fn t_bound_lower_bounds_lp_with_coarse_phi() {
        let model = worked_model();
        let p = ProbabilityVector::new(vec![0.15, 0.35, 0.25, 0.25]).unwrap();
        let t = compute_t(&model, &p).unwrap().t;
        let bound = lattice_t_bound(&model, &p, &LatticeSpec::new(30, 10)).unwrap();
        assert!(bound <= t + 1e-9, "bound {bound} vs T {t}");
    }
}
