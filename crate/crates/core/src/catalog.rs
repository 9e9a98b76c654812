//! Model families and data-generating processes shipped with the solver:
//! cross-sectional maximum score (Designs 1, 2, 3, 4, 4b) and two-period
//! panel binary choice (DGP1 with varying regressor support, DGP2 with a
//! binary regressor for the strict/sequential comparison).
//!
//! Each scenario produces a `FiniteModel` factory over theta plus the exact
//! true observable pmf.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discrepancy::DiscrepancyError;
use crate::model::{
    build_pushforward, counterfactual_row, median_zero_rows, stationarity_rows, ConstraintSystem,
    FiniteModel, FiniteSupport, ModelError, RowTag, ThetaPoint,
};
use crate::prob::ProbabilityVector;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("unknown design id: {0}")]
    UnknownDesign(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// True pmfs of a scenario: observables and the latent distribution that
/// generates them (`p_star = C~ latent_truth` by construction).
#[derive(Debug, Clone)]
pub struct TruePmf {
    pub p_star: ProbabilityVector,
    pub latent_truth: ProbabilityVector,
}

/// Conditional error law of the cross-sectional designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorLaw {
    /// P(U=u|X=x) proportional to 1/(1+u^2)
    Cauchy,
    /// U|X discrete uniform
    Uniform,
}

/// Optional conditional partial-effect target for the cross-sectional
/// designs: theta3 = E[Delta(X,U) | X = at_x].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartialEffectSpec {
    pub at_x: f64,
}

/// Cross-sectional maximum score: Y = 1{theta1 + X theta2 - U >= 0},
/// median-zero error per covariate value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaxscoreScenario {
    pub id: String,
    pub x_support: Vec<f64>,
    pub u_support: Vec<f64>,
    pub error_law: ErrorLaw,
    pub beta_true: [f64; 2],
    pub theta2_grid: Vec<f64>,
    pub partial_effect: Option<PartialEffectSpec>,
}

/// Latent law of the panel designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PanelLatentLaw {
    /// (V1, V2, alpha) independent of X with Gaussian product weights
    /// truncated to the grids and renormalized.
    GaussianProduct,
    /// V1 = V2 uniform on the v-grid with alpha degenerate at 0 (the
    /// alpha + V law of DGP2 after absorbing the fixed effect).
    UniformDiagonal,
}

/// ASF target: tau_t(x_star) for a subpopulation selected by the second
/// regressor of period 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsfSpec {
    pub period: usize,
    pub x_star: [f64; 2],
    /// subpopulation: x-cells whose X_22 equals this value
    pub subpop_x22: f64,
}

/// Two-period panel binary choice under strict exogeneity:
/// `Y_t = 1{X_t' beta + alpha + V_t >= 0}` with stationarity rows replacing
/// the median-zero restrictions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PanelScenario {
    pub id: String,
    /// joint (X_1, X_2) support, each period's regressor a 2-vector
    /// (time dummy, second regressor)
    pub x_cells: Vec<([f64; 2], [f64; 2])>,
    pub x_probs: Vec<f64>,
    pub alpha_support: Vec<f64>,
    pub v_support: Vec<f64>,
    pub latent_law: PanelLatentLaw,
    pub beta_true: [f64; 2],
    pub beta2_grid: Vec<f64>,
    pub asf: Option<AsfSpec>,
}

/// DGP2: the strict-exogeneity panel plus the factorized (X_1, X_2) support
/// and settings the sequential-exogeneity computation needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PanelSequentialScenario {
    pub strict: PanelScenario,
    pub x1_cells: Vec<[f64; 2]>,
    pub x2_cells: Vec<[f64; 2]>,
    pub x2_probs: Vec<f64>,
    /// outer grid for the fixed effect; DGP2 collapses it to {0}
    pub a_outer: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Scenario {
    MaxscoreCs(MaxscoreScenario),
    PanelStrict(PanelScenario),
    PanelSequential(PanelSequentialScenario),
}

fn float_grid(from_tenths: i64, to_tenths: i64, step_tenths: i64, denom: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut k = from_tenths;
    while k <= to_tenths {
        out.push(k as f64 / denom);
        k += step_tenths;
    }
    out
}

/// Designs 1-4b of the cross-sectional maximum score experiment.
pub fn build_maxscore_design(design_id: &str) -> Result<Scenario, CatalogError> {
    let theta2_grid = float_grid(-150, 50, 1, 100.0); // 201 points
    let (x_support, u_support, error_law) = match design_id {
        "design1" => (vec![0.0, 1.0], float_grid(-10, 10, 10, 10.0), ErrorLaw::Cauchy),
        "design2" => (vec![0.0, 1.0], float_grid(-50, 50, 1, 10.0), ErrorLaw::Cauchy),
        "design3" => (
            float_grid(-30, 30, 10, 10.0),
            float_grid(-50, 50, 1, 10.0),
            ErrorLaw::Cauchy,
        ),
        "design4" => (
            float_grid(-300, 300, 25, 100.0),
            float_grid(-50, 50, 1, 10.0),
            ErrorLaw::Cauchy,
        ),
        "design4b" => (
            float_grid(-300, 300, 25, 100.0),
            float_grid(-50, 50, 1, 10.0),
            ErrorLaw::Uniform,
        ),
        other => return Err(CatalogError::UnknownDesign(other.to_string())),
    };
    Ok(Scenario::MaxscoreCs(MaxscoreScenario {
        id: design_id.to_string(),
        x_support,
        u_support,
        error_law,
        beta_true: [1.0, -0.5],
        theta2_grid,
        partial_effect: None,
    }))
}

/// DGP1: time dummy X_{1t} = t-1, X_21 = 0, X_22 uniform on {-p,...,p},
/// (alpha, V1, V2) independent of X with Gaussian product weights.
pub fn build_dgp1(p: u32) -> Scenario {
    let k = (2 * p + 1) as usize;
    let x_cells: Vec<([f64; 2], [f64; 2])> = (-(p as i64)..=p as i64)
        .map(|j| ([0.0, 0.0], [1.0, j as f64]))
        .collect();
    Scenario::PanelStrict(PanelScenario {
        id: format!("dgp1_p{p}"),
        x_cells,
        x_probs: vec![1.0 / k as f64; k],
        alpha_support: float_grid(-20, 20, 10, 10.0),
        v_support: float_grid(-30, 30, 1, 10.0),
        latent_law: PanelLatentLaw::GaussianProduct,
        beta_true: [1.0, -0.5],
        beta2_grid: float_grid(-150, 50, 1, 100.0),
        asf: None,
    })
}

/// DGP1 variant with the ASF target installed: subpopulation X_21 = 0,
/// X_22 = 1, period 1, counterfactual regressor value 1.
pub fn build_dgp1_asf(p: u32, beta2_true: f64) -> Scenario {
    let mut s = build_dgp1(p);
    if let Scenario::PanelStrict(ref mut ps) = s {
        ps.id = format!("dgp1_p{p}_asf");
        ps.beta_true = [1.0, beta2_true];
        ps.asf = Some(AsfSpec {
            period: 1,
            x_star: [0.0, 1.0],
            subpop_x22: 1.0,
        });
    }
    s
}

/// DGP2: binary X_2t, time effect beta_1 = 2, alpha + V_t uniform on 11
/// equidistant points of [-3, 3] with V_1 = V_2.
pub fn build_dgp2() -> Scenario {
    let x1_cells: Vec<[f64; 2]> = vec![[0.0, 0.0], [0.0, 1.0]];
    let x2_cells: Vec<[f64; 2]> = vec![[1.0, 0.0], [1.0, 1.0]];
    let x_cells: Vec<([f64; 2], [f64; 2])> = x1_cells
        .iter()
        .flat_map(|&a| x2_cells.iter().map(move |&b| (a, b)))
        .collect();
    let v_support = float_grid(-30, 30, 6, 10.0); // 11 points, spacing 0.6
    let strict = PanelScenario {
        id: "dgp2".to_string(),
        x_cells,
        x_probs: vec![0.25; 4],
        alpha_support: vec![0.0],
        v_support,
        latent_law: PanelLatentLaw::UniformDiagonal,
        beta_true: [2.0, 1.0],
        beta2_grid: float_grid(-200, 200, 20, 100.0), // 21 points in [-2, 2]
        asf: None,
    };
    Scenario::PanelSequential(PanelSequentialScenario {
        strict,
        x1_cells,
        x2_cells,
        x2_probs: vec![0.5, 0.5],
        a_outer: vec![0.0],
    })
}

/// All shipped scenario ids.
pub fn scenario_ids() -> &'static [&'static str] {
    &[
        "design1", "design2", "design3", "design4", "design4b", "dgp1_p4", "dgp1_p5", "dgp1_p10",
        "dgp2",
    ]
}

pub fn by_id(id: &str) -> Result<Scenario, CatalogError> {
    match id {
        "dgp1_p4" => Ok(build_dgp1(4)),
        "dgp1_p5" => Ok(build_dgp1(5)),
        "dgp1_p10" => Ok(build_dgp1(10)),
        "dgp2" => Ok(build_dgp2()),
        other => build_maxscore_design(other),
    }
}

impl MaxscoreScenario {
    pub fn theta_names(&self) -> Vec<&'static str> {
        if self.partial_effect.is_some() {
            vec!["theta1", "theta2", "theta3"]
        } else {
            vec!["theta1", "theta2"]
        }
    }

    /// Observable support (x, y), x-major with y = 1 listed first.
    pub fn z_support(&self) -> FiniteSupport {
        let mut pts = Vec::with_capacity(self.x_support.len() * 2);
        for &x in &self.x_support {
            pts.push(vec![x, 1.0]);
            pts.push(vec![x, 0.0]);
        }
        FiniteSupport::new(pts).expect("distinct by construction")
    }

    pub fn w_support(&self) -> FiniteSupport {
        FiniteSupport::from_product(&[self.x_support.clone(), self.u_support.clone()])
    }

    fn u_weight(&self, u: f64) -> f64 {
        match self.error_law {
            ErrorLaw::Cauchy => 1.0 / (1.0 + u * u),
            ErrorLaw::Uniform => 1.0,
        }
    }

    pub fn true_pmf(&self) -> TruePmf {
        let w = self.w_support();
        let u_total: f64 = self.u_support.iter().map(|&u| self.u_weight(u)).sum();
        let px = 1.0 / self.x_support.len() as f64;
        let latent: Vec<f64> = w
            .iter()
            .map(|p| px * self.u_weight(p[1]) / u_total)
            .collect();
        let latent_truth = ProbabilityVector::new(latent).expect("weights normalize");
        let theta = ThetaPoint::new(&["theta1", "theta2"], self.beta_true.to_vec());
        let model = self
            .model_at_impl(&theta, false)
            .expect("true model is well formed");
        let p_star = ProbabilityVector::new(model.pushforward.apply(latent_truth.as_slice()))
            .expect("pushforward preserves mass");
        TruePmf {
            p_star,
            latent_truth,
        }
    }

    fn outcome(z: &[f64], w: &[f64], theta: &ThetaPoint) -> bool {
        if z[0] != w[0] {
            return false;
        }
        let score = theta.values[0] + z[0] * theta.values[1] - w[1];
        z[1] == if score >= 0.0 { 1.0 } else { 0.0 }
    }

    fn model_at_impl(
        &self,
        theta: &ThetaPoint,
        with_targets: bool,
    ) -> Result<FiniteModel, CatalogError> {
        let z = self.z_support();
        let w = self.w_support();
        let pushforward = build_pushforward(&z, &w, theta, Self::outcome)?;
        let mut constraints = ConstraintSystem::with_simplex(w.len());
        for (row, rhs) in median_zero_rows(&w, &[0], 1)? {
            constraints.push_row(row, rhs, RowTag::MedianZero);
        }
        if with_targets {
            if let (Some(pe), Some(theta3)) = (self.partial_effect, theta.get("theta3")) {
                let (t1, t2) = (theta.values[0], theta.values[1]);
                let y = move |x: f64, u: f64| if t1 + x * t2 - u >= 0.0 { 1.0 } else { 0.0 };
                let mass = 1.0 / self.x_support.len() as f64; // X uniform
                let (row, rhs) = counterfactual_row(
                    &w,
                    move |p| y(p[0] + 1.0, p[1]) - y(p[0], p[1]),
                    move |p| p[0] == pe.at_x,
                    theta3,
                    Some(mass),
                )?;
                constraints.push_row(row, rhs, RowTag::Counterfactual);
            }
        }
        Ok(FiniteModel {
            z_support: z,
            w_support: w,
            theta: theta.clone(),
            pushforward,
            constraints,
        })
    }

    pub fn model_at(&self, theta: &ThetaPoint) -> Result<FiniteModel, CatalogError> {
        self.model_at_impl(theta, true)
    }

    pub fn theta_grid(&self) -> Vec<ThetaPoint> {
        self.theta2_grid
            .iter()
            .map(|&t2| ThetaPoint::new(&["theta1", "theta2"], vec![self.beta_true[0], t2]))
            .collect()
    }

    pub fn true_theta(&self) -> ThetaPoint {
        match self.partial_effect {
            None => ThetaPoint::new(&["theta1", "theta2"], self.beta_true.to_vec()),
            Some(pe) => {
                // theta3* = E[Delta(X,U) | X = at_x] under the true error law
                let (t1, t2) = (self.beta_true[0], self.beta_true[1]);
                let y = |x: f64, u: f64| if t1 + x * t2 - u >= 0.0 { 1.0 } else { 0.0 };
                let total: f64 = self.u_support.iter().map(|&u| self.u_weight(u)).sum();
                let theta3: f64 = self
                    .u_support
                    .iter()
                    .map(|&u| (y(pe.at_x + 1.0, u) - y(pe.at_x, u)) * self.u_weight(u) / total)
                    .sum();
                ThetaPoint::new(
                    &["theta1", "theta2", "theta3"],
                    vec![t1, t2, theta3],
                )
            }
        }
    }
}

impl PanelScenario {
    /// Observable support (x-cell index, y1, y2), cell-major with y = 1
    /// listed first in each period.
    pub fn z_support(&self) -> FiniteSupport {
        let mut pts = Vec::with_capacity(self.x_cells.len() * 4);
        for xi in 0..self.x_cells.len() {
            for y1 in [1.0, 0.0] {
                for y2 in [1.0, 0.0] {
                    pts.push(vec![xi as f64, y1, y2]);
                }
            }
        }
        FiniteSupport::new(pts).expect("distinct by construction")
    }

    /// Latent support (alpha, v1, v2, x-cell index), lexicographic.
    pub fn w_support(&self) -> FiniteSupport {
        let cells: Vec<f64> = (0..self.x_cells.len()).map(|i| i as f64).collect();
        FiniteSupport::from_product(&[
            self.alpha_support.clone(),
            self.v_support.clone(),
            self.v_support.clone(),
            cells,
        ])
    }

    fn latent_weight(&self, a: f64, v1: f64, v2: f64) -> f64 {
        match self.latent_law {
            PanelLatentLaw::GaussianProduct => {
                (-0.5 * (v1 * v1 + v2 * v2 + a * a)).exp()
            }
            PanelLatentLaw::UniformDiagonal => {
                if v1 == v2 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn true_pmf(&self) -> TruePmf {
        let w = self.w_support();
        // (alpha, v1, v2) independent of X
        let mut joint_total = 0.0;
        for &a in &self.alpha_support {
            for &v1 in &self.v_support {
                for &v2 in &self.v_support {
                    joint_total += self.latent_weight(a, v1, v2);
                }
            }
        }
        let latent: Vec<f64> = w
            .iter()
            .map(|p| {
                let xi = p[3] as usize;
                self.x_probs[xi] * self.latent_weight(p[0], p[1], p[2]) / joint_total
            })
            .collect();
        let latent_truth = ProbabilityVector::new(latent).expect("weights normalize");
        let model = self
            .model_at(&self.true_theta_structural())
            .expect("true model well formed");
        let p_star = ProbabilityVector::new(model.pushforward.apply(latent_truth.as_slice()))
            .expect("pushforward preserves mass");
        TruePmf {
            p_star,
            latent_truth,
        }
    }

    fn beta_of(&self, theta: &ThetaPoint) -> [f64; 2] {
        [
            theta.get("beta1").unwrap_or(self.beta_true[0]),
            theta.get("beta2").expect("panel theta carries beta2"),
        ]
    }

    fn outcome_indicator(beta: &[f64; 2], x: &[f64; 2], a: f64, v: f64) -> f64 {
        if beta[0] * x[0] + beta[1] * x[1] + a + v >= 0.0 {
            1.0
        } else {
            0.0
        }
    }

    pub fn model_at(&self, theta: &ThetaPoint) -> Result<FiniteModel, CatalogError> {
        let z = self.z_support();
        let w = self.w_support();
        let beta = self.beta_of(theta);
        let cells = self.x_cells.clone();
        let outcome = move |z: &[f64], wp: &[f64], _th: &ThetaPoint| {
            let xi = z[0] as usize;
            if wp[3] as usize != xi {
                return false;
            }
            let (x1, x2) = cells[xi];
            let y1 = Self::outcome_indicator(&beta, &x1, wp[0], wp[1]);
            let y2 = Self::outcome_indicator(&beta, &x2, wp[0], wp[2]);
            z[1] == y1 && z[2] == y2
        };
        let pushforward = build_pushforward(&z, &w, theta, outcome)?;
        let mut constraints = ConstraintSystem::with_simplex(w.len());
        for (row, rhs) in stationarity_rows(&w, &[3], 1, 2)? {
            constraints.push_row(row, rhs, RowTag::Stationarity);
        }
        if let (Some(asf), Some(tau)) = (self.asf, theta.get("tau")) {
            let x_star = asf.x_star;
            let v_coord = asf.period; // period 1 -> v1 at coord 1, period 2 -> v2 at coord 2
            let subpop_cells: Vec<bool> = self
                .x_cells
                .iter()
                .map(|(_, x2)| x2[1] == asf.subpop_x22)
                .collect();
            let mass: f64 = self
                .x_probs
                .iter()
                .zip(&subpop_cells)
                .filter(|(_, &s)| s)
                .map(|(&p, _)| p)
                .sum();
            let sp = subpop_cells.clone();
            let (row, rhs) = counterfactual_row(
                &w,
                move |p| Self::outcome_indicator(&beta, &x_star, p[0], p[v_coord]),
                move |p| sp[p[3] as usize],
                tau,
                Some(mass),
            )?;
            constraints.push_row(row, rhs, RowTag::Counterfactual);
        }
        Ok(FiniteModel {
            z_support: z,
            w_support: w,
            theta: theta.clone(),
            pushforward,
            constraints,
        })
    }

    fn true_theta_structural(&self) -> ThetaPoint {
        ThetaPoint::new(&["beta1", "beta2"], self.beta_true.to_vec())
    }

    /// True theta, including the true ASF value when the target is declared.
    pub fn true_theta(&self) -> ThetaPoint {
        match self.asf {
            None => self.true_theta_structural(),
            Some(asf) => {
                // tau* = P(x_star' beta + alpha + V_t >= 0); the latent law is
                // independent of X, so conditioning on the subpopulation drops.
                let beta = self.beta_true;
                let mut num = 0.0;
                let mut den = 0.0;
                for &a in &self.alpha_support {
                    for &v1 in &self.v_support {
                        for &v2 in &self.v_support {
                            let wgt = self.latent_weight(a, v1, v2);
                            let v = if asf.period == 1 { v1 } else { v2 };
                            num += wgt * Self::outcome_indicator(&beta, &asf.x_star, a, v);
                            den += wgt;
                        }
                    }
                }
                ThetaPoint::new(
                    &["beta1", "beta2", "tau"],
                    vec![beta[0], beta[1], num / den],
                )
            }
        }
    }

    pub fn theta_grid(&self) -> Vec<ThetaPoint> {
        self.beta2_grid
            .iter()
            .map(|&b2| ThetaPoint::new(&["beta1", "beta2"], vec![self.beta_true[0], b2]))
            .collect()
    }

    /// Grid over the ASF target at fixed structural coefficients.
    pub fn tau_grid(&self, beta2: f64, taus: &[f64]) -> Vec<ThetaPoint> {
        taus.iter()
            .map(|&tau| {
                ThetaPoint::new(
                    &["beta1", "beta2", "tau"],
                    vec![self.beta_true[0], beta2, tau],
                )
            })
            .collect()
    }
}

impl Scenario {
    pub fn id(&self) -> &str {
        match self {
            Scenario::MaxscoreCs(s) => &s.id,
            Scenario::PanelStrict(s) => &s.id,
            Scenario::PanelSequential(s) => &s.strict.id,
        }
    }

    pub fn true_pmf(&self) -> TruePmf {
        match self {
            Scenario::MaxscoreCs(s) => s.true_pmf(),
            Scenario::PanelStrict(s) => s.true_pmf(),
            Scenario::PanelSequential(s) => s.strict.true_pmf(),
        }
    }

    pub fn true_theta(&self) -> ThetaPoint {
        match self {
            Scenario::MaxscoreCs(s) => s.true_theta(),
            Scenario::PanelStrict(s) => s.true_theta(),
            Scenario::PanelSequential(s) => s.strict.true_theta(),
        }
    }

    pub fn theta_grid(&self) -> Vec<ThetaPoint> {
        match self {
            Scenario::MaxscoreCs(s) => s.theta_grid(),
            Scenario::PanelStrict(s) => s.theta_grid(),
            Scenario::PanelSequential(s) => s.strict.theta_grid(),
        }
    }

    /// Model under strict exogeneity (for sequential scenarios this is the
    /// strict side of the comparison).
    pub fn model_at(&self, theta: &ThetaPoint) -> Result<FiniteModel, CatalogError> {
        match self {
            Scenario::MaxscoreCs(s) => s.model_at(theta),
            Scenario::PanelStrict(s) => s.model_at(theta),
            Scenario::PanelSequential(s) => s.strict.model_at(theta),
        }
    }

    /// Adapter for [`crate::discrepancy::scan`].
    pub fn model_builder(
        &self,
    ) -> impl Fn(&ThetaPoint) -> Result<FiniteModel, DiscrepancyError> + Sync + '_ {
        move |theta| {
            self.model_at(theta)
                .map_err(|e| match e {
                    CatalogError::Model(m) => DiscrepancyError::Model(m),
                    CatalogError::UnknownDesign(_) => {
                        DiscrepancyError::Dimension("unknown design")
                    }
                })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrepancy::compute_t;
    use num::rational::BigRational;
    use num::{BigInt, FromPrimitive, Zero};

    #[test]
    fn design1_latent_truth_per_x() {
        let Scenario::MaxscoreCs(s) = build_maxscore_design("design1").unwrap() else {
            panic!()
        };
        let tp = s.true_pmf();
        // weights (1/2, 1, 1/2) normalized to (0.25, 0.5, 0.25), X uniform
        let expect = [0.125, 0.25, 0.125, 0.125, 0.25, 0.125];
        for (a, b) in tp.latent_truth.as_slice().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn design1_true_p_star() {
        let s = build_maxscore_design("design1").unwrap();
        let tp = s.true_pmf();
        let expect = [0.5, 0.0, 0.375, 0.125];
        for (a, b) in tp.p_star.as_slice().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn design_grids_match_catalog() {
        let Scenario::MaxscoreCs(d2) = build_maxscore_design("design2").unwrap() else {
            panic!()
        };
        assert_eq!(d2.u_support.len(), 101);
        let Scenario::MaxscoreCs(d3) = build_maxscore_design("design3").unwrap() else {
            panic!()
        };
        assert_eq!(d3.x_support.len(), 7);
        let Scenario::MaxscoreCs(d4) = build_maxscore_design("design4").unwrap() else {
            panic!()
        };
        assert_eq!(d4.x_support.len(), 25);
        assert_eq!(d4.theta2_grid.len(), 201);
        let Scenario::MaxscoreCs(d4b) = build_maxscore_design("design4b").unwrap() else {
            panic!()
        };
        assert_eq!(d4b.error_law, ErrorLaw::Uniform);
        assert_eq!(d4b.x_support, d4.x_support);
        assert!(build_maxscore_design("design9").is_err());
    }

    #[test]
    fn dgp1_support_sizes() {
        let Scenario::PanelStrict(s) = build_dgp1(4) else {
            panic!()
        };
        assert_eq!(s.alpha_support.len(), 5);
        assert_eq!(s.v_support.len(), 61);
        assert_eq!(s.x_cells.len(), 9);
        for &p in &s.x_probs {
            assert!((p - 1.0 / 9.0).abs() < 1e-15);
        }
        assert_eq!(s.z_support().len(), 36);
        assert_eq!(s.w_support().len(), 5 * 61 * 61 * 9);
    }

    #[test]
    fn dgp1_mode_at_origin() {
        let Scenario::PanelStrict(s) = build_dgp1(4) else {
            panic!()
        };
        let w = s.w_support();
        let tp = s.true_pmf();
        let mode = w.position(&[0.0, 0.0, 0.0, 0.0]).unwrap();
        let max = tp
            .latent_truth
            .as_slice()
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((tp.latent_truth[mode] - max).abs() < 1e-18);
    }

    #[test]
    fn dgp2_support_and_weights() {
        let Scenario::PanelSequential(s) = build_dgp2() else {
            panic!()
        };
        assert_eq!(s.strict.v_support.len(), 11);
        let spacing = s.strict.v_support[1] - s.strict.v_support[0];
        assert!((spacing - 0.6).abs() < 1e-12);
        assert_eq!(s.strict.x_cells.len(), 4);
        for &p in &s.strict.x_probs {
            assert_eq!(p, 0.25);
        }
        let tp = s.strict.true_pmf();
        // each diagonal (s, s) point carries 1/11 of the latent mass per x
        let w = s.strict.w_support();
        let pos = w
            .position(&[0.0, s.strict.v_support[3], s.strict.v_support[3], 2.0])
            .unwrap();
        assert!((tp.latent_truth[pos] - 0.25 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn true_pmfs_satisfy_constraints() {
        for id in ["design1", "design2", "dgp2"] {
            let s = by_id(id).unwrap();
            let model = s.model_at(&s.true_theta()).unwrap();
            let tp = s.true_pmf();
            let resid = model.constraints.residual(tp.latent_truth.as_slice());
            assert!(resid < 1e-12, "{id}: residual {resid}");
        }
    }

    /// Exact rational verification for the designs with rational weights:
    /// the true latent pmf satisfies every constraint row exactly.
    #[test]
    fn rational_exactness_of_maxscore_truth() {
        let Scenario::MaxscoreCs(s) = build_maxscore_design("design1").unwrap() else {
            panic!()
        };
        let big = |n: i64| BigInt::from_i64(n).unwrap();
        // u in {-1, 0, 1} as integers; weight 1/(1+u^2) exactly
        let us = [-1i64, 0, 1];
        let weights: Vec<BigRational> = us
            .iter()
            .map(|&u| BigRational::new(big(1), big(1 + u * u)))
            .collect();
        let total: BigRational = weights.iter().cloned().sum();
        // per x-block, median-zero row: w(-1) - w(+1) = 0 exactly
        let resid = weights[0].clone() - weights[2].clone();
        assert!(resid.is_zero());
        // latent pmf sums to one exactly: 2 * (sum w / total) / 2
        let half = BigRational::new(big(1), big(2));
        let mass: BigRational = weights
            .iter()
            .map(|w| half.clone() * w / total.clone())
            .sum::<BigRational>()
            * BigRational::from_i64(2).unwrap();
        assert_eq!(mass, BigRational::from_i64(1).unwrap());
        // and the f64 pmf agrees with the rational one to the last bit we print
        let tp = s.true_pmf();
        let w0 = &weights[0] / &total;
        let w0_f64 = w0.numer().to_string().parse::<f64>().unwrap()
            / w0.denom().to_string().parse::<f64>().unwrap();
        assert!((tp.latent_truth[0] - 0.5 * w0_f64).abs() < 1e-15);
    }

    #[test]
    fn truth_membership_design1() {
        let s = by_id("design1").unwrap();
        let model = s.model_at(&s.true_theta()).unwrap();
        let tp = s.true_pmf();
        let res = compute_t(&model, &tp.p_star).unwrap();
        assert!(res.t <= 1e-9, "T(theta*) = {}", res.t);
        assert!(res.member);
    }

    #[test]
    fn truth_membership_dgp2_strict() {
        let s = by_id("dgp2").unwrap();
        let model = s.model_at(&s.true_theta()).unwrap();
        let tp = s.true_pmf();
        let res = compute_t(&model, &tp.p_star).unwrap();
        assert!(res.t <= 1e-9, "T(theta*) = {}", res.t);
    }

    #[test]
    fn dgp1_asf_true_theta_members() {
        let Scenario::PanelStrict(s) = build_dgp1_asf(2, 0.5) else {
            panic!()
        };
        // thinned grids keep this test quick
        let mut thin = s.clone();
        thin.v_support = float_grid(-30, 30, 10, 10.0); // 7 points
        thin.alpha_support = float_grid(-20, 20, 20, 10.0); // 3 points
        let theta = thin.true_theta();
        assert_eq!(theta.names.last().unwrap(), "tau");
        let model = thin.model_at(&theta).unwrap();
        let tp = thin.true_pmf();
        assert!(model.constraints.residual(tp.latent_truth.as_slice()) < 1e-12);
        let res = compute_t(&model, &tp.p_star).unwrap();
        assert!(res.t <= 1e-9, "T = {}", res.t);
    }

    #[test]
    fn scenario_ids_resolve() {
        for id in scenario_ids() {
            assert!(by_id(id).is_ok(), "{id}");
        }
    }
}
