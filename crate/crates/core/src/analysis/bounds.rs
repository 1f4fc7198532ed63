//! A-priori upper bounds on the total densities and a runtime checker.
//!
//! With `P̄_i = 2‖a_i‖‖p_i‖` and `Q̲_i = 2(1-‖a_i‖) inf p_i`, the ratios
//! `ρ_i/ρ_{i+1}` stay below constants `B_i` built by a forward recursion,
//! so `ρ_i <= A_i ρ_M` with `A_i = Π_{k>=i} B_k`. Absolute bounds follow from
//! comparison arguments on `ρ_1`, each intermediate stage in turn, and `ρ_M`.

use crate::error::{Error, Result};
use crate::model::{ModelParams, State};
use crate::solver::TotalsSeries;

/// Relative slack when comparing against a bound, for round-off in the
/// quadrature of equal-shaped profiles.
pub const BOUND_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundEstimates {
    /// `P̄_i` per dividing stage.
    pub p_bar: Vec<f64>,
    /// `Q̲_i` per dividing stage.
    pub q_under: Vec<f64>,
    /// `B_i`: bound on `ρ_i / ρ_{i+1}`, per dividing stage.
    pub ratio_bounds: Vec<f64>,
    /// `A_i = Π_{k=i}^{M-1} B_k`, per dividing stage.
    pub products: Vec<f64>,
    /// `ρ̄_i` per stage, `None` where no finite bound was constructed.
    pub rho_bar: Vec<Option<f64>>,
}

/// Sup-norms and infima the bounds are built from.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundInputs {
    pub a_sup: Vec<f64>,
    pub p_sup: Vec<f64>,
    pub p_inf: Vec<f64>,
    /// `‖n_i^0‖_∞` per stage.
    pub initial_sup: Vec<f64>,
    pub feedback_strength: f64,
    pub clearance: f64,
}

impl BoundInputs {
    pub fn from_model(params: &ModelParams, initial: &State) -> Result<Self> {
        if initial.num_stages() != params.num_stages() {
            return Err(Error::Structural("initial state and parameters disagree on M".into()));
        }
        let initial_sup: Vec<f64> = initial
            .densities()
            .stages()
            .map(|s| s.iter().copied().fold(0.0, f64::max))
            .collect();
        Ok(Self {
            a_sup: params.self_renewal_tables().iter().map(|t| t.sup()).collect(),
            p_sup: params.proliferation_tables().iter().map(|t| t.sup()).collect(),
            p_inf: params.proliferation_tables().iter().map(|t| t.inf()).collect(),
            initial_sup,
            feedback_strength: params.feedback_strength(),
            clearance: params.clearance(),
        })
    }
}

/// Bound constants from table extrema and initial data.
pub fn bound_estimates(params: &ModelParams, initial: &State) -> Result<BoundEstimates> {
    bounds_from_inputs(&BoundInputs::from_model(params, initial)?)
}

pub fn bounds_from_inputs(inp: &BoundInputs) -> Result<BoundEstimates> {
    let dividing = inp.a_sup.len();
    let m = dividing + 1;
    if inp.p_sup.len() != dividing || inp.p_inf.len() != dividing || inp.initial_sup.len() != m {
        return Err(Error::Structural("bound inputs have inconsistent lengths".into()));
    }
    if let Some(stage) = inp.initial_sup.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::ZeroInitialNorm { stage });
    }
    let k = inp.feedback_strength;
    let d = inp.clearance;

    let p_bar: Vec<f64> = (0..dividing).map(|i| 2.0 * inp.a_sup[i] * inp.p_sup[i]).collect();
    let q_under: Vec<f64> = (0..dividing)
        .map(|i| 2.0 * (1.0 - inp.a_sup[i]) * inp.p_inf[i])
        .collect();

    let mut ratio_bounds = Vec::with_capacity(dividing);
    for i in 0..dividing {
        let initial_ratio = inp.initial_sup[i] / inp.initial_sup[i + 1];
        let inflow = if i == 0 {
            0.0
        } else {
            2.0 * inp.p_sup[i - 1] * ratio_bounds[i - 1]
        };
        // Stage i+1 either divides (loses at most ‖p_{i+1}‖ per capita) or is
        // the mature compartment (loses d).
        let drain = if i + 1 == m - 1 { d } else { inp.p_sup[i + 1] };
        ratio_bounds.push(initial_ratio.max((inflow + p_bar[i] + drain) / q_under[i]));
    }

    let products: Vec<f64> = (0..dividing).map(|i| ratio_bounds[i..].iter().product()).collect();

    let mut rho_bar = vec![None; m];
    rho_bar[0] = Some(inp.initial_sup[0].max(products[0] / k * (2.0 * inp.a_sup[0] - 1.0)));
    for i in 1..dividing {
        let Some(prev) = rho_bar[i - 1] else { break };
        let inflow = 2.0 * inp.p_sup[i - 1] * prev;
        rho_bar[i] = Some(inp.initial_sup[i].max(intermediate_threshold(
            products[i],
            k,
            inp.a_sup[i],
            inp.p_inf[i],
            inflow,
        )));
    }
    if let Some(prev) = rho_bar[m - 2] {
        rho_bar[m - 1] = Some(inp.initial_sup[m - 1].max(2.0 / d * inp.p_sup[m - 2] * prev));
    }

    Ok(BoundEstimates {
        p_bar,
        q_under,
        ratio_bounds,
        products,
        rho_bar,
    })
}

/// Level above which `dρ_i/dt <= inflow + sup_x P_i · ρ_i` is negative.
///
/// Above `(A/K)(2‖a‖-1)`, `sup_x P_i <= (2‖a‖/(1 + Kρ/A) - 1) inf p < 0`, so
/// the sign change solves `inf p · ρ (1 - 2‖a‖/(1 + Kρ/A)) = inflow`. With
/// `u = Kρ/A` this is the quadratic `(A/K)u² + ((A/K)(1-2‖a‖) - c)u - c = 0`,
/// `c = inflow / inf p`.
fn intermediate_threshold(product: f64, k: f64, a_sup: f64, p_inf: f64, inflow: f64) -> f64 {
    let alpha = product / k;
    let c = inflow / p_inf;
    let beta = alpha * (1.0 - 2.0 * a_sup) - c;
    let disc = beta * beta + 4.0 * alpha * c;
    let u = (-beta + disc.sqrt()) / (2.0 * alpha);
    alpha * u
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    /// `ρ_i / ρ_{i+1} <= B_i`.
    Ratio,
    /// `ρ_i <= ρ̄_i`.
    Absolute,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundViolation {
    pub time: f64,
    pub kind: BoundKind,
    /// 0-based stage `i` of the bound.
    pub stage: usize,
    pub value: f64,
    pub bound: f64,
}

/// Every bound at every entry of the totals series; empty on success.
pub fn check_bounds(totals: &TotalsSeries, bounds: &BoundEstimates) -> Vec<BoundViolation> {
    let mut out = Vec::new();
    for j in 0..totals.len() {
        let t = totals.times()[j];
        let rho = totals.rho(j);
        for (i, &b) in bounds.ratio_bounds.iter().enumerate() {
            let value = rho[i] / rho[i + 1];
            if !(value <= b * (1.0 + BOUND_SLACK)) {
                out.push(BoundViolation {
                    time: t,
                    kind: BoundKind::Ratio,
                    stage: i,
                    value,
                    bound: b,
                });
            }
        }
        for (i, rb) in bounds.rho_bar.iter().enumerate() {
            if let Some(b) = rb {
                if !(rho[i] <= b * (1.0 + BOUND_SLACK)) {
                    out.push(BoundViolation {
                        time: t,
                        kind: BoundKind::Absolute,
                        stage: i,
                        value: rho[i],
                        bound: *b,
                    });
                }
            }
        }
    }
    out
}
