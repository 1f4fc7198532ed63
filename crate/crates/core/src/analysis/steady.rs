//! Analytic equilibrium of a single clone.

use crate::error::{Error, Result};

/// Rates of one clone at every dividing stage.
#[derive(Debug, Clone, PartialEq)]
pub struct CloneRates {
    pub self_renewal: Vec<f64>,
    pub proliferation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    /// Total densities `ρ_i*` of every stage, cells/kg.
    pub rho: Vec<f64>,
    /// `s* = 1 / (2 a_1)`.
    pub signal: f64,
}

/// Positive equilibrium of a single clone.
///
/// The stem-cell balance `P_1 = 0` fixes `s* = 1/(2a_1)` and hence
/// `ρ_M* = (2a_1 - 1)/K`. The other stages follow backwards from
/// `Q_{M-1} ρ_{M-1} = d ρ_M` and `Q_{i-1} ρ_{i-1} = -P_i ρ_i`. For `M = 3`:
/// `ρ_2* = d ρ_3* / ((2 - a_2/a_1) p_2)` and
/// `ρ_1* = ρ_2* (1 - a_2/a_1) p_2 / p_1`.
pub fn steady_state_predictor(rates: &CloneRates, feedback_strength: f64, clearance: f64) -> Result<Equilibrium> {
    let dividing = rates.self_renewal.len();
    if dividing == 0 || rates.proliferation.len() != dividing {
        return Err(Error::Structural(
            "clone rates need one entry per dividing stage".into(),
        ));
    }
    let a1 = rates.self_renewal[0];
    if !(a1 > 0.5) {
        return Err(Error::NoEquilibrium(a1));
    }
    let s = 1.0 / (2.0 * a1);
    let m = dividing + 1;
    let mut rho = vec![0.0; m];
    rho[m - 1] = (2.0 * a1 - 1.0) / feedback_strength;

    let outflux = |i: usize| 2.0 * (1.0 - rates.self_renewal[i] * s) * rates.proliferation[i];
    let growth = |i: usize| (2.0 * rates.self_renewal[i] * s - 1.0) * rates.proliferation[i];

    rho[m - 2] = clearance * rho[m - 1] / outflux(m - 2);
    for i in (1..m - 1).rev() {
        rho[i - 1] = -growth(i) * rho[i] / outflux(i - 1);
    }
    if rho.iter().any(|&r| !(r >= 0.0) || !r.is_finite()) {
        return Err(Error::Domain(format!(
            "equilibrium is not positive: {rho:?} (progenitor self-renewal must stay below a_1)"
        )));
    }
    Ok(Equilibrium { rho, signal: s })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn closed_form_three_stages() {
        let (a1, a2, p1, p2, k, d) = (0.8865, 0.846738, 0.22, 0.7, 1.75e-9, 2.0);
        let eq = steady_state_predictor(
            &CloneRates {
                self_renewal: vec![a1, a2],
                proliferation: vec![p1, p2],
            },
            k,
            d,
        )
        .unwrap();
        assert_relative_eq!(eq.rho[2], 0.773 / 1.75e-9, max_relative = 1e-12);
        let rho2 = d * eq.rho[2] / ((2.0 - a2 / a1) * p2);
        assert_relative_eq!(eq.rho[1], rho2, max_relative = 1e-12);
        assert_relative_eq!(eq.rho[0], rho2 * (1.0 - a2 / a1) * p2 / p1, max_relative = 1e-12);
        assert_relative_eq!(eq.signal, 1.0 / (2.0 * a1));
    }

    #[test]
    fn extinction_threshold() {
        let rates = |a1: f64| CloneRates {
            self_renewal: vec![a1, 0.5 + 0.5 * (a1 - 0.5)],
            proliferation: vec![0.2, 0.5],
        };
        let near = steady_state_predictor(&rates(0.5 + 1e-9), 1e-9, 1.0).unwrap();
        assert!(near.rho[2] < 2.1);
        assert!(matches!(
            steady_state_predictor(&rates(0.5), 1e-9, 1.0),
            Err(Error::NoEquilibrium(_))
        ));
    }

    #[test]
    fn flat_variant() {
        let eq = steady_state_predictor(
            &CloneRates {
                self_renewal: vec![0.88, 0.84],
                proliferation: vec![0.1, 0.4],
            },
            1.75e-9,
            2.0,
        )
        .unwrap();
        assert_relative_eq!(eq.rho[2], 0.76 / 1.75e-9, max_relative = 1e-12);
    }
}
