use std::fmt::Write as _;

use nalgebra::Vector3;

use super::composite::{
    build_composite, charpoly_radius, delta_certificate, spectral_radius, steady_state_bound,
    step_size_terms, CompositeSystem, DeltaCertificate,
};
use super::constants::TheoryConstants;
use crate::error::Result;

/// Everything the certification pipeline computes at one step-size.
#[derive(Debug, Clone)]
pub struct TheoryReport {
    pub constants: TheoryConstants,
    pub alpha: f64,
    pub step_terms: [f64; 3],
    pub alpha_bound: f64,
    pub system: CompositeSystem,
    pub rho: f64,
    pub rho_charpoly: f64,
    pub certificate: DeltaCertificate,
    pub steady_state: Option<Vector3<f64>>,
    pub phi_horizon: usize,
    pub phi_spread: f64,
    pub phi_residual: f64,
}

impl TheoryReport {
    pub fn new(
        constants: TheoryConstants,
        alpha: f64,
        phi_horizon: usize,
        phi_spread: f64,
        phi_residual: f64,
    ) -> Result<Self> {
        let step_terms = step_size_terms(&constants.bounds)?;
        let alpha_bound = step_terms.iter().cloned().fold(f64::INFINITY, f64::min);
        let system = build_composite(&constants.bounds, alpha)?;
        let rho = spectral_radius(&system.m)?;
        let rho_charpoly = charpoly_radius(&system.m);
        let certificate = delta_certificate(&system)?;
        let steady_state = steady_state_bound(&system).ok();
        Ok(Self {
            constants,
            alpha,
            step_terms,
            alpha_bound,
            system,
            rho,
            rho_charpoly,
            certificate,
            steady_state,
            phi_horizon,
            phi_spread,
            phi_residual,
        })
    }

    /// Certified: `alpha` within the bound, all delta inequalities strict,
    /// `rho(M) < 1` and a nonnegative steady state.
    pub fn passes(&self) -> bool {
        self.alpha > 0.0
            && self.alpha <= self.alpha_bound
            && self.certificate.holds()
            && self.rho < 1.0
            && self
                .steady_state
                .is_some_and(|v| v.iter().all(|x| *x >= 0.0))
    }

    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let p = &self.constants.problem;
        let g = &self.constants.bounds;
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("status", if self.passes() { "pass" } else { "fail" }.into());
        kv("alpha", self.alpha.to_string());
        kv("alpha_bound", self.alpha_bound.to_string());
        for (i, t) in self.step_terms.iter().enumerate() {
            kv(&format!("alpha_term{}", i + 1), t.to_string());
        }
        kv("n", p.n.to_string());
        kv("L", p.l.to_string());
        kv("mu", p.mu.to_string());
        kv("sigma", p.sigma.to_string());
        kv("a", p.a.to_string());
        kv("b", p.b.to_string());
        kv("horizon", self.constants.steps.len().to_string());
        kv("phi_horizon", self.phi_horizon.to_string());
        kv("phi_spread", self.phi_spread.to_string());
        kv("phi_residual", self.phi_residual.to_string());
        kv("c", g.c.to_string());
        kv("tau", g.tau.to_string());
        kv("eta", g.eta.to_string());
        kv("psi", g.psi.to_string());
        kv("kappa", g.kappa.to_string());
        kv("varphi", g.varphi.to_string());
        kv("nu", self.system.coeffs.nu.to_string());
        kv("zeta", self.system.coeffs.zeta.to_string());
        for (i, m) in self.system.coeffs.m.iter().enumerate() {
            kv(&format!("m{}", i + 1), m.to_string());
        }
        for (i, b) in self.system.coeffs.b.iter().enumerate() {
            kv(&format!("b{}", i + 1), b.to_string());
        }
        for i in 0..3 {
            for j in 0..3 {
                kv(&format!("M{}{}", i + 1, j + 1), self.system.m[(i, j)].to_string());
            }
        }
        for i in 0..3 {
            kv(&format!("bvec{}", i + 1), self.system.b[i].to_string());
        }
        kv("rho", self.rho.to_string());
        kv("rho_charpoly", self.rho_charpoly.to_string());
        kv("one_minus_rho", (1.0 - self.rho).to_string());
        for (i, d) in self.certificate.delta.iter().enumerate() {
            kv(&format!("delta{}", i + 1), d.to_string());
        }
        for (name, m) in self.certificate.all_margins() {
            kv(&format!("{name}_lhs"), m.lhs.to_string());
            kv(&format!("{name}_rhs"), m.rhs.to_string());
            kv(&format!("{name}_margin"), m.margin().to_string());
            kv(&format!("{name}_holds"), m.holds().to_string());
        }
        match &self.steady_state {
            Some(v) => {
                for i in 0..3 {
                    kv(&format!("steady_state{}", i + 1), v[i].to_string());
                }
            }
            None => kv("steady_state", "undefined".into()),
        }
        s
    }
}
