//! Contraction constants along a horizon and their global bounds.

use super::sequences::{Sequences, StochVector};
use crate::error::{Error, Result};

/// Problem-level constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemConstants {
    pub n: usize,
    pub l: f64,
    pub mu: f64,
    pub sigma: f64,
    /// Lower bound on the positive entries of every `A_k`.
    pub a: f64,
    /// Lower bound on the positive entries of every `B_k`.
    pub b: f64,
}

/// Per-iteration constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConstants {
    pub k: usize,
    pub kappa: f64,
    pub varphi: f64,
    pub gamma: f64,
    pub psi: f64,
    pub tau: f64,
    pub c: f64,
    pub nu: f64,
    pub zeta: f64,
    /// Diameter of `G_k`.
    pub diameter: usize,
    /// Maximal edge utility of `G_k`.
    pub edge_utility: usize,
    /// `phi_{k+1}^T pi_k`.
    pub phi_dot_pi: f64,
}

/// Horizon-wide bounds plus the problem constants they pair with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalBounds {
    pub n: usize,
    pub l: f64,
    pub mu: f64,
    pub sigma: f64,
    pub c: f64,
    pub tau: f64,
    pub eta: f64,
    pub psi: f64,
    pub kappa: f64,
    pub varphi: f64,
}

impl GlobalBounds {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidBounds(what.to_string()));
        if self.n == 0 {
            return bad("n must be positive");
        }
        if !(self.mu > 0.0) || !(self.l >= self.mu) || !self.l.is_finite() {
            return bad("need 0 < mu <= L");
        }
        if !(self.sigma >= 0.0) {
            return bad("sigma must be nonnegative");
        }
        if !(0.0..1.0).contains(&self.c) {
            return bad("c must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.tau) {
            return bad("tau must lie in [0, 1)");
        }
        if !(self.eta > 0.0) {
            return bad("eta must be positive");
        }
        if !(self.kappa >= 1.0) || !(self.varphi >= 1.0) || !(self.psi >= 0.0) {
            return bad("need kappa >= 1, varphi >= 1, psi >= 0");
        }
        Ok(())
    }

    /// `nu = 4 L^2 kappa^2 tau^2 / (1 - tau^2) + 2 psi L^2`.
    pub fn nu(&self) -> f64 {
        let l2 = self.l * self.l;
        let t2 = self.tau * self.tau;
        4.0 * l2 * self.kappa * self.kappa * t2 / (1.0 - t2) + 2.0 * self.psi * l2
    }

    /// `zeta = 4 varphi^2 nu`.
    pub fn zeta(&self) -> f64 {
        4.0 * self.varphi * self.varphi * self.nu()
    }
}

/// Computes the constants of iteration `k`. The graph constants `d, kk`
/// enter as the product `D_k K_k`, clamped below at one so that a single
/// node stays well defined.
#[allow(clippy::too_many_arguments)]
pub fn constants_update(
    k: usize,
    pi_k: &StochVector,
    pi_k1: &StochVector,
    phi_k: &StochVector,
    phi_k1: &StochVector,
    d: usize,
    kk: usize,
    problem: &ProblemConstants,
    c_bound: f64,
    tau_bound: f64,
) -> Result<StepConstants> {
    for v in [pi_k, pi_k1, phi_k, phi_k1] {
        if let Some(i) = (0..v.len()).find(|&i| !(v[i] > 0.0)) {
            return Err(Error::DegenerateWeights { index: i, value: v[i] });
        }
    }
    let n = problem.n as f64;
    let l2 = problem.l * problem.l;
    let dk = ((d * kk) as f64).max(1.0);

    let kappa = (1.0 / pi_k.min()).sqrt();
    let kappa1 = (1.0 / pi_k1.min()).sqrt();
    let varphi = (1.0 / phi_k.min()).sqrt();
    let varphi1 = (1.0 / phi_k1.min()).sqrt();
    let gamma = (0..pi_k.len())
        .map(|i| phi_k1[i] * pi_k[i])
        .fold(0.0, f64::max)
        .sqrt();
    let psi = (n * (kappa1 * kappa1 - 1.0)).max(0.0);

    let tau_sq = 1.0
        - pi_k.min().powi(2) * problem.b * problem.b / (pi_k.max().powi(2) * pi_k1.max() * dk);
    let c_sq = 1.0 - phi_k1.min() * problem.a * problem.a / (phi_k.max().powi(2) * dk);
    for (what, v) in [("tau_k", tau_sq), ("c_k", c_sq)] {
        if !(0.0..1.0).contains(&v) {
            return Err(Error::AssumptionBreach {
                iteration: k,
                what: format!("{what}^2 = {v} lies outside [0, 1)"),
            });
        }
    }

    let t2 = tau_bound * tau_bound;
    let nu = 4.0 * l2 * kappa1 * kappa1 * t2 / (1.0 - t2) + 2.0 * psi * l2;
    let zeta = (c_bound * varphi1 + varphi).powi(2) * nu;
    Ok(StepConstants {
        k,
        kappa,
        varphi,
        gamma,
        psi,
        tau: tau_sq.sqrt(),
        c: c_sq.sqrt(),
        nu,
        zeta,
        diameter: d,
        edge_utility: kk,
        phi_dot_pi: phi_k1.dot(pi_k),
    })
}

/// Constants over a horizon together with their global bounds.
#[derive(Debug, Clone)]
pub struct TheoryConstants {
    pub problem: ProblemConstants,
    pub steps: Vec<StepConstants>,
    pub bounds: GlobalBounds,
}

impl TheoryConstants {
    /// Two passes: per-iteration `tau_k, c_k` first, then `nu_k, zeta_k`
    /// with the horizon suprema as `tau` and `c`.
    pub fn from_sequences(seq: &Sequences, l: f64, mu: f64, sigma: f64) -> Result<Self> {
        let n = seq.pi[0].len();
        let mut a = f64::INFINITY;
        let mut b = f64::INFINITY;
        let mut graph_consts = Vec::with_capacity(seq.pairs.len());
        let mut last_graph = None;
        for pair in &seq.pairs {
            a = a.min(pair.a.min_positive()?);
            b = b.min(pair.b.min_positive()?);
            let dk = match &last_graph {
                Some((g, dk)) if *g == pair.graph => *dk,
                _ => (pair.graph.diameter()?, pair.graph.max_edge_utility()?),
            };
            last_graph = Some((pair.graph.clone(), dk));
            graph_consts.push(dk);
        }
        let problem = ProblemConstants {
            n,
            l,
            mu,
            sigma,
            a,
            b,
        };
        let pass = |c_bound: f64, tau_bound: f64| -> Result<Vec<StepConstants>> {
            graph_consts
                .iter()
                .enumerate()
                .map(|(k, &(d, kk))| {
                    constants_update(
                        k,
                        &seq.pi[k],
                        &seq.pi[k + 1],
                        &seq.phi[k],
                        &seq.phi[k + 1],
                        d,
                        kk,
                        &problem,
                        c_bound,
                        tau_bound,
                    )
                })
                .collect()
        };
        let first = pass(0.0, 0.0)?;
        let c = first.iter().map(|s| s.c).fold(0.0, f64::max);
        let tau = first.iter().map(|s| s.tau).fold(0.0, f64::max);
        let steps = pass(c, tau)?;

        let last = seq.pi.len() - 1;
        let kappa_end = (1.0 / seq.pi[last].min()).sqrt();
        let varphi_end = (1.0 / seq.phi[last].min()).sqrt();
        let bounds = GlobalBounds {
            n,
            l,
            mu,
            sigma,
            c,
            tau,
            eta: steps.iter().map(|s| s.phi_dot_pi).fold(f64::INFINITY, f64::min),
            psi: steps.iter().map(|s| s.psi).fold(0.0, f64::max),
            kappa: steps.iter().map(|s| s.kappa).fold(kappa_end, f64::max),
            varphi: steps.iter().map(|s| s.varphi).fold(varphi_end, f64::max),
        };
        Ok(Self {
            problem,
            steps,
            bounds,
        })
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "k", "kappa", "varphi", "gamma", "psi", "tau", "c", "nu", "zeta", "diameter",
            "edge_utility", "phi_dot_pi",
        ])?;
        for s in &self.steps {
            w.write_record([
                s.k.to_string(),
                s.kappa.to_string(),
                s.varphi.to_string(),
                s.gamma.to_string(),
                s.psi.to_string(),
                s.tau.to_string(),
                s.c.to_string(),
                s.nu.to_string(),
                s.zeta.to_string(),
                s.diameter.to_string(),
                s.edge_utility.to_string(),
                s.phi_dot_pi.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<constants csv>", e))?;
        Ok(())
    }
}
