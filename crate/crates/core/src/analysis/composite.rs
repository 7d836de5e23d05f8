//! The 3x3 composite error dynamics `V_{k+1} <= M(alpha) V_k + b(alpha)`,
//! its spectral radius, the step-size bound and the delta certificate.

use nalgebra::{Matrix3, Vector3};

use super::constants::GlobalBounds;
use super::metrics::ErrorEstimate;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub m: [f64; 8],
    pub b: [f64; 5],
    pub nu: f64,
    pub zeta: f64,
}

impl Coefficients {
    pub fn new(g: &GlobalBounds) -> Result<Self> {
        g.validate()?;
        let n = g.n as f64;
        let (l, mu, s2) = (g.l, g.mu, g.sigma * g.sigma);
        let l2 = l * l;
        let vp2 = g.varphi * g.varphi;
        let c2 = g.c * g.c;
        let nu = g.nu();
        let zeta = g.zeta();
        let cq = (1.0 + c2) / (1.0 - c2);
        Ok(Self {
            m: [
                n * mu / 2.0,
                3.0 * l2 * vp2 / mu,
                3.0 / (n * mu * g.eta),
                2.0 * n * l2 * vp2 * cq,
                cq,
                2.0 * n * l2 * vp2 * nu,
                zeta,
                nu,
            ],
            b: [
                3.0 * n * s2 / 2.0,
                2.0 * cq * s2,
                4.0 * n * g.psi * s2,
                2.0 * l * n * g.psi * s2,
                2.0 * nu * s2,
            ],
            nu,
            zeta,
        })
    }
}

/// `M(alpha)` and `b(alpha)` with the coefficients they were built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositeSystem {
    pub alpha: f64,
    pub coeffs: Coefficients,
    pub bounds: GlobalBounds,
    pub m: Matrix3<f64>,
    pub b: Vector3<f64>,
    /// `I - M(alpha)` assembled from the coefficients, so that diagonal
    /// deficits of order `alpha` keep full relative precision.
    pub deficit: Matrix3<f64>,
}

pub fn build_composite(bounds: &GlobalBounds, alpha: f64) -> Result<CompositeSystem> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidConfig(format!("step-size must be nonnegative, got {alpha}")));
    }
    let co = Coefficients::new(bounds)?;
    let [m1, m2, m3, m4, m5, m6, m7, m8] = co.m;
    let [b1, b2, b3, b4, b5] = co.b;
    let a2 = alpha * alpha;
    let c2 = bounds.c * bounds.c;
    let t2 = bounds.tau * bounds.tau;
    let m = Matrix3::new(
        1.0 - m1 * alpha,
        m2 * alpha,
        m3 * alpha,
        m4 * a2,
        (1.0 + c2) / 2.0 + m4 * a2,
        m5 * a2,
        m6 * a2,
        m7 + m6 * a2,
        (1.0 + t2) / 2.0 + m8 * a2,
    );
    let deficit = Matrix3::new(
        m1 * alpha,
        -m2 * alpha,
        -m3 * alpha,
        -m4 * a2,
        (1.0 - c2) / 2.0 - m4 * a2,
        -m5 * a2,
        -m6 * a2,
        -(m7 + m6 * a2),
        (1.0 - t2) / 2.0 - m8 * a2,
    );
    let b = Vector3::new(b1 * a2, b2 * a2, b3 + b4 * alpha + b5 * a2);
    Ok(CompositeSystem {
        alpha,
        coeffs: co,
        bounds: *bounds,
        m,
        b,
        deficit,
    })
}

/// Strongly connected components of the nonzero pattern of a square
/// matrix, in index order of their smallest member.
fn pattern_components(m: &Matrix3<f64>) -> Vec<Vec<usize>> {
    let mut reach = [[false; 3]; 3];
    for i in 0..3 {
        reach[i][i] = true;
        for j in 0..3 {
            if m[(i, j)] != 0.0 {
                reach[i][j] = true;
            }
        }
    }
    for k in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                reach[i][j] |= reach[i][k] && reach[k][j];
            }
        }
    }
    let mut seen = [false; 3];
    let mut out = Vec::new();
    for i in 0..3 {
        if seen[i] {
            continue;
        }
        let comp: Vec<usize> = (0..3).filter(|&j| reach[i][j] && reach[j][i]).collect();
        for &j in &comp {
            seen[j] = true;
        }
        out.push(comp);
    }
    out
}

const SQUARINGS: usize = 200;

/// Perron root of an irreducible nonnegative block. The power iteration on
/// the primitive matrix `block + I` is accelerated by repeated squaring, and
/// the root is read off the Collatz-Wielandt bracket of the limit vector.
fn block_radius(m: &Matrix3<f64>, idx: &[usize], rel_tol: f64) -> Result<f64> {
    if idx.len() == 1 {
        return Ok(m[(idx[0], idx[0])].abs());
    }
    let d = idx.len();
    let shifted = nalgebra::DMatrix::from_fn(d, d, |i, j| m[(idx[i], idx[j])] + if i == j { 1.0 } else { 0.0 });
    let scale = shifted.amax();
    let mut p = &shifted / scale;
    let bracket = |v: &nalgebra::DVector<f64>| {
        let w = &shifted * v;
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..d {
            let r = w[i] / v[i];
            lo = lo.min(r);
            hi = hi.max(r);
        }
        (lo, hi)
    };
    for _ in 0..SQUARINGS {
        let v = p.column_sum();
        if v.iter().all(|x| *x > 0.0) {
            let (lo, hi) = bracket(&v);
            let rho = 0.5 * (lo + hi) - 1.0;
            if hi - lo <= rel_tol * rho.abs().max(f64::MIN_POSITIVE) || hi - lo <= 8.0 * f64::EPSILON * hi {
                return Ok(rho.max(0.0));
            }
        }
        let sq = &p * &p;
        let norm = sq.amax();
        if !(norm > 0.0) || !norm.is_finite() {
            break;
        }
        p = sq / norm;
    }
    Err(Error::Numerical("power iteration did not converge".into()))
}

/// Spectral radius of a nonnegative 3x3 matrix.
pub fn spectral_radius(m: &Matrix3<f64>) -> Result<f64> {
    if m.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::Numerical("spectral radius needs a nonnegative matrix".into()));
    }
    let mut rho = 0.0f64;
    for comp in pattern_components(m) {
        rho = rho.max(block_radius(m, &comp, 1e-12)?);
    }
    Ok(rho)
}

/// Largest root modulus of `det(lambda I - M)`, from the closed-form
/// roots of the depressed cubic.
pub fn charpoly_radius(m: &Matrix3<f64>) -> f64 {
    let tr = m.trace();
    let minors = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)] + m[(0, 0)] * m[(2, 2)]
        - m[(0, 2)] * m[(2, 0)]
        + m[(1, 1)] * m[(2, 2)]
        - m[(1, 2)] * m[(2, 1)];
    let det = m.determinant();
    // lambda^3 + a lambda^2 + b lambda + c
    let (a, b, c) = (-tr, minors, -det);
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let shift = -a / 3.0;
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
    if disc > 0.0 {
        let s = disc.sqrt();
        let u = (-q / 2.0 + s).cbrt();
        let v = (-q / 2.0 - s).cbrt();
        let real = u + v + shift;
        let re = -(u + v) / 2.0 + shift;
        let im = (u - v) * 3f64.sqrt() / 2.0;
        real.abs().max(re.hypot(im))
    } else {
        let r = (-p / 3.0).max(0.0).sqrt();
        let arg = if r == 0.0 {
            0.0
        } else {
            (-q / (2.0 * r * r * r)).clamp(-1.0, 1.0)
        };
        let theta = arg.acos();
        (0..3)
            .map(|j| {
                (2.0 * r * ((theta + 2.0 * std::f64::consts::PI * j as f64) / 3.0).cos() + shift).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// The three step-size limits; the bound is their minimum.
pub fn step_size_terms(g: &GlobalBounds) -> Result<[f64; 3]> {
    g.validate()?;
    let n = g.n as f64;
    let (l, mu, eta) = (g.l, g.mu, g.eta);
    let (vp, kappa) = (g.varphi, g.kappa);
    let c2 = g.c * g.c;
    let t2 = g.tau * g.tau;
    let t1 = 2.0 / (n * eta * (l + mu));
    let t2v = mu * eta * (1.0 - c2) * (1.0 - t2)
        / (4.0
            * l
            * vp
            * ((n * mu * mu * eta * eta + 24.0 * l * l * vp * vp) * (eta + 16.0 * kappa * kappa)).sqrt());
    let t3 = mu * eta * (1.0 - t2)
        / (kappa
            * l
            * (2.0 * n * mu * mu * eta * eta * (n + 4.0) + 6.0 * l * l * vp * vp * (n * eta + 32.0)).sqrt());
    Ok([t1, t2v, t3])
}

pub fn step_size_bound(g: &GlobalBounds) -> Result<f64> {
    let t = step_size_terms(g)?;
    Ok(t[0].min(t[1]).min(t[2]))
}

/// `rhs - lhs` of one strict inequality `lhs < rhs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margin {
    pub lhs: f64,
    pub rhs: f64,
}

impl Margin {
    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }

    pub fn holds(&self) -> bool {
        self.lhs < self.rhs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaCertificate {
    pub delta: [f64; 3],
    /// Componentwise `M delta < delta` in expanded form.
    pub inequalities: [Margin; 3],
    /// Sufficient conditions after substituting `delta`.
    pub sufficient: [Margin; 2],
    /// Closed-form majorants of the two sufficient-condition coefficients.
    pub majorants: [Margin; 2],
    /// Direct check of `M delta < delta`.
    pub direct: [Margin; 3],
}

impl DeltaCertificate {
    pub fn holds(&self) -> bool {
        self.inequalities.iter().all(Margin::holds)
    }

    pub fn all_margins(&self) -> Vec<(&'static str, Margin)> {
        let names = [
            "ineq1", "ineq2", "ineq3", "sufficient1", "sufficient2", "majorant1", "majorant2",
            "direct1", "direct2", "direct3",
        ];
        names
            .into_iter()
            .zip(
                self.inequalities
                    .iter()
                    .chain(&self.sufficient)
                    .chain(&self.majorants)
                    .chain(&self.direct)
                    .copied(),
            )
            .collect()
    }
}

pub fn delta_certificate(sys: &CompositeSystem) -> Result<DeltaCertificate> {
    let [m1, m2, m3, m4, m5, m6, m7, m8] = sys.coeffs.m;
    if !(m7 > 0.0) || !(m1 > 0.0) {
        return Err(Error::Numerical(format!(
            "internal: certificate needs m1 > 0 and m7 > 0, got m1 = {m1}, m7 = {m7}"
        )));
    }
    let g = &sys.bounds;
    let alpha = sys.alpha;
    let a2 = alpha * alpha;
    let c2 = g.c * g.c;
    let t2 = g.tau * g.tau;
    let one_t = 1.0 - t2;
    let inner = m2 + 4.0 * m3 * m7 / one_t;
    let d1 = 2.0 / m1 * inner;
    let d3 = 4.0 * m7 / one_t;
    let delta = [d1, 1.0, d3];

    let inequalities = [
        Margin {
            lhs: (-m1 * d1 + m2 + m3 * d3) * alpha,
            rhs: 0.0,
        },
        Margin {
            lhs: (m4 * d1 + m4 + m5 * d3) * a2,
            rhs: (1.0 - c2) / 2.0,
        },
        Margin {
            lhs: (m6 * d1 + m6 + m8 * d3) * a2,
            rhs: one_t / 2.0 * d3 - m7,
        },
    ];
    let coef1 = m4 + 2.0 * m4 / m1 * inner + 4.0 * m5 * m7 / one_t;
    let coef2 = m6 / m7 + 2.0 * m6 / (m1 * m7) * inner + 4.0 * m8 / one_t;
    let sufficient = [
        Margin {
            lhs: coef1 * a2,
            rhs: (1.0 - c2) / 2.0,
        },
        Margin {
            lhs: coef2 * a2,
            rhs: 1.0,
        },
    ];
    let n = g.n as f64;
    let (l, mu, eta, vp, kappa) = (g.l, g.mu, g.eta, g.varphi, g.kappa);
    let maj1 = 8.0 * l * l * vp * vp * (n * mu * mu * eta * eta + 24.0 * l * l * vp * vp) * (eta + 16.0 * kappa * kappa)
        / (mu * mu * eta * eta * (1.0 - c2) * one_t * one_t);
    let maj2 = kappa * kappa * l * l
        * (2.0 * n * mu * mu * eta * eta * (n + 4.0) + 6.0 * l * l * vp * vp * (n * eta + 32.0))
        / (mu * mu * eta * eta * one_t * one_t);
    let majorants = [
        Margin { lhs: coef1, rhs: maj1 },
        Margin { lhs: coef2, rhs: maj2 },
    ];
    // (I - M) delta > 0 evaluated from the deficit matrix
    let dv = Vector3::new(d1, 1.0, d3);
    let slack = sys.deficit * dv;
    let direct = [0, 1, 2].map(|i| Margin {
        lhs: 0.0,
        rhs: slack[i],
    });
    Ok(DeltaCertificate {
        delta,
        inequalities,
        sufficient,
        majorants,
        direct,
    })
}

/// `(I - M)^{-1} b`.
pub fn steady_state_bound(sys: &CompositeSystem) -> Result<Vector3<f64>> {
    let rho = spectral_radius(&sys.m)?;
    if !(rho < 1.0) || !(sys.deficit[(0, 0)] > 0.0) {
        return Err(Error::BoundUndefined(rho));
    }
    let lu = sys.deficit.lu();
    let v = lu
        .solve(&sys.b)
        .ok_or_else(|| Error::Numerical("I - M(alpha) is singular".into()))?;
    // one step of iterative refinement
    let r = sys.b - sys.deficit * v;
    let v = v + lu.solve(&r).unwrap_or_else(Vector3::zeros);
    Ok(v)
}

/// One `(k, component)` slack entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlackEntry {
    pub k: usize,
    pub component: usize,
    pub slack: f64,
    pub allowance: f64,
}

impl SlackEntry {
    pub fn passes(&self) -> bool {
        self.slack >= -self.allowance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeCheck {
    pub entries: Vec<SlackEntry>,
    pub threshold: f64,
}

impl CompositeCheck {
    pub fn passed(&self) -> usize {
        self.entries.iter().filter(|e| e.passes()).count()
    }

    pub fn fraction(&self) -> f64 {
        if self.entries.is_empty() {
            1.0
        } else {
            self.passed() as f64 / self.entries.len() as f64
        }
    }

    pub fn passes(&self) -> bool {
        self.fraction() >= self.threshold
    }

    pub fn min_slack(&self, component: usize) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.component == component)
            .map(|e| e.slack)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "component", "slack", "allowance", "pass"])?;
        for e in &self.entries {
            w.write_record([
                e.k.to_string(),
                (e.component + 1).to_string(),
                e.slack.to_string(),
                e.allowance.to_string(),
                (e.passes() as u8).to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<slack csv>", e))?;
        Ok(())
    }
}

/// Slack `M V_k + b - V_{k+1}` over consecutive estimates. A pair passes
/// when the slack is at least `-sigmas` combined standard errors, plus a
/// rounding guard of `1e-12` relative to the magnitudes involved.
pub fn composite_relation_check(
    series: &[ErrorEstimate],
    sys: &CompositeSystem,
    sigmas: f64,
    threshold: f64,
) -> CompositeCheck {
    let mut entries = Vec::new();
    for w in series.windows(2) {
        let (cur, next) = (&w[0], &w[1]);
        if next.k != cur.k + 1 {
            continue;
        }
        let v = Vector3::from(cur.mean);
        let se = Vector3::from(cur.se);
        let pred = sys.m * v + sys.b;
        let pred_se = sys.m * se;
        for c in 0..3 {
            let combined = (next.se[c].powi(2) + pred_se[c].powi(2)).sqrt();
            let scale = pred[c].abs() + next.mean[c].abs();
            entries.push(SlackEntry {
                k: cur.k,
                component: c,
                slack: pred[c] - next.mean[c],
                allowance: sigmas * combined + 1e-12 * scale,
            });
        }
    }
    CompositeCheck { entries, threshold }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    pub(crate) fn sample_bounds(rng: &mut impl Rng) -> GlobalBounds {
        let n = rng.random_range(2..=20);
        let mu = rng.random_range(0.05..2.0);
        let kappa: f64 = rng.random_range(1.0..5.0);
        GlobalBounds {
            n,
            l: mu * rng.random_range(1.0..20.0),
            mu,
            sigma: rng.random_range(0.0..2.0),
            c: rng.random_range(0.05..0.999),
            tau: rng.random_range(0.05..0.999),
            eta: rng.random_range(0.01..1.0),
            psi: rng.random_range(0.0..=1.0) * n as f64 * (kappa * kappa - 1.0),
            kappa,
            varphi: rng.random_range(1.0..5.0),
        }
    }

    fn nalgebra_radius(m: &Matrix3<f64>) -> f64 {
        let d = DMatrix::from_iterator(3, 3, m.iter().cloned());
        d.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn bounds() -> GlobalBounds {
        GlobalBounds {
            n: 4,
            l: 2.0,
            mu: 0.5,
            sigma: 0.3,
            c: 0.9,
            tau: 0.8,
            eta: 0.25,
            psi: 3.0,
            kappa: 2.0,
            varphi: 1.5,
        }
    }

    #[test]
    fn zero_noise_gives_zero_b() {
        let g = GlobalBounds { sigma: 0.0, ..bounds() };
        let sys = build_composite(&g, 1e-3).unwrap();
        assert_eq!(sys.b, Vector3::zeros());
    }

    #[test]
    fn zero_step_reads_diagonal() {
        let g = bounds();
        let sys = build_composite(&g, 0.0).unwrap();
        assert_eq!(sys.m[(0, 0)], 1.0);
        assert_relative_eq!(sys.m[(1, 1)], (1.0 + 0.81) / 2.0);
        assert_relative_eq!(sys.m[(2, 2)], (1.0 + 0.64) / 2.0);
        assert_eq!(sys.m[(0, 1)], 0.0);
        assert_eq!(sys.m[(1, 0)], 0.0);
        assert_eq!(sys.m[(2, 1)], g.zeta());
    }

    #[test]
    fn template_substitution() {
        let g = bounds();
        let alpha = 0.01;
        let sys = build_composite(&g, alpha).unwrap();
        // hand-evaluated coefficient list
        let n = 4.0;
        let (l, mu, s2, c2, t2) = (2.0, 0.5, 0.09, 0.81, 0.64);
        let vp2 = 2.25;
        let nu = 4.0 * l * l * 4.0 * t2 / (1.0 - t2) + 2.0 * 3.0 * l * l;
        let zeta = 4.0 * vp2 * nu;
        let m = [
            n * mu / 2.0,
            3.0 * l * l * vp2 / mu,
            3.0 / (n * mu * 0.25),
            2.0 * n * l * l * vp2 * (1.0 + c2) / (1.0 - c2),
            (1.0 + c2) / (1.0 - c2),
            2.0 * n * l * l * vp2 * nu,
            zeta,
            nu,
        ];
        let expect = Matrix3::new(
            1.0 - m[0] * alpha,
            m[1] * alpha,
            m[2] * alpha,
            m[3] * alpha * alpha,
            (1.0 + c2) / 2.0 + m[3] * alpha * alpha,
            m[4] * alpha * alpha,
            m[5] * alpha * alpha,
            m[6] + m[5] * alpha * alpha,
            (1.0 + t2) / 2.0 + m[7] * alpha * alpha,
        );
        assert_relative_eq!(sys.m, expect, max_relative = 1e-13);
        let b = Vector3::new(
            1.5 * n * s2 * alpha * alpha,
            2.0 * (1.0 + c2) / (1.0 - c2) * s2 * alpha * alpha,
            4.0 * n * 3.0 * s2 + 2.0 * l * n * 3.0 * s2 * alpha + 2.0 * nu * s2 * alpha * alpha,
        );
        assert_relative_eq!(sys.b, b, max_relative = 1e-13);
        assert_relative_eq!(Matrix3::identity() - sys.m, sys.deficit, epsilon = 1e-14);
        assert!(sys.m.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn invalid_bounds_rejected() {
        assert!(build_composite(&GlobalBounds { c: 1.0, ..bounds() }, 0.1).is_err());
        assert!(build_composite(&GlobalBounds { tau: 1.2, ..bounds() }, 0.1).is_err());
        assert!(step_size_bound(&GlobalBounds { mu: 0.0, ..bounds() }).is_err());
    }

    #[test]
    fn spectral_radius_examples() {
        assert_relative_eq!(spectral_radius(&Matrix3::from_diagonal(&Vector3::new(0.5, 0.3, 0.1))).unwrap(), 0.5);
        assert_relative_eq!(spectral_radius(&Matrix3::identity()).unwrap(), 1.0);
        assert_eq!(spectral_radius(&Matrix3::zeros()).unwrap(), 0.0);
        let cyc = Matrix3::new(0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 8.0, 0.0, 0.0);
        assert_relative_eq!(spectral_radius(&cyc).unwrap(), 2.0, max_relative = 1e-10);
        assert!(spectral_radius(&-Matrix3::identity()).is_err());
    }

    #[test]
    fn dense_radius_matches_eigen_solver_tightly() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let m = Matrix3::from_fn(|_, _| rng.random_range(0.0..3.0));
            let expect = nalgebra_radius(&m);
            assert!((spectral_radius(&m).unwrap() - expect).abs() <= 1e-8 * expect);
            assert!((charpoly_radius(&m) - expect).abs() <= 1e-8 * expect);
        }
    }

    // sparse patterns include defective matrices (e.g. nilpotent ones), where
    // eigen solvers only resolve roots to about eps^(1/3) times the scale
    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn spectral_radius_matches_eigen_solver(
            v in proptest::collection::vec(0.0f64..3.0, 9),
            zeros in proptest::collection::vec(any::<bool>(), 9),
        ) {
            let m = Matrix3::from_iterator(v.iter().zip(&zeros).map(|(x, z)| if *z { 0.0 } else { *x }));
            let expect = nalgebra_radius(&m);
            let got = spectral_radius(&m).unwrap();
            let tol = 1e-4 * m.amax().max(1.0);
            prop_assert!((got - expect).abs() <= tol, "{got} vs {expect}");
            let cp = charpoly_radius(&m);
            prop_assert!((cp - expect).abs() <= tol, "charpoly {cp} vs {expect}");
        }
    }

    #[test]
    fn step_size_is_min_of_terms() {
        let g = bounds();
        let t = step_size_terms(&g).unwrap();
        let a = step_size_bound(&g).unwrap();
        assert!(a <= 2.0 / (4.0 * 0.25 * 2.5));
        assert_eq!(a, t.iter().cloned().fold(f64::INFINITY, f64::min));
        // independent evaluation of the three expressions
        let (n, l, mu, eta, vp, k) = (4.0f64, 2.0f64, 0.5f64, 0.25f64, 1.5f64, 2.0f64);
        let (c2, t2) = (0.81f64, 0.64f64);
        let e1 = 2.0 / (n * eta * (l + mu));
        let e2 = mu * eta * (1.0 - c2) * (1.0 - t2)
            / (4.0 * l * vp * ((n * mu.powi(2) * eta.powi(2) + 24.0 * l.powi(2) * vp.powi(2)) * (eta + 16.0 * k.powi(2))).sqrt());
        let e3 = mu * eta * (1.0 - t2)
            / (k * l * (2.0 * n * mu.powi(2) * eta.powi(2) * (n + 4.0) + 6.0 * l.powi(2) * vp.powi(2) * (n * eta + 32.0)).sqrt());
        assert_relative_eq!(t[0], e1, max_relative = 1e-14);
        assert_relative_eq!(t[1], e2, max_relative = 1e-14);
        assert_relative_eq!(t[2], e3, max_relative = 1e-14);
        let noisy = GlobalBounds { sigma: 5.0, ..g };
        assert_eq!(step_size_bound(&noisy).unwrap(), a);
    }

    #[test]
    fn certified_step_gives_contraction() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let g = sample_bounds(&mut rng);
            let alpha = step_size_bound(&g).unwrap();
            let sys = build_composite(&g, alpha).unwrap();
            let cert = delta_certificate(&sys).unwrap();
            assert!(cert.holds(), "{:?}", cert);
            assert!(cert.sufficient.iter().all(Margin::holds));
            assert!(cert.majorants.iter().all(Margin::holds));
            assert!(cert.direct.iter().all(Margin::holds));
            assert!(spectral_radius(&sys.m).unwrap() < 1.0);
            let v = steady_state_bound(&sys).unwrap();
            assert!(v.iter().all(|x| *x >= 0.0));
        }
    }

    #[test]
    fn large_step_fails_visibly() {
        let g = GlobalBounds { c: 0.99, tau: 0.99, ..bounds() };
        let alpha = 10.0 * step_size_bound(&g).unwrap();
        let cert = delta_certificate(&build_composite(&g, alpha).unwrap()).unwrap();
        let failing = cert.all_margins().iter().filter(|(_, m)| !m.holds()).count();
        assert!(failing >= 1);
    }

    #[test]
    fn degenerate_zeta_is_guarded() {
        let g = GlobalBounds { tau: 0.0, psi: 0.0, ..bounds() };
        let sys = build_composite(&g, 1e-4).unwrap();
        assert!(delta_certificate(&sys).is_err());
    }

    #[test]
    fn steady_state_examples() {
        let g = GlobalBounds { sigma: 0.0, ..bounds() };
        let sys = build_composite(&g, step_size_bound(&g).unwrap()).unwrap();
        assert_eq!(steady_state_bound(&sys).unwrap(), Vector3::zeros());

        let mut sys = build_composite(&bounds(), 1e-3).unwrap();
        sys.m = Matrix3::identity() * 0.5;
        sys.deficit = Matrix3::identity() * 0.5;
        sys.b = Vector3::new(1.0, 1.0, 1.0);
        assert_relative_eq!(steady_state_bound(&sys).unwrap(), Vector3::new(2.0, 2.0, 2.0));

        let g = bounds();
        let sys = build_composite(&g, step_size_bound(&g).unwrap()).unwrap();
        let v = steady_state_bound(&sys).unwrap();
        let r = sys.deficit * v - sys.b;
        assert!(r.norm() <= 1e-12 * sys.b.norm().max(1.0));
        assert!(v.iter().all(|x| *x >= 0.0));

        let big = build_composite(&g, 1.0).unwrap();
        assert!(matches!(steady_state_bound(&big), Err(Error::BoundUndefined(_))));
    }

    #[test]
    fn steady_state_is_monotone_in_noise() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let g = sample_bounds(&mut rng);
            let alpha = step_size_bound(&g).unwrap();
            let lo = steady_state_bound(&build_composite(&GlobalBounds { sigma: g.sigma / 2.0, ..g }, alpha).unwrap()).unwrap();
            let hi = steady_state_bound(&build_composite(&g, alpha).unwrap()).unwrap();
            for c in 0..3 {
                assert!(lo[c] <= hi[c]);
            }
        }
    }

    #[test]
    fn composite_check_at_fixed_point() {
        let g = bounds();
        let sys = build_composite(&g, step_size_bound(&g).unwrap()).unwrap();
        let v = steady_state_bound(&sys).unwrap();
        let series: Vec<ErrorEstimate> = (0..5)
            .map(|k| ErrorEstimate {
                k,
                mean: [v[0], v[1], v[2]],
                se: [0.0; 3],
            })
            .collect();
        let chk = composite_relation_check(&series, &sys, 3.0, 0.99);
        assert_eq!(chk.entries.len(), 12);
        for e in &chk.entries {
            assert!(e.slack.abs() <= 1e-9 * v.amax().max(1.0));
        }
        assert!(chk.passes());
        let mut buf = Vec::new();
        chk.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 13);
    }
}
