//! Invariant suite run by `kscl selfcheck`.
//!
//! Every suite draws its cases from a fixed seed, so verdicts are
//! reproducible; only the recorded timings vary between runs.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::gradcheck::{central_difference, max_relative_error};
use crate::linalg::{sym_eig, Matrix};
use crate::loss::{
    kshot_loss_and_grad_raw, kshot_probabilities, oneshot_probabilities, ContrastiveScores,
};
use crate::rng::stream;
use crate::scalar::{dot, norm};
use crate::subspace::{
    build_subspace, project, projection_length, Embedding, InstanceSubspace, TruncationPolicy,
};

const SEED: u64 = 0x5e1f_c4ec;

/// Deliberate defects for testing that the suite notices them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Negates every projection onto a subspace.
    ProjectionSign,
}

impl FromStr for Fault {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "projection-sign" => Ok(Fault::ProjectionSign),
            other => Err(format!("unknown fault `{other}` (known: projection-sign)")),
        }
    }
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fault::ProjectionSign => f.write_str("projection-sign"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub name: &'static str,
    pub invariant: &'static str,
    pub passed: bool,
    pub cases: usize,
    pub failures: usize,
    /// Largest violation observed, in the units of `tolerance`.
    pub worst: f64,
    pub tolerance: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfcheckReport {
    pub passed: bool,
    pub fault: Option<String>,
    pub suites: Vec<SuiteResult>,
}

impl SelfcheckReport {
    pub fn failed_invariants(&self) -> Vec<&'static str> {
        self.suites
            .iter()
            .filter(|s| !s.passed)
            .map(|s| s.invariant)
            .collect()
    }
}

struct Tally {
    cases: usize,
    failures: usize,
    worst: f64,
    tolerance: f64,
}

impl Tally {
    fn new(tolerance: f64) -> Self {
        Self {
            cases: 0,
            failures: 0,
            worst: 0.0,
            tolerance,
        }
    }

    fn record(&mut self, error: f64) {
        self.cases += 1;
        // NaN counts as a failure.
        if !(error <= self.tolerance) {
            self.failures += 1;
        }
        if error.is_nan() || error > self.worst {
            self.worst = error;
        }
    }
}

type Projector = fn(&InstanceSubspace<f64>, &[f64]) -> Vec<f64>;

/// Name, invariant label, and the suite itself.
type Suite = (&'static str, &'static str, Box<dyn Fn() -> Tally>);

fn honest_projection(s: &InstanceSubspace<f64>, v: &[f64]) -> Vec<f64> {
    project(s, v).expect("dimensions agree")
}

fn negated_projection(s: &InstanceSubspace<f64>, v: &[f64]) -> Vec<f64> {
    honest_projection(s, v).into_iter().map(|x| -x).collect()
}

pub fn run_selfcheck(fault: Option<Fault>) -> SelfcheckReport {
    let projector: Projector = match fault {
        Some(Fault::ProjectionSign) => negated_projection,
        None => honest_projection,
    };
    let suites: [Suite; 5] = [
        (
            "eigensolver",
            "eigen-residual-and-orthonormality",
            Box::new(eigensolver),
        ),
        (
            "pythagoras",
            "projection-pythagoras-and-idempotence",
            Box::new(move || pythagoras(projector)),
        ),
        (
            "least-squares",
            "projection-equals-least-squares",
            Box::new(move || least_squares(projector)),
        ),
        (
            "k1-reduction",
            "k1-equals-abs-cosine-oneshot",
            Box::new(k1_reduction),
        ),
        (
            "gradient",
            "query-gradient-matches-finite-difference",
            Box::new(gradient),
        ),
    ];
    let suites: Vec<SuiteResult> = suites
        .iter()
        .map(|(name, invariant, run)| {
            let started = Instant::now();
            let t = run();
            SuiteResult {
                name,
                invariant,
                passed: t.failures == 0 && t.cases > 0,
                cases: t.cases,
                failures: t.failures,
                worst: t.worst,
                tolerance: t.tolerance,
                seconds: started.elapsed().as_secs_f64(),
            }
        })
        .collect();
    SelfcheckReport {
        passed: suites.iter().all(|s| s.passed),
        fault: fault.map(|f| f.to_string()),
        suites,
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn unit(rng: &mut ChaCha8Rng, n: usize) -> Embedding<f64> {
    Embedding::normalize(gaussian(rng, n)).expect("gaussian vector is nonzero")
}

fn random_keys(rng: &mut ChaCha8Rng, k: usize, d: usize) -> Vec<Embedding<f64>> {
    (0..k).map(|_| unit(rng, d)).collect()
}

fn eigensolver() -> Tally {
    let mut rng = stream(SEED, "eigensolver", &[]);
    let mut t = Tally::new(1e-9);
    for _ in 0..200 {
        let n = rng.random_range(1..=12);
        let b = Matrix::from_row_major(n, n, gaussian(&mut rng, n * n)).expect("finite");
        let a = b.transpose().matmul(&b).expect("square");
        let scale = a.frobenius_norm().max(1.0);
        let Ok(eig) = sym_eig(&a) else {
            t.record(f64::INFINITY);
            continue;
        };
        let mut worst = 0.0f64;
        for i in 0..n {
            let u = eig.eigenvector(i);
            let au = a.matvec(&u).expect("shape");
            let r: f64 = au
                .iter()
                .zip(&u)
                .map(|(x, y)| (x - eig.eigenvalues[i] * y).powi(2))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(r / scale);
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(&u, &eig.eigenvector(j)) - target).abs());
            }
        }
        t.record(worst);
    }
    t
}

fn random_subspace(
    rng: &mut ChaCha8Rng,
    full: bool,
) -> (InstanceSubspace<f64>, Vec<Embedding<f64>>, usize) {
    let d = rng.random_range(4..=24);
    let k = rng.random_range(1..=6.min(d));
    let keys = random_keys(rng, k, d);
    let policy = if full {
        TruncationPolicy::full()
    } else {
        TruncationPolicy::with_rho(rng.random_range(0.05..=1.0)).expect("valid rho")
    };
    let s = build_subspace(&keys, &policy, 0).expect("random keys are generic");
    (s, keys, d)
}

fn pythagoras(projector: Projector) -> Tally {
    let mut rng = stream(SEED, "pythagoras", &[]);
    let mut t = Tally::new(1e-10);
    for _ in 0..200 {
        let (s, _, d) = random_subspace(&mut rng, false);
        let v = unit(&mut rng, d);
        let p = projector(&s, v.as_slice());
        let residual: Vec<f64> = v.as_slice().iter().zip(&p).map(|(a, b)| a - b).collect();
        let pythagoras = (dot(&p, &p) + dot(&residual, &residual) - 1.0).abs();
        let pp = projector(&s, &p);
        let idempotence = norm(&pp.iter().zip(&p).map(|(a, b)| a - b).collect::<Vec<_>>());
        let length = (norm(&p) - projection_length(&s, &v).expect("unit")).abs();
        t.record(pythagoras.max(idempotence).max(length));
    }
    t
}

/// Projection onto span{keys} via the normal equations `(VᵀV) c = Vᵀ v`.
fn normal_equations(keys: &[Embedding<f64>], v: &[f64]) -> Vec<f64> {
    let k = keys.len();
    let mut a: Vec<Vec<f64>> = keys
        .iter()
        .map(|ki| {
            let mut row: Vec<f64> = keys
                .iter()
                .map(|kj| dot(ki.as_slice(), kj.as_slice()))
                .collect();
            row.push(dot(ki.as_slice(), v));
            row
        })
        .collect();
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("nonempty");
        a.swap(col, pivot);
        for r in 0..k {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=k {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    let coeffs: Vec<f64> = (0..k).map(|i| a[i][k] / a[i][i]).collect();
    let mut out = vec![0.0; v.len()];
    for (c, key) in coeffs.iter().zip(keys) {
        for (o, x) in out.iter_mut().zip(key.as_slice()) {
            *o += c * x;
        }
    }
    out
}

fn least_squares(projector: Projector) -> Tally {
    let mut rng = stream(SEED, "least-squares", &[]);
    let mut t = Tally::new(1e-8);
    for _ in 0..100 {
        let (s, keys, d) = random_subspace(&mut rng, true);
        let v = gaussian(&mut rng, d);
        let p = projector(&s, &v);
        let oracle = normal_equations(&keys, &v);
        let err = p
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        t.record(err / norm(&v).max(1.0));
    }
    t
}

fn k1_reduction() -> Tally {
    let mut rng = stream(SEED, "k1-reduction", &[]);
    let mut t = Tally::new(1e-12);
    for _ in 0..200 {
        let d = rng.random_range(2..=16);
        let n = rng.random_range(1..=8);
        let tau = rng.random_range(0.05..=1.0);
        let q = unit(&mut rng, d);
        let keys = random_keys(&mut rng, n, d);
        let subspaces: Vec<InstanceSubspace<f64>> = keys
            .iter()
            .map(|k| {
                build_subspace(std::slice::from_ref(k), &TruncationPolicy::full(), 0)
                    .expect("unit key")
            })
            .collect();
        let lengths = subspaces
            .iter()
            .map(|s| projection_length(s, &q).expect("dims"))
            .collect();
        let kshot = kshot_probabilities(&ContrastiveScores::new(0, lengths, tau).expect("valid"));
        let flipped: Vec<Embedding<f64>> = keys
            .iter()
            .map(|k| {
                let sign = dot(q.as_slice(), k.as_slice()).signum();
                Embedding::normalize(k.as_slice().iter().map(|x| sign * x).collect()).expect("unit")
            })
            .collect();
        let oneshot = oneshot_probabilities(&q, &flipped, tau).expect("valid");
        t.record(
            kshot
                .iter()
                .zip(&oneshot)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        );
    }
    t
}

fn gradient() -> Tally {
    let mut rng = stream(SEED, "gradient", &[]);
    let mut t = Tally::new(1e-4);
    let (d, n, k) = (16, 8, 3);
    for _ in 0..50 {
        let candidates: Vec<InstanceSubspace<f64>> = (0..n)
            .map(|_| {
                let policy =
                    TruncationPolicy::with_rho(rng.random_range(0.3..=1.0)).expect("valid");
                build_subspace(&random_keys(&mut rng, k, d), &policy, 0).expect("generic keys")
            })
            .collect();
        let q = unit(&mut rng, d);
        let pos = rng.random_range(0..n);
        let tau = 0.2;
        let analytic = kshot_loss_and_grad_raw(q.as_slice(), &candidates, pos, tau)
            .expect("valid")
            .grad_wrt_query;
        let numeric = central_difference(
            |x| {
                kshot_loss_and_grad_raw(x, &candidates, pos, tau)
                    .expect("valid")
                    .loss
            },
            q.as_slice(),
            1e-6,
        );
        t.record(max_relative_error(&analytic, &numeric));
    }
    t
}
