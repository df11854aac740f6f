//! Shared test oracles: a density-matrix model of purification and swapping,
//! random topologies, and brute-force routing.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use repeater_core::calibration::{CalibrationEntry, CalibrationTable};
use repeater_core::model::{enumerate_paths, LinkSpec, Path, Topology};
use repeater_core::routing::{compare_routes, path_cost, CostMetric};
use repeater_core::link::LinkModelParams;

/// Dense real matrix, row-major.
#[derive(Clone, Debug)]
pub struct Mat {
    pub n: usize,
    pub d: Vec<f64>,
}

impl Mat {
    pub fn zeros(n: usize) -> Self {
        Self { n, d: vec![0.0; n * n] }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn kron(&self, o: &Mat) -> Mat {
        let n = self.n * o.n;
        let mut m = Mat::zeros(n);
        for i in 0..self.n {
            for j in 0..self.n {
                for k in 0..o.n {
                    for l in 0..o.n {
                        m.d[(i * o.n + k) * n + j * o.n + l] = self.at(i, j) * o.at(k, l);
                    }
                }
            }
        }
        m
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.at(i, i)).sum()
    }

    /// `P rho P^T` for a permutation of basis states.
    pub fn permute(&self, perm: impl Fn(usize) -> usize) -> Mat {
        let mut m = Mat::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                m.d[perm(i) * self.n + perm(j)] = self.at(i, j);
            }
        }
        m
    }
}

/// |Phi+> on two qubits.
pub fn phi_plus() -> [f64; 4] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [s, 0.0, 0.0, s]
}

pub fn bell_states() -> [[f64; 4]; 4] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [
        [s, 0.0, 0.0, s],
        [s, 0.0, 0.0, -s],
        [0.0, s, s, 0.0],
        [0.0, s, -s, 0.0],
    ]
}

pub fn werner(f: f64) -> Mat {
    let p = phi_plus();
    let mut m = Mat::zeros(4);
    for i in 0..4 {
        for j in 0..4 {
            let proj = p[i] * p[j];
            let id = if i == j { 1.0 } else { 0.0 };
            m.d[i * 4 + j] = f * proj + (1.0 - f) / 3.0 * (id - proj);
        }
    }
    m
}

pub fn overlap(rho: &Mat, v: &[f64; 4]) -> f64 {
    let mut s = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            s += v[i] * rho.at(i, j) * v[j];
        }
    }
    s
}

fn bit(x: usize, q: usize, nq: usize) -> usize {
    (x >> (nq - 1 - q)) & 1
}

fn cnot(control: usize, target: usize, nq: usize) -> impl Fn(usize) -> usize {
    move |x| {
        if bit(x, control, nq) == 1 {
            x ^ (1 << (nq - 1 - target))
        } else {
            x
        }
    }
}

/// Bilateral CNOT purification of pairs `(A1,B1)` (kept) and `(A2,B2)`
/// (measured). Returns success probability and kept-pair fidelity.
pub fn dm_purify(f1: f64, f2: f64) -> (f64, f64) {
    // qubit order A1 B1 A2 B2
    let rho = werner(f1).kron(&werner(f2));
    let rho = rho.permute(cnot(0, 2, 4)).permute(cnot(1, 3, 4));
    let mut kept = Mat::zeros(4);
    for i in 0..16 {
        for j in 0..16 {
            let (a2i, b2i) = (bit(i, 2, 4), bit(i, 3, 4));
            let (a2j, b2j) = (bit(j, 2, 4), bit(j, 3, 4));
            if a2i != b2i || (a2i, b2i) != (a2j, b2j) {
                continue;
            }
            kept.d[(i >> 2) * 4 + (j >> 2)] += rho.at(i, j);
        }
    }
    let p = kept.trace();
    let f = overlap(&kept, &phi_plus()) / p;
    (p, f)
}

/// Pauli on the second qubit of a pair: 0 = I, 1 = X, 2 = Z, 3 = XZ.
fn correct(rho: &Mat, pauli: usize) -> Mat {
    let u = |x: usize| -> (usize, f64) {
        let c = x & 1;
        let mut y = x;
        let mut sign = 1.0;
        if (pauli == 2 || pauli == 3) && c == 1 {
            sign = -1.0;
        }
        if pauli == 1 || pauli == 3 {
            y ^= 1;
        }
        (y, sign)
    };
    let mut m = Mat::zeros(4);
    for i in 0..4 {
        for j in 0..4 {
            let (ui, si) = u(i);
            let (uj, sj) = u(j);
            m.d[ui * 4 + uj] += si * sj * rho.at(i, j);
        }
    }
    m
}

/// Bell measurement on the middle qubits of `(A,B1)` and `(B2,C)`, followed by
/// the Pauli correction on `C` that restores |Phi+> for perfect inputs.
pub fn dm_swap(f1: f64, f2: f64) -> f64 {
    let outcome_states = |f1: f64, f2: f64| -> Vec<Mat> {
        // qubit order A B1 B2 C
        let rho = werner(f1).kron(&werner(f2));
        bell_states()
            .iter()
            .map(|b| {
                let mut m = Mat::zeros(4);
                for i in 0..16 {
                    for j in 0..16 {
                        let (ai, ci) = (bit(i, 0, 4), bit(i, 3, 4));
                        let (aj, cj) = (bit(j, 0, 4), bit(j, 3, 4));
                        let mi = (bit(i, 1, 4) << 1) | bit(i, 2, 4);
                        let mj = (bit(j, 1, 4) << 1) | bit(j, 2, 4);
                        m.d[(ai * 2 + ci) * 4 + aj * 2 + cj] += b[mi] * rho.at(i, j) * b[mj];
                    }
                }
                m
            })
            .collect()
    };
    let perfect = outcome_states(1.0, 1.0);
    let fixes: Vec<usize> = perfect
        .iter()
        .map(|m| {
            (0..4)
                .max_by(|&x, &y| {
                    overlap(&correct(m, x), &phi_plus()).total_cmp(&overlap(&correct(m, y), &phi_plus()))
                })
                .unwrap()
        })
        .collect();
    let noisy = outcome_states(f1, f2);
    noisy
        .iter()
        .zip(&fixes)
        .map(|(m, &p)| overlap(&correct(m, p), &phi_plus()))
        .sum()
}

/// Random topology with `n` nodes named `n0..`, bidirectional links with
/// random loss, some unusable.
pub fn random_topology(rng: &mut ChaCha8Rng, n: usize) -> Topology {
    let mut t = Topology::new();
    for i in 0..n {
        t.add_node(format!("n{i}"));
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(0.45) {
                // mostly usable losses, occasionally past the cutoff
                let loss = if rng.gen_bool(0.1) { 6.0 } else { 3.0 + 1.5 * rng.gen::<f64>() };
                let len = 10.0 + 20.0 * rng.gen::<f64>();
                t.add_link(LinkSpec::new(format!("n{i}"), format!("n{j}"), loss, len));
                t.add_link(LinkSpec::new(format!("n{j}"), format!("n{i}"), loss, len));
            }
        }
    }
    t
}

/// Synthetic calibration with one entry per link key.
pub fn random_calibration(rng: &mut ChaCha8Rng, t: &Topology) -> CalibrationTable {
    CalibrationTable::new(
        t.links
            .iter()
            .map(|l| {
                let tput = 20.0 + 300.0 * rng.gen::<f64>();
                CalibrationEntry {
                    link: l.key(),
                    loss_db: l.loss_db,
                    pulse_pt: 100.0 + 1000.0 * rng.gen::<f64>(),
                    meas_pt: 100.0 + 1000.0 * rng.gen::<f64>(),
                    throughput: tput,
                    bellgent_s: 1.0 / tput,
                    throughput_sd: 1.0,
                }
            })
            .collect(),
    )
}

/// Exhaustive route search with the same tie-break as the router.
pub fn brute_force_route(
    t: &Topology,
    src: &str,
    dst: &str,
    metric: CostMetric,
    cal: &CalibrationTable,
    params: &LinkModelParams,
) -> Option<(Path, f64)> {
    let mut usable = t.clone();
    usable.links.retain(|l| params.is_usable(l));
    let paths = enumerate_paths(&usable, src, dst, t.nodes.len()).ok()?;
    let mut best: Option<(Path, f64)> = None;
    for p in paths {
        let c = path_cost(&p, metric, cal).ok()?;
        let better = match &best {
            None => true,
            Some((bp, bc)) => {
                compare_routes((c, &p.nodes()), (*bc, &bp.nodes())) == std::cmp::Ordering::Less
            }
        };
        if better {
            best = Some((p, c));
        }
    }
    best
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
