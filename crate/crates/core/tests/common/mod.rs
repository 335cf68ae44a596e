#![allow(dead_code)]

use msvdd::scalar::min_members;
use msvdd::{gram, solve_svdd, FeatureSpace, Gram, KernelSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform random points in `[-3, 3]^d`.
pub fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect())
        .collect()
}

/// Two blobs plus a few scattered points, which gives the search real work.
pub fn blobs(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| match i % 5 {
            0 | 1 => vec![-1.5 + rng.gen_range(-0.6..0.6), -1.0 + rng.gen_range(-0.6..0.6)],
            2 | 3 => vec![1.5 + rng.gen_range(-0.6..0.6), 1.0 + rng.gen_range(-0.6..0.6)],
            _ => vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)],
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub struct Instance {
    pub points: Vec<Vec<f64>>,
    pub kernel: KernelSpec<f64>,
    pub gram: Gram,
    pub p: usize,
    pub c: f64,
}

/// The oracle-equivalence instance family: n in {6, 8, 10}, d = 2,
/// p in {1, 2, 3}, C in {0.2, 0.5, 1}; linear kernel on even indices and
/// RBF (sigma^2 = 2) on odd ones. Draws that cannot satisfy the
/// cardinality requirement are redrawn.
pub fn oracle_instances(count: usize, seed: u64) -> Vec<Instance> {
    let mut r = rng(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let n = [6, 8, 10][r.gen_range(0..3)];
        let p = [1, 2, 3][r.gen_range(0..3)];
        let c = [0.2, 0.5, 1.0][r.gen_range(0..3)];
        if p * min_members(c) > n {
            continue;
        }
        let points = if out.len() % 3 == 0 {
            random_points(&mut r, n, 2)
        } else {
            blobs(&mut r, n)
        };
        let kernel = if out.len() % 2 == 0 {
            KernelSpec::Linear
        } else {
            KernelSpec::rbf(2.0).unwrap()
        };
        let gram = gram(&kernel, &points).unwrap();
        out.push(Instance {
            points,
            kernel,
            gram,
            p,
            c,
        });
    }
    out
}

/// Best objective over all `p^n` labelings with every sphere holding at
/// least `need` points, each sphere solved with the plain single-sphere
/// solver. Sphere values are memoized per subset.
pub fn enumerate_optimum<S: FeatureSpace<f64>>(space: &S, p: usize, c: f64, need: usize) -> Option<(f64, Vec<usize>)> {
    let n = space.len();
    assert!(n <= 16, "enumeration oracle is for tiny instances");
    let mut memo = vec![f64::NAN; 1 << n];
    for mask in 1usize..(1 << n) {
        let members: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        if members.len() >= need && c * members.len() as f64 >= 1.0 - 1e-12 {
            memo[mask] = solve_svdd(space, &members, c).unwrap().objective;
        }
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut labels = vec![0usize; n];
    loop {
        let mut masks = vec![0usize; p];
        for (i, &l) in labels.iter().enumerate() {
            masks[l] |= 1 << i;
        }
        if masks.iter().all(|&m| m != 0 && !memo[m].is_nan()) {
            let mut parts: Vec<f64> = masks.iter().map(|&m| memo[m]).collect();
            parts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let total: f64 = parts.iter().sum();
            if best.as_ref().is_none_or(|(b, _)| total < *b) {
                best = Some((total, labels.clone()));
            }
        }
        // Next labeling in base p.
        let mut k = 0;
        loop {
            if k == n {
                return best;
            }
            labels[k] += 1;
            if labels[k] < p {
                break;
            }
            labels[k] = 0;
            k += 1;
        }
    }
}

pub fn all_permutations(p: usize) -> Vec<Vec<usize>> {
    if p == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for perm in all_permutations(p - 1) {
        for pos in 0..=perm.len() {
            let mut q = perm.clone();
            q.insert(pos, p - 1);
            out.push(q);
        }
    }
    out
}
