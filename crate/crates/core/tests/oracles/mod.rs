//! Reference implementations written straight from the definitions, shared
//! by the unit-level tests here and the acceptance suite of the CLI crate.
#![allow(dead_code)]

use mavit_core::attention::{MdaWeights, OutProj, QkvProj};
use mavit_core::graph::softmax;
use mavit_core::metrics::{apcer_bpcer, bpcer_at, eer_threshold, hter, threshold_candidates, tpr_at_fpr, ScoreSet};
use mavit_core::{Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Minimal-cardinality subset with mass >= lambda; among subsets of that
/// size the one whose members, listed by descending weight with lower
/// index first, is lexicographically heaviest.
pub fn brute_force_top_mass(w: &[f64], lambda: f64) -> Vec<bool> {
    let n = w.len();
    if lambda >= 1.0 {
        return vec![true; n];
    }
    let key = |mask: u32| -> Vec<(f64, std::cmp::Reverse<usize>)> {
        let mut k: Vec<_> = (0..n)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| (w[i], std::cmp::Reverse(i)))
            .collect();
        k.sort_by(|a, b| b.partial_cmp(a).unwrap());
        k
    };
    for size in 0..=n {
        let mut best: Option<u32> = None;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != size {
                continue;
            }
            // members accumulated in descending order, as the greedy sum is
            let mass: f64 = key(mask).iter().map(|(v, _)| v).sum();
            if mass < lambda {
                continue;
            }
            best = match best {
                Some(b) if key(b) >= key(mask) => Some(b),
                _ => Some(mask),
            };
        }
        if let Some(b) = best {
            return (0..n).map(|i| b & (1 << i) != 0).collect();
        }
    }
    vec![true; n]
}

pub fn survivor_oracle(weights: &[f64], lambda: f64) -> Vec<bool> {
    let mut row = brute_force_top_mass(weights, lambda);
    if row.iter().all(|&b| b) {
        let mut least = 0;
        for i in 1..weights.len() {
            if weights[i] <= weights[least] {
                least = i;
            }
        }
        row[least] = false;
    }
    row
}

/// Random relevance row of length 1..=10 on a coarse grid often enough
/// that ties occur.
pub fn random_row(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = rng.gen_range(1..=10);
    (0..n)
        .map(|_| {
            if rng.gen_bool(0.3) {
                rng.gen_range(-2i32..=2) as f64
            } else {
                rng.gen_range(-3.0..3.0)
            }
        })
        .collect()
}

pub struct Fixture {
    pub g: Graph,
    pub z: Var,
    pub w: MdaWeights,
    pub heads: usize,
}

/// Random `(n + 2) x d` token sequence and random attention weights.
pub fn fixture(seed: u64, n: usize, d: usize, heads: usize) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Graph::new();
    let mut rand =
        |g: &mut Graph, r: usize, c: usize| g.leaf(Tensor::from_fn(vec![r, c], |_| rng.gen_range(-1.0..1.0)));
    let z = rand(&mut g, n + 2, d);
    let w = MdaWeights {
        cls: QkvProj {
            wq: rand(&mut g, d, d),
            wk: rand(&mut g, d, d),
            wv: rand(&mut g, d, d),
        },
        wq_mod: rand(&mut g, d, d),
        wk_mod: rand(&mut g, d, d),
        out: OutProj {
            w: rand(&mut g, d, d),
            b: rand(&mut g, 1, d),
        },
    };
    Fixture { g, z, w, heads }
}

pub fn dense(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

pub fn mm(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (m, k, n) = (a.len(), b.len(), b[0].len());
    (0..m)
        .map(|i| (0..n).map(|j| (0..k).map(|p| a[i][p] * b[p][j]).sum()).collect())
        .collect()
}

/// CLS update of a fixture's sequence with the masked patch columns removed
/// before an ordinary softmax attention. `masked(h, j)` says whether patch
/// `j` is masked for head `h`.
pub fn column_deletion(f: &Fixture, masked: impl Fn(usize, usize) -> bool) -> Vec<f64> {
    let z = dense(f.g.value(f.z));
    let p = |v: Var| dense(f.g.value(v));
    let (wq, wk, wv) = (p(f.w.cls.wq), p(f.w.cls.wk), p(f.w.cls.wv));
    let (wo, bo) = (p(f.w.out.w), p(f.w.out.b));
    let (n, d, heads) = (z.len() - 2, z[0].len(), f.heads);
    let dh = d / heads;
    let q = mm(&z[0..1], &wq);
    let k = mm(&z[2..], &wk);
    let v = mm(&z[2..], &wv);
    let mut cat = vec![0.0; d];
    for h in 0..heads {
        let kept: Vec<usize> = (0..n).filter(|&j| !masked(h, j)).collect();
        let scores: Vec<f64> = kept
            .iter()
            .map(|&j| (0..dh).map(|c| q[0][h * dh + c] * k[j][h * dh + c]).sum::<f64>() / (dh as f64).sqrt())
            .collect();
        let a = softmax(&scores);
        for c in 0..dh {
            cat[h * dh + c] = kept.iter().zip(&a).map(|(&j, w)| w * v[j][h * dh + c]).sum();
        }
    }
    (0..d)
        .map(|j| (0..d).map(|i| cat[i] * wo[i][j]).sum::<f64>() + bo[0][j])
        .collect()
}

/// Plain counting at one threshold: (accepted attacks, rejected bona fide).
pub fn count(pairs: &[(f64, u8)], t: f64) -> (f64, f64) {
    let attacks: Vec<f64> = pairs.iter().filter(|p| p.1 == 0).map(|p| p.0).collect();
    let bona: Vec<f64> = pairs.iter().filter(|p| p.1 == 1).map(|p| p.0).collect();
    let accepted_attacks = attacks.iter().filter(|&&s| s >= t).count();
    let rejected_bona = bona.iter().filter(|&&s| s < t).count();
    (
        accepted_attacks as f64 / attacks.len() as f64,
        rejected_bona as f64 / bona.len() as f64,
    )
}

/// Every threshold that can change a decision: each distinct score's
/// midpoint to the next one, plus both infinities.
pub fn sweep(pairs: &[(f64, u8)]) -> Vec<f64> {
    let mut s: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    s.dedup();
    let mut out = vec![f64::NEG_INFINITY];
    for i in 1..s.len() {
        out.push((s[i - 1] + s[i]) / 2.0);
    }
    out.push(f64::INFINITY);
    out
}

pub fn random_pairs(rng: &mut ChaCha8Rng, n: usize, coarse: bool) -> Vec<(f64, u8)> {
    let mut pairs: Vec<(f64, u8)> = (0..n)
        .map(|i| {
            let y = u8::from(i % 2 == 0 || rng.gen_bool(0.3));
            let s = if coarse {
                rng.gen_range(0..8) as f64 / 8.0
            } else {
                (rng.gen_range(0.0..1.0) + 0.3 * f64::from(y)).min(1.0)
            };
            (s, y)
        })
        .collect();
    pairs[0].1 = 0;
    pairs[1].1 = 1;
    pairs
}

/// Compares every metric on `pairs` with counting and sweeping; the first
/// disagreement is returned.
pub fn metric_mismatch(pairs: &[(f64, u8)]) -> Option<String> {
    let set = ScoreSet::from_pairs(pairs).unwrap();
    let cands = sweep(pairs);
    if threshold_candidates(&set) != cands {
        return Some("threshold candidates".into());
    }
    for &t in cands.iter().chain(&[0.0, 0.25, 0.5, 1.0]) {
        let (a, b) = count(pairs, t);
        if apcer_bpcer(&set, t).unwrap() != (a, b) {
            return Some(format!("apcer/bpcer at {t}"));
        }
        if hter(&set, t).unwrap() != (a + b) / 2.0 {
            return Some(format!("hter at {t}"));
        }
    }

    let mut eer_best = (f64::INFINITY, 0.0, 0.0);
    for &t in &cands {
        let (far, frr) = count(pairs, t);
        if (far - frr).abs() < eer_best.0 {
            eer_best = ((far - frr).abs(), t, (far + frr) / 2.0);
        }
    }
    if eer_threshold(&set).unwrap() != (eer_best.1, eer_best.2) {
        return Some("eer".into());
    }

    for target in [0.0, 0.01, 0.1, 0.3, 1.0] {
        let best = cands
            .iter()
            .copied()
            .filter(|&t| count(pairs, t).1 <= target)
            .fold(f64::NEG_INFINITY, f64::max);
        if bpcer_at(&set, target).unwrap() != best {
            return Some(format!("bpcer_at {target}"));
        }
    }

    for target in [1e-4, 0.05, 0.2] {
        let t = cands.iter().copied().find(|&t| count(pairs, t).0 <= target).unwrap();
        let expect = if t == f64::INFINITY {
            0.0
        } else {
            1.0 - count(pairs, t).1
        };
        if tpr_at_fpr(&set, target).unwrap() != expect {
            return Some(format!("tpr_at_fpr {target}"));
        }
    }
    None
}
