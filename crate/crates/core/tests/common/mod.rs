#![allow(dead_code)]

use std::collections::BTreeSet;

use filtermax::space::{FilteredSpace, PointFn};
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, LogNormal};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Every map `Ω -> {i..=L} ∪ {∞}` whose level sets `{τ = j}` are unions of
/// level-`j` atoms. Runs over all `(L - i + 2)^n` assignments.
pub fn brute_force_stopping_times(space: &FilteredSpace, i: usize) -> BTreeSet<Vec<Option<usize>>> {
    let n = space.n_points();
    let l = space.depth();
    let radix = l - i + 2;
    // owner[j][x] is the level-j atom holding x
    let owner: Vec<Vec<usize>> = (0..=l)
        .map(|j| {
            let mut o = vec![0; n];
            for (a, atom) in space.level(j).iter().enumerate() {
                for x in atom.iter() {
                    o[x] = a;
                }
            }
            o
        })
        .collect();
    let mut out = BTreeSet::new();
    let mut digits = vec![0_usize; n];
    loop {
        let tau: Vec<Option<usize>> = digits.iter().map(|&d| (d + 1 < radix).then_some(i + d)).collect();
        let adapted = (0..n).all(|x| match tau[x] {
            None => true,
            Some(j) => (0..n).all(|y| owner[j][y] != owner[j][x] || tau[y] == Some(j)),
        });
        if adapted {
            out.insert(tau);
        }
        let mut k = 0;
        loop {
            if k == n {
                return out;
            }
            digits[k] += 1;
            if digits[k] < radix {
                break;
            }
            digits[k] = 0;
            k += 1;
        }
    }
}

/// All towers of partitions with at most `max_atoms` atoms in total, up to
/// relabeling of points: every atom of level `t` splits into one or more
/// atoms of level `t + 1`.
pub fn all_shapes(max_atoms: usize) -> Vec<FilteredSpace> {
    let mut out = Vec::new();
    // children[t][a] is the number of children of atom a on level t
    fn extend(widths: &mut Vec<usize>, children: &mut Vec<Vec<usize>>, used: usize, max: usize, out: &mut Vec<FilteredSpace>) {
        out.push(build(widths, children));
        let w = *widths.last().unwrap();
        let room = max - used;
        if room < w {
            return;
        }
        for total in w..=room {
            for split in compositions(total, w) {
                widths.push(total);
                children.push(split);
                extend(widths, children, used + total, max, out);
                widths.pop();
                children.pop();
            }
        }
    }
    fn build(widths: &[usize], children: &[Vec<usize>]) -> FilteredSpace {
        let depth = widths.len() - 1;
        let n = widths[depth];
        let mut levels = vec![Vec::new(); depth + 1];
        levels[depth] = (0..n).map(|x| vec![x]).collect::<Vec<_>>();
        for t in (0..depth).rev() {
            let mut next = 0;
            levels[t] = children[t]
                .iter()
                .map(|&c| {
                    let merged: Vec<usize> = levels[t + 1][next..next + c].iter().flatten().copied().collect();
                    next += c;
                    merged
                })
                .collect();
        }
        FilteredSpace::new(vec![1.0 / n as f64; n], levels).expect("valid tower")
    }
    extend(&mut vec![1], &mut Vec::new(), 1, max_atoms, &mut out);
    out
}

/// Ordered ways to write `total` as `parts` positive integers.
pub fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 1..=total.saturating_sub(parts - 1) {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

pub fn lognormal(rng: &mut impl Rng, n: usize, s: f64) -> PointFn {
    let d = LogNormal::new(0.0, s).unwrap();
    PointFn::new((0..n).map(|_| d.sample(rng)).collect()).unwrap()
}

pub fn atom_total(space: &FilteredSpace) -> usize {
    space.levels().iter().map(Vec::len).sum()
}
