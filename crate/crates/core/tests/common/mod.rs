//! Brute-force reference implementations shared by the integration tests.
//!
//! Selections are decided by exhaustive enumeration or pairwise rank counts
//! rather than by sorting. Scalar similarity and mean computations keep the
//! same summation order as the library so that exact score ties are seen as
//! ties by both sides; everything downstream is computed independently.
#![allow(dead_code)]

use rand::Rng;

pub fn cos(u: &[f64], v: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for i in 0..u.len() {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    if nu == 0.0 || nv == 0.0 {
        0.0
    } else {
        (dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0)
    }
}

pub fn mean(tokens: &[Vec<f64>]) -> Vec<f64> {
    let mut acc = tokens[0].clone();
    for t in &tokens[1..] {
        for (a, b) in acc.iter_mut().zip(t) {
            *a += b;
        }
    }
    let n = tokens.len() as f64;
    acc.into_iter().map(|a| a / n).collect()
}

pub fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// `a` outranks `b`: larger value, or equal value and smaller index.
fn beats(values: &[f64], a: usize, b: usize) -> bool {
    values[a] > values[b] || (values[a] == values[b] && a < b)
}

/// All `k`-subsets of `items` (ascending).
pub fn subsets(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    fn rec(
        items: &[usize],
        k: usize,
        start: usize,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            rec(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(items, k, 0, &mut Vec::new(), &mut out);
    out
}

/// The unique `k`-subset of `pool` whose members all outrank all non-members.
pub fn exhaustive_top_k(values: &[f64], pool: &[usize], k: usize) -> Vec<usize> {
    let winners: Vec<Vec<usize>> = subsets(pool, k)
        .into_iter()
        .filter(|s| {
            pool.iter()
                .filter(|x| !s.contains(x))
                .all(|&out| s.iter().all(|&inn| beats(values, inn, out)))
        })
        .collect();
    assert_eq!(winners.len(), 1, "top-k must be unique under the tie rule");
    winners.into_iter().next().unwrap()
}

pub fn bins(frames: usize, bins: usize) -> Vec<Vec<usize>> {
    // sizes differ by at most one, larger bins first
    let mut out = Vec::new();
    let mut start = 0;
    for b in 0..bins {
        let len = (frames - start).div_ceil(bins - b);
        out.push((start..start + len).collect());
        start += len;
    }
    out
}

/// Key frames by enumerating every K-subset and keeping the one that obeys
/// the coverage rule.
pub fn oracle_key_frames(scores: &[f64], retain: f64, nbins: usize) -> Vec<usize> {
    let t = scores.len();
    let k = round_half_up(retain * t as f64).clamp(1, t);
    let leaders: Vec<usize> = bins(t, nbins)
        .iter()
        .filter(|b| !b.is_empty())
        .map(|b| {
            *b.iter()
                .find(|&&x| b.iter().all(|&y| y == x || beats(scores, x, y)))
                .unwrap()
        })
        .collect();
    let all: Vec<usize> = (0..t).collect();
    let valid: Vec<Vec<usize>> = subsets(&all, k)
        .into_iter()
        .filter(|s| {
            if k >= leaders.len() {
                let has_leaders = leaders.iter().all(|l| s.contains(l));
                let others_in: Vec<usize> =
                    s.iter().copied().filter(|x| !leaders.contains(x)).collect();
                let others_out: Vec<usize> = all
                    .iter()
                    .copied()
                    .filter(|x| !s.contains(x) && !leaders.contains(x))
                    .collect();
                has_leaders
                    && others_in
                        .iter()
                        .all(|&i| others_out.iter().all(|&o| beats(scores, i, o)))
            } else {
                s.iter().all(|x| leaders.contains(x))
                    && leaders
                        .iter()
                        .filter(|l| !s.contains(l))
                        .all(|&o| s.iter().all(|&i| beats(scores, i, o)))
            }
        })
        .collect();
    assert_eq!(valid.len(), 1, "coverage rule must select a unique set");
    valid.into_iter().next().unwrap()
}

#[derive(Debug, Clone)]
pub struct OracleFrame {
    pub frame: usize,
    pub kept: Vec<usize>,
    pub kept_features: Vec<Vec<f64>>,
    pub memory: Option<(usize, Vec<f64>)>,
}

#[derive(Debug, Clone)]
pub struct OracleVisual {
    pub scores: Vec<f64>,
    pub frames: Vec<OracleFrame>,
    pub retained: Vec<usize>,
}

pub fn oracle_compress_video(
    grid: &[Vec<Vec<f64>>],
    query: &[f64],
    retain: f64,
    nbins: usize,
    tokens_per_frame: Option<usize>,
) -> OracleVisual {
    let t = grid.len();
    let p = grid[0].len();
    let scores: Vec<f64> = grid.iter().map(|f| cos(&mean(f), query)).collect();
    let selected = oracle_key_frames(&scores, retain, nbins.min(t));
    let k_frames = selected.len();
    let k = if p == 1 {
        1
    } else {
        let raw = tokens_per_frame.unwrap_or_else(|| {
            round_half_up(retain * (t * p) as f64 / k_frames as f64).saturating_sub(1)
        });
        raw.clamp(1, p - 1)
    };

    let mut retained = vec![0; t];
    let mut frames = Vec::new();
    for &f in &selected {
        let toks = &grid[f];
        if p == 1 {
            retained[f] = 1;
            frames.push(OracleFrame {
                frame: f,
                kept: vec![0],
                kept_features: vec![toks[0].clone()],
                memory: None,
            });
            continue;
        }
        let c = mean(toks);
        let alpha: Vec<f64> = toks.iter().map(|v| 1.0 - cos(v, &c)).collect();
        let lo = alpha.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = alpha.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ahat: Vec<f64> = if hi > lo {
            alpha.iter().map(|a| (a - lo) / (hi - lo)).collect()
        } else {
            vec![0.0; p]
        };
        let positions: Vec<usize> = (0..p).collect();
        let kept = exhaustive_top_k(&ahat, &positions, k);
        let dropped: Vec<usize> = positions
            .iter()
            .copied()
            .filter(|x| !kept.contains(x))
            .collect();
        // lowest score, earliest on ties
        let slot = *dropped
            .iter()
            .find(|&&s| {
                dropped
                    .iter()
                    .all(|&d| d == s || ahat[s] < ahat[d] || (ahat[s] == ahat[d] && s < d))
            })
            .unwrap();
        let denom: f64 = kept.iter().map(|&q| ahat[q].exp()).sum();
        let mut z = vec![0.0; query.len()];
        for &q in &kept {
            let w = ahat[q].exp() / denom;
            for (zi, v) in z.iter_mut().zip(&toks[q]) {
                *zi += w * v;
            }
        }
        retained[f] = kept.len() + 1;
        frames.push(OracleFrame {
            frame: f,
            kept_features: kept.iter().map(|&q| toks[q].clone()).collect(),
            kept,
            memory: Some((slot, z)),
        });
    }
    OracleVisual {
        scores,
        frames,
        retained,
    }
}

/// Largest remainder via pairwise rank counts, then unit-wise capacity repair.
pub fn oracle_allocate(n: &[usize], w: &[f64], total: usize) -> Vec<usize> {
    let t = n.len();
    let mut mass: Vec<f64> = (0..t).map(|i| n[i] as f64 * w[i]).collect();
    if mass.iter().sum::<f64>() <= 0.0 {
        mass = n.iter().map(|&x| x as f64).collect();
    }
    let m: f64 = mass.iter().sum();
    if total == 0 || m == 0.0 {
        return vec![0; t];
    }
    let targets: Vec<f64> = mass.iter().map(|x| total as f64 * x / m).collect();
    let floors: Vec<usize> = targets.iter().map(|x| x.floor() as usize).collect();
    let rem: Vec<f64> = (0..t).map(|i| targets[i] - floors[i] as f64).collect();
    let assigned: usize = floors.iter().sum();
    assert!(
        assigned <= total && total - assigned <= t,
        "floors out of range"
    );
    let extra = total - assigned;
    let mut b: Vec<usize> = (0..t)
        .map(|i| {
            let ahead = (0..t)
                .filter(|&j| rem[j] > rem[i] || (rem[j] == rem[i] && j < i))
                .count();
            floors[i] + usize::from(ahead < extra)
        })
        .collect();
    let mut excess = 0;
    for i in 0..t {
        if b[i] > n[i] {
            excess += b[i] - n[i];
            b[i] = n[i];
        }
    }
    while excess > 0 {
        let mut best = 0;
        for i in 1..t {
            if n[i] - b[i] > n[best] - b[best] {
                best = i;
            }
        }
        b[best] += 1;
        excess -= 1;
    }
    b
}

#[derive(Debug, Clone)]
pub struct OracleAnchor {
    pub index: usize,
    pub group: Vec<usize>,
    pub feature: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct OracleAudio {
    pub budgets: Vec<usize>,
    pub total: usize,
    pub anchors: Vec<OracleAnchor>,
    pub discarded: usize,
}

pub fn oracle_compress_audio(
    tokens: &[Vec<f64>],
    alignment: &[usize],
    frames: usize,
    query: &[f64],
    weights: &[f64],
    retain: f64,
) -> OracleAudio {
    let na = tokens.len();
    let total = if na == 0 {
        0
    } else {
        round_half_up(retain * na as f64).clamp(1, na)
    };
    let importance: Vec<f64> = tokens.iter().map(|a| cos(a, query)).collect();
    let n: Vec<usize> = (0..frames)
        .map(|f| alignment.iter().filter(|&&x| x == f).count())
        .collect();
    let budgets = oracle_allocate(&n, weights, total);

    let mut anchors = Vec::new();
    let mut discarded = 0;
    for (f, &budget) in budgets.iter().enumerate() {
        let seg: Vec<usize> = (0..na).filter(|&i| alignment[i] == f).collect();
        if budget == 0 {
            discarded += seg.len();
            continue;
        }
        let chosen = exhaustive_top_k(&importance, &seg, budget);
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); chosen.len()];
        for &i in seg.iter().filter(|i| !chosen.contains(i)) {
            let best = (0..chosen.len())
                .min_by_key(|&a| (chosen[a].abs_diff(i), chosen[a]))
                .unwrap();
            groups[best].push(i);
        }
        for (a, group) in chosen.iter().zip(groups) {
            let anchor = &tokens[*a];
            let omega: Vec<f64> = group
                .iter()
                .map(|&i| cos(&tokens[i], anchor).max(0.0))
                .collect();
            let denom = 1.0 + omega.iter().sum::<f64>();
            let feature: Vec<f64> = (0..anchor.len())
                .map(|d| {
                    let num = anchor[d]
                        + group
                            .iter()
                            .zip(&omega)
                            .map(|(&i, w)| w * tokens[i][d])
                            .sum::<f64>();
                    num / denom
                })
                .collect();
            anchors.push(OracleAnchor {
                index: *a,
                group,
                feature,
            });
        }
    }
    OracleAudio {
        budgets,
        total,
        anchors,
        discarded,
    }
}

/// Random coordinate: continuous most of the time, a small integer otherwise
/// so that exact ties show up.
pub fn coord<R: Rng>(rng: &mut R, discrete: bool) -> f64 {
    if discrete {
        rng.gen_range(-1i32..=2) as f64
    } else {
        rng.gen_range(-1.0..1.0)
    }
}

pub fn random_vec<R: Rng>(rng: &mut R, d: usize, discrete: bool) -> Vec<f64> {
    (0..d).map(|_| coord(rng, discrete)).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn report(criterion: &str, pass: bool, detail: &str) {
    println!(
        "[{}] {criterion}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "acceptance criterion failed: {criterion}: {detail}");
}
