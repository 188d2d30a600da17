//! Split rules, row routing and the greedy split search.

use serde::{Deserialize, Serialize};

use crate::data::ColumnKind;
use crate::linalg::{Cholesky, Matrix};

use super::schema::{Frame, Schema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// A binary partition of rows on one raw feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SplitRule {
    /// Left iff present and `value ≤ threshold`. Missing values (only seen
    /// at prediction time) follow `missing_side`.
    Numeric {
        feature: usize,
        threshold: f64,
        missing_side: Side,
    },
    /// Left iff the level is in `left_levels`. Missing and unseen levels
    /// follow `missing_side`.
    Categorical {
        feature: usize,
        left_levels: Vec<u32>,
        missing_side: Side,
    },
    /// Left iff missing.
    MissingOnly { feature: usize },
    /// Left iff present and `value ≤ threshold`; missing goes right.
    NotMissingAndBelow { feature: usize, threshold: f64 },
    /// Left iff missing or `value ≤ threshold`.
    MissingOrBelow { feature: usize, threshold: f64 },
}

impl SplitRule {
    pub fn feature(&self) -> usize {
        match self {
            SplitRule::Numeric { feature, .. }
            | SplitRule::Categorical { feature, .. }
            | SplitRule::MissingOnly { feature }
            | SplitRule::NotMissingAndBelow { feature, .. }
            | SplitRule::MissingOrBelow { feature, .. } => *feature,
        }
    }

    pub fn threshold(&self) -> Option<f64> {
        match self {
            SplitRule::Numeric { threshold, .. }
            | SplitRule::NotMissingAndBelow { threshold, .. }
            | SplitRule::MissingOrBelow { threshold, .. } => Some(*threshold),
            _ => None,
        }
    }

    /// Routes one raw value (NaN = missing; for categorical features the
    /// level code, where codes outside the table are unseen levels).
    pub fn route_value(&self, v: f64) -> Side {
        let missing = v.is_nan();
        let side = |left: bool| if left { Side::Left } else { Side::Right };
        match self {
            SplitRule::Numeric {
                threshold,
                missing_side,
                ..
            } => {
                if missing {
                    *missing_side
                } else {
                    side(v <= *threshold)
                }
            }
            SplitRule::Categorical {
                left_levels,
                missing_side,
                ..
            } => {
                if missing || v < 0.0 {
                    return *missing_side;
                }
                let code = v as u32;
                if left_levels.contains(&code) {
                    Side::Left
                } else if (code as f64) != v {
                    *missing_side
                } else {
                    Side::Right
                }
            }
            SplitRule::MissingOnly { .. } => side(missing),
            SplitRule::NotMissingAndBelow { threshold, .. } => side(!missing && v <= *threshold),
            SplitRule::MissingOrBelow { threshold, .. } => side(missing || v <= *threshold),
        }
    }

    /// Routes a raw row aligned to the training schema.
    pub fn route(&self, row: &[f64]) -> Side {
        self.route_value(row[self.feature()])
    }
}

/// Routes a categorical code, treating codes at or past `n_levels` as unseen.
pub(crate) fn route_categorical(rule: &SplitRule, v: f64, n_levels: usize) -> Side {
    match rule {
        SplitRule::Categorical { missing_side, .. } if !v.is_nan() && v as usize >= n_levels => *missing_side,
        _ => rule.route_value(v),
    }
}

/// Least-squares sufficient statistics over augmented rows `(1, x)`.
#[derive(Debug, Clone)]
pub(crate) struct SuffStats {
    d: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    c: f64,
    n: usize,
}

impl SuffStats {
    pub(crate) fn new(d: usize) -> Self {
        SuffStats {
            d,
            a: vec![0.0; d * d],
            b: vec![0.0; d],
            c: 0.0,
            n: 0,
        }
    }

    pub(crate) fn add(&mut self, z: &[f64], y: f64) {
        let d = self.d;
        for i in 0..d {
            let zi = z[i];
            self.b[i] += zi * y;
            let row = &mut self.a[i * d..(i + 1) * d];
            for j in 0..=i {
                row[j] += zi * z[j];
            }
        }
        self.c += y * y;
        self.n += 1;
    }

    pub(crate) fn add_stats(&mut self, o: &SuffStats) {
        for (x, v) in self.a.iter_mut().zip(&o.a) {
            *x += v;
        }
        for (x, v) in self.b.iter_mut().zip(&o.b) {
            *x += v;
        }
        self.c += o.c;
        self.n += o.n;
    }

    pub(crate) fn minus(&self, o: &SuffStats) -> SuffStats {
        SuffStats {
            d: self.d,
            a: self.a.iter().zip(&o.a).map(|(x, v)| x - v).collect(),
            b: self.b.iter().zip(&o.b).map(|(x, v)| x - v).collect(),
            c: self.c - o.c,
            n: self.n - o.n,
        }
    }

    pub(crate) fn n(&self) -> usize {
        self.n
    }

    /// Residual sum of squares of the best fit in the span of `(1, x)`.
    pub(crate) fn sse(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let mean_sse = (self.c - self.b[0] * self.b[0] / self.a[0]).max(0.0);
        let d = self.d;
        if d == 1 {
            return mean_sse;
        }
        let mut m = Matrix::zeros(d, d);
        let mut trace = 0.0;
        for i in 0..d {
            for j in 0..=i {
                let v = self.a[i * d + j];
                m.set(i, j, v);
                m.set(j, i, v);
            }
            if i > 0 {
                trace += self.a[i * d + i];
            }
        }
        let scale = (trace / (d - 1) as f64).max(1e-300);
        let ch = Cholesky::new(&m, 1e-12 * scale).or_else(|| {
            for i in 1..d {
                m.set(i, i, m.get(i, i) + 1e-9 * scale);
            }
            Cholesky::new(&m, 0.0)
        });
        match ch {
            Some(ch) => {
                let beta = ch.solve(&self.b);
                let fitted: f64 = beta.iter().zip(&self.b).map(|(u, v)| u * v).sum();
                (self.c - fitted).clamp(0.0, mean_sse)
            }
            None => mean_sse,
        }
    }
}

/// How candidate children are scored during the split search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitProxy {
    /// Least-squares fit per child when the encoded width is at most
    /// `proxy_max_features`, otherwise the child mean.
    Auto,
    /// Child mean only.
    Mean,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct SearchParams {
    pub min_child: usize,
    pub max_thresholds: usize,
    pub min_split_gain: f64,
    pub linear_proxy: bool,
}

/// Inputs shared by every node's search.
pub(crate) struct SearchData<'a> {
    pub schema: &'a Schema,
    pub frame: &'a Frame,
    pub x: &'a Matrix,
    pub y: &'a [f64],
}

#[derive(Debug, Clone)]
pub struct SplitCandidate {
    pub rule: SplitRule,
    pub parent_sse: f64,
    pub children_sse: f64,
    pub n_left: usize,
    pub n_right: usize,
}

impl SplitCandidate {
    pub fn gain(&self) -> f64 {
        self.parent_sse - self.children_sse
    }
}

struct Best {
    sse: f64,
    found: Option<(SplitRule, usize, usize)>,
}

impl Best {
    fn offer(&mut self, sse: f64, rule: impl FnOnce() -> SplitRule, n_left: usize, n_right: usize, min_child: usize) {
        if n_left < min_child || n_right < min_child {
            return;
        }
        if sse < self.sse {
            self.sse = sse;
            self.found = Some((rule(), n_left, n_right));
        }
    }
}

/// Best admissible split of `rows`, or `None` when no rule reduces the
/// proxy SSE by at least `min_split_gain` relative to the parent.
pub(crate) fn find_best_split(data: &SearchData<'_>, rows: &[usize], params: &SearchParams) -> Option<SplitCandidate> {
    if rows.len() < 2 * params.min_child {
        return None;
    }
    let p = data.x.ncols();
    let d = if params.linear_proxy { p + 1 } else { 1 };
    // shift by the node means so the normal equations stay well scaled
    let n = rows.len() as f64;
    let mut xm = vec![0.0; p];
    let mut ym = 0.0;
    for &r in rows {
        for (a, v) in xm.iter_mut().zip(data.x.row(r)) {
            *a += v;
        }
        ym += data.y[r];
    }
    xm.iter_mut().for_each(|a| *a /= n);
    ym /= n;
    let z_of = |r: usize, z: &mut Vec<f64>| {
        z[0] = 1.0;
        if d > 1 {
            let row = data.x.row(r);
            for j in 0..p {
                z[j + 1] = row[j] - xm[j];
            }
        }
    };
    let mut z = vec![0.0; d];
    let mut total = SuffStats::new(d);
    for &r in rows {
        z_of(r, &mut z);
        total.add(&z, data.y[r] - ym);
    }
    let parent_sse = total.sse();
    if !(parent_sse > 1e-12 * total.c.max(1e-300)) || parent_sse <= 0.0 {
        return None;
    }

    let mut best = Best {
        sse: f64::INFINITY,
        found: None,
    };
    let min_child = params.min_child;
    for (f, spec) in data.schema.features.iter().enumerate() {
        let col = &data.frame.columns[f];
        let (present, missing): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| !col[r].is_nan());
        let mut miss = SuffStats::new(d);
        for &r in &missing {
            z_of(r, &mut z);
            miss.add(&z, data.y[r] - ym);
        }
        let n_miss = missing.len();
        let n_present = present.len();
        if n_miss > 0 && n_present > 0 {
            let rest = total.minus(&miss);
            best.offer(
                miss.sse() + rest.sse(),
                || SplitRule::MissingOnly { feature: f },
                n_miss,
                n_present,
                min_child,
            );
        }
        if n_present == 0 {
            continue;
        }
        match spec.kind {
            ColumnKind::Numeric => {
                let mut sorted = present.clone();
                sorted.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
                let values: Vec<f64> = sorted.iter().map(|&r| col[r]).collect();
                let thresholds = candidate_thresholds(&values, params.max_thresholds);
                let mut left = SuffStats::new(d);
                let mut pos = 0;
                for t in thresholds {
                    while pos < sorted.len() && values[pos] <= t {
                        z_of(sorted[pos], &mut z);
                        left.add(&z, data.y[sorted[pos]] - ym);
                        pos += 1;
                    }
                    let n_left = left.n();
                    let present_right = total.minus(&miss).minus(&left);
                    if n_miss == 0 {
                        let sse = left.sse() + present_right.sse();
                        let missing_side = if n_left >= n_present - n_left {
                            Side::Left
                        } else {
                            Side::Right
                        };
                        best.offer(
                            sse,
                            || SplitRule::Numeric {
                                feature: f,
                                threshold: t,
                                missing_side,
                            },
                            n_left,
                            n_present - n_left,
                            min_child,
                        );
                    } else {
                        let mut right_with_missing = present_right.clone();
                        right_with_missing.add_stats(&miss);
                        best.offer(
                            left.sse() + right_with_missing.sse(),
                            || SplitRule::NotMissingAndBelow {
                                feature: f,
                                threshold: t,
                            },
                            n_left,
                            n_present - n_left + n_miss,
                            min_child,
                        );
                        let mut left_with_missing = left.clone();
                        left_with_missing.add_stats(&miss);
                        best.offer(
                            left_with_missing.sse() + present_right.sse(),
                            || SplitRule::MissingOrBelow {
                                feature: f,
                                threshold: t,
                            },
                            n_left + n_miss,
                            n_present - n_left,
                            min_child,
                        );
                    }
                }
            }
            ColumnKind::Categorical => {
                let n_levels = spec.levels.len();
                let mut per_level: Vec<SuffStats> = (0..n_levels).map(|_| SuffStats::new(d)).collect();
                let mut sums = vec![0.0; n_levels];
                for &r in &present {
                    let k = col[r] as usize;
                    if k >= n_levels {
                        continue;
                    }
                    z_of(r, &mut z);
                    per_level[k].add(&z, data.y[r] - ym);
                    sums[k] += data.y[r];
                }
                let mut order: Vec<usize> = (0..n_levels).filter(|&k| per_level[k].n() > 0).collect();
                if order.len() < 2 {
                    continue;
                }
                order.sort_by(|&a, &b| {
                    let ma = sums[a] / per_level[a].n() as f64;
                    let mb = sums[b] / per_level[b].n() as f64;
                    ma.total_cmp(&mb).then(a.cmp(&b))
                });
                let present_total = total.minus(&miss);
                let mut left = SuffStats::new(d);
                for m in 0..order.len() - 1 {
                    left.add_stats(&per_level[order[m]]);
                    let right = present_total.minus(&left);
                    let (nl, nr) = (left.n(), right.n());
                    let missing_side = if nl >= nr { Side::Left } else { Side::Right };
                    let (sse, n_left, n_right) = if n_miss == 0 {
                        (left.sse() + right.sse(), nl, nr)
                    } else if missing_side == Side::Left {
                        let mut l2 = left.clone();
                        l2.add_stats(&miss);
                        (l2.sse() + right.sse(), nl + n_miss, nr)
                    } else {
                        let mut r2 = right.clone();
                        r2.add_stats(&miss);
                        (left.sse() + r2.sse(), nl, nr + n_miss)
                    };
                    let mut levels: Vec<u32> = order[..=m].iter().map(|&k| k as u32).collect();
                    levels.sort_unstable();
                    best.offer(
                        sse,
                        || SplitRule::Categorical {
                            feature: f,
                            left_levels: levels,
                            missing_side,
                        },
                        n_left,
                        n_right,
                        min_child,
                    );
                }
            }
        }
    }
    let (rule, n_left, n_right) = best.found?;
    let cand = SplitCandidate {
        rule,
        parent_sse,
        children_sse: best.sse,
        n_left,
        n_right,
    };
    if cand.gain() / parent_sse >= params.min_split_gain && cand.gain() > 0.0 {
        Some(cand)
    } else {
        None
    }
}

/// Up to `max` distinct empirical quantiles of sorted values, excluding the
/// maximum (which would leave the right child empty).
fn candidate_thresholds(sorted: &[f64], max: usize) -> Vec<f64> {
    let m = sorted.len();
    if m < 2 {
        return Vec::new();
    }
    let top = sorted[m - 1];
    let mut cuts: Vec<f64> = Vec::with_capacity(max);
    if m - 1 <= max {
        for &v in &sorted[..m - 1] {
            if v < top && cuts.last() != Some(&v) {
                cuts.push(v);
            }
        }
    } else {
        for i in 1..=max {
            let idx = ((i as f64 / (max + 1) as f64) * (m - 1) as f64).floor() as usize;
            let v = sorted[idx];
            if v < top && cuts.last().is_none_or(|&last| v > last) {
                cuts.push(v);
            }
        }
    }
    // midpoint to the next distinct value
    cuts.iter()
        .map(|&v| {
            let next = sorted[sorted.partition_point(|&x| x <= v)];
            let mid = v + 0.5 * (next - v);
            if mid < next {
                mid
            } else {
                v
            }
        })
        .collect()
}
