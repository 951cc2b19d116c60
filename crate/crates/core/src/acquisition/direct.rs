//! DIRECT (dividing rectangles) global maximization over the unit box.
//!
//! Rectangles are tracked by their centre and the number of trisections
//! along each axis. Each iteration selects the potentially optimal
//! rectangles (the lower-right convex hull of size against value, with the
//! usual epsilon improvement slack) and trisects them along their longest
//! sides, splitting first along the axis with the best new samples.

use serde::{Deserialize, Serialize};

use crate::error::{AloqError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectConfig {
    /// Maximum number of objective evaluations.
    pub budget: usize,
    /// Stop once the smallest potentially optimal rectangle is this small.
    pub min_diameter: f64,
    /// Relative improvement required of a potentially optimal rectangle.
    pub epsilon: f64,
}

impl Default for DirectConfig {
    fn default() -> Self {
        DirectConfig { budget: 500, min_diameter: 1e-4, epsilon: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectResult {
    pub argmax: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
struct Rect {
    center: Vec<f64>,
    /// trisections per axis; side length is `3^-level`
    levels: Vec<u32>,
    /// minimization value (negated objective)
    value: f64,
}

impl Rect {
    fn min_level(&self) -> u32 {
        *self.levels.iter().min().expect("dim >= 1")
    }

    /// Half the diagonal.
    fn diameter(&self) -> f64 {
        0.5 * self.levels.iter().map(|&l| 3f64.powi(-2 * l as i32)).sum::<f64>().sqrt()
    }
}

/// Maximizes `objective` over `[0, 1]^dim`.
pub fn direct_maximize<F>(mut objective: F, dim: usize, config: &DirectConfig) -> Result<DirectResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if config.budget < 1 {
        return Err(AloqError::Config("DIRECT budget must be at least 1".into()));
    }
    if dim == 0 {
        return Err(AloqError::Config("DIRECT needs at least one dimension".into()));
    }
    // internal minimization of -f; NaN is treated as the worst value
    let mut eval = |x: &[f64]| -> Result<f64> {
        let v = objective(x)?;
        Ok(if v.is_nan() { f64::INFINITY } else { -v })
    };

    let center = vec![0.5; dim];
    let v0 = eval(&center)?;
    let mut rects = vec![Rect { center, levels: vec![0; dim], value: v0 }];
    let mut evaluations = 1;
    let mut best = 0usize;

    'outer: loop {
        let f_min = rects[best].value;
        let chosen = potentially_optimal(&rects, f_min, config.epsilon);
        if chosen.is_empty() {
            break;
        }
        let smallest = chosen.iter().map(|&i| rects[i].diameter()).fold(f64::INFINITY, f64::min);
        if smallest < config.min_diameter {
            break;
        }
        for idx in chosen {
            let axes: Vec<usize> = {
                let lmin = rects[idx].min_level();
                (0..dim).filter(|&d| rects[idx].levels[d] == lmin).collect()
            };
            if evaluations + 2 * axes.len() > config.budget {
                break 'outer;
            }
            let delta = 3f64.powi(-(rects[idx].min_level() as i32) - 1);
            let mut samples = Vec::with_capacity(axes.len());
            for &d in &axes {
                let mut lo = rects[idx].center.clone();
                lo[d] -= delta;
                let mut hi = rects[idx].center.clone();
                hi[d] += delta;
                let (flo, fhi) = (eval(&lo)?, eval(&hi)?);
                evaluations += 2;
                samples.push((d, lo, flo, hi, fhi));
            }
            // split along the axis with the best sample first so it ends up
            // in the largest remaining rectangles
            samples.sort_by(|a, b| {
                a.2.min(a.4).partial_cmp(&b.2.min(b.4)).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0))
            });
            let mut levels = rects[idx].levels.clone();
            for (d, lo, flo, hi, fhi) in samples {
                levels[d] += 1;
                for (c, v) in [(lo, flo), (hi, fhi)] {
                    rects.push(Rect { center: c, levels: levels.clone(), value: v });
                    if v < rects[best].value {
                        best = rects.len() - 1;
                    }
                }
            }
            rects[idx].levels = levels;
        }
    }

    let b = &rects[best];
    Ok(DirectResult { argmax: b.center.clone(), value: -b.value, evaluations })
}

/// Indices of potentially optimal rectangles, in order of increasing size.
fn potentially_optimal(rects: &[Rect], f_min: f64, epsilon: f64) -> Vec<usize> {
    // best rectangle per size class; sizes are compared through their
    // sorted level vectors so equal sizes group exactly
    let mut groups: Vec<(Vec<u32>, f64, usize)> = Vec::new();
    for (i, r) in rects.iter().enumerate() {
        let mut key = r.levels.clone();
        key.sort_unstable();
        match groups.iter_mut().find(|g| g.0 == key) {
            Some(g) => {
                if r.value < rects[g.2].value {
                    g.2 = i;
                }
            }
            None => groups.push((key, r.diameter(), i)),
        }
    }
    groups.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));

    let pts: Vec<(f64, f64, usize)> = groups.iter().map(|g| (g.1, rects[g.2].value, g.2)).collect();
    let mut chosen = Vec::new();
    for (j, &(dj, fj, idx)) in pts.iter().enumerate() {
        if !fj.is_finite() {
            continue;
        }
        let mut k_low = 0.0f64;
        let mut k_high = f64::INFINITY;
        for (i, &(di, fi, _)) in pts.iter().enumerate() {
            if i == j {
                continue;
            }
            if di < dj {
                k_low = k_low.max((fj - fi) / (dj - di));
            } else if di > dj {
                k_high = k_high.min((fi - fj) / (di - dj));
            }
        }
        if k_low > k_high {
            continue;
        }
        let ok = if k_high.is_finite() { fj - k_high * dj <= f_min - epsilon * f_min.abs() } else { true };
        if ok {
            chosen.push(idx);
        }
    }
    chosen
}
