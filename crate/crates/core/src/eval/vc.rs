//! Counting labelings of point sets by affine halfspaces in the plane and
//! the Sauer–Shelah bound.

use std::collections::HashSet;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// `ln Σ_{i≤d} C(t, i)`, summed in log space.
pub fn sauer_shelah_bound(d: usize, t: usize) -> f64 {
    let mut terms = Vec::with_capacity(d + 1);
    let mut ln_c = 0.0;
    for i in 0..=d.min(t) {
        if i > 0 {
            ln_c += ((t - i + 1) as f64).ln() - (i as f64).ln();
        }
        terms.push(ln_c);
    }
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `Σ_{i≤d} C(t, i)`; overflows to infinity for large `t`.
pub fn sauer_shelah_count(d: usize, t: usize) -> f64 {
    sauer_shelah_bound(d, t).exp()
}

/// A labeling as a bitmask with a halfspace that produces it.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub labels: u64,
    /// Labels 1 where `w·p > b`.
    pub w: [f64; 2],
    pub b: f64,
}

fn mask(points: &[[f64; 2]], w: [f64; 2], b: f64) -> u64 {
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| w[0] * p[0] + w[1] * p[1] > b)
        .fold(0, |m, (i, _)| m | 1 << i)
}

/// Every distinct labeling of `points` by `1{w·p > b}`, each with a
/// witness. Sweeps directions strictly between consecutive critical angles
/// (where two projections coincide) and thresholds between consecutive
/// distinct projections.
pub fn halfspace_labelings(points: &[[f64; 2]]) -> Result<Vec<Witness>> {
    if points.len() > 64 {
        return Err(Error::Config("at most 64 points".into()));
    }
    let mut crit = vec![0.0, PI];
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            let (dx, dy) = (p[0] - q[0], p[1] - q[1]);
            if dx == 0.0 && dy == 0.0 {
                continue;
            }
            // normal to p − q
            let ang = (dx.atan2(-dy)).rem_euclid(2.0 * PI);
            crit.push(ang);
            crit.push((ang + PI).rem_euclid(2.0 * PI));
        }
    }
    crit.sort_by(f64::total_cmp);
    crit.dedup();
    let mut dirs: Vec<f64> = crit.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    dirs.push(0.5 * (crit[crit.len() - 1] + crit[0] + 2.0 * PI));

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut push = |w: [f64; 2], b: f64, out: &mut Vec<Witness>| {
        let labels = mask(points, w, b);
        if seen.insert(labels) {
            out.push(Witness { labels, w, b });
        }
    };
    for theta in dirs {
        let w = [theta.cos(), theta.sin()];
        let mut proj: Vec<f64> = points.iter().map(|p| w[0] * p[0] + w[1] * p[1]).collect();
        proj.sort_by(f64::total_cmp);
        proj.dedup();
        push(w, proj[0] - 1.0, &mut out);
        push(w, proj[proj.len() - 1] + 1.0, &mut out);
        for pair in proj.windows(2) {
            push(w, 0.5 * (pair[0] + pair[1]), &mut out);
        }
    }
    Ok(out)
}

/// Checks each witness reproduces its labeling.
pub fn verify_witnesses(points: &[[f64; 2]], ws: &[Witness]) -> bool {
    ws.iter().all(|w| mask(points, w.w, w.b) == w.labels)
}

/// VC dimension of affine thresholds in the plane.
pub const PLANAR_AFFINE_VC_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct VcReport {
    pub n_points: usize,
    pub n_labelings: usize,
    /// `Σ_{i≤3} C(n, i)`
    pub bound: f64,
    pub witnesses_ok: bool,
    pub holds: bool,
}

/// Counts the labelings planar affine thresholds realize on `points` and
/// compares with the Sauer–Shelah count.
pub fn verify_entropy_vc(points: &[[f64; 2]]) -> Result<VcReport> {
    let ws = halfspace_labelings(points)?;
    let bound = sauer_shelah_count(PLANAR_AFFINE_VC_DIM, points.len());
    let witnesses_ok = verify_witnesses(points, &ws);
    Ok(VcReport {
        n_points: points.len(),
        n_labelings: ws.len(),
        bound,
        witnesses_ok,
        holds: witnesses_ok && ws.len() as f64 <= bound.round(),
    })
}

/// `H ≤ ln Σ_{i≤d} C(T, i)` up to `slack`.
pub fn entropy_within_vc_bound(entropy: f64, vc_dim: usize, horizon: usize, slack: f64) -> bool {
    entropy <= sauer_shelah_bound(vc_dim, horizon) + slack
}
