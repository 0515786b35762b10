use std::collections::HashSet;
use std::io::Write;

use nalgebra::DVector;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::Member;
use crate::error::{Error, Result};
use crate::linalg::unflatten_rows;
use crate::seeds::{rng_from_seed, Rng};

pub const DEFAULT_NET_CAP: usize = 1_000_000;

/// A proper sup-norm ε-cover, stored as parameter points.
#[derive(Clone, Debug, Serialize)]
pub struct CoverCertificate {
    pub epsilon: f64,
    /// Parameter points of the net; `None` when the cardinality cap was hit.
    pub elements: Option<Vec<Vec<f64>>>,
    pub log_cardinality: f64,
    /// Parameter-space radius B of the covered family.
    pub sup_norm_bound: f64,
    /// Parameter-space resolution of the net.
    pub delta: f64,
    /// Truncation dimension for ellipsoid covers.
    pub truncation_dim: Option<usize>,
    /// Closed-form tail-truncation error bound for ellipsoid covers.
    pub tail_bound: Option<f64>,
}

impl CoverCertificate {
    pub fn realized_size(&self) -> Option<usize> {
        self.elements.as_ref().map(|e| e.len())
    }

    /// Columns element, p_0, …, p_{n−1}.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let elements = self
            .elements
            .as_ref()
            .ok_or_else(|| Error::invalid("cover was too large to materialize; only its bound is known"))?;
        let n = elements.first().map_or(0, |e| e.len());
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["element".to_string()];
        header.extend((0..n).map(|i| format!("p_{i}")));
        wr.write_record(&header)?;
        for (i, e) in elements.iter().enumerate() {
            let mut row = vec![i.to_string()];
            row.extend(e.iter().map(|v| v.to_string()));
            wr.write_record(&row)?;
        }
        wr.flush().map_err(Error::from)
    }
}

/// Cubic-lattice δ-net of the Euclidean ball of `radius` in R^dim.
///
/// Lattice points within δ of the ball are kept and pulled radially onto it,
/// which keeps the net proper (projection onto a convex set is nonexpansive).
/// Returns `None` when more than `cap` points would be needed.
pub fn grid_net(dim: usize, radius: f64, delta: f64, cap: usize) -> Option<Vec<Vec<f64>>> {
    if delta >= radius {
        return Some(vec![vec![0.0; dim]]);
    }
    let h = 2.0 * delta / (dim as f64).sqrt();
    let outer = radius + delta;
    let kmax = (outer / h).floor() as i64;
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut current = vec![0i64; dim];
    if !enumerate(0, outer * outer, h, kmax, &mut current, &mut points, cap) {
        return None;
    }
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(points.len());
    for mut p in points {
        let n = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > radius {
            p.iter_mut().for_each(|v| *v *= radius / n);
        }
        let key: Vec<i64> = p.iter().map(|v| (v * 1e12).round() as i64).collect();
        if seen.insert(key) {
            out.push(p);
        }
    }
    Some(out)
}

fn enumerate(
    i: usize,
    budget: f64,
    h: f64,
    kmax: i64,
    current: &mut Vec<i64>,
    out: &mut Vec<Vec<f64>>,
    cap: usize,
) -> bool {
    if i == current.len() {
        if out.len() >= cap {
            return false;
        }
        out.push(current.iter().map(|&k| k as f64 * h).collect());
        return true;
    }
    for k in -kmax..=kmax {
        let c = (k as f64 * h).powi(2);
        if c > budget * (1.0 + 1e-12) {
            continue;
        }
        current[i] = k;
        if !enumerate(i + 1, budget - c, h, kmax, current, out, cap) {
            return false;
        }
    }
    current[i] = 0;
    true
}

/// Net of {A : ‖A‖_F ≤ B} (d_y × d_x) in sup-norm over ‖x‖ ≤ B_X.
pub fn cover_linear(b: f64, b_x: f64, epsilon: f64, d_x: usize, d_y: usize, cap: usize) -> Result<CoverCertificate> {
    if !(epsilon > 0.0) || !(b_x > 0.0) || !(b > 0.0) || d_x == 0 || d_y == 0 {
        return Err(Error::invalid("cover_linear needs epsilon, B_X, B > 0 and positive dimensions"));
    }
    let n = d_x * d_y;
    let delta = epsilon / b_x;
    Ok(CoverCertificate {
        epsilon,
        elements: grid_net(n, b, delta, cap),
        log_cardinality: n as f64 * (1.0 + 2.0 * b * b_x / epsilon).ln(),
        sup_norm_bound: b,
        delta,
        truncation_dim: None,
        tail_bound: None,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CertificationReport {
    /// Largest over probes of the sup-norm distance to the nearest tested element.
    pub worst_gap: f64,
    pub certified: bool,
    /// Preconditions that could only be checked on samples and failed there.
    pub warnings: Vec<String>,
}

fn params(m: &Member) -> Vec<f64> {
    match m {
        Member::Linear(a) | Member::Glm { a, .. } => crate::linalg::flatten_rows(a),
        Member::Table { values, .. } => values.iter().flat_map(|v| v.iter().copied()).collect(),
        Member::Ellipsoid { theta, .. } => theta.iter().copied().collect(),
    }
}

/// Checks that each probe has an element within ε (+1e-9) in sup-norm over `states`.
///
/// Only the `candidates` nearest elements in parameter distance are examined
/// per probe; if none of them qualifies the probe counts as uncovered.
pub fn certify(
    elements: &[Member],
    probes: &[Member],
    states: &[DVector<f64>],
    epsilon: f64,
    candidates: usize,
) -> Result<CertificationReport> {
    if elements.is_empty() {
        return Err(Error::invalid("cannot certify an empty net"));
    }
    let elem_params: Vec<Vec<f64>> = elements.iter().map(params).collect();
    let mut worst = 0.0f64;
    for probe in probes {
        let pp = params(probe);
        let mut order: Vec<(f64, usize)> = elem_params
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let d: f64 = e
                    .iter()
                    .zip(pp.iter().chain(std::iter::repeat(&0.0)))
                    .map(|(a, b)| (a - b).powi(2))
                    .sum();
                (d, i)
            })
            .collect();
        let keep = candidates.max(1).min(order.len());
        order.select_nth_unstable_by(keep - 1, |a, b| a.0.total_cmp(&b.0));
        let mut best = f64::INFINITY;
        for &(_, i) in &order[..keep] {
            let mut gap = 0.0f64;
            for x in states {
                gap = gap.max((probe.eval(x)? - elements[i].eval(x)?).amax());
            }
            best = best.min(gap);
        }
        worst = worst.max(best);
    }
    Ok(CertificationReport { worst_gap: worst, certified: worst <= epsilon + 1e-9, warnings: Vec::new() })
}

/// Uniform draw from the Euclidean ball of `radius` in R^dim.
pub fn sample_ball(rng: &mut Rng, dim: usize, radius: f64) -> Vec<f64> {
    let g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let n = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    let u: f64 = rng.random();
    let r = radius * u.powf(1.0 / dim as f64);
    g.into_iter().map(|v| v * r / n).collect()
}

/// Probe certification of a linear cover with random members and states.
pub fn certify_linear(
    cert: &CoverCertificate,
    b_x: f64,
    d_x: usize,
    d_y: usize,
    n_probes: usize,
    n_states: usize,
    seed: u64,
) -> Result<CertificationReport> {
    let elems = cert
        .elements
        .as_ref()
        .ok_or_else(|| Error::invalid("cover has no materialized elements"))?;
    let elements: Vec<Member> = elems
        .iter()
        .map(|p| Member::Linear(unflatten_rows(p, d_y, d_x)))
        .collect();
    let mut rng = rng_from_seed(seed);
    let probes: Vec<Member> = (0..n_probes)
        .map(|_| Member::Linear(unflatten_rows(&sample_ball(&mut rng, d_x * d_y, cert.sup_norm_bound), d_y, d_x)))
        .collect();
    let states: Vec<DVector<f64>> = (0..n_states)
        .map(|i| {
            let v = sample_ball(&mut rng, d_x, b_x);
            let mut x = DVector::from_vec(v);
            // Half the states sit on the boundary where the gap is largest.
            if i % 2 == 0 && x.norm() > 0.0 {
                x *= b_x / x.norm();
            }
            x
        })
        .collect();
    certify(&elements, &probes, &states, cert.epsilon, 4)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn huge_epsilon_gives_origin() {
        let c = cover_linear(1.0, 2.0, 4.0, 2, 2, DEFAULT_NET_CAP).unwrap();
        assert_eq!(c.realized_size(), Some(1));
        assert!((c.log_cardinality - 4.0 * 2f64.ln()).abs() < 1e-12);
        assert!(certify_linear(&c, 2.0, 2, 2, 50, 50, 1).unwrap().certified);
    }

    #[test]
    fn one_dimensional_grid() {
        let c = cover_linear(1.0, 1.0, 0.5, 1, 1, DEFAULT_NET_CAP).unwrap();
        assert!((c.log_cardinality - 5f64.ln()).abs() < 1e-12);
        let n = c.realized_size().unwrap();
        assert!(n <= 5 && (n as f64).ln() <= c.log_cardinality);
        assert!(certify_linear(&c, 1.0, 1, 1, 200, 20, 2).unwrap().certified);
        // The five-point grid from the worked example also certifies.
        let five: Vec<Member> = [-1.0, -0.5, 0.0, 0.5, 1.0]
            .iter()
            .map(|&a| Member::Linear(DMatrix::from_element(1, 1, a)))
            .collect();
        let probes: Vec<Member> = (0..=100)
            .map(|i| Member::Linear(DMatrix::from_element(1, 1, -1.0 + 0.02 * i as f64)))
            .collect();
        let states = vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)];
        assert!(certify(&five, &probes, &states, 0.5, 5).unwrap().certified);
    }

    #[test]
    fn doubling_epsilon_never_grows_the_net() {
        for (dx, dy) in [(1, 1), (2, 1), (2, 2)] {
            let sizes: Vec<usize> = [0.1, 0.2, 0.4]
                .iter()
                .map(|&e| cover_linear(1.0, 1.0, e, dx, dy, DEFAULT_NET_CAP).unwrap().realized_size().unwrap())
                .collect();
            assert!(sizes[0] >= sizes[1] && sizes[1] >= sizes[2], "{sizes:?}");
        }
    }

    #[test]
    fn nets_are_proper_certified_and_within_bound() {
        for (dx, dy, b, bx, eps) in [(1, 1, 2.0, 1.5, 0.3), (2, 1, 1.0, 1.0, 0.25), (2, 2, 1.0, 2.0, 0.9), (3, 1, 0.7, 1.0, 0.2)] {
            let c = cover_linear(b, bx, eps, dx, dy, DEFAULT_NET_CAP).unwrap();
            let elems = c.elements.as_ref().unwrap();
            for e in elems {
                assert!(e.iter().map(|v| v * v).sum::<f64>().sqrt() <= b + 1e-12);
            }
            assert!((elems.len() as f64).ln() <= c.log_cardinality, "{dx}x{dy}: {} elements", elems.len());
            let rep = certify_linear(&c, bx, dx, dy, 100, 40, 3).unwrap();
            assert!(rep.certified, "gap {}", rep.worst_gap);
        }
    }

    #[test]
    fn cap_falls_back_to_bound_only() {
        let c = cover_linear(1.0, 1.0, 1e-3, 2, 2, 1000).unwrap();
        assert!(c.elements.is_none());
        assert!(c.log_cardinality > 0.0);
        assert!(c.write_csv(Vec::new()).is_err());
    }

    #[test]
    fn csv_export() {
        let c = cover_linear(1.0, 1.0, 0.5, 1, 2, DEFAULT_NET_CAP).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("element,p_0,p_1\n"));
        assert_eq!(text.lines().count(), c.realized_size().unwrap() + 1);
    }
}
