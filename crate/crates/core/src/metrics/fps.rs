use rand::Rng as _;

use super::MetricError;
use crate::rng::Rng;

/// Unit-normalised copies; zero vectors stay zero, so their cosine
/// distance to everything is 1.
pub fn normalized(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|p| {
            let n = p.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n == 0.0 {
                p.clone()
            } else {
                p.iter().map(|x| x / n).collect()
            }
        })
        .collect()
}

#[inline]
fn dist(a: &[f64], b: &[f64]) -> f64 {
    1.0 - a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}

pub fn random_start(n: usize, rng: &mut Rng) -> usize {
    rng.random_range(0..n.max(1))
}

/// Greedy farthest-point sampling under cosine distance, starting at
/// `start`; ties go to the lowest index.
pub fn farthest_point_sample(
    points: &[Vec<f64>],
    k: usize,
    start: usize,
) -> Result<Vec<usize>, MetricError> {
    let n = points.len();
    if k == 0 || k > n || start >= n {
        return Err(MetricError::KOutOfRange { k, n });
    }
    let unit = normalized(points);
    let mut chosen = vec![start];
    let mut taken = vec![false; n];
    taken[start] = true;
    let mut nearest: Vec<f64> = unit.iter().map(|p| dist(p, &unit[start])).collect();
    while chosen.len() < k {
        let mut best: Option<usize> = None;
        for i in 0..n {
            if !taken[i] && best.is_none_or(|b| nearest[i] > nearest[b]) {
                best = Some(i);
            }
        }
        let next = best.expect("k <= n leaves a candidate");
        taken[next] = true;
        chosen.push(next);
        for i in 0..n {
            nearest[i] = nearest[i].min(dist(&unit[i], &unit[next]));
        }
    }
    Ok(chosen)
}

/// Largest cosine distance from any point to its nearest representative.
pub fn k_covering_radius(points: &[Vec<f64>], representatives: &[usize]) -> Result<f64, MetricError> {
    if representatives.is_empty() {
        return Err(MetricError::Empty("representatives"));
    }
    let unit = normalized(points);
    Ok(unit
        .iter()
        .map(|p| {
            representatives
                .iter()
                .map(|&r| dist(p, &unit[r]))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::cosine_distance;

    fn on_arc(n: usize) -> Vec<Vec<f64>> {
        // positions 0..n mapped to angles in [0, pi/2]
        (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64 * std::f64::consts::FRAC_PI_2;
                vec![t.cos(), t.sin()]
            })
            .collect()
    }

    #[test]
    fn k_equals_n_returns_everything() {
        let pts = on_arc(6);
        let mut got = farthest_point_sample(&pts, 6, 0).unwrap();
        got.sort();
        assert_eq!(got, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn arc_order_against_exhaustive_check() {
        let pts = on_arc(10);
        let got = farthest_point_sample(&pts, 3, 0).unwrap();
        assert_eq!(&got[..2], &[0, 9]);
        let score = |c: usize| cosine_distance(&pts[c], &pts[0]).min(cosine_distance(&pts[c], &pts[9]));
        let best = (1..9).map(score).fold(f64::NEG_INFINITY, f64::max);
        let expected = (1..9).find(|&c| score(c) == best).unwrap();
        assert_eq!(got[2], expected);
    }

    #[test]
    fn identical_points_have_zero_radius() {
        let pts = vec![vec![0.3, 0.4]; 5];
        let reps = farthest_point_sample(&pts, 2, 0).unwrap();
        assert_eq!(reps.len(), 2);
        assert!(k_covering_radius(&pts, &reps).unwrap().abs() < 1e-15);
    }

    #[test]
    fn all_representatives_cover_exactly() {
        let pts = on_arc(7);
        let all: Vec<usize> = (0..7).collect();
        assert!(k_covering_radius(&pts, &all).unwrap().abs() < 1e-15);
    }

    #[test]
    fn k_out_of_range() {
        let pts = on_arc(3);
        assert!(farthest_point_sample(&pts, 0, 0).is_err());
        assert!(farthest_point_sample(&pts, 4, 0).is_err());
        assert!(farthest_point_sample(&pts, 2, 3).is_err());
    }
}
