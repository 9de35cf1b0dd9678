use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::cppn::{render, Genome, ImageBuffer, Innovation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub delta: f64,
    pub distance: f64,
    #[serde(skip)]
    pub image: Option<ImageBuffer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionSweep {
    pub innovation: Innovation,
    pub weight: f64,
    pub points: Vec<SweepPoint>,
    /// Mean distance at delta -1 and +1; the ranking key.
    pub extreme_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub deltas: Vec<f64>,
    pub width: u32,
    pub height: u32,
    /// Sorted by `extreme_distance`, largest first.
    pub connections: Vec<ConnectionSweep>,
}

impl SweepResult {
    pub fn ranking(&self) -> Vec<Innovation> {
        self.connections.iter().map(|c| c.innovation).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep serializes")
    }
}

/// Mean absolute per-pixel grayscale (brightness) difference.
pub fn pixel_distance(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    let n = a.pixels.len().max(1) as f64;
    a.pixels
        .iter()
        .zip(&b.pixels)
        .map(|(p, q)| (p.b - q.b).abs())
        .sum::<f64>()
        / n
}

/// `n` evenly spaced deltas over [-1, 1], exactly symmetric and with 0 in the middle.
fn delta_grid(n: usize) -> Vec<f64> {
    let half = (n - 1) as f64;
    (0..n).map(|k| (2.0 * k as f64 - half) / half).collect()
}

/// Renders every enabled connection at `weight + delta` for each grid
/// delta and measures the grayscale distance to the unperturbed render.
pub fn weight_sweep(
    genome: &Genome,
    n_steps: usize,
    width: u32,
    height: u32,
    keep_images: bool,
) -> Result<SweepResult, MetricError> {
    if n_steps < 3 || n_steps % 2 == 0 {
        return Err(MetricError::SweepSteps(n_steps));
    }
    let deltas = delta_grid(n_steps);
    let original = render(genome, width, height, false)?;
    let enabled: Vec<(Innovation, f64)> = genome
        .connections()
        .filter(|c| c.enabled)
        .map(|c| (c.innovation, c.weight))
        .collect();
    let mut connections = enabled
        .par_iter()
        .map(|&(innovation, weight)| {
            let points = deltas
                .iter()
                .map(|&delta| {
                    let mut g = genome.clone();
                    g.connection_mut(innovation).expect("enabled connection").weight = weight + delta;
                    let img = if delta == 0.0 { original.clone() } else { render(&g, width, height, false)? };
                    Ok(SweepPoint {
                        delta,
                        distance: pixel_distance(&original, &img),
                        image: keep_images.then_some(img),
                    })
                })
                .collect::<Result<Vec<_>, MetricError>>()?;
            let extreme_distance = (points[0].distance + points[n_steps - 1].distance) / 2.0;
            Ok(ConnectionSweep {
                innovation,
                weight,
                points,
                extreme_distance,
            })
        })
        .collect::<Result<Vec<_>, MetricError>>()?;
    connections.sort_by(|a, b| {
        b.extreme_distance
            .total_cmp(&a.extreme_distance)
            .then(a.innovation.cmp(&b.innovation))
    });
    Ok(SweepResult {
        deltas,
        width,
        height,
        connections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cppn::*;
    use crate::rng::seeded;

    #[test]
    fn grid_is_symmetric_with_zero() {
        let g = delta_grid(21);
        assert_eq!(g[10], 0.0);
        assert_eq!(g[0], -1.0);
        assert_eq!(g[20], 1.0);
        for k in 0..21 {
            assert_eq!(g[k], -g[20 - k]);
        }
    }

    #[test]
    fn zero_delta_is_zero_distance_and_disabled_are_skipped() {
        let mut g = Genome::init(&mut seeded(4));
        let first = g.connections().next().unwrap().innovation;
        g.connection_mut(first).unwrap().enabled = false;
        let r = weight_sweep(&g, 5, 12, 12, false).unwrap();
        assert_eq!(r.connections.len(), g.connections().filter(|c| c.enabled).count());
        assert!(r.connections.iter().all(|c| c.innovation != first));
        for c in &r.connections {
            assert_eq!(c.points[2].distance, 0.0);
        }
        let keys: Vec<f64> = r.connections.iter().map(|c| c.extreme_distance).collect();
        assert!(keys.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn rejects_even_steps() {
        let g = Genome::init(&mut seeded(1));
        assert!(weight_sweep(&g, 4, 4, 4, false).is_err());
        assert!(weight_sweep(&g, 1, 4, 4, false).is_err());
    }

    fn reference(g: &Genome, node: NodeId, x: f64, y: f64, r: f64) -> f64 {
        match node {
            INPUT_X => return x,
            INPUT_Y => return y,
            INPUT_R => return r,
            INPUT_BIAS => return 1.0,
            _ => {}
        }
        let sum: f64 = g
            .connections()
            .filter(|c| c.enabled && c.to == node)
            .map(|c| c.weight * reference(g, c.from, x, y, r))
            .sum();
        g.node(node).unwrap().activation.unwrap().apply(sum)
    }

    #[test]
    fn distances_match_reference_evaluator() {
        let g = Genome::init(&mut seeded(12));
        let r = weight_sweep(&g, 3, 10, 10, false).unwrap();
        for sweep in &r.connections {
            for p in &sweep.points {
                let mut moved = g.clone();
                moved.connection_mut(sweep.innovation).unwrap().weight = sweep.weight + p.delta;
                let mut expected = 0.0;
                for j in 0..10 {
                    for i in 0..10 {
                        let x = pixel_coordinate(i, 10);
                        let y = pixel_coordinate(j, 10);
                        let r = (x * x + y * y).sqrt();
                        let before = clamp_unit(reference(&g, OUTPUT_BRIGHTNESS, x, y, r));
                        let after = clamp_unit(reference(&moved, OUTPUT_BRIGHTNESS, x, y, r));
                        expected += (after - before).abs();
                    }
                }
                assert!((p.distance - expected / 100.0).abs() < 1e-12);
            }
        }
    }
}
