use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::util::sq_dist;

/// Density-based clustering with Euclidean distance.
///
/// A point is a core point when at least `min_pts` points (itself included)
/// lie within `eps`. Returns a cluster id per point, `None` for noise. Ids are
/// assigned in input order.
pub fn dbscan(points: &[Vec<f64>], eps: f64, min_pts: usize) -> Result<Vec<Option<usize>>> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid("dbscan eps must be positive"));
    }
    if min_pts == 0 {
        return Err(Error::invalid("dbscan min_pts must be at least 1"));
    }
    let eps2 = eps * eps;
    let region = |p: usize| -> Vec<usize> {
        (0..points.len())
            .filter(|&q| sq_dist(&points[p], &points[q]) <= eps2)
            .collect()
    };

    #[derive(Clone, Copy, PartialEq)]
    enum State {
        Unvisited,
        Noise,
        Cluster(usize),
    }

    let mut state = vec![State::Unvisited; points.len()];
    let mut next = 0usize;
    for p in 0..points.len() {
        if state[p] != State::Unvisited {
            continue;
        }
        let neighbors = region(p);
        if neighbors.len() < min_pts {
            state[p] = State::Noise;
            continue;
        }
        let id = next;
        next += 1;
        state[p] = State::Cluster(id);
        let mut queue: VecDeque<usize> = neighbors.into_iter().collect();
        while let Some(q) = queue.pop_front() {
            match state[q] {
                State::Noise => state[q] = State::Cluster(id),
                State::Unvisited => {
                    state[q] = State::Cluster(id);
                    let nq = region(q);
                    if nq.len() >= min_pts {
                        queue.extend(nq);
                    }
                }
                State::Cluster(_) => {}
            }
        }
    }
    Ok(state
        .into_iter()
        .map(|s| match s {
            State::Cluster(id) => Some(id),
            _ => None,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn two_groups_on_a_line() {
        let labels = dbscan(&pts(&[0.0, 0.1, 0.2, 10.0, 10.1]), 0.5, 2).unwrap();
        assert_eq!(labels, vec![Some(0), Some(0), Some(0), Some(1), Some(1)]);
    }

    #[test]
    fn lone_point_is_noise() {
        assert_eq!(dbscan(&pts(&[3.0]), 1.0, 2).unwrap(), vec![None]);
        assert_eq!(dbscan(&pts(&[3.0]), 1.0, 1).unwrap(), vec![Some(0)]);
    }

    #[test]
    fn everything_within_eps_is_one_cluster() {
        let p = pts(&[0.0, 0.3, 0.6, 0.9]);
        assert_eq!(dbscan(&p, 1.0, 4).unwrap(), vec![Some(0); 4]);
    }

    #[test]
    fn border_points_join_and_noise_stays() {
        // 0.9 is within eps of core point 0.5 only; it is not core itself
        let labels = dbscan(&pts(&[0.0, 0.1, 0.5, 0.9, 5.0]), 0.45, 3).unwrap();
        assert_eq!(labels, vec![Some(0), Some(0), Some(0), Some(0), None]);
    }

    #[test]
    fn bad_parameters() {
        assert!(dbscan(&pts(&[0.0]), 0.0, 1).is_err());
        assert!(dbscan(&pts(&[0.0]), 1.0, 0).is_err());
    }
}
