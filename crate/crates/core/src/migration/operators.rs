//! Variation operators on `[0, 1]`-coded genomes.

use rand::Rng;

use super::sorting::dominates_unchecked;
use super::Individual;

/// Index of the tournament winner between `a` and `b`.
///
/// Dominance decides first; when neither dominates, the lower rank, then the
/// larger crowding distance wins, and a full tie falls back to `b`.
pub fn tournament_winner(pop: &[Individual], a: usize, b: usize) -> usize {
    let (x1, x2) = (&pop[a], &pop[b]);
    if let (Some(o1), Some(o2)) = (&x1.objectives, &x2.objectives) {
        if dominates_unchecked(o1, o2) {
            return a;
        }
        if dominates_unchecked(o2, o1) {
            return b;
        }
    }
    if x1.rank != x2.rank {
        return if x1.rank < x2.rank { a } else { b };
    }
    if x1.crowding > x2.crowding {
        return a;
    }
    b
}

/// Draws two distinct members uniformly (the same one only if `n == 1`).
pub fn draw_pair<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (usize, usize) {
    let a = rng.gen_range(0..n);
    if n < 2 {
        return (a, a);
    }
    let mut b = rng.gen_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    (a, b)
}

/// Fills a mating pool of `slots` entries; returns indices into `pop`.
pub fn tournament_indices<R: Rng + ?Sized>(pop: &[Individual], slots: usize, rng: &mut R) -> Vec<usize> {
    (0..slots)
        .map(|_| {
            let (a, b) = draw_pair(pop.len(), rng);
            tournament_winner(pop, a, b)
        })
        .collect()
}

pub fn binary_tournament<R: Rng + ?Sized>(pop: &[Individual], rng: &mut R) -> Vec<Individual> {
    tournament_indices(pop, pop.len(), rng)
        .into_iter()
        .map(|i| pop[i].clone())
        .collect()
}

/// One SBX gene pair before clamping, for a uniform draw `u` in `[0, 1)`.
///
/// The children are placed symmetrically around the parents' mean, so
/// `c1 + c2 == p1 + p2` up to rounding.
pub fn sbx_gene(p1: f64, p2: f64, u: f64, eta_c: f64) -> (f64, f64) {
    let exponent = 1.0 / (eta_c + 1.0);
    let beta = if u <= 0.5 {
        (2.0 * u).powf(exponent)
    } else {
        (1.0 / (2.0 * (1.0 - u))).powf(exponent)
    };
    let mean = 0.5 * (p1 + p2);
    let half_spread = 0.5 * beta * (p2 - p1);
    (mean - half_spread, mean + half_spread)
}

/// Simulated binary crossover. Each gene pair is crossed with probability
/// `p_c` and copied through otherwise; children are clamped to `[0, 1]`.
pub fn sbx<R: Rng + ?Sized>(parent1: &[f64], parent2: &[f64], eta_c: f64, p_c: f64, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let mut c1 = parent1.to_vec();
    let mut c2 = parent2.to_vec();
    for i in 0..parent1.len().min(parent2.len()) {
        if p_c <= 0.0 || rng.gen::<f64>() >= p_c {
            continue;
        }
        let u: f64 = rng.gen();
        if parent1[i] == parent2[i] {
            continue;
        }
        let (a, b) = sbx_gene(parent1[i], parent2[i], u, eta_c);
        c1[i] = a.clamp(0.0, 1.0);
        c2[i] = b.clamp(0.0, 1.0);
    }
    (c1, c2)
}

/// Bounded polynomial mutation of a single gene in `[0, 1]` for a uniform
/// draw `r`. A gene sitting on a bound can only move inward.
pub fn pm_gene(y: f64, r: f64, eta_m: f64) -> f64 {
    let delta1 = y;
    let delta2 = 1.0 - y;
    let pow = 1.0 / (eta_m + 1.0);
    let delta_q = if r < 0.5 {
        let xy = 1.0 - delta1;
        let val = 2.0 * r + (1.0 - 2.0 * r) * xy.powf(eta_m + 1.0);
        val.powf(pow) - 1.0
    } else {
        let xy = 1.0 - delta2;
        let val = 2.0 * (1.0 - r) + 2.0 * (r - 0.5) * xy.powf(eta_m + 1.0);
        1.0 - val.powf(pow)
    };
    (y + delta_q).clamp(0.0, 1.0)
}

pub fn polynomial_mutation<R: Rng + ?Sized>(genome: &[f64], eta_m: f64, p_m: f64, rng: &mut R) -> Vec<f64> {
    genome
        .iter()
        .map(|&y| {
            if p_m <= 0.0 || rng.gen::<f64>() >= p_m {
                return y;
            }
            pm_gene(y, rng.gen(), eta_m)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ind(obj: [f64; 2], rank: usize, crowding: f64) -> Individual {
        Individual {
            genome: vec![obj[0]],
            objectives: Some(obj.to_vec()),
            rank,
            crowding,
        }
    }

    #[test]
    fn dominating_individual_fills_the_pool() {
        let pop = vec![ind([1.0, 1.0], 1, f64::INFINITY), ind([2.0, 2.0], 2, f64::INFINITY)];
        for seed in 0..20 {
            let pool = binary_tournament(&pop, &mut ChaCha8Rng::seed_from_u64(seed));
            assert_eq!(pool.len(), 2);
            assert!(pool.iter().all(|p| p == &pop[0]));
        }
    }

    #[test]
    fn identical_individuals_give_identical_pool() {
        let pop = vec![ind([1.0, 1.0], 1, 0.0); 4];
        let pool = binary_tournament(&pop, &mut ChaCha8Rng::seed_from_u64(3));
        assert!(pool.iter().all(|p| p == &pop[0]));
    }

    #[test]
    fn tie_breaks_rank_then_crowding_then_second() {
        let pop = vec![
            ind([1.0, 3.0], 1, 0.5),
            ind([3.0, 1.0], 2, 9.0),
            ind([2.0, 2.0], 1, 0.7),
            ind([0.5, 4.0], 1, 0.5),
        ];
        assert_eq!(tournament_winner(&pop, 0, 1), 0);
        assert_eq!(tournament_winner(&pop, 0, 2), 2);
        assert_eq!(tournament_winner(&pop, 0, 3), 3);
        assert_eq!(tournament_winner(&pop, 3, 0), 0);
    }

    #[test]
    fn tournament_golden_trace() {
        let pop: Vec<Individual> = (0..10)
            .map(|i| {
                let f = i as f64;
                ind([f, (9.0 - f) * (1.0 + (i % 3) as f64)], 1 + (i % 3), f / 10.0)
            })
            .collect();
        let idx = tournament_indices(&pop, 10, &mut ChaCha8Rng::seed_from_u64(2024));
        assert_eq!(idx, vec![9, 0, 9, 6, 7, 7, 6, 9, 1, 9]);
    }

    #[test]
    fn sbx_without_crossover_copies_parents() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (a, b) = ([0.1, 0.7, 0.3], [0.9, 0.2, 0.5]);
        let (c1, c2) = sbx(&a, &b, 15.0, 0.0, &mut rng);
        assert_eq!((c1.as_slice(), c2.as_slice()), (&a[..], &b[..]));
        let (c1, c2) = sbx(&a, &a, 15.0, 1.0, &mut rng);
        assert_eq!((c1.as_slice(), c2.as_slice()), (&a[..], &a[..]));
    }

    #[test]
    fn sbx_preserves_gene_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10_000 {
            let (p1, p2): (f64, f64) = (rng.gen(), rng.gen());
            let (c1, c2) = sbx_gene(p1, p2, rng.gen(), 15.0);
            assert!(((c1 + c2) - (p1 + p2)).abs() < 1e-12);
        }
    }

    #[test]
    fn pm_respects_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let r: f64 = rng.gen();
            assert!(pm_gene(0.0, r, 20.0) >= 0.0);
            assert!(pm_gene(1.0, r, 20.0) <= 1.0);
            let y: f64 = rng.gen();
            let m = pm_gene(y, r, 20.0);
            assert!((0.0..=1.0).contains(&m));
        }
        assert_eq!(pm_gene(0.0, 0.2, 20.0), 0.0);
        assert!(pm_gene(0.0, 0.9, 20.0) > 0.0);
        assert_eq!(pm_gene(1.0, 0.9, 20.0), 1.0);
        assert!(pm_gene(1.0, 0.1, 20.0) < 1.0);
    }

    #[test]
    fn pm_with_zero_rate_is_identity() {
        let g = vec![0.1, 0.5, 0.99];
        assert_eq!(polynomial_mutation(&g, 20.0, 0.0, &mut ChaCha8Rng::seed_from_u64(0)), g);
    }

    #[test]
    fn pm_is_symmetric_at_midpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 100_000;
        let mean = (0..n).map(|_| polynomial_mutation(&[0.5], 20.0, 1.0, &mut rng)[0]).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.005, "{mean}");
    }
}
