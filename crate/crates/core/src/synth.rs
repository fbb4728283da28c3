//! Seeded synthetic nominal datasets.
//!
//! The experiment harness and acceptance suites exercise the pipeline at the
//! scale of two classic UCI benchmarks — the 1984 congressional voting
//! records (435 observations, 16 ternary roll-call variables plus a party
//! label) and the mushroom catalog (8124 observations, 22 attributes plus an
//! edibility label). Those files are not bundled here, so these generators
//! produce stand-ins with the same shape: two polarized voting blocs with
//! realistic cohesion and abstention rates, and a population of latent
//! species groups with variable attribute arities (including one constant
//! attribute, as in the original).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::error::Result;

/// Two-bloc roll-call data: 435 rows, 16 vote variables over {y, n, ?} and a
/// bloc label. Bloc sizes 267/168; per-variable bloc cohesion is drawn from
/// [0.72, 0.95] and abstention ("?") runs at 4%.
pub fn house_votes_like(seed: u64) -> Result<Dataset> {
    const N_VOTES: usize = 16;
    const BLOC_SIZES: [usize; 2] = [267, 168];
    const ABSTAIN: f64 = 0.04;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // per vote: which side each bloc favors, and how cohesively
    let mut favored = [[0usize; N_VOTES]; 2];
    let mut cohesion = [[0f64; N_VOTES]; 2];
    for v in 0..N_VOTES {
        let bloc0_side = usize::from(rng.gen_bool(0.5));
        favored[0][v] = bloc0_side;
        favored[1][v] = 1 - bloc0_side;
        for bloc in cohesion.iter_mut() {
            bloc[v] = rng.gen_range(0.72..0.95);
        }
    }

    let sides = ["y", "n"];
    let labels = ["d", "r"];
    let mut rows: Vec<Vec<String>> = Vec::with_capacity(435);
    for (bloc, &size) in BLOC_SIZES.iter().enumerate() {
        for _ in 0..size {
            let mut row: Vec<String> = Vec::with_capacity(N_VOTES + 1);
            for v in 0..N_VOTES {
                let cell = if rng.gen_bool(ABSTAIN) {
                    "?"
                } else if rng.gen_bool(cohesion[bloc][v]) {
                    sides[favored[bloc][v]]
                } else {
                    sides[1 - favored[bloc][v]]
                };
                row.push(cell.to_string());
            }
            row.push(labels[bloc].to_string());
            rows.push(row);
        }
    }
    rows.shuffle(&mut rng);

    let mut header: Vec<String> = (1..=N_VOTES).map(|i| format!("vote{i}")).collect();
    header.push("bloc".to_string());
    Dataset::from_rows("house-like", Some(header), &rows)
}

/// Arities of the mushroom catalog's 22 attributes (one is constant).
const MUSHROOM_ARITIES: [usize; 22] = [
    6, 4, 10, 2, 9, 2, 2, 2, 12, 2, 5, 4, 4, 9, 9, 1, 4, 3, 5, 9, 6, 7,
];

/// Latent-group attribute data shaped like the mushroom catalog: 8124 rows,
/// 22 attributes with the original arities plus a two-valued label. Rows
/// come from a two-level mixture — top-level groups fix the first block of
/// attributes, and each group's subgroups fix the rest — so initial sorts
/// tend to fragment along subgroups while the dominant structure sits at the
/// group level.
pub fn mushroom_like(seed: u64) -> Result<Dataset> {
    const N_ROWS: usize = 8124;
    const N_GROUPS: usize = 4;
    const N_SUBGROUPS: usize = 3;
    /// Attributes below this index follow the top-level group.
    const CORE_VARS: usize = 10;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let n_vars = MUSHROOM_ARITIES.len();
    let mut favored = vec![vec![vec![0usize; n_vars]; N_SUBGROUPS]; N_GROUPS];
    let mut cohesion = vec![vec![vec![0f64; n_vars]; N_SUBGROUPS]; N_GROUPS];
    let mut group_label = [0usize; N_GROUPS];
    for g in 0..N_GROUPS {
        group_label[g] = usize::from(rng.gen_bool(0.5));
        // group-level values for the core attributes
        let mut core = [0usize; CORE_VARS];
        for (v, c) in core.iter_mut().enumerate() {
            *c = rng.gen_range(0..MUSHROOM_ARITIES[v]);
        }
        for s in 0..N_SUBGROUPS {
            for (v, &arity) in MUSHROOM_ARITIES.iter().enumerate() {
                favored[g][s][v] = if v < CORE_VARS {
                    core[v]
                } else {
                    rng.gen_range(0..arity)
                };
                cohesion[g][s][v] = rng.gen_range(0.72..0.96);
            }
        }
    }
    // uneven component weights
    let mut weights = [0f64; N_GROUPS * N_SUBGROUPS];
    for w in weights.iter_mut() {
        *w = rng.gen_range(0.4..1.6);
    }
    let total: f64 = weights.iter().sum();

    let labels = ["e", "p"];
    let mut rows: Vec<Vec<String>> = Vec::with_capacity(N_ROWS);
    for _ in 0..N_ROWS {
        let mut pick = rng.gen_range(0.0..total);
        let mut component = 0;
        for (i, &w) in weights.iter().enumerate() {
            if pick < w {
                component = i;
                break;
            }
            pick -= w;
        }
        let (g, s) = (component / N_SUBGROUPS, component % N_SUBGROUPS);
        let mut row: Vec<String> = Vec::with_capacity(n_vars + 1);
        for (v, &arity) in MUSHROOM_ARITIES.iter().enumerate() {
            let val = if arity == 1 || rng.gen_bool(cohesion[g][s][v]) {
                favored[g][s][v]
            } else {
                // any other value, uniformly
                let mut x = rng.gen_range(0..arity - 1);
                if x >= favored[g][s][v] {
                    x += 1;
                }
                x
            };
            row.push(format!("a{val}"));
        }
        row.push(labels[group_label[g]].to_string());
        rows.push(row);
    }

    let mut header: Vec<String> = (1..=n_vars).map(|i| format!("attr{i}")).collect();
    header.push("label".to_string());
    Dataset::from_rows("mushroom-like", Some(header), &rows)
}

/// Uniform random nominal data: `n` observations over the given arities.
pub fn random_nominal(n: usize, arities: &[usize], seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<String>> = (0..n)
        .map(|_| {
            arities
                .iter()
                .map(|&a| format!("v{}", rng.gen_range(0..a)))
                .collect()
        })
        .collect();
    Dataset::from_rows("random", None, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn house_like_shape() {
        let d = house_votes_like(7).unwrap();
        assert_eq!(d.n_observations(), 435);
        assert_eq!(d.n_variables(), 17);
        // deterministic under seed
        let d2 = house_votes_like(7).unwrap();
        assert_eq!(d.observations, d2.observations);
        let d3 = house_votes_like(8).unwrap();
        assert_ne!(d.observations, d3.observations);
    }

    #[test]
    fn mushroom_like_shape() {
        let d = mushroom_like(3).unwrap();
        assert_eq!(d.n_observations(), 8124);
        assert_eq!(d.n_variables(), 23);
        // the catalog's constant attribute stays constant
        assert_eq!(d.schema.arity(15), 1);
    }

    #[test]
    fn random_nominal_respects_arities() {
        let d = random_nominal(50, &[2, 2, 3], 11).unwrap();
        assert_eq!(d.n_observations(), 50);
        for (i, &a) in [2usize, 2, 3].iter().enumerate() {
            assert!(d.schema.arity(i) <= a);
        }
    }
}
