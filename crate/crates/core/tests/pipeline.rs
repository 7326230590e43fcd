//! Cross-module checks: every module's answer is compared with another
//! module's independent route to the same quantity.

use latent_capacity::broadcast::{predicted_rates, run_end_to_end, sample_instance};
use latent_capacity::exactmath::Rational;
use latent_capacity::exchange::ExchangeTable;
use latent_capacity::polyhedra::{latent_facets, vertices3, FacetOptions, Variable};
use latent_capacity::region::{member, sample_rates, support_lp, Allocation, DirectionVector, RateVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn q(s: &str) -> Rational {
    s.parse().unwrap()
}

/// Each derived facet `c·R <= b` must be supporting: `b` equals the support
/// value in direction `c`.
#[test]
fn four_user_facets_are_supporting() {
    for seed in 0..3 {
        let rstar = sample_rates(4, &q("4"), seed).unwrap();
        let facets = latent_facets(4, false, Some(&rstar), FacetOptions::default()).unwrap();
        for row in facets.rows() {
            let c: Vec<Rational> = (1..=4).map(|j| row.coefficient(Variable::Rate(j))).collect();
            if c.iter().any(Rational::is_negative) {
                continue;
            }
            let support = support_lp(4, &rstar, &DirectionVector::new(c).unwrap()).unwrap();
            assert_eq!(&support.value, row.constant(), "{row}");
        }
    }
}

#[test]
fn three_user_vertices_are_members() {
    for seed in 0..20 {
        let rstar = sample_rates(3, &q("3"), seed).unwrap();
        if rstar.as_slice().iter().all(Rational::is_zero) {
            continue;
        }
        let facets = latent_facets(3, false, Some(&rstar), FacetOptions::default()).unwrap();
        for v in vertices3(&facets).unwrap() {
            let rates = RateVector::new(v.point.to_vec()).unwrap();
            assert!(member(3, &rstar, &rates).unwrap().is_inside());
            assert!(v.tight.len() >= 3);
        }
    }
}

/// The simulator's delivered rates equal the region's formula for the same
/// allocation, and lie inside the region implied by the capacities.
#[test]
fn simulated_rates_lie_in_region() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for trial in 0..40u64 {
        let k = 1 + (trial as usize % 4);
        let (caps, alloc) = sample_instance(k, 5, &mut rng);
        let report = run_end_to_end(k, &caps, &alloc, trial).unwrap();
        assert!(report.success);
        let table = ExchangeTable::new(k).unwrap();
        let exact = Allocation::new(
            alloc
                .iter()
                .map(|row| row.iter().map(|&x| Rational::from(x)).collect())
                .collect(),
        )
        .unwrap();
        let formula = exact.delivered(&table);
        assert_eq!(formula.as_slice(), &report.delivered_rates[..]);
        assert_eq!(predicted_rates(k, &alloc), report.delivered_rates);
        let rstar = RateVector::new(caps.iter().map(|&c| Rational::from(c)).collect()).unwrap();
        let delivered = RateVector::new(report.delivered_rates.clone()).unwrap();
        assert!(member(k, &rstar, &delivered).unwrap().is_inside());
    }
}
