use gtr_core::density::{truncate, ControlRegion, Density};
use gtr_core::quantum::{born_probabilities, to_simplex_state};
use gtr_core::simplex::{from_internal_coords, region_of, to_internal_coords};
use gtr_core::universal::{universal_average_1d, uniform_value, Target};
use gtr_core::{BarycentricState, QuantumState, RegionLabel};
use proptest::prelude::*;

fn state(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = BarycentricState> {
    n.prop_flat_map(|n| prop::collection::vec(0.01f64..1.0, n))
        .prop_map(|w| BarycentricState::from_weights(&w).unwrap())
}

fn pair(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = (BarycentricState, BarycentricState)> {
    n.prop_flat_map(|n| (prop::collection::vec(0.01f64..1.0, n), prop::collection::vec(0.01f64..1.0, n)))
        .prop_map(|(a, b)| (BarycentricState::from_weights(&a).unwrap(), BarycentricState::from_weights(&b).unwrap()))
}

proptest! {
    #[test]
    fn internal_coordinates_round_trip(x in state(2..=8)) {
        let z = to_internal_coords(&x);
        prop_assert_eq!(z.len(), x.n_outcomes() - 1);
        let back = from_internal_coords(&z, x.n_outcomes()).unwrap();
        prop_assert!(back.distance(&x).unwrap() < 1e-12);
    }

    #[test]
    fn internal_coordinates_preserve_distance((a, b) in pair(2..=8)) {
        let (za, zb) = (to_internal_coords(&a), to_internal_coords(&b));
        let dz = za.iter().zip(&zb).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        prop_assert!((dz - a.distance(&b).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn born_rule_ignores_phases(
        w in prop::collection::vec(0.01f64..1.0, 2..7),
        shift in prop::collection::vec(-10.0f64..10.0, 7),
    ) {
        let total: f64 = w.iter().sum();
        let moduli: Vec<f64> = w.iter().map(|v| v / total).collect();
        let zero = vec![0.0; moduli.len()];
        let a = QuantumState::from_polar(&moduli, &zero).unwrap();
        let b = QuantumState::from_polar(&moduli, &shift[..moduli.len()]).unwrap();
        prop_assert_eq!(born_probabilities(&a), born_probabilities(&b));
        prop_assert_eq!(to_simplex_state(&a).unwrap(), to_simplex_state(&b).unwrap());
    }

    #[test]
    fn uniform_region_masses_are_the_state(x in state(2..=7)) {
        let p = Density::uniform(x.n_outcomes()).unwrap().region_probabilities(&x).unwrap();
        prop_assert_eq!(p.as_slice(), x.coords());
    }

    #[test]
    fn truncated_masses_are_conserved(x in state(2..=6), eps in 0.05f64..1.0, v in 0usize..6) {
        let n = x.n_outcomes();
        let rho = truncate(&Density::uniform(n).unwrap(), ControlRegion::corner(n, v % n, eps).unwrap()).unwrap();
        let p = rho.region_probabilities(&x).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p.iter().all(|q| (-1e-12..=1.0 + 1e-12).contains(q)));
    }

    #[test]
    fn state_point_is_boundary_of_all_regions(x in state(2..=6)) {
        let label = region_of(&x, &x).unwrap();
        prop_assert_eq!(label, RegionLabel::Boundary((0..x.n_outcomes()).collect()));
    }

    #[test]
    fn vertices_classify_to_their_own_outcome_complement(x in state(3..=6), i in 0usize..6) {
        // Vertex i lies in every A_j with j != i.
        let n = x.n_outcomes();
        let i = i % n;
        let label = region_of(&BarycentricState::vertex(n, i).unwrap(), &x).unwrap();
        let expected: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        prop_assert_eq!(label, RegionLabel::Boundary(expected));
    }

    #[test]
    fn universal_equals_uniform_small(n in 2usize..=12, i in 1usize..12) {
        prop_assume!(i < n);
        for t in [Target::LeftEnd, Target::RightEnd] {
            prop_assert_eq!(universal_average_1d(n, i, t).unwrap(), uniform_value(n, i, t));
        }
    }
}
