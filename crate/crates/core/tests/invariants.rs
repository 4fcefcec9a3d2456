use proptest::prelude::*;
use rspin_core::coeffring::{int, parse_ring_elem, q_power, ratio, Coeff};
use rspin_core::correlators::relations::vanishes;
use rspin_core::correlators::{CorrelatorTable, Gate, Provenance};
use rspin_core::{CorrelatorKey, Insertion, Rational, RingElem};

fn ring_elem(r: u32) -> impl Strategy<Value = RingElem> {
    prop::collection::vec((-6i64..=6, 1i64..=4), RingElem::degree(r)).prop_map(move |cs| {
        let coeffs: Vec<Rational> = cs.into_iter().map(|(n, d)| ratio(n, d)).collect();
        RingElem::from_coeffs(r, &coeffs)
    })
}

fn open_key(r: u32) -> impl Strategy<Value = CorrelatorKey> {
    (0u32..=1, prop::collection::vec((0..r as i32, 0u32..3), 0..4), 0u32..4)
        .prop_map(|(g, ins, k)| CorrelatorKey::open(g, ins.into_iter().map(|(a, d)| Insertion::new(a, d)), k))
}

proptest! {
    #[test]
    fn ring_multiplication_is_commutative_and_associative(a in ring_elem(3), b in ring_elem(3), c in ring_elem(3)) {
        prop_assert_eq!(a.mul(&b), b.mul(&a));
        prop_assert_eq!(a.mul(&b).mul(&c), a.mul(&b.mul(&c)));
    }

    #[test]
    fn q_shifts_compose(a in ring_elem(2), e in -9i64..9, f in -9i64..9) {
        prop_assert_eq!(a.shift(e).shift(f), a.shift(e + f));
        prop_assert_eq!(q_power(e, 2).mul(&q_power(-e, 2)), RingElem::from_rational(2, int(1)));
    }

    #[test]
    fn ring_text_form_round_trips(a in ring_elem(4)) {
        prop_assert_eq!(parse_ring_elem(4, &a.to_string()).unwrap(), a);
    }

    #[test]
    fn key_ignores_insertion_order(key in open_key(3)) {
        let mut rev: Vec<Insertion> = key.insertions().to_vec();
        rev.reverse();
        prop_assert_eq!(CorrelatorKey::open(key.g, rev, key.k), key);
    }

    #[test]
    fn gate_failures_vanish(key in open_key(3)) {
        if key.dimension_gate(3).unwrap() == Gate::Zero {
            prop_assert!(vanishes(&key, 3));
        }
    }

    #[test]
    fn table_lines_round_trip(keys in prop::collection::btree_set(open_key(2), 0..8), n in -5i64..5) {
        let mut table = CorrelatorTable::new();
        for key in keys {
            let v = if key.dimension_gate(2).unwrap() == Gate::Candidate { int(n) } else { int(0) };
            table.insert(key, v, Provenance::Base).unwrap();
        }
        let back = CorrelatorTable::parse_json_lines(&table.to_json_lines(), 2, "mem", Provenance::Base).unwrap();
        prop_assert_eq!(back, table);
    }
}
