use proptest::prelude::*;

use gffdisc::experiments::{config_hash, Experiment, ExperimentConfig, Format};
use gffdisc::gff::decompose::decompose;
use gffdisc::gff::rates::{rate_function, RateVariant};
use gffdisc::gff::Field;
use gffdisc::interlace::TraceSampler;
use gffdisc::lattice::{BoxSpec, Point, PointSet, Window};
use gffdisc::linalg::dst::BoxDirichlet;
use gffdisc::percolation::contour::disconnection_event;
use gffdisc::percolation::maximal_contour;
use gffdisc::potential::dirichlet::DirichletForm;
use gffdisc::potential::equilibrium::equilibrium;
use gffdisc::potential::green::GreenTable;
use gffdisc::rng::stream;

fn point3(r: i64) -> impl Strategy<Value = Point> {
    prop::array::uniform3(-r..=r).prop_map(|c| Point::new(&c))
}

fn small_set(r: i64, max: usize) -> impl Strategy<Value = PointSet> {
    prop::collection::btree_set(prop::array::uniform3(-r..=r), 1..max)
        .prop_map(|s| s.into_iter().map(|c| Point::new(&c)).collect())
}

fn field_on(r: i64) -> impl Strategy<Value = Field> {
    let n = (2 * r as usize + 1).pow(3);
    prop::collection::vec(-3.0f64..3.0, n).prop_map(move |v| Field::new(Window::centered(3, r), v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn window_index_round_trips(p in point3(4)) {
        let w = Window::centered(3, 4);
        let i = w.index(&p).unwrap();
        prop_assert_eq!(w.point(i), p);
    }

    #[test]
    fn green_is_symmetric_and_harmonic_off_the_origin(c in prop::array::uniform3(-8i64..=8)) {
        let t = GreenTable::shared(3, 12).unwrap();
        let g = t.at(&c);
        prop_assert!((g - t.at(&[c[1], -c[2], c[0]])).abs() <= 1e-12 * g);
        let p = Point::new(&c);
        let avg: f64 = p.neighbors().map(|q| t.at(q.coords())).sum::<f64>() / 6.0;
        let source = if c == [0, 0, 0] { 1.0 } else { 0.0 };
        prop_assert!((g - avg - source).abs() < 1e-9);
    }

    #[test]
    fn capacity_is_monotone_and_subadditive(a in small_set(3, 8), b in small_set(3, 8)) {
        let union: PointSet = a.union(&b).cloned().collect();
        let (ca, cb, cu) = (
            equilibrium(&a).unwrap().cap(),
            equilibrium(&b).unwrap().cap(),
            equilibrium(&union).unwrap().cap(),
        );
        prop_assert!(ca <= cu + 1e-10 && cb <= cu + 1e-10);
        prop_assert!(cu <= ca + cb + 1e-10);
    }

    #[test]
    fn equilibrium_potential_is_one_on_the_set(k in small_set(2, 10)) {
        let eq = equilibrium(&k).unwrap();
        for x in &k {
            prop_assert!((eq.hitting_probability(x) - 1.0).abs() < 1e-9);
        }
        prop_assert!(eq.support().iter().all(|(_, m)| *m >= 0.0));
    }

    #[test]
    fn dirichlet_form_is_symmetric_and_nonnegative(
        f in prop::collection::vec(-2.0f64..2.0, 125),
        g in prop::collection::vec(-2.0f64..2.0, 125),
    ) {
        let form = DirichletForm::new(Window::centered(3, 2));
        prop_assert!(form.energy(&f) >= 0.0);
        prop_assert!((form.bilinear(&f, &g) - form.bilinear(&g, &f)).abs() < 1e-10);
    }

    #[test]
    fn box_solver_inverts_the_generator(rhs in prop::collection::vec(-1.0f64..1.0, 60)) {
        let s = BoxDirichlet::new(&[3, 4, 5]);
        let back = s.apply(&s.solve(&rhs));
        for (a, b) in back.iter().zip(&rhs) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn decomposition_adds_back_to_the_field(phi in field_on(3), r in 0i64..=2) {
        let d = decompose(&phi, &BoxSpec::centered(3, r).to_set()).unwrap();
        for ((f, h), p) in phi.values().iter().zip(d.h.values()).zip(d.psi.values()) {
            prop_assert!((f - h - p).abs() < 1e-12);
        }
        prop_assert!(d.harmonicity_residual() < 1e-10);
    }

    #[test]
    fn disconnection_is_monotone_and_matches_contours(phi in field_on(4), a in -2.0f64..2.0, da in 0.0f64..2.0) {
        let low = disconnection_event(&phi, a, 2, 2.0).unwrap();
        let high = disconnection_event(&phi, a + da, 2, 2.0).unwrap();
        prop_assert!(!low || high);
        prop_assert_eq!(maximal_contour(&phi, a, 2, 2.0).unwrap().is_some(), low);
    }

    #[test]
    fn rates_are_nonpositive(x in -2.0f64..0.0, h in 0.0f64..2.0) {
        for v in [RateVariant::GffContour, RateVariant::GffLower { h }, RateVariant::GffUpper { h }] {
            prop_assert!(rate_function(v, x, 3, 8.0).unwrap() <= 0.0);
        }
    }

    #[test]
    fn config_hash_ignores_output_options(seed in any::<u64>(), n_mc in 2u64..1000) {
        let mut a = ExperimentConfig::defaults(Experiment::Disconnect);
        a.seed = seed;
        a.n_mc = n_mc;
        let mut b = a.clone();
        b.out = Some("elsewhere".into());
        b.format = Format::Json;
        prop_assert_eq!(config_hash(&a), config_hash(&b));
        b.seed = seed.wrapping_add(1);
        prop_assert_ne!(config_hash(&a), config_hash(&b));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn coupled_traces_are_nested(seed in any::<u64>(), mut us in prop::collection::vec(0.05f64..2.0, 2..4)) {
        us.sort_by(f64::total_cmp);
        let k = BoxSpec::centered(3, 1).to_set();
        let s = TraceSampler::new(&k, Window::centered(3, 1), 2.0).unwrap();
        let traces = s.sample_coupled(&us, &mut stream(seed, 1, 0)).unwrap();
        for w in traces.windows(2) {
            prop_assert!(w[0].walks <= w[1].walks);
            for (lo, hi) in w[0].occupied.iter().zip(&w[1].occupied) {
                prop_assert!(!lo || *hi);
            }
        }
    }
}
