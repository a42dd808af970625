use fragsim::frag_engine::{Engine, Focus, FragmentationConfig, Side};
use fragsim::geometric::{kary_extinction, KaryConfig};
use fragsim::mass_partition::l1_distance;
use fragsim::rng::stream;
use fragsim::stats::{ks_statistic_sorted, tv_between};
use fragsim::{DislocationLaw, Geometry, LawKind, MassPartition};
use proptest::prelude::*;

fn masses() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, 0..12)
}

fn part(v: &[f64]) -> MassPartition {
    MassPartition::rearrange(v).unwrap()
}

fn law() -> impl Strategy<Value = DislocationLaw> {
    prop_oneof![
        Just(DislocationLaw::binary_uniform()),
        (0.5..0.99f64).prop_map(|a| DislocationLaw::new(LawKind::BinaryFixed(a)).unwrap()),
        (2usize..6).prop_map(|k| DislocationLaw::kary(k).unwrap()),
        (2usize..6, 0.2..3.0f64)
            .prop_map(|(k, t)| DislocationLaw::new(LawKind::DirichletSorted { k, theta: t }).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn rearrange_is_idempotent_and_order_blind(v in masses(), seed in any::<u64>()) {
        let a = part(&v);
        prop_assert_eq!(&part(a.masses()), &a);
        let mut w = v.clone();
        let n = w.len();
        for i in (1..n).rev() {
            w.swap(i, (seed as usize ^ i.wrapping_mul(0x9e37)) % (i + 1));
        }
        prop_assert_eq!(part(&w), a);
    }

    #[test]
    fn l1_triangle_inequality(a in masses(), b in masses(), c in masses()) {
        let (a, b, c) = (part(&a), part(&b), part(&c));
        prop_assert!(l1_distance(&a, &c) <= l1_distance(&a, &b) + l1_distance(&b, &c) + 1e-12);
        prop_assert_eq!(l1_distance(&a, &b), l1_distance(&b, &a));
    }

    #[test]
    fn rearrangement_is_l1_contractive(v in prop::collection::vec(0.0..1.0f64, 1..12), noise in prop::collection::vec(-0.05..0.05f64, 12)) {
        let w: Vec<f64> = v.iter().zip(&noise).map(|(x, e)| (x + e).max(0.0)).collect();
        let eps: f64 = v.iter().zip(&w).map(|(x, y)| (x - y).abs()).sum();
        prop_assert!(l1_distance(&part(&v), &part(&w)) <= eps + 1e-12);
    }

    #[test]
    fn merge_commutes_with_scale(a in masses(), b in masses(), x in 0.01..10.0f64) {
        let (a, b) = (part(&a), part(&b));
        let lhs = MassPartition::merge(&[a.clone(), b.clone()]).scale(x).unwrap();
        let rhs = MassPartition::merge(&[a.scale(x).unwrap(), b.scale(x).unwrap()]);
        prop_assert!(l1_distance(&lhs, &rhs) <= 1e-12 * (1.0 + lhs.total()));
    }

    #[test]
    fn dislocation_samples_are_ordered_and_conservative(law in law(), seed in any::<u64>()) {
        let mut rng = stream(seed);
        for _ in 0..200 {
            let s = law.sample(&mut rng);
            prop_assert!((s.total() - 1.0).abs() <= 1e-12);
            prop_assert!(s.masses().windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(s.largest() < 1.0);
        }
    }

    #[test]
    fn geometric_laws_sample_on_their_lattice(k in 2usize..7, seed in any::<u64>()) {
        let law = DislocationLaw::kary(k).unwrap();
        let r = 1.0 / k as f64;
        prop_assert_eq!(law.is_geometric(), Geometry::Geometric(r));
        let mut rng = stream(seed);
        for _ in 0..50 {
            for &m in law.sample(&mut rng).masses() {
                let e = m.ln() / r.ln();
                prop_assert!((e - e.round()).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn ks_and_tv_are_symmetric_and_bounded(a in prop::collection::vec(-5.0..5.0f64, 1..60), b in prop::collection::vec(-5.0..5.0f64, 1..60)) {
        let sort = |mut v: Vec<f64>| { v.sort_by(f64::total_cmp); v };
        let (a, b) = (sort(a), sort(b));
        let d = ks_statistic_sorted(&a, &b);
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, ks_statistic_sorted(&b, &a));
        let p: Vec<f64> = a.iter().map(|x| x.abs()).collect();
        let q: Vec<f64> = b.iter().take(p.len()).map(|x| x.abs()).chain(std::iter::repeat(0.0)).take(p.len()).collect();
        prop_assert_eq!(tv_between(&p, &q), tv_between(&q, &p));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn engine_splits_conserve_mass_and_spine_identities_hold(law in law(), seed in any::<u64>(), alpha in -2.0..-0.5f64) {
        let cfg = FragmentationConfig::new(alpha, law, 1e-3, seed).unwrap();
        let eng = Engine::unfocused(cfg, 8.0).unwrap();
        let r = eng.simulate(seed).unwrap();
        prop_assert!(r.max_conservation_error() <= 1e-12);
        let steps = r.spine();
        for w in steps.windows(2) {
            let (p, s) = (&w[0], &w[1]);
            if s.flagged {
                break;
            }
            prop_assert!(s.y > 1.0 && s.theta > 0.0 && s.theta < 1.0);
            prop_assert!((s.theta + s.delta.total() - 1.0).abs() <= 1e-12);
            let ratio = (s.z / p.z).powf(1.0 / alpha);
            prop_assert!((s.y * s.theta - ratio).abs() <= 1e-12 * ratio.max(1.0), "{} vs {}", s.y * s.theta, ratio);
        }
        let mut prev = f64::INFINITY;
        for j in 0..=20 {
            let m = r.state_at(r.zeta * j as f64 / 20.0, Side::Value).unwrap().total();
            prop_assert!(m <= prev + 1e-12);
            prev = m;
        }
    }

    #[test]
    fn kary_spine_masses_are_exact_powers(k in 2usize..5, seed in any::<u64>()) {
        let law = DislocationLaw::kary(k).unwrap();
        let eng = Engine::unfocused(FragmentationConfig::new(-1.0, law, 1e-4, seed).unwrap(), 8.0).unwrap();
        let rec = eng.simulate_focused(seed, Focus::Full).unwrap();
        for f in [0.0, 0.25, 0.5, 0.75, 0.99] {
            let m = rec.spine_mass_at(f * rec.zeta, Side::Value);
            let e = -m.ln() / (k as f64).ln();
            prop_assert!((e - e.round()).abs() <= 1e-12, "mass {}", m);
        }
        let run = kary_extinction(&KaryConfig::new(k, -1.0, 1e-4, seed).unwrap(), seed);
        prop_assert!(run.t.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(run.z.iter().all(|&z| z > 0.0));
        prop_assert!(*run.t.last().unwrap() < run.zeta);
    }
}
