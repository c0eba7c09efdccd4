use ladder_core::kernels::{
    apply_symmetry, conjugate_rates, enumerate_bonds, is_weakly_irreducible, Symmetry,
};
use ladder_core::measures::{
    blocking_profile, multilane_nu_rho, solve_f, step_config, tasep_profile, MeasureSpec, StepPos,
};
use ladder_core::{Config, Kernel, LaneGeometry, MultiLaneRates, Site, TwoLaneRates};

fn rates(d0: f64, l0: f64, d1: f64, l1: f64, p: f64, q: f64) -> TwoLaneRates {
    TwoLaneRates::new(d0, l0, d1, l1, p, q).unwrap()
}

#[test]
fn heights() {
    let g = LaneGeometry::two_lane_closed(6).unwrap();
    for n in 0..4 {
        let c = Config::from_fn(g, |s| s.column > -n);
        assert_eq!(c.h2().unwrap(), 2 * n);
    }
    let mut c = Config::from_fn(g, |s| s.column > 0);
    assert_eq!(c.h2().unwrap(), 0);
    c.set(Site::new(0, 0), true).unwrap();
    assert_eq!(c.h2().unwrap(), 1);
}

#[test]
fn column_sums_and_lanes() {
    let g = LaneGeometry::two_lane_ring(8).unwrap();
    let mut c = Config::empty(g);
    c.set(Site::new(3, 1), true).unwrap();
    assert_eq!(c.column_sum(3).unwrap(), 1);
    assert_eq!(c.lane_view(0).unwrap(), vec![0; 8]);
    let mut expected = vec![0; 8];
    expected[3] = 1;
    assert_eq!(c.lane_view(1).unwrap(), expected);
    assert_eq!(Config::full(g).column_sum(5).unwrap(), 2);
}

#[test]
fn bond_enumeration_examples() {
    let ring = LaneGeometry::two_lane_ring(2).unwrap();
    let bonds = enumerate_bonds(&Kernel::TwoLane(rates(1.0, 0.0, 0.0, 0.0, 0.0, 0.0)), &ring).unwrap();
    assert_eq!(bonds.len(), 2);
    assert!(bonds.iter().all(|b| b.from.lane == 0 && b.to.lane == 0 && b.rate == 1.0));

    let closed = LaneGeometry::two_lane_closed(1).unwrap();
    let bonds = enumerate_bonds(&Kernel::TwoLane(rates(0.0, 0.0, 0.0, 0.0, 1.0, 0.0)), &closed).unwrap();
    assert_eq!(bonds.len(), 3);
    assert!(bonds.iter().all(|b| b.from.lane == 0 && b.to.lane == 1));

    let torus = LaneGeometry::torus_closed(3, 0).unwrap();
    let ml = MultiLaneRates::new(vec![0.0; 3], vec![0.0; 3], vec![0.0, 1.0, 0.0]).unwrap();
    let bonds = enumerate_bonds(&Kernel::MultiLane(ml), &torus).unwrap();
    assert_eq!(bonds.len(), 3);
    for b in &bonds {
        assert_eq!(b.to.lane, (b.from.lane + 1) % 3);
    }
}

#[test]
fn symmetry_examples() {
    let r = rates(2.0, 1.0, 3.0, 0.0, 5.0, 4.0);
    assert_eq!(conjugate_rates(Symmetry::LaneReflect, &r).as_tuple(), (1.0, 2.0, 0.0, 3.0, 5.0, 4.0));
    assert_eq!(conjugate_rates(Symmetry::LaneExchange, &r).as_tuple(), (3.0, 0.0, 2.0, 1.0, 4.0, 5.0));
    assert_eq!(conjugate_rates(Symmetry::ParticleHole, &r).as_tuple(), (1.0, 2.0, 0.0, 3.0, 4.0, 5.0));

    let g = LaneGeometry::two_lane_ring(5).unwrap();
    assert_eq!(apply_symmetry(Symmetry::ParticleHole, &Config::empty(g)).unwrap(), Config::full(g));
    let lane0 = Config::from_fn(g, |s| s.lane == 0);
    let lane1 = Config::from_fn(g, |s| s.lane == 1);
    assert_eq!(apply_symmetry(Symmetry::LaneExchange, &lane0).unwrap(), lane1);
}

#[test]
fn irreducibility_examples() {
    assert!(!is_weakly_irreducible(&Kernel::TwoLane(rates(1.0, 0.0, 1.0, 0.0, 1.0, 0.0))));
    assert!(is_weakly_irreducible(&Kernel::TwoLane(rates(1.0, 0.0, 1.0, 0.0, 1.0, 0.5))));
    assert!(is_weakly_irreducible(&Kernel::TwoLane(rates(1.0, 0.0, 0.0, 1.0, 1.0, 0.0))));
}

#[test]
fn solve_f_examples() {
    assert_eq!(solve_f(1.0, 1.0, 1.2).unwrap(), (0.6, 0.6));
    assert_eq!(solve_f(1.0, 0.0, 0.7).unwrap(), (0.0, 0.7));
    let (a, b) = solve_f(1.0, 0.0, 1.4).unwrap();
    assert!((a - 0.4).abs() < 1e-15 && b == 1.0);
    let (a, b) = solve_f(4.0, 1.0, 1.0).unwrap();
    assert!((a - 1.0 / 3.0).abs() < 1e-15 && (b - 2.0 / 3.0).abs() < 1e-15);
    for (p, q) in [(1.0, 2.0), (3.0, 0.0)] {
        assert_eq!(solve_f(p, q, 0.0).unwrap(), (0.0, 0.0));
        assert_eq!(solve_f(p, q, 2.0).unwrap(), (1.0, 1.0));
    }
}

#[test]
fn lane_densities_increase_strictly() {
    for (p, q) in [(1.0, 0.3), (0.2, 2.0), (1.0, 1.0)] {
        let mut prev = (-1.0, -1.0);
        for k in 0..=10_000 {
            let (a, b) = solve_f(p, q, k as f64 / 5000.0).unwrap();
            assert!(a > prev.0 && b > prev.1, "p = {p}, q = {q}, k = {k}");
            prev = (a, b);
        }
    }
}

#[test]
fn profile_examples() {
    let r = rates(2.0, 1.0, 2.0, 1.0, 3.0, 1.0);
    assert!((blocking_profile(&r, Site::new(0, 0), 1.0).unwrap() - 0.5).abs() < 1e-15);
    assert!((blocking_profile(&r, Site::new(1, 1), 1.0).unwrap() - 6.0 / 7.0).abs() < 1e-15);
    assert_eq!(tasep_profile(0, 0.0, 0).0, 0.0);
    assert_eq!(tasep_profile(0, 0.0, 1).0, 1.0);
}

#[test]
fn sampler_examples() {
    let g = LaneGeometry::two_lane_ring(16).unwrap();
    let c = MeasureSpec::TwoRateBernoulli { rho0: 1.0, rho1: 0.0 }.sample_seeded(&g, 1).unwrap();
    assert_eq!(c, Config::from_fn(g, |s| s.lane == 0));

    let closed = LaneGeometry::two_lane_closed(5).unwrap();
    let spec = MeasureSpec::DiracStep { i: StepPos::PlusInf, j: StepPos::Finite(3) };
    let c = spec.sample_seeded(&closed, 1).unwrap();
    assert_eq!(c, step_config(closed, StepPos::PlusInf, StepPos::Finite(3)).unwrap());
    assert_eq!(c.lane_count(0), 0);
    assert_eq!(c.lane_count(1), 2);
}

#[test]
fn density_ratio_example() {
    let g = LaneGeometry::two_lane_closed(3).unwrap();
    let spec = MeasureSpec::ReversibleProfile { theta: 2.0, c: 1.0, lambda: 1.0, center: 0 };
    let a = Config::from_fn(g, |s| s.column > 1);
    let mut b = a.clone();
    b.set(Site::new(1, 0), true).unwrap();
    assert_eq!(spec.log_density_ratio(&a, &a).unwrap(), 0.0);
    assert!((spec.log_density_ratio(&b, &a).unwrap() - 2f64.ln()).abs() < 1e-14);
}

#[test]
fn multilane_bernoulli_marginals() {
    let g = LaneGeometry::torus_ring(3, 6).unwrap();
    for (rho, density) in [(3.0, 1.0), (1.5, 0.5)] {
        let m = multilane_nu_rho(3, rho).unwrap().marginals(&g).unwrap();
        assert!(m.iter().flatten().all(|&x| (x - density).abs() < 1e-15));
    }
}
