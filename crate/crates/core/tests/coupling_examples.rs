use ladder_core::kernels::{apply_symmetry, Symmetry};
use ladder_core::{Config, CoupledConfig, LaneGeometry, PairClass, Site};

fn with(base: &Config, site: Site) -> Config {
    let mut c = base.clone();
    c.set(site, true).unwrap();
    c
}

#[test]
fn discrepancy_counts() {
    let g = LaneGeometry::two_lane_closed(6).unwrap();
    let base = Config::from_fn(g, |s| (s.column + s.lane as i64) % 3 == 0);
    let same = CoupledConfig::new(base.clone(), base.clone()).unwrap();
    assert_eq!(same.discrepancy_count(), 0);
    assert_eq!(same.classify().unwrap(), PairClass::Equal);
    let plus = CoupledConfig::new(with(&base, Site::new(1, 1)), base.clone()).unwrap();
    assert_eq!(plus.discrepancy_count(), 1);
    assert_eq!(plus.classify().unwrap(), PairClass::Ge);
    let flipped = apply_symmetry(Symmetry::ParticleHole, &base).unwrap();
    let all = CoupledConfig::new(flipped, base).unwrap();
    assert_eq!(all.discrepancy_count(), 2 * g.length());
}

#[test]
fn sup_inf_and_bowtie_pairs() {
    let g = LaneGeometry::two_lane_closed(8).unwrap();
    // Coupled particles on lane 1 right of 0 except a coupled hole at 2;
    // lane 0 has a coupled particle at -3.
    let base = Config::from_fn(g, |s| match s.lane {
        1 => s.column > 0 && s.column != 2,
        _ => s.column == -3 || s.column > 5,
    });
    let eta = with(&base, Site::new(0, 1));
    let xi = with(&base, Site::new(5, 0));
    let pair = CoupledConfig::new(eta, xi).unwrap();
    assert_eq!(pair.classify().unwrap(), PairClass::SupInf);

    let clean = Config::from_fn(g, |s| match s.lane {
        1 => s.column > 0,
        _ => s.column > 5,
    });
    let pair = CoupledConfig::new(with(&clean, Site::new(0, 1)), with(&clean, Site::new(5, 0))).unwrap();
    assert_eq!(pair.classify().unwrap(), PairClass::BowtieCandidate);
}

#[test]
fn unordered_without_lane_structure() {
    let g = LaneGeometry::two_lane_closed(8).unwrap();
    let base = Config::empty(g);
    // Both discrepancy types on lane 0.
    let eta = with(&base, Site::new(-2, 0));
    let xi = with(&base, Site::new(3, 0));
    let pair = CoupledConfig::new(eta, xi).unwrap();
    assert_eq!(pair.classify().unwrap(), PairClass::Unordered);
}

#[test]
fn translation_moves_discrepancies() {
    let g = LaneGeometry::two_lane_ring(12).unwrap();
    let base = Config::from_fn(g, |s| s.column % 4 == s.lane as i64);
    let eta = with(&base, Site::new(2, 1));
    let pair = CoupledConfig::new(eta.translate(3), base.translate(3)).unwrap();
    let sites: Vec<Site> = pair.discrepancy_sites().collect();
    // (tau_k eta)(z) = eta(z + k): column 2 moves to 2 - 3 = -1, that is 11.
    assert_eq!(sites, vec![Site::new(11, 1)]);
}
