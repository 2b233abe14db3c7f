use laguerre_core::density::DensityModel;
use laguerre_core::geometry::{brute_force_cell_of, build_regular_triangulation};
use laguerre_core::ppp::{coverage_cap, paraboloid_level, sample_ppp, weight_floor, Aabb, PointSample, SimulationWindow, BIAS_BUDGET};
use laguerre_core::rng;
use laguerre_core::stats::mean_se;

#[test]
fn counts_are_poisson_dispersed() {
    let f = DensityModel::beta(2, 1.0).unwrap();
    let inner = Aabb::new(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
    let window = SimulationWindow::uniform(inner, 0.0, 8.0, 0.0).unwrap();
    let counts: Vec<f64> = (0..10_000u64)
        .map(|r| sample_ppp(&f, 1.0, &window, rng::sub_seed(77, &[r])).unwrap().points.len() as f64)
        .collect();
    let (m, _) = mean_se(&counts);
    let var = counts.iter().map(|c| (c - m).powi(2)).sum::<f64>() / (counts.len() - 1) as f64;
    let expected = 15.0 / (8.0 * std::f64::consts::PI) * 32.0;
    assert!((m - expected).abs() < 4.0 * (expected / 1e4).sqrt(), "mean {m} vs {expected}");
    let ratio = var / m;
    assert!((0.94..=1.06).contains(&ratio), "dispersion {ratio}");
}

fn simplices_with_apex_in(sample: &PointSample, inner: &Aabb) -> Vec<[[u64; 3]; 3]> {
    let dual = build_regular_triangulation(&sample.points, 2).unwrap();
    let mut out: Vec<[[u64; 3]; 3]> = dual
        .simplices
        .iter()
        .zip(&dual.apices)
        .filter(|(_, a)| inner.contains(&a.w[..2]))
        .map(|(s, _)| {
            let mut key = s.map(|i| {
                let p = dual.sites[i];
                [p.v[0].to_bits(), p.v[1].to_bits(), p.h.to_bits()]
            });
            key.sort_unstable();
            key
        })
        .collect();
    out.sort_unstable();
    out
}

#[test]
fn sites_above_the_coverage_level_do_not_matter() {
    for (k, f) in [DensityModel::beta(2, 1.0).unwrap(), DensityModel::beta_prime(2, 2.5).unwrap(), DensityModel::gaussian(1.0).unwrap()]
        .into_iter()
        .enumerate()
    {
        let inner = Aabb::centered(2, 1.5).unwrap();
        let cap = paraboloid_level(&f, 1.0, 2, 80.0).unwrap();
        let floor = weight_floor(&f, 1.0, &inner, cap, BIAS_BUDGET).unwrap();
        let window = SimulationWindow::layered(inner, cap, floor).unwrap();
        let full = sample_ppp(&f, 1.0, &window, rng::sub_seed(78, &[k as u64])).unwrap();
        let t = coverage_cap(&full, 1e-6).unwrap();
        assert!(t < cap);
        let mut cut = full.clone();
        cut.points.retain(|p| p.h <= t);
        assert!(cut.points.len() < full.points.len());
        assert_eq!(simplices_with_apex_in(&full, &inner), simplices_with_apex_in(&cut, &inner));
        for i in 0..40 {
            for j in 0..40 {
                let w = [-1.5 + 3.0 * i as f64 / 39.0, -1.5 + 3.0 * j as f64 / 39.0];
                let a = full.points[brute_force_cell_of(&w, &full.points).unwrap().index];
                let b = cut.points[brute_force_cell_of(&w, &cut.points).unwrap().index];
                assert_eq!(a, b);
            }
        }
    }
}
