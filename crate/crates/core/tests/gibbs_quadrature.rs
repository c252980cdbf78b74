use annealnet::gibbs::{gibbs_on_grid, pi_of_f, weak_limit_check, GridSpec, TestFunction};
use annealnet::objectives::{make_cosine_well, make_quadratic};

#[test]
fn refinement_is_stable() {
    let obj = make_cosine_well(1, 5.0, 3.0).unwrap();
    let f = TestFunction::bump(0.0, 1.0);
    let coarse = gibbs_on_grid(&obj, 0.5, &GridSpec::cube(1, -6.0, 6.0, 2001)).unwrap();
    let fine = gibbs_on_grid(&obj, 0.5, &GridSpec::cube(1, -6.0, 6.0, 8001)).unwrap();
    assert!((pi_of_f(&coarse, &f) - pi_of_f(&fine, &f)).abs() < 1e-6);
}

#[test]
fn cosine_well_concentrates() {
    let obj = make_cosine_well(1, 1.0, 1.0).unwrap();
    let g = gibbs_on_grid(&obj, 0.3, &GridSpec::cube(1, -4.0, 4.0, 4001)).unwrap();
    assert!(g.mass_where(|x| x[0].abs() <= 0.5) > 0.99);
}

#[test]
fn temperature_sweeps_approach_the_limit() {
    let grid1 = GridSpec::cube(1, -4.0, 4.0, 4001);
    let q = make_quadratic(1).unwrap();
    let rep = weak_limit_check(
        &q,
        &grid1,
        &[0.4, 0.2, 0.1],
        &[TestFunction::bump(0.0, 1.0)],
    )
    .unwrap();
    assert!(rep.all_monotone());
    let gaps: Vec<f64> = rep.rows.iter().map(|r| r.gap).collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]));

    let cw = make_cosine_well(1, 1.0, 1.0).unwrap();
    let rep = weak_limit_check(
        &cw,
        &grid1,
        &[0.4, 0.2, 0.1],
        &[TestFunction::bump(0.0, 0.5)],
    )
    .unwrap();
    let vals: Vec<f64> = rep.rows.iter().map(|r| r.pi_eps).collect();
    assert!(vals.windows(2).all(|w| w[1] > w[0]) && vals[2] < 1.0);
}

#[test]
fn two_dimensional_quadratic_covariance() {
    let q = make_quadratic(2).unwrap();
    let g = gibbs_on_grid(&q, 0.2, &GridSpec::cube(2, -1.0, 1.0, 401)).unwrap();
    let vx = g_integrate(&g, |x| x[0] * x[0]);
    let cxy = g_integrate(&g, |x| x[0] * x[1]);
    assert!((vx - 0.01).abs() < 1e-4);
    assert!(cxy.abs() < 1e-12);
}

fn g_integrate(m: &annealnet::gibbs::GibbsMeasure, f: impl Fn(&[f64]) -> f64) -> f64 {
    use annealnet::gibbs::Measure;
    m.integrate(&f)
}
