use ale_core::{
    ale_first, build_quantile_partition, generate_synthetic, m_effect, pd_effect, Counted, Dataset, ExprModel, Family,
    GeneratorSpec, PdGrid,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn expr(src: &str) -> ExprModel {
    ExprModel::parse(src).unwrap()
}

fn gen(family: Family, n: usize, seed: u64) -> Dataset {
    generate_synthetic(&GeneratorSpec { family, n, seed }).unwrap()
}

fn independent(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = Array2::from_shape_fn((n, 2), |_| rng.random_range(0.0..2.0));
    Dataset::new(vec!["x1".into(), "x2".into()], values, None).unwrap()
}

fn demean(v: &[f64]) -> Vec<f64> {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - m).collect()
}

#[test]
fn pd_of_a_correlated_product_is_flat() {
    let data = gen(Family::GaussianPair { rho: 0.8 }, 50_000, 4);
    let pd = pd_effect(&expr("x1*x2"), &data, &[0], &PdGrid::Quantile(25)).unwrap();
    let (lo, hi) = (pd.grid[0][1], pd.grid[0][23]);
    for (x, v) in pd.grid[0].iter().zip(&pd.values) {
        if *x >= lo && *x <= hi {
            assert!(v.abs() < 0.05, "pd({x}) = {v}");
        }
    }
}

#[test]
fn pd_of_an_additive_model_is_the_component_plus_a_constant() {
    let data = gen(Family::example1(), 300, 2);
    let pd = pd_effect(&expr("x1^3 + exp(x2)"), &data, &[0], &PdGrid::Quantile(20)).unwrap();
    let shift: Vec<f64> = pd.grid[0].iter().zip(&pd.values).map(|(x, v)| v - x.powi(3)).collect();
    assert!(shift.iter().all(|s| (s - shift[0]).abs() < 1e-12));
}

#[test]
fn pd_costs_grid_size_times_n() {
    let data = gen(Family::example1(), 200, 1);
    let m = Counted::new(expr("x1 + x2^2"));
    let pd = pd_effect(&m, &data, &[0], &PdGrid::Quantile(50)).unwrap();
    assert_eq!(m.ledger().total(), 10_000);
    assert_eq!(pd.evaluations, 10_000);

    let m = Counted::new(expr("x1 + x2^2"));
    let pd = pd_effect(&m, &data, &[0, 1], &PdGrid::Quantile(7)).unwrap();
    assert_eq!(m.ledger().total(), 49 * 200);
    assert_eq!(pd.values.len(), 49);
}

#[test]
fn pd_default_grid_is_the_upper_breakpoints() {
    let data = gen(Family::example2(), 120, 3);
    let pd = pd_effect(&expr("x2"), &data, &[1], &PdGrid::Quantile(12)).unwrap();
    let p = build_quantile_partition(&data, 1, 12).unwrap();
    assert_eq!(pd.grid[0], p.breakpoints()[1..].to_vec());
}

#[test]
fn pd_with_constant_background_is_direct_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let values = Array2::from_shape_fn((40, 2), |(_, j)| if j == 0 { rng.random_range(-1.0..1.0) } else { 0.7 });
    let data = Dataset::new(vec!["x1".into(), "x2".into()], values, None).unwrap();
    let f = expr("exp(x1) * x2 + x1*x2^2");
    let grid = vec![vec![-0.9, -0.2, 0.0, 0.4, 1.3]];
    let pd = pd_effect(&f, &data, &[0], &PdGrid::Points(grid.clone())).unwrap();
    for (x, v) in grid[0].iter().zip(&pd.values) {
        assert!((v - f.eval_row(&[*x, 0.7]).unwrap()).abs() < 1e-14);
    }
}

#[test]
fn pd_and_ale_agree_for_additive_models() {
    let data = independent(5_000, 6);
    let f = expr("sqrt(x1) + x2^2");
    let k = 20;
    let pd = pd_effect(&f, &data, &[0], &PdGrid::Quantile(k)).unwrap();
    let ale = ale_first(&f, &data, 0, k).unwrap();
    let (a, b) = (demean(&pd.values), demean(&ale.centered[1..]));
    assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-10));
}

#[test]
fn pd_rejects_bad_grids() {
    let data = independent(10, 1);
    assert!(pd_effect(&expr("x1"), &data, &[0], &PdGrid::Points(vec![])).is_err());
    assert!(pd_effect(&expr("x1"), &data, &[0], &PdGrid::Points(vec![vec![]])).is_err());
    assert!(pd_effect(&expr("x1"), &data, &[3], &PdGrid::Quantile(4)).is_err());
}

#[test]
fn m_plot_absorbs_the_correlated_feature() {
    let data = gen(Family::example1(), 2_000, 1);
    let m = m_effect(&expr("x1 + x2^2"), &data, 0, 20).unwrap();
    let n = m.grid.len() as f64;
    let (mx, my) = (m.grid.iter().sum::<f64>() / n, m.values.iter().sum::<f64>() / n);
    let sxy: f64 = m.grid.iter().zip(&m.values).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = m.grid.iter().map(|x| (x - mx).powi(2)).sum();
    // x + E[X2^2 | X1 = x] rises at about 2 over the unit segment, ALE at exactly 1
    assert!(sxy / sxx > 1.6, "slope {}", sxy / sxx);
}

#[test]
fn m_plot_of_independent_additive_model_is_the_component() {
    let data = independent(100_000, 7);
    let m = m_effect(&expr("x1^2 + 3*x2"), &data, 0, 20).unwrap();
    let truth: Vec<f64> = m.grid.iter().map(|x| x * x).collect();
    let (a, b) = (demean(&m.values), demean(&truth));
    let worst = a.iter().zip(&b).fold(0.0f64, |w, (x, y)| w.max((x - y).abs()));
    assert!(worst < 0.05, "worst {worst}");
}

#[test]
fn m_plot_bookkeeping() {
    let data = gen(Family::example2(), 333, 8);
    let c = Counted::new(expr("2.5"));
    let m = m_effect(&c, &data, 1, 30).unwrap();
    assert_eq!(c.ledger().total(), 333);
    assert_eq!(m.sizes.iter().sum::<usize>(), 333);
    assert!(m.sizes.iter().all(|&s| s > 0));
    assert!(m.values.iter().all(|&v| v == 2.5));
}
