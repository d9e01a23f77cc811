use std::collections::BTreeMap;

use fermi_rg::config::LadderDemoSpec;
use fermi_rg::kernel_algebra::{Kernel4, LegSpace, Point, PointKind};
use fermi_rg::ladder_engine::{
    bubble, d7_form, delta_ladder_telescope, ladder_decay_report, ladder_l, ladder_recursion, ladder_terms,
    ladder_values_table, scalar_ladder, CountertermFamily, LadderConfig, LadderGrid, Shift,
};
use fermi_rg::model_scales::{zero_fn, Scales};
use fermi_rg::scenario::ladder_setup;
use fermi_rg::{Complex64, Error, ScaleInterval, ScaleParams};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn setup(seed: u64) -> (LadderGrid, BTreeMap<i32, Kernel4>, CountertermFamily, i32) {
    ladder_setup(&ScaleParams::default(), &LadderDemoSpec::default(), seed).unwrap()
}

fn cfg() -> LadderConfig {
    LadderConfig {
        lmax: 4,
        ..Default::default()
    }
}

fn random_matrix(d: usize, r: &mut ChaCha8Rng) -> DMatrix<Complex64> {
    DMatrix::from_fn(d, d, |_, _| Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)))
}

fn scalar_kernel(v: Complex64) -> Kernel4 {
    let sp = LegSpace::custom(1, 1, vec![Point { kind: PointKind::Position { x: 0 }, spin: 0 }]);
    let mut k = Kernel4::zeros(sp, false);
    k.set([0, 0, 0, 0], v);
    k
}

#[test]
fn scalar_ladder_oracle() {
    let r = Complex64::new(0.3, 0.1);
    let c = Complex64::new(-0.7, 0.4);
    let terms = ladder_terms(&DMatrix::from_element(1, 1, r), &DMatrix::from_element(1, 1, c), 6);
    for (l, t) in terms.iter().enumerate() {
        let want = r * (c * r).powu(l as u32 + 1);
        assert!((t[(0, 0)] - want).norm() < 1e-15);
        assert!((scalar_ladder(r, c, l as u32 + 1) - want).norm() < 1e-15);
    }
    let k = scalar_kernel(r);
    let lifted = DMatrix::from_element(1, 1, c);
    let l3 = ladder_l(3, &k, &lifted).unwrap();
    assert!((l3.get([0; 4]) - scalar_ladder(r, c, 3)).norm() < 1e-15);
    assert_eq!(ladder_l(0, &k, &lifted).unwrap().get([0; 4]), r);
}

#[test]
fn decay_report_of_a_scalar_rung() {
    let lam = 0.2;
    let c = 1.5;
    let k = scalar_kernel(Complex64::new(lam, 0.0));
    let (rows, slope) = ladder_decay_report(&k, &DMatrix::from_element(1, 1, Complex64::new(c, 0.0)), 6).unwrap();
    for (l, v) in &rows {
        let want = lam.powi(*l as i32 + 1) * c.powi(*l as i32);
        assert!((v - want).abs() <= 1e-14 * want, "l {l}");
    }
    assert!((slope - (lam * c).ln()).abs() < 1e-12);
    assert!(slope < 0.0);
    let (zero_rows, _) = ladder_decay_report(&scalar_kernel(Complex64::new(0.0, 0.0)), &DMatrix::from_element(1, 1, Complex64::new(c, 0.0)), 4).unwrap();
    assert!(zero_rows.iter().all(|r| r.1 == 0.0));
}

#[test]
fn zero_rung_gives_zero_ladders() {
    let k = scalar_kernel(Complex64::new(0.0, 0.0));
    assert!(ladder_l(4, &k, &DMatrix::from_element(1, 1, Complex64::new(3.0, 0.0))).unwrap().is_zero());
}

#[test]
fn bubble_symmetries() {
    let sp = LegSpace::positions(2);
    let d = 2 * sp.len();
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let a = random_matrix(d, &mut r);
    let b = random_matrix(d, &mut r);
    let ab = bubble(sp.clone(), &a, &b).unwrap();
    let ba = bubble(sp.clone(), &b, &a).unwrap();
    assert_eq!(ab.max_abs_diff(&ba).unwrap(), 0.0);
    assert_eq!(ab.max_abs_diff(&ab.permute([1, 0, 3, 2])).unwrap(), 0.0);
    let aa = bubble(sp.clone(), &a, &a).unwrap();
    let dd = aa.dim();
    for i in 0..dd.pow(4) {
        let z = [i / (dd * dd * dd), (i / (dd * dd)) % dd, (i / dd) % dd, i % dd];
        let want = a[(z[0], z[2])] * a[(z[1], z[3])] * 2.0;
        assert!((aa.get(z) - want).norm() < 1e-14);
    }
    assert!(matches!(bubble(sp, &DMatrix::from_element(3, 3, a[(0, 0)]), &b), Err(Error::Shape(_))));
}

#[test]
fn grid_bubble_ph_reduction_is_inversion_symmetric() {
    let (grid, _, p, top) = setup(2);
    let v = p.total(&grid.scales);
    for j in grid.scales.params.j0..=top {
        let a = grid.covariance_matrix(ScaleInterval::Single(j), &v).unwrap();
        let b = grid.covariance_matrix(ScaleInterval::AtLeast(j + 1), &v).unwrap();
        let c = grid.bubble(&a, &b).unwrap().bubble_reduce_ph().unwrap();
        assert!(c.inversion_residual() <= 1e-14 * c.sup_norm().max(1e-300), "j {j}");
    }
}

#[test]
fn compound_recursion_matches_closed_form() {
    for seed in [3, 4, 5] {
        let (grid, f, p, top) = setup(seed);
        let v = p.total(&grid.scales);
        let rec = ladder_recursion(&grid, &f, &Shift::Compound(v.clone()), top, &cfg()).unwrap();
        let closed = d7_form(&grid, &f, &v, top, &cfg()).unwrap();
        for (j, l) in &rec.ladders {
            assert!(l.max_abs_diff(&closed[j]).unwrap() <= 1e-12, "seed {seed} scale {j}");
            assert!(l.sup_norm() > 0.0);
            assert!(l.inversion_residual() <= 1e-12);
            assert!(closed[j].inversion_residual() <= 1e-12);
        }
    }
}

#[test]
fn telescoping_identity() {
    for seed in [6, 7] {
        let (grid, f, p, top) = setup(seed);
        let tel = delta_ladder_telescope(&grid, &p, &f, top, &cfg()).unwrap();
        assert!(tel.residual <= 1e-12, "seed {seed}: {}", tel.residual);
        assert!(tel.lhs_sup > 0.0);
        for run in [&tel.iterated, &tel.compound] {
            for l in run.ladders.values() {
                assert!(l.inversion_residual() <= 1e-12);
            }
        }
    }
}

#[test]
fn without_counterterms_both_ladders_agree() {
    let (grid, f, _, top) = setup(8);
    let none = CountertermFamily::zero();
    let tel = delta_ladder_telescope(&grid, &none, &f, top, &cfg()).unwrap();
    assert_eq!(tel.lhs_sup, 0.0);
    assert_eq!(tel.residual, 0.0);
    assert!(tel.delta_norms.values().all(|v| *v == 0.0));
    let it = ladder_recursion(&grid, &f, &Shift::Iterated(none), top, &cfg()).unwrap();
    let co = ladder_recursion(&grid, &f, &Shift::Compound(zero_fn()), top, &cfg()).unwrap();
    for (j, l) in &it.ladders {
        assert_eq!(l.max_abs_diff(&co.ladders[j]).unwrap(), 0.0);
    }
}

#[test]
fn zero_rungs_give_zero_ladders() {
    let (grid, f, p, top) = setup(9);
    let zero: BTreeMap<i32, Kernel4> = f.iter().map(|(j, k)| (*j, k.scale_re(0.0))).collect();
    let run = ladder_recursion(&grid, &zero, &Shift::Iterated(p), top, &cfg()).unwrap();
    assert!(run.ladders.values().all(|l| l.is_zero()));
    let closed = d7_form(&grid, &zero, &zero_fn(), top, &cfg()).unwrap();
    assert!(closed.values().all(|l| l.is_zero()));
}

#[test]
fn large_rungs_are_reported_as_divergent() {
    let spec = LadderDemoSpec {
        amplitude: 1.0,
        ..Default::default()
    };
    let (grid, f, p, top) = ladder_setup(&ScaleParams::default(), &spec, 10).unwrap();
    let r = ladder_recursion(&grid, &f, &Shift::Compound(p.total(&grid.scales)), top, &LadderConfig::default());
    assert!(matches!(r, Err(Error::LadderDivergence(_))));
}

#[test]
fn grid_construction_errors() {
    let scales = Scales::quadratic(ScaleParams::default()).unwrap();
    assert!(matches!(LadderGrid::new(scales.clone(), 0, 3), Err(Error::Config(_))));
    assert!(matches!(LadderGrid::new(scales, 2, 10), Err(Error::ScaleRange { .. })));
}

#[test]
fn ladder_values_export() {
    let (grid, f, p, top) = setup(11);
    let run = ladder_recursion(&grid, &f, &Shift::Compound(p.total(&grid.scales)), top, &cfg()).unwrap();
    let t = ladder_values_table(&grid, run.last().unwrap()).unwrap();
    assert_eq!(t.columns, vec!["t0", "abs_t", "re", "im"]);
    assert_eq!(t.rows.len(), grid.n);
    assert_eq!(t.rows[0][0].as_f64(), Some(0.0));
    assert_eq!(t.rows[0][1].as_f64(), Some(0.0));
}

#[test]
fn recursion_is_independent_of_worker_count() {
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let (grid, f, p, top) = setup(12);
            let tel = delta_ladder_telescope(&grid, &p, &f, top, &cfg()).unwrap();
            tel.iterated.last().unwrap().data.clone()
        })
    };
    assert_eq!(run(1), run(4));
}
