use fermi_rg::kernel_algebra::{
    cauchy_extract, momentum_norm_tilde, ord, perms4, pi_collapse, s_kappa, sct_prime, shear, shear_prime, FdGrid,
    Kernel4, LegSpace, Point, PointKind,
};
use fermi_rg::{Complex64, Error, Momentum};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn inversions(p: &[usize]) -> usize {
    (0..p.len())
        .flat_map(|a| (a + 1..p.len()).map(move |b| (a, b)))
        .filter(|&(a, b)| p[a] > p[b])
        .count()
}

fn antisymmetric_conserving(seed: u64) -> Kernel4 {
    Kernel4::random(LegSpace::positions(2), true, 1.0, &mut rng(seed))
        .antisymmetrize()
        .project_number_conserving()
        .unwrap()
}

fn inversion_symmetric(seed: u64) -> Kernel4 {
    Kernel4::random(LegSpace::positions(2), false, 1.0, &mut rng(seed)).symmetrize_inversion()
}

fn random_b(n: usize, r: &mut ChaCha8Rng) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)))
        .collect()
}

#[test]
fn ord_signs_match_inversion_counts() {
    let (order, sign) = ord(&[0, 0, 1, 1]);
    assert_eq!(order, vec![0, 1, 2, 3]);
    assert_eq!(sign, 1.0);
    let (order, sign) = ord(&[0, 1, 0, 1]);
    assert_eq!(order, vec![0, 2, 1, 3]);
    assert_eq!(sign, -1.0);
    let (order, sign) = ord(&[1, 0, 1, 0]);
    assert_eq!(order, vec![1, 3, 0, 2]);
    assert_eq!(inversions(&order), 3);
    assert_eq!(sign, -1.0);
    for a in [-1i8, 0, 1] {
        for b in [-1i8, 0, 1] {
            for c in [-1i8, 0, 1] {
                for d in [-1i8, 0, 1] {
                    let iv = [a, b, c, d];
                    let (order, sign) = ord(&iv);
                    let want = if inversions(&order) % 2 == 0 { 1.0 } else { -1.0 };
                    assert_eq!(sign, want, "{iv:?}");
                    assert!(order.windows(2).all(|w| iv[w[0]] <= iv[w[1]]));
                }
            }
        }
    }
}

#[test]
fn ord_inverse_undoes_reordering() {
    let f = Kernel4::random(LegSpace::mixed(2, 1), false, 1.0, &mut rng(3));
    for iv in [[1i8, 0, 1, 0], [0, 1, 1, 0], [1, 1, 0, 0], [0, 0, 0, 1]] {
        let back = f.ord_component(iv).ord_inverse(iv);
        assert!(back.max_abs_diff(&f.restrict(iv)).unwrap() <= 1e-15);
    }
}

#[test]
fn antisymmetrization_examples() {
    let f = antisymmetric_conserving(1);
    assert!(f.is_antisymmetric(1e-14));
    assert!(f.antisymmetrize().max_abs_diff(&f).unwrap() <= 1e-14);
    let g = Kernel4::random(LegSpace::positions(2), true, 1.0, &mut rng(2));
    let sym = g.add(&g.permute([1, 0, 2, 3])).unwrap();
    assert!(sym.antisymmetrize().sup_norm() <= 1e-14);
    assert!(g.antisymmetrize().sup_norm() <= g.sup_norm() + 1e-14);
    assert_eq!(perms4().len(), 24);
}

#[test]
fn ant_of_ph_value_is_a_third_of_the_symmetrized_flip() {
    for seed in 0..20 {
        let l = inversion_symmetric(seed);
        assert!(l.is_inversion_symmetric(1e-15));
        let lhs = l.value_ph().unwrap().antisymmetrize().reduce_ph().unwrap();
        let rhs = l.add(&l.flip()).unwrap().scale_re(1.0 / 3.0);
        assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-13, "seed {seed}");
    }
}

#[test]
fn pp_and_ph_values_reconstruct_the_kernel() {
    for seed in 0..50 {
        let f = antisymmetric_conserving(100 + seed);
        let pp = f.reduce_pp().unwrap().value_pp().unwrap();
        let ph = f.reduce_ph().unwrap().value_ph().unwrap();
        let r = pp.add(&ph).unwrap();
        assert!(f.max_abs_diff(&r).unwrap() <= 1e-13, "seed {seed}");
    }
}

#[test]
fn reductions_and_values_of_zero_vanish() {
    let z = Kernel4::zeros(LegSpace::positions(2), true);
    assert!(z.reduce_pp().unwrap().is_zero());
    assert!(z.reduce_ph().unwrap().is_zero());
    let u = Kernel4::zeros(LegSpace::positions(2), false);
    assert!(u.value_pp().unwrap().is_zero());
    assert!(u.value_ph().unwrap().is_zero());
    assert!(u.flip().is_zero());
}

#[test]
fn ph_reduction_ignores_the_pp_bar_pattern() {
    let f = Kernel4::random(LegSpace::positions(2), true, 1.0, &mut rng(5));
    let only_pp = Kernel4::from_fn(f.space.clone(), true, |z| {
        if z.map(|x| x % 2) == [0, 0, 1, 1] {
            f.get(z)
        } else {
            ZERO
        }
    });
    assert!(only_pp.reduce_ph().unwrap().is_zero());
    assert!(!only_pp.reduce_pp().unwrap().is_zero());
}

#[test]
fn ph_value_on_the_crossed_pattern() {
    let l = Kernel4::random(LegSpace::positions(2), false, 1.0, &mut rng(6));
    let v = l.value_ph().unwrap();
    let d = l.dim();
    for u in 0..d.pow(4) {
        let u = [u / (d * d * d), (u / (d * d)) % d, (u / d) % d, u % d];
        let z = [2 * u[0] + 1, 2 * u[1], 2 * u[2] + 1, 2 * u[3]];
        assert_eq!(v.get(z), -l.get([u[1], u[0], u[2], u[3]]));
    }
}

#[test]
fn directedness_is_checked() {
    let u = Kernel4::zeros(LegSpace::positions(2), false);
    assert!(matches!(u.reduce_ph(), Err(Error::Shape(_))));
    let d = Kernel4::zeros(LegSpace::positions(2), true);
    assert!(matches!(d.value_ph(), Err(Error::Shape(_))));
    assert!(matches!(shear(&u, &[ZERO, ZERO]), Err(Error::Shape(_))));
}

#[test]
fn flip_is_an_involution_preserving_inversion_symmetry() {
    for seed in 0..10 {
        let f = Kernel4::random(LegSpace::positions(2), false, 1.0, &mut rng(seed));
        assert!(f.flip().flip().max_abs_diff(&f).unwrap() == 0.0);
        let l = inversion_symmetric(seed);
        assert!(l.flip().is_inversion_symmetric(1e-15));
    }
}

#[test]
fn inversion_symmetry_examples() {
    let f = antisymmetric_conserving(9);
    assert!(f.reduce_ph().unwrap().is_inversion_symmetric(1e-14));
    let g = Kernel4::random(LegSpace::positions(2), false, 1.0, &mut rng(10));
    assert!(!g.is_inversion_symmetric(1e-12));
}

#[test]
fn shear_by_zero_is_the_identity() {
    let f = Kernel4::random(LegSpace::mixed(2, 2), true, 1.0, &mut rng(11));
    let s = shear(&f, &[ZERO, ZERO]).unwrap();
    assert!(s.max_abs_diff(&f).unwrap() == 0.0);
    assert!(matches!(shear(&f, &[ZERO]), Err(Error::Shape(_))));
}

#[test]
fn shear_composition() {
    let mut r = rng(12);
    for (n, ns) in [(2, 1), (2, 2), (3, 1)] {
        for _ in 0..7 {
            let f = Kernel4::random(LegSpace::mixed(n, ns), true, 1.0, &mut r);
            let b1 = random_b(n, &mut r);
            let b2 = random_b(n, &mut r);
            let prod: Vec<Complex64> = b1.iter().zip(&b2).map(|(a, b)| a * b).collect();
            let lhs = shear(&f, &prod).unwrap();
            let rhs = pi_collapse(&sct_prime(&shear_prime(&f, &b1).unwrap(), &b2).unwrap()).unwrap();
            assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-12 * lhs.sup_norm().max(1.0));
        }
    }
}

#[test]
fn cauchy_extraction_recovers_every_primed_component() {
    let f = Kernel4::random(LegSpace::primed(2, 1), false, 1.0, &mut rng(13));
    let mut count = 0;
    for iv in f.components() {
        let got = cauchy_extract(&f, iv, 3).unwrap();
        let want = pi_collapse(&f.restrict(iv)).unwrap();
        assert!(got.max_abs_diff(&want).unwrap() <= 1e-13, "{iv:?}");
        count += 1;
    }
    assert_eq!(count, 81);
    assert!(matches!(cauchy_extract(&f, [0, 0, 0, 0], 2), Err(Error::Resolution(_))));
}

#[test]
fn cauchy_extraction_on_unprimed_components() {
    let f = Kernel4::random(LegSpace::mixed(2, 1), true, 1.0, &mut rng(14));
    let comps = f.components();
    assert_eq!(comps.len(), 16);
    for iv in comps {
        let got = cauchy_extract(&f, iv, 3).unwrap();
        assert!(got.max_abs_diff(&f.restrict(iv)).unwrap() <= 1e-13, "{iv:?}");
    }
}

#[test]
fn s_kappa_weights_components() {
    let f = Kernel4::random(LegSpace::mixed(2, 1), false, 1.0, &mut rng(15));
    let kap = [2.0, 3.0, 5.0, 7.0].map(|x| Complex64::new(x, 0.0));
    let s = s_kappa(&f, kap).unwrap();
    for iv in f.components() {
        let w: f64 = (0..4).map(|p| if iv[p] == 0 { kap[p].re } else { 1.0 }).product();
        let want = f.restrict(iv).scale_re(w);
        assert!(s.restrict(iv).max_abs_diff(&want).unwrap() <= 1e-12);
    }
}

fn single_entry(z: [usize; 4], v: Complex64) -> Kernel4 {
    let mut k = Kernel4::zeros(LegSpace::mixed(2, 3), false);
    k.set(z, v);
    k
}

#[test]
fn sector_norm_of_a_single_entry() {
    let sp = LegSpace::mixed(2, 3);
    let int = |x: usize, s: usize| sp.index_of(&Point { kind: PointKind::Internal { x, s }, spin: 0 }).unwrap();
    let ext = |k: usize| sp.index_of(&Point { kind: PointKind::External { k }, spin: 1 }).unwrap();
    let v = Complex64::new(0.3, -0.4);
    let all_internal = single_entry([int(0, 1), int(1, 2), int(0, 0), int(1, 1)], v);
    for p in 1..=4 {
        assert!((all_internal.sector_norm_p(p) - 0.5).abs() < 1e-15, "p {p}");
    }
    for p in [5, 6] {
        assert_eq!(all_internal.sector_norm_p(p), 0.0);
    }
    let two_external = single_entry([ext(0), int(1, 2), ext(1), int(0, 0)], v);
    for p in 1..=6 {
        let want = if (2..=4).contains(&p) { 0.5 } else { 0.0 };
        assert!((two_external.sector_norm_p(p) - want).abs() < 1e-15, "p {p}");
    }
}

#[test]
fn sector_norm_is_monotone_under_zeroing() {
    let mut f = Kernel4::random(LegSpace::mixed(2, 2), false, 1.0, &mut rng(16));
    let before: Vec<f64> = (1..=6).map(|p| f.sector_norm_p(p)).collect();
    for v in f.data.iter_mut().step_by(3) {
        *v = ZERO;
    }
    for p in 1..=6 {
        assert!(f.sector_norm_p(p) <= before[p - 1] + 1e-12);
    }
}

fn line_grid() -> FdGrid {
    FdGrid {
        points: (0..=40).map(|a| Momentum::new(-1.0 + 0.05 * a as f64, 1.0, 0.5)).collect(),
        steps: [1e-3, 1e-3, 1e-3],
    }
}

#[test]
fn momentum_norm_examples() {
    let g = line_grid();
    let c = momentum_norm_tilde(&|_| Complex64::new(-2.5, 0.0), &g, 2, 2, 2).unwrap();
    assert_eq!(c.get([0, 0, 0]), 2.5);
    for d in [[1, 0, 0], [0, 1, 0], [0, 0, 1], [2, 0, 0], [1, 1, 0]] {
        assert!(c.get(d) <= 1e-9, "{d:?}");
    }
    assert_eq!(c.get([2, 1, 0]), f64::INFINITY);
    let lin = momentum_norm_tilde(&|k: Momentum| Complex64::new(k.k0, 0.0), &g, 2, 2, 2).unwrap();
    assert!((lin.get([0, 0, 0]) - 1.0).abs() < 1e-12);
    assert!((lin.get([1, 0, 0]) - 1.0).abs() < 1e-9);
    assert!(lin.get([2, 0, 0]) < 1e-6);
    let quad = momentum_norm_tilde(&|k: Momentum| Complex64::new(k.kvec[0] * k.kvec[0], 0.0), &g, 2, 2, 2).unwrap();
    assert!((quad.get([0, 2, 0]) - 1.0).abs() < 1e-6);
    assert!(matches!(momentum_norm_tilde(&|_| ZERO, &g, 3, 2, 2), Err(Error::Resolution(_))));
    let empty = FdGrid { points: vec![], steps: [1e-3; 3] };
    assert!(matches!(momentum_norm_tilde(&|_| ZERO, &empty, 1, 2, 2), Err(Error::Resolution(_))));
}

#[test]
fn kernel_text_header() {
    let f = antisymmetric_conserving(17);
    let text = f.to_text(4);
    let first = text.lines().next().unwrap();
    assert_eq!(first, "# kernel4 scale=4 n=2 sectors=1 directed=true dim=8");
    let nonzero = f.data.iter().filter(|v| **v != ZERO).count();
    assert_eq!(text.lines().count(), nonzero + 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn antisymmetrize_is_an_idempotent_projection(seed in any::<u64>(), a in -2.0f64..2.0) {
        let f = Kernel4::random(LegSpace::positions(2), true, 1.0, &mut rng(seed));
        let g = Kernel4::random(LegSpace::positions(2), true, 1.0, &mut rng(seed ^ 1));
        let af = f.antisymmetrize();
        prop_assert!(af.is_antisymmetric(1e-14));
        prop_assert!(af.antisymmetrize().max_abs_diff(&af).unwrap() <= 1e-14);
        let lin = f.scale_re(a).add(&g).unwrap().antisymmetrize();
        let sep = af.scale_re(a).add(&g.antisymmetrize()).unwrap();
        prop_assert!(lin.max_abs_diff(&sep).unwrap() <= 1e-13);
        prop_assert!(af.sup_norm() <= f.sup_norm() + 1e-14);
    }

    #[test]
    fn number_conservation_commutes_with_antisymmetrization(seed in any::<u64>()) {
        let f = Kernel4::random(LegSpace::positions(2), true, 1.0, &mut rng(seed));
        let a = f.antisymmetrize().project_number_conserving().unwrap();
        let b = f.project_number_conserving().unwrap().antisymmetrize();
        prop_assert!(a.max_abs_diff(&b).unwrap() <= 1e-14);
        prop_assert!(a.is_number_conserving(0.0));
    }
}
