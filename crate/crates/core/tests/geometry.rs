mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use sxmc::TangentVector;

fn sizes() -> impl Strategy<Value = (usize, usize, usize, usize, u64)> {
    (3usize..=9, 4usize..=10, 1usize..=3, any::<u64>()).prop_flat_map(|(m, n, r, seed)| {
        let r = r.min(m).min(n - 1);
        (Just(m), Just(n), Just(r), r..n, Just(seed))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projection_is_an_orthogonal_projector((m, n, r, k, seed) in sizes()) {
        let mut rng = rng(seed);
        let inst = self_expressive_instance(m, n, r, k, &mut rng);
        let (z1, z2) = (gaussian(m, n, &mut rng), gaussian(m, n, &mut rng));
        let p1 = inst.mfd.project_tangent(&inst.x, &z1).unwrap().into_ambient();
        let p2 = inst.mfd.project_tangent(&inst.x, &z2).unwrap().into_ambient();
        let pp1 = inst.mfd.project_tangent(&inst.x, &p1).unwrap().into_ambient();
        prop_assert!((&pp1 - &p1).norm() <= 1e-10 * z1.norm());
        prop_assert!((p1.dot(&z2) - z1.dot(&p2)).abs() <= 1e-10 * z1.norm() * z2.norm());
        let (fixed, expressive) = inst.mfd.tangency_residuals(&inst.x, &p1);
        prop_assert!(fixed <= 1e-10 * z1.norm());
        prop_assert!(expressive <= 1e-8 * z1.norm());
    }

    #[test]
    fn retraction_stays_on_the_manifold((m, n, r, k, seed) in sizes(), scale in 1e-3f64..1.0) {
        let mut rng = rng(seed);
        let inst = self_expressive_instance(m, n, r, k, &mut rng);
        let xi = inst.mfd.project_tangent(&inst.x, &gaussian(m, n, &mut rng)).unwrap();
        let xi = xi.scaled(scale * inst.x.norm() / xi.norm());
        let y = inst.mfd.retract(&xi).unwrap().point;
        prop_assert_eq!(y.rank(), r);
        prop_assert!(inst.mfd.relative_residual(&y) <= 1e-8);
        let back = inst.mfd.retract(&TangentVector::zero(&inst.x)).unwrap().point;
        prop_assert_eq!(back, inst.x.clone());
    }

    #[test]
    fn tangent_dimension_matches_projector_rank((m, n, r, k, seed) in sizes()) {
        let mut rng = rng(seed);
        let inst = self_expressive_instance(m, n, r, k, &mut rng);
        let images = projector_images(&inst.mfd, &inst.x, 2 * m * n, &mut rng);
        prop_assert_eq!(oracle_rank(&images, 1e-9), inst.mfd.tangent_dimension());
        let q = inst.mfd.q();
        prop_assert_eq!(q, n - k);
        prop_assert_eq!(inst.mfd.dimension(), (m + n - r) * r - q);
        prop_assert_eq!(inst.mfd.tangent_dimension(), (m + n - q - r) * r);
    }
}

#[test]
fn fixed_rank_projector_rank_is_classical() {
    let mut rng = rng(5);
    for _ in 0..10 {
        let (m, n) = (rng.random_range(3..=8), rng.random_range(3..=8));
        let r = rng.random_range(1..=m.min(n));
        let (mfd, x) = fixed_rank_instance(m, n, r, &mut rng);
        let images = projector_images(&mfd, &x, 2 * m * n, &mut rng);
        assert_eq!(oracle_rank(&images, 1e-9), (m + n - r) * r);
        assert_eq!(mfd.dimension(), (m + n - r) * r);
    }
}
