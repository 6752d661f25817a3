use hybrid_vmc::analysis::{extrapolate_inverse_d, extrapolate_inverse_d_weighted, relative_error};
use proptest::prelude::*;

fn points() -> impl Strategy<Value = Vec<(usize, f64)>> {
    prop::collection::btree_map(1usize..40, -100.0f64..100.0, 3..8).prop_map(|m| m.into_iter().collect())
}

proptest! {
    #[test]
    fn fit_is_affine_equivariant(pts in points(), scale in 0.1f64..10.0, shift in -50.0f64..50.0) {
        let base = extrapolate_inverse_d(&pts).unwrap();
        let moved: Vec<(usize, f64)> = pts.iter().map(|&(d, e)| (d, scale * e + shift)).collect();
        let r = extrapolate_inverse_d(&moved).unwrap();
        let tol = 1e-9 * (1.0 + base.intercept.abs() * scale + shift.abs());
        prop_assert!((r.intercept - (scale * base.intercept + shift)).abs() < tol);
        prop_assert!((r.slope - scale * base.slope).abs() < 1e-9 * (1.0 + (scale * base.slope).abs()));
    }

    #[test]
    fn relative_error_is_symmetric_about_the_reference(e_ref in -100.0f64..-0.1, e in -200.0f64..0.0) {
        let a = relative_error(e, e_ref).unwrap();
        let b = relative_error(2.0 * e_ref - e, e_ref).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn only_the_three_largest_d_matter(pts in points(), junk in -1e3f64..1e3) {
        let base = extrapolate_inverse_d(&pts).unwrap();
        let mut more = pts.clone();
        let dmin = pts[0].0;
        if dmin > 1 {
            more.push((dmin - 1, junk));
        }
        more.reverse();
        let r = extrapolate_inverse_d(&more).unwrap();
        prop_assert_eq!(r.points.clone(), base.points.clone());
        prop_assert_eq!(r.intercept, base.intercept);
        prop_assert_eq!(base.points.len(), 3);
        let ds: Vec<usize> = base.points.iter().map(|p| p.0).collect();
        let mut all: Vec<usize> = pts.iter().map(|p| p.0).collect();
        all.sort();
        prop_assert_eq!(ds, all[all.len() - 3..].to_vec());
    }
}

#[test]
fn too_few_points_and_zero_reference_are_errors() {
    assert!(extrapolate_inverse_d(&[(2, -1.0), (3, -1.1)]).is_err());
    assert!(extrapolate_inverse_d(&[(2, -1.0), (2, -1.1), (3, -1.2)]).is_err());
    assert!(relative_error(-1.0, 0.0).is_err());
}

#[test]
fn weighted_fit_matches_unweighted_for_equal_errors() {
    let pts = [(2, -4.1), (3, -4.3), (5, -4.38), (8, -4.45)];
    let u = extrapolate_inverse_d(&pts).unwrap();
    let w: Vec<(usize, f64, f64)> = pts.iter().map(|&(d, e)| (d, e, 0.01)).collect();
    let r = extrapolate_inverse_d_weighted(&w).unwrap();
    assert!((u.intercept - r.intercept).abs() < 1e-12);
}
