use proptest::prelude::*;
use std::f64::consts::{PI, TAU};

use stiction::model::{angle_diff, classify, symmetry, vector_field, xi, Branch, Params, RegionLabel, State};
use stiction::pws::slip_flow_closed_form;
use stiction::regularization::{build_phi, Regularizer};

fn gamma() -> impl Strategy<Value = f64> {
    (0.2f64..8.0).prop_filter("away from resonance", |g| (g - 1.0).abs() > 0.05)
}

fn state() -> impl Strategy<Value = State> {
    (-1.5f64..1.5, -1.5f64..1.5, 0.0f64..TAU).prop_map(|(x, y, t)| State::new(x, y, t))
}

fn mirror(l: RegionLabel) -> RegionLabel {
    use RegionLabel::*;
    match l {
        GPlus => GMinus,
        GMinus => GPlus,
        SigmaCPlus => SigmaCMinus,
        SigmaCMinus => SigmaCPlus,
        SigmaS => SigmaS,
        BoundaryCPlus { in_i_plus } => BoundaryCMinus { in_i_minus: in_i_plus },
        BoundaryCMinus { in_i_minus } => BoundaryCPlus { in_i_plus: in_i_minus },
    }
}

proptest! {
    #[test]
    fn symmetry_is_an_involution_mod_two_pi(z in state()) {
        let w = symmetry(&symmetry(&z));
        prop_assert_eq!(w.x, z.x);
        prop_assert_eq!(w.y, z.y);
        prop_assert!(angle_diff(w.theta, z.theta).abs() < 1e-14);
    }

    #[test]
    fn slip_fields_are_exchanged(g in gamma(), z in state()) {
        let p = Params::reference(g);
        let a = vector_field(&z, &p, Branch::Plus).to_array();
        let b = vector_field(&symmetry(&z), &p, Branch::Minus).to_array();
        prop_assert!((a[0] + b[0]).abs() <= 1e-14 * (1.0 + a[0].abs()));
        prop_assert!((a[1] + b[1]).abs() <= 1e-14 * (1.0 + a[1].abs()));
        prop_assert_eq!(a[2], b[2]);
    }

    #[test]
    fn slip_flow_commutes_with_symmetry(g in gamma(), z in state(), t in 0.0f64..TAU) {
        let p = Params::reference(g);
        let a = symmetry(&slip_flow_closed_form(&z, 1.0, &p, t).unwrap());
        let b = slip_flow_closed_form(&symmetry(&z), -1.0, &p, t).unwrap();
        let scale = 1.0 + a.x.abs().max(a.y.abs());
        prop_assert!((a.x - b.x).abs() <= 1e-14 * scale * 10.0);
        prop_assert!((a.y - b.y).abs() <= 1e-14 * scale * 10.0);
        prop_assert!(angle_diff(a.theta, b.theta).abs() <= 1e-13);
    }

    #[test]
    fn strata_partition_and_mirror(g in gamma(), x in -1.5f64..1.5, th in 0.0f64..TAU, on_sigma in any::<bool>(), y in -1.0f64..1.0) {
        let p = Params::reference(g);
        let z = State::new(x, if on_sigma { 0.0 } else { y }, th);
        let l = classify(&z, &p, 1e-12);
        let s = xi(z.x, z.theta, &p);
        let expected = if z.y > 1e-12 {
            RegionLabel::GPlus
        } else if z.y < -1e-12 {
            RegionLabel::GMinus
        } else if s > p.mu_s {
            RegionLabel::SigmaCMinus
        } else if s < -p.mu_s {
            RegionLabel::SigmaCPlus
        } else {
            RegionLabel::SigmaS
        };
        prop_assert_eq!(l, expected);
        prop_assert_eq!(classify(&symmetry(&z), &p, 1e-12), mirror(l));
    }

    #[test]
    fn phi_is_odd_and_saturates(s in -3.0f64..3.0) {
        let phi = build_phi(0.6, 1.1, 0.4).unwrap();
        prop_assert!((phi.phi(-s) + phi.phi(s)).abs() <= 1e-15);
        prop_assert!((phi.dphi(-s) - phi.dphi(s)).abs() <= 1e-12);
        if s.abs() >= 1.0 {
            prop_assert_eq!(phi.phi(s), s.signum());
        }
        prop_assert!(phi.phi(s).abs() <= 1.1 / 0.4 + 1e-12);
    }
}

#[test]
fn symmetry_of_origin() {
    let z = symmetry(&State::new(0.0, 0.0, 0.0));
    assert_eq!(z.x, 0.0);
    assert_eq!(z.y, 0.0);
    assert_eq!(z.theta, PI);
}
