use bifocus::local::local_passage;
use bifocus::symbolic::all_words;
use bifocus::{
    bipolar, cartesian, coding_map, involution, local_map, local_map_inverse, return_map, return_map_inverse, validate_params, Dd, InPoint,
    ModelParams, OutPoint, Passage, Point4, Real, SigmaPoint,
};
use proptest::prelude::*;

fn point4() -> impl Strategy<Value = Point4> {
    prop::array::uniform4(-10.0..10.0f64).prop_map(|x| Point4::new(x[0], x[1], x[2], x[3]))
}

fn in_point() -> impl Strategy<Value = InPoint> {
    (0.0..std::f64::consts::TAU, 1e-6..1.0f64, 0.0..std::f64::consts::TAU)
        .prop_map(|(phi_s, rho, phi_u)| InPoint::new(phi_s, rho * phi_u.cos(), rho * phi_u.sin()))
}

/// Points of `V_1 ∪ V_2` for the two-branch defaults.
fn v_point() -> impl Strategy<Value = SigmaPoint<Dd>> {
    (1..=2usize, prop::array::uniform3(-1.0..1.0f64)).prop_filter_map("outside the ball", |(i, d)| {
        let mp = ModelParams::default_for(2);
        let q = mp.branch(i).unwrap().q();
        let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        (n < 1.0).then(|| {
            let r = 0.999 * mp.v_radius;
            SigmaPoint::new(Dd::from_f64(q[0] + r * d[0]), Dd::from_f64(q[1] + r * d[1]), Dd::from_f64(r * d[2]))
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn involution_is_an_involution(p in point4()) {
        prop_assert_eq!(involution(&involution(&p)), p);
    }

    #[test]
    fn sigma_reflection_is_an_involution(a in -1.0..1.0f64, b in -1.0..1.0f64, c in -1.0..1.0f64) {
        let y = SigmaPoint::new(a, b, c);
        prop_assert_eq!(y.reflect().reflect(), y);
        let f = SigmaPoint::on_fix(a, b);
        prop_assert_eq!(f.reflect(), f);
    }

    #[test]
    fn bipolar_roundtrip(p in point4()) {
        let back = cartesian(&bipolar(&p));
        prop_assert!(back.distance(&p) <= 1e-12 * (1.0 + p.norm()));
    }

    #[test]
    fn radius_exchange(p in in_point()) {
        let mp = ModelParams::default_for(2);
        let lp = local_passage(&p, &mp).unwrap();
        prop_assert_eq!(lp.entry_radius, p.r_u());
        // the exit point is stored in Cartesian form, so its radius is recomputed with rounding
        prop_assert!((lp.out.r_s() - p.r_u()).abs() <= 4.0 * f64::EPSILON * p.r_u());
    }

    #[test]
    fn twist_decreases_with_entry_radius(p in in_point(), f in 0.01..0.99f64) {
        let mp = ModelParams::default_for(2);
        let q = InPoint::new(p.phi_s, f * p.u3, f * p.u4);
        let (a, b) = (local_passage(&p, &mp).unwrap(), local_passage(&q, &mp).unwrap());
        prop_assert!(b.phase > a.phase);
    }

    #[test]
    fn local_inverse_undoes_local_map(p in in_point()) {
        let mp = ModelParams::default_for(2);
        let back = local_map_inverse(&local_map(&p, &mp).unwrap(), &mp).unwrap();
        prop_assert!(back.to_point4(1.0).distance(&p.to_point4(1.0)) < 1e-9);
    }

    #[test]
    fn local_inverse_is_conjugate(p in in_point()) {
        let mp = ModelParams::default_for(2);
        let o: OutPoint = p.reflect();
        let direct = local_map_inverse(&o, &mp).unwrap();
        let conj = local_map(&o.reflect(), &mp).unwrap().reflect();
        prop_assert!(direct.to_point4(1.0).distance(&conj.to_point4(1.0)) < 1e-10);
    }

    #[test]
    fn dd_exp_ln_roundtrip(x in -20.0..20.0f64, lo in -1e-17..1e-17f64) {
        let d = Dd::from_parts([x, lo * x.abs()]);
        let e = d.exp().ln() - d;
        prop_assert!(e.abs().to_f64() <= 1e-28 * (1.0 + x.abs()));
    }

    #[test]
    fn word_counts(n in 1..4usize, k in 1..6usize) {
        let words = all_words(n, k);
        prop_assert_eq!(words.len(), (1..=k as u32).map(|j| n.pow(j)).sum::<usize>());
        prop_assert!(words.windows(2).all(|w| w[0].len() <= w[1].len()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn accepted_params_have_transverse_traces(d in prop::array::uniform9(-0.3..0.3f64), n in 1..4usize) {
        let mut mp = ModelParams::default_for(n);
        for b in &mut mp.branches {
            for (k, v) in d.iter().enumerate() {
                b.linear_part[k / 3][k % 3] += v;
            }
        }
        if validate_params(&mp).passed() {
            for b in &mp.branches {
                let (u, s) = (b.unstable_tangent(), b.stable_tangent());
                let minors = [u[0] * s[1] - u[1] * s[0], u[0] * s[2] - u[2] * s[0], u[1] * s[2] - u[2] * s[1]];
                prop_assert!(minors.iter().any(|m| m.abs() > 1e-12));
            }
        }
    }

    #[test]
    fn return_map_is_reversible(y in v_point()) {
        let mp = ModelParams::default_for(2);
        if let Ok(Passage::Landed(r)) = return_map(&y, &mp) {
            let back = return_map(&r.point.reflect(), &mp).unwrap().landed().unwrap().point.reflect();
            prop_assert!(back.distance(&y).to_f64() < 1e-9);
            let inv = return_map_inverse(&r.point, &mp).unwrap().landed().unwrap();
            prop_assert_eq!(inv.point, back);
        }
    }

    #[test]
    fn windings_count_full_turns(y in v_point()) {
        let mp = ModelParams::default_for(2);
        if let Ok(Passage::Landed(r)) = return_map(&y, &mp) {
            prop_assert_eq!(r.windings, (r.phase.to_f64() / std::f64::consts::TAU).floor() as i64);
        }
    }

    #[test]
    fn coding_commutes_with_the_shift(y in v_point()) {
        let mp = ModelParams::default_for(2);
        let c = coding_map(&y, 3, &mp);
        if let Ok(Passage::Landed(r)) = return_map(&y, &mp) {
            let s = coding_map(&r.point, 2, &mp);
            let n = s.realized.symbols.len().min(c.realized.symbols.len() - 1);
            prop_assert_eq!(&s.realized.symbols[..n], &c.realized.symbols[1..=n]);
            prop_assert_eq!(c.realized.shift().symbols[..n].to_vec(), s.realized.symbols[..n].to_vec());
        }
    }
}

#[test]
fn fixed_set_of_r_has_dimension_two() {
    let basis = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
    let cols: Vec<[f64; 4]> = basis
        .iter()
        .map(|e| {
            let p = Point4::new(e[0], e[1], e[2], e[3]);
            let r = involution(&p);
            [r.x1 - p.x1, r.x2 - p.x2, r.x3 - p.x3, r.x4 - p.x4]
        })
        .collect();
    // Gaussian elimination for the rank of R - id
    let mut m: Vec<[f64; 4]> = (0..4).map(|r| std::array::from_fn(|c| cols[c][r])).collect();
    let mut rank = 0;
    for c in 0..4 {
        let Some(p) = (rank..4).find(|&r| m[r][c].abs() > 1e-12) else { continue };
        m.swap(rank, p);
        for r in 0..4 {
            if r != rank {
                let f = m[r][c] / m[rank][c];
                for k in 0..4 {
                    m[r][k] -= f * m[rank][k];
                }
            }
        }
        rank += 1;
    }
    assert_eq!(rank, 2);
}
