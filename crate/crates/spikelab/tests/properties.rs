use proptest::prelude::*;
use spikelab::asymptotics::{classify_case, CaseTag, ScaleParameters};
use spikelab::config::RunConfig;
use spikelab::gp2d::{GpOptions, GpProblem, SpectralInterpolant};
use spikelab::verify::weighted_fit;
use spikelab::{Field2D, Grid2D, PotentialSpec};

proptest! {
    #[test]
    fn eps_and_alpha_are_consistent(frac in 0.5f64..0.9999, p in 2.0f64..6.0) {
        let a_star = 11.700896525792;
        let s = ScaleParameters::new(frac * a_star, a_star, p).unwrap();
        prop_assert!((s.eps.powf(2.0 + p) - s.alpha).abs() <= 1e-12 * s.alpha);
        let mu = -1.3 / (s.eps * s.eps);
        let b = s.with_mu(mu, 1.0).beta.unwrap();
        prop_assert!((b - (1.0 - 1.3)).abs() < 1e-12);
        prop_assert!(ScaleParameters::new(a_star * (1.0 + frac / 10.0), a_star, p).is_err());
    }

    #[test]
    fn weighted_fit_is_exact_on_lines(slope in -5.0f64..5.0, icpt in -5.0f64..5.0,
                                      w in prop::collection::vec(0.1f64..2.0, 4..9)) {
        let x: Vec<f64> = (0..w.len()).map(|i| i as f64 * 0.7 - 1.0).collect();
        let y: Vec<f64> = x.iter().map(|v| icpt + slope * v).collect();
        let f = weighted_fit(&x, &y, &w).unwrap();
        prop_assert!((f.slope - slope).abs() < 1e-10);
        prop_assert!((f.intercept - icpt).abs() < 1e-10);
        prop_assert!(f.residual < 1e-10);
    }

    #[test]
    fn case_dispatch_is_total(p in prop::sample::select(vec![2.0f64, 3.0, 4.0, 2.5]), m in 2usize..10, s in any::<bool>()) {
        let tag = classify_case(p, Some(m), s);
        let mf = m as f64;
        if mf > 2.0 + p {
            prop_assert_eq!(tag, CaseTag::HighOrder);
        } else if m % 2 == 1 {
            prop_assert_eq!(tag, CaseTag::OddLow);
        } else if (mf - (2.0 + p)).abs() < 1e-12 {
            prop_assert_eq!(tag, CaseTag::EvenCritical);
        } else {
            prop_assert_eq!(tag, if s { CaseTag::EvenLowNonzeroS } else { CaseTag::EvenLowZeroS });
        }
        prop_assert_eq!(classify_case(p, None, s), CaseTag::HighOrder);
    }

    #[test]
    fn config_text_roundtrips(fr in prop::collection::vec(0.01f64..0.999, 1..6), seed in 0u64..=i64::MAX as u64,
                              tol in 1e-9f64..1.0, nodes in 16usize..1024) {
        let mut cfg = RunConfig::default();
        cfg.sweep.fractions = fr;
        cfg.output.seed = seed;
        cfg.tolerances.exponent = tol;
        cfg.gp.nodes = nodes;
        prop_assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg.clone());
        cfg.output.seed = u64::MAX - seed;
        prop_assert!(cfg.validate().is_err());
    }

    #[test]
    fn l2_norm_is_homogeneous(c in -10.0f64..10.0, s in 0.2f64..2.0) {
        let g = Grid2D::centered(3.0, 0.1).unwrap();
        let f = Field2D::from_fn(g, |x, y| (-(x * x + y * y) / s).exp());
        prop_assert!((f.scale(c).norm_l2() - c.abs() * f.norm_l2()).abs() <= 1e-12 * f.norm_l2() * (1.0 + c.abs()));
    }

    #[test]
    fn spectral_interpolant_hits_nodes(i in 0usize..48, j in 0usize..48, s in 0.5f64..1.5) {
        let opts = GpOptions { nodes: 48, radius: 6.0, min_cells: 0.5, ..GpOptions::default() };
        let problem = GpProblem::with_lambda(&PotentialSpec::radial(2.0), 11.7, 1.93, 5.0, opts).unwrap();
        let g = problem.grid;
        let u = Field2D::from_fn(g, |x, y| (-(x * x + y * y) / s).exp());
        let interp = SpectralInterpolant::new(&problem, &u);
        let v = interp.eval(g.coord(i), g.coord(j));
        prop_assert!((v - u.at(i, j)).abs() < 1e-9, "{} vs {}", v, u.at(i, j));
    }
}
