use regmeta::rng::substream;
use regmeta::simulation::{
    apply_selection, generate_population, run_scenario, CiKind, Design, MethodSpec, Parameter,
    ScenarioConfig,
};
use regmeta::{fit, Family, FitConfig, Orientation, SelectionModel};

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    (m, sd / n.sqrt())
}

#[test]
fn inverse_probability_totals_are_unbiased() {
    // Fixed population, true selection model: over repeated selection the
    // weighted totals of published studies match the complete-data totals.
    let cfg = Design::SDataset1.config(50, 0.15, 1, 0);
    let truth = cfg.selection.clone();
    let pop = generate_population(&cfg, &mut substream(77, 0)).dataset;
    let tau2 = 0.15f64.powi(2);
    let (mut num, mut den) = (0.0, 0.0);
    for (_, e) in pop.published() {
        let w = 1.0 / (e.se * e.se + tau2);
        num += w * e.effect;
        den += w;
    }
    let (mut nums, mut dens) = (Vec::new(), Vec::new());
    for r in 0..4000 {
        let sel = apply_selection(&pop, &truth, &mut substream(78, r)).unwrap();
        let (mut a, mut b) = (0.0, 0.0);
        for (_, e) in sel.published() {
            let w = 1.0 / ((e.se * e.se + tau2) * truth.prob_for(e.effect, e.se));
            a += w * e.effect;
            b += w;
        }
        nums.push(a);
        dens.push(b);
    }
    let (mn, sn) = mean_and_se(&nums);
    let (md, sd) = mean_and_se(&dens);
    assert!(
        (mn - num).abs() <= 3.0 * sn,
        "numerator {mn} vs {num} (se {sn})"
    );
    assert!(
        (md - den).abs() <= 3.0 * sd,
        "denominator {md} vs {den} (se {sd})"
    );
}

#[test]
fn beta_hat_concentrates_as_s_grows() {
    let truth = Design::SDataset1.selection();
    let config = FitConfig::new(Family::Logistic1).with_orientation(Orientation::Reversed);
    let median_error = |s: usize| {
        let cfg = Design::SDataset1.config(s, 0.15, 1, 0);
        let mut errs: Vec<f64> = (0..300)
            .filter_map(|r| {
                let mut rng = substream(500 + s as u64, r);
                let pop = generate_population(&cfg, &mut rng);
                let sel = apply_selection(&pop.dataset, &truth, &mut rng).ok()?;
                let e = fit(&sel, &config).ok()?;
                Some((e.beta_hat[0] - truth.beta[0]).abs())
            })
            .collect();
        errs.sort_by(f64::total_cmp);
        errs[errs.len() / 2]
    };
    let (a, b, c) = (median_error(50), median_error(100), median_error(200));
    assert!(a > b && b > c, "median |beta - beta*|: {a} {b} {c}");
}

fn one_param_scenario(tau: f64, n: usize, seed: u64) -> ScenarioConfig {
    let mut s = ScenarioConfig::for_design(Design::SDataset1, 50, tau, n, seed);
    s.methods = vec![
        MethodSpec::Dl,
        MethodSpec::ipw(Family::Logistic1, CiKind::Asymptotic),
    ];
    s
}

#[test]
fn ipw_gives_fewer_zero_tau2() {
    for (tau, seed) in [(0.15, 61), (0.30, 62)] {
        let s = one_param_scenario(tau, 500, seed);
        let r = run_scenario(&s).unwrap();
        let dl = r.metric(&s.methods[0], Parameter::Tau2).unwrap();
        let ipw = r.metric(&s.methods[1], Parameter::Tau2).unwrap();
        assert!(
            dl.noz >= ipw.noz,
            "tau {tau}: DL {:?} IPW {:?}",
            dl.noz,
            ipw.noz
        );
    }
}

#[test]
fn mean_ipw_tau2_matches_reference_design() {
    // Reference value 0.022 from 1000 replicates; allow both Monte Carlo errors.
    let s = one_param_scenario(0.15, 500, 63);
    let r = run_scenario(&s).unwrap();
    let ipw = r.metric(&s.methods[1], Parameter::Tau2).unwrap();
    let mcse = ipw.sd / (ipw.noc as f64).sqrt();
    let reference_mcse = 0.023 / 1000f64.sqrt();
    let tol = 3.0 * (mcse * mcse + reference_mcse * reference_mcse).sqrt();
    assert!(
        (ipw.ave - 0.022).abs() <= tol,
        "{} vs 0.022 +/- {tol}",
        ipw.ave
    );
}

#[test]
fn dl_is_calibrated_without_selection() {
    let mut s = one_param_scenario(0.15, 400, 64);
    s.generative.selection =
        SelectionModel::with_orientation(Family::Logistic1, vec![0.0], Orientation::Reversed)
            .unwrap();
    let r = run_scenario(&s).unwrap();
    let dl = r.metric(&s.methods[0], Parameter::Mu).unwrap();
    let cp = dl.cp.unwrap();
    let band = 3.0 * (0.95f64 * 0.05 / 400.0).sqrt();
    assert!((cp - 0.95).abs() <= band, "DL coverage {cp}");
}

#[test]
fn two_and_four_publication_rates() {
    let frac = |d: Design| {
        let cfg = d.config(20_000, 0.15, 1, 0);
        let pop = generate_population(&cfg, &mut substream(31, 0));
        let sel = apply_selection(&pop.dataset, &cfg.selection, &mut substream(31, 1)).unwrap();
        sel.n_unpublished() as f64 / sel.s_total() as f64
    };
    let f2 = frac(Design::SDataset2);
    let f4 = frac(Design::SDataset4);
    assert!((0.15..0.25).contains(&f2), "sDataset 2: {f2}");
    assert!((0.25..0.35).contains(&f4), "sDataset 4: {f4}");
}
