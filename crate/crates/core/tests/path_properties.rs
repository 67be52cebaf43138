use ergomlmc::coupling::{simulate_coupled_path, simulate_coupled_path_observed, simulate_single_path};
use ergomlmc::diagnostics::{fit_rate, variance_vs_t, Transform};
use ergomlmc::models::{self, SpringPolicy};
use ergomlmc::{Grid, Scheme, StreamKey};

struct Moments {
    n: f64,
    s1: f64,
    s2: f64,
}

impl Moments {
    fn new() -> Self {
        Moments { n: 0.0, s1: 0.0, s2: 0.0 }
    }
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        self.s1 += x;
        self.s2 += x * x;
    }
    fn mean(&self) -> f64 {
        self.s1 / self.n
    }
    fn std_err(&self) -> f64 {
        ((self.s2 / self.n - self.mean().powi(2)) / self.n).sqrt()
    }
}

#[test]
fn weights_are_martingales() {
    let cases = [(models::double_well(), 1.0, 2f64.powi(-6), 10_000u64), (models::truncated_lorenz(), 10.0, 2f64.powi(-9), 10_000)];
    for (model, s, h, n) in cases {
        let policy = SpringPolicy::Constant(s);
        let (mut rf, mut rc) = (Moments::new(), Moments::new());
        for i in 0..n {
            let p = simulate_coupled_path(&model, &policy, h, 5.0, StreamKey::new(41, 3, i, 0)).unwrap();
            rf.push(p.rf);
            rc.push(p.rc);
        }
        for (name, m) in [("rf", &rf), ("rc", &rc)] {
            let z = (m.mean() - 1.0) / m.std_err();
            assert!(z.abs() < 3.0, "{} {name}: mean {} ± {}", model.name(), m.mean(), m.std_err());
        }
    }
}

#[test]
fn coarse_weight_reweights_to_plain_em() {
    let model = models::double_well();
    let policy = SpringPolicy::Constant(1.0);
    let h = 2f64.powi(-6);
    let (mut weighted, mut plain) = (Moments::new(), Moments::new());
    for i in 0..10_000 {
        let p = simulate_coupled_path(&model, &policy, h, 5.0, StreamKey::new(8, 1, i, 0)).unwrap();
        weighted.push(p.phi_c * p.rc);
        plain.push(simulate_single_path(&model, 2.0 * h, 5.0, StreamKey::new(8, 2, i, 0)).unwrap().phi);
    }
    let se = (weighted.std_err().powi(2) + plain.std_err().powi(2)).sqrt();
    assert!((weighted.mean() - plain.mean()).abs() < 3.0 * se, "{} vs {}", weighted.mean(), plain.mean());
}

/// `sup_n E|Y^f_n - Y^c_n|²` over coupled double-well paths with `S = 1.5`.
fn sup_mean_sq_gap(h: f64, t: f64, n: u64) -> f64 {
    let model = models::double_well();
    let policy = SpringPolicy::Constant(1.5);
    let pairs = ergomlmc::coupling::pair_count(t, h) as usize;
    let mut sums = vec![0.0; pairs];
    for i in 0..n {
        let mut k = 0;
        let mut src = StreamKey::new(5, 0, i, 0).stream();
        simulate_coupled_path_observed(&model, &policy, h, t, &mut src, |st| {
            sums[k] += ergomlmc::vecops::dist(&st.yf, &st.yc).powi(2);
            k += 1;
        })
        .unwrap();
    }
    sums.iter().fold(0.0f64, |m, s| m.max(s / n as f64))
}

#[test]
fn gap_is_uniform_in_time() {
    let h = 2f64.powi(-5);
    let sups: Vec<f64> = [5.0, 10.0, 20.0].iter().map(|&t| sup_mean_sq_gap(h, t, 1000)).collect();
    let max = sups.iter().cloned().fold(0.0, f64::max);
    let min = sups.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(max / min < 1.5, "{sups:?}");
}

#[test]
fn gap_scales_as_h_squared() {
    let hs: Vec<f64> = (5..=8).map(|j| 2f64.powi(-j)).collect();
    let sups: Vec<f64> = hs.iter().map(|&h| sup_mean_sq_gap(h, 5.0, 4000)).collect();
    let fit = fit_rate(&hs, &sups, Transform::LogLog).unwrap();
    assert!((fit.slope - 2.0).abs() < 0.3, "slope {} from {sups:?}", fit.slope);
}

#[test]
fn fourth_moment_stays_bounded() {
    let model = models::double_well();
    let policy = SpringPolicy::Constant(1.5);
    let h = 2f64.powi(-5);
    let m4: Vec<f64> = [5.0, 20.0]
        .iter()
        .map(|&t| {
            (0..2000)
                .map(|i| simulate_coupled_path(&model, &policy, h, t, StreamKey::new(6, 0, i, 0)).unwrap().yf[0].powi(4))
                .sum::<f64>()
                / 2000.0
        })
        .collect();
    assert!(m4[0].max(m4[1]) / m4[0].min(m4[1]) < 2.0, "{m4:?}");
}

#[test]
fn ou_standard_coupling_is_first_order() {
    let model = models::ou();
    let hs: Vec<f64> = (4..=8).map(|j| 2f64.powi(-j)).collect();
    let gaps: Vec<f64> = hs
        .iter()
        .map(|&h| {
            (0..400)
                .map(|i| {
                    let p = ergomlmc::coupling::simulate_standard_coupled_path(&model, h, 4.0, StreamKey::new(2, 0, i, 0)).unwrap();
                    assert_eq!((p.rf, p.rc), (1.0, 1.0));
                    p.terminal_divergence
                })
                .sum::<f64>()
                / 400.0
        })
        .collect();
    let fit = fit_rate(&hs, &gaps, Transform::LogLog).unwrap();
    assert!((fit.slope - 1.0).abs() < 0.2, "slope {} from {gaps:?}", fit.slope);
}

#[test]
fn ou_level_variance_decays_at_rate_two() {
    let scheme = Scheme::new(models::ou(), SpringPolicy::Constant(1.0), Grid::Uniform { h0: 0.25 }, 12);
    let stats = ergomlmc::diagnostics::level_sweep(&scheme, 4.0, 6, 4000).unwrap();
    let l: Vec<f64> = (2..=6).map(f64::from).collect();
    let v: Vec<f64> = stats[2..].iter().map(|s| s.variance()).collect();
    let fit = fit_rate(&l, &v, Transform::Log2Y).unwrap();
    assert!((fit.slope + 2.0).abs() < 0.4, "slope {} from {v:?}", fit.slope);
}

#[test]
fn standard_coupling_variance_grows_on_lorenz() {
    let scheme = Scheme::new(models::truncated_lorenz(), SpringPolicy::None, Grid::Uniform { h0: 2f64.powi(-6) }, 3);
    let pts = variance_vs_t(&scheme, 2, &[2.0, 4.0, 6.0, 8.0], 1000).unwrap();
    let t: Vec<f64> = pts.iter().map(|p| p.t).collect();
    let v: Vec<f64> = pts.iter().map(|p| p.stats.variance()).collect();
    let fit = fit_rate(&t, &v, Transform::LogY).unwrap();
    assert!(fit.slope > 0.0, "slope {} from {v:?}", fit.slope);
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let scheme = Scheme::new(models::double_well(), SpringPolicy::Constant(1.0), Grid::Adaptive { delta0: 0.5 }, 77);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| scheme.run_level(3, 3.0, 0..300).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a.sum1.to_bits(), b.sum1.to_bits());
    assert_eq!(a.sum4.to_bits(), b.sum4.to_bits());
    assert_eq!(a.cost_total, b.cost_total);
}
