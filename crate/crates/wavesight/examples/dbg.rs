use num_complex::Complex64;
use wavesight::channel::*;
use wavesight::estimator::*;

fn main() {
    let cfg = ChannelConfig::new(5.25e9, 78.125e3, 256, 2).unwrap();
    let truth = [
        MultipathComponent::real(3.0, -14.0, 1.0).unwrap(),
        MultipathComponent::real(5.5, 50.0, 0.7).unwrap(),
        MultipathComponent::new(33.0, 20.0, Complex64::new(0.1, 0.44)).unwrap(),
    ];
    let est_cfg = EstimatorConfig {
        range_grid_m: GridSpec::new(0.0, 40.0, 0.05),
        ..Default::default()
    };
    let cfr = synthesize_cfr(&truth, &cfg, 0.0, 0.0, 0).unwrap();
    let est = Estimator::new(&cfg, &est_cfg).unwrap();
    let (paths, trace) = est.estimate_with_trace(&cfr).unwrap();
    println!("residuals: {:?}", trace.residual_powers.iter().map(|p| p / trace.residual_powers[0]).collect::<Vec<_>>());
    for p in &paths {
        println!("aoa={:7.2} range={:7.2} pow={:.5}", p.aoa_deg, p.range_m, p.power());
    }
    let mut recon = synthesize_cfr(&[], &cfg, 0.0, 0.0, 0).unwrap().h;
    for p in &paths {
        let comp = MultipathComponent::new(p.range_m, p.aoa_deg, p.amplitude).unwrap();
        recon += &synthesize_cfr(&[comp], &cfg, 0.0, 0.0, 0).unwrap().h;
    }
    let err: f64 = cfr.h.iter().zip(recon.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    println!("rel err {}", err / cfr.power().sqrt());
}
