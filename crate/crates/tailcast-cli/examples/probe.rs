// temporary debugging probe; not part of the deliverable
use tailcast::mgpred::{conditional_density, rejection_sample, MgpModel};
use tailcast::transforms::expo_transform;

fn main() {
    let text = std::fs::read_to_string("/tmp/synth_smoke/out/mgp_model.json").unwrap();
    let model = MgpModel::from_json(&text).unwrap();
    let ms = &model.marginals;
    let uppers: Vec<f64> = ms.covariates.iter().map(|m| m.support_upper()).collect();
    let cases = vec![
        vec![0.45, 0.40],
        vec![0.80, 0.20],
        vec![uppers[0] * (1.0 - 1e-9), 0.3],
        vec![uppers[0] * (1.0 - 1e-9), uppers[1] * (1.0 - 1e-9)],
    ];
    for x in cases {
        let x_cond: Vec<f64> = x
            .iter()
            .zip(&ms.covariates)
            .map(|(&v, m)| expo_transform(m, v).unwrap() - expo_transform(m, m.threshold).unwrap())
            .collect();
        eprintln!("--- x_cond {:?}", x_cond);
        let t0 = std::time::Instant::now();
        let cond = conditional_density(&model, &x_cond).unwrap();
        eprintln!("cond done: C={:.3e} hi={} ({:?})", cond.norm_constant(), cond.hi, t0.elapsed());
        let t1 = std::time::Instant::now();
        match rejection_sample(&cond, 100, 42) {
            Ok(d) => eprintln!("sample done ({:?}) mean {:.3}", t1.elapsed(), d.iter().sum::<f64>() / 100.0),
            Err(e) => eprintln!("sample error {e} ({:?})", t1.elapsed()),
        }
    }
}
