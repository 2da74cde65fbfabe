use epsense_core::model::QuadraticModel;
use epsense_core::qfi::{coefficient_matrices, particle_number, qfi_coherent, CoherentState};
use epsense_core::propagator::propagate;
use epsense_core::{build_dynamical_matrix, partial_derivative};
use std::f64::consts::FRAC_PI_4;

fn spread_env(t0: f64, k: usize, frac: f64) -> (f64, f64, Vec<f64>, Vec<f64>) {
    let mut r_max = Vec::new();
    let mut r_mean = Vec::new();
    let mut fs = Vec::new();
    for n in 4..=12 {
        let model = QuadraticModel::kitaev_with_edge(n, 1.0, 0.9, 0.0, FRAC_PI_4).unwrap();
        let hd = build_dynamical_matrix(&model).unwrap();
        let dh = partial_derivative(&model, "eta").unwrap();
        let vac = CoherentState::vacuum(n);
        let cs = coefficient_matrices(&hd, &dh, t0).unwrap();
        let f = qfi_coherent(&cs, &vac).unwrap();
        let mut qmax: f64 = 0.0;
        let mut qsum = 0.0;
        for i in 0..k {
            let t = t0 * (frac + (1.0 - frac) * i as f64 / (k - 1) as f64);
            let q = particle_number(&propagate(&hd, t).unwrap(), &vac).unwrap();
            qmax = qmax.max(q);
            qsum += q;
        }
        let qmean = qsum / k as f64;
        r_max.push(f / (qmax * qmax));
        r_mean.push(f / (qmean * qmean));
        fs.push(f);
    }
    let sp = |v: &Vec<f64>| {
        v.iter().cloned().fold(f64::MIN, f64::max) / v.iter().cloned().fold(f64::MAX, f64::min)
    };
    (sp(&r_max), sp(&r_mean), r_max, r_mean)
}

fn main() {
    for t0 in [300.0, 500.0, 800.0, 1000.0, 1300.0] {
        let (smax, smean, rmax, rmean) = spread_env(t0, 25, 0.7);
        let lmax: Vec<String> = rmax.iter().map(|r| format!("{r:.2e}")).collect();
        let lmean: Vec<String> = rmean.iter().map(|r| format!("{r:.2e}")).collect();
        println!("t0={t0:7.1}  spread(max)={smax:8.2}  spread(mean)={smean:8.2}");
        println!("   F/Qmax^2 =[{}]", lmax.join(", "));
        println!("   F/Qmean^2=[{}]", lmean.join(", "));
    }
}
