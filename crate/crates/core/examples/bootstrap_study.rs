//! Multiplier bootstrap on simulated Laplace data: covariance error against
//! its calibrated envelope and distance of the bootstrap law from the truth.

use steinclt::corr::CorrelationModel;
use steinclt::experiment::{bootstrap_study, BootstrapStudyConfig, DataModel, Innovation};

fn main() -> steinclt::Result<()> {
    let model = DataModel::new(CorrelationModel::two_block(4, 2, 0.6, 0.2)?, Innovation::LaplaceUnit);
    let cfg = BootstrapStudyConfig { n: 300, datasets: 40, n_boot: 500, pilot: 20, ..BootstrapStudyConfig::default() };
    let s = bootstrap_study(&model, &cfg, 4)?;
    println!("B_eff {:.3}  envelope {:.4} (constant {:.3})", s.b_effective, s.envelope, s.envelope_constant);
    println!("exceedance {:.3}  limit {:.3}", s.exceedance_fraction, s.exceedance_limit);
    println!("rho quantile {:.4}  bound {:.3} vacuous {}", s.rho_xi_quantile, s.bootstrap_bound, s.bootstrap_bound_vacuous);
    Ok(())
}
