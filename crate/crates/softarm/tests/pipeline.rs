//! Cross-module integration checks that are too heavy for unit tests.

use softarm::config::{Config, DisturbanceSection};
use softarm::plant::{Plant, ALPHA, BETA};
use softarm::sysid;

#[test]
fn identification_recovers_configured_polynomials() {
    let mut cfg = Config::default();
    cfg.disturbance = DisturbanceSection::quiet();
    let plant = Plant::from_config(&cfg, 0.0).unwrap();

    for axis in [ALPHA, BETA] {
        let id = sysid::identify_axis(&plant, axis, &cfg.sysid, cfg.simulation.dt, 11).unwrap();
        let truth = &plant.joint.axes[axis];
        let lo = cfg.pressure.p_bar_min;
        let hi = cfg.pressure.p_bar_max;
        for (name, got, want) in [
            ("k", &id.params.k, &truth.k),
            ("d", &id.params.d, &truth.d),
            ("eta", &id.params.eta, &truth.eta),
            ("t", &id.params.t, &truth.t),
        ] {
            let err = got.sup_relative_error(want, lo, hi);
            println!("axis {axis} {name}: sup relative error {:.5}", err);
            assert!(err < 0.01, "axis {axis} parameter {name} off by {err:.4}");
        }
    }
}
