//! Independent decay-rate estimates checked against each other.

use conveyance::resonance::{default_initial_guess, solve_resonance};
use conveyance::semiclassics::{mirror_for_wkb, quantize, quantize_weber, WkbOptions};
use conveyance::spectral::{relaxation_run, RelaxationOptions};
use conveyance::{Grid, PhysicalParams, PotentialSpec};

#[test]
fn resonance_width_matches_dephasing_rate() {
    let p = PhysicalParams::default();
    let big = Grid::symmetric(200.0, 0.1).unwrap();
    let small = Grid::symmetric(20.0, 0.1).unwrap();
    for ma in [0.3, 0.5] {
        let relax = relaxation_run(&p, ma, &big, &RelaxationOptions::default())
            .unwrap()
            .fit
            .gamma;
        let spec = PotentialSpec::new(p, ma);
        let res = solve_resonance(default_initial_guess(&spec, &small).unwrap(), &spec, &small).unwrap();
        let rel = (res.gamma - relax).abs() / relax;
        assert!(rel < 1e-3, "ma = {ma}: Γ_res {} vs Γ_relax {relax}", res.gamma);
    }
}

#[test]
fn semiclassical_widths_track_the_resonance_for_thick_barriers() {
    // m = 10, ma = 0.5: a thick barrier where both connection formulas apply
    let p = PhysicalParams::with_mass(10.0).unwrap();
    let spec = PotentialSpec::new(p, 0.05);
    let grid = Grid::symmetric(20.0, 0.05).unwrap();
    let exact = solve_resonance(default_initial_guess(&spec, &grid).unwrap(), &spec, &grid)
        .unwrap()
        .gamma;
    let wkb = mirror_for_wkb(&spec).unwrap();
    let opts = WkbOptions::default();
    let airy = quantize(&wkb, 0, &opts).unwrap().gamma;
    let weber = quantize_weber(&wkb, 0, &opts).unwrap().gamma;
    for (name, g) in [("airy", airy), ("weber", weber)] {
        let ratio = g / exact;
        assert!((0.5..2.0).contains(&ratio), "{name}: {g:.4e} vs resonance {exact:.4e}");
    }
}
