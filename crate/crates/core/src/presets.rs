//! Small reference devices built in code.

use crate::device::{
    Boundary, CouplerSpec, DeviceSpec, End, Paddle, Parity, Reflection, ResonatorSpec, TransmonSpec,
};

use Parity::{Minus as M, Plus as P};

fn bare(resonators: Vec<ResonatorSpec>, n_cells: usize, boundary: Boundary) -> DeviceSpec {
    DeviceSpec {
        resonators,
        couplers: Vec::new(),
        transmons: Vec::new(),
        inter_cell_couplers: Vec::new(),
        n_cells,
        boundary,
        transmon_loading_everywhere: false,
        paddle_cc_prime_ff: 0.0,
        reflection: None,
    }
}

pub fn single_resonator(c0_ff: f64, l0_nh: f64, m: usize) -> DeviceSpec {
    bare(vec![ResonatorSpec::new(c0_ff, l0_nh, m)], 1, Boundary::Open)
}

/// Two resonators joined end `pa` to end `pb`.
pub fn dimer(c0_ff: f64, cc_ff: f64, l0_nh: f64, m: usize, pa: Parity, pb: Parity) -> DeviceSpec {
    let mut d = bare(vec![ResonatorSpec::new(c0_ff, l0_nh, m); 2], 1, Boundary::Open);
    d.couplers.push(CouplerSpec::intra(End::new(0, pa), End::new(1, pb), cc_ff));
    d
}

/// One resonator per cell, − end of cell n coupled to + end of cell n+1.
pub fn chain(n_cells: usize, c0_ff: f64, cc_ff: f64, l0_nh: f64, m: usize, boundary: Boundary) -> DeviceSpec {
    let mut d = bare(vec![ResonatorSpec::new(c0_ff, l0_nh, m)], n_cells, boundary);
    d.inter_cell_couplers.push(CouplerSpec::inter(End::new(0, M), End::new(0, P), cc_ff));
    d
}

/// Nominal element values of the rhombus chain (fF, nH).
pub const RHOMBUS_C0_FF: f64 = 392.0;
pub const RHOMBUS_CC_FF: f64 = 7.4;
pub const RHOMBUS_L0_NH: f64 = 2.5;

/// Quasi-1D chain of rhombi, six resonators per cell. Each cell has a left
/// node L, top T, bottom B and right R; the sixth resonator links R to the
/// next cell's L. Resonators: 0 L–T, 1 L–B, 2 T–R, 3 B–R, 4 T–B (vertical,
/// paddle split between its ends), 5 R–L'. Every node couples all its
/// resonator ends pairwise, so each resonator has four couplers. The cell is
/// symmetric under the top/bottom reflection 0↔1, 2↔3, 4 reversed.
pub fn rhombus_chain(m: usize) -> DeviceSpec {
    let cc = RHOMBUS_CC_FF;
    let ccp = cc / 2.0;
    let mut res = vec![ResonatorSpec::new(RHOMBUS_C0_FF, RHOMBUS_L0_NH, m); 6];
    res[4].paddle = Paddle::Split;
    let e = End::new;
    let intra = |a: End, b: End| CouplerSpec::intra(a, b, cc);
    let couplers = vec![
        // L
        intra(e(0, P), e(1, P)),
        // T
        intra(e(0, M), e(2, P)),
        intra(e(0, M), e(4, P)),
        intra(e(2, P), e(4, P)),
        // B
        intra(e(1, M), e(3, P)),
        intra(e(1, M), e(4, M)),
        intra(e(3, P), e(4, M)),
        // R
        intra(e(2, M), e(3, M)),
        intra(e(2, M), e(5, P)),
        intra(e(3, M), e(5, P)),
    ];
    let inter = vec![
        CouplerSpec::inter(e(5, M), e(0, P), cc),
        CouplerSpec::inter(e(5, M), e(1, P), cc),
    ];
    let transmon = |site: usize, cell: usize, label: &str| TransmonSpec {
        site,
        end: P,
        cq_ff: 151.0,
        ej0_ghz: 54.4,
        flux: 0.21,
        cc_prime_ff: ccp,
        cell: Some(cell),
        label: Some(label.into()),
    };
    DeviceSpec {
        resonators: res,
        couplers,
        transmons: vec![transmon(0, 3, "Q1"), transmon(5, 4, "Q2"), transmon(3, 5, "Q3")],
        inter_cell_couplers: inter,
        n_cells: 9,
        boundary: Boundary::Periodic,
        transmon_loading_everywhere: true,
        paddle_cc_prime_ff: ccp,
        reflection: Some(Reflection {
            permutation: vec![1, 0, 3, 2, 4, 5],
            end_swap: vec![false, false, false, false, true, false],
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rhombus_chain_is_valid_and_regular() {
        let d = rhombus_chain(4);
        d.validate().unwrap();
        assert!(d.site_degrees().iter().all(|&g| g == 4));
        assert!(d.reflection_maps_couplers());
        assert!(d.cell_loading().is_ok());
    }

    #[test]
    fn chain_and_dimer_validate() {
        chain(5, 400.0, 4.0, 2.5, 3, Boundary::Periodic).validate().unwrap();
        dimer(400.0, 4.0, 2.5, 1, P, M).validate().unwrap();
        single_resonator(400.0, 2.5, 10).validate().unwrap();
    }
}
