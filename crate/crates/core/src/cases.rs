//! Small fixed networks used across tests, examples and the CLI.

use crate::case_io::Case;
use crate::network::{Bus, ComplexValue, LineParams, Network};

fn c(re: f64, im: f64) -> ComplexValue {
    ComplexValue::new(re, im)
}

/// Bus with no injection lower bounds and upper bounds at the given load.
fn load_bus(id: u32, load: ComplexValue) -> Bus {
    Bus { p_max: -load.re, q_max: -load.im, ..Bus::unbounded(id, 0.81, 1.21) }
}

/// Two buses, one line `z = 0.05 + 0.10i` with `yᵐ = 0.02i` at both ends,
/// load `0.2 + 0.1i` at bus 2.
pub fn case2_shunt() -> Case {
    let load = c(0.2, 0.1);
    let buses = vec![Bus::unbounded(1, 0.81, 1.21), load_bus(2, load)];
    let lines = vec![LineParams::from_impedance(1, 2, c(0.05, 0.10)).with_shunts(c(0.0, 0.02), c(0.0, 0.02))];
    let network = Network::build(buses, lines, 1).expect("valid fixture");
    Case::new(network, vec![c(0.0, 0.0), -load])
}

/// Path `1 → 2 → 3` without shunts, `z = 0.01 + 0.02i` per line, load
/// `0.1 + 0.05i` at bus 3.
pub fn path3() -> Case {
    let load = c(0.1, 0.05);
    let buses = vec![
        Bus::unbounded(1, 0.81, 1.21),
        load_bus(2, c(0.0, 0.0)),
        load_bus(3, load),
    ];
    let lines = vec![
        LineParams::from_impedance(1, 2, c(0.01, 0.02)),
        LineParams::from_impedance(2, 3, c(0.01, 0.02)),
    ];
    let network = Network::build(buses, lines, 1).expect("valid fixture");
    Case::new(network, vec![c(0.0, 0.0), c(0.0, 0.0), -load])
}

/// Triangle `1 → 2, 2 → 3, 1 → 3` with asymmetric shunts, loads at 2 and 3.
pub fn triangle() -> Case {
    let (l2, l3) = (c(0.3, 0.1), c(0.2, 0.15));
    let buses = vec![Bus::unbounded(1, 0.81, 1.21), load_bus(2, l2), load_bus(3, l3)];
    let lines = vec![
        LineParams::from_impedance(1, 2, c(0.02, 0.06)).with_shunts(c(0.0, 0.01), c(0.0, 0.01)),
        LineParams::from_impedance(2, 3, c(0.03, 0.08)).with_shunts(c(0.0, 0.005), c(0.0, 0.008)),
        LineParams::from_impedance(1, 3, c(0.04, 0.09)),
    ];
    let network = Network::build(buses, lines, 1).expect("valid fixture");
    Case::new(network, vec![c(0.0, 0.0), -l2, -l3])
}
