//! Shared problem builders for the benchmarks.

use translab_core::grid::ScalarField;
use translab_core::*;

pub fn mixed_pucci_problem() -> TransmissionProblem {
    TransmissionProblem {
        op_plus: EllipticOperator::pucci_minus(1.0, 2.0),
        op_minus: EllipticOperator::pucci_plus(1.0, 2.0),
        f_plus: ScalarField::new(|x| 1.0 + x[0]),
        f_minus: ScalarField::new(|x| -0.5 * x[1]),
        g: ScalarField::new(|x| 1.0 + 0.3 * x[0]),
        boundary: ScalarField::new(|x| 0.2 * x[0] - 0.1 * x[1] * x[1]),
        iface: InterfaceGraph::flat(2),
        domain: DomainSpec::square(2),
    }
}
