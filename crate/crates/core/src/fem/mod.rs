//! Planar geometrically exact beam elements and the nonlinear equilibrium
//! solver.
//!
//! Every node carries `(x, y, θ)` with θ the absolute cross-section angle.
//! Elements use Lagrange interpolation of positions and angles; the default
//! two-node element with one Gauss point is free of shear locking.

mod design;
mod element;
mod loads;
mod mesh;
mod shape;
mod solver;

pub use design::{bernstein, bernstein_derivative, DesignBasis, DesignField};
pub use element::{
    element_design_sensitivity, element_dof_map, element_energy, element_forces, element_residual,
    element_tangent, gauss_points, GaussPoint,
};
pub use loads::{follower_load_work, LoadCase, LoadPattern};
pub use mesh::{
    dof_index, ChainBuilder, Configuration, Constraint, Dof, Element, Mesh, ReferenceNode,
    DOFS_PER_NODE,
};
pub use shape::{gauss_rule, lagrange_shape, nodal_coordinates, ShapeValues};
pub use solver::{
    assemble, design_sensitivity, internal_force, internal_tangent, is_positive_definite,
    newton_solve, newton_solve_from, restrict, restrict_matrix, strain_energy, Assembly,
    NewtonOptions, SolveReport,
};
