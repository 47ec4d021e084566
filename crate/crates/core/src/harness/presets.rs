//! Built-in experiment geometries and load cases.

use nalgebra::DMatrix;
use std::f64::consts::PI;

use crate::beam::{CrossSection, DesignRole, SectionLaw};
use crate::error::Result;
use crate::fem::{
    newton_solve, ChainBuilder, DesignField, LoadCase, LoadPattern, Mesh, NewtonOptions,
};
use crate::optimality::{ControlProblem, DesignCost, DesignProblem, MassPenalty, Sense};

/// Loads that produce the T-letter target shape: tip force and tip moment.
pub const TLETTER_TARGET: [f64; 2] = [40.0, 205.0];
/// Search box of the T-letter control variables.
pub const TLETTER_BOX: [(f64, f64); 2] = [(10.0, 60.0), (175.0, 225.0)];

/// Moment that straightens the I-letter arc; also the total `2F + M` along
/// the family of exact solutions.
pub const ILETTER_MOMENT: f64 = 205.4;
/// Lever arm of the I-letter follower couple.
pub const ILETTER_LEVER: f64 = 2.0;
pub const ILETTER_ALPHA: f64 = 1e-9;
pub const ILETTER_BOX: [(f64, f64); 2] = [(0.0, 100.0), (0.0, 230.0)];

pub const THICKNESS_LENGTH: f64 = 1000.0;
pub const THICKNESS_FORCE: f64 = 1000.0;
pub const THICKNESS_WIDTH: f64 = 30.0;
pub const THICKNESS_DENSITY: f64 = 1.0 / 30.0;
pub const THICKNESS_MASS_LIMIT: f64 = 30000.0;
pub const THICKNESS_SHEAR_FACTOR: f64 = 5.0 / 6.0;
/// Penalty weights of the mass limit for the two cost functions.
pub const SHEAR_PENALTY_WEIGHT: f64 = 1.0;
pub const DISPLACEMENT_PENALTY_WEIGHT: f64 = 0.25;
pub const THICKNESS_BOX: [(f64, f64); 4] = [(30.0, 60.0), (30.0, 60.0), (15.0, 35.0), (15.0, 35.0)];
pub const THICKNESS_DISPLACEMENT_BOX: [(f64, f64); 4] =
    [(30.0, 60.0), (30.0, 60.0), (15.0, 35.0), (5.0, 25.0)];

pub fn unit_square_section() -> SectionLaw {
    SectionLaw::new(
        12000.0,
        6000.0,
        CrossSection::Rectangular {
            width: 1.0,
            height: 1.0,
        },
    )
}

/// Straight stem of length 10 (3 elements) capped by a clockwise semicircle
/// of diameter 10 (4 elements); clamped at the foot of the stem.
pub fn tletter_mesh() -> Result<Mesh> {
    let s = unit_square_section();
    let mut m = ChainBuilder::new(0.0, 0.0, PI / 2.0)
        .line(10.0, 3, s)
        .arc(5.0, -PI, 4, s)
        .build()?;
    m.clamp(0);
    Ok(m)
}

pub fn tletter_loads(tip: usize) -> LoadCase {
    LoadCase {
        fixed: vec![],
        controls: vec![
            vec![LoadPattern::Dead {
                node: tip,
                fx: 0.0,
                fy: 1.0,
                moment: 0.0,
            }],
            vec![LoadPattern::Dead {
                node: tip,
                fx: 0.0,
                fy: 0.0,
                moment: 1.0,
            }],
        ],
    }
}

/// T-letter control problem with the desired shape computed at
/// [`TLETTER_TARGET`].
pub fn tletter_problem(newton: NewtonOptions) -> Result<ControlProblem> {
    tletter_problem_for(&TLETTER_TARGET, newton)
}

/// T-letter control problem whose desired shape is the response to the
/// tip force and moment in `target`.
pub fn tletter_problem_for(target: &[f64], newton: NewtonOptions) -> Result<ControlProblem> {
    let mesh = tletter_mesh()?;
    let loads = tletter_loads(mesh.node_count() - 1);
    let desired = newton_solve(&mesh, &loads, target, &newton)?.configuration;
    let mut p = ControlProblem::direct(mesh, loads, desired, 0.0);
    p.newton = newton;
    Ok(p)
}

/// Clamped clockwise semicircle of diameter 10 (4 elements) followed by a
/// stiff straight lever of length 2 (1 element).
pub fn iletter_mesh() -> Result<Mesh> {
    let s = unit_square_section();
    let lever = SectionLaw::new(s.young * 1e4, s.shear * 1e4, s.shape);
    let mut m = ChainBuilder::new(0.0, 0.0, PI / 2.0)
        .arc(5.0, -PI, 4, s)
        .line(ILETTER_LEVER, 1, lever)
        .build()?;
    m.clamp(0);
    Ok(m)
}

/// Controls: follower force at the lever root, equal and opposite follower
/// force at the lever tip (together a couple), and a tip moment.
pub fn iletter_loads(root: usize, tip: usize) -> LoadCase {
    LoadCase {
        fixed: vec![],
        controls: vec![
            vec![LoadPattern::Follower {
                node: root,
                px: 0.0,
                py: -1.0,
            }],
            vec![LoadPattern::Follower {
                node: tip,
                px: 0.0,
                py: 1.0,
            }],
            vec![LoadPattern::Dead {
                node: tip,
                fx: 0.0,
                fy: 0.0,
                moment: 1.0,
            }],
        ],
    }
}

/// I-letter control problem in the variables `(F, M)` with
/// `ν = (F, F, M)`.
pub fn iletter_problem(alpha: f64, newton: NewtonOptions) -> Result<ControlProblem> {
    iletter_problem_for(ILETTER_MOMENT, alpha, newton)
}

/// I-letter control problem whose desired shape is the response to the tip
/// moment `moment` alone.
pub fn iletter_problem_for(
    moment: f64,
    alpha: f64,
    newton: NewtonOptions,
) -> Result<ControlProblem> {
    let mesh = iletter_mesh()?;
    let tip = mesh.node_count() - 1;
    let loads = iletter_loads(tip - 1, tip);
    let desired = newton_solve(&mesh, &loads, &[0.0, 0.0, moment], &newton)?.configuration;
    let expansion = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
    Ok(ControlProblem {
        mesh,
        loads,
        expansion,
        desired,
        alpha,
        newton,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ThicknessVariant {
    /// Maximise shear energy.
    ShearEnergy,
    /// Minimise the displacement norm.
    Displacement,
}

impl ThicknessVariant {
    pub fn default_penalty_weight(self) -> f64 {
        match self {
            ThicknessVariant::ShearEnergy => SHEAR_PENALTY_WEIGHT,
            ThicknessVariant::Displacement => DISPLACEMENT_PENALTY_WEIGHT,
        }
    }

    pub fn default_box(self) -> [(f64, f64); 4] {
        match self {
            ThicknessVariant::ShearEnergy => THICKNESS_BOX,
            ThicknessVariant::Displacement => THICKNESS_DISPLACEMENT_BOX,
        }
    }
}

/// Four-element cantilever with one thickness per element and a vertical
/// tip force.
pub fn thickness_problem(
    variant: ThicknessVariant,
    newton: NewtonOptions,
) -> Result<DesignProblem> {
    let penalty = MassPenalty {
        limit: THICKNESS_MASS_LIMIT,
        weight: variant.default_penalty_weight(),
    };
    thickness_problem_for(variant, THICKNESS_FORCE, penalty, newton)
}

/// Thickness problem with a given tip force and mass penalty.
pub fn thickness_problem_for(
    variant: ThicknessVariant,
    force: f64,
    mass_penalty: MassPenalty,
    newton: NewtonOptions,
) -> Result<DesignProblem> {
    let law = SectionLaw::new(
        75000.0,
        50000.0,
        CrossSection::Rectangular {
            width: THICKNESS_WIDTH,
            height: 30.0,
        },
    )
    .with_shear_factor(THICKNESS_SHEAR_FACTOR);
    let mut mesh = ChainBuilder::new(0.0, 0.0, 0.0)
        .line(THICKNESS_LENGTH, 4, law)
        .build()?;
    mesh.clamp(0);
    mesh.design = Some(DesignField::per_element(
        DesignRole::Thickness,
        &[0, 1, 2, 3],
        vec![30.0; 4],
    )?);
    let loads = LoadCase {
        fixed: vec![LoadPattern::Dead {
            node: 4,
            fx: 0.0,
            fy: force,
            moment: 0.0,
        }],
        controls: vec![],
    };
    let (cost, sense) = match variant {
        ThicknessVariant::ShearEnergy => (DesignCost::ShearEnergy, Sense::Maximize),
        ThicknessVariant::Displacement => (DesignCost::DisplacementNorm, Sense::Minimize),
    };
    Ok(DesignProblem {
        mesh,
        loads,
        cost,
        sense,
        density: THICKNESS_DENSITY,
        mass_penalty: Some(mass_penalty),
        newton,
    })
}
