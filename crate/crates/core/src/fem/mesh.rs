use nalgebra::{DVector, Vector2};
use serde::{Deserialize, Serialize};

use super::design::DesignField;
use super::shape::{gauss_rule, lagrange_shape};
use crate::beam::SectionLaw;
use crate::error::{Error, Result};

pub const DOFS_PER_NODE: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dof {
    X,
    Y,
    Theta,
}

impl Dof {
    pub const ALL: [Dof; 3] = [Dof::X, Dof::Y, Dof::Theta];

    pub fn offset(self) -> usize {
        match self {
            Dof::X => 0,
            Dof::Y => 1,
            Dof::Theta => 2,
        }
    }
}

pub fn dof_index(node: usize, dof: Dof) -> usize {
    DOFS_PER_NODE * node + dof.offset()
}

/// Reference position and cross-section angle of a node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceNode {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Element {
    pub nodes: Vec<usize>,
    pub section: SectionLaw,
    pub gauss_points: usize,
}

/// Prescribed value of one nodal dof.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constraint {
    pub node: usize,
    pub dof: Dof,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<ReferenceNode>,
    pub elements: Vec<Element>,
    pub constraints: Vec<Constraint>,
    pub design: Option<DesignField>,
}

impl Mesh {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn dof_count(&self) -> usize {
        DOFS_PER_NODE * self.nodes.len()
    }

    /// Fixes all three dofs of `node` at their reference values.
    pub fn clamp(&mut self, node: usize) {
        let n = self.nodes[node];
        self.constraints.retain(|c| c.node != node);
        for (dof, value) in Dof::ALL.into_iter().zip([n.x, n.y, n.theta]) {
            self.constraints.push(Constraint { node, dof, value });
        }
    }

    pub fn is_constrained(&self, index: usize) -> bool {
        self.constraints
            .iter()
            .any(|c| dof_index(c.node, c.dof) == index)
    }

    /// Free dof indices in ascending order.
    pub fn free_dofs(&self) -> Vec<usize> {
        let mut fixed = vec![false; self.dof_count()];
        for c in &self.constraints {
            fixed[dof_index(c.node, c.dof)] = true;
        }
        (0..self.dof_count()).filter(|&i| !fixed[i]).collect()
    }

    pub fn reference_configuration(&self) -> Configuration {
        let v = self
            .nodes
            .iter()
            .flat_map(|n| [n.x, n.y, n.theta])
            .collect::<Vec<_>>();
        Configuration(DVector::from_vec(v))
    }

    /// Section law in force at natural coordinate `xi` of element `e`,
    /// together with the design coefficients if a design field governs it.
    pub fn section_at(&self, e: usize, xi: f64) -> Result<(SectionLaw, Option<Vec<(usize, f64)>>)> {
        let base = self.elements[e].section;
        match self
            .design
            .as_ref()
            .and_then(|d| d.sample(e, xi).map(|s| (d.role, s)))
        {
            Some((role, (value, coeffs))) => {
                Ok((base.with_design_value(role, value)?, Some(coeffs)))
            }
            None => Ok((base, None)),
        }
    }

    /// Reference jacobian `ds/dξ` of element `e` at `xi`.
    pub fn jacobian(&self, e: usize, xi: f64) -> Result<f64> {
        let el = &self.elements[e];
        let s = lagrange_shape(el.nodes.len(), xi)?;
        let mut d = Vector2::zeros();
        for (a, &n) in el.nodes.iter().enumerate() {
            d += Vector2::new(self.nodes[n].x, self.nodes[n].y) * s.derivatives[a];
        }
        Ok(d.norm())
    }

    /// Reference length of element `e` by its own quadrature rule.
    pub fn element_length(&self, e: usize) -> Result<f64> {
        let mut l = 0.0;
        for (xi, w) in gauss_rule(self.elements[e].gauss_points.max(2))? {
            l += self.jacobian(e, xi)? * w;
        }
        Ok(l)
    }

    pub fn total_length(&self) -> Result<f64> {
        (0..self.elements.len())
            .map(|e| self.element_length(e))
            .sum()
    }

    pub fn with_design_values(&self, values: &[f64]) -> Result<Mesh> {
        let field = self
            .design
            .as_ref()
            .ok_or_else(|| Error::InvalidMesh("mesh has no design field".into()))?;
        let mut out = self.clone();
        out.design = Some(field.with_values(values)?);
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() || self.elements.is_empty() {
            return Err(Error::InvalidMesh("mesh needs nodes and elements".into()));
        }
        for (e, el) in self.elements.iter().enumerate() {
            if let Some(&bad) = el.nodes.iter().find(|&&n| n >= self.nodes.len()) {
                return Err(Error::InvalidMesh(format!(
                    "element {e} references missing node {bad}"
                )));
            }
            el.section.validate()?;
            for (xi, _) in gauss_rule(el.gauss_points)? {
                let j = self.jacobian(e, xi)?;
                if !(j > 1e-14) {
                    return Err(Error::DegenerateElement {
                        element: e,
                        jacobian: j,
                    });
                }
            }
        }
        for c in &self.constraints {
            if c.node >= self.nodes.len() {
                return Err(Error::InvalidMesh(format!(
                    "constraint on missing node {}",
                    c.node
                )));
            }
        }
        if let Some(d) = &self.design {
            if d.max_element().is_some_and(|m| m >= self.elements.len()) {
                return Err(Error::InvalidMesh(
                    "design field references a missing element".into(),
                ));
            }
            for e in 0..self.elements.len() {
                self.section_at(e, 0.0)?.0.validate()?;
            }
        }
        Ok(())
    }
}

/// Builds a chain of straight and circular segments starting at a point
/// with a given heading. Node angles are the tangent angles of the curve.
#[derive(Clone, Debug)]
pub struct ChainBuilder {
    nodes: Vec<ReferenceNode>,
    elements: Vec<Element>,
    nodes_per_element: usize,
    gauss_points: usize,
}

impl ChainBuilder {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            nodes: vec![ReferenceNode {
                x,
                y,
                theta: heading,
            }],
            elements: Vec::new(),
            nodes_per_element: 2,
            gauss_points: 1,
        }
    }

    pub fn element_order(mut self, nodes_per_element: usize, gauss_points: usize) -> Self {
        self.nodes_per_element = nodes_per_element;
        self.gauss_points = gauss_points;
        self
    }

    fn cursor(&self) -> ReferenceNode {
        *self.nodes.last().expect("chain has a start node")
    }

    fn push_segment(
        &mut self,
        count: usize,
        section: SectionLaw,
        at: impl Fn(f64) -> ReferenceNode,
    ) {
        let per = self.nodes_per_element - 1;
        let total = count * per;
        for e in 0..count {
            let first = self.nodes.len() - 1;
            for k in 1..=per {
                self.nodes.push(at((e * per + k) as f64 / total as f64));
            }
            self.elements.push(Element {
                nodes: (first..=first + per).collect(),
                section,
                gauss_points: self.gauss_points,
            });
        }
    }

    pub fn line(mut self, length: f64, count: usize, section: SectionLaw) -> Self {
        let c = self.cursor();
        let (s, co) = c.theta.sin_cos();
        self.push_segment(count, section, |t| ReferenceNode {
            x: c.x + co * length * t,
            y: c.y + s * length * t,
            theta: c.theta,
        });
        self
    }

    /// Circular arc; positive `sweep` turns counter-clockwise.
    pub fn arc(mut self, radius: f64, sweep: f64, count: usize, section: SectionLaw) -> Self {
        let c = self.cursor();
        let side = sweep.signum();
        // centre lies to the left of the heading for a counter-clockwise turn
        let (s, co) = c.theta.sin_cos();
        let cx = c.x - side * radius * s;
        let cy = c.y + side * radius * co;
        let start = (c.y - cy).atan2(c.x - cx);
        self.push_segment(count, section, |t| {
            let a = start + sweep * t;
            ReferenceNode {
                x: cx + radius * a.cos(),
                y: cy + radius * a.sin(),
                theta: c.theta + sweep * t,
            }
        });
        self
    }

    pub fn build(self) -> Result<Mesh> {
        let mesh = Mesh {
            nodes: self.nodes,
            elements: self.elements,
            constraints: Vec::new(),
            design: None,
        };
        mesh.validate()?;
        Ok(mesh)
    }
}

/// Nodal positions and rotations, three entries per node.
#[derive(Clone, Debug, PartialEq)]
pub struct Configuration(pub DVector<f64>);

impl Configuration {
    pub fn from_vec(v: Vec<f64>) -> Self {
        Self(DVector::from_vec(v))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn node_count(&self) -> usize {
        self.0.len() / DOFS_PER_NODE
    }

    pub fn position(&self, node: usize) -> Vector2<f64> {
        Vector2::new(self.0[3 * node], self.0[3 * node + 1])
    }

    pub fn rotation(&self, node: usize) -> f64 {
        self.0[3 * node + 2]
    }

    /// Nodal displacements `φ_a − X_a` relative to the reference geometry.
    pub fn displacement(&self, mesh: &Mesh, node: usize) -> Vector2<f64> {
        let n = mesh.nodes[node];
        self.position(node) - Vector2::new(n.x, n.y)
    }

    pub fn check_compatible(&self, mesh: &Mesh) -> Result<()> {
        if self.0.len() != mesh.dof_count() {
            return Err(Error::Dimension {
                what: "configuration",
                expected: mesh.dof_count(),
                got: self.0.len(),
            });
        }
        Ok(())
    }
}
