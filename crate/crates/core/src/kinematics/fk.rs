use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::se3::{rodrigues, Se3Transform};
use crate::error::{Error, Result};
use crate::urdf::{JointKind, UrdfModel, BASE_LINK};

/// Joint values keyed by joint name: radians for revolute, scene units for prismatic.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointConfiguration(pub BTreeMap<String, f64>);

impl JointConfiguration {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, joint: impl Into<String>, value: f64) {
        self.0.insert(joint.into(), value);
    }

    pub fn get(&self, joint: &str) -> Option<f64> {
        self.0.get(joint).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// World transforms per link (indexed like `UrdfModel::links`) after global alignment.
#[derive(Debug, Clone, PartialEq)]
pub struct FkResult {
    pub link_world: Vec<Se3Transform>,
    pub visual_world: Vec<Se3Transform>,
    /// Global transform `S` already applied to every entry above.
    pub alignment: Se3Transform,
    pub reference_link: usize,
}

impl FkResult {
    /// World transform of visual component `component` of link `link`.
    pub fn component_world(&self, model: &UrdfModel, link: usize, component: usize) -> Se3Transform {
        self.link_world[link].compose(&model.links[link].visuals[component].origin)
    }
}

/// Representative visual transform: the first visual in document order, identity if none.
pub fn representative_visual(model: &UrdfModel, link: usize) -> Se3Transform {
    model.links[link]
        .visuals
        .first()
        .map(|v| v.origin)
        .unwrap_or_default()
}

fn link_index(model: &UrdfModel, name: &str) -> Result<usize> {
    model
        .links
        .iter()
        .position(|l| l.name == name)
        .ok_or_else(|| Error::Structural(format!("unknown link {name:?}")))
}

/// Alignment reference: a fixed child of the base link, else the parent of the first
/// revolute joint, else the first root.
pub fn reference_link(model: &UrdfModel) -> Result<usize> {
    let base = if model.link(BASE_LINK).is_some() {
        Some(BASE_LINK)
    } else {
        model.root_names.first().map(String::as_str)
    };
    if let Some(base) = base {
        if let Some(j) = model
            .joints
            .iter()
            .find(|j| j.kind == JointKind::Fixed && j.parent == base)
        {
            return link_index(model, &j.child);
        }
    }
    if let Some(j) = model.joints.iter().find(|j| j.kind == JointKind::Revolute) {
        return link_index(model, &j.parent);
    }
    let root = model
        .root_names
        .first()
        .ok_or_else(|| Error::Structural("model has no root link".into()))?;
    link_index(model, root)
}

/// Visual-space forward kinematics; joints absent from `config` sit at zero.
pub fn forward_kinematics(model: &UrdfModel, config: &JointConfiguration) -> Result<FkResult> {
    for (name, value) in config.iter() {
        let joint = model
            .joint(name)
            .ok_or_else(|| Error::Argument(format!("configuration names unknown joint {name:?}")))?;
        if !joint.kind.is_movable() {
            return Err(Error::Argument(format!("configuration names fixed joint {name:?}")));
        }
        if !value.is_finite() {
            return Err(Error::Argument(format!("joint {name:?} value {value} is not finite")));
        }
    }
    let order = model.topological_joint_order()?;
    let n = model.links.len();
    let mut link_world = vec![None; n];
    let mut visual_world = vec![None; n];
    for root in &model.root_names {
        let i = link_index(model, root)?;
        link_world[i] = Some(Se3Transform::identity());
        visual_world[i] = Some(representative_visual(model, i));
    }
    for ji in order {
        let joint = &model.joints[ji];
        let p = link_index(model, &joint.parent)?;
        let c = link_index(model, &joint.child)?;
        let theta = config.get(&joint.name).unwrap_or(0.0);
        let motion = match joint.kind {
            JointKind::Fixed => Se3Transform::identity(),
            JointKind::Revolute => Se3Transform::from_rotation(rodrigues(&joint.axis.normalize(), theta)),
            JointKind::Prismatic => Se3Transform::from_translation(joint.axis.normalize() * theta),
        };
        let parent_vis = visual_world[p]
            .ok_or_else(|| Error::Structural(format!("link {:?} placed before its parent", joint.parent)))?;
        let lw = parent_vis.compose(&joint.origin).compose(&motion);
        visual_world[c] = Some(lw.compose(&representative_visual(model, c)));
        link_world[c] = Some(lw);
    }
    let link_world: Vec<Se3Transform> = link_world
        .into_iter()
        .map(|t| t.ok_or_else(|| Error::Structural("link unreachable from any root".into())))
        .collect::<Result<_>>()?;
    let visual_world: Vec<Se3Transform> = visual_world.into_iter().map(Option::unwrap).collect();

    let r = reference_link(model)?;
    let alignment = representative_visual(model, r).compose(&visual_world[r].inverse());
    Ok(FkResult {
        link_world: link_world.iter().map(|t| alignment.compose(t)).collect(),
        visual_world: visual_world.iter().map(|t| alignment.compose(t)).collect(),
        alignment,
        reference_link: r,
    })
}
