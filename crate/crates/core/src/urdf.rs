//! URDF subset parsing, validation and serialization.
//!
//! Supported elements: `<robot>`, `<link>` with `<visual>` mesh geometry, and
//! `<joint>` of type fixed, revolute (also `continuous`) or prismatic. Collision and
//! inertial blocks are skipped; any other element is ignored with a diagnostic.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::Se3Transform;

/// Name of the link excluded from mesh grouping.
pub const BASE_LINK: &str = "base";

#[derive(Debug, Clone, PartialEq)]
pub struct UrdfModel {
    pub name: String,
    pub links: Vec<Link>,
    pub joints: Vec<Joint>,
    /// Links that never appear as a joint child, in document order.
    pub root_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub name: String,
    pub visuals: Vec<VisualComponent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisualComponent {
    pub mesh_basename: String,
    pub origin: Se3Transform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Fixed,
    Revolute,
    Prismatic,
}

impl JointKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            JointKind::Fixed => "fixed",
            JointKind::Revolute => "revolute",
            JointKind::Prismatic => "prismatic",
        }
    }

    pub fn is_movable(&self) -> bool {
        !matches!(self, JointKind::Fixed)
    }
}

impl fmt::Display for JointKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for JointKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(JointKind::Fixed),
            "revolute" => Ok(JointKind::Revolute),
            "prismatic" => Ok(JointKind::Prismatic),
            other => Err(Error::Argument(format!("unknown joint type {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub kind: JointKind,
    pub parent: String,
    pub child: String,
    /// Joint frame in the parent frame.
    pub origin: Se3Transform,
    /// Unit axis in the joint frame.
    pub axis: Vector3<f64>,
    pub limit_lower: Option<f64>,
    pub limit_upper: Option<f64>,
}

impl Joint {
    /// A movable joint with no limits, mostly for programmatic construction.
    pub fn new(
        name: impl Into<String>,
        kind: JointKind,
        parent: impl Into<String>,
        child: impl Into<String>,
        origin: Se3Transform,
        axis: Vector3<f64>,
    ) -> Self {
        Self {
            name: name.into(),
            kind,
            parent: parent.into(),
            child: child.into(),
            origin,
            axis,
            limit_lower: None,
            limit_upper: None,
        }
    }

    pub fn with_limits(mut self, lower: Option<f64>, upper: Option<f64>) -> Self {
        self.limit_lower = lower;
        self.limit_upper = upper;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticKind {
    MissingLimit,
    NoMeshVisual,
    NonMeshVisual,
    MultipleRoots,
    IgnoredElement,
    IgnoredAttribute,
    JointTypeMapped,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    /// 1-based source line, 0 when not tied to a location.
    pub line: u32,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: {}", self.line, self.message)
        } else {
            f.write_str(&self.message)
        }
    }
}

impl UrdfModel {
    /// Build and validate a model, computing the root set. Movable axes are
    /// normalized; fixed joints carry +x and no limits, as when parsed.
    pub fn new(name: impl Into<String>, links: Vec<Link>, joints: Vec<Joint>) -> Result<(Self, Vec<Diagnostic>)> {
        let mut model = UrdfModel {
            name: name.into(),
            links,
            joints,
            root_names: Vec::new(),
        };
        for j in &mut model.joints {
            if !j.kind.is_movable() {
                j.axis = Vector3::x();
                j.limit_lower = None;
                j.limit_upper = None;
                continue;
            }
            let n = j.axis.norm();
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::Structural(format!("joint {:?} has a zero axis", j.name)));
            }
            j.axis /= n;
        }
        let diagnostics = model.validate()?;
        Ok((model, diagnostics))
    }

    /// Check structural invariants and refresh `root_names`.
    pub fn validate(&mut self) -> Result<Vec<Diagnostic>> {
        let mut diagnostics = Vec::new();
        let mut names = HashSet::new();
        for link in &self.links {
            if link.name.is_empty() {
                return Err(Error::Structural("link with empty name".into()));
            }
            if !names.insert(link.name.as_str()) {
                return Err(Error::Structural(format!("duplicate link name {:?}", link.name)));
            }
        }
        let mut joint_names = HashSet::new();
        let mut children = HashSet::new();
        for j in &self.joints {
            if !joint_names.insert(j.name.as_str()) {
                return Err(Error::Structural(format!("duplicate joint name {:?}", j.name)));
            }
            for end in [&j.parent, &j.child] {
                if !names.contains(end.as_str()) {
                    return Err(Error::Structural(format!(
                        "joint {:?} references unknown link {:?}",
                        j.name, end
                    )));
                }
            }
            if j.parent == j.child {
                return Err(Error::Structural(format!("joint {:?} connects a link to itself", j.name)));
            }
            if !children.insert(j.child.as_str()) {
                return Err(Error::Structural(format!(
                    "link {:?} is the child of more than one joint",
                    j.child
                )));
            }
            if let (Some(lo), Some(hi)) = (j.limit_lower, j.limit_upper) {
                if lo > hi {
                    return Err(Error::Structural(format!(
                        "joint {:?} has lower limit {lo} above upper limit {hi}",
                        j.name
                    )));
                }
            }
        }
        self.root_names = self
            .links
            .iter()
            .filter(|l| !children.contains(l.name.as_str()))
            .map(|l| l.name.clone())
            .collect();
        // with one parent per link, a cycle leaves its links unreachable from every root
        let order = self.topological_joint_order()?;
        debug_assert_eq!(order.len(), self.joints.len());
        if self.root_names.len() > 1 {
            diagnostics.push(Diagnostic {
                kind: DiagnosticKind::MultipleRoots,
                line: 0,
                message: format!("model has {} root links: {}", self.root_names.len(), self.root_names.join(", ")),
            });
        }
        Ok(diagnostics)
    }

    pub fn link(&self, name: &str) -> Option<&Link> {
        self.links.iter().find(|l| l.name == name)
    }

    pub fn joint(&self, name: &str) -> Option<&Joint> {
        self.joints.iter().find(|j| j.name == name)
    }

    pub fn joint_mut(&mut self, name: &str) -> Option<&mut Joint> {
        self.joints.iter_mut().find(|j| j.name == name)
    }

    /// The joint whose child is `link`, if any.
    pub fn parent_joint(&self, link: &str) -> Option<&Joint> {
        self.joints.iter().find(|j| j.child == link)
    }

    /// Joint indices ordered so that every parent link is placed before its children.
    /// Fails if some joint is unreachable from the roots, which means a cycle.
    pub fn topological_joint_order(&self) -> Result<Vec<usize>> {
        let mut by_parent: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, j) in self.joints.iter().enumerate() {
            by_parent.entry(j.parent.as_str()).or_default().push(i);
        }
        let mut order = Vec::with_capacity(self.joints.len());
        let mut queue: VecDeque<&str> = self.root_names.iter().map(String::as_str).collect();
        while let Some(link) = queue.pop_front() {
            if let Some(js) = by_parent.get(link) {
                for &ji in js {
                    order.push(ji);
                    queue.push_back(self.joints[ji].child.as_str());
                }
            }
        }
        if order.len() != self.joints.len() {
            return Err(Error::Structural("joint graph contains a cycle".into()));
        }
        Ok(order)
    }

    /// Names of `link` and every link below it.
    pub fn subtree_links(&self, link: &str) -> Vec<String> {
        let mut out = vec![link.to_string()];
        let mut i = 0;
        while i < out.len() {
            let cur = out[i].clone();
            for j in self.joints.iter().filter(|j| j.parent == cur) {
                out.push(j.child.clone());
            }
            i += 1;
        }
        out
    }
}

fn text_line(doc: &roxmltree::Document<'_>, node: roxmltree::Node<'_, '_>) -> u32 {
    doc.text_pos_at(node.range().start).row
}

fn parse_err(doc: &roxmltree::Document<'_>, node: roxmltree::Node<'_, '_>, message: String) -> Error {
    let pos = doc.text_pos_at(node.range().start);
    Error::Parse {
        line: pos.row,
        column: pos.col,
        message,
    }
}

fn parse_vec3(
    doc: &roxmltree::Document<'_>,
    node: roxmltree::Node<'_, '_>,
    attr: &str,
    default: Vector3<f64>,
) -> Result<Vector3<f64>> {
    let Some(text) = node.attribute(attr) else {
        return Ok(default);
    };
    let vals: Vec<f64> = text
        .split_whitespace()
        .map(str::parse::<f64>)
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| parse_err(doc, node, format!("attribute {attr}={text:?}: {e}")))?;
    if vals.len() != 3 || vals.iter().any(|v| !v.is_finite()) {
        return Err(parse_err(doc, node, format!("attribute {attr}={text:?}: expected three finite numbers")));
    }
    Ok(Vector3::new(vals[0], vals[1], vals[2]))
}

fn parse_scalar(doc: &roxmltree::Document<'_>, node: roxmltree::Node<'_, '_>, attr: &str) -> Result<Option<f64>> {
    match node.attribute(attr) {
        None => Ok(None),
        Some(text) => {
            let v: f64 = text
                .trim()
                .parse()
                .map_err(|e| parse_err(doc, node, format!("attribute {attr}={text:?}: {e}")))?;
            if !v.is_finite() {
                return Err(parse_err(doc, node, format!("attribute {attr}={text:?} is not finite")));
            }
            Ok(Some(v))
        }
    }
}

fn parse_origin(doc: &roxmltree::Document<'_>, node: roxmltree::Node<'_, '_>) -> Result<Se3Transform> {
    match node.children().find(|c| c.has_tag_name("origin")) {
        None => Ok(Se3Transform::identity()),
        Some(o) => Ok(Se3Transform::from_xyz_rpy(
            parse_vec3(doc, o, "xyz", Vector3::zeros())?,
            parse_vec3(doc, o, "rpy", Vector3::zeros())?,
        )),
    }
}

/// Final path component of a mesh filename (handles `/`, `\` and `package://` prefixes).
pub fn mesh_basename(filename: &str) -> &str {
    filename.rsplit(['/', '\\']).next().unwrap_or(filename)
}

fn required_attr<'a>(
    doc: &roxmltree::Document<'_>,
    node: roxmltree::Node<'a, '_>,
    attr: &str,
) -> Result<&'a str> {
    node.attribute(attr)
        .ok_or_else(|| parse_err(doc, node, format!("<{}> is missing attribute {attr:?}", node.tag_name().name())))
}

fn ignored(doc: &roxmltree::Document<'_>, node: roxmltree::Node<'_, '_>, within: &str) -> Diagnostic {
    Diagnostic {
        kind: DiagnosticKind::IgnoredElement,
        line: text_line(doc, node),
        message: format!("ignoring unsupported element <{}> in <{within}>", node.tag_name().name()),
    }
}

fn parse_link(doc: &roxmltree::Document<'_>, node: roxmltree::Node<'_, '_>, diags: &mut Vec<Diagnostic>) -> Result<Link> {
    let name = required_attr(doc, node, "name")?.to_string();
    let mut visuals = Vec::new();
    for child in node.children().filter(|c| c.is_element()) {
        match child.tag_name().name() {
            "visual" => {
                let origin = parse_origin(doc, child)?;
                let mesh = child
                    .children()
                    .find(|c| c.has_tag_name("geometry"))
                    .and_then(|g| g.children().find(|c| c.has_tag_name("mesh")));
                match mesh {
                    Some(m) => {
                        let filename = required_attr(doc, m, "filename")?;
                        let base = mesh_basename(filename);
                        if base.is_empty() {
                            diags.push(Diagnostic {
                                kind: DiagnosticKind::NonMeshVisual,
                                line: text_line(doc, m),
                                message: format!("link {name:?}: empty mesh filename skipped"),
                            });
                        } else {
                            visuals.push(VisualComponent {
                                mesh_basename: base.to_string(),
                                origin,
                            });
                        }
                    }
                    None => diags.push(Diagnostic {
                        kind: DiagnosticKind::NonMeshVisual,
                        line: text_line(doc, child),
                        message: format!("link {name:?}: visual without mesh geometry skipped"),
                    }),
                }
            }
            "collision" | "inertial" => {}
            _ => diags.push(ignored(doc, child, "link")),
        }
    }
    if visuals.is_empty() {
        diags.push(Diagnostic {
            kind: DiagnosticKind::NoMeshVisual,
            line: text_line(doc, node),
            message: format!("link {name:?} has no mesh visuals"),
        });
    }
    Ok(Link { name, visuals })
}

fn parse_joint(doc: &roxmltree::Document<'_>, node: roxmltree::Node<'_, '_>, diags: &mut Vec<Diagnostic>) -> Result<Joint> {
    let name = required_attr(doc, node, "name")?.to_string();
    let type_text = required_attr(doc, node, "type")?;
    let line = text_line(doc, node);
    let kind = match type_text {
        "fixed" => JointKind::Fixed,
        "revolute" => JointKind::Revolute,
        "prismatic" => JointKind::Prismatic,
        "continuous" => {
            diags.push(Diagnostic {
                kind: DiagnosticKind::JointTypeMapped,
                line,
                message: format!("joint {name:?}: continuous joint treated as revolute without limits"),
            });
            JointKind::Revolute
        }
        other => {
            return Err(Error::Structural(format!(
                "line {line}: joint {name:?} has unsupported type {other:?}"
            )))
        }
    };
    let mut parent = None;
    let mut child = None;
    let mut origin = Se3Transform::identity();
    let mut axis = Vector3::x();
    let mut axis_node = None;
    let mut limit = None;
    for c in node.children().filter(|c| c.is_element()) {
        match c.tag_name().name() {
            "parent" => parent = Some(required_attr(doc, c, "link")?.to_string()),
            "child" => child = Some(required_attr(doc, c, "link")?.to_string()),
            "origin" => origin = parse_origin(doc, node)?,
            "axis" => {
                axis = parse_vec3(doc, c, "xyz", Vector3::x())?;
                axis_node = Some(c);
            }
            "limit" => limit = Some(c),
            _ => diags.push(ignored(doc, c, "joint")),
        }
    }
    let parent = parent.ok_or_else(|| parse_err(doc, node, format!("joint {name:?} has no <parent>")))?;
    let child = child.ok_or_else(|| parse_err(doc, node, format!("joint {name:?} has no <child>")))?;

    let (mut lower, mut upper) = (None, None);
    if kind.is_movable() {
        let n = axis.norm();
        if !(n > 0.0) {
            let at = axis_node.unwrap_or(node);
            return Err(parse_err(doc, at, format!("joint {name:?} has a zero axis")));
        }
        axis /= n;
        if type_text != "continuous" {
            match limit {
                Some(l) => {
                    lower = parse_scalar(doc, l, "lower")?;
                    upper = parse_scalar(doc, l, "upper")?;
                }
                None => diags.push(Diagnostic {
                    kind: DiagnosticKind::MissingLimit,
                    line,
                    message: format!("joint {name:?} has no <limit>; defaults apply downstream"),
                }),
            }
        }
    } else {
        axis = Vector3::x();
        if axis_node.is_some() || limit.is_some() {
            diags.push(Diagnostic {
                kind: DiagnosticKind::IgnoredAttribute,
                line,
                message: format!("fixed joint {name:?}: axis/limit ignored"),
            });
        }
    }
    Ok(Joint {
        name,
        kind,
        parent,
        child,
        origin,
        axis,
        limit_lower: lower,
        limit_upper: upper,
    })
}

/// Parse a URDF document into a validated model plus warnings.
pub fn parse_urdf(xml_text: &str) -> Result<(UrdfModel, Vec<Diagnostic>)> {
    let doc = roxmltree::Document::parse(xml_text).map_err(|e| {
        let pos = e.pos();
        Error::Parse {
            line: pos.row,
            column: pos.col,
            message: e.to_string(),
        }
    })?;
    let root = doc.root_element();
    if !root.has_tag_name("robot") {
        return Err(parse_err(&doc, root, format!("expected <robot> root, found <{}>", root.tag_name().name())));
    }
    let name = root.attribute("name").unwrap_or_default().to_string();
    let mut diags = Vec::new();
    let mut links = Vec::new();
    let mut joints = Vec::new();
    for node in root.children().filter(|c| c.is_element()) {
        match node.tag_name().name() {
            "link" => links.push(parse_link(&doc, node, &mut diags)?),
            "joint" => joints.push(parse_joint(&doc, node, &mut diags)?),
            _ => diags.push(ignored(&doc, node, "robot")),
        }
    }
    let (model, more) = UrdfModel::new(name, links, joints)?;
    diags.extend(more);
    Ok((model, diags))
}

/// Map each mesh-bearing non-base link to its mesh basenames in document order.
pub fn link_mesh_groups(model: &UrdfModel) -> BTreeMap<String, Vec<String>> {
    model
        .links
        .iter()
        .filter(|l| l.name != BASE_LINK)
        .filter_map(|l| {
            let meshes: Vec<String> = l
                .visuals
                .iter()
                .map(|v| v.mesh_basename.clone())
                .filter(|b| !b.is_empty())
                .collect();
            (!meshes.is_empty()).then(|| (l.name.clone(), meshes))
        })
        .collect()
}

/// Canonical joint directions with their names, in tie-break order.
pub const CANONICAL_AXES: [(&str, [f64; 3]); 6] = [
    ("front", [0.0, 0.0, 1.0]),
    ("back", [0.0, 0.0, -1.0]),
    ("up", [0.0, 1.0, 0.0]),
    ("down", [0.0, -1.0, 0.0]),
    ("right", [1.0, 0.0, 0.0]),
    ("left", [-1.0, 0.0, 0.0]),
];

/// Snap a direction to the closest canonical axis (largest dot product, first wins on ties).
pub fn snap_axis_to_canonical(axis: Vector3<f64>) -> Result<Vector3<f64>> {
    let n = axis.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::Domain("cannot snap a zero or non-finite axis".into()));
    }
    let a = axis / n;
    let mut best = Vector3::from(CANONICAL_AXES[0].1);
    let mut best_dot = a.dot(&best);
    for (_, c) in &CANONICAL_AXES[1..] {
        let c = Vector3::from(*c);
        let d = a.dot(&c);
        // ties: within a few ulps of the incumbent keep the earlier entry
        if d > best_dot + 4.0 * f64::EPSILON {
            best = c;
            best_dot = d;
        }
    }
    Ok(best)
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn fmt3(v: &Vector3<f64>) -> String {
    format!("{} {} {}", v.x, v.y, v.z)
}

fn origin_xml(t: &Se3Transform) -> String {
    format!("<origin xyz=\"{}\" rpy=\"{}\"/>", fmt3(&t.translation), fmt3(&t.rpy()))
}

/// Serialize a model back to URDF XML.
pub fn write_urdf(model: &UrdfModel) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\"?>\n");
    out.push_str(&format!("<robot name=\"{}\">\n", escape(&model.name)));
    for link in &model.links {
        if link.visuals.is_empty() {
            out.push_str(&format!("  <link name=\"{}\"/>\n", escape(&link.name)));
            continue;
        }
        out.push_str(&format!("  <link name=\"{}\">\n", escape(&link.name)));
        for v in &link.visuals {
            out.push_str("    <visual>\n");
            out.push_str(&format!("      {}\n", origin_xml(&v.origin)));
            out.push_str(&format!(
                "      <geometry><mesh filename=\"{}\"/></geometry>\n",
                escape(&v.mesh_basename)
            ));
            out.push_str("    </visual>\n");
        }
        out.push_str("  </link>\n");
    }
    for j in &model.joints {
        out.push_str(&format!(
            "  <joint name=\"{}\" type=\"{}\">\n",
            escape(&j.name),
            j.kind
        ));
        out.push_str(&format!("    <parent link=\"{}\"/>\n", escape(&j.parent)));
        out.push_str(&format!("    <child link=\"{}\"/>\n", escape(&j.child)));
        out.push_str(&format!("    {}\n", origin_xml(&j.origin)));
        if j.kind.is_movable() {
            out.push_str(&format!("    <axis xyz=\"{}\"/>\n", fmt3(&j.axis)));
            match (j.limit_lower, j.limit_upper) {
                (None, None) => {}
                (lo, hi) => {
                    let mut attrs = String::new();
                    if let Some(lo) = lo {
                        attrs.push_str(&format!(" lower=\"{lo}\""));
                    }
                    if let Some(hi) = hi {
                        attrs.push_str(&format!(" upper=\"{hi}\""));
                    }
                    out.push_str(&format!("    <limit{attrs}/>\n"));
                }
            }
        }
        out.push_str("  </joint>\n");
    }
    out.push_str("</robot>\n");
    out
}

/// Structural equality used for round-trip checks: names and kinds exact, axes and
/// origins within `tol`, limits exact.
pub fn structurally_equal(a: &UrdfModel, b: &UrdfModel, tol: f64) -> bool {
    let same_origin = |x: &Se3Transform, y: &Se3Transform| x.max_abs_diff(y) <= tol;
    a.name == b.name
        && a.root_names == b.root_names
        && a.links.len() == b.links.len()
        && a.joints.len() == b.joints.len()
        && a.links.iter().zip(&b.links).all(|(x, y)| {
            x.name == y.name
                && x.visuals.len() == y.visuals.len()
                && x.visuals.iter().zip(&y.visuals).all(|(v, w)| {
                    v.mesh_basename == w.mesh_basename && same_origin(&v.origin, &w.origin)
                })
        })
        && a.joints.iter().zip(&b.joints).all(|(x, y)| {
            x.name == y.name
                && x.kind == y.kind
                && x.parent == y.parent
                && x.child == y.child
                && same_origin(&x.origin, &y.origin)
                && (x.axis - y.axis).abs().max() <= tol
                && x.limit_lower == y.limit_lower
                && x.limit_upper == y.limit_upper
        })
}
