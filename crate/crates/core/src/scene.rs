//! The simulated environment the proxy hand acts on.
//!
//! Objects only change through hand contact: buttons register presses from the
//! stroke of a point or push, grabbables and controls bind to the hand at the
//! interacting frame of a grab or pinch, and containers accept released objects.
//! Geometry uses a fixed camera frame: +x right, +y up, -z away from the viewer.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::gesture::{GestureId, Phase};
use crate::skeleton::{hand_axes, HandPose, JointId, Vec3};

pub type ObjectId = String;

const TIE_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("scene file: {0}")]
    Parse(String),
    #[error("duplicate object id `{0}`")]
    DuplicateId(String),
    #[error("object `{0}` has a non-positive half extent")]
    BadExtents(String),
    #[error("slider `{0}` has a zero axis")]
    BadAxis(String),
    #[error("knob `{0}` has an empty angle range")]
    BadRange(String),
    #[error("snapshot does not match the scene's object set")]
    StaleSnapshot,
    #[error("unknown object `{0}`")]
    UnknownObject(String),
}

fn default_axis() -> Vec3 {
    Vec3::new(0.0, 1.0, 0.0)
}

fn default_slider_value() -> f64 {
    0.5
}

fn default_knob_range() -> [f64; 2] {
    [-std::f64::consts::PI, std::f64::consts::PI]
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// What an object does when the hand acts on it, with its mutable state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "affordance", rename_all = "snake_case")]
pub enum Affordance {
    Grabbable,
    Button {
        #[serde(default)]
        press_count: u32,
        /// Whether a pressing joint is currently inside the button.
        #[serde(default, skip_serializing_if = "is_false")]
        in_contact: bool,
    },
    Slider {
        #[serde(default = "default_slider_value")]
        value: f64,
        /// Direction of increasing value.
        #[serde(default = "default_axis")]
        axis: Vec3,
    },
    Knob {
        #[serde(default)]
        angle: f64,
        #[serde(default = "default_knob_range")]
        range: [f64; 2],
    },
    Container,
    Static,
}

impl Affordance {
    pub fn kind(&self) -> &'static str {
        match self {
            Affordance::Grabbable => "grabbable",
            Affordance::Button { .. } => "button",
            Affordance::Slider { .. } => "slider",
            Affordance::Knob { .. } => "knob",
            Affordance::Container => "container",
            Affordance::Static => "static",
        }
    }

    fn bindable(&self) -> bool {
        matches!(
            self,
            Affordance::Grabbable | Affordance::Slider { .. } | Affordance::Knob { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: ObjectId,
    pub name: String,
    #[serde(default)]
    pub tags: Vec<String>,
    pub position: Vec3,
    pub half_extents: Vec3,
    #[serde(flatten)]
    pub affordance: Affordance,
}

impl SceneObject {
    pub fn contains(&self, p: Vec3) -> bool {
        let d = p - self.position;
        d.x.abs() <= self.half_extents.x
            && d.y.abs() <= self.half_extents.y
            && d.z.abs() <= self.half_extents.z
    }

    /// Sphere-vs-box overlap test.
    pub fn touches(&self, center: Vec3, radius: f64) -> bool {
        let d = center - self.position;
        let ex = self.half_extents;
        let closest = Vec3::new(
            d.x.clamp(-ex.x, ex.x),
            d.y.clamp(-ex.y, ex.y),
            d.z.clamp(-ex.z, ex.z),
        );
        (d - closest).norm_squared() <= radius * radius
    }

    /// Length of a slider's track along its axis.
    pub fn slider_travel(&self) -> Option<f64> {
        match &self.affordance {
            Affordance::Slider { axis, .. } => {
                let a = axis.normalize();
                let ex = self.half_extents;
                Some(2.0 * (ex.x * a.x.abs() + ex.y * a.y.abs() + ex.z * a.z.abs()))
            }
            _ => None,
        }
    }

    /// Where the hand should make contact: a slider's handle, otherwise the center.
    pub fn contact_point(&self) -> Vec3 {
        match &self.affordance {
            Affordance::Slider { value, axis } => {
                let travel = self.slider_travel().unwrap_or(0.0);
                self.position + axis.normalize() * ((value - 0.5) * travel)
            }
            _ => self.position,
        }
    }

    /// Lemmatized tokens of the name and every tag.
    pub fn vocabulary(&self) -> BTreeSet<String> {
        let mut words: BTreeSet<String> = lemma_tokens(&self.name).into_iter().collect();
        for tag in &self.tags {
            words.extend(lemma_tokens(tag));
        }
        words
    }
}

/// Reduces an English word to a crude singular form.
pub fn lemma(word: &str) -> String {
    let w = word.to_lowercase();
    let n = w.len();
    if n > 4 && w.ends_with("ies") {
        return format!("{}y", &w[..n - 3]);
    }
    for suffix in ["ches", "shes", "xes", "sses", "zes", "oes"] {
        if n > suffix.len() + 1 && w.ends_with(suffix) {
            return w[..n - 2].to_string();
        }
    }
    if n > 3 && w.ends_with('s') && !w.ends_with("ss") && !w.ends_with("us") && !w.ends_with("is") {
        return w[..n - 1].to_string();
    }
    w
}

pub fn lemma_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(lemma)
        .collect()
}

macro_rules! phrase_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $phrase:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            /// Spoken form, as used in instruction documents.
            pub fn phrase(self) -> &'static str {
                match self {
                    $($name::$variant => $phrase),+
                }
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let key = s.trim().to_lowercase().replace('_', " ");
                $name::ALL
                    .iter()
                    .copied()
                    .find(|v| v.phrase() == key)
                    .ok_or_else(|| format!("unknown {} `{}`", stringify!($name), s))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.phrase())
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.serialize_str(self.phrase())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

phrase_enum! {
    /// Ways of narrowing down which object a reference means.
    ConstraintKind {
        Below => "below",
        Above => "above",
        ToTheLeftOf => "to the left of",
        ToTheRightOf => "to the right of",
        InFrontOf => "in front of",
        Behind => "behind",
        Closest => "closest",
        Farthest => "farthest",
        First => "first",
        Last => "last",
        OnTheLeft => "on the left",
        InTheMiddle => "in the middle",
        OnTheRight => "on the right",
    }
}

impl ConstraintKind {
    pub fn is_relational(self) -> bool {
        matches!(
            self,
            ConstraintKind::Below
                | ConstraintKind::Above
                | ConstraintKind::ToTheLeftOf
                | ConstraintKind::ToTheRightOf
                | ConstraintKind::InFrontOf
                | ConstraintKind::Behind
        )
    }
}

phrase_enum! {
    /// Placement of the hand relative to an anchor object.
    Relation {
        OnTopOf => "on top of",
        Under => "under",
        InFrontOf => "in front of",
        Behind => "behind",
        ToTheLeftOf => "to the left of",
        ToTheRightOf => "to the right of",
    }
}

impl Relation {
    fn axis(self) -> Vec3 {
        match self {
            Relation::OnTopOf => Vec3::new(0.0, 1.0, 0.0),
            Relation::Under => Vec3::new(0.0, -1.0, 0.0),
            Relation::InFrontOf => Vec3::new(0.0, 0.0, 1.0),
            Relation::Behind => Vec3::new(0.0, 0.0, -1.0),
            Relation::ToTheLeftOf => Vec3::new(-1.0, 0.0, 0.0),
            Relation::ToTheRightOf => Vec3::new(1.0, 0.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialConstraint {
    pub kind: ConstraintKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<String>,
}

impl SpatialConstraint {
    pub fn ordinal(kind: ConstraintKind) -> Self {
        SpatialConstraint { kind, anchor: None }
    }

    pub fn relative(kind: ConstraintKind, anchor: impl Into<String>) -> Self {
        SpatialConstraint {
            kind,
            anchor: Some(anchor.into()),
        }
    }

    pub fn is_well_formed(&self) -> bool {
        self.kind.is_relational() == self.anchor.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "objects", rename_all = "snake_case")]
pub enum TargetResolution {
    Unique(ObjectId),
    /// Candidates ordered left to right.
    Ambiguous(Vec<ObjectId>),
    None,
}

const QUERY_STOPWORDS: &[&str] = &["the", "a", "an", "one", "object", "thing", "that", "this", "my"];

/// Displacement of an object's center from `anchor` for a relative placement.
pub fn relative_position(anchor: &SceneObject, relation: Relation, clearance: f64) -> Vec3 {
    let axis = relation.axis();
    let extent = anchor.half_extents.component_mul(&axis).norm();
    anchor.position + axis * (extent + clearance)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum InteractionEvent {
    ButtonPressed { object: ObjectId, press_count: u32 },
    Grabbed { object: ObjectId },
    Released { object: ObjectId },
    ContainedIn { object: ObjectId, container: ObjectId },
    SliderChanged { object: ObjectId, value: f64 },
    KnobTurned { object: ObjectId, angle: f64 },
}

/// What the hand is doing this tick, as far as interactions care.
#[derive(Debug, Clone, PartialEq)]
pub struct GestureContext {
    pub gesture: GestureId,
    pub phase: Option<Phase>,
    pub joint: JointId,
    /// True on the tick that shows the clip's interacting frame.
    pub at_interacting_frame: bool,
    pub target: Option<ObjectId>,
    /// Identifies the executing step; a binding made by another step is released.
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BindingKind {
    /// The object center rides along with the joint.
    Carry,
    /// Slider value tracks joint displacement along the slider axis.
    Slide { start_joint: Vec3, start_value: f64 },
    /// Knob angle tracks accumulated hand roll.
    Twist {
        start_angle: f64,
        accumulated_roll: f64,
        last_lateral: Vec3,
    },
}

/// An object attached to the hand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binding {
    pub object: ObjectId,
    pub joint: JointId,
    pub grip_offset: Vec3,
    pub step: u64,
    pub kind: BindingKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionConfig {
    pub contact_radius: f64,
    pub drop_height: f64,
}

impl Default for InteractionConfig {
    fn default() -> Self {
        InteractionConfig {
            contact_radius: 0.015,
            drop_height: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSnapshot {
    objects: Vec<SceneObject>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    objects: Vec<SceneObject>,
    /// Reference point for `closest`/`farthest`.
    #[serde(default = "Scene::default_viewer")]
    viewer: Vec3,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SceneDoc {
    List(Vec<SceneObject>),
    Full(Scene),
}

impl Scene {
    fn default_viewer() -> Vec3 {
        Vec3::new(0.0, 1.2, 1.0)
    }

    pub fn new(objects: Vec<SceneObject>) -> Result<Scene, SceneError> {
        Scene::with_viewer(objects, Scene::default_viewer())
    }

    pub fn with_viewer(mut objects: Vec<SceneObject>, viewer: Vec3) -> Result<Scene, SceneError> {
        let mut seen = BTreeSet::new();
        for obj in objects.iter_mut() {
            if !seen.insert(obj.id.clone()) {
                return Err(SceneError::DuplicateId(obj.id.clone()));
            }
            if obj.half_extents.iter().any(|e| !(*e > 0.0)) {
                return Err(SceneError::BadExtents(obj.id.clone()));
            }
            match &mut obj.affordance {
                Affordance::Slider { value, axis } => {
                    if !(axis.norm() > 0.0) {
                        return Err(SceneError::BadAxis(obj.id.clone()));
                    }
                    *axis = axis.normalize();
                    *value = value.clamp(0.0, 1.0);
                }
                Affordance::Knob { angle, range } => {
                    if !(range[0] < range[1]) {
                        return Err(SceneError::BadRange(obj.id.clone()));
                    }
                    *angle = angle.clamp(range[0], range[1]);
                }
                _ => {}
            }
        }
        Ok(Scene { objects, viewer })
    }

    /// Accepts a bare list of objects or `{"objects": [...], "viewer": [...]}`.
    pub fn from_json(doc: &str) -> Result<Scene, SceneError> {
        match serde_json::from_str::<SceneDoc>(doc).map_err(|e| SceneError::Parse(e.to_string()))? {
            SceneDoc::List(objects) => Scene::new(objects),
            SceneDoc::Full(scene) => Scene::with_viewer(scene.objects, scene.viewer),
        }
    }

    pub fn objects(&self) -> &[SceneObject] {
        &self.objects
    }

    pub fn viewer(&self) -> Vec3 {
        self.viewer
    }

    pub fn get(&self, id: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    fn get_mut(&mut self, id: &str) -> Option<&mut SceneObject> {
        self.objects.iter_mut().find(|o| o.id == id)
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    /// Every lemmatized word naming or describing an object.
    pub fn lexicon(&self) -> BTreeSet<String> {
        self.objects.iter().flat_map(|o| o.vocabulary()).collect()
    }

    /// Objects matching the most query terms, in scene order.
    fn matches(&self, query: &str) -> Vec<&SceneObject> {
        let terms: BTreeSet<String> = lemma_tokens(query)
            .into_iter()
            .filter(|t| !QUERY_STOPWORDS.contains(&t.as_str()))
            .collect();
        if terms.is_empty() {
            return Vec::new();
        }
        let scored: Vec<(usize, &SceneObject)> = self
            .objects
            .iter()
            .map(|o| {
                let vocab = o.vocabulary();
                (terms.iter().filter(|t| vocab.contains(*t)).count(), o)
            })
            .collect();
        let best = scored.iter().map(|(s, _)| *s).max().unwrap_or(0);
        if best == 0 {
            return Vec::new();
        }
        scored
            .into_iter()
            .filter(|(s, _)| *s == best)
            .map(|(_, o)| o)
            .collect()
    }

    pub fn resolve_target(&self, query: &str, constraints: &[SpatialConstraint]) -> TargetResolution {
        let mut set = self.matches(query);
        for c in constraints {
            if set.is_empty() {
                break;
            }
            set = match c.kind {
                kind if kind.is_relational() => {
                    let anchor = match c.anchor.as_deref().map(|a| self.resolve_target(a, &[])) {
                        Some(TargetResolution::Unique(id)) => self.get(&id).cloned(),
                        _ => None,
                    };
                    let Some(anchor) = anchor else {
                        return TargetResolution::None;
                    };
                    set.into_iter()
                        .filter(|o| o.id != anchor.id && relation_holds(kind, o, &anchor))
                        .collect()
                }
                ConstraintKind::Closest => extreme(set, |o| -(o.position - self.viewer).norm()),
                ConstraintKind::Farthest => extreme(set, |o| (o.position - self.viewer).norm()),
                ConstraintKind::First | ConstraintKind::OnTheLeft => extreme(set, |o| -o.position.x),
                ConstraintKind::Last | ConstraintKind::OnTheRight => extreme(set, |o| o.position.x),
                _ => middle(set),
            };
        }
        let mut ids: Vec<&SceneObject> = set;
        ids.sort_by(|a, b| a.position.x.total_cmp(&b.position.x).then_with(|| a.id.cmp(&b.id)));
        match ids.len() {
            0 => TargetResolution::None,
            1 => TargetResolution::Unique(ids[0].id.clone()),
            _ => TargetResolution::Ambiguous(ids.into_iter().map(|o| o.id.clone()).collect()),
        }
    }

    pub fn snapshot(&self) -> SceneSnapshot {
        SceneSnapshot {
            objects: self.objects.clone(),
        }
    }

    pub fn restore(&mut self, snapshot: &SceneSnapshot) -> Result<(), SceneError> {
        let same_set = snapshot.objects.len() == self.objects.len()
            && snapshot
                .objects
                .iter()
                .zip(&self.objects)
                .all(|(a, b)| a.id == b.id);
        if !same_set {
            return Err(SceneError::StaleSnapshot);
        }
        self.objects.clone_from(&snapshot.objects);
        Ok(())
    }

    /// Objects whose state differs from `earlier` (same object set assumed).
    pub fn changed_since<'a>(&'a self, earlier: &Scene) -> Vec<&'a SceneObject> {
        self.objects
            .iter()
            .filter(|o| earlier.get(&o.id) != Some(*o))
            .collect()
    }

    /// Detaches whatever the hand holds, dropping carried objects into a
    /// container when they are inside one or hovering over its opening.
    pub fn release(&mut self, held: &mut Option<Binding>, cfg: &InteractionConfig) -> Vec<InteractionEvent> {
        let Some(binding) = held.take() else {
            return Vec::new();
        };
        let mut events = vec![InteractionEvent::Released {
            object: binding.object.clone(),
        }];
        if binding.kind != BindingKind::Carry {
            return events;
        }
        let Some(center) = self.get(&binding.object).map(|o| o.position) else {
            return events;
        };
        let container = self
            .objects
            .iter()
            .filter(|c| c.affordance == Affordance::Container && c.id != binding.object)
            .find(|c| {
                if c.contains(center) {
                    return true;
                }
                let d = center - c.position;
                let rise = d.y - c.half_extents.y;
                d.x.abs() <= c.half_extents.x
                    && d.z.abs() <= c.half_extents.z
                    && rise >= 0.0
                    && rise <= cfg.drop_height
            })
            .map(|c| (c.id.clone(), c.position));
        if let Some((container, at)) = container {
            if let Some(obj) = self.get_mut(&binding.object) {
                obj.position = at;
            }
            events.push(InteractionEvent::ContainedIn {
                object: binding.object,
                container,
            });
        }
        events
    }

    /// Applies one tick of hand contact to the scene.
    pub fn step_interactions(
        &mut self,
        pose: &HandPose,
        active: Option<&GestureContext>,
        held: &mut Option<Binding>,
        cfg: &InteractionConfig,
    ) -> Vec<InteractionEvent> {
        let mut events = Vec::new();
        if let (Some(binding), Some(g)) = (held.as_ref(), active) {
            if binding.step != g.step {
                events.extend(self.release(held, cfg));
            }
        }
        if let Some(binding) = held.as_mut() {
            events.extend(self.follow(pose, binding));
        }
        let Some(g) = active else {
            self.clear_contacts();
            return events;
        };
        let joint = pose.joint(g.joint);
        if g.gesture.presses() && g.phase == Some(Phase::Stroke) {
            for obj in self.objects.iter_mut() {
                if let Affordance::Button {
                    press_count,
                    in_contact,
                } = &mut obj.affordance
                {
                    let inside = {
                        let d = joint - obj.position;
                        let ex = obj.half_extents;
                        let closest = Vec3::new(
                            d.x.clamp(-ex.x, ex.x),
                            d.y.clamp(-ex.y, ex.y),
                            d.z.clamp(-ex.z, ex.z),
                        );
                        (d - closest).norm_squared() <= cfg.contact_radius * cfg.contact_radius
                    };
                    if inside && !*in_contact {
                        *press_count += 1;
                        events.push(InteractionEvent::ButtonPressed {
                            object: obj.id.clone(),
                            press_count: *press_count,
                        });
                    }
                    *in_contact = inside;
                }
            }
        } else {
            self.clear_contacts();
        }
        if g.gesture.binds_objects() && g.at_interacting_frame && held.is_none() {
            if let Some(binding) = self.try_bind(pose, g, cfg) {
                events.push(InteractionEvent::Grabbed {
                    object: binding.object.clone(),
                });
                *held = Some(binding);
            }
        }
        events
    }

    fn clear_contacts(&mut self) {
        for obj in self.objects.iter_mut() {
            if let Affordance::Button { in_contact, .. } = &mut obj.affordance {
                *in_contact = false;
            }
        }
    }

    fn try_bind(&self, pose: &HandPose, g: &GestureContext, cfg: &InteractionConfig) -> Option<Binding> {
        let joint = pose.joint(g.joint);
        let preferred = g
            .target
            .as_deref()
            .and_then(|id| self.get(id))
            .filter(|o| o.affordance.bindable() && o.touches(joint, cfg.contact_radius));
        let obj = preferred.or_else(|| {
            self.objects
                .iter()
                .filter(|o| o.affordance.bindable() && o.touches(joint, cfg.contact_radius))
                .min_by(|a, b| {
                    (a.position - joint)
                        .norm()
                        .total_cmp(&(b.position - joint).norm())
                })
        })?;
        let kind = match &obj.affordance {
            Affordance::Slider { value, .. } => BindingKind::Slide {
                start_joint: joint,
                start_value: *value,
            },
            Affordance::Knob { angle, .. } => BindingKind::Twist {
                start_angle: *angle,
                accumulated_roll: 0.0,
                last_lateral: hand_axes(pose).ok()?.lateral,
            },
            _ => BindingKind::Carry,
        };
        Some(Binding {
            object: obj.id.clone(),
            joint: g.joint,
            grip_offset: obj.position - joint,
            step: g.step,
            kind,
        })
    }

    fn follow(&mut self, pose: &HandPose, binding: &mut Binding) -> Vec<InteractionEvent> {
        let joint = pose.joint(binding.joint);
        let Some(obj) = self.objects.iter_mut().find(|o| o.id == binding.object) else {
            return Vec::new();
        };
        let travel = obj.slider_travel();
        match (&mut binding.kind, &mut obj.affordance) {
            (BindingKind::Carry, _) => {
                obj.position = joint + binding.grip_offset;
                Vec::new()
            }
            (
                BindingKind::Slide {
                    start_joint,
                    start_value,
                },
                Affordance::Slider { value, axis },
            ) => {
                let travel = travel.unwrap_or(1.0);
                let next = (*start_value + (joint - *start_joint).dot(axis) / travel).clamp(0.0, 1.0);
                if next != *value {
                    *value = next;
                    vec![InteractionEvent::SliderChanged {
                        object: obj.id.clone(),
                        value: next,
                    }]
                } else {
                    Vec::new()
                }
            }
            (
                BindingKind::Twist {
                    start_angle,
                    accumulated_roll,
                    last_lateral,
                },
                Affordance::Knob { angle, range },
            ) => {
                let Ok(axes) = hand_axes(pose) else {
                    return Vec::new();
                };
                let sin = last_lateral.cross(&axes.lateral).dot(&axes.longitudinal);
                let cos = last_lateral.dot(&axes.lateral);
                *accumulated_roll += sin.atan2(cos);
                *last_lateral = axes.lateral;
                // Rolling right (negative about the longitudinal axis) turns the knob up.
                let next = (*start_angle - *accumulated_roll).clamp(range[0], range[1]);
                if next != *angle {
                    *angle = next;
                    vec![InteractionEvent::KnobTurned {
                        object: obj.id.clone(),
                        angle: next,
                    }]
                } else {
                    Vec::new()
                }
            }
            _ => Vec::new(),
        }
    }

    /// Whether a bound control sits at the end of its range in direction `sign`.
    pub fn control_saturated(&self, binding: &Binding, sign: f64) -> bool {
        match self.get(&binding.object).map(|o| &o.affordance) {
            Some(Affordance::Slider { value, .. }) => {
                (sign > 0.0 && *value >= 1.0) || (sign < 0.0 && *value <= 0.0)
            }
            Some(Affordance::Knob { angle, range }) => {
                (sign > 0.0 && *angle >= range[1]) || (sign < 0.0 && *angle <= range[0])
            }
            _ => false,
        }
    }

    pub fn set_position(&mut self, id: &str, position: Vec3) -> Result<(), SceneError> {
        let obj = self
            .get_mut(id)
            .ok_or_else(|| SceneError::UnknownObject(id.to_string()))?;
        obj.position = position;
        Ok(())
    }
}

fn relation_holds(kind: ConstraintKind, o: &SceneObject, anchor: &SceneObject) -> bool {
    let d = o.position - anchor.position;
    match kind {
        ConstraintKind::Below => d.y < 0.0,
        ConstraintKind::Above => d.y > 0.0,
        ConstraintKind::ToTheLeftOf => d.x < 0.0,
        ConstraintKind::ToTheRightOf => d.x > 0.0,
        ConstraintKind::InFrontOf => d.z > 0.0,
        ConstraintKind::Behind => d.z < 0.0,
        _ => false,
    }
}

/// Keeps the objects maximizing `key`, ties included.
fn extreme<'a>(set: Vec<&'a SceneObject>, key: impl Fn(&SceneObject) -> f64) -> Vec<&'a SceneObject> {
    let best = set.iter().map(|o| key(o)).fold(f64::NEG_INFINITY, f64::max);
    set.into_iter().filter(|o| key(o) >= best - TIE_EPS).collect()
}

/// The median object in left-to-right order; both centre objects for even counts.
fn middle(mut set: Vec<&SceneObject>) -> Vec<&SceneObject> {
    set.sort_by(|a, b| a.position.x.total_cmp(&b.position.x).then_with(|| a.id.cmp(&b.id)));
    let n = set.len();
    if n <= 1 {
        return set;
    }
    if n % 2 == 1 {
        vec![set[n / 2]]
    } else {
        vec![set[n / 2 - 1], set[n / 2]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gesture::{synth_gesture, SynthConfig};
    use crate::skeleton::translate_pose;

    fn obj(id: &str, name: &str, tags: &[&str], pos: [f64; 3], aff: Affordance) -> SceneObject {
        SceneObject {
            id: id.into(),
            name: name.into(),
            tags: tags.iter().map(|t| t.to_string()).collect(),
            position: Vec3::new(pos[0], pos[1], pos[2]),
            half_extents: Vec3::new(0.05, 0.05, 0.05),
            affordance: aff,
        }
    }

    fn melons() -> Scene {
        Scene::new(vec![
            obj("w3", "watermelon", &["fruit", "green"], [0.3, 0.85, 0.0], Affordance::Grabbable),
            obj("w1", "watermelon", &["fruit", "green"], [-0.3, 0.85, 0.0], Affordance::Grabbable),
            obj("w2", "watermelon", &["fruit", "green"], [0.0, 0.85, 0.0], Affordance::Grabbable),
            obj("peach", "peach", &["pink", "fruit"], [0.0, 0.85, 0.3], Affordance::Grabbable),
        ])
        .unwrap()
    }

    fn pose_with_joint_at(joint: JointId, at: Vec3) -> HandPose {
        let clip = synth_gesture(&GestureId::Grab, &SynthConfig::default()).unwrap();
        let p = clip.frames[0];
        translate_pose(&p, at - p.joint(joint))
    }

    #[test]
    fn middle_watermelon_is_unique() {
        let scene = melons();
        let c = [SpatialConstraint::ordinal(ConstraintKind::InTheMiddle)];
        assert_eq!(scene.resolve_target("watermelon", &c), TargetResolution::Unique("w2".into()));
        let c = [SpatialConstraint::ordinal(ConstraintKind::OnTheLeft)];
        assert_eq!(scene.resolve_target("watermelons", &c), TargetResolution::Unique("w1".into()));
        let c = [SpatialConstraint::ordinal(ConstraintKind::Last)];
        assert_eq!(scene.resolve_target("watermelon", &c), TargetResolution::Unique("w3".into()));
    }

    #[test]
    fn ambiguity_is_ordered_left_to_right() {
        let scene = melons();
        assert_eq!(
            scene.resolve_target("the watermelon", &[]),
            TargetResolution::Ambiguous(vec!["w1".into(), "w2".into(), "w3".into()])
        );
        assert_eq!(scene.resolve_target("dog photo", &[]), TargetResolution::None);
    }

    #[test]
    fn tags_break_ties_by_match_count() {
        let scene = melons();
        assert_eq!(scene.resolve_target("pink fruit", &[]), TargetResolution::Unique("peach".into()));
        let c = [SpatialConstraint::ordinal(ConstraintKind::Closest)];
        assert_eq!(scene.resolve_target("fruit", &c), TargetResolution::Unique("peach".into()));
    }

    #[test]
    fn relational_constraints_need_a_unique_anchor() {
        let scene = melons();
        let c = [SpatialConstraint::relative(ConstraintKind::ToTheLeftOf, "peach")];
        assert_eq!(
            scene.resolve_target("watermelon", &c),
            TargetResolution::Unique("w1".into())
        );
        let c = [SpatialConstraint::relative(ConstraintKind::Behind, "peach")];
        assert!(matches!(scene.resolve_target("watermelon", &c), TargetResolution::Ambiguous(v) if v.len() == 3));
        let c = [SpatialConstraint::relative(ConstraintKind::Below, "watermelon")];
        assert_eq!(scene.resolve_target("peach", &c), TargetResolution::None);
    }

    #[test]
    fn relative_offsets() {
        let mut basket = obj("basket", "basket", &[], [0.0, 0.8, 0.0], Affordance::Container);
        basket.half_extents = Vec3::new(0.1, 0.1, 0.1);
        let top = relative_position(&basket, Relation::OnTopOf, 0.05);
        assert!((top - Vec3::new(0.0, 0.95, 0.0)).norm() < 1e-12);
        let under = relative_position(&basket, Relation::Under, 0.05);
        assert!((under - Vec3::new(0.0, 0.65, 0.0)).norm() < 1e-12);
        let left = relative_position(&basket, Relation::ToTheLeftOf, 0.0);
        assert_eq!(left, basket.position - Vec3::new(0.1, 0.0, 0.0));
    }

    #[test]
    fn point_stroke_presses_button_once() {
        let mut scene = Scene::new(vec![obj(
            "confirm",
            "confirm button",
            &[],
            [0.0, 1.0, 0.0],
            Affordance::Button {
                press_count: 0,
                in_contact: false,
            },
        )])
        .unwrap();
        let cfg = InteractionConfig::default();
        let ctx = GestureContext {
            gesture: GestureId::Point,
            phase: Some(Phase::Stroke),
            joint: JointId::IndexTip,
            at_interacting_frame: false,
            target: None,
            step: 1,
        };
        let mut held = None;
        let outside = pose_with_joint_at(JointId::IndexTip, Vec3::new(0.0, 1.0, 0.2));
        assert!(scene.step_interactions(&outside, Some(&ctx), &mut held, &cfg).is_empty());
        // Sphere of radius 0.015 touching the face at z = 0.05.
        let grazing = pose_with_joint_at(JointId::IndexTip, Vec3::new(0.0, 1.0, 0.064));
        let events = scene.step_interactions(&grazing, Some(&ctx), &mut held, &cfg);
        assert_eq!(
            events,
            vec![InteractionEvent::ButtonPressed {
                object: "confirm".into(),
                press_count: 1
            }]
        );
        let inside = pose_with_joint_at(JointId::IndexTip, Vec3::new(0.0, 1.0, 0.0));
        assert!(scene.step_interactions(&inside, Some(&ctx), &mut held, &cfg).is_empty());
        let prep = GestureContext {
            phase: Some(Phase::Preparation),
            ..ctx.clone()
        };
        scene.step_interactions(&outside, Some(&prep), &mut held, &cfg);
        scene.step_interactions(&inside, Some(&ctx), &mut held, &cfg);
        assert!(matches!(
            scene.get("confirm").unwrap().affordance,
            Affordance::Button { press_count: 2, .. }
        ));
    }

    #[test]
    fn carried_object_follows_and_drops_into_basket() {
        let mut basket = obj("basket", "basket", &[], [0.4, 0.8, 0.0], Affordance::Container);
        basket.half_extents = Vec3::new(0.1, 0.1, 0.1);
        let mut scene = Scene::new(vec![
            obj("apple", "apple", &["red"], [0.0, 0.85, 0.0], Affordance::Grabbable),
            basket,
        ])
        .unwrap();
        let cfg = InteractionConfig::default();
        let grab = GestureContext {
            gesture: GestureId::Grab,
            phase: Some(Phase::Stroke),
            joint: JointId::MiddleMcp,
            at_interacting_frame: true,
            target: Some("apple".into()),
            step: 3,
        };
        let mut held = None;
        let at_apple = pose_with_joint_at(JointId::MiddleMcp, Vec3::new(0.0, 0.85, 0.0));
        let events = scene.step_interactions(&at_apple, Some(&grab), &mut held, &cfg);
        assert_eq!(events, vec![InteractionEvent::Grabbed { object: "apple".into() }]);
        let before = scene.get("apple").unwrap().position;
        let moved = translate_pose(&at_apple, Vec3::new(0.2, 0.0, 0.0));
        scene.step_interactions(&moved, None, &mut held, &cfg);
        let after = scene.get("apple").unwrap().position;
        assert!((after - before - Vec3::new(0.2, 0.0, 0.0)).norm() < 1e-12);
        let b = held.as_ref().unwrap();
        assert_eq!(after, moved.joint(JointId::MiddleMcp) + b.grip_offset);

        let over = translate_pose(&at_apple, Vec3::new(0.4, 0.15, 0.0));
        scene.step_interactions(&over, None, &mut held, &cfg);
        let release = GestureContext {
            gesture: GestureId::OpenHand,
            phase: Some(Phase::Preparation),
            joint: JointId::Wrist,
            at_interacting_frame: false,
            target: None,
            step: 4,
        };
        let events = scene.step_interactions(&over, Some(&release), &mut held, &cfg);
        assert_eq!(
            events,
            vec![
                InteractionEvent::Released { object: "apple".into() },
                InteractionEvent::ContainedIn {
                    object: "apple".into(),
                    container: "basket".into()
                },
            ]
        );
        assert!(held.is_none());
        let basket = scene.get("basket").unwrap();
        assert!(basket.contains(scene.get("apple").unwrap().position));
    }

    #[test]
    fn slider_value_stays_clamped() {
        let mut slider = obj(
            "volume",
            "volume slider",
            &[],
            [0.0, 1.0, 0.0],
            Affordance::Slider {
                value: 0.5,
                axis: Vec3::new(0.0, 1.0, 0.0),
            },
        );
        slider.half_extents = Vec3::new(0.02, 0.1, 0.02);
        let mut scene = Scene::new(vec![slider]).unwrap();
        let s = scene.get("volume").unwrap();
        assert_eq!(s.slider_travel(), Some(0.2));
        assert_eq!(s.contact_point(), Vec3::new(0.0, 1.0, 0.0));
        let cfg = InteractionConfig::default();
        let pinch = GestureContext {
            gesture: GestureId::Pinch,
            phase: Some(Phase::Stroke),
            joint: JointId::IndexTip,
            at_interacting_frame: true,
            target: Some("volume".into()),
            step: 1,
        };
        let mut held = None;
        let start = pose_with_joint_at(JointId::IndexTip, Vec3::new(0.0, 1.0, 0.0));
        scene.step_interactions(&start, Some(&pinch), &mut held, &cfg);
        assert!(held.is_some());
        for dy in [0.05, 0.5, -0.3, -2.0, 0.12] {
            let p = translate_pose(&start, Vec3::new(0.0, dy, 0.0));
            scene.step_interactions(&p, None, &mut held, &cfg);
            let Affordance::Slider { value, .. } = scene.get("volume").unwrap().affordance else {
                unreachable!()
            };
            assert!((0.0..=1.0).contains(&value));
            let expected = (0.5 + dy / 0.2).clamp(0.0, 1.0);
            assert!((value - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn snapshot_round_trip_and_staleness() {
        let mut scene = melons();
        let snap = scene.snapshot();
        scene.set_position("w1", Vec3::new(1.0, 1.0, 1.0)).unwrap();
        scene.restore(&snap).unwrap();
        assert_eq!(scene, melons());
        scene.restore(&snap).unwrap();
        assert_eq!(scene, melons());
        let other = Scene::new(vec![obj("x", "x", &[], [0.0; 3], Affordance::Static)]).unwrap();
        let mut other = other;
        assert_eq!(other.restore(&snap), Err(SceneError::StaleSnapshot));
    }

    #[test]
    fn scene_file_validation() {
        let doc = r#"[{"id":"k","name":"brightness knob","position":[0,1,0],"half_extents":[0.04,0.04,0.02],"affordance":"knob","angle":9.0}]"#;
        let scene = Scene::from_json(doc).unwrap();
        assert!(matches!(
            scene.get("k").unwrap().affordance,
            Affordance::Knob { angle, .. } if angle == std::f64::consts::PI
        ));
        let dup = r#"[{"id":"a","name":"a","position":[0,0,0],"half_extents":[1,1,1],"affordance":"static"},
                      {"id":"a","name":"b","position":[0,0,0],"half_extents":[1,1,1],"affordance":"static"}]"#;
        assert_eq!(Scene::from_json(dup), Err(SceneError::DuplicateId("a".into())));
        let flat = r#"[{"id":"a","name":"a","position":[0,0,0],"half_extents":[1,0,1],"affordance":"static"}]"#;
        assert_eq!(Scene::from_json(flat), Err(SceneError::BadExtents("a".into())));
    }

    #[test]
    fn lemmas() {
        assert_eq!(lemma("Watermelons"), "watermelon");
        assert_eq!(lemma("boxes"), "box");
        assert_eq!(lemma("berries"), "berry");
        assert_eq!(lemma("glass"), "glass");
        assert_eq!(lemma("peaches"), "peach");
    }
}
