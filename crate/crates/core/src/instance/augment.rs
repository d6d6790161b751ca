use super::{InstanceError, RoutingInstance};

/// One of the eight symmetries of the unit square.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Symmetry {
    pub swap: bool,
    pub flip_x: bool,
    pub flip_y: bool,
}

/// `(x,y) (y,x) (x,1−y) (y,1−x) (1−x,y) (1−y,x) (1−x,1−y) (1−y,1−x)`, identity first.
pub const SYMMETRIES: [Symmetry; 8] = [
    Symmetry { swap: false, flip_x: false, flip_y: false },
    Symmetry { swap: true, flip_x: false, flip_y: false },
    Symmetry { swap: false, flip_x: false, flip_y: true },
    Symmetry { swap: true, flip_x: false, flip_y: true },
    Symmetry { swap: false, flip_x: true, flip_y: false },
    Symmetry { swap: true, flip_x: true, flip_y: false },
    Symmetry { swap: false, flip_x: true, flip_y: true },
    Symmetry { swap: true, flip_x: true, flip_y: true },
];

impl Symmetry {
    pub fn apply(self, p: [f64; 2]) -> [f64; 2] {
        let (a, b) = if self.swap { (p[1], p[0]) } else { (p[0], p[1]) };
        [
            if self.flip_x { 1.0 - a } else { a },
            if self.flip_y { 1.0 - b } else { b },
        ]
    }

    pub fn is_identity(self) -> bool {
        !(self.swap || self.flip_x || self.flip_y)
    }

    /// View of `inst` under this symmetry. Raw coordinates are remapped
    /// through the same transform so costing stays consistent.
    pub fn transform(self, inst: &RoutingInstance) -> RoutingInstance {
        if self.is_identity() {
            return inst.clone();
        }
        let mut out = inst.clone();
        out.coords = inst.coords.iter().map(|&p| self.apply(p)).collect();
        let (off, s) = (inst.raw.offset, inst.raw.scale);
        out.raw.coords = out
            .coords
            .iter()
            .map(|p| [off[0] + p[0] * s, off[1] + p[1] * s])
            .collect();
        out
    }
}

/// The eight dihedral views of `inst`; the first is `inst` itself. Demands,
/// capacity and id are shared, so supervision labels carry over unchanged.
pub fn augment_8fold(inst: &RoutingInstance) -> Result<Vec<RoutingInstance>, InstanceError> {
    if inst.coords.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(InstanceError::Domain(format!(
            "{}: coordinates outside the unit square",
            inst.id
        )));
    }
    Ok(SYMMETRIES.iter().map(|s| s.transform(inst)).collect())
}
