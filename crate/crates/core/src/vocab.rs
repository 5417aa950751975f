//! Closed vocabularies: categories, sub-types with their part lists, and the
//! discrete attribute values carried by objects and parts.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Car,
    Plane,
    Bicycle,
    Motorbike,
    Bus,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Car,
        Category::Plane,
        Category::Bicycle,
        Category::Motorbike,
        Category::Bus,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Category> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Car => "car",
            Category::Plane => "plane",
            Category::Bicycle => "bicycle",
            Category::Motorbike => "motorbike",
            Category::Bus => "bus",
        }
    }

    pub fn from_name(name: &str) -> Option<Category> {
        Self::ALL.iter().copied().find(|c| c.name() == name)
    }

    pub fn subtypes(self) -> impl Iterator<Item = Subtype> {
        Subtype::ALL.iter().copied().filter(move |s| s.category() == self)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One of the 21 fine-grained vehicle shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Subtype(u8);

struct SubtypeInfo {
    name: &'static str,
    category: Category,
    parts: &'static [&'static str],
}

const CAR_COMMON: &[&str] = &[
    "front left door",
    "left tail light",
    "left head light",
    "back left door",
    "back right wheel",
    "right head light",
    "front bumper",
    "right mirror",
    "front license plate",
    "front right wheel",
    "back bumper",
    "left mirror",
    "back left wheel",
    "right tail light",
    "hood",
    "trunk",
    "front left wheel",
    "back right door",
    "roof",
    "front right door",
    "back license plate",
];

const SUBTYPES: [SubtypeInfo; 21] = [
    SubtypeInfo {
        name: "airliner",
        category: Category::Plane,
        parts: &[
            "left door",
            "front wheel",
            "fin",
            "right engine",
            "propeller",
            "back left wheel",
            "left engine",
            "back right wheel",
            "left tailplane",
            "right door",
            "right tailplane",
            "right wing",
            "left wing",
        ],
    },
    SubtypeInfo {
        name: "biplane",
        category: Category::Plane,
        parts: &[
            "front wheel",
            "fin",
            "propeller",
            "left tailplane",
            "right tailplane",
            "right wing",
            "left wing",
        ],
    },
    SubtypeInfo {
        name: "jet",
        category: Category::Plane,
        parts: &[
            "left door",
            "front wheel",
            "fin",
            "right engine",
            "propeller",
            "back left wheel",
            "left engine",
            "back right wheel",
            "left tailplane",
            "right tailplane",
            "right wing",
            "left wing",
        ],
    },
    SubtypeInfo {
        name: "fighter",
        category: Category::Plane,
        parts: &[
            "fin",
            "right engine",
            "left engine",
            "left tailplane",
            "right tailplane",
            "right wing",
            "left wing",
        ],
    },
    SubtypeInfo {
        name: "utility bike",
        category: Category::Bicycle,
        parts: &[
            "left handle",
            "brake system",
            "front wheel",
            "left pedal",
            "right handle",
            "back wheel",
            "saddle",
            "carrier",
            "fork",
            "right crank arm",
            "front fender",
            "drive chain",
            "back fender",
            "left crank arm",
            "side stand",
            "right pedal",
        ],
    },
    SubtypeInfo {
        name: "tandem bike",
        category: Category::Bicycle,
        parts: &[
            "rearlight",
            "front wheel",
            "back wheel",
            "fork",
            "front fender",
            "back fender",
        ],
    },
    SubtypeInfo {
        name: "road bike",
        category: Category::Bicycle,
        parts: &[
            "left handle",
            "brake system",
            "front wheel",
            "left pedal",
            "right handle",
            "back wheel",
            "saddle",
            "fork",
            "right crank arm",
            "drive chain",
            "left crank arm",
            "right pedal",
        ],
    },
    SubtypeInfo {
        name: "mountain bike",
        category: Category::Bicycle,
        parts: &[
            "left handle",
            "brake system",
            "front wheel",
            "left pedal",
            "right handle",
            "back wheel",
            "saddle",
            "fork",
            "right crank arm",
            "drive chain",
            "left crank arm",
            "right pedal",
        ],
    },
    SubtypeInfo {
        name: "articulated bus",
        category: Category::Bus,
        parts: &[
            "left tail light",
            "front license plate",
            "front right door",
            "back bumper",
            "right head light",
            "front left wheel",
            "left mirror",
            "right tail light",
            "back right door",
            "back left wheel",
            "back right wheel",
            "back license plate",
            "front right wheel",
            "left head light",
            "right mirror",
            "trunk",
            "mid right door",
            "roof",
        ],
    },
    SubtypeInfo {
        name: "double bus",
        category: Category::Bus,
        parts: &[
            "left tail light",
            "front license plate",
            "front right door",
            "front bumper",
            "back bumper",
            "right head light",
            "front left wheel",
            "left mirror",
            "right tail light",
            "back left wheel",
            "back right wheel",
            "back license plate",
            "mid left door",
            "front left door",
            "front right wheel",
            "left head light",
            "right mirror",
            "trunk",
            "mid right door",
            "roof",
        ],
    },
    SubtypeInfo {
        name: "regular bus",
        category: Category::Bus,
        parts: &[
            "left tail light",
            "front license plate",
            "front right door",
            "front bumper",
            "back bumper",
            "right head light",
            "front left wheel",
            "left mirror",
            "right tail light",
            "back right door",
            "back left wheel",
            "back right wheel",
            "back license plate",
            "front right wheel",
            "left head light",
            "right mirror",
            "trunk",
            "mid right door",
            "roof",
        ],
    },
    SubtypeInfo {
        name: "school bus",
        category: Category::Bus,
        parts: &[
            "left tail light",
            "front license plate",
            "front right door",
            "front bumper",
            "back bumper",
            "right head light",
            "front left wheel",
            "left mirror",
            "right tail light",
            "back left wheel",
            "back right wheel",
            "back license plate",
            "mid left door",
            "front right wheel",
            "left head light",
            "right mirror",
            "roof",
        ],
    },
    SubtypeInfo {
        name: "truck",
        category: Category::Car,
        parts: &[
            "front left door",
            "left tail light",
            "left head light",
            "back right wheel",
            "right head light",
            "front bumper",
            "right mirror",
            "front license plate",
            "front right wheel",
            "back bumper",
            "left mirror",
            "back left wheel",
            "right tail light",
            "hood",
            "trunk",
            "front left wheel",
            "roof",
            "front right door",
        ],
    },
    SubtypeInfo {
        name: "suv",
        category: Category::Car,
        parts: &[
            "front left door",
            "left tail light",
            "left head light",
            "back left door",
            "back right wheel",
            "right head light",
            "front bumper",
            "right mirror",
            "front right wheel",
            "back bumper",
            "left mirror",
            "back left wheel",
            "right tail light",
            "hood",
            "trunk",
            "front left wheel",
            "back right door",
            "roof",
            "front right door",
        ],
    },
    SubtypeInfo {
        name: "minivan",
        category: Category::Car,
        parts: CAR_COMMON,
    },
    SubtypeInfo {
        name: "sedan",
        category: Category::Car,
        parts: CAR_COMMON,
    },
    SubtypeInfo {
        name: "wagon",
        category: Category::Car,
        parts: CAR_COMMON,
    },
    SubtypeInfo {
        name: "chopper",
        category: Category::Motorbike,
        parts: &[
            "left handle",
            "center headlight",
            "front wheel",
            "right handle",
            "back wheel",
            "center taillight",
            "left mirror",
            "gas tank",
            "front fender",
            "fork",
            "drive chain",
            "left footrest",
            "right mirror",
            "windscreen",
            "engine",
            "back fender",
            "right exhaust",
            "seat",
            "panel",
            "right footrest",
        ],
    },
    SubtypeInfo {
        name: "scooter",
        category: Category::Motorbike,
        parts: &[
            "left handle",
            "center headlight",
            "front wheel",
            "right handle",
            "back cover",
            "back wheel",
            "center taillight",
            "left mirror",
            "front cover",
            "fork",
            "drive chain",
            "right mirror",
            "engine",
            "left exhaust",
            "back fender",
            "seat",
            "panel",
        ],
    },
    SubtypeInfo {
        name: "cruiser",
        category: Category::Motorbike,
        parts: &[
            "left handle",
            "center headlight",
            "right headlight",
            "right taillight",
            "front wheel",
            "right handle",
            "back cover",
            "back wheel",
            "left taillight",
            "left mirror",
            "left headlight",
            "gas tank",
            "front cover",
            "front fender",
            "fork",
            "drive chain",
            "left footrest",
            "license plate",
            "right mirror",
            "windscreen",
            "left exhaust",
            "back fender",
            "right exhaust",
            "seat",
            "panel",
            "right footrest",
        ],
    },
    SubtypeInfo {
        name: "dirtbike",
        category: Category::Motorbike,
        parts: &[
            "left handle",
            "front wheel",
            "right handle",
            "back cover",
            "back wheel",
            "gas tank",
            "front cover",
            "front fender",
            "fork",
            "drive chain",
            "left footrest",
            "engine",
            "right exhaust",
            "seat",
            "panel",
            "right footrest",
        ],
    },
];

impl Subtype {
    pub const COUNT: usize = SUBTYPES.len();
    pub const ALL: [Subtype; 21] = {
        let mut all = [Subtype(0); 21];
        let mut i = 0;
        while i < 21 {
            all[i] = Subtype(i as u8);
            i += 1;
        }
        all
    };

    pub fn from_index(i: usize) -> Option<Subtype> {
        (i < Self::COUNT).then_some(Subtype(i as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        SUBTYPES[self.index()].name
    }

    pub fn from_name(name: &str) -> Option<Subtype> {
        SUBTYPES
            .iter()
            .position(|s| s.name == name)
            .map(|i| Subtype(i as u8))
    }

    pub fn category(self) -> Category {
        SUBTYPES[self.index()].category
    }

    /// Part names in table order.
    pub fn parts(self) -> &'static [&'static str] {
        SUBTYPES[self.index()].parts
    }
}

impl fmt::Display for Subtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<Subtype> for String {
    fn from(s: Subtype) -> String {
        s.name().to_string()
    }
}

impl TryFrom<String> for Subtype {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Subtype::from_name(&s).ok_or_else(|| format!("unknown subtype `{s}`"))
    }
}

/// Sorted union of all part names.
pub fn part_vocabulary() -> &'static [&'static str] {
    static VOCAB: OnceLock<Vec<&'static str>> = OnceLock::new();
    VOCAB.get_or_init(|| {
        let set: BTreeSet<&'static str> = SUBTYPES.iter().flat_map(|s| s.parts.iter().copied()).collect();
        set.into_iter().collect()
    })
}

pub fn part_index(name: &str) -> Option<usize> {
    part_vocabulary().binary_search(&name).ok()
}

macro_rules! named_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn index(self) -> usize {
                self as usize
            }

            pub fn from_index(i: usize) -> Option<$name> {
                Self::ALL.get(i).copied()
            }

            pub fn name(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }

            pub fn from_name(name: &str) -> Option<$name> {
                Self::ALL.iter().copied().find(|v| v.name() == name)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

named_enum!(Color {
    Gray => "gray",
    Red => "red",
    Blue => "blue",
    Green => "green",
    Brown => "brown",
    Purple => "purple",
    Cyan => "cyan",
    Yellow => "yellow",
});

named_enum!(Material {
    Rubber => "rubber",
    Metal => "metal",
});

named_enum!(Size {
    Small => "small",
    Large => "large",
});

named_enum!(
    /// Quantized facing direction of an object.
    Direction {
        Front => "front",
        Left => "left",
        Back => "back",
        Right => "right",
    }
);

impl Direction {
    /// Bins of width 90° centred on 0°, 90°, 180°, 270°; lower edge inclusive.
    pub fn from_azimuth(azimuth: f64) -> Direction {
        let deg = crate::camera::wrap_angle(azimuth).to_degrees();
        let shifted = (deg + 45.0).rem_euclid(360.0);
        let bin = ((shifted / 90.0).floor() as usize).min(3);
        Direction::ALL[bin]
    }

    /// Angular distance from `azimuth` to the nearest bin boundary.
    pub fn boundary_margin(azimuth: f64) -> f64 {
        let deg = crate::camera::wrap_angle(azimuth).to_degrees();
        let shifted = (deg + 45.0).rem_euclid(90.0);
        shifted.min(90.0 - shifted).to_radians()
    }
}

/// Discrete attribute kinds shared by objects and parts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    Color,
    Material,
    Size,
    Shape,
}

impl AttributeKind {
    pub const ALL: [AttributeKind; 4] = [
        AttributeKind::Shape,
        AttributeKind::Color,
        AttributeKind::Material,
        AttributeKind::Size,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttributeKind::Color => "color",
            AttributeKind::Material => "material",
            AttributeKind::Size => "size",
            AttributeKind::Shape => "shape",
        }
    }

    pub fn from_name(name: &str) -> Option<AttributeKind> {
        Self::ALL.iter().copied().find(|a| a.name() == name)
    }
}

impl fmt::Display for AttributeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twenty_one_subtypes_over_five_categories() {
        assert_eq!(Subtype::ALL.len(), 21);
        let counts: Vec<usize> = Category::ALL.iter().map(|c| c.subtypes().count()).collect();
        assert_eq!(counts, vec![5, 4, 4, 4, 4]);
    }

    #[test]
    fn part_counts_match_table() {
        let mtb = Subtype::from_name("mountain bike").unwrap();
        assert_eq!(mtb.parts().len(), 12);
        assert_eq!(Subtype::from_name("cruiser").unwrap().parts().len(), 26);
        assert_eq!(Subtype::from_name("tandem bike").unwrap().parts().len(), 6);
        assert_eq!(Subtype::from_name("sedan").unwrap().category(), Category::Car);
        assert_eq!(Subtype::from_name("school bus").unwrap().category(), Category::Bus);
        for s in Subtype::ALL {
            let unique: BTreeSet<_> = s.parts().iter().collect();
            assert_eq!(unique.len(), s.parts().len(), "duplicate part in {s}");
        }
    }

    #[test]
    fn part_vocabulary_is_sorted_and_indexable() {
        let vocab = part_vocabulary();
        assert!(vocab.windows(2).all(|w| w[0] < w[1]));
        for name in vocab {
            assert_eq!(vocab[part_index(name).unwrap()], *name);
        }
    }

    #[test]
    fn direction_bins() {
        assert_eq!(Direction::from_azimuth(0.0), Direction::Front);
        assert_eq!(Direction::from_azimuth(90f64.to_radians()), Direction::Left);
        assert_eq!(Direction::from_azimuth(180f64.to_radians()), Direction::Back);
        assert_eq!(Direction::from_azimuth(270f64.to_radians()), Direction::Right);
        assert_eq!(Direction::from_azimuth(45f64.to_radians()), Direction::Left);
        assert_eq!(Direction::from_azimuth(-45f64.to_radians()), Direction::Front);
        assert_eq!(Direction::from_azimuth(44.9f64.to_radians()), Direction::Front);
        assert!((Direction::boundary_margin(0.0) - 45f64.to_radians()).abs() < 1e-12);
        assert!(Direction::boundary_margin(45f64.to_radians()) < 1e-9);
    }
}
