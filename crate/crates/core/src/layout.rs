//! Keyboard geometry.
//!
//! Coordinates are abstract pixels. Everything downstream works on offsets
//! normalized by key width and height, so the absolute scale never matters.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The built-in layout document: a 10/9/7 QWERTY letter grid on a shared
/// column lattice, keys 40 x 60.
pub const QWERTY_JSON: &str = include_str!("../assets/qwerty.json");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TouchPoint {
    pub x: f64,
    pub y: f64,
}

impl TouchPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Touch offset from a key center in key-width / key-height units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Offset {
    pub dx: f64,
    pub dy: f64,
}

impl Offset {
    pub const ZERO: Offset = Offset { dx: 0.0, dy: 0.0 };

    pub fn new(dx: f64, dy: f64) -> Self {
        Self { dx, dy }
    }

    pub fn norm_sq(&self) -> f64 {
        self.dx * self.dx + self.dy * self.dy
    }
}

impl std::ops::Sub for Offset {
    type Output = Offset;
    fn sub(self, rhs: Offset) -> Offset {
        Offset::new(self.dx - rhs.dx, self.dy - rhs.dy)
    }
}

impl std::ops::Add for Offset {
    type Output = Offset;
    fn add(self, rhs: Offset) -> Offset {
        Offset::new(self.dx + rhs.dx, self.dy + rhs.dy)
    }
}

/// Axis-aligned rectangle, `x0 <= x1`, `y0 <= y1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn contains(&self, p: TouchPoint) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        self.contains(TouchPoint::new(x, y))
    }

    fn interiors_overlap(&self, other: &Rect) -> bool {
        self.x0 < other.x1 && other.x0 < self.x1 && self.y0 < other.y1 && other.y0 < self.y1
    }

    fn union(&self, other: &Rect) -> Rect {
        Rect {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Key {
    #[serde(rename = "char")]
    pub label: char,
    #[serde(rename = "x")]
    pub center_x: f64,
    #[serde(rename = "y")]
    pub center_y: f64,
    #[serde(rename = "w")]
    pub width: f64,
    #[serde(rename = "h")]
    pub height: f64,
}

impl Key {
    pub fn center(&self) -> TouchPoint {
        TouchPoint::new(self.center_x, self.center_y)
    }

    pub fn rect(&self) -> Rect {
        Rect {
            x0: self.center_x - self.width / 2.0,
            y0: self.center_y - self.height / 2.0,
            x1: self.center_x + self.width / 2.0,
            y1: self.center_y + self.height / 2.0,
        }
    }

    /// Keys that carry touch statistics and take part in clustering.
    pub fn is_letter(&self) -> bool {
        self.label.is_ascii_lowercase()
    }

    /// Maps a touch to the key-normalized offset from this key's center.
    pub fn normalize(&self, touch: TouchPoint) -> Offset {
        Offset {
            dx: (touch.x - self.center_x) / self.width,
            dy: (touch.y - self.center_y) / self.height,
        }
    }

    /// Inverse of [`Key::normalize`].
    pub fn denormalize(&self, off: Offset) -> TouchPoint {
        TouchPoint::new(
            self.center_x + off.dx * self.width,
            self.center_y + off.dy * self.height,
        )
    }
}

/// `dx = (x - cx) / w`, `dy = (y - cy) / h`.
pub fn normalize_offset(key: &Key, touch: TouchPoint) -> Offset {
    key.normalize(touch)
}

#[derive(Debug, Clone)]
pub struct KeyboardLayout {
    keys: Vec<Key>,
    bounds: Rect,
    index: BTreeMap<char, usize>,
}

impl KeyboardLayout {
    pub fn new(keys: Vec<Key>) -> Result<Self> {
        if keys.is_empty() {
            return Err(Error::EmptyLayout);
        }
        let mut index = BTreeMap::new();
        for (i, k) in keys.iter().enumerate() {
            let finite = [k.center_x, k.center_y, k.width, k.height]
                .iter()
                .all(|v| v.is_finite());
            if !finite {
                return Err(Error::Malformed(format!(
                    "key {:?} has non-finite geometry",
                    k.label
                )));
            }
            if !(k.width > 0.0 && k.height > 0.0) {
                return Err(Error::BadDimensions {
                    label: k.label,
                    width: k.width,
                    height: k.height,
                });
            }
            if index.insert(k.label, i).is_some() {
                return Err(Error::DuplicateKey(k.label));
            }
        }
        for (i, a) in keys.iter().enumerate() {
            for b in &keys[i + 1..] {
                if a.rect().interiors_overlap(&b.rect()) {
                    return Err(Error::OverlappingKeys(a.label, b.label));
                }
            }
        }
        let bounds = keys
            .iter()
            .skip(1)
            .fold(keys[0].rect(), |acc, k| acc.union(&k.rect()));
        Ok(Self {
            keys,
            bounds,
            index,
        })
    }

    /// Parses a layout document: a JSON list of `{char, x, y, w, h}`.
    pub fn from_json(doc: &str) -> Result<Self> {
        let keys: Vec<Key> =
            serde_json::from_str(doc).map_err(|e| Error::Malformed(e.to_string()))?;
        Self::new(keys)
    }

    pub fn qwerty() -> Self {
        Self::from_json(QWERTY_JSON).expect("built-in layout is valid")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.keys).expect("keys serialize")
    }

    pub fn keys(&self) -> &[Key] {
        &self.keys
    }

    pub fn letter_keys(&self) -> impl Iterator<Item = &Key> {
        self.keys.iter().filter(|k| k.is_letter())
    }

    pub fn bounds(&self) -> Rect {
        self.bounds
    }

    pub fn key_for_char(&self, c: char) -> Result<&Key> {
        self.get(c).ok_or(Error::KeyNotFound(c))
    }

    pub fn get(&self, c: char) -> Option<&Key> {
        self.index.get(&c).map(|&i| &self.keys[i])
    }

    /// The literal key for a tap: the containing key if any, otherwise the
    /// key with the smallest normalized distance. Ties go to the lower label.
    pub fn nearest_key(&self, touch: TouchPoint) -> &Key {
        let mut best: Option<(bool, f64, &Key)> = None;
        for k in &self.keys {
            let outside = !k.rect().contains(touch);
            let d = k.normalize(touch).norm_sq();
            let better = match best {
                None => true,
                Some((bo, bd, bk)) => (outside, d, k.label)
                    .partial_cmp(&(bo, bd, bk.label))
                    .is_some_and(|o| o.is_lt()),
            };
            if better {
                best = Some((outside, d, k));
            }
        }
        best.expect("layout is non-empty").2
    }

    /// Clamps a point into the layout bounds.
    pub fn clamp(&self, p: TouchPoint) -> TouchPoint {
        TouchPoint::new(
            p.x.clamp(self.bounds.x0, self.bounds.x1),
            p.y.clamp(self.bounds.y0, self.bounds.y1),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qwerty_has_three_letter_rows() {
        let l = KeyboardLayout::qwerty();
        assert_eq!(l.letter_keys().count(), 26);
        let mut rows: Vec<f64> = l.keys().iter().map(|k| k.center_y).collect();
        rows.sort_by(f64::total_cmp);
        rows.dedup();
        assert_eq!(rows.len(), 3);
        let q = l.key_for_char('q').unwrap();
        assert!(l
            .keys()
            .iter()
            .all(|k| k.center_x >= q.center_x && k.center_y >= q.center_y));
        let a = l.key_for_char('a').unwrap();
        assert_eq!(a.center_y, rows[1]);
        assert!(l
            .keys()
            .iter()
            .filter(|k| k.center_y == rows[1])
            .all(|k| k.center_x >= a.center_x));
    }

    #[test]
    fn missing_character() {
        let l = KeyboardLayout::qwerty();
        assert!(matches!(l.key_for_char('é'), Err(Error::KeyNotFound('é'))));
    }

    #[test]
    fn rejects_duplicates_and_bad_sizes() {
        let dup = r#"[{"char":"a","x":0,"y":0,"w":1,"h":1},{"char":"a","x":5,"y":0,"w":1,"h":1}]"#;
        assert!(matches!(
            KeyboardLayout::from_json(dup),
            Err(Error::DuplicateKey('a'))
        ));
        let zero = r#"[{"char":"a","x":0,"y":0,"w":0,"h":1}]"#;
        assert!(matches!(
            KeyboardLayout::from_json(zero),
            Err(Error::BadDimensions { .. })
        ));
        let overlap =
            r#"[{"char":"a","x":0,"y":0,"w":2,"h":2},{"char":"b","x":1,"y":0,"w":2,"h":2}]"#;
        assert!(matches!(
            KeyboardLayout::from_json(overlap),
            Err(Error::OverlappingKeys('a', 'b'))
        ));
        assert!(matches!(
            KeyboardLayout::from_json("[{"),
            Err(Error::Malformed(_))
        ));
        assert!(matches!(
            KeyboardLayout::from_json("[]"),
            Err(Error::EmptyLayout)
        ));
    }

    #[test]
    fn normalize_examples() {
        let k = Key {
            label: 'x',
            center_x: 100.0,
            center_y: 150.0,
            width: 40.0,
            height: 60.0,
        };
        assert_eq!(
            normalize_offset(&k, TouchPoint::new(110.0, 135.0)),
            Offset::new(0.25, -0.25)
        );
        assert_eq!(normalize_offset(&k, k.center()), Offset::ZERO);
        assert_eq!(
            normalize_offset(&k, TouchPoint::new(120.0, 150.0)),
            Offset::new(0.5, 0.0)
        );
    }

    #[test]
    fn nearest_key_examples() {
        let l = KeyboardLayout::qwerty();
        let g = l.key_for_char('g').unwrap().clone();
        assert_eq!(
            l.nearest_key(TouchPoint::new(g.center_x + 3.0, g.center_y - 7.0))
                .label,
            'g'
        );
        let f = l.key_for_char('f').unwrap();
        let boundary = TouchPoint::new((f.center_x + g.center_x) / 2.0, g.center_y);
        assert_eq!(l.nearest_key(boundary).label, 'f');
        let w = l.key_for_char('w').unwrap();
        assert_eq!(
            l.nearest_key(TouchPoint::new(w.center_x, l.bounds().y0 - 25.0))
                .label,
            'w'
        );
    }
}
