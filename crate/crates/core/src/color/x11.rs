//! The shipped X11 color table (`data/x11_classes.csv`): name, reference
//! RGB, and the class each name is grouped under.

use std::sync::OnceLock;

use serde::Deserialize;

use super::{ColorClass, Rgb};
use crate::error::{Error, Result};

const TABLE_CSV: &str = include_str!("../../data/x11_classes.csv");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct X11Entry {
    pub name: String,
    pub rgb: Rgb,
    pub class: ColorClass,
}

#[derive(Deserialize)]
struct Row {
    name: String,
    r: u8,
    g: u8,
    b: u8,
    class: String,
}

/// The table in file order (sorted by name).
pub fn x11_table() -> &'static [X11Entry] {
    static TABLE: OnceLock<Vec<X11Entry>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut rdr = csv::Reader::from_reader(TABLE_CSV.as_bytes());
        rdr.deserialize::<Row>()
            .map(|row| {
                let row = row.expect("malformed bundled X11 table");
                X11Entry {
                    class: row.class.parse().expect("bundled X11 table has an unknown class"),
                    rgb: Rgb::new(row.r, row.g, row.b),
                    name: row.name,
                }
            })
            .collect()
    })
}

/// Name whose reference color is closest in squared RGB distance; ties go
/// to the lexicographically smallest name.
pub fn nearest_x11_name(c: Rgb) -> &'static str {
    let mut best: Option<(&X11Entry, u32)> = None;
    for e in x11_table() {
        let d = e.rgb.dist2(&c);
        best = match best {
            Some((b, bd)) if bd < d || (bd == d && b.name <= e.name) => Some((b, bd)),
            _ => Some((e, d)),
        };
    }
    &best.expect("X11 table is empty").0.name
}

fn normalize(name: &str) -> String {
    name.chars()
        .filter(|c| !c.is_whitespace() && *c != '_' && *c != '-')
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

/// Class of an X11 name. Matching ignores case, spaces, underscores and
/// hyphens, so "dark green", "DarkGreen" and "dark_green" are equivalent.
pub fn x11_to_class(name: &str) -> Result<ColorClass> {
    let key = normalize(name);
    x11_table()
        .iter()
        .find(|e| normalize(&e.name) == key)
        .map(|e| e.class)
        .ok_or_else(|| Error::UnknownColorName(name.to_string()))
}

/// Representative shade of a class: the table entry named after the class.
pub fn canonical_shade(class: ColorClass) -> Rgb {
    x11_table()
        .iter()
        .find(|e| e.name == class.name())
        .map(|e| e.rgb)
        .expect("every class has a same-named X11 entry")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_is_sorted_and_unique() {
        let t = x11_table();
        assert!(t.len() >= 138);
        for w in t.windows(2) {
            assert!(w[0].name < w[1].name, "{} !< {}", w[0].name, w[1].name);
        }
    }

    #[test]
    fn every_class_is_covered_and_every_name_maps() {
        for class in ColorClass::ALL {
            assert!(x11_table().iter().any(|e| e.class == class), "{class} has no names");
            // the canonical shade maps back to its own class
            assert_eq!(x11_to_class(nearest_x11_name(canonical_shade(class))).unwrap(), class);
        }
        for e in x11_table() {
            assert_eq!(x11_to_class(&e.name).unwrap(), e.class);
        }
    }

    #[test]
    fn exact_entries() {
        assert_eq!(nearest_x11_name(Rgb::new(0, 0, 0)), "black");
        assert_eq!(nearest_x11_name(Rgb::new(255, 255, 255)), "white");
    }

    #[test]
    fn near_red_matches_brute_force_scan() {
        let c = Rgb::new(254, 0, 0);
        let mut scan: Vec<(u32, &str)> = x11_table().iter().map(|e| (e.rgb.dist2(&c), e.name.as_str())).collect();
        scan.sort();
        assert_eq!(scan[0].1, "red");
        assert_eq!(nearest_x11_name(c), "red");
    }

    #[test]
    fn ties_go_to_smallest_name() {
        // aqua and cyan share (0,255,255); fuchsia and magenta share (255,0,255)
        assert_eq!(nearest_x11_name(Rgb::new(0, 255, 255)), "aqua");
        assert_eq!(nearest_x11_name(Rgb::new(255, 0, 255)), "fuchsia");
    }

    #[test]
    fn class_lookup() {
        assert_eq!(x11_to_class("black").unwrap(), ColorClass::Black);
        assert_eq!(x11_to_class("dark green").unwrap(), ColorClass::Green);
        assert_eq!(x11_to_class("DarkGreen").unwrap(), ColorClass::Green);
        assert_eq!(x11_to_class("navy").unwrap(), ColorClass::Blue);
        assert!(matches!(x11_to_class("octarine"), Err(Error::UnknownColorName(_))));
    }
}
