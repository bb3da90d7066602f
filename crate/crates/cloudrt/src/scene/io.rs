//! Scene point file format.
//!
//! Line-oriented text, one point per line:
//!
//! ```text
//! x y z nx ny nz object_id object_class
//! ```
//!
//! Fields are whitespace-separated, coordinates in metres, `(nx, ny, nz)` a
//! unit normal, `object_id` a non-negative integer and `object_class` one of
//! the [`ObjectClass`] tokens. Empty lines and lines starting with `#` are
//! skipped. Floats are written with the shortest round-trip representation,
//! so saving and reloading reproduces the cloud exactly.

use super::{ObjectClass, ScenePoint};
use crate::error::{Error, Result};
use crate::geom::{P3, V3};
use std::fs;
use std::io::Write;
use std::path::Path;

pub fn parse_scene_points(text: &str) -> Result<Vec<ScenePoint>> {
    let mut points = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(Error::parse(
                line_no,
                format!("expected 8 fields `x y z nx ny nz object_id class`, got {}", fields.len()),
            ));
        }
        let mut nums = [0.0_f64; 6];
        for (slot, field) in nums.iter_mut().zip(&fields[..6]) {
            *slot = field
                .parse()
                .map_err(|_| Error::parse(line_no, format!("invalid number `{field}`")))?;
        }
        let object_id: u32 = fields[6]
            .parse()
            .map_err(|_| Error::parse(line_no, format!("invalid object id `{}`", fields[6])))?;
        let class: ObjectClass = fields[7]
            .parse()
            .map_err(|_| Error::parse(line_no, format!("unknown object class `{}`", fields[7])))?;
        let point = ScenePoint::new(
            P3::new(nums[0], nums[1], nums[2]),
            V3::new(nums[3], nums[4], nums[5]),
            object_id,
            class,
        )
        .map_err(|e| Error::parse(line_no, e.to_string()))?;
        points.push(point);
    }
    Ok(points)
}

pub fn load_scene_points(path: &Path) -> Result<Vec<ScenePoint>> {
    let text = fs::read_to_string(path)?;
    parse_scene_points(&text)
}

pub fn write_scene_points(w: &mut impl Write, points: &[ScenePoint]) -> Result<()> {
    writeln!(w, "# x y z nx ny nz object_id object_class")?;
    for p in points {
        let n = p.normal.into_inner();
        writeln!(
            w,
            "{} {} {} {} {} {} {} {}",
            p.position.x, p.position.y, p.position.z, n.x, n.y, n.z, p.object_id, p.class
        )?;
    }
    Ok(())
}

pub fn save_scene_points(path: &Path, points: &[ScenePoint]) -> Result<()> {
    let mut buf = Vec::new();
    write_scene_points(&mut buf, points)?;
    fs::write(path, buf)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_points_comments_and_blank_lines() {
        let text = "# header\n\n0 0 0 0 0 1 0 interior_wall\n1.5 -2 0.25 1 0 0 3 tree_canopy\n";
        let pts = parse_scene_points(text).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[0].class, ObjectClass::InteriorWall);
        assert_eq!(pts[1].object_id, 3);
        assert_eq!(pts[1].position, P3::new(1.5, -2.0, 0.25));
    }

    #[test]
    fn reports_line_numbers() {
        let text = "0 0 0 0 0 1 0 interior_wall\n0 0 0 0 0 1 0 nonsense\n";
        match parse_scene_points(text).unwrap_err() {
            Error::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("nonsense"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_non_unit_normal_with_line() {
        let text = "0 0 0 0 0 2 0 other\n";
        match parse_scene_points(text).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_wrong_field_count() {
        let err = parse_scene_points("1 2 3 0 0 1 5\n").unwrap_err();
        assert!(err.to_string().contains("8 fields"));
    }

    #[test]
    fn write_then_parse_round_trips() {
        let pts = vec![
            ScenePoint::new(
                P3::new(0.1 + 0.2, -7.25, 1e-3),
                V3::new(0.0, 0.6, 0.8),
                11,
                ObjectClass::WindowTriple,
            )
            .unwrap(),
            ScenePoint::new(P3::new(-1.0, 2.0, 3.0), V3::x(), 2, ObjectClass::Other).unwrap(),
        ];
        let mut buf = Vec::new();
        write_scene_points(&mut buf, &pts).unwrap();
        let reparsed = parse_scene_points(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(reparsed, pts);
    }
}
