use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{BBox, Trajectory};

/// One line of a MOTChallenge file:
/// `frame,id,bb_left,bb_top,bb_width,bb_height,conf,class,visibility`.
#[derive(Clone, Debug, PartialEq)]
pub struct MotRow {
    pub frame: u32,
    /// `-1` for detections without an identity.
    pub id: i64,
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
    pub conf: f64,
    pub class: i64,
    pub visibility: f64,
}

impl MotRow {
    pub fn bbox(&self) -> Result<BBox> {
        BBox::from_ltwh(self.left, self.top, self.width, self.height)
    }

    /// Canonical text: two decimals for geometry, six for scores.
    pub fn format(&self) -> String {
        format!(
            "{},{},{:.2},{:.2},{:.2},{:.2},{:.6},{},{:.6}",
            self.frame, self.id, self.left, self.top, self.width, self.height, self.conf, self.class, self.visibility
        )
    }
}

fn field<T: std::str::FromStr>(line: usize, name: &str, s: &str) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad {name} {s:?}"),
    })
}

/// Rows sorted by `(frame, id)`, keeping file order among equal keys.
/// Blank lines are skipped.
pub fn parse_mot_csv(text: &str) -> Result<Vec<MotRow>> {
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = raw.split(',').collect();
        if cols.len() != 9 {
            return Err(Error::Parse {
                line,
                message: format!("expected 9 columns, found {}", cols.len()),
            });
        }
        let row = MotRow {
            frame: field(line, "frame", cols[0])?,
            id: field(line, "id", cols[1])?,
            left: field(line, "bb_left", cols[2])?,
            top: field(line, "bb_top", cols[3])?,
            width: field(line, "bb_width", cols[4])?,
            height: field(line, "bb_height", cols[5])?,
            conf: field(line, "conf", cols[6])?,
            class: field(line, "class", cols[7])?,
            visibility: field(line, "visibility", cols[8])?,
        };
        if row.frame < 1 {
            return Err(Error::Parse {
                line,
                message: "frame must be >= 1".into(),
            });
        }
        if !(row.width > 0.0 && row.height > 0.0) || !row.left.is_finite() || !row.top.is_finite() {
            return Err(Error::Parse {
                line,
                message: format!("box {}x{} at ({}, {}) is not valid", row.width, row.height, row.left, row.top),
            });
        }
        rows.push(row);
    }
    rows.sort_by_key(|r| (r.frame, r.id));
    Ok(rows)
}

/// Rows in `(frame, id)` order, one per line, each ending in `\n`.
pub fn write_mot_csv(rows: &[MotRow]) -> String {
    let mut sorted: Vec<&MotRow> = rows.iter().collect();
    sorted.sort_by_key(|r| (r.frame, r.id));
    let mut s = String::new();
    for r in sorted {
        let _ = writeln!(s, "{}", r.format());
    }
    s
}

/// One row per trajectory slice. `conf` and `class` (1-based) come from
/// [`Trajectory::top_class`].
pub fn trajectories_to_rows(trajs: &[Trajectory]) -> Vec<MotRow> {
    let mut rows = Vec::new();
    for t in trajs {
        let (class, score) = t.top_class();
        for (f, b) in &t.slices {
            rows.push(MotRow {
                frame: *f,
                id: t.id as i64,
                left: b.x1(),
                top: b.y1(),
                width: b.width(),
                height: b.height(),
                conf: score,
                class: class as i64 + 1,
                visibility: 1.0,
            });
        }
    }
    rows.sort_by_key(|r| (r.frame, r.id));
    rows
}

/// Groups rows with `id >= 0` into trajectories ordered by id. A trajectory
/// whose rows carry a class above 1 gets class scores holding its mean
/// `conf` at that class, so [`Trajectory::top_class`] recovers both.
pub fn rows_to_trajectories(rows: &[MotRow]) -> Result<Vec<Trajectory>> {
    let mut by_id: BTreeMap<i64, Vec<&MotRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.id >= 0) {
        by_id.entry(r.id).or_default().push(r);
    }
    let mut out = Vec::with_capacity(by_id.len());
    for (id, rs) in by_id {
        let mut slices = BTreeMap::new();
        for r in &rs {
            if slices.insert(r.frame, r.bbox()?).is_some() {
                return Err(Error::Contract(format!("id {id} has two boxes in frame {}", r.frame)));
            }
        }
        let class = rs[0].class.max(1) as usize;
        let conf = rs.iter().map(|r| r.conf).sum::<f64>() / rs.len() as f64;
        let mut t = Trajectory::new(id as u64, slices)?;
        if class > 1 || conf != 1.0 {
            let mut scores = vec![0.0; class];
            scores[class - 1] = conf;
            t = t.with_class_scores(scores);
        }
        out.push(t);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_the_reference_row() {
        let rows = parse_mot_csv("1,1,10,20,30,40,1,1,1").unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!((rows[0].frame, rows[0].id), (1, 1));
        assert_eq!(rows[0].bbox().unwrap(), BBox::new(10.0, 20.0, 40.0, 60.0).unwrap());
        assert_eq!(write_mot_csv(&rows), "1,1,10.00,20.00,30.00,40.00,1.000000,1,1.000000\n");
    }

    #[test]
    fn empty_text_and_empty_rows() {
        assert!(parse_mot_csv("").unwrap().is_empty());
        assert_eq!(write_mot_csv(&[]), "");
    }

    #[test]
    fn errors_name_the_line() {
        match parse_mot_csv("1,1,10,20,0,40,1,1,1") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
        match parse_mot_csv("1,1,10,20,3,40,1,1,1\n2,1,x,20,3,40,1,1,1") {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("bb_left"));
            }
            other => panic!("{other:?}"),
        }
        assert!(parse_mot_csv("1,1,10").is_err());
        assert!(parse_mot_csv("0,1,10,20,3,40,1,1,1").is_err());
    }

    #[test]
    fn frames_are_sorted() {
        let rows = parse_mot_csv("3,1,0,0,1,1,1,1,1\n1,2,0,0,1,1,1,1,1\n1,1,0,0,1,1,1,1,1").unwrap();
        let keys: Vec<_> = rows.iter().map(|r| (r.frame, r.id)).collect();
        assert_eq!(keys, vec![(1, 1), (1, 2), (3, 1)]);
    }

    #[test]
    fn trajectories_survive_the_file() {
        let t = Trajectory::new(
            4,
            [(2, BBox::new(1.5, 2.25, 11.5, 30.0).unwrap()), (3, BBox::new(2.0, 2.0, 12.0, 30.0).unwrap())]
                .into_iter()
                .collect(),
        )
        .unwrap()
        .with_class_scores(vec![0.1, 0.75, 0.15]);
        let text = write_mot_csv(&trajectories_to_rows(std::slice::from_ref(&t)));
        let back = rows_to_trajectories(&parse_mot_csv(&text).unwrap()).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].slices, t.slices);
        assert_eq!(back[0].top_class(), (1, 0.75));
    }

    fn row_strategy() -> impl Strategy<Value = MotRow> {
        (1u32..50, -1i64..20, -5000i64..5000, -5000i64..5000, 1i64..9000, 1i64..9000, 0u32..=1_000_000, 1i64..5)
            .prop_map(|(frame, id, l, t, w, h, c, class)| MotRow {
                frame,
                id,
                left: l as f64 / 100.0,
                top: t as f64 / 100.0,
                width: w as f64 / 100.0,
                height: h as f64 / 100.0,
                conf: c as f64 / 1e6,
                class,
                visibility: 1.0,
            })
    }

    proptest! {
        #[test]
        fn canonical_text_round_trips(rows in prop::collection::vec(row_strategy(), 0..40)) {
            let text = write_mot_csv(&rows);
            let parsed = parse_mot_csv(&text).unwrap();
            prop_assert_eq!(write_mot_csv(&parsed), text.clone());
            prop_assert_eq!(parse_mot_csv(&write_mot_csv(&parsed)).unwrap(), parsed);
        }
    }
}
