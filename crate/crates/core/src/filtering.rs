//! Segment verdicts.
//!
//! A segment that changed with respect to the background set may still be
//! something that merely moves around, such as a person walking through the
//! sweep. Comparing the current frames against each other exposes that
//! motion: pixels that change both against the background and within the
//! current set count as junk, pixels that change only against the
//! background count as object. Segments are then accepted or rejected by
//! their junk and object evidence, their size, and overlap with detected
//! people.

use std::fmt;
use std::str::FromStr;

use serde::Deserialize;
use thiserror::Error;

use crate::clustering::Segment;
use crate::grid::Grid;

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// When false every segment is accepted.
    pub enabled: bool,
    /// Minimum object evidence, in expected pixels, for acceptance.
    pub kappa: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            kappa: 100.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Accepted,
    RejectedJunk,
    RejectedSmall,
    RejectedPerson,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Accepted => "accepted",
            Verdict::RejectedJunk => "rejected-junk",
            Verdict::RejectedSmall => "rejected-small",
            Verdict::RejectedPerson => "rejected-person",
        }
    }

    pub fn is_accepted(self) -> bool {
        self == Verdict::Accepted
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "accepted" => Ok(Verdict::Accepted),
            "rejected-junk" => Ok(Verdict::RejectedJunk),
            "rejected-small" => Ok(Verdict::RejectedSmall),
            "rejected-person" => Ok(Verdict::RejectedPerson),
            other => Err(format!("unknown verdict {other:?}")),
        }
    }
}

/// Per-pixel junk and object probabilities from the within-set and
/// against-background object priors.
pub fn junk_object_probabilities(p_moving: f64, p_obj_background: f64) -> (f64, f64) {
    (
        p_moving * p_obj_background,
        (1.0 - p_moving) * p_obj_background,
    )
}

/// Junk and object probability maps of one frame.
pub fn junk_object_maps(
    p_moving: &Grid<f64>,
    p_obj_background: &Grid<f64>,
) -> (Grid<f64>, Grid<f64>) {
    let both: Vec<(f64, f64)> = p_moving
        .as_slice()
        .iter()
        .zip(p_obj_background.as_slice())
        .map(|(&m, &b)| junk_object_probabilities(m, b))
        .collect();
    let (w, h) = (p_moving.width(), p_moving.height());
    (
        Grid::from_vec(w, h, both.iter().map(|v| v.0).collect()).expect("shape"),
        Grid::from_vec(w, h, both.iter().map(|v| v.1).collect()).expect("shape"),
    )
}

/// Expected number of object-dominated and junk-dominated pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scores {
    pub obj: f64,
    pub junk: f64,
}

impl Scores {
    /// Share of the evidence that is junk; 0 when there is no evidence.
    pub fn moving_ratio(&self) -> f64 {
        let t = self.obj + self.junk;
        if t > 0.0 {
            self.junk / t
        } else {
            0.0
        }
    }
}

pub fn score_segment(segment: &Segment, junk: &[Grid<f64>], obj: &[Grid<f64>]) -> Scores {
    let mut s = Scores {
        obj: 0.0,
        junk: 0.0,
    };
    for m in &segment.members {
        let (j, o) = (junk[m.frame][m.pixel], obj[m.frame][m.pixel]);
        s.obj += (o - j).max(0.0);
        s.junk += (j - o).max(0.0);
    }
    s
}

/// A detected person in one frame; bounds are inclusive pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PersonBox {
    pub frame: usize,
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
    pub confidence: f64,
}

impl PersonBox {
    pub fn contains(&self, frame: usize, x: usize, y: usize) -> bool {
        frame == self.frame
            && (self.x_min..=self.x_max).contains(&x)
            && (self.y_min..=self.y_max).contains(&y)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PersonBoxError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("box on line {line} does not fit frame {frame} ({width}x{height}) or the frame does not exist")]
    OutOfBounds {
        line: usize,
        frame: usize,
        width: usize,
        height: usize,
    },
}

/// Parses one `frame x_min y_min x_max y_max confidence` record per line.
/// Blank lines and lines starting with `#` are skipped.
pub fn parse_person_boxes(text: &str) -> Result<Vec<PersonBox>, PersonBoxError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let err = |message: String| PersonBoxError::Parse {
            line: line_no,
            message,
        };
        let fields: Vec<&str> = t.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(err(format!("expected 6 fields, found {}", fields.len())));
        }
        let int = |i: usize| {
            fields[i]
                .parse::<usize>()
                .map_err(|e| err(format!("field {}: {e}", i + 1)))
        };
        let confidence: f64 = fields[5]
            .parse()
            .map_err(|e| err(format!("confidence: {e}")))?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(err(format!("confidence {confidence} outside [0, 1]")));
        }
        let b = PersonBox {
            frame: int(0)?,
            x_min: int(1)?,
            y_min: int(2)?,
            x_max: int(3)?,
            y_max: int(4)?,
            confidence,
        };
        if b.x_min > b.x_max || b.y_min > b.y_max {
            return Err(err("minimum corner exceeds maximum corner".into()));
        }
        out.push(b);
    }
    Ok(out)
}

/// Checks every box against the sizes of the frames it refers to.
/// `boxes` must be in file order so errors name the right line.
pub fn validate_person_boxes(
    text: &str,
    boxes: &[PersonBox],
    sizes: &[(usize, usize)],
) -> Result<(), PersonBoxError> {
    let lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim().starts_with('#'))
        .map(|(i, _)| i + 1);
    for (b, line) in boxes.iter().zip(lines) {
        let (width, height) = sizes.get(b.frame).copied().unwrap_or((0, 0));
        if b.frame >= sizes.len() || b.x_max >= width || b.y_max >= height {
            return Err(PersonBoxError::OutOfBounds {
                line,
                frame: b.frame,
                width,
                height,
            });
        }
    }
    Ok(())
}

/// Whether any member of `segment` lies inside one of `boxes`.
pub fn overlaps_person(segment: &Segment, boxes: &[PersonBox]) -> bool {
    segment.members.iter().any(|m| {
        boxes
            .iter()
            .any(|b| b.contains(m.frame, m.pixel.x, m.pixel.y))
    })
}

/// Person overlap first, then junk dominance, then the size threshold.
pub fn verdict(scores: &Scores, person: bool, kappa: f64) -> Verdict {
    if person {
        Verdict::RejectedPerson
    } else if scores.junk > scores.obj {
        Verdict::RejectedJunk
    } else if scores.obj < kappa {
        Verdict::RejectedSmall
    } else {
        Verdict::Accepted
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Pixel;
    use crate::inference::FramePixel;
    use proptest::prelude::*;

    fn segment(n: usize) -> Segment {
        Segment {
            id: 1,
            members: (0..n)
                .map(|i| FramePixel {
                    frame: 0,
                    pixel: Pixel::new(i % 20, i / 20),
                })
                .collect(),
        }
    }

    #[test]
    fn junk_object_examples() {
        assert_eq!(junk_object_probabilities(1.0, 1.0), (1.0, 0.0));
        assert_eq!(junk_object_probabilities(0.0, 1.0), (0.0, 1.0));
        let (j, o) = junk_object_probabilities(0.5, 0.8);
        assert!((j - 0.4).abs() < 1e-15 && (o - 0.4).abs() < 1e-15);
    }

    #[test]
    fn score_examples() {
        let s = segment(150);
        let junk = vec![Grid::filled(20, 10, 0.0)];
        let obj = vec![Grid::filled(20, 10, 1.0)];
        assert_eq!(
            score_segment(&s, &junk, &obj),
            Scores {
                obj: 150.0,
                junk: 0.0
            }
        );
        let half = vec![Grid::filled(20, 10, 0.5)];
        assert_eq!(
            score_segment(&s, &half, &half),
            Scores {
                obj: 0.0,
                junk: 0.0
            }
        );
        assert_eq!(score_segment(&s, &half, &half).moving_ratio(), 0.0);
    }

    #[test]
    fn verdict_examples_and_precedence() {
        let small = Scores {
            obj: 99.5,
            junk: 0.0,
        };
        assert_eq!(verdict(&small, false, 100.0), Verdict::RejectedSmall);
        let big = Scores {
            obj: 500.0,
            junk: 10.0,
        };
        assert_eq!(verdict(&big, false, 100.0), Verdict::Accepted);
        assert_eq!(verdict(&big, true, 100.0), Verdict::RejectedPerson);
        let junk = Scores {
            obj: 500.0,
            junk: 600.0,
        };
        assert_eq!(verdict(&junk, false, 100.0), Verdict::RejectedJunk);
        assert_eq!(verdict(&junk, true, 100.0), Verdict::RejectedPerson);
        let at = Scores {
            obj: 100.0,
            junk: 0.0,
        };
        assert_eq!(verdict(&at, false, 100.0), Verdict::Accepted);
    }

    #[test]
    fn person_box_overlap() {
        let s = segment(40);
        let inside = PersonBox {
            frame: 0,
            x_min: 19,
            y_min: 1,
            x_max: 30,
            y_max: 5,
            confidence: 0.9,
        };
        assert!(overlaps_person(&s, &[inside]));
        let other_frame = PersonBox { frame: 1, ..inside };
        assert!(!overlaps_person(&s, &[other_frame]));
        let beside = PersonBox { y_min: 2, ..inside };
        assert!(!overlaps_person(&s, &[beside]));
    }

    #[test]
    fn person_box_parsing() {
        let text = "# detections\n0 10 20 30 40 0.9\n\n2 0 0 5 5 1\n";
        let b = parse_person_boxes(text).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(b[1].frame, 2);
        assert_eq!(b[0].y_max, 40);
        assert!(validate_person_boxes(text, &b, &[(64, 48), (64, 48), (64, 48)]).is_ok());
        assert!(matches!(
            validate_person_boxes(text, &b, &[(64, 48)]),
            Err(PersonBoxError::OutOfBounds { line: 4, .. })
        ));
        assert!(matches!(
            parse_person_boxes("0 1 2 3\n"),
            Err(PersonBoxError::Parse { line: 1, .. })
        ));
        assert!(parse_person_boxes("0 5 5 1 1 0.5").is_err());
        assert!(parse_person_boxes("0 1 1 5 5 1.5").is_err());
    }

    #[test]
    fn verdict_strings_round_trip() {
        for v in [
            Verdict::Accepted,
            Verdict::RejectedJunk,
            Verdict::RejectedSmall,
            Verdict::RejectedPerson,
        ] {
            assert_eq!(v.as_str().parse::<Verdict>().unwrap(), v);
        }
    }

    proptest! {
        #[test]
        fn scores_are_bounded_and_monotone(
            probs in prop::collection::vec((0.0..=1.0f64, 0.0..=1.0f64), 1..60),
            k in 0usize..60, bump in 0.0..1.0f64,
        ) {
            let n = probs.len();
            let s = segment(n);
            let junk = vec![Grid::from_fn(20, 3, |p| probs.get(p.y * 20 + p.x).map_or(0.0, |v| v.0))];
            let obj = vec![Grid::from_fn(20, 3, |p| probs.get(p.y * 20 + p.x).map_or(0.0, |v| v.1))];
            let sc = score_segment(&s, &junk, &obj);
            prop_assert!(sc.obj >= 0.0 && sc.junk >= 0.0);
            prop_assert!(sc.obj <= n as f64 && sc.junk <= n as f64);
            let k = k % n;
            let mut raised = obj.clone();
            let p = Pixel::new(k % 20, k / 20);
            raised[0][p] = (raised[0][p] + bump).min(1.0);
            prop_assert!(score_segment(&s, &junk, &raised).obj >= sc.obj);
        }
    }
}
