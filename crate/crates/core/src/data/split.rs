use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::recording::AffectClass;
use super::window::Window;
use super::{DataError, Result};

/// Which model family a split (and the model trained on it) belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Personalized,
    SubjectInclusive,
    SubjectExclusive,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [
        Protocol::Personalized,
        Protocol::SubjectInclusive,
        Protocol::SubjectExclusive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Personalized => "personalized",
            Protocol::SubjectInclusive => "subject-inclusive",
            Protocol::SubjectExclusive => "subject-exclusive",
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct SubjectWindows {
    pub subject_id: u16,
    pub windows: Vec<Window>,
}

#[derive(Debug, Clone)]
pub struct SplitTriple {
    pub protocol: Protocol,
    pub test_subject: u16,
    pub train: Vec<Window>,
    pub val: Vec<Window>,
    pub test: Vec<Window>,
}

/// Cumulative-floor boundaries for `n` time-ordered windows:
/// `(floor(0.70 n), floor(0.85 n))`.
pub fn class_boundaries(n: usize) -> (usize, usize) {
    (n * 70 / 100, n * 85 / 100)
}

struct Segments {
    train: Vec<Window>,
    val: Vec<Window>,
    test: Vec<Window>,
}

/// Per class, in time order: first 70% train, next 15% val, rest test.
fn segment(subject: u16, windows: &[Window]) -> Result<Segments> {
    let mut seg = Segments {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for class in AffectClass::ALL {
        let mut members: Vec<&Window> = windows.iter().filter(|w| w.label() == class).collect();
        if members.len() < 3 {
            return Err(DataError::ClassTooSmall {
                subject,
                class,
                count: members.len(),
            });
        }
        members.sort_by_key(|w| w.start());
        let (a, b) = class_boundaries(members.len());
        seg.train.extend(members[..a].iter().map(|&w| w.clone()));
        seg.val.extend(members[a..b].iter().map(|&w| w.clone()));
        seg.test.extend(members[b..].iter().map(|&w| w.clone()));
    }
    Ok(seg)
}

pub fn split_personalized(subject: &SubjectWindows) -> Result<SplitTriple> {
    let seg = segment(subject.subject_id, &subject.windows)?;
    Ok(SplitTriple {
        protocol: Protocol::Personalized,
        test_subject: subject.subject_id,
        train: seg.train,
        val: seg.val,
        test: seg.test,
    })
}

fn check_subjects(all: &[SubjectWindows], test_subject: u16, needed: usize) -> Result<()> {
    if all.len() < needed {
        return Err(DataError::TooFewSubjects {
            needed,
            found: all.len(),
        });
    }
    let mut seen = BTreeSet::new();
    for s in all {
        if !seen.insert(s.subject_id) {
            return Err(DataError::DuplicateSubject(s.subject_id));
        }
    }
    if !seen.contains(&test_subject) {
        return Err(DataError::UnknownSubject(test_subject));
    }
    Ok(())
}

fn pooled(
    protocol: Protocol,
    all: &[SubjectWindows],
    test_subject: u16,
    include_test_subject: bool,
) -> Result<SplitTriple> {
    let mut out = SplitTriple {
        protocol,
        test_subject,
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for s in all {
        let seg = segment(s.subject_id, &s.windows)?;
        if s.subject_id == test_subject {
            out.test = seg.test;
            if !include_test_subject {
                continue;
            }
        }
        out.train.extend(seg.train);
        out.val.extend(seg.val);
    }
    Ok(out)
}

/// Train/val pooled over every subject except `test_subject`.
pub fn split_subject_exclusive(all: &[SubjectWindows], test_subject: u16) -> Result<SplitTriple> {
    check_subjects(all, test_subject, 2)?;
    pooled(Protocol::SubjectExclusive, all, test_subject, false)
}

/// Train/val pooled over every subject, `test_subject` included.
pub fn split_subject_inclusive(all: &[SubjectWindows], test_subject: u16) -> Result<SplitTriple> {
    check_subjects(all, test_subject, 1)?;
    pooled(Protocol::SubjectInclusive, all, test_subject, true)
}
