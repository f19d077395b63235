use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::report::{CaseOutcome, TestCase};

fn attr(e: &BytesStart<'_>, name: &str) -> Option<String> {
    e.try_get_attribute(name)
        .ok()
        .flatten()
        .and_then(|a| a.unescape_value().ok().map(|v| v.into_owned()))
}

fn case_id(e: &BytesStart<'_>) -> String {
    let name = attr(e, "name").unwrap_or_default();
    match attr(e, "classname") {
        Some(class) if !class.is_empty() => format!("{class}::{name}"),
        _ => name,
    }
}

fn outcome_of(tag: &[u8]) -> Option<CaseOutcome> {
    match tag {
        b"failure" => Some(CaseOutcome::Failed),
        b"error" => Some(CaseOutcome::Errored),
        b"skipped" => Some(CaseOutcome::Skipped),
        _ => None,
    }
}

/// Parses the `<testcase>` elements of a JUnit XML report.
pub fn parse_junit(xml: &str) -> Result<Vec<TestCase>, quick_xml::Error> {
    let mut reader = Reader::from_str(xml);
    let mut cases = Vec::new();
    let mut current: Option<TestCase> = None;
    loop {
        match reader.read_event()? {
            Event::Start(e) if e.name().as_ref() == b"testcase" => {
                current = Some(TestCase {
                    id: case_id(&e),
                    outcome: CaseOutcome::Passed,
                    message: None,
                });
            }
            Event::Empty(e) if e.name().as_ref() == b"testcase" => cases.push(TestCase {
                id: case_id(&e),
                outcome: CaseOutcome::Passed,
                message: None,
            }),
            Event::Start(e) | Event::Empty(e) => {
                if let (Some(case), Some(outcome)) = (current.as_mut(), outcome_of(e.name().as_ref())) {
                    // an error outranks a failure recorded for the same case
                    if case.outcome == CaseOutcome::Passed || outcome == CaseOutcome::Errored {
                        case.outcome = outcome;
                        case.message = attr(&e, "message");
                    }
                }
            }
            Event::End(e) if e.name().as_ref() == b"testcase" => {
                if let Some(case) = current.take() {
                    cases.push(case);
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    Ok(cases)
}
