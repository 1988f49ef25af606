use super::{
    ActionRecord, ActionVerb, InstructionIR, IrError, LandmarkRecord, RelationRecord,
    SpatialRelation, WaypointRecord,
};

/// One recognized sentence: the action reaching the new waypoint and an
/// optional landmark relation attached to it.
struct Clause {
    verb: ActionVerb,
    landmark: Option<(String, SpatialRelation)>,
}

const LANDMARK_FORMS: [(&str, ActionVerb, SpatialRelation); 7] = [
    ("go forward to ", ActionVerb::Forward, SpatialRelation::At),
    ("walk forward to ", ActionVerb::Forward, SpatialRelation::At),
    ("go to ", ActionVerb::Forward, SpatialRelation::At),
    ("go past ", ActionVerb::Pass, SpatialRelation::Past),
    ("walk past ", ActionVerb::Pass, SpatialRelation::Past),
    ("stop at ", ActionVerb::Forward, SpatialRelation::At),
    ("enter ", ActionVerb::Enter, SpatialRelation::At),
];

const BARE_FORMS: [(&str, ActionVerb); 6] = [
    ("turn left", ActionVerb::TurnLeft),
    ("turn right", ActionVerb::TurnRight),
    ("turn around", ActionVerb::TurnAround),
    ("go forward", ActionVerb::Forward),
    ("walk forward", ActionVerb::Forward),
    ("stop", ActionVerb::Stop),
];

fn strip_article(rest: &str) -> &str {
    for article in ["the ", "a ", "an "] {
        if let Some(noun) = rest.strip_prefix(article) {
            return noun;
        }
    }
    rest
}

fn parse_clause(sentence: &str) -> Option<Clause> {
    for (prefix, verb, relation) in LANDMARK_FORMS {
        if let Some(rest) = sentence.strip_prefix(prefix) {
            let noun = strip_article(rest).trim();
            let valid = !noun.is_empty()
                && noun
                    .chars()
                    .all(|c| c.is_alphanumeric() || c == ' ' || c == '-' || c == '\'');
            return valid.then(|| Clause {
                verb,
                landmark: Some((noun.to_string(), relation)),
            });
        }
    }
    BARE_FORMS
        .iter()
        .find(|(form, _)| *form == sentence)
        .map(|&(_, verb)| Clause {
            verb,
            landmark: None,
        })
}

/// Normalizes case, whitespace and a trailing comma.
fn normalize(sentence: &str) -> String {
    sentence
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .trim_end_matches([',', '!', ';'])
        .to_lowercase()
}

/// Deterministic parser for the constrained instruction grammar.
///
/// Sentences are separated by periods. Each sentence adds one waypoint after
/// the start waypoint `w0`.
pub fn parse_constrained(text: &str) -> Result<InstructionIR, IrError> {
    let sentences: Vec<&str> = text
        .split(['.', '\n'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if sentences.is_empty() {
        return Err(IrError::Empty);
    }

    let mut waypoints = vec![WaypointRecord { index: 0 }];
    let mut landmarks = Vec::new();
    let mut actions = Vec::new();
    let mut relations = Vec::new();
    for (i, raw) in sentences.iter().enumerate() {
        let sentence = normalize(raw);
        let clause = parse_clause(&sentence).ok_or_else(|| IrError::UnparseableSentence {
            index: i,
            text: raw.to_string(),
        })?;
        let to = i + 1;
        waypoints.push(WaypointRecord { index: to });
        actions.push(ActionRecord {
            from: i,
            to,
            verb: clause.verb,
            phrase: sentence.clone(),
        });
        if let Some((label, relation)) = clause.landmark {
            let index = landmarks.len();
            landmarks.push(LandmarkRecord { index, label });
            relations.push(RelationRecord {
                waypoint: to,
                landmark: index,
                relation,
                phrase: sentence,
            });
        }
    }

    let ir = InstructionIR {
        raw_text: text.to_string(),
        waypoints,
        landmarks,
        actions,
        relations,
        warnings: Vec::new(),
    };
    ir.validate()?;
    Ok(ir)
}
