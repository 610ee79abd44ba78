//! Adversary strategies, their threat classes and an auditor for answer logs.

mod strategies;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use strategies::{
    ivs_answer, mvs_answers, semi_cautious_answer, Ivs, Mvs, NoAdversary, SemiCautiousSplit,
    StaticBit,
};

/// How much freedom an adversarial node has within one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThreatClass {
    /// One answer per round, given to every querier, never silent.
    Cautious,
    /// Never both bits in one round; silence allowed.
    SemiCautious,
    Berserk,
}

impl fmt::Display for ThreatClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Cautious => "cautious",
            Self::SemiCautious => "semi_cautious",
            Self::Berserk => "berserk",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    Zero,
    One,
    Silent,
}

impl Answer {
    pub fn bit(b: u8) -> Self {
        if b == 0 {
            Self::Zero
        } else {
            Self::One
        }
    }
}

/// Honest node querying in the current round, with what it has heard from
/// honest peers so far.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Querier {
    pub node: usize,
    pub honest_ones: u32,
    pub honest_replies: u32,
}

impl Querier {
    pub fn partial_eta(&self) -> Option<f64> {
        (self.honest_replies > 0).then(|| self.honest_ones as f64 / self.honest_replies as f64)
    }
}

/// One query that landed on an adversarial node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    /// Index into [`RoundView::queriers`].
    pub querier: usize,
    /// Adversarial node, `0..adversaries`.
    pub adversary: usize,
}

/// Everything an adversary sees before it answers: the honest opinions of
/// the round, the full query map and all honest replies.
#[derive(Debug, Clone, Copy)]
pub struct RoundView<'a> {
    pub round: usize,
    pub honest: usize,
    pub adversaries: usize,
    pub opinions: &'a [u8],
    pub honest_ones: usize,
    /// Centre of the interval the round's threshold is drawn from.
    pub target: f64,
    pub queriers: &'a [Querier],
    pub slots: &'a [Slot],
}

pub trait Strategy: Send {
    fn name(&self) -> &str;
    fn threat_class(&self) -> ThreatClass;
    /// Pushes one answer per slot of `view.slots`, in order.
    fn answer(&mut self, view: &RoundView<'_>, out: &mut Vec<Answer>);
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdversaryError {
    #[error("unknown strategy `{0}` (known: none, ivs, mvs, semi_cautious_split, static_bit)")]
    UnknownStrategy(String),
    #[error("strategy `{strategy}` got bad parameter `{key}`: {reason}")]
    BadParameter {
        strategy: String,
        key: String,
        reason: String,
    },
}

/// Strategy name plus its parameters, as given in a run configuration.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AdversarySpec {
    pub name: String,
    pub params: BTreeMap<String, String>,
}

impl AdversarySpec {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.to_string(),
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: &str) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }
}

type Factory = fn(&BTreeMap<String, String>) -> Result<Box<dyn Strategy>, AdversaryError>;

/// Name to constructor table for strategies.
pub struct StrategyRegistry {
    factories: BTreeMap<String, (ThreatClass, Factory)>,
}

impl Default for StrategyRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

fn no_params(name: &str, params: &BTreeMap<String, String>) -> Result<(), AdversaryError> {
    match params.keys().next() {
        Some(key) => Err(AdversaryError::BadParameter {
            strategy: name.into(),
            key: key.clone(),
            reason: "strategy takes no parameters".into(),
        }),
        None => Ok(()),
    }
}

impl StrategyRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register("none", ThreatClass::SemiCautious, |p| {
            no_params("none", p)?;
            Ok(Box::new(NoAdversary))
        });
        reg.register("ivs", ThreatClass::Cautious, |p| {
            no_params("ivs", p)?;
            Ok(Box::new(Ivs))
        });
        reg.register("mvs", ThreatClass::Berserk, |p| {
            no_params("mvs", p)?;
            Ok(Box::new(Mvs))
        });
        reg.register("semi_cautious_split", ThreatClass::SemiCautious, |p| {
            no_params("semi_cautious_split", p)?;
            Ok(Box::new(SemiCautiousSplit))
        });
        reg.register("static_bit", ThreatClass::Cautious, |p| {
            let bit = match p.get("bit").map(String::as_str) {
                None | Some("0") => 0,
                Some("1") => 1,
                Some(other) => {
                    return Err(AdversaryError::BadParameter {
                        strategy: "static_bit".into(),
                        key: "bit".into(),
                        reason: format!("expected 0 or 1, got `{other}`"),
                    })
                }
            };
            if let Some(key) = p.keys().find(|k| *k != "bit") {
                return Err(AdversaryError::BadParameter {
                    strategy: "static_bit".into(),
                    key: key.clone(),
                    reason: "unknown parameter".into(),
                });
            }
            Ok(Box::new(StaticBit { bit }))
        });
        reg
    }

    pub fn register(&mut self, name: &str, class: ThreatClass, factory: Factory) {
        self.factories.insert(name.to_string(), (class, factory));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn declared_class(&self, name: &str) -> Option<ThreatClass> {
        self.factories.get(name).map(|(c, _)| *c)
    }

    pub fn build(&self, spec: &AdversarySpec) -> Result<Box<dyn Strategy>, AdversaryError> {
        let (_, factory) = self
            .factories
            .get(&spec.name)
            .ok_or_else(|| AdversaryError::UnknownStrategy(spec.name.clone()))?;
        factory(&spec.params)
    }
}

/// `(round, adversarial node, querier, answer)` records of one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnswerLog {
    entries: Vec<LogEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub round: usize,
    pub adversary: usize,
    pub querier: usize,
    pub answer: Answer,
}

impl AnswerLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entry: LogEntry) {
        self.entries.push(entry);
    }

    pub fn record_round(&mut self, view: &RoundView<'_>, answers: &[Answer]) {
        for (slot, &answer) in view.slots.iter().zip(answers) {
            self.push(LogEntry {
                round: view.round,
                adversary: slot.adversary,
                querier: view.queriers[slot.querier].node,
                answer,
            });
        }
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Evidence that an adversarial node left a threat class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub round: usize,
    pub adversary: usize,
    /// Class the answers fall outside of.
    pub class: ThreatClass,
    pub answers: Vec<Answer>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "adversarial node {} in round {} is not {}: answers {:?}",
            self.adversary, self.round, self.class, self.answers
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    /// Tightest class consistent with the log.
    pub class: ThreatClass,
    /// First piece of evidence that rules out the next tighter class.
    pub evidence: Option<Violation>,
}

/// Class of one `(round, node)` group of answers.
fn group_class(answers: &[Answer]) -> ThreatClass {
    let zero = answers.contains(&Answer::Zero);
    let one = answers.contains(&Answer::One);
    if zero && one {
        ThreatClass::Berserk
    } else if answers.contains(&Answer::Silent) {
        ThreatClass::SemiCautious
    } else {
        ThreatClass::Cautious
    }
}

fn grouped(entries: &[LogEntry]) -> BTreeMap<(usize, usize), Vec<Answer>> {
    let mut groups: BTreeMap<(usize, usize), Vec<Answer>> = BTreeMap::new();
    for e in entries {
        groups.entry((e.round, e.adversary)).or_default().push(e.answer);
    }
    groups
}

pub fn audit_threat_class(log: &AnswerLog) -> AuditReport {
    let mut report = AuditReport {
        class: ThreatClass::Cautious,
        evidence: None,
    };
    for ((round, adversary), answers) in grouped(log.entries()) {
        let class = group_class(&answers);
        if class > report.class {
            report.evidence = Some(Violation {
                round,
                adversary,
                class: report.class,
                answers,
            });
            report.class = class;
        }
    }
    report
}

/// Checks one round of answers against `declared`.
pub fn check_round(
    view: &RoundView<'_>,
    answers: &[Answer],
    declared: ThreatClass,
) -> Result<(), Violation> {
    if declared == ThreatClass::Berserk {
        return Ok(());
    }
    let mut per_node: BTreeMap<usize, Vec<Answer>> = BTreeMap::new();
    for (slot, &a) in view.slots.iter().zip(answers) {
        per_node.entry(slot.adversary).or_default().push(a);
    }
    for (adversary, answers) in per_node {
        if group_class(&answers) > declared {
            return Err(Violation {
                round: view.round,
                adversary,
                class: declared,
                answers,
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log(entries: &[(usize, usize, Answer)]) -> AnswerLog {
        let mut log = AnswerLog::new();
        for (i, &(round, adversary, answer)) in entries.iter().enumerate() {
            log.push(LogEntry {
                round,
                adversary,
                querier: i,
                answer,
            });
        }
        log
    }

    #[test]
    fn audit_classes() {
        use Answer::*;
        let l = log(&[(1, 0, One), (1, 0, One), (2, 0, Zero)]);
        assert_eq!(audit_threat_class(&l).class, ThreatClass::Cautious);
        let l = log(&[(1, 0, One), (1, 0, Silent), (1, 1, Zero)]);
        let r = audit_threat_class(&l);
        assert_eq!(r.class, ThreatClass::SemiCautious);
        let l = log(&[(1, 0, One), (1, 0, Silent), (3, 2, Zero), (3, 2, One)]);
        let r = audit_threat_class(&l);
        assert_eq!(r.class, ThreatClass::Berserk);
        let ev = r.evidence.unwrap();
        assert_eq!((ev.round, ev.adversary), (3, 2));
        assert_eq!(audit_threat_class(&AnswerLog::new()).class, ThreatClass::Cautious);
    }

    #[test]
    fn registry() {
        let reg = StrategyRegistry::with_builtins();
        let names: Vec<_> = reg.names().collect();
        assert_eq!(names, ["ivs", "mvs", "none", "semi_cautious_split", "static_bit"]);
        assert!(matches!(
            reg.build(&AdversarySpec::named("oracle")),
            Err(AdversaryError::UnknownStrategy(_))
        ));
        assert!(reg.build(&AdversarySpec::named("static_bit").with("bit", "2")).is_err());
        assert!(reg.build(&AdversarySpec::named("ivs").with("x", "1")).is_err());
        let s = reg.build(&AdversarySpec::named("static_bit").with("bit", "1")).unwrap();
        assert_eq!(s.threat_class(), ThreatClass::Cautious);
        for name in reg.names() {
            let s = reg.build(&AdversarySpec::named(name)).unwrap();
            assert_eq!(Some(s.threat_class()), reg.declared_class(name));
            assert_eq!(s.name(), name);
        }
    }
}
