use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{
    detect_psi, FpcError, FpcParams, InitMode, NodeState, Outcome, OutcomeTag, RoundRecord,
    RunTrace, Sampling, TRACE_SCHEMA,
};
use crate::adversary::{check_round, Answer, AnswerLog, Querier, RoundView, Slot, Strategy, ThreatClass};
use crate::randomness::{stream, SeedSchedule, ThresholdDraw, ThresholdMode, ThresholdRule, ThresholdSource};

/// What to keep while running.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Per-node finalization flags in every round record.
    pub finalization_flags: bool,
    /// Every adversarial answer, for auditing.
    pub answer_log: bool,
}

/// Result of one round, handed to observers.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub record: RoundRecord,
    /// Honest nodes that queried this round (the unfinalized ones).
    pub queriers: Vec<usize>,
    /// Their η, aligned with `queriers`.
    pub etas: Vec<Option<f64>>,
    /// Opinions entering the round.
    pub previous: Vec<u8>,
    /// Threshold each querier compared against.
    pub thresholds: Vec<f64>,
}

/// State of one run. Honest nodes are `0..H`, adversarial ones `H..n`.
pub struct Simulation {
    params: FpcParams,
    strategy: Box<dyn Strategy>,
    declared: ThreatClass,
    nodes: Vec<NodeState>,
    thresholds: ThresholdSource,
    queries: ChaCha8Rng,
    /// Honest nodes fed the adversary's threshold instead of the common one.
    substituted: Vec<bool>,
    round: usize,
    seed: u64,
    strategy_calls: u64,
    log: Option<AnswerLog>,
    options: RunOptions,
}

impl Simulation {
    pub fn new(
        params: FpcParams,
        strategy: Box<dyn Strategy>,
        seed: u64,
        options: RunOptions,
    ) -> Result<Self, FpcError> {
        params.validate()?;
        let honest = params.honest();
        let ones = params.initial_ones();
        let mut opinions: Vec<u8> = (0..honest).map(|i| u8::from(i < ones)).collect();
        if params.init == InitMode::Random {
            opinions.shuffle(&mut SeedSchedule::rng(seed, stream::INIT));
        }
        let mut substituted = vec![false; honest];
        if let ThresholdMode::Degraded { delta, .. } = params.threshold_mode {
            let count = ((delta * honest as f64).floor() as usize).min(honest);
            let mut rng = SeedSchedule::rng(seed, stream::ADVERSARY);
            for i in index::sample(&mut rng, honest, count) {
                substituted[i] = true;
            }
        }
        Ok(Self {
            declared: strategy.threat_class(),
            strategy,
            nodes: opinions.into_iter().map(NodeState::new).collect(),
            thresholds: ThresholdSource::new(params.a, params.b, params.beta, params.threshold_mode, seed),
            queries: SeedSchedule::rng(seed, stream::QUERIES),
            substituted,
            round: 0,
            seed,
            strategy_calls: 0,
            log: options.answer_log.then(AnswerLog::new),
            options,
            params,
        })
    }

    pub fn params(&self) -> &FpcParams {
        &self.params
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn opinions(&self) -> Vec<u8> {
        self.nodes.iter().map(|s| s.opinion).collect()
    }

    pub fn honest_ones(&self) -> usize {
        self.nodes.iter().filter(|s| s.opinion == 1).count()
    }

    pub fn all_finalized(&self) -> bool {
        self.nodes.iter().all(|s| s.finalized)
    }

    pub fn strategy_calls(&self) -> u64 {
        self.strategy_calls
    }

    pub fn answer_log(&self) -> Option<&AnswerLog> {
        self.log.as_ref()
    }

    fn sample_targets(&mut self, out: &mut Vec<usize>) {
        let (n, k) = (self.params.n, self.params.k);
        out.clear();
        match self.params.sampling {
            Sampling::WithReplacement => out.extend((0..k).map(|_| self.queries.gen_range(0..n))),
            Sampling::WithoutReplacement => out.extend(index::sample(&mut self.queries, n, k)),
        }
    }

    /// Plays one synchronous round: every unfinalized honest node queries,
    /// then all of them update from the opinions entering the round.
    pub fn step_round(&mut self) -> Result<RoundReport, FpcError> {
        if self.round >= self.params.delta_max {
            return Err(FpcError::RoundLimit(self.params.delta_max));
        }
        let t = self.round + 1;
        let honest = self.nodes.len();
        let adversaries = self.params.n - honest;
        let previous = self.opinions();

        let mut queriers = Vec::new();
        let mut slots = Vec::new();
        let mut targets = Vec::with_capacity(self.params.k);
        for node in 0..honest {
            if self.nodes[node].finalized {
                continue;
            }
            self.sample_targets(&mut targets);
            let mut q = Querier {
                node,
                honest_ones: 0,
                honest_replies: 0,
            };
            for &j in &targets {
                if j < honest {
                    q.honest_replies += 1;
                    q.honest_ones += u32::from(previous[j]);
                } else {
                    slots.push(Slot {
                        querier: queriers.len(),
                        adversary: j - honest,
                    });
                }
            }
            queriers.push(q);
        }

        let (lo, hi) = self.thresholds.interval(t);
        let view = RoundView {
            round: t,
            honest,
            adversaries,
            opinions: &previous,
            honest_ones: previous.iter().filter(|&&x| x == 1).count(),
            target: 0.5 * (lo + hi),
            queriers: &queriers,
            slots: &slots,
        };
        let mut answers = Vec::with_capacity(slots.len());
        if !slots.is_empty() {
            self.strategy_calls += 1;
            self.strategy.answer(&view, &mut answers);
            if answers.len() != slots.len() {
                return Err(FpcError::Param(format!(
                    "strategy `{}` gave {} answers for {} queries",
                    self.strategy.name(),
                    answers.len(),
                    slots.len()
                )));
            }
            check_round(&view, &answers, self.declared).map_err(FpcError::StrategyViolation)?;
            if let Some(log) = self.log.as_mut() {
                log.record_round(&view, &answers);
            }
        }

        let mut ones: Vec<u32> = queriers.iter().map(|q| q.honest_ones).collect();
        let mut replies: Vec<u32> = queriers.iter().map(|q| q.honest_replies).collect();
        for (slot, answer) in slots.iter().zip(&answers) {
            match answer {
                Answer::Zero => replies[slot.querier] += 1,
                Answer::One => {
                    replies[slot.querier] += 1;
                    ones[slot.querier] += 1;
                }
                Answer::Silent => {}
            }
        }
        let etas: Vec<Option<f64>> = ones
            .iter()
            .zip(&replies)
            .map(|(&o, &r)| (r > 0).then(|| o as f64 / r as f64))
            .collect();

        let draw: ThresholdDraw = {
            let etas = &etas;
            self.thresholds.draw(t, || match self.params.threshold_mode {
                ThresholdMode::Degraded { rule, .. } => commitment(rule, etas),
                ThresholdMode::Ideal => 0.5,
            })
        };
        let local = |node: usize| match draw.committed {
            Some(c) if self.substituted[node] => c,
            _ => draw.value,
        };
        let thresholds: Vec<f64> = queriers.iter().map(|q| local(q.node)).collect();

        for ((q, eta), &u) in queriers.iter().zip(&etas).zip(&thresholds) {
            let state = &mut self.nodes[q.node];
            state.opinion = super::apply_update(*eta, u, state.opinion);
        }
        for state in self.nodes.iter_mut() {
            let streak_continues = t > self.params.m0 + 1
                && state.opinion_history.last() == Some(&state.opinion);
            state.opinion_history.push(state.opinion);
            if t > self.params.m0 {
                state.unchanged_streak = if streak_continues { state.unchanged_streak + 1 } else { 1 };
            }
            if !state.finalized && state.unchanged_streak >= self.params.ell {
                state.finalized = true;
            }
        }
        self.round = t;

        let record = RoundRecord {
            round: t,
            threshold: draw.value,
            fresh: draw.fresh,
            committed: draw.committed,
            honest_ones: self.honest_ones(),
            finalized_count: self.nodes.iter().filter(|s| s.finalized).count(),
            finalized: self.options.finalization_flags.then(|| {
                self.nodes.iter().map(|s| if s.finalized { '1' } else { '0' }).collect()
            }),
        };
        Ok(RoundReport {
            record,
            queriers: queriers.iter().map(|q| q.node).collect(),
            etas,
            previous,
            thresholds,
        })
    }

    /// Outcome if the run stopped now.
    pub fn outcome(&self) -> Outcome {
        let tag = if !self.all_finalized() {
            OutcomeTag::TerminationFailure
        } else if self.nodes.iter().all(|s| s.opinion == 0) {
            OutcomeTag::AgreementOn0
        } else if self.nodes.iter().all(|s| s.opinion == 1) {
            OutcomeTag::AgreementOn1
        } else {
            OutcomeTag::AgreementFailure
        };
        Outcome {
            tag,
            rounds_used: self.round,
        }
    }

    /// Runs to completion, calling `observe` after every round.
    pub fn run_with_observer(
        mut self,
        mut observe: impl FnMut(&RoundReport),
    ) -> Result<(RunTrace, Option<AnswerLog>), FpcError> {
        let mut rounds = Vec::new();
        while self.round < self.params.delta_max && !self.all_finalized() {
            let report = self.step_round()?;
            observe(&report);
            rounds.push(report.record);
        }
        let honest = self.nodes.len();
        let p_hat: Vec<f64> = rounds.iter().map(|r| r.honest_ones as f64 / honest as f64).collect();
        let psi_round = detect_psi(&p_hat, self.params.beta, self.params.q).unwrap_or(None);
        let trace = RunTrace {
            schema: TRACE_SCHEMA.to_string(),
            seed: self.seed,
            honest,
            adversaries: self.params.n - honest,
            rounds,
            psi_round,
            outcome: self.outcome(),
            strategy_calls: self.strategy_calls,
        };
        Ok((trace, self.log))
    }
}

fn commitment(rule: ThresholdRule, etas: &[Option<f64>]) -> f64 {
    match rule {
        ThresholdRule::Fixed(v) => v,
        ThresholdRule::MedianEta => {
            let mut values: Vec<f64> = etas.iter().flatten().copied().collect();
            if values.is_empty() {
                return 0.5;
            }
            values.sort_by(f64::total_cmp);
            let mid = values.len() / 2;
            if values.len() % 2 == 1 {
                values[mid]
            } else {
                0.5 * (values[mid - 1] + values[mid])
            }
        }
    }
}

/// One complete run.
pub fn run(params: FpcParams, strategy: Box<dyn Strategy>, seed: u64) -> Result<RunTrace, FpcError> {
    run_with(params, strategy, seed, RunOptions::default()).map(|(trace, _)| trace)
}

pub fn run_with(
    params: FpcParams,
    strategy: Box<dyn Strategy>,
    seed: u64,
    options: RunOptions,
) -> Result<(RunTrace, Option<AnswerLog>), FpcError> {
    Simulation::new(params, strategy, seed, options)?.run_with_observer(|_| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{AdversarySpec, StrategyRegistry};

    fn strategy(name: &str) -> Box<dyn Strategy> {
        StrategyRegistry::with_builtins().build(&AdversarySpec::named(name)).unwrap()
    }

    fn small(q: f64) -> FpcParams {
        FpcParams {
            n: 200,
            k: 15,
            q,
            ..FpcParams::default()
        }
    }

    #[test]
    fn unanimous_start_finalizes_at_m0_plus_ell() {
        for (p0, tag) in [(1.0, OutcomeTag::AgreementOn1), (0.0, OutcomeTag::AgreementOn0)] {
            for m0 in [0, 3] {
                let params = FpcParams {
                    initial_ones_fraction: p0,
                    m0,
                    ..small(0.0)
                };
                let trace = run(params, strategy("none"), 1).unwrap();
                assert_eq!(trace.outcome.tag, tag);
                assert_eq!(trace.outcome.rounds_used, m0 + params.ell);
                assert_eq!(trace.strategy_calls, 0);
            }
        }
    }

    #[test]
    fn initial_assignment() {
        let params = FpcParams {
            q: 0.1,
            ..FpcParams::default()
        };
        let sim = Simulation::new(params, strategy("ivs"), 3, RunOptions::default()).unwrap();
        assert_eq!(sim.honest_ones(), 600);
        assert_eq!(sim.nodes().len(), 900);
        let random = FpcParams {
            init: InitMode::Random,
            ..params
        };
        let a = Simulation::new(random, strategy("ivs"), 3, RunOptions::default()).unwrap();
        let b = Simulation::new(random, strategy("ivs"), 3, RunOptions::default()).unwrap();
        assert_eq!(a.opinions(), b.opinions());
        assert_eq!(a.honest_ones(), 600);
    }

    #[test]
    fn rounds_are_synchronous() {
        let params = FpcParams {
            initial_ones_fraction: 0.5,
            ..small(0.1)
        };
        let mut sim = Simulation::new(params, strategy("mvs"), 9, RunOptions::default()).unwrap();
        for _ in 0..5 {
            let report = sim.step_round().unwrap();
            let now = sim.opinions();
            for ((&node, eta), &u) in report.queriers.iter().zip(&report.etas).zip(&report.thresholds) {
                assert_eq!(now[node], super::super::apply_update(*eta, u, report.previous[node]));
            }
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let params = small(0.1);
        let opts = RunOptions {
            finalization_flags: true,
            answer_log: true,
        };
        let a = run_with(params, strategy("mvs"), 5, opts).unwrap();
        let b = run_with(params, strategy("mvs"), 5, opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.0.to_json(), b.0.to_json());
    }

    struct Liar;

    impl Strategy for Liar {
        fn name(&self) -> &str {
            "liar"
        }

        fn threat_class(&self) -> ThreatClass {
            ThreatClass::Cautious
        }

        fn answer(&mut self, view: &RoundView<'_>, out: &mut Vec<Answer>) {
            out.extend(view.slots.iter().map(|s| Answer::bit((s.querier % 2) as u8)));
        }
    }

    #[test]
    fn cautious_liar_is_caught() {
        let err = run(small(0.2), Box::new(Liar), 1).unwrap_err();
        assert!(matches!(err, FpcError::StrategyViolation(v) if v.class == ThreatClass::Cautious));
    }

    #[test]
    fn finalized_nodes_keep_their_opinion() {
        let params = FpcParams {
            initial_ones_fraction: 0.5,
            beta: 0.5,
            ..small(0.1)
        };
        let mut sim = Simulation::new(params, strategy("mvs"), 2, RunOptions::default()).unwrap();
        let mut fixed: Vec<Option<u8>> = vec![None; sim.nodes().len()];
        while sim.round() < params.delta_max && !sim.all_finalized() {
            sim.step_round().unwrap();
            for (i, s) in sim.nodes().iter().enumerate() {
                if let Some(v) = fixed[i] {
                    assert_eq!(s.opinion, v);
                } else if s.finalized {
                    fixed[i] = Some(s.opinion);
                }
            }
        }
        assert!(sim.step_round().is_err() || sim.round() < params.delta_max);
    }
}
