use super::{Answer, Querier, RoundView, Slot, Strategy, ThreatClass};

/// Help-the-weakest: the minority opinion among the honest nodes of the
/// previous round, `0` on an exact tie.
pub fn ivs_answer(honest_ones: usize, honest: usize) -> u8 {
    u8::from(2 * honest_ones < honest)
}

/// Symmetric semi-cautious split. Adversarial nodes `0..A/2` form the
/// 0-camp and answer `0` to the first half of the honest nodes, the next
/// `A/2` form the 1-camp and answer `1` to the second half. Every other
/// query, including those to a leftover node when `A` is odd, is ignored.
pub fn semi_cautious_answer(adversary: usize, adversaries: usize, querier: usize, honest: usize) -> Answer {
    let camp = adversaries / 2;
    let first_half = 2 * querier < honest;
    if adversary < camp {
        if first_half {
            Answer::Zero
        } else {
            Answer::Silent
        }
    } else if adversary < 2 * camp {
        if first_half {
            Answer::Silent
        } else {
            Answer::One
        }
    } else {
        Answer::Silent
    }
}

fn median(values: &mut [f64]) -> f64 {
    let len = values.len();
    let mid = len / 2;
    let (_, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if len % 2 == 1 {
        return upper;
    }
    let lower = values[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    0.5 * (lower + upper)
}

/// Maximal-variance answers.
///
/// Queriers are ranked by the η of their honest replies (ties by node
/// index). The adversary picks a split point `s`: every slot of the `s`
/// lowest-ranked queriers is answered `0`, every slot of the others `1`.
/// The final median η is nonincreasing in `s`, so a binary search finds the
/// `s` that puts it nearest to `target`. Returns one answer per slot.
pub fn mvs_answers(queriers: &[Querier], slots: &[Slot], target: f64) -> Vec<Answer> {
    if slots.is_empty() {
        return Vec::new();
    }
    let count = queriers.len();
    let mut extra = vec![0u32; count];
    for s in slots {
        extra[s.querier] += 1;
    }
    let mut order: Vec<usize> = (0..count).collect();
    let key = |i: usize| queriers[i].partial_eta().unwrap_or(0.5);
    order.sort_by(|&i, &j| key(i).total_cmp(&key(j)).then(queriers[i].node.cmp(&queriers[j].node)));
    let mut rank = vec![0usize; count];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }

    let mut buf = Vec::with_capacity(count);
    let mut median_at = |split: usize| -> f64 {
        buf.clear();
        for (i, q) in queriers.iter().enumerate() {
            let replies = q.honest_replies + extra[i];
            if replies == 0 {
                continue;
            }
            let ones = q.honest_ones + if rank[i] >= split { extra[i] } else { 0 };
            buf.push(ones as f64 / replies as f64);
        }
        if buf.is_empty() {
            target
        } else {
            median(&mut buf)
        }
    };

    // Smallest split with median <= target.
    let (mut lo, mut hi) = (0usize, count);
    if median_at(hi) > target {
        lo = hi;
    } else {
        while lo < hi {
            let mid = (lo + hi) / 2;
            if median_at(mid) <= target {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
    }
    let mut split = lo;
    if split > 0 {
        let below = (median_at(split - 1) - target).abs();
        if below < (median_at(split) - target).abs() {
            split -= 1;
        }
    }
    slots
        .iter()
        .map(|s| if rank[s.querier] >= split { Answer::One } else { Answer::Zero })
        .collect()
}

/// Adversarial nodes that never answer.
pub struct NoAdversary;

impl Strategy for NoAdversary {
    fn name(&self) -> &str {
        "none"
    }

    fn threat_class(&self) -> ThreatClass {
        ThreatClass::SemiCautious
    }

    fn answer(&mut self, view: &RoundView<'_>, out: &mut Vec<Answer>) {
        out.extend(view.slots.iter().map(|_| Answer::Silent));
    }
}

/// Inverse vote strategy (cautious).
pub struct Ivs;

impl Strategy for Ivs {
    fn name(&self) -> &str {
        "ivs"
    }

    fn threat_class(&self) -> ThreatClass {
        ThreatClass::Cautious
    }

    fn answer(&mut self, view: &RoundView<'_>, out: &mut Vec<Answer>) {
        let bit = Answer::bit(ivs_answer(view.honest_ones, view.honest));
        out.extend(view.slots.iter().map(|_| bit));
    }
}

/// Maximal variance strategy (berserk).
#[derive(Default)]
pub struct Mvs;

impl Strategy for Mvs {
    fn name(&self) -> &str {
        "mvs"
    }

    fn threat_class(&self) -> ThreatClass {
        ThreatClass::Berserk
    }

    fn answer(&mut self, view: &RoundView<'_>, out: &mut Vec<Answer>) {
        out.extend(mvs_answers(view.queriers, view.slots, view.target));
    }
}

pub struct SemiCautiousSplit;

impl Strategy for SemiCautiousSplit {
    fn name(&self) -> &str {
        "semi_cautious_split"
    }

    fn threat_class(&self) -> ThreatClass {
        ThreatClass::SemiCautious
    }

    fn answer(&mut self, view: &RoundView<'_>, out: &mut Vec<Answer>) {
        out.extend(view.slots.iter().map(|s| {
            semi_cautious_answer(s.adversary, view.adversaries, view.queriers[s.querier].node, view.honest)
        }));
    }
}

/// Always the same bit.
pub struct StaticBit {
    pub bit: u8,
}

impl Strategy for StaticBit {
    fn name(&self) -> &str {
        "static_bit"
    }

    fn threat_class(&self) -> ThreatClass {
        ThreatClass::Cautious
    }

    fn answer(&mut self, view: &RoundView<'_>, out: &mut Vec<Answer>) {
        out.extend(view.slots.iter().map(|_| Answer::bit(self.bit)));
    }
}
