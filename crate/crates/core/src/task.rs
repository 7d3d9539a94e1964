//! The temporal two-arm bandit with motor indirection.
//!
//! Two stimuli, each an (identity, position) pair, are shown with independent
//! onset and offset times inside a 30-step trial. Reward depends only on the
//! identity, but the agent answers with a position.

use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_OPTIONS: usize = 4;
/// Width of one stimulus channel: one-hot identity followed by one-hot position.
pub const CHANNEL_DIM: usize = 2 * N_OPTIONS;
pub const TRIAL_LENGTH: usize = 30;
/// Maximum number of rejection rounds when sampling trial timings.
pub const MAX_SAMPLING_ATTEMPTS: usize = 10_000;

/// Reward attached to identities 1..=4.
pub const REWARDS: [f64; N_OPTIONS] = [1.0, 0.75, 0.5, 0.25];

pub fn reward_of(identity: u8) -> f64 {
    REWARDS[usize::from(identity) - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StimulusSpec {
    pub identity: u8,
    pub position: u8,
    pub onset: usize,
    pub offset: usize,
}

impl StimulusSpec {
    pub fn duration(&self) -> usize {
        self.offset - self.onset
    }

    pub fn active_at(&self, t: usize) -> bool {
        self.onset <= t && t < self.offset
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TrialLine", into = "TrialLine")]
pub struct TrialSpec {
    /// Stimulus with the earliest onset (first on ties).
    pub stim_a: StimulusSpec,
    pub stim_b: StimulusSpec,
    pub t_reward: usize,
    pub length: usize,
}

/// Timing distribution of the trial generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingRanges {
    pub trial_length: usize,
    pub first_onset: usize,
    pub duration: [usize; 2],
    pub gap: [usize; 2],
    /// Latest allowed (exclusive) offset.
    pub max_offset: usize,
}

impl Default for TimingRanges {
    fn default() -> Self {
        TimingRanges {
            trial_length: TRIAL_LENGTH,
            first_onset: 5,
            duration: [5, 20],
            gap: [0, 20],
            max_offset: TRIAL_LENGTH - 1,
        }
    }
}

impl TimingRanges {
    /// Both stimuli on from the first to the last step.
    pub fn no_temporal() -> Self {
        TimingRanges {
            trial_length: TRIAL_LENGTH,
            first_onset: 0,
            duration: [TRIAL_LENGTH, TRIAL_LENGTH],
            gap: [0, 0],
            max_offset: TRIAL_LENGTH,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trial_length == 0 {
            return Err(Error::param("trial_length", "must be at least 1"));
        }
        if self.duration[0] == 0 || self.duration[0] > self.duration[1] {
            return Err(Error::param("duration", format!("bad range {:?}", self.duration)));
        }
        if self.gap[0] > self.gap[1] {
            return Err(Error::param("gap", format!("bad range {:?}", self.gap)));
        }
        if self.max_offset > self.trial_length {
            return Err(Error::param("max_offset", "exceeds trial length"));
        }
        if self.first_onset + self.duration[0] > self.max_offset {
            return Err(Error::param("first_onset", "no stimulus fits before max_offset"));
        }
        Ok(())
    }
}

/// Which answer the agent gives: the position of a stimulus (motor indirection)
/// or its identity directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChoiceMode {
    #[default]
    Position,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    BestFirst,
    BestLast,
    Simultaneous,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::BestFirst => "best_first",
            Scenario::BestLast => "best_last",
            Scenario::Simultaneous => "simultaneous",
        }
    }
}

/// One of the 72 stimulus configurations: identity `identities.k` sits at `positions.k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StimulusPair {
    /// Strictly increasing.
    pub identities: (u8, u8),
    pub positions: (u8, u8),
}

/// All unordered identity pairs crossed with ordered distinct position pairs.
pub fn enumerate_pairs() -> Vec<StimulusPair> {
    let mut pairs = Vec::with_capacity(72);
    for id_a in 1..=4u8 {
        for id_b in (id_a + 1)..=4 {
            for pos_a in 1..=4u8 {
                for pos_b in 1..=4u8 {
                    if pos_a != pos_b {
                        pairs.push(StimulusPair { identities: (id_a, id_b), positions: (pos_a, pos_b) });
                    }
                }
            }
        }
    }
    pairs
}

/// Draws a configuration uniformly from the 72 pairs, orders the two stimuli by a
/// fair coin and samples timings by rejection until they overlap and end in time.
pub fn sample_trial<R: Rng + ?Sized>(rng: &mut R, ranges: &TimingRanges) -> Result<TrialSpec> {
    ranges.validate()?;
    let pairs = enumerate_pairs();
    let pair = pairs[rng.gen_range(0..pairs.len())];
    let (mut first, mut second) = ((pair.identities.0, pair.positions.0), (pair.identities.1, pair.positions.1));
    if rng.gen::<bool>() {
        std::mem::swap(&mut first, &mut second);
    }
    for _ in 0..MAX_SAMPLING_ATTEMPTS {
        let d1 = rng.gen_range(ranges.duration[0]..=ranges.duration[1]);
        let d2 = rng.gen_range(ranges.duration[0]..=ranges.duration[1]);
        let gap = rng.gen_range(ranges.gap[0]..=ranges.gap[1]);
        let on_a = ranges.first_onset;
        let on_b = on_a + gap;
        let (off_a, off_b) = (on_a + d1, on_b + d2);
        if on_b >= off_a || off_a > ranges.max_offset || off_b > ranges.max_offset {
            continue;
        }
        let trial = TrialSpec {
            stim_a: StimulusSpec { identity: first.0, position: first.1, onset: on_a, offset: off_a },
            stim_b: StimulusSpec { identity: second.0, position: second.1, onset: on_b, offset: off_b },
            t_reward: ranges.trial_length - 1,
            length: ranges.trial_length,
        };
        debug_assert!(trial.validate().is_ok());
        return Ok(trial);
    }
    Err(Error::TrialSampling { attempts: MAX_SAMPLING_ATTEMPTS })
}

impl TrialSpec {
    /// Structural invariants: distinct identities and positions, ordered and
    /// overlapping stimuli inside the trial window.
    pub fn validate(&self) -> Result<()> {
        let (a, b) = (&self.stim_a, &self.stim_b);
        for s in [a, b] {
            if !(1..=4).contains(&s.identity) || !(1..=4).contains(&s.position) {
                return Err(Error::InvalidTrial(format!("identity/position out of 1..=4: {s:?}")));
            }
            if s.onset >= s.offset || s.offset > self.length {
                return Err(Error::InvalidTrial(format!("bad stimulus window {}..{}", s.onset, s.offset)));
            }
        }
        if a.identity == b.identity {
            return Err(Error::InvalidTrial("identities must differ".into()));
        }
        if a.position == b.position {
            return Err(Error::InvalidTrial("positions must differ".into()));
        }
        if a.onset > b.onset {
            return Err(Error::InvalidTrial("stim_a must not start after stim_b".into()));
        }
        if b.onset >= a.offset {
            return Err(Error::InvalidTrial("stimuli do not overlap".into()));
        }
        if self.t_reward >= self.length {
            return Err(Error::InvalidTrial("reward time outside the trial".into()));
        }
        Ok(())
    }

    /// `validate` plus the duration and offset limits of a timing distribution.
    pub fn validate_timing(&self, ranges: &TimingRanges) -> Result<()> {
        self.validate()?;
        for s in [&self.stim_a, &self.stim_b] {
            let d = s.duration();
            if d < ranges.duration[0] || d > ranges.duration[1] {
                return Err(Error::InvalidTrial(format!("duration {d} outside {:?}", ranges.duration)));
            }
            if s.offset > ranges.max_offset {
                return Err(Error::InvalidTrial(format!("offset {} beyond {}", s.offset, ranges.max_offset)));
            }
        }
        Ok(())
    }

    /// The higher-reward stimulus.
    pub fn best(&self) -> &StimulusSpec {
        if reward_of(self.stim_a.identity) > reward_of(self.stim_b.identity) {
            &self.stim_a
        } else {
            &self.stim_b
        }
    }

    pub fn stimuli(&self) -> [&StimulusSpec; 2] {
        [&self.stim_a, &self.stim_b]
    }
}

pub fn correct_position(trial: &TrialSpec) -> u8 {
    trial.best().position
}

/// Reward of the stimulus shown at `position`, or 0 if no stimulus is there.
pub fn reward_for_choice(trial: &TrialSpec, position: u8) -> f64 {
    trial
        .stimuli()
        .into_iter()
        .find(|s| s.position == position)
        .map_or(0.0, |s| reward_of(s.identity))
}

/// Index (0-based) of the correct action under `mode`.
pub fn correct_action(trial: &TrialSpec, mode: ChoiceMode) -> usize {
    let best = trial.best();
    match mode {
        ChoiceMode::Position => usize::from(best.position) - 1,
        ChoiceMode::Identity => usize::from(best.identity) - 1,
    }
}

/// Reward for a 0-based action under `mode`; answering with something not on
/// display earns nothing.
pub fn reward_for_action(trial: &TrialSpec, mode: ChoiceMode, action: usize) -> f64 {
    let label = (action + 1) as u8;
    match mode {
        ChoiceMode::Position => reward_for_choice(trial, label),
        ChoiceMode::Identity => trial
            .stimuli()
            .into_iter()
            .find(|s| s.identity == label)
            .map_or(0.0, |s| reward_of(s.identity)),
    }
}

pub fn classify_scenario(trial: &TrialSpec) -> Scenario {
    let best = trial.best();
    let other = if std::ptr::eq(best, &trial.stim_a) { &trial.stim_b } else { &trial.stim_a };
    match best.onset.cmp(&other.onset) {
        std::cmp::Ordering::Less => Scenario::BestFirst,
        std::cmp::Ordering::Greater => Scenario::BestLast,
        std::cmp::Ordering::Equal => Scenario::Simultaneous,
    }
}

/// Per-timestep input of both stimulus channels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialTensor {
    pub channel_a: Vec<[f64; CHANNEL_DIM]>,
    pub channel_b: Vec<[f64; CHANNEL_DIM]>,
}

impl TrialTensor {
    pub fn len(&self) -> usize {
        self.channel_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channel_a.is_empty()
    }
}

fn encode_stimulus(s: &StimulusSpec, length: usize) -> Vec<[f64; CHANNEL_DIM]> {
    (0..length)
        .map(|t| {
            let mut v = [0.0; CHANNEL_DIM];
            if s.active_at(t) {
                v[usize::from(s.identity) - 1] = 1.0;
                v[N_OPTIONS + usize::from(s.position) - 1] = 1.0;
            }
            v
        })
        .collect()
}

/// One-hot identity ⊕ one-hot position per channel while the stimulus is on.
pub fn encode(trial: &TrialSpec) -> TrialTensor {
    TrialTensor {
        channel_a: encode_stimulus(&trial.stim_a, trial.length),
        channel_b: encode_stimulus(&trial.stim_b, trial.length),
    }
}

/// Recovers `(identity, position)` from an active channel vector.
pub fn decode_channel(v: &[f64; CHANNEL_DIM]) -> Option<(u8, u8)> {
    let id = v[..N_OPTIONS].iter().position(|&x| x != 0.0)?;
    let pos = v[N_OPTIONS..].iter().position(|&x| x != 0.0)?;
    Some((id as u8 + 1, pos as u8 + 1))
}

/// Flat on-disk form of a trial (one JSON object per line).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialLine {
    pub id_a: u8,
    pub pos_a: u8,
    pub on_a: usize,
    pub off_a: usize,
    pub id_b: u8,
    pub pos_b: u8,
    pub on_b: usize,
    pub off_b: usize,
}

impl From<TrialSpec> for TrialLine {
    fn from(t: TrialSpec) -> Self {
        TrialLine {
            id_a: t.stim_a.identity,
            pos_a: t.stim_a.position,
            on_a: t.stim_a.onset,
            off_a: t.stim_a.offset,
            id_b: t.stim_b.identity,
            pos_b: t.stim_b.position,
            on_b: t.stim_b.onset,
            off_b: t.stim_b.offset,
        }
    }
}

impl TryFrom<TrialLine> for TrialSpec {
    type Error = Error;

    fn try_from(l: TrialLine) -> Result<Self> {
        let trial = TrialSpec {
            stim_a: StimulusSpec { identity: l.id_a, position: l.pos_a, onset: l.on_a, offset: l.off_a },
            stim_b: StimulusSpec { identity: l.id_b, position: l.pos_b, onset: l.on_b, offset: l.off_b },
            t_reward: TRIAL_LENGTH - 1,
            length: TRIAL_LENGTH,
        };
        trial.validate()?;
        Ok(trial)
    }
}

pub fn write_trials_jsonl<W: Write>(mut out: W, trials: &[TrialSpec]) -> std::io::Result<()> {
    for t in trials {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trials_jsonl<R: BufRead>(input: R) -> std::result::Result<Vec<TrialSpec>, String> {
    let mut trials = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        trials.push(serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?);
    }
    Ok(trials)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn trial(a: (u8, u8, usize, usize), b: (u8, u8, usize, usize)) -> TrialSpec {
        TrialSpec {
            stim_a: StimulusSpec { identity: a.0, position: a.1, onset: a.2, offset: a.3 },
            stim_b: StimulusSpec { identity: b.0, position: b.1, onset: b.2, offset: b.3 },
            t_reward: 29,
            length: 30,
        }
    }

    #[test]
    fn rewards() {
        assert_eq!(reward_of(1), 1.0);
        assert_eq!(reward_of(4), 0.25);
        assert!(REWARDS.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn correct_position_and_empty_choice() {
        let t = trial((2, 1, 5, 15), (3, 4, 8, 20));
        assert_eq!(correct_position(&t), 1);
        assert_eq!(reward_for_choice(&t, 1), 0.75);
        assert_eq!(reward_for_choice(&t, 4), 0.5);
        assert_eq!(reward_for_choice(&t, 2), 0.0);
        assert_eq!(correct_action(&t, ChoiceMode::Identity), 1);
        assert_eq!(reward_for_action(&t, ChoiceMode::Identity, 2), 0.5);
        assert_eq!(reward_for_action(&t, ChoiceMode::Identity, 0), 0.0);
    }

    #[test]
    fn scenarios() {
        assert_eq!(classify_scenario(&trial((1, 1, 5, 15), (2, 2, 10, 20))), Scenario::BestFirst);
        assert_eq!(classify_scenario(&trial((2, 1, 5, 15), (1, 2, 10, 20))), Scenario::BestLast);
        assert_eq!(classify_scenario(&trial((2, 1, 5, 15), (1, 2, 5, 20))), Scenario::Simultaneous);
    }

    #[test]
    fn fixed_timings() {
        let t = trial((1, 2, 5, 15), (3, 4, 5, 15));
        assert!(t.validate_timing(&TimingRanges::default()).is_ok());
        let disjoint = trial((1, 2, 5, 10), (3, 4, 25, 29));
        assert!(disjoint.validate().is_err());
    }

    #[test]
    fn encoding() {
        let t = trial((2, 3, 5, 15), (1, 4, 8, 20));
        let enc = encode(&t);
        assert_eq!(enc.len(), 30);
        assert_eq!(enc.channel_a[5], [0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(enc.channel_a[4], [0.0; 8]);
        assert_eq!(enc.channel_a[15], [0.0; 8]);
        let bits: f64 = enc.channel_a.iter().flatten().sum();
        assert_eq!(bits, 2.0 * 10.0);
        assert_eq!(decode_channel(&enc.channel_b[10]), Some((1, 4)));
        assert_eq!(decode_channel(&enc.channel_b[0]), None);
    }

    #[test]
    fn sampler_rejects_impossible_ranges() {
        let ranges = TimingRanges { gap: [20, 20], duration: [5, 5], ..Default::default() };
        let mut rng = stream(1, "t");
        assert!(matches!(sample_trial(&mut rng, &ranges), Err(Error::TrialSampling { attempts: 10_000 })));
    }

    #[test]
    fn zero_gap_equal_durations() {
        let ranges = TimingRanges { gap: [0, 0], duration: [10, 10], ..Default::default() };
        let t = sample_trial(&mut stream(3, "t"), &ranges).unwrap();
        assert_eq!((t.stim_a.onset, t.stim_a.offset), (5, 15));
        assert_eq!((t.stim_b.onset, t.stim_b.offset), (5, 15));
    }

    #[test]
    fn jsonl_roundtrip() {
        let mut rng = stream(4, "t");
        let trials: Vec<_> = (0..5).map(|_| sample_trial(&mut rng, &TimingRanges::default()).unwrap()).collect();
        let mut buf = Vec::new();
        write_trials_jsonl(&mut buf, &trials).unwrap();
        let first = String::from_utf8(buf.clone()).unwrap();
        let first = first.lines().next().unwrap();
        let keys: serde_json::Value = serde_json::from_str(first).unwrap();
        assert_eq!(keys.as_object().unwrap().len(), 8);
        assert!(keys.get("id_a").is_some() && keys.get("off_b").is_some());
        assert_eq!(read_trials_jsonl(&buf[..]).unwrap(), trials);
        assert!(read_trials_jsonl(&b"{\"id_a\":1}\n"[..]).is_err());
    }
}
