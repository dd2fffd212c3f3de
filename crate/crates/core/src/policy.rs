//! Low-level placement decisions: given a bin and a rotated item size, pick a
//! position action.
//!
//! The default policy is a deterministic greedy maximizer of the edge-contact
//! reward. An adapter for external policies speaking a line protocol over a
//! child process's standard streams is provided; externally returned actions
//! are re-validated against the feasibility mask and never trusted.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::grid::{GridBin, PositionAction, RotatedSize};

pub const DEFAULT_EXTERNAL_TIMEOUT: Duration = Duration::from_millis(500);

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("external policy timed out after {0:?}")]
    Timeout(Duration),
    #[error("malformed reply from external policy: {0:?}")]
    Malformed(String),
    #[error("external policy stream closed")]
    Closed,
    #[error("external policy io: {0}")]
    Io(#[from] io::Error),
}

/// How to break ties among equally rewarded anchors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieBreakRule {
    /// Lowest row-wise action index wins. Fully deterministic.
    SmallestIndex,
    /// Uniform choice among tied anchors from a stream seeded with the value.
    SeededRandom(u64),
}

/// A placement decision: the chosen action and its edge-contact reward
/// (zero for the no-position action).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyDecision {
    pub action: PositionAction,
    pub score: u32,
}

fn best_scored_anchors(bin: &GridBin, size: RotatedSize) -> (Vec<PositionAction>, u32) {
    let mask = bin.feasibility_mask(size);
    let mut best = 0u32;
    let mut ties: Vec<PositionAction> = Vec::new();
    for action in mask.feasible_actions() {
        let x = (action.0 % u32::from(bin.width())) as u16;
        let y = (action.0 / u32::from(bin.width())) as u16;
        let score = bin.edge_contact_unchecked(x, y, size);
        if ties.is_empty() || score > best {
            best = score;
            ties.clear();
            ties.push(action);
        } else if score == best {
            ties.push(action);
        }
    }
    (ties, best)
}

/// Argmax of the edge-contact reward over all feasible anchors, ties broken
/// by `rule`. Returns the no-position action with score 0 when nothing fits.
///
/// `SeededRandom` draws from a fresh stream each call, so the function stays
/// deterministic in its inputs.
pub fn greedy_place(bin: &GridBin, size: RotatedSize, rule: TieBreakRule) -> PolicyDecision {
    match rule {
        TieBreakRule::SmallestIndex => {
            let (ties, best) = best_scored_anchors(bin, size);
            match ties.first() {
                Some(action) => PolicyDecision {
                    action: *action,
                    score: best,
                },
                None => PolicyDecision {
                    action: PositionAction::no_position(bin.width(), bin.height()),
                    score: 0,
                },
            }
        }
        TieBreakRule::SeededRandom(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            greedy_place_with_rng(bin, size, &mut rng)
        }
    }
}

/// Greedy argmax with random tie-breaking drawn from a caller-owned stream.
/// One `gen_range` draw is consumed per decision that has a feasible anchor.
pub fn greedy_place_with_rng<R: Rng>(
    bin: &GridBin,
    size: RotatedSize,
    rng: &mut R,
) -> PolicyDecision {
    let (ties, best) = best_scored_anchors(bin, size);
    if ties.is_empty() {
        return PolicyDecision {
            action: PositionAction::no_position(bin.width(), bin.height()),
            score: 0,
        };
    }
    let pick = rng.gen_range(0..ties.len());
    PolicyDecision {
        action: ties[pick],
        score: best,
    }
}

/// A placement decision source for the search layer.
///
/// Decisions must be feasible under the current mask or be the no-position
/// action; the search re-validates either way.
pub trait PlacementPolicy {
    fn decide(&mut self, bin: &GridBin, size: RotatedSize) -> Result<PolicyDecision, PolicyError>;

    /// Whether identical inputs always produce identical decisions. Repack
    /// sweeps stop re-running once a deterministic policy stops improving.
    fn is_deterministic(&self) -> bool {
        true
    }
}

/// The greedy edge-contact maximizer.
///
/// Under `SeededRandom` the policy keeps one stream across calls, so repeated
/// searches over the same state can diversify tie choices while the whole run
/// stays reproducible from the seed.
pub struct GreedyPolicy {
    rule: TieBreakRule,
    rng: Option<ChaCha8Rng>,
}

impl GreedyPolicy {
    pub fn new(rule: TieBreakRule) -> Self {
        let rng = match rule {
            TieBreakRule::SmallestIndex => None,
            TieBreakRule::SeededRandom(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        };
        GreedyPolicy { rule, rng }
    }

    pub fn rule(&self) -> TieBreakRule {
        self.rule
    }
}

impl PlacementPolicy for GreedyPolicy {
    fn decide(&mut self, bin: &GridBin, size: RotatedSize) -> Result<PolicyDecision, PolicyError> {
        Ok(match &mut self.rng {
            None => greedy_place(bin, size, TieBreakRule::SmallestIndex),
            Some(rng) => greedy_place_with_rng(bin, size, rng),
        })
    }

    fn is_deterministic(&self) -> bool {
        matches!(self.rule, TieBreakRule::SmallestIndex)
    }
}

/// Interior occupancy packed row-wise into hex: anchor-index bit `j` is bit
/// `3 - j % 4` of hex digit `j / 4`; the last digit is zero-padded.
pub fn occupancy_hex(bin: &GridBin) -> String {
    let bits = bin.interior_bits();
    let mut out = String::with_capacity(bits.len() / 4 + 1);
    for chunk in bits.chunks(4) {
        let mut nibble = 0u8;
        for (i, b) in chunk.iter().enumerate() {
            nibble |= b << (3 - i);
        }
        out.push(char::from_digit(u32::from(nibble), 16).unwrap());
    }
    out
}

/// Connection to an external policy process speaking the line protocol
/// `QUERY W H lx ly <hex occupancy>` -> `ACT <idx>`.
///
/// Requests are serialized: one in-flight query per handle. Replies are read
/// on a dedicated thread so the timeout can be enforced.
pub struct ExternalPolicyHandle {
    writer: Box<dyn Write + Send>,
    replies: mpsc::Receiver<io::Result<String>>,
    timeout: Duration,
    child: Option<Child>,
    /// Replies that failed mask validation and were coerced to the greedy
    /// fallback.
    pub infeasible_replies: u64,
}

impl ExternalPolicyHandle {
    /// Wraps raw streams; `reader` is drained line by line on a background
    /// thread.
    pub fn from_streams(
        writer: Box<dyn Write + Send>,
        reader: Box<dyn Read + Send>,
        timeout: Duration,
    ) -> Self {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let buf = BufReader::new(reader);
            for line in buf.lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        ExternalPolicyHandle {
            writer,
            replies: rx,
            timeout,
            child: None,
            infeasible_replies: 0,
        }
    }

    /// Spawns `cmd` with piped stdio and speaks the protocol over it.
    pub fn spawn(cmd: &mut Command, timeout: Duration) -> io::Result<Self> {
        let mut child = cmd.stdin(Stdio::piped()).stdout(Stdio::piped()).spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut handle =
            ExternalPolicyHandle::from_streams(Box::new(stdin), Box::new(stdout), timeout);
        handle.child = Some(child);
        Ok(handle)
    }

    fn query_action(
        &mut self,
        bin: &GridBin,
        size: RotatedSize,
    ) -> Result<PositionAction, PolicyError> {
        writeln!(
            self.writer,
            "QUERY {} {} {} {} {}",
            bin.width(),
            bin.height(),
            size.lx,
            size.ly,
            occupancy_hex(bin)
        )?;
        self.writer.flush()?;
        let line = match self.replies.recv_timeout(self.timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => return Err(PolicyError::Io(e)),
            Err(mpsc::RecvTimeoutError::Timeout) => return Err(PolicyError::Timeout(self.timeout)),
            Err(mpsc::RecvTimeoutError::Disconnected) => return Err(PolicyError::Closed),
        };
        let idx = line
            .strip_prefix("ACT ")
            .and_then(|rest| rest.trim().parse::<u32>().ok())
            .ok_or_else(|| PolicyError::Malformed(line.clone()))?;
        if idx > bin.cell_count() {
            return Err(PolicyError::Malformed(line));
        }
        Ok(PositionAction(idx))
    }
}

impl Drop for ExternalPolicyHandle {
    fn drop(&mut self) {
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Queries the endpoint and validates the reply against the feasibility mask.
///
/// A feasible reply is scored and returned as-is. An infeasible reply
/// (including a no-position claim while space is available) is coerced to the
/// greedy fallback and counted on the handle. Timeouts, malformed replies,
/// and closed streams surface as distinct errors.
pub fn external_policy_query(
    bin: &GridBin,
    size: RotatedSize,
    handle: &mut ExternalPolicyHandle,
) -> Result<PolicyDecision, PolicyError> {
    let action = handle.query_action(bin, size)?;
    let mask = bin.feasibility_mask(size);
    if mask.allows(action) {
        let score = if action.is_no_position(bin.width(), bin.height()) {
            0
        } else {
            let x = (action.0 % u32::from(bin.width())) as u16;
            let y = (action.0 / u32::from(bin.width())) as u16;
            bin.edge_contact_unchecked(x, y, size)
        };
        return Ok(PolicyDecision { action, score });
    }
    handle.infeasible_replies += 1;
    eprintln!(
        "external policy returned infeasible action {} for size {}x{}; using greedy fallback",
        action.0, size.lx, size.ly
    );
    Ok(greedy_place(bin, size, TieBreakRule::SmallestIndex))
}

/// [`PlacementPolicy`] adapter over an external endpoint.
pub struct ExternalPolicy {
    pub handle: ExternalPolicyHandle,
}

impl PlacementPolicy for ExternalPolicy {
    fn decide(&mut self, bin: &GridBin, size: RotatedSize) -> Result<PolicyDecision, PolicyError> {
        external_policy_query(bin, size, &mut self.handle)
    }

    fn is_deterministic(&self) -> bool {
        false
    }
}
