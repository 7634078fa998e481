use std::sync::Mutex;
use std::thread;

use super::SimError;
use crate::engine::{IcProgram, ModelState, UpdateDelta};
use crate::rng;
use crate::sched::ScheduleSource;
use crate::store::{ClockDecision, SharedStore, StalenessConfig};

#[derive(Debug, Clone)]
pub struct ThreadedOutput {
    pub state: ModelState,
    /// Clocks at which each worker had to wait.
    pub waits: Vec<u64>,
    /// Largest read staleness any worker saw.
    pub max_staleness: u64,
}

/// Real-thread smoke run: one OS thread per worker against a [`SharedStore`],
/// `iterations` clocks each. Timing follows the host scheduler, so results
/// are not reproducible; use [`run_simulation`](super::run_simulation) for
/// anything that must be.
pub fn run_threaded<P, S>(
    program: &P,
    data: &P::Data,
    schedule: &mut S,
    workers: usize,
    staleness: StalenessConfig,
    iterations: u64,
    seed: u64,
) -> Result<ThreadedOutput, SimError>
where
    P: IcProgram,
    S: ScheduleSource<P::Work> + Send + ?Sized,
{
    if workers == 0 {
        return Err(SimError::Config("need at least one worker".into()));
    }
    let init = program.initial_state(data, seed);
    let store = SharedStore::new(workers, staleness, init.values);
    let schedule = Mutex::new((schedule, Vec::<Vec<P::Work>>::new()));

    let results: Vec<Result<(u64, u64), SimError>> = thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let (store, schedule) = (&store, &schedule);
                scope.spawn(move || -> Result<(u64, u64), SimError> {
                    let mut r = rng::stream(seed, w);
                    let (mut waits, mut max_st) = (0, 0);
                    for clock in 0..iterations {
                        let (view, report) = store.read(w)?;
                        max_st = max_st.max(report.staleness);
                        let work = {
                            let mut g = schedule.lock().unwrap_or_else(|e| e.into_inner());
                            let (src, rounds) = &mut *g;
                            while rounds.len() as u64 <= clock {
                                let c = rounds.len() as u64;
                                let round = src.round(c, &view)?;
                                if round.len() != workers {
                                    return Err(SimError::Config(format!(
                                        "schedule produced {} work units for {workers} workers",
                                        round.len()
                                    )));
                                }
                                rounds.push(round);
                            }
                            rounds[clock as usize][w].clone()
                        };
                        let delta = program.delta_on(&view, data, &work, clock, &mut r);
                        store.commit(w, UpdateDelta::new(delta, clock, w))?;
                        if store.clock(w)? == ClockDecision::Block {
                            waits += 1;
                        }
                    }
                    Ok((waits, max_st))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker thread panicked"))
            .collect()
    });

    let mut waits = Vec::with_capacity(workers);
    let mut max_staleness = 0;
    for r in results {
        let (w, s) = r?;
        waits.push(w);
        max_staleness = max_staleness.max(s);
    }
    let (clock, values) = store.snapshot();
    Ok(ThreadedOutput {
        state: ModelState { values, clock },
        waits,
        max_staleness,
    })
}
