use picbreeder::agents::AgentKind;
use picbreeder::archive::ArchiveView;
use picbreeder::metrics::j1_index_of_parents;
use picbreeder::orchestrator::{
    build_agents, read_session_log, ExperimentConfig, RunControl, Runner,
};
use picbreeder::session::replay;
use picbreeder::{Archive, InnovationRegistry};

fn small(agent: AgentKind, sessions: u64, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        sessions,
        parallel_agents: 4,
        seed,
        agent,
        pop_size: 6,
        generations: 3,
        render_size: 16,
        ..ExperimentConfig::default()
    }
}

fn run(config: &ExperimentConfig) -> Archive {
    let agents = build_agents(config, None).unwrap();
    let mut runner = Runner::new(config.clone(), agents, None).unwrap();
    let summary = runner.run(&RunControl::default()).unwrap();
    assert!(!summary.interrupted);
    assert_eq!(summary.sessions_completed, config.sessions);
    runner.into_archive()
}

#[test]
fn random_runs_are_reproducible() {
    let config = small(AgentKind::Random, 30, 11);
    let a = run(&config);
    let b = run(&config);
    assert_eq!(a.len(), 30);
    assert_eq!(a.content_hash(), b.content_hash());
    let c = run(&ExperimentConfig { seed: 12, ..config });
    assert_ne!(a.content_hash(), c.content_hash());
    for (i, e) in a.entries().iter().enumerate() {
        assert_eq!(e.id.0, i as u64);
        assert!(e.parent_id.is_none_or(|p| p.0 < e.id.0));
    }
    // The first wave sees an empty archive.
    assert!(a.entries()[..4].iter().all(|e| e.parent_id.is_none()));
    j1_index_of_parents(&a.parent_positions()).unwrap();
}

#[test]
fn scripted_runs_are_reproducible() {
    let config = small(AgentKind::Scripted, 12, 5);
    assert_eq!(run(&config).content_hash(), run(&config).content_hash());
}

#[test]
fn interrupted_run_resumes_to_the_same_archive() {
    let config = small(AgentKind::Random, 22, 3);
    let reference = run(&config).content_hash();
    let dir = tempfile::tempdir().unwrap();
    {
        let mut runner = Runner::open(config.clone(), build_agents(&config, None).unwrap(), None, dir.path()).unwrap();
        let summary = runner
            .run(&RunControl {
                stop_at_archive_size: Some(10),
            })
            .unwrap();
        assert!(summary.interrupted);
        assert_eq!(runner.archive().len(), 10);
    }
    let mut runner = Runner::open(config.clone(), build_agents(&config, None).unwrap(), None, dir.path()).unwrap();
    assert_eq!(runner.completed(), 8);
    let summary = runner.run(&RunControl::default()).unwrap();
    assert_eq!(summary.resumed_at, 8);
    assert_eq!(summary.archive_hash, reference);
    let reopened = Archive::open(dir.path()).unwrap();
    assert_eq!(reopened.content_hash(), reference);

    let other = ExperimentConfig { seed: 4, ..config.clone() };
    assert!(Runner::open(other.clone(), build_agents(&other, None).unwrap(), None, dir.path()).is_err());
}

#[test]
fn transcripts_replay() {
    let config = small(AgentKind::Random, 9, 8);
    let dir = tempfile::tempdir().unwrap();
    let mut runner = Runner::open(config.clone(), build_agents(&config, None).unwrap(), None, dir.path()).unwrap();
    runner.run(&RunControl::default()).unwrap();
    let archive = runner.archive().read();
    let registry = InnovationRegistry::new();
    for i in 0..9 {
        let log = read_session_log(dir.path(), i).unwrap();
        assert_eq!(log.entry_id.0, i);
        let parent = log.transcript.origin.parent().map(|p| &archive.get(p).unwrap().genome);
        let genome = replay(&log.transcript, parent, config.session_config(), &registry)
            .unwrap()
            .unwrap();
        assert_eq!(genome.content_hash(), archive.get(log.entry_id).unwrap().genome.content_hash());
    }
}
