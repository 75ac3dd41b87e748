//! Property tests over scenes, instructions, reports and whole episodes.

mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tabletop::harness::{run_campaign, CampaignConfig, MonitorKind, Terminal};
use tabletop::instr::{
    self, parse_instruction, render_instruction, ContainerRef, Destination, ObjectDescriptor, Relation,
    SimpleDescriptor, SkillInstruction,
};
use tabletop::monitor::{parse_report, render_report, ExecAnswer, MonitorReport, NoiseModel, PerturbAnswer};
use tabletop::perturb::Scenario;
use tabletop::planner::{Decision, PlannerKind};
use tabletop::promptkit::parse_completion;
use tabletop::tasks::{self, TaskKind};
use tabletop::world::{Category, Color, Good, Location, ObjectSpec, Region, StandSlot, WorkspaceState};

fn color() -> impl Strategy<Value = Color> {
    prop::sample::select(Color::ALL.to_vec())
}

fn region() -> impl Strategy<Value = Region> {
    prop::sample::select(Region::ALL.to_vec())
}

fn item_category() -> impl Strategy<Value = Category> {
    prop_oneof![
        Just(Category::Block),
        Just(Category::Bowl),
        prop::sample::select(Good::ALL.to_vec()).prop_map(Category::Good),
    ]
}

fn container() -> impl Strategy<Value = SimpleDescriptor> {
    prop_oneof![
        prop::option::of(color()).prop_map(|color| SimpleDescriptor { color, category: Category::Bowl }),
        Just(SimpleDescriptor { color: Some(Color::Brown), category: Category::Box }),
    ]
}

fn descriptor() -> impl Strategy<Value = ObjectDescriptor> {
    let relation = prop_oneof![
        Just(None),
        container().prop_map(|c| Some(Relation::In(c))),
        Just(Some(Relation::On(SimpleDescriptor { color: None, category: Category::Stand }))),
    ];
    (item_category(), prop::option::of(color()), relation, prop::option::of(region())).prop_map(
        |(category, color, relation, region)| {
            let color = if matches!(category, Category::Good(_)) { None } else { color };
            ObjectDescriptor { color, category, relation, region }
        },
    )
}

fn destination() -> impl Strategy<Value = Destination> {
    prop_oneof![
        (container(), prop::option::of(region())).prop_map(|(c, region)| Destination::Container(ContainerRef {
            color: c.color,
            category: c.category,
            region
        })),
        prop::sample::select(StandSlot::ALL.to_vec())
            .prop_map(|s| Destination::StandSlot { layer: s.layer, slot: s.slot }),
        region().prop_map(|region| Destination::Table { region }),
        Just(Destination::Trash),
    ]
}

fn instruction() -> impl Strategy<Value = SkillInstruction> {
    (descriptor(), destination()).prop_map(|(pick, dest)| SkillInstruction { pick, dest })
}

fn spec_strategy() -> impl Strategy<Value = ObjectSpec> {
    prop_oneof![
        color().prop_map(ObjectSpec::block),
        color().prop_map(ObjectSpec::bowl),
        prop::sample::select(Good::ALL.to_vec()).prop_map(ObjectSpec::good),
    ]
}

fn location() -> impl Strategy<Value = Location> {
    prop_oneof![
        region().prop_map(|region| Location::Table { region }),
        (color(), region()).prop_map(|(c, region)| Location::In { container: ObjectSpec::bowl(c), region }),
        region().prop_map(|region| Location::In { container: ObjectSpec::brown_box(), region }),
        prop::sample::select(StandSlot::ALL.to_vec()).prop_map(|s| Location::Stand { layer: s.layer, slot: s.slot }),
        Just(Location::Trash),
    ]
}

fn answer() -> impl Strategy<Value = PerturbAnswer> {
    prop_oneof![
        (spec_strategy(), location()).prop_map(|(object, at)| PerturbAnswer::Added { object, at }),
        (spec_strategy(), location()).prop_map(|(object, at)| PerturbAnswer::Removed { object, at }),
        (spec_strategy(), location(), location())
            .prop_filter("a move changes place", |(_, a, b)| a != b && *b != Location::Trash)
            .prop_map(|(object, from, to)| PerturbAnswer::Moved { object, from, to }),
    ]
}

fn report() -> impl Strategy<Value = MonitorReport> {
    let r1 = prop_oneof![
        Just(ExecAnswer::Succeeded),
        prop::option::of(region()).prop_map(|dropped_at| ExecAnswer::Failed { dropped_at }),
    ];
    (1usize..40, r1, prop::collection::vec(answer(), 0..4)).prop_map(|(step, r1, r2)| {
        let r2 = if r2.is_empty() { vec![PerturbAnswer::None] } else { r2 };
        MonitorReport { step, r1, r2 }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn instructions_round_trip(i in instruction()) {
        let text = render_instruction(&i);
        prop_assert_eq!(parse_instruction(&text), Ok(i));
        prop_assert_eq!(parse_instruction(&text.to_uppercase()), Ok(i));
        prop_assert_eq!(parse_completion(&text).unwrap(), Decision::skill(i));
    }

    #[test]
    fn parser_never_panics(text in ".{0,80}") {
        let _ = parse_instruction(&text);
        let _ = parse_completion(&text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn reports_round_trip(r in report()) {
        prop_assert_eq!(parse_report(r.step, &render_report(&r)).unwrap(), r);
    }

    #[test]
    fn scenes_round_trip_through_text(seed in 0u64..10_000) {
        let s = common::random_scene(seed);
        let text = s.canonical_text();
        let back: WorkspaceState = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(back.state_hash(), s.state_hash());
        prop_assert!(s.validate().is_ok());
    }

    #[test]
    fn denotation_matches_brute_force(seed in 0u64..100_000) {
        let state = common::random_scene(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..5 {
            let d = common::random_descriptor(&state, &mut rng);
            prop_assert_eq!(instr::denotation(&d, &state), common::oracle_denotation(&d, &state));
        }
    }

    #[test]
    fn minimal_descriptors_ground_back(seed in 0u64..100_000) {
        let state = common::random_scene(seed);
        for o in state.available().filter(|o| !o.category.is_fixture()) {
            match instr::minimal_unique_descriptor(o.id, &state) {
                Ok(d) => {
                    prop_assert_eq!(instr::ground(&d, &state), Ok(o.id));
                    // nothing shorter in the same order would do
                    if d.region.is_some() {
                        let shorter = ObjectDescriptor { region: None, ..d };
                        prop_assert!(common::oracle_denotation(&shorter, &state).len() > 1);
                    }
                }
                // a twin, or a loose object shadowed by a boxed lookalike
                Err(instr::GroundError::NotDistinguishable(_)) => {}
                Err(e) => prop_assert!(false, "{e}"),
            }
            let d = instr::describe(o.id, &state).unwrap();
            let got = instr::ground_any(&d, &state).unwrap();
            prop_assert!(got == o.id || instr::interchangeable(&state, got, o.id));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Under a perfect monitor every injected change is reported exactly
    /// once and the layered planner's picture never drifts from the scene.
    #[test]
    fn oracle_campaigns_report_every_change(
        task in prop::sample::select(TaskKind::ALL.to_vec()),
        scenario in prop::sample::select(Scenario::ALL.to_vec()),
        seed in 0u64..1000,
        p in prop_oneof![Just(0.0), Just(0.2), Just(0.5)],
    ) {
        let c = CampaignConfig { task, scenario, seed, failure_prob: p, episodes: 4, ..Default::default() };
        let r = run_campaign(&c).unwrap();
        prop_assert_eq!(r.summary.violations, 0);
        for rec in &r.records {
            for s in &rec.steps {
                let report = s.report.as_ref().unwrap();
                let entries = report.perturbations().count();
                let changes: usize = s.events.iter().map(|e| match &e.payload {
                    tabletop::perturb::Payload::Dis { moves } => moves.len(),
                    _ => 1,
                }).sum();
                prop_assert_eq!(entries, changes);
                prop_assert_ne!(s.belief_matches, Some(false));
            }
            prop_assert!(rec.steps_taken <= tabletop::harness::step_budget(rec.nominal_len));
            if rec.terminal == Terminal::Done {
                prop_assert!(rec.goal_satisfied);
            }
        }
        if scenario.is_removal() {
            let c = r.summary.confusion.unwrap();
            prop_assert_eq!(c.total(), 4);
            prop_assert_eq!(c.fn_ + c.fp, 0);
        } else {
            prop_assert_eq!(r.summary.sr, Some(1.0));
        }
    }

    /// Any noise level still ends every episode within its budget.
    #[test]
    fn noisy_campaigns_terminate(
        task in prop::sample::select(TaskKind::ALL.to_vec()),
        scenario in prop::sample::select(Scenario::ALL.to_vec()),
        planner in prop::sample::select(PlannerKind::ALL.to_vec()),
        e1 in 0.0..1.0f64, e2 in 0.0..1.0f64, e3 in 0.0..1.0f64,
        seed in 0u64..1000,
    ) {
        let c = CampaignConfig {
            task, scenario, planner, seed, episodes: 3,
            monitor: MonitorKind::Noisy,
            noise: NoiseModel { flip_exec: e1, miss_perturb: e2, hallucinate: e3 },
            ..Default::default()
        };
        let r = run_campaign(&c).unwrap();
        for rec in &r.records {
            prop_assert!(rec.steps_taken <= tabletop::harness::step_budget(rec.nominal_len));
            prop_assert_eq!(rec.steps.iter().filter(|s| s.outcome.is_some()).count(), rec.steps_taken);
        }
        if let Some(sr) = r.summary.sr {
            prop_assert!((0.0..=1.0).contains(&sr));
        }
    }
}

#[test]
fn decisions_survive_reply_round_trip() {
    let i = parse_instruction("put the red block in the red bowl into the trash can").unwrap();
    for d in [Decision::Done, Decision::Alert, Decision::skill(i)] {
        assert_eq!(parse_completion(&d.to_string()).unwrap(), d);
    }
}

#[test]
fn nominal_plans_solve_every_task() {
    for task in TaskKind::ALL {
        for seed in 0..50 {
            let c = CampaignConfig { task, seed, ..Default::default() };
            let spec = c.episode_spec(0).unwrap();
            let mut s = spec.initial.clone();
            for i in spec.nominal_plan().unwrap() {
                let (o, p) = instr::resolve(&i, &s).unwrap();
                s = s.place_object(o, p).unwrap();
            }
            assert!(tasks::goal_satisfied(&s, &spec.goal), "{} seed {seed}", task.name());
        }
    }
}
