//! Acceptance suite: every release gate runs here, one test per criterion,
//! each printing a pass line with its measured runtime (run with
//! `cargo test --test acceptance -- --nocapture` to see them).

mod common;

use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stoch_abstract::abstraction::{
    build_abstraction, membership, transition_bounds, Abstraction, IntervalRow, ModelClass, Row,
    SetRow, TransitionBounds,
};
use stoch_abstract::config::{RunConfig, Setup};
use stoch_abstract::fixtures;
use stoch_abstract::geometry::Cluster;
use stoch_abstract::lp::{solve, ConstraintOp, LinearProgram, LpOutcome, Sense};
use stoch_abstract::synthesis::{inner_min, rdp, ReachAvoidSpec, SynthesisResult};
use stoch_abstract::validation::{monte_carlo, McConfig};

fn desk_config() -> RunConfig {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/desk2d.json");
    let text = std::fs::read_to_string(path).expect("desk benchmark config");
    RunConfig::from_json(&text).expect("valid desk config")
}

struct ClassRun {
    class: ModelClass,
    result: SynthesisResult,
    t_abs: f64,
    t_syn: f64,
}

struct DeskRun {
    setup: Setup,
    spec: ReachAvoidSpec,
    runs: Vec<ClassRun>,
    build_seconds: f64,
}

impl DeskRun {
    fn class(&self, class: ModelClass) -> &ClassRun {
        self.runs.iter().find(|r| r.class == class).unwrap()
    }

    fn e_avg(&self, class: ModelClass) -> f64 {
        let r = &self.class(class).result;
        let nt = self.setup.partition.non_terminal_indices();
        nt.iter().map(|&s| r.p_upper[s] - r.p_lower[s]).sum::<f64>() / nt.len() as f64
    }
}

static DESK: OnceLock<DeskRun> = OnceLock::new();

/// All four classes on the desk benchmark, abstractions and synthesis
/// timed, shared across the criteria that compare them.
fn desk() -> &'static DeskRun {
    DESK.get_or_init(|| {
        let start = Instant::now();
        let cfg = desk_config();
        let setup = Setup::build(&cfg).unwrap();
        let spec = ReachAvoidSpec::from_partition(&setup.partition, cfg.horizon);
        let runs = ModelClass::ALL
            .iter()
            .map(|&class| {
                let cover = match class {
                    ModelClass::TwoImdp | ModelClass::Mimdp => {
                        Some(setup.coarse_cover.as_slice())
                    }
                    _ => None,
                };
                let t0 = Instant::now();
                let abs = build_abstraction(
                    &setup.system,
                    &setup.partition,
                    &setup.noise_partition,
                    class,
                    cover,
                )
                .unwrap();
                let t_abs = t0.elapsed().as_secs_f64();
                let t1 = Instant::now();
                let result = rdp(&abs, &spec).unwrap();
                let t_syn = t1.elapsed().as_secs_f64();
                assert!(result.converged, "{class} did not converge");
                ClassRun { class, result, t_abs, t_syn }
            })
            .collect();
        DeskRun { setup, spec, runs, build_seconds: start.elapsed().as_secs_f64() }
    })
}

fn example1_models() -> (Abstraction, Abstraction, Abstraction, Abstraction) {
    let sys = stoch_abstract::system::example1();
    let part = fixtures::example1_partition();
    let noise = fixtures::example1_noise_partition();
    let cover = fixtures::example1_coarse_cover();
    (
        build_abstraction(&sys, &part, &noise, ModelClass::Imdp, None).unwrap(),
        build_abstraction(&sys, &part, &noise, ModelClass::TwoImdp, Some(&cover)).unwrap(),
        build_abstraction(&sys, &part, &noise, ModelClass::Mimdp, None).unwrap(),
        build_abstraction(&sys, &part, &noise, ModelClass::Smdp, None).unwrap(),
    )
}

#[test]
fn criterion_01_worked_example_transition_structure() {
    let start = Instant::now();
    let sys = stoch_abstract::system::example1();
    let part = fixtures::example1_partition();
    let noise = fixtures::example1_noise_partition();

    for i in 0..6 {
        let b =
            transition_bounds(&sys, &part, &noise, 0, 0, &Cluster::new(vec![i]).unwrap())
                .unwrap();
        assert_eq!(b.lower, 0.0, "singleton lower of region {i}");
    }
    let b = transition_bounds(&sys, &part, &noise, 0, 0, &Cluster::new(vec![0]).unwrap())
        .unwrap();
    assert!((b.upper - 0.2).abs() <= 1e-12, "upper to first region = {}", b.upper);

    let smdp = build_abstraction(&sys, &part, &noise, ModelClass::Smdp, None).unwrap();
    match smdp.row(0, 0) {
        Row::Set(r) => {
            assert_eq!(r.entries.len(), 5);
            for (i, (q, mass)) in r.entries.iter().enumerate() {
                assert_eq!(q.members(), &[i, i + 1], "cluster {i}");
                assert!((mass - 0.2).abs() <= 1e-12, "mass {i} = {mass}");
            }
        }
        _ => panic!("expected a set-valued row"),
    }
    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 1.0, "took {dt:.3}s");
    println!("ACCEPTANCE 1 PASS ({dt:.3}s): worked-example bounds and set-valued row exact");
}

#[test]
fn criterion_02_separation_witnesses() {
    let start = Instant::now();
    let (imdp, twoi, mimdp, smdp) = example1_models();

    let g_imdp = [0.2, 0.4, 0.4, 0.0, 0.0, 0.0, 0.0];
    assert!(membership(&imdp, 0, 0, &g_imdp).unwrap());
    assert!(!membership(&twoi, 0, 0, &g_imdp).unwrap());

    let g_2imdp = [0.0, 0.4, 0.4, 0.0, 0.0, 0.2, 0.0];
    assert!(membership(&twoi, 0, 0, &g_2imdp).unwrap());
    assert!(!membership(&mimdp, 0, 0, &g_2imdp).unwrap());
    assert!(!membership(&smdp, 0, 0, &g_2imdp).unwrap());

    // refined partition: the third region is split
    let sys = stoch_abstract::system::example1();
    let part3 = fixtures::example3_partition();
    let noise = fixtures::example1_noise_partition();
    let mimdp3 = build_abstraction(&sys, &part3, &noise, ModelClass::Mimdp, None).unwrap();
    let smdp3 = build_abstraction(&sys, &part3, &noise, ModelClass::Smdp, None).unwrap();
    let g_mimdp = [0.2, 0.0, 0.2, 0.4, 0.0, 0.2, 0.0, 0.0];
    assert!(membership(&mimdp3, 0, 0, &g_mimdp).unwrap());
    assert!(!membership(&smdp3, 0, 0, &g_mimdp).unwrap());

    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 1.0, "took {dt:.3}s");
    println!("ACCEPTANCE 2 PASS ({dt:.3}s): class-separation witnesses behave exactly");
}

/// Build the three interval-class rows derived from one set-valued
/// structure, mirroring the construction formulas on raw index sets.
fn rows_from_structure(
    structure: &[(Vec<usize>, f64)],
    n: usize,
    cover: &[Vec<usize>],
) -> (Abstraction, Abstraction, Abstraction) {
    let clusters: Vec<(Cluster, f64)> = structure
        .iter()
        .map(|(m, w)| (Cluster::new(m.clone()).unwrap(), *w))
        .collect();
    let bounds_for = |target: &Cluster| {
        let mut lo = 0.0;
        let mut up = 0.0;
        for (q, w) in &clusters {
            if q.subset_of(target) {
                lo += w;
            }
            if q.intersects(target) {
                up += w;
            }
        }
        TransitionBounds { lower: lo, upper: up }
    };
    let mut singles: Vec<(usize, TransitionBounds)> = Vec::new();
    for i in 0..n {
        let b = bounds_for(&Cluster::new(vec![i]).unwrap());
        if b.upper > 0.0 {
            singles.push((i, b));
        }
    }
    let mut informed: Vec<(Cluster, TransitionBounds)> = Vec::new();
    for (q, _) in &clusters {
        if q.len() > 1 && !informed.iter().any(|(c, _)| c == q) {
            informed.push((q.clone(), bounds_for(q)));
        }
    }
    let cover_rows: Vec<(Cluster, TransitionBounds)> = cover
        .iter()
        .map(|m| {
            let c = Cluster::new(m.clone()).unwrap();
            let b = bounds_for(&c);
            (c, b)
        })
        .filter(|(_, b)| b.upper > 0.0)
        .collect();

    let make = |class: ModelClass, clusters: Vec<(Cluster, TransitionBounds)>| {
        let mut rows =
            vec![Row::Interval(IntervalRow { singletons: singles.clone(), clusters })];
        for s in 1..n {
            rows.push(Row::Interval(IntervalRow {
                singletons: vec![(s, TransitionBounds { lower: 1.0, upper: 1.0 })],
                clusters: vec![],
            }));
        }
        Abstraction {
            class,
            num_states: n,
            avoid_index: n - 1,
            action_labels: vec!["a".into()],
            rows,
        }
    };
    (
        make(ModelClass::Imdp, vec![]),
        make(ModelClass::TwoImdp, cover_rows),
        make(ModelClass::Mimdp, informed),
    )
}

#[test]
fn criterion_03_ambiguity_containment_chain() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let rows = 24;
    let draws = 1000;
    let mut checked = 0usize;
    for _ in 0..rows {
        let n = rng.gen_range(6..=12);
        let n_cells = rng.gen_range(3..=8);
        let structure = common::random_row_structure(&mut rng, n, n_cells);
        // random contiguous non-overlapping cover
        let mut cover: Vec<Vec<usize>> = Vec::new();
        let mut at = 0;
        while at < n {
            let len = rng.gen_range(1..=3).min(n - at);
            cover.push((at..at + len).collect());
            at += len;
        }
        let (imdp, twoi, mimdp) = rows_from_structure(&structure, n, &cover);
        for _ in 0..draws {
            // sample a feasible set-valued distribution via conditionals
            let mut gamma = vec![0.0; n];
            for (members, mass) in &structure {
                let theta = common::random_simplex(&mut rng, members.len());
                for (k, &i) in members.iter().enumerate() {
                    gamma[i] += theta[k] * mass;
                }
            }
            assert!(
                membership(&mimdp, 0, 0, &gamma).unwrap(),
                "multi-interval membership failed for a feasible distribution"
            );
            assert!(membership(&twoi, 0, 0, &gamma).unwrap());
            assert!(membership(&imdp, 0, 0, &gamma).unwrap());
            checked += 1;
        }
    }
    let dt = start.elapsed().as_secs_f64();
    assert_eq!(checked, rows * draws);
    assert!(dt < 30.0, "took {dt:.3}s");
    println!(
        "ACCEPTANCE 3 PASS ({dt:.3}s): {checked} sampled set-valued distributions \
         inside all interval-class ambiguity sets"
    );
}

#[test]
fn criterion_04_inner_solver_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);

    // set-valued closed form vs transportation linear program
    for trial in 0..100 {
        let n = rng.gen_range(4..=10);
        let n_cells = rng.gen_range(2..=7);
        let structure = common::random_row_structure(&mut rng, n, n_cells);
        let p: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let row = Row::Set(SetRow {
            entries: structure
                .iter()
                .map(|(m, w)| (Cluster::new(m.clone()).unwrap(), *w))
                .collect(),
        });
        let abs = Abstraction {
            class: ModelClass::Smdp,
            num_states: n,
            avoid_index: n - 1,
            action_labels: vec!["a".into()],
            rows: std::iter::once(row)
                .chain((1..n).map(|s| {
                    Row::Set(SetRow {
                        entries: vec![(Cluster::new(vec![s]).unwrap(), 1.0)],
                    })
                }))
                .collect(),
        };
        let (closed_form, _) = inner_min(&abs, 0, 0, &p).unwrap();

        // transportation program over z[c][i] = theta_c(i) * mass_c
        let nvars: usize = structure.iter().map(|(m, _)| m.len()).sum();
        let mut obj = Vec::with_capacity(nvars);
        for (members, _) in &structure {
            for &i in members {
                obj.push(p[i]);
            }
        }
        let mut lp = LinearProgram::new(obj);
        let mut offset = 0;
        for (members, mass) in &structure {
            let mut coeffs = vec![0.0; nvars];
            for k in 0..members.len() {
                coeffs[offset + k] = 1.0;
            }
            lp.constrain(coeffs, ConstraintOp::Eq, *mass);
            offset += members.len();
        }
        let lp_value = match solve(&lp, Sense::Min).unwrap() {
            LpOutcome::Optimal { value, .. } => value,
            other => panic!("trial {trial}: {other:?}"),
        };
        assert!(
            (closed_form - lp_value).abs() < 1e-8,
            "trial {trial}: closed form {closed_form} vs lp {lp_value}"
        );
    }

    // ordered assignment vs interval linear program
    for trial in 0..100 {
        let n = rng.gen_range(3..=10);
        let n_cells = rng.gen_range(2..=7);
        let structure = common::random_row_structure(&mut rng, n, n_cells);
        let p: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let (imdp, _, _) = rows_from_structure(&structure, n, &[]);
        let (greedy, witness) = inner_min(&imdp, 0, 0, &p).unwrap();

        let Row::Interval(row) = imdp.row(0, 0) else { unreachable!() };
        let mut lp =
            LinearProgram::new(row.singletons.iter().map(|(i, _)| p[*i]).collect());
        lp.lower_bounds = row.singletons.iter().map(|(_, b)| b.lower).collect();
        lp.upper_bounds = row.singletons.iter().map(|(_, b)| b.upper).collect();
        lp.constrain(vec![1.0; row.singletons.len()], ConstraintOp::Eq, 1.0);
        let lp_value = match solve(&lp, Sense::Min).unwrap() {
            LpOutcome::Optimal { value, .. } => value,
            other => panic!("trial {trial}: {other:?}"),
        };
        assert!(
            (greedy - lp_value).abs() < 1e-8,
            "trial {trial}: ordered assignment {greedy} vs lp {lp_value}"
        );
        let achieved: f64 = witness.iter().map(|(i, g)| g * p[*i]).sum();
        assert!((achieved - greedy).abs() < 1e-9);
    }

    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 60.0, "took {dt:.3}s");
    println!(
        "ACCEPTANCE 4 PASS ({dt:.3}s): closed-form and greedy inner solvers match the \
         linear program on 200 random rows"
    );
}

#[test]
fn criterion_05_soundness_of_all_classes() {
    let start = Instant::now();
    let part = fixtures::example1_partition();
    let (imdp, twoi, mimdp, smdp) = example1_models();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut checked = 0usize;
    for s in 0..part.num_regions() {
        let r = part.region(s);
        for _ in 0..100 {
            let x: Vec<f64> = r
                .lower()
                .iter()
                .zip(r.upper())
                .map(|(lo, hi)| rng.gen_range(*lo..*hi))
                .collect();
            let gamma = common::exact_kernel_uniform(&part, &x, -1.0, 1.0);
            for (abs, name) in
                [(&imdp, "imdp"), (&twoi, "2imdp"), (&mimdp, "mimdp"), (&smdp, "smdp")]
            {
                assert!(
                    membership(abs, s, 0, &gamma).unwrap(),
                    "true kernel from x = {x:?} (region {s}) rejected by {name}"
                );
            }
            checked += 1;
        }
    }
    let dt = start.elapsed().as_secs_f64();
    assert_eq!(checked, 600);
    assert!(dt < 60.0, "took {dt:.3}s");
    println!(
        "ACCEPTANCE 5 PASS ({dt:.3}s): exact kernels from {checked} sampled points \
         accepted by all four ambiguity sets"
    );
}

#[test]
fn criterion_06_guarantee_containment_and_tightness_ordering() {
    let desk = desk();
    let n = desk.setup.partition.num_states();
    let chain = [
        (ModelClass::Smdp, ModelClass::Mimdp),
        (ModelClass::Mimdp, ModelClass::TwoImdp),
        (ModelClass::TwoImdp, ModelClass::Imdp),
    ];
    for (tight, loose) in chain {
        let t = &desk.class(tight).result;
        let l = &desk.class(loose).result;
        for s in 0..n {
            assert!(
                t.p_lower[s] >= l.p_lower[s] - 1e-7,
                "{tight} lower below {loose} at state {s}: {} vs {}",
                t.p_lower[s],
                l.p_lower[s]
            );
            assert!(
                t.p_upper[s] <= l.p_upper[s] + 1e-7,
                "{tight} upper above {loose} at state {s}: {} vs {}",
                t.p_upper[s],
                l.p_upper[s]
            );
        }
    }
    let e: Vec<(ModelClass, f64)> =
        ModelClass::ALL.iter().map(|&c| (c, desk.e_avg(c))).collect();
    let get = |c: ModelClass| e.iter().find(|(k, _)| *k == c).unwrap().1;
    assert!(get(ModelClass::Smdp) <= get(ModelClass::Mimdp) + 1e-12);
    assert!(get(ModelClass::Mimdp) <= get(ModelClass::TwoImdp) + 1e-12);
    assert!(get(ModelClass::TwoImdp) <= get(ModelClass::Imdp) + 1e-12);
    assert!(desk.build_seconds < 300.0, "took {:.1}s", desk.build_seconds);
    println!(
        "ACCEPTANCE 6 PASS ({:.1}s): interval containment chain holds pointwise; \
         e_avg {:.4} <= {:.4} <= {:.4} <= {:.4}",
        desk.build_seconds,
        get(ModelClass::Smdp),
        get(ModelClass::Mimdp),
        get(ModelClass::TwoImdp),
        get(ModelClass::Imdp),
    );
}

#[test]
fn criterion_07_monte_carlo_within_bounds() {
    let desk = desk();
    let start = Instant::now();
    let cfg = desk_config();
    let run = desk.class(ModelClass::Smdp);
    let mc_cfg = McConfig {
        initial_states: 100,
        trajectories: 1000,
        max_steps: cfg.validation.max_steps,
        seed: cfg.seed,
    };
    let estimates = monte_carlo(
        &desk.setup.system,
        &cfg.noise.model,
        &desk.setup.partition,
        &run.result,
        &desk.spec,
        &mc_cfg,
    )
    .unwrap();
    assert_eq!(estimates.len(), 100);
    let mut flagged = 0;
    for e in &estimates {
        let lo = run.result.p_lower[e.state] - e.wilson_radius;
        let hi = run.result.p_upper[e.state] + e.wilson_radius;
        if e.rate < lo || e.rate > hi {
            flagged += 1;
            println!(
                "  flagged state {}: rate {} outside [{lo:.4}, {hi:.4}]",
                e.state, e.rate
            );
        }
    }
    let dt = start.elapsed().as_secs_f64();
    assert!(flagged <= 1, "{flagged} initial states outside their bounds");
    assert!(dt + desk.build_seconds < 300.0, "took {dt:.1}s");
    println!(
        "ACCEPTANCE 7 PASS ({dt:.1}s): 100 x 1000 closed-loop trajectories, \
         {flagged} state(s) flagged (tolerance 1)"
    );
}

#[test]
fn criterion_08_refinement_shrinks_error() {
    let desk = desk();
    let start = Instant::now();
    let mut cfg = desk_config();
    cfg.state_grid.cells_per_dim = vec![30, 30];
    cfg.classes = vec![ModelClass::Smdp];
    let setup = Setup::build(&cfg).unwrap();
    let abs = build_abstraction(
        &setup.system,
        &setup.partition,
        &setup.noise_partition,
        ModelClass::Smdp,
        None,
    )
    .unwrap();
    let spec = ReachAvoidSpec::from_partition(&setup.partition, cfg.horizon);
    let result = rdp(&abs, &spec).unwrap();
    assert!(result.converged);
    let nt = setup.partition.non_terminal_indices();
    let fine =
        nt.iter().map(|&s| result.p_upper[s] - result.p_lower[s]).sum::<f64>() / nt.len() as f64;
    let coarse = desk.e_avg(ModelClass::Smdp);
    let dt = start.elapsed().as_secs_f64();
    assert!(
        fine < coarse,
        "doubling the grid did not shrink the error: {fine} vs {coarse}"
    );
    assert!(dt + desk.build_seconds < 600.0, "took {dt:.1}s");
    println!(
        "ACCEPTANCE 8 PASS ({dt:.1}s): set-valued e_avg {coarse:.4} at 15x15 -> {fine:.4} at 30x30"
    );
}

#[test]
fn criterion_09_rdp_structural_properties() {
    let desk = desk();
    // the synthesis pass itself rejects non-monotone sweeps and crossed
    // bounds; re-verify pinning and the sandwich on the stored vectors
    for run in &desk.runs {
        let r = &run.result;
        for &s in &desk.spec.reach_indices {
            assert_eq!(r.p_lower[s], 1.0, "{}: reach state {s} not pinned", run.class);
            assert_eq!(r.p_upper[s], 1.0);
        }
        assert_eq!(r.p_lower[desk.spec.avoid_index], 0.0, "{}: avoid not pinned", run.class);
        assert_eq!(r.p_upper[desk.spec.avoid_index], 0.0);
        for s in 0..desk.setup.partition.num_states() {
            assert!(
                r.p_lower[s] <= r.p_upper[s] + 1e-12,
                "{}: bounds crossed at {s}",
                run.class
            );
            assert!((0.0..=1.0).contains(&r.p_lower[s]));
            assert!((0.0..=1.0).contains(&r.p_upper[s]));
        }
    }
    println!("ACCEPTANCE 9 PASS: monotone sweeps, pinning, and bound sandwich on every run");
}

#[test]
fn criterion_10_set_valued_synthesis_faster_than_multi_interval() {
    let desk = desk();
    let smdp = desk.class(ModelClass::Smdp);
    let mimdp = desk.class(ModelClass::Mimdp);
    println!(
        "ACCEPTANCE 10: abstraction {:.3}s/{:.3}s, synthesis {:.3}s/{:.3}s (smdp/mimdp)",
        smdp.t_abs, mimdp.t_abs, smdp.t_syn, mimdp.t_syn
    );
    assert!(
        smdp.t_syn < mimdp.t_syn,
        "set-valued synthesis ({:.3}s) not faster than the linear-program path ({:.3}s)",
        smdp.t_syn,
        mimdp.t_syn
    );
    println!("ACCEPTANCE 10 PASS: closed-form inner solver beats the linear-program path");
}
