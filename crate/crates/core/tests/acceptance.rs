//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Every random instance comes from a fixed ChaCha8 seed, so runs are
//! reproducible; the seeds are printed alongside each result.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use common::{random_instance, Instance, Regime, Shape, AGGREGATIONS};
use gnnverify::bounds::{
    max_bounds, mean_bounds, plain_bounds, propagate, AggregationBoundProblem, BoundsTable, Interval,
};
use gnnverify::encoder::{
    encoding_stats, Constraint, ConstraintGroup, EncodingStats, Encoder, Family, LinearConstraint, MilpFragment,
    ObjectiveMode, Sense, Stage, TaggedConstraint, VarDecl, VarDomain, VarId,
};
use gnnverify::graph::{apply_perturbation, validate_perturbation, Scope};
use gnnverify::io;
use gnnverify::milp::{SolveStatus, SolverConfig, SolverInstance};
use gnnverify::model::{forward, forward_trace, predict, Aggregation};
use gnnverify::oracle::{attack_sample, brute_force_verify, sample_attrs, sample_edits};
use gnnverify::verifier::{delta_sweep, verify_node, BatchOptions, Mode, Status, VerifyOptions, Witness};
use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Rival logit must reach the predicted logit up to this slack.
const WITNESS_TOL: f64 = 1e-5;
/// Oracle instances whose best margin is this close to zero are set aside:
/// their verdict can flip within solver tolerance.
const MARGIN_FILTER: f64 = 1e-4;
const BOUND_TOL: f64 = 1e-9;
const MAX_TIGHTNESS_TOL: f64 = 1e-12;
const MEAN_TIGHTNESS_TOL: f64 = 1e-9;
const FIG1_MEAN_TOL: f64 = 0.01;

const ORACLE_SEED: u64 = 0x0EC1_E000;
const SOUNDNESS_SEED: u64 = 0x50DD_0001;
const TIGHTNESS_SEED: u64 = 0x7167_0002;
const EPS_SEED: u64 = 0xE950_0003;
const SWEEP_SEED: u64 = 0x5EE9_0004;
const MILP_SEED: u64 = 0x0919_0005;

struct Outcome {
    name: &'static str,
    passed: bool,
    detail: String,
    elapsed: Duration,
}

fn check(name: &'static str, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let start = Instant::now();
    let (passed, detail) = f();
    let outcome = Outcome {
        name,
        passed,
        detail,
        elapsed: start.elapsed(),
    };
    report(&outcome);
    outcome
}

fn report(o: &Outcome) {
    println!(
        "{} [{}] {} ({:.2}s)",
        if o.passed { "PASS" } else { "FAIL" },
        o.name,
        o.detail,
        o.elapsed.as_secs_f64()
    );
}

fn fixture(rel: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn iv(lo: f64, hi: f64) -> Interval {
    Interval::new(lo, hi)
}

fn options(mode: Mode) -> VerifyOptions {
    VerifyOptions {
        mode,
        time_limit: Some(Duration::from_secs(120)),
        ..VerifyOptions::default()
    }
}

fn fig1_reproduction() -> (bool, String) {
    let p = AggregationBoundProblem::new(
        vec![iv(0.0, 1.0)],
        vec![iv(2.0, 3.0), iv(3.0, 5.0)],
        vec![iv(-3.0, 4.0), iv(-2.0, 2.0)],
        1,
    );
    let mut times = Vec::new();
    let mut result = None;
    for _ in 0..101 {
        let start = Instant::now();
        let r = (
            max_bounds(&p),
            mean_bounds(&p),
            plain_bounds(Aggregation::Max, &p),
            plain_bounds(Aggregation::Mean, &p),
        );
        times.push(start.elapsed());
        result = Some(r);
    }
    times.sort();
    let median = times[times.len() / 2];
    let (tmax, tmean, pmax, pmean) = result.expect("ran");
    let close = |a: Interval, lo: f64, hi: f64| (a.lo - lo).abs() <= FIG1_MEAN_TOL && (a.hi - hi).abs() <= FIG1_MEAN_TOL;
    let ok = tmax == iv(2.0, 5.0)
        && pmax == iv(-3.0, 5.0)
        && close(tmean, 0.5, 3.25)
        && close(pmean, -1.67, 3.33)
        && median < Duration::from_millis(1);
    (
        ok,
        format!(
            "tightened max [{}, {}] mean [{:.4}, {:.4}]; plain max [{}, {}] mean [{:.4}, {:.4}]; median time {:?}",
            tmax.lo, tmax.hi, tmean.lo, tmean.hi, pmax.lo, pmax.hi, pmean.lo, pmean.hi, median
        ),
    )
}

struct OracleRun {
    instances: Vec<Instance>,
    mismatches: Vec<String>,
    mode_mismatches: Vec<String>,
    filtered: usize,
    nonrobust: usize,
    witnesses: Vec<(Instance, Witness)>,
}

fn oracle_run() -> OracleRun {
    let mut rng = ChaCha8Rng::seed_from_u64(ORACLE_SEED);
    let shape = Shape::default();
    let mut run = OracleRun {
        instances: Vec::new(),
        mismatches: Vec::new(),
        mode_mismatches: Vec::new(),
        filtered: 0,
        nonrobust: 0,
        witnesses: Vec::new(),
    };
    let mut i = 0usize;
    while run.instances.len() < 200 {
        let aggr = AGGREGATIONS[i % 3];
        let regime = if (i / 3) % 2 == 0 {
            Regime::Deletions
        } else {
            Regime::SampledAdditions
        };
        i += 1;
        let inst = random_instance(&mut rng, &shape, aggr, regime, 0.0);
        let oracle = brute_force_verify(&inst.model, &inst.graph, &inst.spec, inst.target).expect("oracle runs");
        if oracle.best_margin.abs() < MARGIN_FILTER {
            run.filtered += 1;
            continue;
        }
        let inc = verify_node(&inst.model, &inst.graph, &inst.spec, inst.target, &options(Mode::Incremental))
            .expect("incremental runs");
        let mono = verify_node(&inst.model, &inst.graph, &inst.spec, inst.target, &options(Mode::Monolithic))
            .expect("monolithic runs");
        let id = run.instances.len();
        if inc.status != oracle.status {
            run.mismatches.push(format!(
                "#{id} {aggr:?}/{regime:?}: verifier {:?}, oracle {:?}",
                inc.status, oracle.status
            ));
        }
        if inc.status != mono.status {
            run.mode_mismatches.push(format!(
                "#{id} {aggr:?}/{regime:?}: incremental {:?}, monolithic {:?}",
                inc.status, mono.status
            ));
        }
        if oracle.status == Status::NonRobust {
            run.nonrobust += 1;
        }
        for w in [inc.witness, mono.witness].into_iter().flatten() {
            run.witnesses.push((inst.clone(), w));
        }
        run.instances.push(inst);
    }
    run
}

fn summary(list: &[String]) -> String {
    list.iter().take(5).cloned().collect::<Vec<_>>().join("; ")
}

fn bound_violations(inst: &Instance, table: &BoundsTable, edits_attrs: (gnnverify::graph::EdgeEditSet, Vec<Vec<f64>>)) -> Vec<String> {
    let (edits, attrs) = edits_attrs;
    let mut out = Vec::new();
    let perturbed = apply_perturbation(&inst.graph, &inst.spec, &edits, attrs).expect("sampled perturbation is admissible");
    let scope = table.scope();
    for v in scope.within(inst.model.num_layers()) {
        let boxes = table.attr(v).expect("attribute boxes");
        for (i, (b, &x)) in boxes.iter().zip(perturbed.attr(v)).enumerate() {
            if !b.contains(x, BOUND_TOL) {
                out.push(format!("attr {v},{i}: {x} outside [{}, {}]", b.lo, b.hi));
            }
        }
    }
    for v in scope.nodes_at_layer(1) {
        let d = perturbed.in_neighbors(v).len() as f64;
        let b = table.degree(v).expect("degree box");
        if !b.contains(d, 0.0) {
            out.push(format!("degree {v}: {d} outside [{}, {}]", b.lo, b.hi));
        }
    }
    let trace = forward_trace(&inst.model, &perturbed, inst.target).expect("forward");
    for (k, layer) in trace.layers.iter().enumerate() {
        for (&v, tr) in layer {
            let nb = match table.node(k + 1, v) {
                Ok(nb) => nb,
                Err(_) => {
                    out.push(format!("layer {} node {v} evaluated but not bounded", k + 1));
                    continue;
                }
            };
            for (what, boxes, xs) in [
                ("msg", &nb.msg, &tr.msg),
                ("pre", &nb.pre_activation, &tr.pre_activation),
                ("h", &nb.embedding, &tr.embedding),
            ] {
                for (i, (b, &x)) in boxes.iter().zip(xs).enumerate() {
                    if !b.contains(x, BOUND_TOL * (1.0 + x.abs())) {
                        out.push(format!("{what} k{} v{v} i{i}: {x} outside [{}, {}]", k + 1, b.lo, b.hi));
                    }
                }
            }
        }
    }
    out
}

fn bound_soundness() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(SOUNDNESS_SEED);
    let shape = Shape::default();
    let mut violations = Vec::new();
    let mut samples = 0usize;
    for i in 0..50 {
        let regime = [Regime::Deletions, Regime::SampledAdditions, Regime::Mixed][i % 3];
        let eps = [0.0, 0.1, 0.3][(i / 3) % 3];
        let inst = random_instance(&mut rng, &shape, AGGREGATIONS[i % 3], regime, eps);
        let table = propagate(&inst.model, &inst.graph, &inst.spec, inst.target).expect("propagate");
        for _ in 0..1000 {
            let edits = sample_edits(&inst.graph, &inst.spec, &mut rng);
            let attrs = sample_attrs(&inst.graph, &inst.spec, &mut rng);
            samples += 1;
            violations.extend(
                bound_violations(&inst, &table, (edits, attrs))
                    .into_iter()
                    .map(|v| format!("#{i}: {v}")),
            );
        }
    }
    (
        violations.is_empty(),
        format!(
            "50 instances, {samples} sampled perturbations, {} violations (seed {SOUNDNESS_SEED:#x}) {}",
            violations.len(),
            summary(&violations)
        ),
    )
}

/// Exact extrema of an aggregated coordinate over every admissible choice
/// of contributors.
fn enumerated_extrema(aggr: Aggregation, p: &AggregationBoundProblem) -> Interval {
    let nd = p.deletable.len();
    let ni = p.insertable.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for mask in 0u32..(1 << (nd + ni)) {
        if mask.count_ones() as usize > p.budget {
            continue;
        }
        let mut chosen: Vec<Interval> = p.fixed.clone();
        for (j, x) in p.deletable.iter().enumerate() {
            if mask & (1 << j) == 0 {
                chosen.push(*x);
            }
        }
        for (j, x) in p.insertable.iter().enumerate() {
            if mask & (1 << (nd + j)) != 0 {
                chosen.push(*x);
            }
        }
        let (a, b) = if chosen.is_empty() {
            (0.0, 0.0)
        } else {
            match aggr {
                Aggregation::Max => (
                    chosen.iter().map(|x| x.lo).fold(f64::NEG_INFINITY, f64::max),
                    chosen.iter().map(|x| x.hi).fold(f64::NEG_INFINITY, f64::max),
                ),
                Aggregation::Mean => {
                    let n = chosen.len() as f64;
                    (
                        chosen.iter().map(|x| x.lo).sum::<f64>() / n,
                        chosen.iter().map(|x| x.hi).sum::<f64>() / n,
                    )
                }
                Aggregation::Sum => unreachable!(),
            }
        };
        lo = lo.min(a);
        hi = hi.max(b);
    }
    iv(lo, hi)
}

fn random_interval(rng: &mut impl Rng) -> Interval {
    let a = rng.gen_range(-5.0..5.0);
    let b = if rng.gen_bool(0.1) { a } else { rng.gen_range(-5.0..5.0) };
    iv(f64::min(a, b), f64::max(a, b))
}

fn bound_tightness() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(TIGHTNESS_SEED);
    let mut failures = Vec::new();
    let (mut worst_max, mut worst_mean) = (0.0f64, 0.0f64);
    for i in 0..500 {
        let n = rng.gen_range(0..=6);
        let mut p = AggregationBoundProblem::new(Vec::new(), Vec::new(), Vec::new(), rng.gen_range(0..=3));
        for _ in 0..n {
            let x = random_interval(&mut rng);
            match rng.gen_range(0..3) {
                0 => p.fixed.push(x),
                1 => p.deletable.push(x),
                _ => p.insertable.push(x),
            }
        }
        for (aggr, got, tol) in [
            (Aggregation::Max, max_bounds(&p), MAX_TIGHTNESS_TOL),
            (Aggregation::Mean, mean_bounds(&p), MEAN_TIGHTNESS_TOL),
        ] {
            let want = enumerated_extrema(aggr, &p);
            let err = (got.lo - want.lo).abs().max((got.hi - want.hi).abs());
            match aggr {
                Aggregation::Max => worst_max = worst_max.max(err),
                _ => worst_mean = worst_mean.max(err),
            }
            if !(err <= tol) {
                failures.push(format!("#{i} {aggr:?}: got [{}, {}], exact [{}, {}]", got.lo, got.hi, want.lo, want.hi));
            }
        }
    }
    (
        failures.is_empty(),
        format!(
            "500 problems, worst max error {worst_max:.3e}, worst mean error {worst_mean:.3e}, {} failures (seed {TIGHTNESS_SEED:#x}) {}",
            failures.len(),
            summary(&failures)
        ),
    )
}

fn witness_problems(inst: &Instance, w: &Witness) -> Option<String> {
    let edits = w.edits();
    let report = match validate_perturbation(&inst.graph, &inst.spec, &edits, &w.attrs) {
        Ok(r) => r,
        Err(e) => return Some(format!("validation error: {e}")),
    };
    if !report.is_valid() {
        return Some(format!("inadmissible: {report}"));
    }
    let clean = predict(&inst.model, &inst.graph, inst.target).expect("predict");
    if clean != w.predicted {
        return Some(format!("witness predicted {} but clean prediction is {clean}", w.predicted));
    }
    let perturbed = apply_perturbation(&inst.graph, &inst.spec, &edits, w.attrs.clone()).expect("admissible");
    let logits = forward(&inst.model, &perturbed, inst.target).expect("forward").values;
    let rival = logits
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != clean)
        .map(|(_, &x)| x)
        .fold(f64::NEG_INFINITY, f64::max);
    (rival < logits[clean] - WITNESS_TOL).then(|| format!("rival {rival} below predicted {}", logits[clean]))
}

struct EpsRun {
    instances: Vec<Instance>,
    witnesses: Vec<(Instance, Witness)>,
    attack_conflicts: Vec<String>,
    attacks_found: usize,
}

fn eps_run() -> EpsRun {
    let mut rng = ChaCha8Rng::seed_from_u64(EPS_SEED);
    let shape = Shape::default();
    let mut run = EpsRun {
        instances: Vec::new(),
        witnesses: Vec::new(),
        attack_conflicts: Vec::new(),
        attacks_found: 0,
    };
    for i in 0..60 {
        let regime = [Regime::Deletions, Regime::SampledAdditions, Regime::Mixed][(i / 3) % 3];
        let eps = [0.05, 0.2][i % 2];
        let inst = random_instance(&mut rng, &shape, AGGREGATIONS[i % 3], regime, eps);
        let verdict =
            verify_node(&inst.model, &inst.graph, &inst.spec, inst.target, &options(Mode::Incremental)).expect("verify");
        let attack = attack_sample(&inst.model, &inst.graph, &inst.spec, inst.target, 200, i as u64).expect("attack");
        if let Some(a) = &attack {
            run.attacks_found += 1;
            if verdict.status != Status::NonRobust {
                run.attack_conflicts.push(format!(
                    "#{i}: attack flips with margin {:.3e} but verifier says {:?}",
                    a.margin, verdict.status
                ));
            }
        }
        if let Some(w) = verdict.witness {
            run.witnesses.push((inst.clone(), w));
        }
        run.instances.push(inst);
    }
    run
}

fn size_stats(inst: &Instance) -> (EncodingStats, usize, usize) {
    let table = propagate(&inst.model, &inst.graph, &inst.spec, inst.target).expect("propagate");
    let predicted = predict(&inst.model, &inst.graph, inst.target).expect("predict");
    let mut enc = Encoder::new(&inst.model, &inst.graph, &inst.spec, &table, predicted).expect("encoder");
    let fragments = enc.encode_all(ObjectiveMode::Full).expect("encode");
    let stats = encoding_stats(&fragments, enc.registry());
    let n = Scope::new(&inst.graph, &inst.spec, inst.target, inst.model.num_layers())
        .expect("scope")
        .len();
    let d: usize = inst.model.dims().iter().sum();
    (stats, n, d)
}

fn size_ceiling(instances: &[&Instance]) -> (bool, String) {
    let mut failures = Vec::new();
    let (mut real_ratio, mut bin_ratio, mut cons_ratio) = (0.0f64, 0.0f64, 0.0f64);
    for (i, inst) in instances.iter().enumerate() {
        let (s, n, d) = size_stats(inst);
        let real_cap = 5 * n * n * d;
        let bin_cap = n * n;
        let cons_cap = 8 * n * d + 2;
        real_ratio = real_ratio.max(s.num_real as f64 / real_cap as f64);
        bin_ratio = bin_ratio.max(s.num_binary as f64 / bin_cap as f64);
        cons_ratio = cons_ratio.max(s.num_constraints as f64 / cons_cap as f64);
        if s.num_real > real_cap || s.num_binary > bin_cap || s.num_constraints > cons_cap {
            failures.push(format!(
                "#{i} N={n} D={d}: real {}/{real_cap}, binary {}/{bin_cap}, constraints {}/{cons_cap}",
                s.num_real, s.num_binary, s.num_constraints
            ));
        }
    }
    (
        failures.is_empty(),
        format!(
            "{} instances, peak usage real {:.0}%, binary {:.0}%, constraints {:.0}% of ceiling {}",
            instances.len(),
            100.0 * real_ratio,
            100.0 * bin_ratio,
            100.0 * cons_ratio,
            summary(&failures)
        ),
    )
}

fn budget_monotonicity() -> (bool, String) {
    let deltas = [0, 1, 2, 3];
    let opts = BatchOptions {
        verify: options(Mode::Incremental),
        workers: 1,
        force: true,
    };
    let mut problems = Vec::new();
    let mut totals = vec![0usize; deltas.len()];

    let model = io::model_from_json(&fixture("toy/model.json")).expect("toy model");
    let graph = io::graph_from_json(&fixture("toy/graph.json")).expect("toy graph");
    let spec = io::spec_from_json(&fixture("toy/spec.json"), &graph).expect("toy spec");
    let targets: Vec<usize> = (0..graph.num_nodes()).collect();
    let mut sets = vec![(model, graph, spec, targets)];

    let mut rng = ChaCha8Rng::seed_from_u64(SWEEP_SEED);
    let shape = Shape {
        max_delta: 3,
        ..Shape::default()
    };
    for i in 0..12 {
        let inst = random_instance(&mut rng, &shape, AGGREGATIONS[i % 3], Regime::Mixed, [0.0, 0.05][i % 2]);
        let targets = (0..inst.graph.num_nodes()).collect();
        sets.push((inst.model, inst.graph, inst.spec, targets));
    }
    for (j, (model, graph, spec, targets)) in sets.iter().enumerate() {
        let points = delta_sweep(model, graph, spec, targets, &deltas, &opts).expect("sweep");
        let robust: Vec<usize> = points.iter().map(|p| p.aggregate.robust).collect();
        let unknown: usize = points.iter().map(|p| p.aggregate.unknown + p.aggregate.errors).sum();
        if robust.windows(2).any(|w| w[1] > w[0]) || unknown > 0 {
            problems.push(format!("set {j}: robust counts {robust:?}, {unknown} unknown/errors"));
        }
        for (t, r) in totals.iter_mut().zip(&robust) {
            *t += r;
        }
    }
    if totals.windows(2).any(|w| w[1] > w[0]) {
        problems.push(format!("totals {totals:?}"));
    }
    (
        problems.is_empty(),
        format!(
            "{} instance sets, Δ {deltas:?} → robust totals {totals:?} {}",
            sets.len(),
            summary(&problems)
        ),
    )
}

/// A small feasibility MILP over binaries, boxed continuous variables,
/// linear rows, indicator rows and max terms.
struct TinyMilp {
    vars: Vec<VarDecl>,
    constraints: Vec<Constraint>,
}

fn random_linear(rng: &mut impl Rng, pool: &[VarId], max_terms: usize) -> LinearConstraint {
    let mut ids = pool.to_vec();
    let take = rng.gen_range(1..=max_terms.min(ids.len()));
    let mut terms = Vec::new();
    for _ in 0..take {
        let id = ids.swap_remove(rng.gen_range(0..ids.len()));
        let mut c = rng.gen_range(-3i32..=3);
        if c == 0 {
            c = 1;
        }
        terms.push((id, f64::from(c)));
    }
    let sense = [Sense::Le, Sense::Ge, Sense::Le, Sense::Ge, Sense::Eq][rng.gen_range(0..5)];
    LinearConstraint::new(terms, sense, f64::from(rng.gen_range(-6i32..=6)))
}

fn random_milp(rng: &mut impl Rng) -> TinyMilp {
    let nb = rng.gen_range(1..=6);
    let nc = rng.gen_range(2..=10);
    let mut vars = Vec::new();
    for j in 0..nb {
        vars.push(VarDecl {
            id: VarId(j),
            name: format!("b{j}"),
            domain: VarDomain::Binary,
            lo: 0.0,
            hi: 1.0,
        });
    }
    for j in 0..nc {
        let a = f64::from(rng.gen_range(-5i32..=5));
        let b = f64::from(rng.gen_range(-5i32..=5));
        vars.push(VarDecl {
            id: VarId(nb + j),
            name: format!("x{j}"),
            domain: VarDomain::Continuous,
            lo: a.min(b),
            hi: a.max(b),
        });
    }
    let binaries: Vec<VarId> = (0..nb).map(VarId).collect();
    let continuous: Vec<VarId> = (nb..nb + nc).map(VarId).collect();
    let everything: Vec<VarId> = (0..nb + nc).map(VarId).collect();
    let mut constraints = Vec::new();
    for _ in 0..rng.gen_range(1..=5) {
        constraints.push(Constraint::Linear(random_linear(rng, &everything, 4)));
    }
    for _ in 0..rng.gen_range(0..=3) {
        constraints.push(Constraint::Indicator {
            binary: binaries[rng.gen_range(0..nb as usize)],
            phase: rng.gen_bool(0.5),
            constraint: random_linear(rng, &continuous, 3),
        });
    }
    let mut free = continuous.clone();
    for _ in 0..rng.gen_range(0..=2) {
        if free.len() < 2 {
            break;
        }
        let target = free.swap_remove(rng.gen_range(0..free.len()));
        let mut args: Vec<VarId> = continuous.iter().copied().filter(|&v| v != target).collect();
        let keep = rng.gen_range(1..=3.min(args.len()));
        while args.len() > keep {
            args.swap_remove(rng.gen_range(0..args.len()));
        }
        constraints.push(Constraint::MaxOf {
            target,
            args,
            include_zero: rng.gen_bool(0.5),
        });
    }
    TinyMilp { vars, constraints }
}

fn solve_builtin(m: &TinyMilp) -> (SolveStatus, f64) {
    let mut fragment = MilpFragment::new(Stage::Objective);
    fragment.vars = m.vars.clone();
    fragment.constraints = m
        .constraints
        .iter()
        .map(|c| TaggedConstraint {
            constraint: c.clone(),
            group: ConstraintGroup::new(Family::Auxiliary, 0, 0, 0),
        })
        .collect();
    let mut solver = SolverInstance::new(SolverConfig::default()).expect("config");
    solver.add_fragment(&fragment).expect("fragment");
    let outcome = solver.solve().expect("solve");
    let violation = outcome.assignment.as_ref().map_or(0.0, |a| solver.max_violation(a));
    (outcome.status, violation)
}

/// Enumerates binary values and, for each max term, which candidate attains
/// the max; each combination leaves a pure LP.
fn solve_by_enumeration(m: &TinyMilp) -> bool {
    let binaries: Vec<&VarDecl> = m.vars.iter().filter(|d| d.is_binary()).collect();
    let maxes: Vec<(VarId, &Vec<VarId>, bool)> = m
        .constraints
        .iter()
        .filter_map(|c| match c {
            Constraint::MaxOf {
                target,
                args,
                include_zero,
            } => Some((*target, args, *include_zero)),
            _ => None,
        })
        .collect();
    let choice_counts: Vec<usize> = maxes.iter().map(|(_, a, z)| a.len() + usize::from(*z)).collect();
    let combos: usize = choice_counts.iter().product();
    for mask in 0u32..(1 << binaries.len()) {
        let fixed = |id: VarId| -> Option<f64> {
            binaries
                .iter()
                .position(|d| d.id == id)
                .map(|p| f64::from((mask >> p) & 1))
        };
        for combo in 0..combos {
            let mut choice = Vec::new();
            let mut rest = combo;
            for &c in &choice_counts {
                choice.push(rest % c);
                rest /= c;
            }
            if lp_feasible(m, &fixed, &maxes, &choice) {
                return true;
            }
        }
    }
    false
}

fn lp_feasible(
    m: &TinyMilp,
    fixed: &dyn Fn(VarId) -> Option<f64>,
    maxes: &[(VarId, &Vec<VarId>, bool)],
    choice: &[usize],
) -> bool {
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let cols: Vec<Option<minilp::Variable>> = m
        .vars
        .iter()
        .map(|d| (!d.is_binary()).then(|| lp.add_var(0.0, (d.lo, d.hi))))
        .collect();
    let mut rows: Vec<LinearConstraint> = Vec::new();
    for c in &m.constraints {
        match c {
            Constraint::Linear(l) => rows.push(l.clone()),
            Constraint::Indicator {
                binary,
                phase,
                constraint,
            } => {
                if (fixed(*binary).expect("binary") >= 0.5) == *phase {
                    rows.push(constraint.clone());
                }
            }
            _ => {}
        }
    }
    for ((target, args, zero), &pick) in maxes.iter().zip(choice) {
        for &a in args.iter() {
            rows.push(LinearConstraint::new(vec![(*target, 1.0), (a, -1.0)], Sense::Ge, 0.0));
        }
        if *zero {
            rows.push(LinearConstraint::new(vec![(*target, 1.0)], Sense::Ge, 0.0));
        }
        if pick < args.len() {
            rows.push(LinearConstraint::equal(*target, args[pick]));
        } else {
            rows.push(LinearConstraint::fix(*target, 0.0));
        }
    }
    for r in rows {
        let mut rhs = r.rhs;
        let mut terms = Vec::new();
        for &(id, c) in &r.terms {
            match fixed(id) {
                Some(x) => rhs -= c * x,
                None => terms.push((cols[id.index()].expect("continuous column"), c)),
            }
        }
        if terms.is_empty() {
            let ok = match r.sense {
                Sense::Le => 0.0 <= rhs + 1e-9,
                Sense::Ge => 0.0 >= rhs - 1e-9,
                Sense::Eq => rhs.abs() <= 1e-9,
            };
            if !ok {
                return false;
            }
            continue;
        }
        let op = match r.sense {
            Sense::Le => ComparisonOp::Le,
            Sense::Ge => ComparisonOp::Ge,
            Sense::Eq => ComparisonOp::Eq,
        };
        lp.add_constraint(terms.as_slice(), op, rhs);
    }
    lp.solve().is_ok()
}

fn solver_exactness() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(MILP_SEED);
    let mut failures = Vec::new();
    let (mut sat, mut unsat) = (0, 0);
    for i in 0..100 {
        let m = random_milp(&mut rng);
        let (status, violation) = solve_builtin(&m);
        let expected = solve_by_enumeration(&m);
        match (status, expected) {
            (SolveStatus::Sat, true) if violation <= SolverConfig::default().feasibility_tol => sat += 1,
            (SolveStatus::Unsat, false) => unsat += 1,
            _ => failures.push(format!("#{i}: solver {status:?} (violation {violation:.2e}), oracle feasible={expected}")),
        }
    }
    (
        failures.is_empty(),
        format!(
            "100 MILPs ({sat} feasible, {unsat} infeasible), {} mismatches (seed {MILP_SEED:#x}) {}",
            failures.len(),
            summary(&failures)
        ),
    )
}

fn main() {
    let mut outcomes = vec![check("fig1-reproduction", fig1_reproduction)];

    let start = Instant::now();
    let run = oracle_run();
    let elapsed = start.elapsed();
    let oracle = Outcome {
        name: "oracle-equivalence",
        passed: run.mismatches.is_empty() && elapsed < Duration::from_secs(600),
        detail: format!(
            "{} instances ({} non-robust, {} set aside with |margin| < {MARGIN_FILTER:e}), {} mismatches (seed {ORACLE_SEED:#x}) {}",
            run.instances.len(),
            run.nonrobust,
            run.filtered,
            run.mismatches.len(),
            summary(&run.mismatches)
        ),
        elapsed,
    };
    report(&oracle);
    outcomes.push(oracle);

    outcomes.push(check("bound-soundness", bound_soundness));
    outcomes.push(check("bound-tightness", bound_tightness));

    let modes = Outcome {
        name: "incremental-equals-monolithic",
        passed: run.mode_mismatches.is_empty(),
        detail: format!(
            "{} instances, {} mismatches {}",
            run.instances.len(),
            run.mode_mismatches.len(),
            summary(&run.mode_mismatches)
        ),
        elapsed: Duration::ZERO,
    };
    report(&modes);
    outcomes.push(modes);

    let start = Instant::now();
    let eps = eps_run();
    let mut bad = Vec::new();
    for (inst, w) in run.witnesses.iter().chain(&eps.witnesses) {
        if let Some(p) = witness_problems(inst, w) {
            bad.push(p);
        }
    }
    bad.extend(eps.attack_conflicts.iter().cloned());
    let witness = Outcome {
        name: "witness-validity",
        passed: bad.is_empty() && !run.witnesses.is_empty() && !eps.witnesses.is_empty(),
        detail: format!(
            "{} witnesses ({} structural, {} with attribute budgets), {} random-attack flips of which {} not reported non-robust, {} problems (seed {EPS_SEED:#x}) {}",
            run.witnesses.len() + eps.witnesses.len(),
            run.witnesses.len(),
            eps.witnesses.len(),
            eps.attacks_found,
            eps.attack_conflicts.len(),
            bad.len(),
            summary(&bad)
        ),
        elapsed: start.elapsed(),
    };
    report(&witness);
    outcomes.push(witness);

    let all: Vec<&Instance> = run.instances.iter().chain(&eps.instances).collect();
    outcomes.push(check("encoding-size-ceiling", || size_ceiling(&all)));
    outcomes.push(check("budget-monotonicity", budget_monotonicity));
    outcomes.push(check("solver-exactness", solver_exactness));

    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} of {} acceptance criteria passed", outcomes.len() - failed, outcomes.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
