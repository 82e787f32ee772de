use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rnnsm::coverage::{evaluate_defined, Criterion};
use rnnsm::extract::grid::DEFAULT_CELLS_PER_DIM;
use rnnsm::extract::{extract as extract_sm, KMeansParams, Method, ProjectionSpec, StateMachine};
use rnnsm::fsutil::{write_atomic, write_dir_atomic};
use rnnsm::metrics::{score as score_sm, SmScore, DEFAULT_EXPONENT};
use rnnsm::predict::{
    explain_prediction, extract_all, extract_features, predict_error, train_tree, DecisionTree,
    Direction, FeatureRow, Rule, TreeParams, FEATURE_NAMES,
};
use rnnsm::rnn::{run_batch, InputSequence, RnnWeights};
use rnnsm::stats::{roc_auc, significance_matrix};
use rnnsm::sweep::sweep_k as sweep;
use rnnsm::synth::{ErrorPlacement, GroundTruth, PlantedSource, SourceConfig, SynthBundle};
use rnnsm::trace::{load_trace_bundle, parse_trace_line, save_trace_bundle, Role, TraceSet};
use serde_json::{json, Value};

use crate::args::*;
use crate::error::{CliError, CliResult};
use crate::output::{fixed, Format, Report, Table};
use crate::paths::{check_collisions, check_dir_output, normalize, require_exists};

const DEFAULT_K: usize = 25;

/// Pruning strengths tried against a validation suite.
const ALPHA_GRID: [f64; 9] = [0.0, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 3e-1];

fn load_sm(p: &Path) -> CliResult<StateMachine> {
    require_exists(p, "state machine")?;
    Ok(StateMachine::load(p)?)
}

fn load_bundle(p: &Path, what: &str) -> CliResult<TraceSet> {
    require_exists(p, what)?;
    Ok(load_trace_bundle(p)?)
}

fn json_error(context: &str, e: serde_json::Error) -> rnnsm::Error {
    rnnsm::Error::Json {
        context: context.to_string(),
        source: e,
    }
}

fn model_name(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| p.display().to_string())
}

fn parse_criteria(s: Option<&str>) -> CliResult<Vec<Criterion>> {
    Criterion::parse_list(s.unwrap_or("all")).map_err(|e| CliError::usage(e.to_string()))
}

fn score_json(s: &SmScore) -> Value {
    json!({
        "purity": s.purity,
        "richness": s.richness,
        "goodness": s.goodness,
        "scale": s.scale,
        "states_with_finals": s.states_with_finals,
        "total_finals": s.total_finals,
        "exponent": s.exponent,
        "lacks_discrimination": s.lacks_discrimination(),
    })
}

fn score_cells(s: &SmScore) -> Vec<String> {
    vec![
        s.states_with_finals.to_string(),
        fixed(100.0 * s.purity, 2),
        fixed(s.richness, 2),
        fixed(s.goodness, 2),
        fixed(s.scale, 2),
        if s.lacks_discrimination() { "lacks discrimination".into() } else { String::new() },
    ]
}

pub fn extract(a: ExtractArgs) -> CliResult<Report> {
    let train = required(a.train, "train")?;
    let out = required(a.out, "out")?;
    require_exists(&train, "training bundle")?;
    check_collisions(&[&train], &[&out])?;
    let method = match a.method.unwrap_or(MethodArg::Kmeans) {
        MethodArg::Kmeans => {
            if a.cells.is_some() || a.projection.is_some() {
                return Err(CliError::usage("--cells and --projection apply to the grid method"));
            }
            let mut p = KMeansParams::new(a.k.unwrap_or(DEFAULT_K), required(a.seed, "seed")?);
            if let Some(n) = a.n_init {
                p.n_init = n;
            }
            Method::Kmeans(p)
        }
        MethodArg::Grid => {
            if a.k.is_some() {
                return Err(CliError::usage("--k applies to the kmeans method"));
            }
            let k = a.projection_k.unwrap_or(3);
            Method::Grid {
                cells_per_dim: a.cells.unwrap_or(DEFAULT_CELLS_PER_DIM),
                projection: match a.projection.unwrap_or(ProjectionArg::None) {
                    ProjectionArg::None => ProjectionSpec::None,
                    ProjectionArg::Pca => ProjectionSpec::Pca(k),
                    ProjectionArg::Lda => ProjectionSpec::Lda(k),
                },
            }
        }
    };
    let set = load_trace_bundle(&train)?;
    let sm = extract_sm(&set, &method)?;
    sm.save(&out)?;
    let score = score_sm(&sm, DEFAULT_EXPONENT).ok();
    let mut table = Table::new(["artifact", "method", "basic states", "transitions", "training traces"]);
    table.push(vec![
        out.display().to_string(),
        sm.metadata.method.clone(),
        sm.basic_count().to_string(),
        sm.transitions().len().to_string(),
        sm.metadata.training_traces.to_string(),
    ]);
    Ok(Report {
        json: json!({
            "artifact": out,
            "metadata": sm.metadata,
            "basic_states": sm.basic_count(),
            "transitions": sm.transitions().len(),
            "score": score.as_ref().map(score_json),
        }),
        table,
    })
}

pub fn score(a: ScoreArgs) -> CliResult<Report> {
    let paths = required(a.sm, "sm")?;
    let exponent = a.exponent.unwrap_or(DEFAULT_EXPONENT);
    let mut table = Table::new([
        "model", "method", "states", "final states", "purity (%)", "richness", "goodness", "scale", "note",
    ]);
    let mut rows = Vec::new();
    for p in &paths {
        let sm = load_sm(p)?;
        let s = score_sm(&sm, exponent)?;
        let mut cells = vec![model_name(p), sm.metadata.method.clone(), sm.basic_count().to_string()];
        cells.extend(score_cells(&s));
        table.push(cells);
        rows.push(json!({
            "model": model_name(p),
            "path": p,
            "metadata": sm.metadata,
            "states": sm.basic_count(),
            "score": score_json(&s),
        }));
    }
    Ok(Report {
        json: json!({ "exponent": exponent, "models": rows }),
        table,
    })
}

pub fn coverage(a: CoverageArgs) -> CliResult<Report> {
    let sm = load_sm(&required(a.sm, "sm")?)?;
    let suite_path = required(a.suite, "suite")?;
    let criteria = parse_criteria(a.criteria.as_deref())?;
    let suite = load_bundle(&suite_path, "suite")?;
    let (report, undefined) = evaluate_defined(&sm, &suite, &model_name(&suite_path), &criteria)?;
    let mut table = Table::new(["criterion", "value", "numerator", "denominator"]);
    for c in &criteria {
        if let Some(v) = report.values.iter().find(|v| v.criterion == *c) {
            table.push(vec![
                c.to_string(),
                fixed(v.value, 4),
                fixed(v.numerator, 4),
                v.denominator.map(|d| fixed(d, 4)).unwrap_or_default(),
            ]);
        } else {
            table.push(vec![c.to_string(), "undefined".into(), String::new(), String::new()]);
        }
    }
    let undefined: Vec<Value> = undefined
        .iter()
        .map(|(c, reason)| json!({ "criterion": c, "reason": reason }))
        .collect();
    Ok(Report {
        json: json!({ "report": report, "undefined": undefined }),
        table,
    })
}

fn suite_dirs(dir: &Path) -> CliResult<Vec<PathBuf>> {
    require_exists(dir, "suites directory")?;
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::usage(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    Ok(dirs)
}

pub fn ks_test(a: KsTestArgs) -> CliResult<Report> {
    let sm_paths = required(a.sm, "sm")?;
    let dir = required(a.suites_dir, "suites-dir")?;
    let criteria = parse_criteria(a.criterion.as_deref())?;
    let suites: Vec<TraceSet> = suite_dirs(&dir)?
        .iter()
        .map(|p| load_bundle(p, "suite"))
        .collect::<CliResult<_>>()?;
    if suites.len() < 2 {
        return Err(CliError::data(format!(
            "{} holds {} suite bundle(s), need at least 2",
            dir.display(),
            suites.len()
        )));
    }
    let mut names: Vec<String> = Vec::new();
    let mut matrices = Vec::new();
    for p in &sm_paths {
        let mut name = model_name(p);
        if names.contains(&name) {
            name = format!("{name}#{}", names.len());
        }
        let sm = load_sm(p)?;
        matrices.push(significance_matrix(&sm, &suites, &criteria)?);
        names.push(name);
    }
    let mut headers = vec!["criterion".to_string()];
    for n in &names {
        headers.push(n.clone());
        headers.push(format!("{n} p"));
    }
    let mut table = Table::new(headers);
    for (i, c) in criteria.iter().enumerate() {
        let mut row = vec![c.to_string()];
        for m in &matrices {
            let r = &m[i];
            match r.result {
                Some(k) => {
                    row.push(if r.significant() { "✓" } else { "✗" }.into());
                    row.push(format!("{:.4e}", k.p_value));
                }
                None => {
                    row.push("n/a".into());
                    row.push(String::new());
                }
            }
        }
        table.push(row);
    }
    let models: Vec<Value> = names
        .iter()
        .zip(&sm_paths)
        .zip(&matrices)
        .map(|((n, p), m)| json!({ "model": n, "path": p, "rows": m }))
        .collect();
    Ok(Report {
        json: json!({ "alpha": rnnsm::stats::ALPHA, "suites": suites.len(), "models": models }),
        table,
    })
}

fn feature_rows(sm: &StateMachine, suite: &TraceSet) -> CliResult<Vec<FeatureRow>> {
    let (mapped, _) = sm.map_suite(suite.traces())?;
    Ok(extract_all(sm, &mapped))
}

fn auc_of(tree: &DecisionTree, rows: &[FeatureRow], what: &str) -> CliResult<f64> {
    let scores: Vec<f64> = rows.iter().map(|r| predict_error(tree, r)).collect();
    let labels: Vec<bool> = rows
        .iter()
        .map(|r| r.error.ok_or_else(|| CliError::data(format!("{what} trace `{}` lacks a label", r.trace_id))))
        .collect::<CliResult<_>>()?;
    roc_auc(&scores, &labels)
        .map(|c| c.auc)
        .map_err(|e| CliError::data(format!("{what} suite: {e}")))
}

fn error_rate(rows: &[FeatureRow]) -> f64 {
    let labeled: Vec<bool> = rows.iter().filter_map(|r| r.error).collect();
    labeled.iter().filter(|&&e| e).count() as f64 / labeled.len().max(1) as f64
}

/// Suites must be different bundles that share no trace.
fn check_leakage(named: &[(&str, &Path, &TraceSet)]) -> CliResult<()> {
    for (i, (na, pa, a)) in named.iter().enumerate() {
        for (nb, pb, b) in &named[i + 1..] {
            if normalize(pa) == normalize(pb) {
                return Err(CliError::usage(format!("{na} and {nb} suites are the same bundle")));
            }
            let seen: HashSet<&str> = a.traces().iter().map(|t| t.id.as_str()).collect();
            if let Some(t) = b
                .traces()
                .iter()
                .find(|t| seen.contains(t.id.as_str()) && a.traces().iter().any(|u| u == *t))
            {
                return Err(CliError::data(format!("trace `{}` appears in both {na} and {nb} suites", t.id)));
            }
        }
    }
    Ok(())
}

pub fn train_predictor(a: TrainPredictorArgs) -> CliResult<Report> {
    let sm_path = required(a.sm, "sm")?;
    let train_path = required(a.train_suite, "train-suite")?;
    let eval_path = required(a.eval_suite, "eval-suite")?;
    let out = required(a.out, "out")?;
    let mut inputs: Vec<&Path> = vec![&sm_path, &train_path, &eval_path];
    if let Some(v) = &a.validation_suite {
        inputs.push(v);
    }
    for p in &inputs {
        require_exists(p, "input")?;
    }
    check_collisions(&inputs, &[&out])?;
    let sm = load_sm(&sm_path)?;
    let train = load_bundle(&train_path, "train suite")?;
    let eval = load_bundle(&eval_path, "eval suite")?;
    let validation = match &a.validation_suite {
        Some(p) => Some(load_bundle(p, "validation suite")?),
        None => None,
    };
    let mut named = vec![("train", train_path.as_path(), &train), ("eval", eval_path.as_path(), &eval)];
    if let (Some(p), Some(v)) = (&a.validation_suite, &validation) {
        named.push(("validation", p.as_path(), v));
    }
    check_leakage(&named)?;

    let params = TreeParams {
        max_depth: a.max_depth.unwrap_or(TreeParams::default().max_depth),
        min_samples_leaf: a.min_leaf.unwrap_or(TreeParams::default().min_samples_leaf),
        ccp_alpha: 0.0,
    };
    let train_rows = feature_rows(&sm, &train)?;
    let full = train_tree(&train_rows, params)?;
    let (alpha, candidates) = match &validation {
        Some(v) => {
            let rows = feature_rows(&sm, v)?;
            let mut best = (f64::NEG_INFINITY, 0.0);
            let mut tried = Vec::new();
            for alpha in ALPHA_GRID {
                let auc = auc_of(&full.prune(alpha), &rows, "validation")?;
                tried.push(json!({ "alpha": alpha, "auc": auc }));
                // Ties go to the stronger pruning.
                if auc >= best.0 {
                    best = (auc, alpha);
                }
            }
            (best.1, Some(tried))
        }
        None => (a.ccp_alpha.unwrap_or(0.0), None),
    };
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(CliError::usage("--ccp-alpha must be finite and non-negative"));
    }
    let mut tree = full.prune(alpha);
    tree.params.ccp_alpha = alpha;
    let eval_rows = feature_rows(&sm, &eval)?;
    let eval_auc = auc_of(&tree, &eval_rows, "eval")?;
    write_atomic(&out, tree.to_json()?.as_bytes())?;

    let importances: serde_json::Map<String, Value> = FEATURE_NAMES
        .iter()
        .zip(&tree.feature_importances)
        .map(|(n, v)| (n.to_string(), json!(v)))
        .collect();
    let mut table = Table::new(["feature", "importance"]);
    for i in tree.importance_ranking() {
        table.push(vec![FEATURE_NAMES[i].to_string(), fixed(tree.feature_importances[i], 4)]);
    }
    table.push(vec!["eval AUC".into(), fixed(eval_auc, 4)]);
    Ok(Report {
        json: json!({
            "artifact": out,
            "params": tree.params,
            "depth": tree.depth(),
            "leaves": tree.leaf_count(),
            "train": { "rows": train_rows.len(), "error_rate": error_rate(&train_rows) },
            "validation": candidates,
            "eval": { "rows": eval_rows.len(), "error_rate": error_rate(&eval_rows), "auc": eval_auc },
            "importances": importances,
        }),
        table,
    })
}

fn rule_text(r: &Rule) -> String {
    let op = match r.direction {
        Direction::Below => "<",
        Direction::AtOrAbove => ">=",
    };
    format!("{} {op} {}", r.feature, r.threshold)
}

fn prediction_json(tree: &DecisionTree, row: &FeatureRow) -> Value {
    let rules = explain_prediction(tree, row);
    let features: serde_json::Map<String, Value> = FEATURE_NAMES
        .iter()
        .zip(row.values())
        .map(|(n, v)| (n.to_string(), json!(v)))
        .collect();
    json!({
        "id": row.trace_id,
        "probability": predict_error(tree, row),
        "rules": rules,
        "features": features,
    })
}

pub fn predict(a: PredictArgs, format: Format) -> CliResult<Option<Report>> {
    let sm_path = required(a.sm, "sm")?;
    let tree_path = required(a.tree, "tree")?;
    let mut sm = load_sm(&sm_path)?;
    require_exists(&tree_path, "tree")?;
    let text = std::fs::read_to_string(&tree_path)?;
    let tree = DecisionTree::from_json(&text)?;

    let Some(suite_path) = a.suite else {
        // Online mode: one trace per line in, one prediction per line out.
        let stdin = std::io::stdin();
        let mut out = std::io::stdout().lock();
        let source = Path::new("<stdin>");
        for (i, line) in stdin.lock().lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let trace = parse_trace_line(&line, source, i + 1)?;
            for label in [trace.predicted_label, trace.true_label].into_iter().flatten() {
                if label >= sm.label_count() {
                    return Err(CliError::data(format!(
                        "<stdin>:{}: label {label} out of range for {} labels",
                        i + 1,
                        sm.label_count()
                    )));
                }
            }
            let at = sm.map_trace(&trace, true)?;
            let row = extract_features(&sm, &at);
            writeln!(out, "{}", prediction_json(&tree, &row))?;
            out.flush()?;
        }
        return Ok(None);
    };

    let suite = load_bundle(&suite_path, "suite")?;
    let rows = feature_rows(&sm, &suite)?;
    if format == Format::Json {
        let mut out = std::io::stdout().lock();
        for row in &rows {
            writeln!(out, "{}", prediction_json(&tree, row))?;
        }
        out.flush()?;
        return Ok(None);
    }
    let mut table = Table::new(["id", "probability", "path"]);
    for row in &rows {
        let path: Vec<String> = explain_prediction(&tree, row).iter().map(rule_text).collect();
        table.push(vec![row.trace_id.clone(), fixed(predict_error(&tree, row), 4), path.join(" & ")]);
    }
    Ok(Some(Report { json: Value::Null, table }))
}

fn bundle_summary(name: &str, b: &SynthBundle) -> (Value, Vec<String>) {
    let errors = b.truth.iter().filter(|t| t.error).count();
    let off = b.truth.iter().filter(|t| t.off_manifold).count();
    (
        json!({ "bundle": name, "traces": b.set.len(), "errors": errors, "off_manifold": off }),
        vec![name.to_string(), b.set.len().to_string(), errors.to_string(), off.to_string()],
    )
}

pub fn synth(a: SynthArgs) -> CliResult<Report> {
    let seed = required(a.seed, "seed")?;
    let out_dir = required(a.out_dir, "out-dir")?;
    check_dir_output(&out_dir, a.force)?;
    let d = SourceConfig::default();
    let e = d.error_model;
    let cfg = SourceConfig {
        dim: a.dim.unwrap_or(d.dim),
        transit_centers: a.transit_centers.unwrap_or(d.transit_centers),
        terminal_centers: a.terminal_centers.unwrap_or(d.terminal_centers),
        label_count: a.labels.unwrap_or(d.label_count),
        noise_sigma: a.noise_sigma.unwrap_or(d.noise_sigma),
        separation: a.separation.unwrap_or(d.separation),
        purity: a.purity.unwrap_or(d.purity),
        impure_fraction: a.impure_fraction.unwrap_or(d.impure_fraction),
        low_purity: a.low_purity.unwrap_or(d.low_purity),
        error_model: rnnsm::synth::ErrorModel {
            base_rate: a.base_rate.unwrap_or(e.base_rate),
            purity_threshold: a.purity_threshold.unwrap_or(e.purity_threshold),
            impure_boost: a.impure_boost.unwrap_or(e.impure_boost),
            off_manifold_boost: a.off_manifold_boost.unwrap_or(e.off_manifold_boost),
            placement: match a.placement {
                Some(PlacementArg::Silent) => ErrorPlacement::Silent,
                Some(PlacementArg::LabelFlip) => ErrorPlacement::LabelFlip,
                None => e.placement,
            },
        },
    };
    let length = a.length.unwrap_or(10);
    let src = PlantedSource::random(&cfg, seed)?;
    let train = src.generate(a.train_traces.unwrap_or(1000), length, src.noise_sigma)?;
    let suites = src.generate_suite_family(
        a.suites.unwrap_or(10),
        a.suite_size.unwrap_or(200),
        length,
        a.perturbation.unwrap_or(0.0),
    )?;
    let sidecar = |bundle: &SynthBundle| -> rnnsm::Result<String> {
        let gt = GroundTruth {
            source: src.clone(),
            traces: bundle.truth.clone(),
        };
        serde_json::to_string_pretty(&gt).map_err(|e| json_error("encoding ground truth", e))
    };
    write_dir_atomic(&out_dir, |tmp| {
        save_trace_bundle(&train.set, &tmp.join("train"))?;
        write_atomic(&tmp.join("train.truth.json"), sidecar(&train)?.as_bytes())?;
        for (i, s) in suites.iter().enumerate() {
            let name = format!("suite-{i:03}");
            save_trace_bundle(&s.set, &tmp.join("suites").join(&name))?;
            write_atomic(&tmp.join("suites").join(format!("{name}.truth.json")), sidecar(s)?.as_bytes())?;
        }
        Ok(())
    })?;
    let mut table = Table::new(["bundle", "traces", "errors", "off-manifold"]);
    let mut bundles = Vec::new();
    let (j, row) = bundle_summary("train", &train);
    bundles.push(j);
    table.push(row);
    for (i, s) in suites.iter().enumerate() {
        let (j, row) = bundle_summary(&format!("suites/suite-{i:03}"), s);
        bundles.push(j);
        table.push(row);
    }
    Ok(Report {
        json: json!({
            "out_dir": out_dir,
            "seed": seed,
            "centers": src.centers.len(),
            "bundles": bundles,
        }),
        table,
    })
}

pub fn sweep_k(a: SweepArgs) -> CliResult<Report> {
    let train = load_bundle(&required(a.train, "train")?, "training bundle")?;
    let ks = required(a.k_list, "k-list")?;
    let seed = required(a.seed, "seed")?;
    let exponent = a.exponent.unwrap_or(DEFAULT_EXPONENT);
    let report = sweep(&train, &ks, seed, exponent)?;
    let mut table = Table::new([
        "K", "final states", "purity (%)", "richness", "goodness", "scale", "note", "recommended",
    ]);
    for e in &report.entries {
        let mut row = vec![e.k.to_string()];
        row.extend(score_cells(&e.score));
        row.push(if report.recommended == Some(e.k) { "*".into() } else { String::new() });
        table.push(row);
    }
    Ok(Report {
        json: serde_json::to_value(&report).map_err(|e| CliError::internal(e.to_string()))?,
        table,
    })
}

pub fn infer(a: InferArgs) -> CliResult<Report> {
    let weights_path = required(a.weights, "weights")?;
    let inputs_path = required(a.inputs, "inputs")?;
    let out = required(a.out, "out")?;
    require_exists(&weights_path, "weights")?;
    require_exists(&inputs_path, "inputs")?;
    check_collisions(&[&weights_path, &inputs_path], &[&out])?;
    check_dir_output(&out, a.force)?;
    let weights = RnnWeights::load(&weights_path)?;
    let file = std::fs::File::open(&inputs_path)?;
    let mut batch = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let seq: InputSequence = serde_json::from_str(&line).map_err(|e| rnnsm::Error::Malformed {
            path: inputs_path.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        batch.push(seq);
    }
    let traces = run_batch(&weights, &batch)?;
    let role = match a.role.unwrap_or(RoleArg::Test) {
        RoleArg::Training => Role::Training,
        RoleArg::Test => Role::Test,
    };
    let set = TraceSet::new(traces, weights.labels.clone(), weights.state_dim(), role)?;
    save_trace_bundle(&set, &out)?;
    let mut table = Table::new(["bundle", "traces", "state dim", "role"]);
    table.push(vec![
        out.display().to_string(),
        set.len().to_string(),
        set.dimension().to_string(),
        role.to_string(),
    ]);
    Ok(Report {
        json: json!({ "bundle": out, "traces": set.len(), "dimension": set.dimension(), "role": role }),
        table,
    })
}
