#include "cli.hpp"

#include "dula/error.hpp"
#include "dula/kernels.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

namespace dula::cli {

namespace fs = std::filesystem;
using io::json;

namespace {

json weights_json(const PoseWeights& w) {
    return {{"position", w.position}, {"orientation", w.orientation}};
}

// Collects the files a command writes so the manifest can hash them.
struct Outputs {
    fs::path dir;
    std::vector<std::string> files;          // reproducible artifacts
    std::vector<std::string> volatile_files;  // timing data, excluded from replay checks

    fs::path add(const std::string& name) {
        files.push_back(name);
        return dir / name;
    }
    fs::path add_volatile(const std::string& name) {
        volatile_files.push_back(name);
        return dir / name;
    }
};

std::string hash_file(const fs::path& p) { return io::fnv1a_hex(io::read_file(p)); }

fs::path input_path(const json& args, const char* key) {
    if (!args.contains(key) || args.at(key).is_null()) {
        throw InvalidInput(std::string("missing required input --") + key);
    }
    const fs::path p = args.at(key).get<std::string>();
    if (!fs::exists(p)) throw InvalidInput("input not found: " + p.string());
    return p;
}

template <typename T>
T arg(const json& args, const char* key, T fallback) {
    if (!args.contains(key) || args.at(key).is_null()) return fallback;
    return args.at(key).get<T>();
}

void print_confusion(std::ostream& out, const ConfusionMatrix& cm) {
    out << "true\\pred";
    for (int p = 1; p <= kNumLabels; ++p) out << std::setw(8) << p;
    out << "   acc\n";
    for (int t = 1; t <= kNumLabels; ++t) {
        out << std::setw(9) << t;
        for (int p = 1; p <= kNumLabels; ++p) {
            out << std::setw(8) << cm.counts[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(p - 1)];
        }
        const double a = cm.class_accuracy(t);
        out << "  " << (std::isnan(a) ? std::string("  -") : std::to_string(a).substr(0, 6)) << "\n";
    }
    out << "accuracy " << cm.accuracy() << "  min diagonal " << cm.min_diagonal() << "\n";
}

Dataset load_or_generate_eval_set(const json& args, const RunConfig& cfg, const SurrogateModel& model) {
    if (args.contains("data") && !args.at("data").is_null()) {
        Dataset data = read_dataset(input_path(args, "data"));
        if (arg(args, "test_split", false)) {
            // train splits with its own seed unless told otherwise
            const auto seed = arg<std::uint64_t>(args, "split_seed", model.training().seed);
            return split(data, cfg.dataset.split_fraction, seed).test;
        }
        return data;
    }
    DatasetSpec spec = cfg.dataset;
    spec.total_count = arg<std::size_t>(args, "count", 20'000);
    spec.rng_seed = arg<std::uint64_t>(args, "seed", 1'000'003);
    return generate_balanced(spec);
}

// ---- commands ------------------------------------------------------------------

void cmd_gen_data(const json& args, const RunConfig& cfg, Outputs& o, std::ostream& out) {
    DatasetSpec spec = cfg.dataset;
    spec.total_count = arg(args, "count", spec.total_count);
    spec.rng_seed = arg(args, "seed", spec.rng_seed);
    spec.per_label_min_fraction = arg(args, "min_fraction", spec.per_label_min_fraction);
    spec.validate();
    const Dataset data = generate_balanced(spec);
    const std::string name = arg<std::string>(args, "out", "dataset.bin");
    DatasetHeaderInfo info;
    info.seed = spec.rng_seed;
    info.per_label_min_fraction = spec.per_label_min_fraction;
    write_dataset(o.add(name), data, info);
    if (arg(args, "csv", false)) write_dataset_csv(o.add(fs::path(name).replace_extension(".csv").string()), data);
    const auto h = label_histogram(data);
    out << "wrote " << data.size() << " samples to " << (o.dir / name).string() << "\nlabel counts:";
    for (auto c : h) out << ' ' << c;
    out << '\n';
}

void cmd_train(const json& args, const RunConfig& cfg, Outputs& o, std::ostream& out) {
    const Dataset data = read_dataset(input_path(args, "data"));
    TrainConfig tc = cfg.train;
    tc.epochs = arg(args, "epochs", tc.epochs);
    tc.learning_rate = arg(args, "lr", tc.learning_rate);
    tc.batch_size = arg(args, "batch", tc.batch_size);
    tc.rng_seed = arg(args, "seed", tc.rng_seed);
    tc.cosine_decay = arg(args, "cosine", tc.cosine_decay);
    if (args.contains("optimizer") && !args.at("optimizer").is_null()) {
        json j = tc.to_json();
        j["optimizer"] = args.at("optimizer");
        tc = TrainConfig::from_json(j);
    }
    tc.validate();
    const auto parts = split(data, cfg.dataset.split_fraction, arg(args, "split_seed", tc.rng_seed));
    const bool verbose = arg(args, "verbose", false);
    const auto t0 = std::chrono::steady_clock::now();
    const TrainResult r = train(parts.train, tc, {}, [&](std::size_t e, double loss) {
        if (verbose || (e + 1) % 50 == 0 || e + 1 == tc.epochs) {
            out << "epoch " << e + 1 << "/" << tc.epochs << " loss " << loss << '\n' << std::flush;
        }
    });
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    save_model(o.add(arg<std::string>(args, "out", "model.json")), r.model);
    io::write_json(o.add_volatile("train_timing.json"),
                   {{"schema_version", 1}, {"train_seconds", seconds}, {"kernels", kernels::active().name}});

    const ConfusionMatrix cm = confusion_matrix(r.model, parts.test);
    print_confusion(out, cm);
    json metrics = {{"schema_version", 1},
                    {"train_size", parts.train.size()},
                    {"test_size", parts.test.size()},
                    {"epoch_loss", r.metrics.epoch_loss},
                    {"test_mse", mean_squared_error(r.model, parts.test)},
                    {"confusion", cm.to_json()}};
    if (arg(args, "cv", false)) {
        const CrossValidationReport cv = cross_validate(data, tc);
        metrics["cross_validation"] = {{"fold_accuracy", cv.fold_accuracy},
                                       {"fold_sizes", cv.fold_sizes},
                                       {"mean_accuracy", cv.mean_accuracy},
                                       {"stddev_accuracy", cv.stddev_accuracy}};
        out << "cv accuracy " << cv.mean_accuracy << " +- " << cv.stddev_accuracy << '\n';
    }
    io::write_json(o.add("train_metrics.json"), metrics);
}

void cmd_eval(const json& args, const RunConfig& cfg, Outputs& o, std::ostream& out) {
    const SurrogateModel model = load_model(input_path(args, "model"));
    const Dataset data = load_or_generate_eval_set(args, cfg, model);
    const ConfusionMatrix cm = confusion_matrix(model, data);
    print_confusion(out, cm);
    io::write_json(o.add(arg<std::string>(args, "out", "eval.json")),
                   {{"schema_version", 1},
                    {"samples", data.size()},
                    {"mse", mean_squared_error(model, data)},
                    {"confusion", cm.to_json()}});
}

void cmd_grad_check(const json& args, const RunConfig&, Outputs& o, std::ostream& out, int& code) {
    const SurrogateModel model = load_model(input_path(args, "model"));
    const std::size_t count = arg<std::size_t>(args, "count", 500);
    const double h = arg(args, "step", 1e-5);
    const double tol = arg(args, "tolerance", 1e-4);
    const GradientCheckReport r =
        gradient_check(model, count, arg<std::uint64_t>(args, "seed", 0), h, tol);
    const bool pass = r.pass();
    out << "grad-check: " << r.checked << " points, " << r.excluded_near_kink
        << " near kinks, max rel err " << r.max_relative_error << (pass ? " PASS" : " FAIL") << '\n';
    io::write_json(o.add(arg<std::string>(args, "out", "grad_check.json")),
                   {{"schema_version", 1},
                    {"points", count},
                    {"checked", r.checked},
                    {"excluded_near_kink", r.excluded_near_kink},
                    {"failed", r.failed},
                    {"max_relative_error", r.max_relative_error},
                    {"tolerance", tol},
                    {"pass", pass}});
    if (!pass) code = kRuntime;
}

void cmd_optimize(const json& args, const RunConfig& cfg, Outputs& o, std::ostream& out) {
    OptimizationTask task =
        make_task_batch(1, arg<std::uint64_t>(args, "task_seed", 0), cfg.limits, cfg.body).front();
    if (args.contains("start") && !args.at("start").is_null()) {
        task.start = posture_from_json(io::read_json(input_path(args, "start")));
        task.constraint.target = forward_kinematics(task.start, cfg.body);
    }
    if (args.contains("context") && !args.at("context").is_null()) {
        task.context = context_from_json(io::read_json(input_path(args, "context")));
    }
    if (args.contains("target_pose") && !args.at("target_pose").is_null()) {
        task.constraint.target = pose_from_json(io::read_json(input_path(args, "target_pose")));
    }
    task.constraint.weights = cfg.constraint_weights;
    task.constraint.tolerance = cfg.constraint_tolerance;

    const std::string method = arg<std::string>(args, "method", "grad");
    const auto seed = arg<std::uint64_t>(args, "seed", 0);
    OptResult r;
    std::optional<SurrogateModel> model;
    if (args.contains("model") && !args.at("model").is_null()) model = load_model(input_path(args, "model"));
    if (method == "grad") {
        if (!model) throw InvalidInput("--model is required for --method grad");
        GradientOptions go = cfg.gradient;
        go.seed = seed;
        go.limits = cfg.limits;
        go.dims = cfg.body;
        r = optimize_gradient(*model, task.context, task.start, task.constraint, go);
    } else if (method == "cem") {
        CemOptions co = cfg.cem;
        co.seed = seed;
        co.limits = cfg.limits;
        co.dims = cfg.body;
        r = optimize_cem(rula_grand, task.context, task.start, task.constraint, co);
        if (model) r.dula_score = model->predict(r.q_star, task.context);
    } else {
        throw InvalidInput("--method must be grad or cem");
    }
    json doc = to_json(r, false);
    doc["start"] = posture_to_json(task.start);
    doc["start_rula"] = rula_grand(task.start, task.context);
    doc["context"] = context_to_json(task.context);
    doc["target_pose"] = pose_to_json(task.constraint.target);
    io::write_json(o.add(arg<std::string>(args, "out", "optimize.json")), doc);
    out << r.method << ": RULA " << doc["start_rula"].get<int>() << " -> " << r.rula_grand
        << ", constraint " << r.constraint_value << (r.feasible ? " (feasible)" : " (infeasible)")
        << ", " << r.iterations << " iterations, " << r.wall_time_s << " s\n";
}

void cmd_compare(const json& args, const RunConfig& cfg, Outputs& o, std::ostream& out) {
    const SurrogateModel model = load_model(input_path(args, "model"));
    const auto tasks = make_task_batch(arg<std::size_t>(args, "tasks", 50),
                                       arg<std::uint64_t>(args, "seed", 0), cfg.limits, cfg.body);
    GradientOptions go = cfg.gradient;
    go.limits = cfg.limits;
    go.dims = cfg.body;
    CemOptions co = cfg.cem;
    co.population = arg(args, "population", co.population);
    co.limits = cfg.limits;
    co.dims = cfg.body;
    const ComparisonReport rep = compare(model, rula_grand, tasks, go, co);
    io::write_json(o.add(arg<std::string>(args, "out", "compare.json")), to_json(rep, false));
    io::write_json(o.add_volatile("compare_timing.json"), to_json(rep, true));
    out << "median RULA: gradient " << rep.median_rula_gradient << ", cem " << rep.median_rula_cem
        << "\nmedian time: gradient " << rep.median_time_gradient_s << " s, cem "
        << rep.median_time_cem_s << " s, ratio " << rep.time_ratio << '\n';
}

void cmd_simulate(const json& args, const RunConfig& cfg, Outputs& o, std::ostream& out) {
    const SurrogateModel model = load_model(input_path(args, "model"));
    HumanModelConfig human = cfg.human;
    human.alpha = arg(args, "alpha", human.alpha);
    human.limits = cfg.limits;
    human.dims = cfg.body;
    human.validate();
    CorrectionConfig corr;
    corr.mode = parse_correction(arg<std::string>(args, "correction", "grad"));
    corr.period = cfg.correction_period;
    corr.gradient = cfg.gradient;
    corr.cem = cfg.cem;

    const auto episodes = arg<std::size_t>(args, "seeds", 20);
    const auto seed0 = arg<std::uint64_t>(args, "seed", 0);
    std::vector<TeleopTask> tasks;
    if (args.contains("task") && !args.at("task").is_null()) {
        const TeleopTask t = teleop_task_from_json(io::read_json(input_path(args, "task")));
        tasks.assign(episodes, t);
    } else {
        tasks = demo_suite(episodes, seed0, human);
    }

    json summary = {{"schema_version", 1},
                    {"alpha", human.alpha},
                    {"correction", correction_name(corr.mode)},
                    {"episodes", json::array()}};
    std::vector<double> exec_none, exec_corr, steps_none, steps_corr;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const std::uint64_t seed = seed0 + i;
        CorrectionConfig none = corr;
        none.mode = Correction::none;
        const SimulationTrace base = run_episode(tasks[i], human, model, none, seed);
        const std::string stem = "episode_" + std::to_string(i);
        io::write_file_atomic(o.add(stem + "_none.jsonl"), trace_jsonl(base));
        json ep = {{"episode", i}, {"seed", seed}, {"none", summary_json(base)}};
        const auto mb = episode_metrics(base);
        exec_none.push_back(mb.median_executed_rula);
        steps_none.push_back(static_cast<double>(mb.completion_steps));
        if (corr.mode != Correction::none) {
            const SimulationTrace t = run_episode(tasks[i], human, model, corr, seed);
            io::write_file_atomic(o.add(stem + "_" + std::string(correction_name(corr.mode)) + ".jsonl"),
                                  trace_jsonl(t));
            ep["corrected"] = summary_json(t);
            const auto mc = episode_metrics(t);
            exec_corr.push_back(mc.median_executed_rula);
            steps_corr.push_back(static_cast<double>(mc.completion_steps));
        }
        summary["episodes"].push_back(ep);
    }
    summary["median_executed_rula_none"] = median(exec_none);
    summary["median_completion_steps_none"] = median(steps_none);
    if (!exec_corr.empty()) {
        summary["median_executed_rula_corrected"] = median(exec_corr);
        summary["median_completion_steps_corrected"] = median(steps_corr);
    }
    io::write_json(o.add("simulation_summary.json"), summary);
    out << tasks.size() << " episodes; median executed RULA none " << median(exec_none);
    if (!exec_corr.empty()) out << ", " << correction_name(corr.mode) << " " << median(exec_corr);
    out << "; median completion steps none " << median(steps_none);
    if (!steps_corr.empty()) out << ", " << correction_name(corr.mode) << " " << median(steps_corr);
    out << '\n';
}

void cmd_report(const json& args, const RunConfig&, Outputs& o, std::ostream& out) {
    const fs::path dir = arg<std::string>(args, "traces", o.dir.string());
    if (!fs::is_directory(dir)) throw InvalidInput("trace directory not found: " + dir.string());
    // episode index -> (uncorrected, corrected)
    std::map<std::size_t, std::pair<std::optional<SimulationTrace>, std::optional<SimulationTrace>>> eps;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().extension() == ".jsonl") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& p : files) {
        const std::string stem = p.stem().string();
        if (stem.rfind("episode_", 0) != 0) continue;
        const auto us = stem.find('_', 8);
        if (us == std::string::npos) continue;
        const std::size_t idx = std::stoul(stem.substr(8, us - 8));
        SimulationTrace t = read_trace_jsonl(io::read_file(p));
        if (t.correction == Correction::none) {
            eps[idx].first = std::move(t);
        } else {
            eps[idx].second = std::move(t);
        }
    }
    if (eps.empty()) throw InvalidInput("no episode traces in " + dir.string());
    for (const auto& [idx, pair] : eps) {
        std::ostringstream csv;
        csv << "step,suggested,uncorrected,corrected\n";
        const std::size_t n = std::max(pair.first ? pair.first->steps.size() : 0,
                                       pair.second ? pair.second->steps.size() : 0);
        for (std::size_t s = 0; s < n; ++s) {
            csv << s << ',';
            if (pair.second && s < pair.second->steps.size() && pair.second->steps[s].suggested_rula) {
                csv << *pair.second->steps[s].suggested_rula;
            }
            csv << ',';
            if (pair.first && s < pair.first->steps.size()) csv << pair.first->steps[s].rula_grand;
            csv << ',';
            if (pair.second && s < pair.second->steps.size()) csv << pair.second->steps[s].rula_grand;
            csv << '\n';
        }
        io::write_file_atomic(o.add("episode_" + std::to_string(idx) + ".csv"), csv.str());
    }
    out << "wrote " << eps.size() << " episode series\n";
}

void cmd_export_tables(const json& args, const RunConfig&, Outputs& o, std::ostream& out) {
    namespace t = rula_tables;
    json a = json::array(), b = json::array(), c = json::array();
    for (int ua = 0; ua < t::kUpperArm; ++ua) {
        json la_rows = json::array();
        for (int la = 0; la < t::kLowerArm; ++la) {
            json w_rows = json::array();
            for (int w = 0; w < t::kWrist; ++w) {
                w_rows.push_back({t::table_a()[ua][la][w][0], t::table_a()[ua][la][w][1]});
            }
            la_rows.push_back(w_rows);
        }
        a.push_back(la_rows);
    }
    for (int n = 0; n < t::kNeck; ++n) {
        json rows = json::array();
        for (int tr = 0; tr < t::kTrunk; ++tr) rows.push_back({t::table_b()[n][tr][0], t::table_b()[n][tr][1]});
        b.push_back(rows);
    }
    for (int sc = 0; sc < t::kScoreC; ++sc) {
        json row = json::array();
        for (int sd = 0; sd < t::kScoreD; ++sd) row.push_back(t::table_c()[sc][sd]);
        c.push_back(row);
    }
    const RulaThresholds th;
    io::write_json(o.add(arg<std::string>(args, "out", "rula_tables.json")),
                   {{"schema_version", 1},
                    {"table_a_index", {"upper_arm", "lower_arm", "wrist", "wrist_twist"}},
                    {"table_a", a},
                    {"table_b_index", {"neck", "trunk", "legs"}},
                    {"table_b", b},
                    {"table_c_index", {"score_c", "score_d"}},
                    {"table_c", c},
                    {"thresholds_deg",
                     {{"shoulder_abduction", th.shoulder_abduction},
                      {"wrist_twist", th.wrist_twist},
                      {"trunk_twist", th.trunk_twist},
                      {"trunk_side_bend", th.trunk_side_bend},
                      {"wrist_deviation", th.wrist_deviation},
                      {"wrist_neutral", th.wrist_neutral},
                      {"trunk_upright", th.trunk_upright}}}});
    out << "wrote RULA tables\n";
}

json versions() {
    return {{"dula", kVersion},
            {"compiler", __VERSION__},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                          "." + std::to_string(EIGEN_MINOR_VERSION)},
            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
            {"kernels", std::string(kernels::active().name)}};
}

}  // namespace

// ---- RunConfig ------------------------------------------------------------------

json RunConfig::to_json() const {
    return {{"schema_version", 1},
            {"body", body_to_json(body)},
            {"limits", limits_to_json(limits)},
            {"dataset", dataset_spec_to_json(dataset)},
            {"train", train.to_json()},
            {"constraint",
             {{"weights", weights_json(constraint_weights)}, {"tolerance", constraint_tolerance}}},
            {"gradient", gradient_options_to_json(gradient)},
            {"cem", cem_options_to_json(cem)},
            {"human", human_to_json(human)},
            {"correction_period", correction_period}};
}

RunConfig RunConfig::from_json(const json& doc) {
    RunConfig c;
    if (!doc.is_object()) throw InvalidInput("config must be a JSON object");
    static const std::vector<std::string> known = {"schema_version", "body",  "limits",
                                                   "dataset",        "train", "constraint",
                                                   "gradient",       "cem",   "human",
                                                   "correction_period"};
    for (const auto& [key, value] : doc.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw InvalidInput("unknown config key '" + key + "'");
        }
    }
    try {
        if (doc.contains("body")) c.body = body_from_json(doc.at("body"));
        if (doc.contains("limits")) c.limits = limits_from_json(doc.at("limits"));
        if (doc.contains("dataset")) c.dataset = dataset_spec_from_json(doc.at("dataset"));
        if (doc.contains("train")) c.train = TrainConfig::from_json(doc.at("train"));
        if (doc.contains("constraint")) {
            const auto& k = doc.at("constraint");
            if (k.contains("weights")) {
                c.constraint_weights.position = k.at("weights").value("position", c.constraint_weights.position);
                c.constraint_weights.orientation =
                    k.at("weights").value("orientation", c.constraint_weights.orientation);
            }
            c.constraint_tolerance = k.value("tolerance", c.constraint_tolerance);
            PoseConstraint probe;
            probe.weights = c.constraint_weights;
            probe.tolerance = c.constraint_tolerance;
            probe.validate();
        }
        if (doc.contains("gradient")) c.gradient = gradient_options_from_json(doc.at("gradient"));
        if (doc.contains("cem")) c.cem = cem_options_from_json(doc.at("cem"));
        if (doc.contains("human")) c.human = human_from_json(doc.at("human"));
        c.correction_period = doc.value("correction_period", c.correction_period);
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("malformed config: ") + e.what());
    }
    if (c.correction_period == 0) throw InvalidInput("correction_period must be >= 1");
    return c;
}

// ---- execution ------------------------------------------------------------------

int execute(const std::string& command, const json& args, const RunConfig& config,
            const fs::path& out_dir, std::ostream& out) {
    fs::create_directories(out_dir);
    Outputs o{out_dir, {}, {}};
    int code = kOk;
    if (command == "gen-data") {
        cmd_gen_data(args, config, o, out);
    } else if (command == "train") {
        cmd_train(args, config, o, out);
    } else if (command == "eval") {
        cmd_eval(args, config, o, out);
    } else if (command == "grad-check") {
        cmd_grad_check(args, config, o, out, code);
    } else if (command == "optimize") {
        cmd_optimize(args, config, o, out);
    } else if (command == "compare") {
        cmd_compare(args, config, o, out);
    } else if (command == "simulate") {
        cmd_simulate(args, config, o, out);
    } else if (command == "report") {
        cmd_report(args, config, o, out);
    } else if (command == "export-tables") {
        cmd_export_tables(args, config, o, out);
    } else {
        throw InvalidInput("unknown command '" + command + "'");
    }

    json inputs = json::object();
    for (const char* key : {"data", "model", "context", "start", "target_pose", "task"}) {
        if (args.contains(key) && !args.at(key).is_null()) {
            const std::string p = args.at(key).get<std::string>();
            inputs[p] = hash_file(p);
        }
    }
    json outputs = json::object();
    for (const auto& f : o.files) outputs[f] = hash_file(out_dir / f);
    const json cfg = config.to_json();
    const json manifest = {{"schema_version", 1},
                           {"tool", "dula"},
                           {"command", command},
                           {"args", args},
                           {"config", cfg},
                           {"config_hash", io::fnv1a_hex(cfg.dump() + args.dump())},
                           {"seed", args.contains("seed") ? args.at("seed") : json(nullptr)},
                           {"versions", versions()},
                           {"inputs", inputs},
                           {"outputs", outputs},
                           {"volatile_outputs", o.volatile_files}};
    io::write_json(out_dir / (command + ".manifest.json"), manifest);
    return code;
}

namespace {

int replay(const fs::path& manifest_path, const std::optional<fs::path>& out_override,
           std::ostream& out) {
    const json m = io::read_json(manifest_path);
    if (!m.contains("command") || !m.contains("args") || !m.contains("outputs")) {
        throw FormatError("not a manifest: " + manifest_path.string());
    }
    const fs::path dir = out_override ? *out_override : manifest_path.parent_path() / "replay";
    json args = m.at("args");
    // a report reads traces from its own output directory unless pointed elsewhere
    if (m.at("command") == "report" && !args.contains("traces")) {
        args["traces"] = fs::absolute(manifest_path.parent_path()).string();
    }
    const RunConfig cfg = RunConfig::from_json(m.at("config"));
    std::ostringstream sink;
    execute(m.at("command").get<std::string>(), args, cfg, dir, sink);
    std::size_t mismatches = 0;
    for (const auto& [name, hash] : m.at("outputs").items()) {
        const fs::path p = dir / name;
        const std::string got = fs::exists(p) ? hash_file(p) : std::string("missing");
        if (got != hash.get<std::string>()) {
            ++mismatches;
            out << "MISMATCH " << name << ": expected " << hash.get<std::string>() << ", got " << got
                << '\n';
        }
    }
    out << "replayed " << m.at("command").get<std::string>() << " into " << dir.string() << ": "
        << m.at("outputs").size() - mismatches << "/" << m.at("outputs").size()
        << " artifacts identical\n";
    return mismatches == 0 ? kOk : kRuntime;
}

fs::path default_out_dir() {
    if (const char* env = std::getenv("DULA_OUT_DIR"); env && *env) return env;
    return ".";
}

}  // namespace

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"DULA: differentiable RULA surrogate, postural optimization and teleoperation simulation",
                 "dula"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path;
    std::string out_dir;
    app.add_option("--config", config_path, "RunConfig JSON file");
    app.add_option("--out-dir", out_dir, "Output directory (default $DULA_OUT_DIR or .)");
    app.set_version_flag("--version", kVersion);

    json args = json::object();
    // Options are bound to optionals so that unset flags fall back to the config file.
    struct Bound {
        std::string key;
        std::function<json()> get;
    };
    std::map<std::string, std::vector<Bound>> bound;
    std::vector<std::shared_ptr<void>> storage;

    auto opt = [&]<typename T>(CLI::App* sub, const std::string& flag, const std::string& key,
                               const std::string& help, T* /*tag*/) {
        auto holder = std::make_shared<std::optional<T>>();
        storage.push_back(holder);
        sub->add_option(flag, *holder, help);
        bound[sub->get_name()].push_back({key, [holder]() -> json {
                                              if (!*holder) return json(nullptr);
                                              return json(**holder);
                                          }});
    };
    auto flag = [&](CLI::App* sub, const std::string& name, const std::string& key,
                    const std::string& help) {
        auto holder = std::make_shared<bool>(false);
        storage.push_back(holder);
        sub->add_flag(name, *holder, help);
        bound[sub->get_name()].push_back({key, [holder]() -> json { return *holder ? json(true) : json(nullptr); }});
    };
    auto path_opt = [&](CLI::App* sub, const std::string& flag_name, const std::string& key,
                        const std::string& help) {
        auto holder = std::make_shared<std::optional<std::string>>();
        storage.push_back(holder);
        sub->add_option(flag_name, *holder, help);
        bound[sub->get_name()].push_back({key, [holder]() -> json {
                                              if (!*holder) return json(nullptr);
                                              return json(fs::absolute(**holder).lexically_normal().string());
                                          }});
    };
    std::size_t* sz = nullptr;
    std::uint64_t* u64 = nullptr;
    double* dbl = nullptr;
    std::string* str = nullptr;

    auto* gen = app.add_subcommand("gen-data", "Generate a balanced labeled dataset");
    opt(gen, "--count", "count", "Number of samples", sz);
    opt(gen, "--seed", "seed", "RNG seed", u64);
    opt(gen, "--min-fraction", "min_fraction", "Per-label minimum fraction", dbl);
    opt(gen, "--out", "out", "Output file name (dataset.bin)", str);
    flag(gen, "--csv", "csv", "Also write a CSV export");

    auto* tr = app.add_subcommand("train", "Train the surrogate on a dataset");
    path_opt(tr, "--data", "data", "Dataset file");
    opt(tr, "--epochs", "epochs", "Training epochs", sz);
    opt(tr, "--lr", "lr", "Learning rate", dbl);
    opt(tr, "--batch", "batch", "Minibatch size", sz);
    opt(tr, "--seed", "seed", "Training seed", u64);
    opt(tr, "--split-seed", "split_seed", "Train/test split seed (default: training seed)", u64);
    opt(tr, "--optimizer", "optimizer", "adam or sgd", str);
    flag(tr, "--cosine", "cosine", "Cosine learning-rate decay");
    flag(tr, "--cv", "cv", "Also run k-fold cross-validation");
    flag(tr, "--verbose", "verbose", "Print every epoch");
    opt(tr, "--out", "out", "Checkpoint file name (model.json)", str);

    auto* ev = app.add_subcommand("eval", "Confusion matrix and rounded accuracy of a checkpoint");
    path_opt(ev, "--model", "model", "Checkpoint");
    path_opt(ev, "--data", "data", "Dataset file (default: fresh balanced set)");
    flag(ev, "--test-split", "test_split", "Evaluate only the held-out split of --data");
    opt(ev, "--split-seed", "split_seed", "Split seed for --test-split (default: the model's training seed)", u64);
    opt(ev, "--count", "count", "Size of the generated evaluation set", sz);
    opt(ev, "--seed", "seed", "Seed of the generated evaluation set", u64);
    opt(ev, "--out", "out", "Output file name (eval.json)", str);

    auto* gc = app.add_subcommand("grad-check", "Compare input gradients with central differences");
    path_opt(gc, "--model", "model", "Checkpoint");
    opt(gc, "--count", "count", "Random feature vectors (500)", sz);
    opt(gc, "--seed", "seed", "RNG seed", u64);
    opt(gc, "--step", "step", "Finite-difference step (1e-5)", dbl);
    opt(gc, "--tolerance", "tolerance", "Relative tolerance (1e-4)", dbl);
    opt(gc, "--out", "out", "Output file name (grad_check.json)", str);

    auto* op = app.add_subcommand("optimize", "Postural optimization for one task");
    path_opt(op, "--model", "model", "Checkpoint");
    path_opt(op, "--context", "context", "TaskContext JSON");
    path_opt(op, "--start", "start", "Start posture JSON");
    path_opt(op, "--target-pose", "target_pose", "Target hand pose JSON (default: hand pose of start)");
    opt(op, "--task-seed", "task_seed", "Seed of the generated task used for unset inputs", u64);
    opt(op, "--method", "method", "grad or cem", str);
    opt(op, "--seed", "seed", "Solver seed", u64);
    opt(op, "--out", "out", "Output file name (optimize.json)", str);

    auto* cmp = app.add_subcommand("compare", "Gradient vs CEM over a seeded task batch");
    path_opt(cmp, "--model", "model", "Checkpoint");
    opt(cmp, "--tasks", "tasks", "Batch size (50)", sz);
    opt(cmp, "--seed", "seed", "Task seed", u64);
    opt(cmp, "--population", "population", "CEM population", sz);
    opt(cmp, "--out", "out", "Output file name (compare.json)", str);

    auto* sim = app.add_subcommand("simulate", "Teleoperation episodes with postural correction");
    path_opt(sim, "--model", "model", "Checkpoint");
    path_opt(sim, "--task", "task", "TeleopTask JSON (default: demo suite)");
    opt(sim, "--alpha", "alpha", "Correction acceptance in [0, 1]", dbl);
    opt(sim, "--correction", "correction", "none, grad or cem", str);
    opt(sim, "--seeds", "seeds", "Number of episodes (20)", sz);
    opt(sim, "--seed", "seed", "First episode seed", u64);

    auto* rep = app.add_subcommand("report", "CSV series (suggested/uncorrected/corrected) from traces");
    path_opt(rep, "--traces", "traces", "Trace directory (default: output directory)");

    auto* ex = app.add_subcommand("export-tables", "Write RULA lookup tables as JSON");
    opt(ex, "--out", "out", "Output file name (rula_tables.json)", str);

    auto* rp = app.add_subcommand("replay", "Re-run a manifest and verify byte-identical outputs");
    std::string manifest;
    rp->add_option("manifest", manifest, "Manifest file")->required();

    std::vector<std::string> rev(argv.rbegin(), argv.rend());
    if (!rev.empty()) rev.pop_back();  // program name
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << '\n';
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n\n" << app.help();
        return kUsage;
    }

    try {
        RunConfig cfg;
        if (!config_path.empty()) cfg = RunConfig::from_json(io::read_json(config_path));
        const fs::path dir = out_dir.empty() ? default_out_dir() : fs::path(out_dir);
        auto* sub = app.get_subcommands().front();
        if (sub->get_name() == "replay") {
            std::optional<fs::path> o;
            if (!out_dir.empty()) o = fs::path(out_dir);
            return replay(manifest, o, out);
        }
        for (const auto& b : bound[sub->get_name()]) {
            json v = b.get();
            if (!v.is_null()) args[b.key] = v;
        }
        return execute(sub->get_name(), args, cfg, dir, out);
    } catch (const InvalidInput& e) {
        err << "error: " << e.what() << '\n';
        return kValidation;
    } catch (const FormatError& e) {
        err << "error: " << e.what() << '\n';
        return kValidation;
    } catch (const json::exception& e) {
        err << "error: " << e.what() << '\n';
        return kValidation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kRuntime;
    }
}

}  // namespace dula::cli
