#include "dula/teleop.hpp"

#include "dula/dataset.hpp"
#include "dula/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>

namespace dula {

HandPose RigidTransform::apply(const HandPose& p) const {
    return {rotation * p.position + translation, (rotation * p.orientation).normalized()};
}

HandPose RigidTransform::apply_inverse(const HandPose& p) const {
    const Eigen::Quaterniond inv = rotation.conjugate();
    return {inv * (p.position - translation), (inv * p.orientation).normalized()};
}

void TeleopTask::validate() const {
    if (!(goal_tolerance > 0.0)) throw InvalidInput("goal tolerance must be positive");
    if (max_steps == 0) throw InvalidInput("max_steps must be >= 1");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidInput("dt must be positive");
    if (!(goal_weights.position >= 0.0 && goal_weights.orientation >= 0.0) ||
        !(goal_weights.position > 0.0 || goal_weights.orientation > 0.0)) {
        throw InvalidInput("goal weights must be nonnegative with one positive");
    }
    if (!start.is_finite()) throw InvalidInput("start posture is not finite");
    context.validate();
}

void HumanModelConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidInput("alpha must lie in [0, 1]");
    if (horizon == 0) throw InvalidInput("horizon must be >= 1");
    if (replan_period == 0) throw InvalidInput("replan_period must be >= 1");
    if (!(velocity_limit > 0.0) || !std::isfinite(velocity_limit)) {
        throw InvalidInput("velocity limit must be positive");
    }
    limits.validate();
    dims.validate();
}

std::string_view correction_name(Correction c) {
    switch (c) {
        case Correction::none: return "none";
        case Correction::grad: return "grad";
        case Correction::cem: return "cem";
    }
    return "none";
}

Correction parse_correction(std::string_view s) {
    if (s == "none") return Correction::none;
    if (s == "grad") return Correction::grad;
    if (s == "cem") return Correction::cem;
    throw InvalidInput("unknown correction mode '" + std::string(s) + "'");
}

namespace {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic>;  // H x 10

struct Planner {
    const Posture& q0;
    const Posture* target;  // null when the alpha term is off
    const TeleopTask& task;
    const HumanModelConfig& cfg;
    HandPose goal;
    double bound;

    Planner(const Posture& q, const Posture* t, const TeleopTask& tk, const HumanModelConfig& c)
        : q0(q), target(t), task(tk), cfg(c), goal(tk.hand_goal()),
          bound(c.velocity_limit * tk.dt) {}

    std::vector<Posture> rollout(const Matrix& d) const {
        std::vector<Posture> out;
        Posture q = q0;
        for (Eigen::Index k = 0; k < d.rows(); ++k) {
            for (std::size_t j = 0; j < kNumJoints; ++j) {
                q.angles[j] = std::clamp(q.angles[j] + d(k, static_cast<Eigen::Index>(j)),
                                         cfg.limits.lower[j], cfg.limits.upper[j]);
            }
            out.push_back(q);
        }
        return out;
    }

    double stage_cost(const Posture& q) const {
        const Vec6 r = pose_residual(forward_kinematics(q, cfg.dims), goal, task.goal_weights);
        double c = r.squaredNorm();
        if (target) c += cfg.alpha * (q.as_vector() - target->as_vector()).squaredNorm();
        return c;
    }

    double cost(const std::vector<Posture>& traj) const {
        double c = 0.0;
        for (const auto& q : traj) c += stage_cost(q);
        return c;
    }

    Matrix gradient(const Matrix& d) const {
        const auto traj = rollout(d);
        const Eigen::Index h = d.rows();
        Matrix g(h, static_cast<Eigen::Index>(kNumJoints));
        JointVector lambda = JointVector::Zero();
        for (Eigen::Index k = h; k-- > 0;) {
            const Posture& q = traj[static_cast<std::size_t>(k)];
            const Vec6 r = pose_residual(forward_kinematics(q, cfg.dims), goal, task.goal_weights);
            const FkJacobian jac = pose_residual_jacobian(q, cfg.dims, task.goal_weights);
            lambda += 2.0 * jac.transpose() * r;
            if (target) lambda += 2.0 * cfg.alpha * (q.as_vector() - target->as_vector());
            // q_k = clamp(q_{k-1} + d_k): clamped joints pass no gradient
            const Posture& prev = k == 0 ? q0 : traj[static_cast<std::size_t>(k - 1)];
            for (std::size_t j = 0; j < kNumJoints; ++j) {
                const auto jj = static_cast<Eigen::Index>(j);
                const double raw = prev.angles[j] + d(k, jj);
                if (raw < cfg.limits.lower[j] || raw > cfg.limits.upper[j]) lambda(jj) = 0.0;
            }
            g.row(k) = lambda.transpose();
        }
        return g;
    }

    Matrix project(Matrix d) const { return d.cwiseMax(-bound).cwiseMin(bound); }
};

Matrix increments_from(const Posture& q, const std::vector<Posture>& traj, std::size_t horizon,
                       double bound) {
    Matrix d = Matrix::Zero(static_cast<Eigen::Index>(horizon), static_cast<Eigen::Index>(kNumJoints));
    Posture prev = q;
    for (std::size_t k = 0; k < horizon && k < traj.size(); ++k) {
        d.row(static_cast<Eigen::Index>(k)) =
            (traj[k].as_vector() - prev.as_vector()).cwiseMax(-bound).cwiseMin(bound).transpose();
        prev = traj[k];
    }
    return d;
}

}  // namespace

double plan_cost(const std::vector<Posture>& trajectory, const std::optional<Posture>& suggestion,
                 const TeleopTask& task, const HumanModelConfig& cfg) {
    const Posture* target = suggestion && cfg.alpha > 0.0 ? &*suggestion : nullptr;
    Planner p(trajectory.empty() ? task.start : trajectory.front(), target, task, cfg);
    return p.cost(trajectory);
}

HumanPlan human_plan(const Posture& q, const std::optional<Posture>& suggestion,
                     const TeleopTask& task, const HumanModelConfig& cfg,
                     const std::vector<Posture>* warm_start) {
    cfg.validate();
    const Posture* target = suggestion && cfg.alpha > 0.0 ? &*suggestion : nullptr;
    const Planner p(q, target, task, cfg);

    Matrix d = warm_start ? increments_from(q, *warm_start, cfg.horizon, p.bound)
                          : Matrix::Zero(static_cast<Eigen::Index>(cfg.horizon),
                                         static_cast<Eigen::Index>(kNumJoints));
    std::vector<Posture> traj = p.rollout(d);
    double f = p.cost(traj);

    HumanPlan plan;
    if (!std::isfinite(f)) {
        plan.postures.assign(cfg.horizon, q);
        plan.fallback = true;
        return plan;
    }

    double step = 1e-2;
    for (std::size_t it = 0; it < cfg.planner_iterations; ++it) {
        const Matrix g = p.gradient(d);
        if (!g.allFinite()) break;
        bool moved = false;
        for (int ls = 0; ls < 40; ++ls) {
            const Matrix trial = p.project(d - step * g);
            const double moved_sq = (trial - d).squaredNorm();
            if (moved_sq == 0.0) break;
            auto trial_traj = p.rollout(trial);
            const double ft = p.cost(trial_traj);
            if (std::isfinite(ft) && ft <= f - 1e-4 / step * moved_sq) {
                d = trial;
                traj = std::move(trial_traj);
                f = ft;
                moved = true;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if (!moved) break;
    }

    plan.postures = std::move(traj);
    plan.cost = f;
    return plan;
}

SimulationTrace run_episode(const TeleopTask& task, const HumanModelConfig& human,
                            const SurrogateModel& model, const CorrectionConfig& correction,
                            std::uint64_t seed) {
    task.validate();
    human.validate();
    if (correction.period == 0) throw InvalidInput("correction period must be >= 1");

    SimulationTrace trace;
    trace.seed = seed;
    trace.correction = correction.mode;
    trace.alpha = human.alpha;

    PoseConstraint constraint;
    Posture q = clamp_to_limits(task.start, human.limits);
    std::optional<Posture> suggestion;
    HumanPlan plan;
    std::size_t plan_cursor = 0;
    bool fallback = false;

    for (std::size_t t = 0; t < task.max_steps; ++t) {
        bool refreshed = false;
        if (correction.mode != Correction::none && t % correction.period == 0) {
            // keep the hand where the operator currently holds it
            constraint.target = forward_kinematics(q, human.dims);
            if (correction.mode == Correction::grad) {
                GradientOptions go = correction.gradient;
                go.seed = seed;
                go.limits = human.limits;
                go.dims = human.dims;
                suggestion = optimize_gradient(model, task.context, q, constraint, go).q_star;
            } else {
                CemOptions co = correction.cem;
                co.seed = seed * 100'003 + t;
                co.limits = human.limits;
                co.dims = human.dims;
                suggestion = optimize_cem(rula_grand, task.context, q, constraint, co).q_star;
            }
            refreshed = true;
        }

        TraceStep s;
        s.step = t;
        s.posture = q;
        s.suggested = suggestion;
        s.rula_grand = rula_grand(q, task.context);
        s.dula_score = model.predict(q, task.context);
        if (suggestion) s.suggested_rula = rula_grand(*suggestion, task.context);
        s.follower = task.mapping.apply(forward_kinematics(q, human.dims));
        s.goal_error = pose_error(task.follower_goal, s.follower, PoseWeights{});
        s.fallback = fallback;
        trace.steps.push_back(s);

        if (s.goal_error < task.goal_tolerance) {
            trace.completion_step = t;
            return trace;
        }

        if (plan.postures.empty() || refreshed || plan_cursor >= plan.postures.size() ||
            plan_cursor % human.replan_period == 0) {
            std::vector<Posture> warm;
            if (plan_cursor < plan.postures.size()) {
                warm.assign(plan.postures.begin() + static_cast<std::ptrdiff_t>(plan_cursor),
                            plan.postures.end());
            }
            plan = human_plan(q, suggestion, task, human, warm.empty() ? nullptr : &warm);
            plan_cursor = 0;
        }
        fallback = plan.fallback;
        q = plan.postures[plan_cursor++];
    }
    trace.timeout = true;
    return trace;
}

EpisodeMetrics episode_metrics(const SimulationTrace& trace) {
    EpisodeMetrics m;
    m.timeout = trace.timeout || !trace.completion_step;
    m.completion_steps = trace.completion_step ? *trace.completion_step : trace.steps.size() + 1;
    std::vector<double> exec, sugg;
    for (const auto& s : trace.steps) {
        m.executed_rula.push_back(s.rula_grand);
        exec.push_back(s.rula_grand);
        if (s.suggested_rula) {
            m.suggested_rula.push_back(*s.suggested_rula);
            sugg.push_back(*s.suggested_rula);
        }
    }
    m.median_executed_rula = median(exec);
    if (!sugg.empty()) m.median_suggested_rula = median(sugg);
    return m;
}

TeleopTask demo_task(std::uint64_t seed, const HumanModelConfig& cfg) {
    Rng rng(seed);
    TeleopTask task;
    task.start = sample_posture(rng, cfg.limits);
    task.context = sample_operator_context(rng);
    const Posture goal_posture = sample_posture(rng, cfg.limits);
    // follower faces the operator across a table
    task.mapping.rotation = Eigen::AngleAxisd(std::numbers::pi, Eigen::Vector3d::UnitZ());
    task.mapping.translation = Eigen::Vector3d(1.2, 0.0, 0.3);
    task.follower_goal = task.mapping.apply(forward_kinematics(goal_posture, cfg.dims));
    return task;
}

std::vector<TeleopTask> demo_suite(std::size_t episodes, std::uint64_t seed,
                                   const HumanModelConfig& cfg) {
    std::vector<TeleopTask> out;
    for (std::size_t i = 0; i < episodes; ++i) out.push_back(demo_task(seed + i, cfg));
    return out;
}

bool same_execution(const SimulationTrace& a, const SimulationTrace& b) {
    if (a.steps.size() != b.steps.size() || a.completion_step != b.completion_step ||
        a.timeout != b.timeout) {
        return false;
    }
    for (std::size_t i = 0; i < a.steps.size(); ++i) {
        const auto& x = a.steps[i];
        const auto& y = b.steps[i];
        if (x.posture != y.posture || x.rula_grand != y.rula_grand ||
            x.follower.position != y.follower.position ||
            x.follower.orientation.coeffs() != y.follower.orientation.coeffs() ||
            x.goal_error != y.goal_error ||
            std::memcmp(&x.dula_score, &y.dula_score, sizeof(double)) != 0) {
            return false;
        }
    }
    return true;
}

io::json to_json(const TraceStep& s) {
    const auto& p = s.follower.position;
    const auto& o = s.follower.orientation;
    io::json j = {{"step", s.step},
                  {"posture", s.posture.angles},
                  {"rula_grand", s.rula_grand},
                  {"dula_score", s.dula_score},
                  {"follower_position", {p.x(), p.y(), p.z()}},
                  {"follower_orientation", {o.w(), o.x(), o.y(), o.z()}},
                  {"goal_error", s.goal_error},
                  {"fallback", s.fallback}};
    j["suggested"] = s.suggested ? io::json(s.suggested->angles) : io::json(nullptr);
    j["suggested_rula"] = s.suggested_rula ? io::json(*s.suggested_rula) : io::json(nullptr);
    return j;
}

io::json summary_json(const SimulationTrace& t) {
    const EpisodeMetrics m = episode_metrics(t);
    io::json j = {{"schema_version", 1},
                  {"seed", t.seed},
                  {"correction", correction_name(t.correction)},
                  {"alpha", t.alpha},
                  {"steps", t.steps.size()},
                  {"completion_step",
                   t.completion_step ? io::json(*t.completion_step) : io::json(nullptr)},
                  {"timeout", t.timeout},
                  {"median_executed_rula", m.median_executed_rula}};
    j["median_suggested_rula"] =
        m.median_suggested_rula ? io::json(*m.median_suggested_rula) : io::json(nullptr);
    return j;
}

std::string trace_jsonl(const SimulationTrace& t) {
    std::string out;
    for (const auto& s : t.steps) {
        io::json j = to_json(s);
        j["seed"] = t.seed;
        j["correction"] = correction_name(t.correction);
        j["alpha"] = t.alpha;
        j["completed"] = t.completion_step == s.step;
        out += j.dump();
        out += '\n';
    }
    return out;
}

SimulationTrace read_trace_jsonl(std::string_view text) {
    SimulationTrace t;
    std::istringstream in{std::string(text)};
    std::string line;
    try {
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const io::json j = io::json::parse(line);
            t.seed = j.at("seed").get<std::uint64_t>();
            t.correction = parse_correction(j.at("correction").get<std::string>());
            t.alpha = j.at("alpha").get<double>();
            TraceStep s;
            s.step = j.at("step").get<std::size_t>();
            s.posture.angles = j.at("posture").get<std::array<double, kNumJoints>>();
            s.rula_grand = j.at("rula_grand").get<int>();
            s.dula_score = j.at("dula_score").get<double>();
            const auto pos = j.at("follower_position").get<std::array<double, 3>>();
            const auto ori = j.at("follower_orientation").get<std::array<double, 4>>();
            s.follower.position = Eigen::Vector3d(pos[0], pos[1], pos[2]);
            s.follower.orientation = Eigen::Quaterniond(ori[0], ori[1], ori[2], ori[3]);
            s.goal_error = j.at("goal_error").get<double>();
            s.fallback = j.at("fallback").get<bool>();
            if (!j.at("suggested").is_null()) {
                Posture p;
                p.angles = j.at("suggested").get<std::array<double, kNumJoints>>();
                s.suggested = p;
            }
            if (!j.at("suggested_rula").is_null()) s.suggested_rula = j.at("suggested_rula").get<int>();
            if (j.value("completed", false)) t.completion_step = s.step;
            t.steps.push_back(s);
        }
        t.timeout = !t.completion_step;
    } catch (const io::json::exception& e) {
        throw FormatError(std::string("malformed trace line: ") + e.what());
    }
    return t;
}

}  // namespace dula
