#pragma once

#include "dula/kinematics.hpp"
#include "dula/optimizer.hpp"
#include "dula/rula.hpp"
#include "dula/surrogate.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dula {

/// Rigid transform from the human hand frame to the follower end-effector frame.
struct RigidTransform {
    Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    HandPose apply(const HandPose& p) const;
    HandPose apply_inverse(const HandPose& p) const;
};

struct TeleopTask {
    Posture start;
    TaskContext context;
    HandPose follower_goal;
    RigidTransform mapping;
    PoseWeights goal_weights{100.0, 10.0};  // planner cost weights
    double goal_tolerance = 4e-4;           // on pose_error with default weights
    std::size_t max_steps = 200;
    double dt = 0.1;  // s

    void validate() const;
    /// Hand pose the human must reach for the follower to hit its goal.
    HandPose hand_goal() const { return mapping.apply_inverse(follower_goal); }
};

struct HumanModelConfig {
    double alpha = 1.0;
    std::size_t horizon = 5;
    double velocity_limit = 1.0;  // rad/s per joint
    std::size_t replan_period = 1;
    std::size_t planner_iterations = 100;
    JointLimits limits = JointLimits::anatomical();
    BodyDimensions dims;

    void validate() const;
};

enum class Correction { none, grad, cem };

std::string_view correction_name(Correction c);
Correction parse_correction(std::string_view s);

struct CorrectionConfig {
    Correction mode = Correction::none;
    std::size_t period = 5;  // steps between suggestions
    GradientOptions gradient;
    CemOptions cem;
};

/// Human joint trajectory over the horizon (H postures, first one executed next).
struct HumanPlan {
    std::vector<Posture> postures;
    double cost = 0.0;
    bool fallback = false;  // planner failed, holding position
};

/// Receding-horizon plan minimizing
///   sum_k |goal residual(q_k)|^2 + alpha |q_k - q*|^2
/// over per-step increments bounded by velocity_limit * dt, with joint limits
/// enforced by clamping during rollout. Without a suggestion the alpha term is dropped.
HumanPlan human_plan(const Posture& q, const std::optional<Posture>& suggestion,
                     const TeleopTask& task, const HumanModelConfig& cfg,
                     const std::vector<Posture>* warm_start = nullptr);

/// Planner objective for a given trajectory, as minimized by human_plan.
double plan_cost(const std::vector<Posture>& trajectory, const std::optional<Posture>& suggestion,
                 const TeleopTask& task, const HumanModelConfig& cfg);

struct TraceStep {
    std::size_t step = 0;
    Posture posture;
    std::optional<Posture> suggested;
    int rula_grand = 0;
    double dula_score = 0.0;
    std::optional<int> suggested_rula;
    HandPose follower;
    double goal_error = 0.0;
    bool fallback = false;
};

struct SimulationTrace {
    std::uint64_t seed = 0;
    Correction correction = Correction::none;
    double alpha = 0.0;
    std::vector<TraceStep> steps;
    std::optional<std::size_t> completion_step;
    bool timeout = false;
};

SimulationTrace run_episode(const TeleopTask& task, const HumanModelConfig& human,
                            const SurrogateModel& model, const CorrectionConfig& correction,
                            std::uint64_t seed = 0);

struct EpisodeMetrics {
    std::size_t completion_steps = 0;  // steps run + 1 on timeout
    bool timeout = false;
    double median_executed_rula = 0.0;
    std::optional<double> median_suggested_rula;  // empty when nothing was suggested
    std::vector<int> executed_rula;
    std::vector<int> suggested_rula;
};

EpisodeMetrics episode_metrics(const SimulationTrace& trace);

/// Deterministic demo task for one seed: random start and context, goal reached by a
/// second random posture, follower mounted by a fixed rigid transform.
TeleopTask demo_task(std::uint64_t seed, const HumanModelConfig& cfg = {});
std::vector<TeleopTask> demo_suite(std::size_t episodes = 20, std::uint64_t seed = 0,
                                   const HumanModelConfig& cfg = {});

/// True when the executed part of two traces (postures, scores, follower poses,
/// completion) is bitwise identical.
bool same_execution(const SimulationTrace& a, const SimulationTrace& b);

io::json to_json(const TraceStep& s);
io::json summary_json(const SimulationTrace& t);
/// One JSON document per line, one line per step.
std::string trace_jsonl(const SimulationTrace& t);
SimulationTrace read_trace_jsonl(std::string_view text);

}  // namespace dula
