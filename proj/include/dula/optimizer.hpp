#pragma once

#include "dula/dataset.hpp"
#include "dula/kinematics.hpp"
#include "dula/rula.hpp"
#include "dula/surrogate.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace dula {

/// ||target - fk(q)||^2_Sigma < tolerance.
struct PoseConstraint {
    HandPose target;
    PoseWeights weights;
    double tolerance = 1e-4;

    void validate() const;
};

/// Constraint value of posture q.
double constraint_value(const Posture& q, const PoseConstraint& c, const BodyDimensions& dims);

struct OptResult {
    std::string method;
    Posture q_star;
    double dula_score = 0.0;  // NaN when no surrogate was involved
    int rula_grand = 0;
    double constraint_value = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    bool feasible = false;
    double wall_time_s = 0.0;
};

struct GradientOptions {
    std::size_t max_iterations = 200;
    double step_tolerance = 1e-6;
    double gradient_tolerance = 1e-5;
    std::size_t starts = 4;  // q0 plus (starts - 1) samples from the limit box
    std::uint64_t seed = 0;
    double initial_curvature = 20.0;  // scale of the identity Hessian model
    double max_step = 0.5;            // rad, infinity norm
    JointLimits limits = JointLimits::anatomical();
    BodyDimensions dims;
};

/// Local minimization of DULA subject to the pose constraint and the box limits.
/// Each start runs a sequential-QP iteration: identity-scaled Hessian model,
/// linearized pose residual as equality, bounds by active set, l2 exact-penalty
/// line search. The best feasible iterate over all starts is returned; when none
/// is feasible the result has feasible == false and the smallest constraint value.
/// Throws ModelFailure if the surrogate returns a non-finite value.
OptResult optimize_gradient(const SurrogateModel& model, const TaskContext& ctx,
                            const Posture& q0, const PoseConstraint& constraint,
                            const GradientOptions& opts = {});

using RulaFn = std::function<int(const Posture&, const TaskContext&)>;

/// Exact worksheet scorer with default thresholds.
int rula_grand(const Posture& q, const TaskContext& ctx);

struct CemOptions {
    std::size_t population = 10'000;
    double elite_fraction = 0.1;
    double initial_sigma = 0.2;  // rad
    std::size_t max_iterations = 30;
    std::uint64_t seed = 0;
    double infeasible_penalty = 10.0;
    JointLimits limits = JointLimits::anatomical();
    BodyDimensions dims;
};

/// Cross-entropy method over joint space scored by `rula_fn` plus a violation
/// penalty. The first sample of the first generation is q0 itself, and the
/// best-ever feasible sample is returned.
OptResult optimize_cem(const RulaFn& rula_fn, const TaskContext& ctx, const Posture& q0,
                       const PoseConstraint& constraint, const CemOptions& opts = {});

/// Penalized CEM objective for one posture.
double cem_score(int grand, double constraint_value, const PoseConstraint& c,
                 const CemOptions& opts);

struct OptimizationTask {
    Posture start;
    TaskContext context;
    PoseConstraint constraint;
};

/// sample_context with loads below 2 kg, intermittent: an operator holding a leader device.
TaskContext sample_operator_context(Rng& rng);

/// Random postures and operator contexts; each target is the hand pose of its own start posture,
/// so every start is feasible.
std::vector<OptimizationTask> make_task_batch(std::size_t count, std::uint64_t seed,
                                              const JointLimits& lim = JointLimits::anatomical(),
                                              const BodyDimensions& dims = {});

struct ComparisonRow {
    std::size_t task = 0;
    std::string method;
    int initial_rula = 0;
    int optimal_rula = 0;
    double dula_score = 0.0;
    bool feasible = false;
    double wall_time_s = 0.0;
};

struct ComparisonReport {
    std::vector<ComparisonRow> rows;
    double median_rula_gradient = 0.0;
    double median_rula_cem = 0.0;
    double median_time_gradient_s = 0.0;
    double median_time_cem_s = 0.0;
    double time_ratio = 0.0;  // cem / gradient
};

ComparisonReport compare(const SurrogateModel& model, const RulaFn& rula_fn,
                         const std::vector<OptimizationTask>& tasks,
                         const GradientOptions& grad_opts = {}, const CemOptions& cem_opts = {});

/// Standard median: mean of the two middle values for even sizes. NaN when empty.
double median(std::vector<double> values);

io::json to_json(const OptResult& r, bool include_timing);
io::json to_json(const ComparisonReport& r, bool include_timing);

}  // namespace dula
