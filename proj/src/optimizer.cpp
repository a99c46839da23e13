#include "dula/optimizer.hpp"

#include "dula/error.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace dula {

namespace {

using Clock = std::chrono::steady_clock;
using Vec6 = Eigen::Matrix<double, 6, 1>;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Evaluation {
    double f = 0.0;      // DULA
    double c = 0.0;      // squared weighted pose error
    double r_norm = 0.0;  // |residual|
};

class GradientSolver {
public:
    GradientSolver(const SurrogateModel& model, const TaskContext& ctx,
                   const PoseConstraint& constraint, const GradientOptions& opts)
        : model_(model), ctx_(ctx), con_(constraint), opts_(opts) {}

    struct Outcome {
        bool found_feasible = false;
        Posture best;  // best feasible by DULA, else least violating
        Evaluation best_eval;
        std::size_t iterations = 0;
        bool converged = false;
    };

    Outcome run(const Posture& start) const {
        Posture q = clamp_to_limits(start, opts_.limits);
        Outcome out;
        Evaluation e = evaluate(q);
        consider(out, q, e, true);

        Mat10 hess = Mat10::Identity() * opts_.initial_curvature;
        double rho = 1.0;
        JointVector g;
        double f = model_.posture_gradient(q, ctx_, g);
        check_finite(f);
        Vec6 r = residual(q);
        FkJacobian jac = pose_residual_jacobian(q, opts_.dims, con_.weights);

        for (std::size_t it = 1; it <= opts_.max_iterations; ++it) {
            JointVector d;
            Vec6 mu;
            double stationarity = 0.0;
            solve_subproblem(q, g, r, jac, hess, d, mu, stationarity);

            if (e.c < con_.tolerance && stationarity < opts_.gradient_tolerance) {
                out.converged = true;
                break;
            }
            out.iterations = it;

            rho = std::max(rho, 1.5 * mu.norm() + 1e-6);
            const double phi0 = e.f + rho * e.r_norm;
            const double slope = std::min(g.dot(d) - rho * e.r_norm, 0.0);

            double t = 1.0;
            bool accepted = false;
            Posture trial;
            Evaluation te;
            for (int ls = 0; ls < 20; ++ls, t *= 0.5) {
                trial = clamp_to_limits(Posture::from_vector(q.as_vector() + t * d), opts_.limits);
                te = evaluate(trial);
                if (te.f + rho * te.r_norm <= phi0 + 1e-4 * t * slope) {
                    accepted = true;
                    break;
                }
            }
            if (!accepted) {
                // model is off; fall back to a conservative scaled identity
                const double scale = 4.0 * std::max(hess.diagonal().maxCoeff(), opts_.initial_curvature);
                if (scale > 1e10) break;
                hess = Mat10::Identity() * scale;
                continue;
            }

            const JointVector s = trial.as_vector() - q.as_vector();
            JointVector g_new;
            const double f_new = model_.posture_gradient(trial, ctx_, g_new);
            check_finite(f_new);
            const FkJacobian jac_new = pose_residual_jacobian(trial, opts_.dims, con_.weights);
            const JointVector y = (g_new + jac_new.transpose() * mu) - (g + jac.transpose() * mu);
            damped_bfgs(hess, s, y);

            q = trial;
            e = te;
            f = f_new;
            g = g_new;
            jac = jac_new;
            r = residual(q);
            consider(out, q, e, false);
            if (s.norm() < opts_.step_tolerance) {
                out.converged = e.c < con_.tolerance;
                break;
            }
        }
        return out;
    }

    Evaluation evaluate(const Posture& q) const {
        Evaluation e;
        e.f = model_.predict(q, ctx_);
        check_finite(e.f);
        const HandPose hp = forward_kinematics(q, opts_.dims);
        e.r_norm = pose_residual(hp, con_.target, con_.weights).norm();
        e.c = pose_error(con_.target, hp, con_.weights);
        return e;
    }

private:
    using Mat10 = Eigen::Matrix<double, 10, 10>;
    using Kkt = Eigen::Matrix<double, 16, 16>;

    static void check_finite(double v) {
        if (!std::isfinite(v)) throw ModelFailure("surrogate produced a non-finite score");
    }

    Vec6 residual(const Posture& q) const {
        return pose_residual(forward_kinematics(q, opts_.dims), con_.target, con_.weights);
    }

    // Powell-damped BFGS keeps the Hessian model positive definite.
    static void damped_bfgs(Mat10& b, const JointVector& s, JointVector y) {
        const JointVector bs = b * s;
        const double sbs = s.dot(bs);
        if (!(sbs > 1e-16)) return;
        const double sy = s.dot(y);
        if (sy < 0.2 * sbs) {
            const double theta = 0.8 * sbs / (sbs - sy);
            y = theta * y + (1.0 - theta) * bs;
        }
        b += y * y.transpose() / s.dot(y) - bs * bs.transpose() / sbs;
        b = 0.5 * (b + b.transpose()).eval();
    }

    void consider(Outcome& out, const Posture& q, const Evaluation& e, bool first) const {
        const bool feasible = e.c < con_.tolerance;
        if (feasible) {
            if (!out.found_feasible || e.f < out.best_eval.f) {
                out.found_feasible = true;
                out.best = q;
                out.best_eval = e;
            }
        } else if (!out.found_feasible && (first || e.c < out.best_eval.c)) {
            out.best = q;
            out.best_eval = e;
        }
    }

    // min g.d + 1/2 d'Bd  s.t.  J d = -r,  lower - q <= d <= upper - q, |d|_inf <= max_step.
    // Variables that leave their box are pinned at the bound and the system is re-solved.
    void solve_subproblem(const Posture& q, const JointVector& g, const Vec6& r,
                          const FkJacobian& jac, const Mat10& hess, JointVector& d, Vec6& mu,
                          double& stationarity) const {
        std::array<bool, kNumJoints> fixed{};
        JointVector lo, hi;
        for (std::size_t i = 0; i < kNumJoints; ++i) {
            const auto k = static_cast<Eigen::Index>(i);
            lo(k) = std::max(opts_.limits.lower[i] - q.angles[i], -opts_.max_step);
            hi(k) = std::min(opts_.limits.upper[i] - q.angles[i], opts_.max_step);
        }
        d.setZero();
        for (std::size_t round = 0; round <= kNumJoints; ++round) {
            Kkt k = Kkt::Zero();
            Eigen::Matrix<double, 16, 1> rhs;
            k.topLeftCorner<10, 10>() = hess;
            k.topRightCorner<10, 6>() = jac.transpose();
            k.bottomLeftCorner<6, 10>() = jac;
            k.bottomRightCorner<6, 6>().diagonal().setConstant(-1e-10);
            rhs.head<10>() = -g;
            rhs.tail<6>() = -r;
            for (std::size_t i = 0; i < kNumJoints; ++i) {
                if (!fixed[i]) continue;
                const auto row = static_cast<Eigen::Index>(i);
                k.row(row).setZero();
                k(row, row) = 1.0;
                rhs(row) = d(row);
            }
            const Eigen::Matrix<double, 16, 1> sol = k.partialPivLu().solve(rhs);
            mu = sol.tail<6>();
            bool changed = false;
            for (std::size_t i = 0; i < kNumJoints; ++i) {
                const auto row = static_cast<Eigen::Index>(i);
                if (fixed[i]) continue;
                d(row) = sol(row);
                if (!std::isfinite(d(row))) d(row) = 0.0;
                if (d(row) < lo(row) || d(row) > hi(row)) {
                    d(row) = std::clamp(d(row), lo(row), hi(row));
                    fixed[i] = true;
                    changed = true;
                }
            }
            if (!changed) break;
        }
        if (!mu.allFinite()) mu.setZero();
        // projected gradient of the Lagrangian
        JointVector pg = g + jac.transpose() * mu;
        for (std::size_t i = 0; i < kNumJoints; ++i) {
            const auto k = static_cast<Eigen::Index>(i);
            const bool at_lower = q.angles[i] <= opts_.limits.lower[i] && pg(k) > 0.0;
            const bool at_upper = q.angles[i] >= opts_.limits.upper[i] && pg(k) < 0.0;
            if (at_lower || at_upper) pg(k) = 0.0;
        }
        stationarity = pg.norm();
    }

    const SurrogateModel& model_;
    const TaskContext& ctx_;
    const PoseConstraint& con_;
    const GradientOptions& opts_;
};

}  // namespace

void PoseConstraint::validate() const {
    if (!(weights.position >= 0.0) || !(weights.orientation >= 0.0)) {
        throw InvalidInput("pose weights must be nonnegative");
    }
    if (!(weights.position > 0.0 || weights.orientation > 0.0)) {
        throw InvalidInput("at least one pose weight must be positive");
    }
    if (!(tolerance > 0.0)) throw InvalidInput("constraint tolerance must be positive");
    if (!target.position.allFinite() || std::abs(target.orientation.norm() - 1.0) > 1e-6) {
        throw InvalidInput("target pose must be finite with a unit quaternion");
    }
}

double constraint_value(const Posture& q, const PoseConstraint& c, const BodyDimensions& dims) {
    return pose_error(c.target, forward_kinematics(q, dims), c.weights);
}

int rula_grand(const Posture& q, const TaskContext& ctx) { return rula(q, ctx).grand; }

OptResult optimize_gradient(const SurrogateModel& model, const TaskContext& ctx,
                            const Posture& q0, const PoseConstraint& constraint,
                            const GradientOptions& opts) {
    const auto t0 = Clock::now();
    constraint.validate();
    if (!q0.is_finite()) throw InvalidInput("start posture is not finite");
    if (opts.starts == 0) throw InvalidInput("at least one start is required");

    GradientSolver solver(model, ctx, constraint, opts);
    Rng rng(opts.seed);
    GradientSolver::Outcome best;
    bool have = false;
    for (std::size_t s = 0; s < opts.starts; ++s) {
        const Posture start = s == 0 ? q0 : sample_posture(rng, opts.limits);
        GradientSolver::Outcome o = solver.run(start);
        const bool better =
            !have || (o.found_feasible && !best.found_feasible) ||
            (o.found_feasible && best.found_feasible && o.best_eval.f < best.best_eval.f) ||
            (!o.found_feasible && !best.found_feasible && o.best_eval.c < best.best_eval.c);
        if (better) {
            best = o;
            have = true;
        }
    }

    OptResult r;
    r.method = "gradient";
    r.q_star = best.best;
    r.dula_score = best.best_eval.f;
    r.rula_grand = rula_grand(best.best, ctx);
    r.constraint_value = best.best_eval.c;
    r.iterations = best.iterations;
    r.feasible = best.found_feasible;
    r.converged = best.converged && best.found_feasible;
    r.wall_time_s = seconds_since(t0);
    return r;
}

double cem_score(int grand, double c, const PoseConstraint& con, const CemOptions& opts) {
    if (c < con.tolerance) return grand;
    return grand + opts.infeasible_penalty * (1.0 + c / con.tolerance);
}

OptResult optimize_cem(const RulaFn& rula_fn, const TaskContext& ctx, const Posture& q0,
                       const PoseConstraint& constraint, const CemOptions& opts) {
    const auto t0 = Clock::now();
    constraint.validate();
    if (!q0.is_finite()) throw InvalidInput("start posture is not finite");
    if (opts.population == 0) throw InvalidInput("population must be positive");
    if (!(opts.elite_fraction > 0.0 && opts.elite_fraction <= 1.0)) {
        throw InvalidInput("elite_fraction must lie in (0, 1]");
    }

    constexpr int n = static_cast<int>(kNumJoints);
    using Mat = Eigen::Matrix<double, n, n>;
    Rng rng(opts.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    JointVector mean = q0.as_vector();
    Mat cov = Mat::Identity() * opts.initial_sigma * opts.initial_sigma;
    const std::size_t n_elite = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(opts.elite_fraction * opts.population)));

    std::vector<JointVector> samples(opts.population);
    std::vector<double> scores(opts.population), cvals(opts.population);
    std::vector<int> grands(opts.population);
    std::vector<std::size_t> order(opts.population);

    OptResult r;
    r.method = "cem";
    bool have_feasible = false;
    bool have_any = false;
    double best_score = std::numeric_limits<double>::infinity();

    std::size_t it = 0;
    for (; it < opts.max_iterations; ++it) {
        const Mat chol = Eigen::LLT<Mat>(cov).matrixL();
        for (std::size_t i = 0; i < opts.population; ++i) {
            JointVector z;
            for (int k = 0; k < n; ++k) z(k) = normal(rng);
            Posture x = clamp_to_limits(Posture::from_vector(mean + chol * z), opts.limits);
            if (it == 0 && i == 0) x = clamp_to_limits(q0, opts.limits);
            samples[i] = x.as_vector();
            cvals[i] = constraint_value(x, constraint, opts.dims);
            grands[i] = rula_fn(x, ctx);
            scores[i] = cem_score(grands[i], cvals[i], constraint, opts);
        }
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

        const std::size_t top = order.front();
        const bool top_feasible = cvals[top] < constraint.tolerance;
        const bool improves = !have_any || (top_feasible && !have_feasible) ||
                              (top_feasible == have_feasible && scores[top] < best_score);
        if (improves) {
            have_any = true;
            have_feasible = top_feasible;
            best_score = scores[top];
            r.q_star = Posture::from_vector(samples[top]);
            r.rula_grand = grands[top];
            r.constraint_value = cvals[top];
        }

        JointVector new_mean = JointVector::Zero();
        for (std::size_t e = 0; e < n_elite; ++e) new_mean += samples[order[e]];
        new_mean /= static_cast<double>(n_elite);
        Mat new_cov = Mat::Zero();
        for (std::size_t e = 0; e < n_elite; ++e) {
            const JointVector dv = samples[order[e]] - new_mean;
            new_cov.noalias() += dv * dv.transpose();
        }
        new_cov /= static_cast<double>(n_elite);
        new_cov.diagonal().array() += 1e-12;
        mean = new_mean;
        cov = new_cov;
        if (cov.trace() < 1e-14) {
            ++it;
            break;
        }
    }

    r.iterations = it;
    r.feasible = have_feasible;
    r.converged = have_feasible;
    r.dula_score = std::numeric_limits<double>::quiet_NaN();
    r.wall_time_s = seconds_since(t0);
    return r;
}

TaskContext sample_operator_context(Rng& rng) {
    TaskContext ctx = sample_context(rng);
    // the operator holds only a light leader device
    std::uniform_real_distribution<double> light(0.0, 2.0);
    ctx.arm_load_kg = light(rng);
    ctx.body_load_kg = light(rng);
    ctx.arm_load_mode = LoadMode::intermittent;
    ctx.body_load_mode = LoadMode::intermittent;
    return ctx;
}

std::vector<OptimizationTask> make_task_batch(std::size_t count, std::uint64_t seed,
                                              const JointLimits& lim,
                                              const BodyDimensions& dims) {
    Rng rng(seed);
    std::vector<OptimizationTask> tasks;
    tasks.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        OptimizationTask t;
        t.start = sample_posture(rng, lim);
        t.context = sample_operator_context(rng);
        t.constraint.target = forward_kinematics(t.start, dims);
        tasks.push_back(t);
    }
    return tasks;
}

double median(std::vector<double> values) {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

ComparisonReport compare(const SurrogateModel& model, const RulaFn& rula_fn,
                         const std::vector<OptimizationTask>& tasks,
                         const GradientOptions& grad_opts, const CemOptions& cem_opts) {
    ComparisonReport rep;
    std::vector<double> rg, rc, tg, tc;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const auto& t = tasks[i];
        const int initial = rula_fn(t.start, t.context);

        const OptResult g = optimize_gradient(model, t.context, t.start, t.constraint, grad_opts);
        rep.rows.push_back({i, "gradient", initial, g.rula_grand, g.dula_score, g.feasible,
                            g.wall_time_s});
        rg.push_back(g.rula_grand);
        tg.push_back(g.wall_time_s);

        CemOptions co = cem_opts;
        co.seed = cem_opts.seed + i;
        const OptResult c = optimize_cem(rula_fn, t.context, t.start, t.constraint, co);
        rep.rows.push_back({i, "cem", initial, c.rula_grand, model.predict(c.q_star, t.context),
                            c.feasible, c.wall_time_s});
        rc.push_back(c.rula_grand);
        tc.push_back(c.wall_time_s);
    }
    rep.median_rula_gradient = median(rg);
    rep.median_rula_cem = median(rc);
    rep.median_time_gradient_s = median(tg);
    rep.median_time_cem_s = median(tc);
    rep.time_ratio = rep.median_time_gradient_s > 0.0
                         ? rep.median_time_cem_s / rep.median_time_gradient_s
                         : std::numeric_limits<double>::infinity();
    return rep;
}

io::json to_json(const OptResult& r, bool include_timing) {
    io::json doc = {
        {"schema_version", 1},
        {"method", r.method},
        {"q_star", r.q_star.angles},
        {"dula_score", std::isfinite(r.dula_score) ? io::json(r.dula_score) : io::json(nullptr)},
        {"rula_grand", r.rula_grand},
        {"constraint_value", r.constraint_value},
        {"iterations", r.iterations},
        {"converged", r.converged},
        {"feasible", r.feasible},
    };
    if (include_timing) doc["wall_time_s"] = r.wall_time_s;
    return doc;
}

io::json to_json(const ComparisonReport& r, bool include_timing) {
    io::json rows = io::json::array();
    for (const auto& row : r.rows) {
        io::json j = {{"task", row.task},
                      {"method", row.method},
                      {"initial_rula", row.initial_rula},
                      {"optimal_rula", row.optimal_rula},
                      {"dula_score", row.dula_score},
                      {"feasible", row.feasible}};
        if (include_timing) j["wall_time_s"] = row.wall_time_s;
        rows.push_back(j);
    }
    io::json doc = {{"schema_version", 1},
                    {"rows", rows},
                    {"median_rula_gradient", r.median_rula_gradient},
                    {"median_rula_cem", r.median_rula_cem}};
    if (include_timing) {
        doc["median_time_gradient_s"] = r.median_time_gradient_s;
        doc["median_time_cem_s"] = r.median_time_cem_s;
        doc["time_ratio"] = r.time_ratio;
    }
    return doc;
}

}  // namespace dula
