#include "dula/serialize.hpp"

#include "dula/error.hpp"

#include <numbers>

namespace dula {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

template <typename T>
T get(const io::json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const io::json::exception& e) {
        throw InvalidInput(std::string("bad value for '") + key + "': " + e.what());
    }
}

}  // namespace

io::json posture_to_json(const Posture& q) { return {{"angles_rad", q.angles}}; }

Posture posture_from_json(const io::json& j) {
    Posture q;
    try {
        if (j.contains("angles_rad")) {
            q.angles = j.at("angles_rad").get<std::array<double, kNumJoints>>();
        } else if (j.contains("angles_deg")) {
            q.angles = j.at("angles_deg").get<std::array<double, kNumJoints>>();
            for (double& a : q.angles) a *= kDeg;
        } else {
            throw InvalidInput("posture needs angles_rad or angles_deg");
        }
    } catch (const io::json::exception& e) {
        throw InvalidInput(std::string("malformed posture: ") + e.what());
    }
    if (!q.is_finite()) throw InvalidInput("posture is not finite");
    return q;
}

io::json context_to_json(const TaskContext& c) {
    return {{"arm_static_or_repeated", c.arm_static_or_repeated},
            {"body_static_or_repeated", c.body_static_or_repeated},
            {"arm_load_kg", c.arm_load_kg},
            {"arm_load_mode", load_mode_name(c.arm_load_mode)},
            {"body_load_kg", c.body_load_kg},
            {"body_load_mode", load_mode_name(c.body_load_mode)},
            {"neck_angle_deg", c.neck_angle_deg},
            {"neck_twist", c.neck_twist},
            {"neck_side_bend", c.neck_side_bend},
            {"legs_and_feet_supported", c.legs_and_feet_supported},
            {"arm_supported_or_leaning", c.arm_supported_or_leaning},
            {"shoulder_raised", c.shoulder_raised},
            {"working_across_midline", c.working_across_midline},
            {"wrist_bent_from_midline", c.wrist_bent_from_midline}};
}

TaskContext context_from_json(const io::json& j) {
    TaskContext c;
    c.arm_static_or_repeated = get(j, "arm_static_or_repeated", c.arm_static_or_repeated);
    c.body_static_or_repeated = get(j, "body_static_or_repeated", c.body_static_or_repeated);
    c.arm_load_kg = get(j, "arm_load_kg", c.arm_load_kg);
    c.arm_load_mode = parse_load_mode(get<std::string>(j, "arm_load_mode", "intermittent"));
    c.body_load_kg = get(j, "body_load_kg", c.body_load_kg);
    c.body_load_mode = parse_load_mode(get<std::string>(j, "body_load_mode", "intermittent"));
    c.neck_angle_deg = get(j, "neck_angle_deg", c.neck_angle_deg);
    c.neck_twist = get(j, "neck_twist", c.neck_twist);
    c.neck_side_bend = get(j, "neck_side_bend", c.neck_side_bend);
    c.legs_and_feet_supported = get(j, "legs_and_feet_supported", c.legs_and_feet_supported);
    c.arm_supported_or_leaning = get(j, "arm_supported_or_leaning", c.arm_supported_or_leaning);
    c.shoulder_raised = get(j, "shoulder_raised", c.shoulder_raised);
    c.working_across_midline = get(j, "working_across_midline", c.working_across_midline);
    c.wrist_bent_from_midline = get(j, "wrist_bent_from_midline", c.wrist_bent_from_midline);
    c.validate();
    return c;
}

io::json pose_to_json(const HandPose& p) {
    const auto& o = p.orientation;
    return {{"position", {p.position.x(), p.position.y(), p.position.z()}},
            {"orientation", {o.w(), o.x(), o.y(), o.z()}}};
}

HandPose pose_from_json(const io::json& j) {
    HandPose p;
    try {
        const auto pos = j.at("position").get<std::array<double, 3>>();
        const auto ori = get<std::array<double, 4>>(j, "orientation", {1.0, 0.0, 0.0, 0.0});
        p.position = Eigen::Vector3d(pos[0], pos[1], pos[2]);
        p.orientation = Eigen::Quaterniond(ori[0], ori[1], ori[2], ori[3]);
    } catch (const io::json::exception& e) {
        throw InvalidInput(std::string("malformed pose: ") + e.what());
    }
    const double n = p.orientation.norm();
    if (!p.position.allFinite() || !(n > 0.0) || !std::isfinite(n)) {
        throw InvalidInput("pose must be finite with a nonzero quaternion");
    }
    p.orientation.normalize();
    return p;
}

io::json limits_to_json(const JointLimits& l) {
    io::json j = io::json::object();
    for (std::size_t i = 0; i < kNumJoints; ++i) {
        j[std::string(joint_name(static_cast<Joint>(i)))] = {{"lower_rad", l.lower[i]},
                                                              {"upper_rad", l.upper[i]}};
    }
    return j;
}

JointLimits limits_from_json(const io::json& j) {
    JointLimits l = JointLimits::anatomical();
    for (std::size_t i = 0; i < kNumJoints; ++i) {
        const std::string name(joint_name(static_cast<Joint>(i)));
        if (!j.contains(name)) continue;
        const auto& e = j.at(name);
        if (e.contains("lower_rad")) l.lower[i] = get(e, "lower_rad", l.lower[i]);
        if (e.contains("upper_rad")) l.upper[i] = get(e, "upper_rad", l.upper[i]);
        if (e.contains("lower_deg")) l.lower[i] = get(e, "lower_deg", 0.0) * kDeg;
        if (e.contains("upper_deg")) l.upper[i] = get(e, "upper_deg", 0.0) * kDeg;
    }
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        for (std::size_t i = 0; i < kNumJoints; ++i) known |= key == joint_name(static_cast<Joint>(i));
        if (!known) throw InvalidInput("unknown joint '" + key + "' in limits");
    }
    l.validate();
    return l;
}

io::json body_to_json(const BodyDimensions& b) {
    return {{"torso", b.torso},
            {"upper_arm", b.upper_arm},
            {"forearm", b.forearm},
            {"hand", b.hand},
            {"shoulder_offset", {b.shoulder_offset.x(), b.shoulder_offset.y(), b.shoulder_offset.z()}}};
}

BodyDimensions body_from_json(const io::json& j) {
    BodyDimensions b;
    b.torso = get(j, "torso", b.torso);
    b.upper_arm = get(j, "upper_arm", b.upper_arm);
    b.forearm = get(j, "forearm", b.forearm);
    b.hand = get(j, "hand", b.hand);
    if (j.contains("shoulder_offset")) {
        const auto o = get<std::array<double, 3>>(j, "shoulder_offset", {});
        b.shoulder_offset = Eigen::Vector3d(o[0], o[1], o[2]);
    }
    b.validate();
    return b;
}

io::json dataset_spec_to_json(const DatasetSpec& s) {
    return {{"total_count", s.total_count},
            {"per_label_min_fraction", s.per_label_min_fraction},
            {"rng_seed", s.rng_seed},
            {"split_fraction", s.split_fraction},
            {"max_attempts", s.max_attempts},
            {"shards", s.shards}};
}

DatasetSpec dataset_spec_from_json(const io::json& j) {
    DatasetSpec s;
    s.total_count = get(j, "total_count", s.total_count);
    s.per_label_min_fraction = get(j, "per_label_min_fraction", s.per_label_min_fraction);
    s.rng_seed = get(j, "rng_seed", s.rng_seed);
    s.split_fraction = get(j, "split_fraction", s.split_fraction);
    s.max_attempts = get(j, "max_attempts", s.max_attempts);
    s.shards = get(j, "shards", s.shards);
    s.validate();
    return s;
}

io::json gradient_options_to_json(const GradientOptions& o) {
    return {{"max_iterations", o.max_iterations},
            {"step_tolerance", o.step_tolerance},
            {"gradient_tolerance", o.gradient_tolerance},
            {"starts", o.starts},
            {"seed", o.seed},
            {"initial_curvature", o.initial_curvature},
            {"max_step", o.max_step}};
}

GradientOptions gradient_options_from_json(const io::json& j) {
    GradientOptions o;
    o.max_iterations = get(j, "max_iterations", o.max_iterations);
    o.step_tolerance = get(j, "step_tolerance", o.step_tolerance);
    o.gradient_tolerance = get(j, "gradient_tolerance", o.gradient_tolerance);
    o.starts = get(j, "starts", o.starts);
    o.seed = get(j, "seed", o.seed);
    o.initial_curvature = get(j, "initial_curvature", o.initial_curvature);
    o.max_step = get(j, "max_step", o.max_step);
    if (o.starts == 0) throw InvalidInput("starts must be >= 1");
    if (!(o.initial_curvature > 0.0) || !(o.max_step > 0.0)) {
        throw InvalidInput("initial_curvature and max_step must be positive");
    }
    return o;
}

io::json cem_options_to_json(const CemOptions& o) {
    return {{"population", o.population},
            {"elite_fraction", o.elite_fraction},
            {"initial_sigma", o.initial_sigma},
            {"max_iterations", o.max_iterations},
            {"seed", o.seed},
            {"infeasible_penalty", o.infeasible_penalty}};
}

CemOptions cem_options_from_json(const io::json& j) {
    CemOptions o;
    o.population = get(j, "population", o.population);
    o.elite_fraction = get(j, "elite_fraction", o.elite_fraction);
    o.initial_sigma = get(j, "initial_sigma", o.initial_sigma);
    o.max_iterations = get(j, "max_iterations", o.max_iterations);
    o.seed = get(j, "seed", o.seed);
    o.infeasible_penalty = get(j, "infeasible_penalty", o.infeasible_penalty);
    if (o.population == 0) throw InvalidInput("population must be >= 1");
    if (!(o.elite_fraction > 0.0 && o.elite_fraction <= 1.0)) {
        throw InvalidInput("elite_fraction must lie in (0, 1]");
    }
    if (!(o.initial_sigma > 0.0)) throw InvalidInput("initial_sigma must be positive");
    return o;
}

io::json human_to_json(const HumanModelConfig& h) {
    return {{"alpha", h.alpha},
            {"horizon", h.horizon},
            {"velocity_limit", h.velocity_limit},
            {"replan_period", h.replan_period},
            {"planner_iterations", h.planner_iterations}};
}

HumanModelConfig human_from_json(const io::json& j) {
    HumanModelConfig h;
    h.alpha = get(j, "alpha", h.alpha);
    h.horizon = get(j, "horizon", h.horizon);
    h.velocity_limit = get(j, "velocity_limit", h.velocity_limit);
    h.replan_period = get(j, "replan_period", h.replan_period);
    h.planner_iterations = get(j, "planner_iterations", h.planner_iterations);
    h.validate();
    return h;
}

io::json teleop_task_to_json(const TeleopTask& t) {
    const auto& r = t.mapping.rotation;
    const auto& p = t.mapping.translation;
    return {{"start", posture_to_json(t.start)},
            {"context", context_to_json(t.context)},
            {"follower_goal", pose_to_json(t.follower_goal)},
            {"mapping",
             {{"rotation", {r.w(), r.x(), r.y(), r.z()}}, {"translation", {p.x(), p.y(), p.z()}}}},
            {"goal_weights",
             {{"position", t.goal_weights.position}, {"orientation", t.goal_weights.orientation}}},
            {"goal_tolerance", t.goal_tolerance},
            {"max_steps", t.max_steps},
            {"dt", t.dt}};
}

TeleopTask teleop_task_from_json(const io::json& j) {
    TeleopTask t;
    try {
        t.start = posture_from_json(j.at("start"));
        t.context = context_from_json(j.value("context", io::json::object()));
        t.follower_goal = pose_from_json(j.at("follower_goal"));
        if (j.contains("mapping")) {
            const auto& m = j.at("mapping");
            const auto r = get<std::array<double, 4>>(m, "rotation", {1.0, 0.0, 0.0, 0.0});
            const auto p = get<std::array<double, 3>>(m, "translation", {0.0, 0.0, 0.0});
            t.mapping.rotation = Eigen::Quaterniond(r[0], r[1], r[2], r[3]).normalized();
            t.mapping.translation = Eigen::Vector3d(p[0], p[1], p[2]);
        }
        if (j.contains("goal_weights")) {
            t.goal_weights.position = get(j.at("goal_weights"), "position", t.goal_weights.position);
            t.goal_weights.orientation =
                get(j.at("goal_weights"), "orientation", t.goal_weights.orientation);
        }
    } catch (const io::json::exception& e) {
        throw InvalidInput(std::string("malformed teleop task: ") + e.what());
    }
    t.goal_tolerance = get(j, "goal_tolerance", t.goal_tolerance);
    t.max_steps = get(j, "max_steps", t.max_steps);
    t.dt = get(j, "dt", t.dt);
    t.validate();
    return t;
}

}  // namespace dula
